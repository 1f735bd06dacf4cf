#include "revrank/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "revrank/rng.hpp"

namespace revrank {

namespace {
constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // trim to the shortest representation that round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char cand[40];
        std::snprintf(cand, sizeof(cand), "%.*g", prec, v);
        if (std::strtod(cand, nullptr) == v) return cand;
    }
    return buf;
}
}  // namespace

// ---------------------------------------------------------------------------
// FeatureSchema
// ---------------------------------------------------------------------------

FeatureSchema FeatureSchema::standard() {
    FeatureSchema s;
    s.categorical = {
        {"hour", 24},          {"platform", 4},
        {"logical_category_id", 50}, {"with_delivery", 2},
        {"item_loc_id", 100},  {"item_mcat_id", 200},
        {"item_cat_id", 30},   {"is_auction_winner", 2},
        {"campaign_type", 5},  {"region", 20},
        {"category_coincidence", 2}, {"subcategory_coincidence", 2},
    };
    s.continuous = {"price", "rel_pred", "cr_pred", "ctr_pred", "xn", "visibility", "click_bid"};
    s.label_column = "click";
    s.query_id_column = "qid";
    s.position_column = "pos_fixed";
    s.bid_column = "click_bid";
    s.validate();
    return s;
}

std::vector<std::string> FeatureSchema::csv_columns() const {
    // canonical log order: query fields, item fields, label last
    return {query_id_column,
            "hour",
            "platform",
            "logical_category_id",
            "with_delivery",
            "item_loc_id",
            "item_mcat_id",
            position_column,
            "price",
            "item_cat_id",
            "rel_pred",
            "cr_pred",
            "ctr_pred",
            "is_auction_winner",
            "campaign_type",
            "xn",
            "visibility",
            "region",
            "click_bid",
            "category_coincidence",
            "subcategory_coincidence",
            label_column};
}

int FeatureSchema::cat_index(const std::string& name) const {
    for (std::size_t i = 0; i < categorical.size(); ++i)
        if (categorical[i].name == name) return static_cast<int>(i);
    return -1;
}

int FeatureSchema::cont_index(const std::string& name) const {
    for (std::size_t i = 0; i < continuous.size(); ++i)
        if (continuous[i] == name) return static_cast<int>(i);
    return -1;
}

void FeatureSchema::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& c : categorical)
        if (!seen.insert(c.name).second) throw SchemaError("duplicate feature name: " + c.name);
    for (const auto& c : continuous)
        if (!seen.insert(c).second) throw SchemaError("duplicate feature name: " + c);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {
std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::int64_t parse_int(const std::string& s, std::size_t row, const std::string& col) {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
        throw ParseError("row " + std::to_string(row) + ": non-integer value '" + s +
                         "' in column " + col);
    return v;
}

double parse_double(const std::string& s, std::size_t row, const std::string& col) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ParseError("row " + std::to_string(row) + ": non-numeric value '" + s +
                         "' in column " + col);
    return v;
}
}  // namespace

Dataset load_csv(const std::string& path, const FeatureSchema& schema) {
    schema.validate();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty file: " + path);
    const std::vector<std::string> header = split_line(line);

    const std::vector<std::string> expected = schema.csv_columns();
    std::unordered_map<std::string, std::size_t> col_of;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!col_of.emplace(header[i], i).second)
            throw SchemaError("duplicate column in header: " + header[i]);
    }
    for (const auto& name : expected)
        if (!col_of.count(name)) throw SchemaError("missing column: " + name);
    for (const auto& name : header)
        if (std::find(expected.begin(), expected.end(), name) == expected.end())
            throw SchemaError("unexpected column: " + name);

    Dataset ds;
    ds.schema = schema;
    ds.cat_dicts.resize(schema.categorical.size());
    std::vector<std::unordered_map<std::string, std::int64_t>> interns(schema.categorical.size());

    const std::size_t qid_col = col_of.at(schema.query_id_column);
    const std::size_t pos_col = col_of.at(schema.position_column);
    const std::size_t label_col = col_of.at(schema.label_column);
    const int bid_cont = schema.cont_index(schema.bid_column);

    std::unordered_map<std::int64_t, std::size_t> page_of;
    std::unordered_set<std::int64_t> seen_pos;  // (qid, pos) via packed key

    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));

        ItemRecord it;
        it.query_id = parse_int(cells[qid_col], row, schema.query_id_column);
        it.position = static_cast<int>(parse_int(cells[pos_col], row, schema.position_column));
        it.click = static_cast<int>(parse_int(cells[label_col], row, schema.label_column));
        if (it.click != 0 && it.click != 1)
            throw ParseError("row " + std::to_string(row) + ": click label must be 0/1");
        if (it.position < 1)
            throw IntegrityError("row " + std::to_string(row) + ": position " +
                                 std::to_string(it.position) + " < 1");

        it.cat.resize(schema.categorical.size());
        for (std::size_t f = 0; f < schema.categorical.size(); ++f) {
            const std::string& v = cells[col_of.at(schema.categorical[f].name)];
            auto [iter, fresh] = interns[f].emplace(v, static_cast<std::int64_t>(ds.cat_dicts[f].size()));
            if (fresh) ds.cat_dicts[f].push_back(v);
            it.cat[f] = iter->second;
        }
        it.cont.resize(schema.continuous.size());
        for (std::size_t f = 0; f < schema.continuous.size(); ++f)
            it.cont[f] = parse_double(cells[col_of.at(schema.continuous[f])], row, schema.continuous[f]);

        if (bid_cont >= 0) it.bid = it.cont[bid_cont];
        if (it.bid < 0.0)
            throw IntegrityError("row " + std::to_string(row) + ": negative bid " +
                                 format_double(it.bid));
        for (const char* probe : {"rel_pred", "cr_pred", "ctr_pred", "visibility"}) {
            const int ci = schema.cont_index(probe);
            if (ci >= 0 && (it.cont[ci] < 0.0 || it.cont[ci] > 1.0))
                throw IntegrityError("row " + std::to_string(row) + ": " + probe + " = " +
                                     format_double(it.cont[ci]) + " outside [0,1]");
        }

        const std::int64_t packed = it.query_id * 100000 + it.position;
        if (!seen_pos.insert(packed).second)
            throw IntegrityError("duplicate position " + std::to_string(it.position) +
                                 " for qid=" + std::to_string(it.query_id));

        auto [pit, fresh_page] = page_of.emplace(it.query_id, ds.pages.size());
        if (fresh_page) {
            ds.pages.push_back(SearchPage{it.query_id, {}});
        }
        ds.pages[pit->second].items.push_back(std::move(it));
    }

    std::size_t n = 0;
    for (auto& page : ds.pages) {
        std::sort(page.items.begin(), page.items.end(),
                  [](const ItemRecord& a, const ItemRecord& b) { return a.position < b.position; });
        if (n == 0) n = page.items.size();
        if (page.items.size() != n)
            throw IntegrityError("qid=" + std::to_string(page.query_id) + " has " +
                                 std::to_string(page.items.size()) + " items, expected " +
                                 std::to_string(n) + " (page length is fixed per dataset)");
        for (std::size_t j = 0; j < page.items.size(); ++j)
            if (page.items[j].position != static_cast<int>(j + 1))
                throw IntegrityError("qid=" + std::to_string(page.query_id) +
                                     ": positions are not a permutation of 1.." +
                                     std::to_string(n));
    }

    // observed cardinalities take over the declared ones
    for (std::size_t f = 0; f < ds.schema.categorical.size(); ++f)
        ds.schema.categorical[f].cardinality =
            std::max<std::size_t>(ds.cat_dicts[f].size(), 1);
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    const auto cols = ds.schema.csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
    for (const auto& page : ds.pages) {
        for (const auto& it : page.items) {
            bool first = true;
            for (const auto& col : cols) {
                if (!first) out << ",";
                first = false;
                if (col == ds.schema.query_id_column) {
                    out << it.query_id;
                } else if (col == ds.schema.position_column) {
                    out << it.position;
                } else if (col == ds.schema.label_column) {
                    out << it.click;
                } else {
                    const int ci = ds.schema.cat_index(col);
                    if (ci >= 0) {
                        out << ds.cat_dicts[ci][it.cat[ci]];
                    } else {
                        const int fi = ds.schema.cont_index(col);
                        out << format_double(it.cont[fi]);
                    }
                }
            }
            out << "\n";
        }
    }
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

std::array<Dataset, 3> split(const Dataset& ds, const std::array<double, 3>& ratios,
                             std::uint64_t seed) {
    double total = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("split ratios sum to " + format_double(total) + ", expected 1");
    for (double r : ratios)
        if (r < 0.0) throw ConfigError("split ratios must be non-negative");

    const std::size_t n = ds.pages.size();
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = ratios[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-12));
        remainder[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    while (assigned < n) {  // largest remainder, ties to the earlier split
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (remainder[i] > remainder[best] + 1e-12) best = i;
        ++counts[best];
        remainder[best] = -1.0;
        ++assigned;
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(order);

    std::array<Dataset, 3> out;
    const char* tags[3] = {"train", "val", "test"};
    std::size_t cursor = 0;
    for (int i = 0; i < 3; ++i) {
        out[i].schema = ds.schema;
        out[i].cat_dicts = ds.cat_dicts;
        out[i].split_tag = tags[i];
        out[i].pages.reserve(counts[i]);
        std::vector<std::size_t> chosen(order.begin() + cursor, order.begin() + cursor + counts[i]);
        std::sort(chosen.begin(), chosen.end());  // keep original page order within a split
        for (std::size_t idx : chosen) out[i].pages.push_back(ds.pages[idx]);
        cursor += counts[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic generation
// ---------------------------------------------------------------------------

namespace {
struct SchemaIdx {
    int hour, platform, logical_cat, with_delivery, loc, mcat, cat, winner, campaign, region,
        cat_co, sub_co;
    int price, rel, cr, ctr, xn, vis, bid;
    explicit SchemaIdx(const FeatureSchema& s)
        : hour(s.cat_index("hour")),
          platform(s.cat_index("platform")),
          logical_cat(s.cat_index("logical_category_id")),
          with_delivery(s.cat_index("with_delivery")),
          loc(s.cat_index("item_loc_id")),
          mcat(s.cat_index("item_mcat_id")),
          cat(s.cat_index("item_cat_id")),
          winner(s.cat_index("is_auction_winner")),
          campaign(s.cat_index("campaign_type")),
          region(s.cat_index("region")),
          cat_co(s.cat_index("category_coincidence")),
          sub_co(s.cat_index("subcategory_coincidence")),
          price(s.cont_index("price")),
          rel(s.cont_index("rel_pred")),
          cr(s.cont_index("cr_pred")),
          ctr(s.cont_index("ctr_pred")),
          xn(s.cont_index("xn")),
          vis(s.cont_index("visibility")),
          bid(s.cont_index("click_bid")) {}
};

double own_logit_term(const ItemRecord& it, const SchemaIdx& ix, const SyntheticConfig& cfg) {
    const double z_price = (std::log(it.cont[ix.price]) - cfg.log_price_center) / cfg.log_price_scale;
    const double coincidences =
        static_cast<double>(it.cat[ix.cat_co]) + static_cast<double>(it.cat[ix.sub_co]) - 1.0;
    return cfg.rel_weight * (it.cont[ix.rel] - 0.5) + cfg.price_weight * z_price +
           cfg.coincidence_weight * coincidences;
}

// The item above weighs twice the item below: swapping the two neighbors is
// an observable change, and users compare mostly against what they just saw.
double neighbor_logit_term(const SearchPage& page, std::size_t j, const SchemaIdx& ix,
                           const SyntheticConfig& cfg) {
    const auto& items = page.items;
    const double lnp = std::log(items[j].cont[ix.price]);
    const double rel = items[j].cont[ix.rel];
    double h = 0.0;
    if (j > 0) {
        h += cfg.neighbor_price_weight * std::tanh(std::log(items[j - 1].cont[ix.price]) - lnp);
        h += cfg.neighbor_rel_weight * (items[j - 1].cont[ix.rel] - rel);
    }
    if (j + 1 < items.size()) {
        h += 0.5 * cfg.neighbor_price_weight *
             std::tanh(std::log(items[j + 1].cont[ix.price]) - lnp);
        h += 0.5 * cfg.neighbor_rel_weight * (items[j + 1].cont[ix.rel] - rel);
    }
    return h;
}
}  // namespace

std::vector<double> synthetic_click_probs(const SearchPage& page, const FeatureSchema& schema,
                                          const SyntheticConfig& cfg) {
    const SchemaIdx ix(schema);
    std::vector<double> probs(page.items.size());
    for (std::size_t j = 0; j < page.items.size(); ++j) {
        const double logit = cfg.base_logit + own_logit_term(page.items[j], ix, cfg) +
                             cfg.position_decay * static_cast<double>(j) +
                             cfg.context_strength * neighbor_logit_term(page, j, ix, cfg);
        probs[j] = sigmoid(logit);
    }
    return probs;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_pages < 1) throw ConfigError("synthetic generator needs n_pages >= 1");
    if (cfg.page_len < 3) throw ConfigError("synthetic generator needs page length >= 3");
    if (cfg.context_strength < 0.0) throw ConfigError("context_strength must be >= 0");

    Dataset ds;
    ds.schema = FeatureSchema::standard();
    const SchemaIdx ix(ds.schema);

    Rng rng(derive_seed(cfg.seed, "synthetic"));
    ds.pages.reserve(cfg.n_pages);

    for (std::size_t p = 0; p < cfg.n_pages; ++p) {
        SearchPage page;
        page.query_id = static_cast<std::int64_t>(p + 1);
        const std::int64_t hour = rng.uniform_int(0, 23);
        const std::int64_t platform = rng.uniform_int(0, 3);

        page.items.resize(cfg.page_len);
        for (std::size_t j = 0; j < cfg.page_len; ++j) {
            ItemRecord& it = page.items[j];
            it.query_id = page.query_id;
            it.cat.assign(ds.schema.categorical.size(), 0);
            it.cont.assign(ds.schema.continuous.size(), 0.0);

            it.cat[ix.hour] = hour;
            it.cat[ix.platform] = platform;
            it.cat[ix.logical_cat] = rng.uniform_int(0, 49);
            it.cat[ix.with_delivery] = rng.bernoulli(0.6) ? 1 : 0;
            it.cat[ix.loc] = rng.uniform_int(0, 99);
            it.cat[ix.mcat] = rng.uniform_int(0, 199);
            it.cat[ix.cat] = rng.uniform_int(0, 29);
            const bool winner = rng.bernoulli(0.3);
            it.cat[ix.winner] = winner ? 1 : 0;
            it.cat[ix.campaign] = winner ? rng.uniform_int(1, 4) : 0;
            it.cat[ix.region] = rng.uniform_int(0, 19);
            const bool cat_co = rng.bernoulli(0.5);
            it.cat[ix.cat_co] = cat_co ? 1 : 0;
            it.cat[ix.sub_co] = (cat_co && rng.bernoulli(0.5)) ? 1 : 0;

            it.cont[ix.price] = std::round(rng.log_uniform(10.0, 10000.0));
            it.cont[ix.rel] = clamp01(rng.uniform() + rng.normal(0.0, 0.05));
            it.cont[ix.cr] = clamp01(0.1 + 0.3 * it.cont[ix.rel] + rng.normal(0.0, 0.05));
            it.cont[ix.xn] = winner ? std::exp(rng.normal(0.0, 0.7)) : 0.0;
            it.cont[ix.bid] = winner ? rng.log_uniform(1.0, 100.0) : 0.0;
            it.bid = it.cont[ix.bid];
        }

        // production layout: attractivity-sorted, the way a CTR-driven ranker
        // would order the page; position-dependent fields follow the layout
        std::stable_sort(page.items.begin(), page.items.end(),
                         [&](const ItemRecord& a, const ItemRecord& b) {
                             return own_logit_term(a, ix, cfg) > own_logit_term(b, ix, cfg);
                         });
        for (std::size_t j = 0; j < cfg.page_len; ++j) {
            ItemRecord& it = page.items[j];
            it.position = static_cast<int>(j + 1);
            it.cont[ix.vis] = clamp01(sigmoid(1.2 - 0.12 * static_cast<double>(j)) +
                                      rng.normal(0.0, 0.03));
        }
        // production's position-free pointwise CTR estimate, correlated with truth
        for (std::size_t j = 0; j < cfg.page_len; ++j) {
            ItemRecord& it = page.items[j];
            const double q = sigmoid(cfg.base_logit + 1.0 + own_logit_term(it, ix, cfg));
            it.cont[ix.ctr] = clamp01(q + rng.normal(0.0, 0.02));
        }

        const std::vector<double> probs = synthetic_click_probs(page, ds.schema, cfg);
        for (std::size_t j = 0; j < cfg.page_len; ++j)
            page.items[j].click = rng.bernoulli(probs[j]) ? 1 : 0;

        ds.pages.push_back(std::move(page));
    }

    // dictionaries: identity decimal strings per categorical feature
    ds.cat_dicts.resize(ds.schema.categorical.size());
    for (std::size_t f = 0; f < ds.schema.categorical.size(); ++f) {
        std::int64_t max_code = 0;
        for (const auto& page : ds.pages)
            for (const auto& it : page.items) max_code = std::max(max_code, it.cat[f]);
        for (std::int64_t c = 0; c <= max_code; ++c) ds.cat_dicts[f].push_back(std::to_string(c));
        ds.schema.categorical[f].cardinality = ds.cat_dicts[f].size();
    }
    return ds;
}

// ---------------------------------------------------------------------------
// feature views
// ---------------------------------------------------------------------------

const std::vector<std::string>& default_clicker_features() {
    static const std::vector<std::string> names = {
        "with_delivery", "platform", "is_auction_winner", "campaign_type", "pos_fixed",
        "region",        "hour",     "price",             "ctr_pred",      "xn",
        "click_bid"};
    return names;
}

bool is_categorical_feature(const FeatureSchema& schema, const std::string& name) {
    if (name == schema.position_column) return true;
    return schema.cat_index(name) >= 0;
}

void append_page_features(FeatureMatrix& out, const SearchPage& page, const Permutation* perm,
                          const FeatureSchema& schema, const std::vector<std::string>& features) {
    const std::size_t n = page.items.size();
    if (out.columns.empty()) {
        for (const auto& name : features)
            out.columns.push_back({name, is_categorical_feature(schema, name)});
        out.data.assign(features.size(), {});
        out.page_len = n;
    }
    if (out.page_len != n)
        throw IntegrityError("page length " + std::to_string(n) + " differs from matrix page length " +
                             std::to_string(out.page_len));
    for (std::size_t slot = 0; slot < n; ++slot) {
        const std::size_t item_idx = perm ? perm->item_at(slot) : slot;
        const ItemRecord& it = page.items[item_idx];
        for (std::size_t f = 0; f < features.size(); ++f) {
            const std::string& name = features[f];
            double v;
            if (name == schema.position_column) {
                v = static_cast<double>(slot + 1);  // display slot after reordering
            } else {
                const int ci = schema.cat_index(name);
                if (ci >= 0) {
                    v = static_cast<double>(it.cat[ci]);
                } else {
                    const int fi = schema.cont_index(name);
                    if (fi < 0) throw SchemaError("unknown feature: " + name);
                    v = it.cont[fi];
                }
            }
            out.data[f].push_back(v);
        }
        out.labels.push_back(it.click);
        out.qids.push_back(page.query_id);
    }
    out.n_rows += n;
}

FeatureMatrix dataset_features(const Dataset& ds, const std::vector<std::string>& features) {
    FeatureMatrix m;
    for (const auto& page : ds.pages) append_page_features(m, page, nullptr, ds.schema, features);
    return m;
}

FeatureMatrix expand_context(const FeatureMatrix& base, int k, const std::string& missing_marker) {
    if (k < 0 || base.page_len == 0 || static_cast<std::size_t>(k) >= base.page_len)
        throw ArgumentError("neighbor radius k=" + std::to_string(k) +
                            " must satisfy 0 <= k < page length " + std::to_string(base.page_len));
    if (k == 0) {
        FeatureMatrix copy = base;
        copy.context_k = 0;
        copy.missing_marker = missing_marker;
        return copy;
    }
    const std::size_t d = base.columns.size();
    FeatureMatrix out;
    out.n_rows = base.n_rows;
    out.page_len = base.page_len;
    out.labels = base.labels;
    out.qids = base.qids;
    out.context_k = k;
    out.missing_marker = missing_marker;
    for (int off = -k; off <= k; ++off) {
        for (std::size_t f = 0; f < d; ++f) {
            FeatureColumn col = base.columns[f];
            if (off != 0)
                col.name += (off < 0 ? "[" : "[+") + std::to_string(off) + "]";
            out.columns.push_back(col);
        }
    }
    out.data.assign(out.columns.size(), std::vector<double>(base.n_rows, kMissing));
    const std::size_t n = base.page_len;
    for (std::size_t row = 0; row < base.n_rows; ++row) {
        const std::size_t page_start = (row / n) * n;
        const std::size_t slot = row - page_start;
        for (int off = -k; off <= k; ++off) {
            const long neighbor = static_cast<long>(slot) + off;
            if (neighbor < 0 || neighbor >= static_cast<long>(n)) continue;  // stays missing
            const std::size_t src_row = page_start + static_cast<std::size_t>(neighbor);
            const std::size_t block = static_cast<std::size_t>(off + k) * d;
            for (std::size_t f = 0; f < d; ++f) out.data[block + f][row] = base.data[f][src_row];
        }
    }
    return out;
}

}  // namespace revrank
