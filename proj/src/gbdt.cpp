#include "revrank/gbdt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>

#include "revrank/metrics.hpp"

namespace revrank {

namespace {
constexpr double kLeafClip = 4.0;
constexpr double kEps = 1e-12;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// numerically safe weighted logloss for label y under margin f
double logloss_term(int y, double f) {
    // log(1 + exp(-z)) with z = y ? f : -f
    const double z = y ? f : -f;
    return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

std::string hexd(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_hexd(std::istream& is) {
    std::string tok;
    if (!(is >> tok)) throw ParseError("truncated model file");
    return std::strtod(tok.c_str(), nullptr);
}
}  // namespace

double Tree::predict_row(const std::vector<std::vector<double>>& cols, std::size_t row) const {
    int idx = 0;
    while (nodes[idx].feature >= 0) {
        const TreeNode& n = nodes[idx];
        const double v = cols[n.feature][row];
        if (std::isnan(v))
            idx = n.missing_left ? n.left : n.right;
        else
            idx = v <= n.threshold ? n.left : n.right;
    }
    return nodes[idx].value;
}

double CategoryEncoder::encode(double raw) const {
    if (std::isnan(raw)) return has_missing_bucket ? missing_value : prior;
    const auto it = stats.find(static_cast<std::int64_t>(raw));
    return it == stats.end() ? prior : it->second;
}

std::vector<std::vector<double>> GbdtModel::encode_columns(const FeatureMatrix& features) const {
    if (features.columns.size() != columns.size())
        throw ShapeError("feature width " + std::to_string(features.columns.size()) +
                         " does not match model width " + std::to_string(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c)
        if (features.columns[c].name != columns[c].name)
            throw ShapeError("feature column '" + features.columns[c].name +
                             "' does not match model column '" + columns[c].name + "'");
    std::vector<std::vector<double>> cols(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (encoders[c].has_value()) {
            cols[c].resize(features.n_rows);
            for (std::size_t r = 0; r < features.n_rows; ++r)
                cols[c][r] = encoders[c]->encode(features.data[c][r]);
        } else {
            cols[c] = features.data[c];
        }
    }
    return cols;
}

std::vector<double> GbdtModel::predict_proba(const FeatureMatrix& features) const {
    const auto cols = encode_columns(features);
    std::vector<double> out(features.n_rows);
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < features.n_rows; ++r) {
        double f = base_score;
        for (const Tree& t : trees) f += learning_rate * t.predict_row(cols, r);
        out[r] = sigmoid(f);
    }
    return out;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    bool missing_left = true;
};

struct NodeStats {
    double sum_wr = 0.0;  // sum of weighted residuals
    double sum_w = 0.0;
    double sum_h = 0.0;  // sum of weighted p(1-p), for the Newton leaf value
    std::size_t count = 0;
};

double side_score(double s, double w) { return w > kEps ? s * s / w : 0.0; }

CategoryEncoder fit_encoder(const std::vector<double>& column, const std::vector<int>& labels,
                            double smoothing) {
    CategoryEncoder enc;
    double total = 0.0;
    for (int y : labels) total += y;
    enc.prior = labels.empty() ? 0.0 : total / static_cast<double>(labels.size());

    std::unordered_map<std::int64_t, std::pair<double, double>> acc;  // code -> (sum_y, count)
    double miss_sum = 0.0, miss_count = 0.0;
    for (std::size_t r = 0; r < column.size(); ++r) {
        if (std::isnan(column[r])) {
            miss_sum += labels[r];
            miss_count += 1.0;
        } else {
            auto& slot = acc[static_cast<std::int64_t>(column[r])];
            slot.first += labels[r];
            slot.second += 1.0;
        }
    }
    for (const auto& [code, sc] : acc)
        enc.stats[code] = (sc.first + smoothing * enc.prior) / (sc.second + smoothing);
    if (miss_count > 0.0) {
        enc.has_missing_bucket = true;
        enc.missing_value = (miss_sum + smoothing * enc.prior) / (miss_count + smoothing);
    }
    return enc;
}

}  // namespace

GbdtModel gbdt_fit(const FeatureMatrix& train, const GbdtConfig& config) {
    if (config.iterations < 0 || config.depth < 1)
        throw ConfigError("gbdt needs iterations >= 0 and depth >= 1");
    if (train.n_rows == 0) throw TrainingError("empty training matrix");
    const std::size_t rows = train.n_rows;
    const std::size_t n_features = train.columns.size();

    std::size_t positives = 0;
    for (int y : train.labels) positives += y;
    if (positives == 0 || positives == rows)
        throw TrainingError("degenerate labels: training fold holds a single class");

    GbdtModel model;
    model.columns = train.columns;
    model.learning_rate = config.learning_rate;
    model.context_k = train.context_k;
    model.encoders.resize(n_features);
    for (std::size_t c = 0; c < n_features; ++c)
        if (train.columns[c].categorical)
            model.encoders[c] = fit_encoder(train.data[c], train.labels, config.encoder_smoothing);

    const auto cols = [&] {
        std::vector<std::vector<double>> enc(n_features);
        for (std::size_t c = 0; c < n_features; ++c) {
            if (model.encoders[c].has_value()) {
                enc[c].resize(rows);
                for (std::size_t r = 0; r < rows; ++r)
                    enc[c][r] = model.encoders[c]->encode(train.data[c][r]);
            } else {
                enc[c] = train.data[c];
            }
        }
        return enc;
    }();

    std::vector<double> weight(rows);
    double sum_wy = 0.0, sum_wn = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        weight[r] = train.labels[r] ? config.class_weight_positive : config.class_weight_negative;
        (train.labels[r] ? sum_wy : sum_wn) += weight[r];
    }
    model.base_score = std::log((sum_wy + kEps) / (sum_wn + kEps));

    // presort each column once: non-missing row order plus missing row list
    std::vector<std::vector<std::uint32_t>> sorted(n_features), missing(n_features);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t c = 0; c < n_features; ++c) {
        auto& order = sorted[c];
        order.reserve(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            if (std::isnan(cols[c][r]))
                missing[c].push_back(static_cast<std::uint32_t>(r));
            else
                order.push_back(static_cast<std::uint32_t>(r));
        }
        std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return cols[c][a] < cols[c][b];
        });
    }

    std::vector<double> margin(rows, model.base_score);
    std::vector<double> residual(rows), hessian(rows);
    std::vector<int> node_of(rows);
    const double total_weight = sum_wy + sum_wn;

    for (int round = 0; round < config.iterations; ++round) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double p = sigmoid(margin[r]);
            residual[r] = (train.labels[r] - p) * weight[r];
            hessian[r] = p * (1.0 - p) * weight[r];
        }

        Tree tree;
        tree.nodes.push_back(TreeNode{});
        std::fill(node_of.begin(), node_of.end(), 0);
        std::vector<int> active = {0};

        for (int level = 0; level < config.depth && !active.empty(); ++level) {
            const int max_node = tree.nodes.size();
            std::vector<NodeStats> totals(max_node);
            for (std::size_t r = 0; r < rows; ++r) {
                NodeStats& t = totals[node_of[r]];
                t.sum_wr += residual[r];
                t.sum_w += weight[r];
                t.sum_h += hessian[r];
                ++t.count;
            }
            std::vector<SplitCandidate> best(max_node);

            // per-feature scans are independent; each writes its own candidate row
            std::vector<std::vector<SplitCandidate>> per_feature(n_features);
#pragma omp parallel for schedule(dynamic)
            for (std::size_t c = 0; c < n_features; ++c) {
                auto& cand = per_feature[c];
                cand.assign(max_node, SplitCandidate{});
                // missing-value stats per node for this column
                std::vector<double> miss_s(max_node, 0.0), miss_w(max_node, 0.0);
                std::vector<std::size_t> miss_n(max_node, 0);
                for (std::uint32_t r : missing[c]) {
                    const int nd = node_of[r];
                    miss_s[nd] += residual[r];
                    miss_w[nd] += weight[r];
                    ++miss_n[nd];
                }
                std::vector<double> cum_s(max_node, 0.0), cum_w(max_node, 0.0);
                std::vector<std::size_t> cum_n(max_node, 0);
                std::vector<double> last_value(max_node, 0.0);
                std::vector<bool> started(max_node, false);
                for (std::uint32_t r : sorted[c]) {
                    const int nd = node_of[r];
                    if (nd < 0 || nd >= max_node) continue;
                    const double v = cols[c][r];
                    if (started[nd] && v > last_value[nd]) {
                        // candidate threshold between the previous and current value
                        const double thr = 0.5 * (last_value[nd] + v);
                        const NodeStats& tot = totals[nd];
                        const double rest_s = tot.sum_wr - cum_s[nd] - miss_s[nd];
                        const double rest_w = tot.sum_w - cum_w[nd] - miss_w[nd];
                        const std::size_t rest_n = tot.count - cum_n[nd] - miss_n[nd];
                        const double parent = side_score(tot.sum_wr, tot.sum_w);
                        // missing goes left
                        {
                            const std::size_t ln = cum_n[nd] + miss_n[nd];
                            if (ln >= static_cast<std::size_t>(config.min_samples_leaf) &&
                                rest_n >= static_cast<std::size_t>(config.min_samples_leaf)) {
                                const double gain = side_score(cum_s[nd] + miss_s[nd],
                                                               cum_w[nd] + miss_w[nd]) +
                                                    side_score(rest_s, rest_w) - parent;
                                if (gain > cand[nd].gain + kEps) {
                                    cand[nd] = {gain, static_cast<int>(c), thr, true};
                                }
                            }
                        }
                        // missing goes right
                        if (miss_n[nd] > 0) {
                            const std::size_t rn = rest_n + miss_n[nd];
                            if (cum_n[nd] >= static_cast<std::size_t>(config.min_samples_leaf) &&
                                rn >= static_cast<std::size_t>(config.min_samples_leaf)) {
                                const double gain = side_score(cum_s[nd], cum_w[nd]) +
                                                    side_score(rest_s + miss_s[nd],
                                                               rest_w + miss_w[nd]) -
                                                    parent;
                                if (gain > cand[nd].gain + kEps) {
                                    cand[nd] = {gain, static_cast<int>(c), thr, false};
                                }
                            }
                        }
                    }
                    cum_s[nd] += residual[r];
                    cum_w[nd] += weight[r];
                    ++cum_n[nd];
                    last_value[nd] = v;
                    started[nd] = true;
                }
            }
            // merge candidates in feature order for a deterministic argmax
            for (std::size_t c = 0; c < n_features; ++c)
                for (int nd : active)
                    if (per_feature[c][nd].gain > best[nd].gain + kEps) best[nd] = per_feature[c][nd];

            std::vector<int> next_active;
            std::vector<char> splits_node(max_node, 0);
            for (int nd : active) {
                if (best[nd].feature < 0 || best[nd].gain <= kEps) continue;
                const int left = static_cast<int>(tree.nodes.size());
                const int right = left + 1;
                tree.nodes.push_back(TreeNode{});
                tree.nodes.push_back(TreeNode{});
                TreeNode& node = tree.nodes[nd];
                node.feature = best[nd].feature;
                node.threshold = best[nd].threshold;
                node.missing_left = best[nd].missing_left;
                node.left = left;
                node.right = right;
                next_active.push_back(left);
                next_active.push_back(right);
                splits_node[nd] = 1;
            }
            if (next_active.empty()) break;
            for (std::size_t r = 0; r < rows; ++r) {
                const int nd = node_of[r];
                if (nd >= max_node || !splits_node[nd]) continue;
                const TreeNode& node = tree.nodes[nd];
                const double v = cols[node.feature][r];
                const bool go_left = std::isnan(v) ? node.missing_left : v <= node.threshold;
                node_of[r] = go_left ? node.left : node.right;
            }
            active = std::move(next_active);
        }

        // Newton leaf values on the final partition
        std::vector<double> leaf_s(tree.nodes.size(), 0.0), leaf_h(tree.nodes.size(), 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            leaf_s[node_of[r]] += residual[r];
            leaf_h[node_of[r]] += hessian[r];
        }
        for (std::size_t nd = 0; nd < tree.nodes.size(); ++nd) {
            if (tree.nodes[nd].feature >= 0) continue;
            double value = leaf_h[nd] > kEps ? leaf_s[nd] / leaf_h[nd] : 0.0;
            tree.nodes[nd].value = std::clamp(value, -kLeafClip, kLeafClip);
        }

        for (std::size_t r = 0; r < rows; ++r)
            margin[r] += config.learning_rate * tree.nodes[node_of[r]].value;
        model.trees.push_back(std::move(tree));

        double loss = 0.0;
        for (std::size_t r = 0; r < rows; ++r)
            loss += weight[r] * logloss_term(train.labels[r], margin[r]);
        model.train_loss.push_back(loss / total_weight);
    }
    return model;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

void GbdtModel::save(std::ostream& os) const {
    os << "columns " << columns.size() << "\n";
    for (const auto& c : columns) os << c.name << " " << (c.categorical ? 1 : 0) << "\n";
    os << "context_k " << context_k << "\n";
    os << "base_score " << hexd(base_score) << "\n";
    os << "learning_rate " << hexd(learning_rate) << "\n";
    os << "encoders\n";
    for (std::size_t c = 0; c < encoders.size(); ++c) {
        if (!encoders[c].has_value()) continue;
        const CategoryEncoder& e = *encoders[c];
        os << "encoder " << c << " " << hexd(e.prior) << " " << (e.has_missing_bucket ? 1 : 0)
           << " " << hexd(e.missing_value) << " " << e.stats.size() << "\n";
        std::vector<std::int64_t> keys;
        keys.reserve(e.stats.size());
        for (const auto& [k, v] : e.stats) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        for (std::int64_t k : keys) os << k << " " << hexd(e.stats.at(k)) << "\n";
    }
    os << "trees " << trees.size() << "\n";
    for (const Tree& t : trees) {
        os << "tree " << t.nodes.size() << "\n";
        for (const TreeNode& n : t.nodes)
            os << n.feature << " " << hexd(n.threshold) << " " << (n.missing_left ? 1 : 0) << " "
               << n.left << " " << n.right << " " << hexd(n.value) << "\n";
    }
}

GbdtModel GbdtModel::load(std::istream& is) {
    GbdtModel m;
    std::string kw;
    std::size_t n = 0;
    is >> kw >> n;
    if (kw != "columns") throw ParseError("bad gbdt model file");
    m.columns.resize(n);
    for (auto& c : m.columns) {
        int cat = 0;
        is >> c.name >> cat;
        c.categorical = cat != 0;
    }
    is >> kw >> m.context_k;
    if (kw != "context_k") throw ParseError("bad gbdt model file");
    is >> kw;
    m.base_score = parse_hexd(is);
    is >> kw;
    m.learning_rate = parse_hexd(is);
    is >> kw;  // "encoders"
    m.encoders.resize(n);
    while (is >> kw && kw == "encoder") {
        std::size_t col = 0;
        is >> col;
        CategoryEncoder e;
        e.prior = parse_hexd(is);
        int miss = 0;
        is >> miss;
        e.has_missing_bucket = miss != 0;
        e.missing_value = parse_hexd(is);
        std::size_t cnt = 0;
        is >> cnt;
        for (std::size_t i = 0; i < cnt; ++i) {
            std::int64_t code = 0;
            is >> code;
            e.stats[code] = parse_hexd(is);
        }
        m.encoders[col] = std::move(e);
    }
    if (kw != "trees") throw ParseError("bad gbdt model file: expected trees");
    std::size_t n_trees = 0;
    is >> n_trees;
    m.trees.resize(n_trees);
    for (Tree& t : m.trees) {
        std::size_t nn = 0;
        is >> kw >> nn;
        if (kw != "tree") throw ParseError("bad gbdt model file: expected tree");
        t.nodes.resize(nn);
        for (TreeNode& node : t.nodes) {
            int miss = 0;
            is >> node.feature;
            node.threshold = parse_hexd(is);
            is >> miss >> node.left >> node.right;
            node.missing_left = miss != 0;
            node.value = parse_hexd(is);
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// clicker wrapper
// ---------------------------------------------------------------------------

GbdtClicker::GbdtClicker(GbdtModel model, FeatureSchema schema, std::vector<std::string> features)
    : model_(std::move(model)), schema_(std::move(schema)), features_(std::move(features)) {}

std::vector<double> GbdtClicker::predict_impl(const SearchPage& page,
                                              const Permutation& perm) const {
    FeatureMatrix m;
    append_page_features(m, page, &perm, schema_, features_);
    if (model_.context_k > 0) m = expand_context(m, model_.context_k);
    return model_.predict_proba(m);
}

std::vector<std::vector<double>> GbdtClicker::predict_batch_impl(
    const SearchPage& page, const std::vector<Permutation>& perms) const {
    FeatureMatrix m;
    for (const auto& perm : perms) append_page_features(m, page, &perm, schema_, features_);
    if (model_.context_k > 0) m = expand_context(m, model_.context_k);
    const std::vector<double> flat = model_.predict_proba(m);
    const std::size_t n = page.size();
    std::vector<std::vector<double>> out(perms.size());
    for (std::size_t i = 0; i < perms.size(); ++i)
        out[i].assign(flat.begin() + i * n, flat.begin() + (i + 1) * n);
    return out;
}

void GbdtClicker::save(std::ostream& os) const {
    os << "revrank-clicker " << kind() << " v1\n";
    os << "features " << features_.size();
    for (const auto& f : features_) os << " " << f;
    os << "\n";
    model_.save(os);
}

std::unique_ptr<GbdtClicker> GbdtClicker::load(std::istream& is) {
    std::string kw;
    std::size_t n = 0;
    is >> kw >> n;
    if (kw != "features") throw ParseError("bad gbdt clicker file");
    std::vector<std::string> features(n);
    for (auto& f : features) is >> f;
    GbdtModel model = GbdtModel::load(is);
    return std::make_unique<GbdtClicker>(std::move(model), FeatureSchema::standard(),
                                         std::move(features));
}

std::unique_ptr<GbdtClicker> train_gbdt_clicker(const Dataset& train, const GbdtConfig& config) {
    FeatureMatrix m = dataset_features(train, default_clicker_features());
    if (config.context_k > 0) m = expand_context(m, config.context_k);
    GbdtModel model = gbdt_fit(m, config);
    return std::make_unique<GbdtClicker>(std::move(model), train.schema,
                                         default_clicker_features());
}

std::vector<KSweepRow> sweep_k(const Dataset& train, const Dataset& val,
                               const std::vector<int>& k_values, GbdtConfig base_config) {
    if (k_values.empty()) throw ArgumentError("sweep_k needs at least one k");
    std::vector<int> ks = k_values;
    std::sort(ks.begin(), ks.end());

    std::vector<KSweepRow> rows;
    for (int k : ks) {
        GbdtConfig cfg = base_config;
        cfg.context_k = k;
        auto clicker = train_gbdt_clicker(train, cfg);

        std::vector<std::vector<int>> labels;
        std::vector<std::vector<double>> preds;
        std::vector<int> flat_labels;
        std::vector<double> flat_preds;
        for (const auto& page : val.pages) {
            const auto pred = clicker->predict(page, Permutation::identity(page.size()));
            std::vector<int> ls(page.size());
            for (std::size_t j = 0; j < page.size(); ++j) ls[j] = page.items[j].click;
            flat_labels.insert(flat_labels.end(), ls.begin(), ls.end());
            flat_preds.insert(flat_preds.end(), pred.probs.begin(), pred.probs.end());
            labels.push_back(std::move(ls));
            preds.push_back(pred.probs);
        }

        KSweepRow row;
        row.k = k;
        row.auc = auc(flat_labels, flat_preds);
        row.gauc = gauc(labels, preds).value;

        // per-page latency: median over repeated single-page predictions
        const SearchPage& probe = val.pages.front();
        const Permutation identity = Permutation::identity(probe.size());
        std::vector<double> times;
        for (int warm = 0; warm < 5; ++warm) clicker->predict(probe, identity);
        for (int rep = 0; rep < 30; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            clicker->predict(probe, identity);
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(times.begin(), times.end());
        row.inference_ms_per_page = times[times.size() / 2];
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace revrank
