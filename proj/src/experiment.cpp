#include "revrank/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "revrank/metrics.hpp"
#include "revrank/rng.hpp"

namespace revrank {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt_num(double v) {
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    return buf;
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

namespace {
template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void read_gbdt(const json& j, GbdtConfig& g) {
    read(j, "iterations", g.iterations);
    read(j, "learning_rate", g.learning_rate);
    read(j, "depth", g.depth);
    read(j, "class_weight_negative", g.class_weight_negative);
    read(j, "class_weight_positive", g.class_weight_positive);
    read(j, "context_k", g.context_k);
    read(j, "min_samples_leaf", g.min_samples_leaf);
    read(j, "encoder_smoothing", g.encoder_smoothing);
}

json gbdt_json(const GbdtConfig& g) {
    return json{{"iterations", g.iterations},
                {"learning_rate", g.learning_rate},
                {"depth", g.depth},
                {"class_weight_negative", g.class_weight_negative},
                {"class_weight_positive", g.class_weight_positive},
                {"context_k", g.context_k},
                {"min_samples_leaf", g.min_samples_leaf},
                {"encoder_smoothing", g.encoder_smoothing}};
}

void read_saint(const json& j, SaintConfig& s) {
    read(j, "d_model", s.d_model);
    read(j, "n_layers", s.n_layers);
    read(j, "n_heads", s.n_heads);
    read(j, "attention_dropout", s.attention_dropout);
    read(j, "mlp_dropout", s.mlp_dropout);
    read(j, "label_smoothing", s.label_smoothing);
    read(j, "smoothing_eps", s.smoothing_eps);
    read(j, "head_hidden", s.head_hidden);
    read(j, "learning_rate", s.learning_rate);
    read(j, "ff_mult", s.ff_mult);
    read(j, "pages_per_batch", s.pages_per_batch);
    read(j, "max_steps", s.max_steps);
    read(j, "eval_every", s.eval_every);
}

json saint_json(const SaintConfig& s) {
    return json{{"d_model", s.d_model},
                {"n_layers", s.n_layers},
                {"n_heads", s.n_heads},
                {"attention_dropout", s.attention_dropout},
                {"mlp_dropout", s.mlp_dropout},
                {"label_smoothing", s.label_smoothing},
                {"smoothing_eps", s.smoothing_eps},
                {"head_hidden", s.head_hidden},
                {"learning_rate", s.learning_rate},
                {"ff_mult", s.ff_mult},
                {"pages_per_batch", s.pages_per_batch},
                {"max_steps", s.max_steps},
                {"eval_every", s.eval_every}};
}
}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    read(j, "seed", c.seed);
    read(j, "out_dir", c.out_dir);
    if (j.contains("data")) {
        const json& d = j.at("data");
        read(d, "source", c.data.source);
        read(d, "csv_path", c.data.csv_path);
        read(d, "n_pages", c.data.n_pages);
        read(d, "page_len", c.data.page_len);
        read(d, "context_strength", c.data.context_strength);
        if (d.contains("ratios")) {
            auto r = d.at("ratios").get<std::vector<double>>();
            if (r.size() != 3) throw ConfigError("data.ratios must hold three values");
            c.data.ratios = {r[0], r[1], r[2]};
        }
    }
    if (j.contains("clicker")) {
        const json& k = j.at("clicker");
        read(k, "kind", c.clicker.kind);
        read(k, "decay", c.clicker.ctrv_decay);
        if (k.contains("gbdt")) read_gbdt(k.at("gbdt"), c.clicker.gbdt);
        if (k.contains("gbdt_c")) read_gbdt(k.at("gbdt_c"), c.clicker.gbdt_c);
        if (k.contains("saint")) read_saint(k.at("saint"), c.clicker.saint);
    }
    c.reranker = reranker_defaults_for(c.clicker.kind);
    if (j.contains("reranker")) {
        const json& r = j.at("reranker");
        if (r.contains("hidden")) {
            auto h = r.at("hidden").get<std::vector<std::size_t>>();
            if (h.size() != 3) throw ConfigError("reranker.hidden must hold three sizes");
            c.reranker.hidden = h;
        }
        read(r, "learning_rate", c.reranker.learning_rate);
        read(r, "epochs", c.reranker.epochs);
        read(r, "alpha", c.reranker.reg.alpha);
        read(r, "r_organic", c.reranker.reg.r_organic);
        read(r, "sigma", c.reranker.loss.sigma);
        read(r, "budget", c.reranker.loss.budget);
        read(r, "threshold", c.reranker.loss.threshold);
        std::string mode = c.reranker.loss.revenue_mode == RevenueMode::Soft ? "soft" : "thresholded";
        read(r, "revenue_mode", mode);
        if (mode == "soft")
            c.reranker.loss.revenue_mode = RevenueMode::Soft;
        else if (mode == "thresholded")
            c.reranker.loss.revenue_mode = RevenueMode::Thresholded;
        else
            throw ConfigError("reranker.revenue_mode must be soft or thresholded");
    }
    if (j.contains("metrics")) read(j.at("metrics"), "decay", c.metric_decay);
    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        read(s, "alphas", c.sweep.alphas);
        read(s, "seeds", c.sweep.n_seeds);
        read(s, "k_values", c.sweep.k_values);
        read(s, "b_values", c.sweep.b_values);
        if (s.contains("gbdt_grid")) {
            const json& g = s.at("gbdt_grid");
            read(g, "iterations", c.sweep.gbdt_grid.iterations);
            read(g, "learning_rate", c.sweep.gbdt_grid.learning_rate);
            read(g, "depth", c.sweep.gbdt_grid.depth);
        }
    }
    c.reranker.decay = c.metric_decay;
    c.reranker.seed = c.seed;
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("bad config json: " + std::string(e.what()));
    }
    return from_json(j);
}

json ExperimentConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["data"] = json{{"source", data.source},
                     {"csv_path", data.csv_path},
                     {"n_pages", data.n_pages},
                     {"page_len", data.page_len},
                     {"context_strength", data.context_strength},
                     {"ratios", data.ratios}};
    j["clicker"] = json{{"kind", clicker.kind},
                        {"decay", clicker.ctrv_decay},
                        {"gbdt", gbdt_json(clicker.gbdt)},
                        {"gbdt_c", gbdt_json(clicker.gbdt_c)},
                        {"saint", saint_json(clicker.saint)}};
    j["reranker"] = json{
        {"hidden", reranker.hidden},
        {"learning_rate", reranker.learning_rate},
        {"epochs", reranker.epochs},
        {"alpha", reranker.reg.alpha},
        {"r_organic", reranker.reg.r_organic},
        {"sigma", reranker.loss.sigma},
        {"budget", reranker.loss.budget},
        {"threshold", reranker.loss.threshold},
        {"revenue_mode", reranker.loss.revenue_mode == RevenueMode::Soft ? "soft" : "thresholded"}};
    j["metrics"] = json{{"decay", metric_decay}};
    j["sweep"] = json{{"alphas", sweep.alphas},
                      {"seeds", sweep.n_seeds},
                      {"k_values", sweep.k_values},
                      {"b_values", sweep.b_values},
                      {"gbdt_grid", json{{"iterations", sweep.gbdt_grid.iterations},
                                         {"learning_rate", sweep.gbdt_grid.learning_rate},
                                         {"depth", sweep.gbdt_grid.depth}}}};
    return j;
}

std::string config_hash(const json& resolved) {
    const std::string dump = resolved.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string provenance_line(const ExperimentConfig& cfg) {
    return "# revrank config_hash=" + config_hash(cfg.to_json()) +
           " seed=" + std::to_string(cfg.seed);
}

// ---------------------------------------------------------------------------
// data plumbing
// ---------------------------------------------------------------------------

Dataset materialize_dataset(const ExperimentConfig& cfg) {
    if (cfg.data.source == "csv") {
        if (cfg.data.csv_path.empty()) throw ConfigError("data.source=csv needs data.csv_path");
        return load_csv(cfg.data.csv_path, FeatureSchema::standard());
    }
    if (cfg.data.source != "synthetic")
        throw ConfigError("data.source must be synthetic or csv, got " + cfg.data.source);
    SyntheticConfig s;
    s.n_pages = cfg.data.n_pages;
    s.page_len = cfg.data.page_len;
    s.seed = derive_seed(cfg.seed, "data");
    s.context_strength = cfg.data.context_strength;
    return generate_synthetic(s);
}

SplitDataset load_splits(const ExperimentConfig& cfg) {
    const Dataset full = materialize_dataset(cfg);
    auto parts = split(full, cfg.data.ratios, derive_seed(cfg.seed, "split"));
    return SplitDataset{std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

namespace {
void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

void write_json_report(const ExperimentConfig& cfg, const std::string& path, json body) {
    body["provenance"] =
        json{{"config_hash", config_hash(cfg.to_json())}, {"seed", cfg.seed}, {"config", cfg.to_json()}};
    auto out = open_out(path);
    out << body.dump(2) << "\n";
}

struct PagePredictions {
    std::vector<std::vector<int>> labels;
    std::vector<std::vector<double>> preds;
    std::vector<int> flat_labels;
    std::vector<double> flat_preds;
};

PagePredictions clicker_predictions(const Clicker& clicker, const Dataset& ds) {
    PagePredictions out;
    for (const auto& page : ds.pages) {
        const auto pred = clicker.predict(page, Permutation::identity(page.size()));
        std::vector<int> ls(page.size());
        for (std::size_t j = 0; j < page.size(); ++j) ls[j] = page.items[j].click;
        out.flat_labels.insert(out.flat_labels.end(), ls.begin(), ls.end());
        out.flat_preds.insert(out.flat_preds.end(), pred.probs.begin(), pred.probs.end());
        out.labels.push_back(std::move(ls));
        out.preds.push_back(pred.probs);
    }
    return out;
}
}  // namespace

std::unique_ptr<Clicker> train_clicker_for(const ExperimentConfig& cfg, const SplitDataset& splits,
                                           std::vector<TrainRecord>* saint_history) {
    const std::string& kind = cfg.clicker.kind;
    if (kind == "ctrv") return std::make_unique<CtrvClicker>(cfg.clicker.ctrv_decay);
    if (kind == "gbdt" || kind == "gbdt_c") {
        GbdtConfig g = kind == "gbdt" ? cfg.clicker.gbdt : cfg.clicker.gbdt_c;
        if (kind == "gbdt") g.context_k = 0;
        g.seed = derive_seed(cfg.seed, "clicker");
        return train_gbdt_clicker(splits.train, g);
    }
    if (kind == "saint_s" || kind == "saint_q") {
        SaintConfig s = cfg.clicker.saint;
        s.intersample = kind == "saint_q";
        s.page_len = splits.train.page_len();
        s.seed = derive_seed(cfg.seed, "clicker");
        auto result = train_saint_clicker(splits.train, splits.val, s);
        if (saint_history) *saint_history = std::move(result.history);
        return std::move(result.clicker);
    }
    throw ConfigError("unknown clicker kind: " + kind);
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

void cmd_gen_data(const ExperimentConfig& cfg) {
    ensure_dir(cfg.out_dir);
    const Dataset ds = materialize_dataset(cfg);
    save_csv(ds, cfg.out_dir + "/data.csv");
    json meta;
    meta["pages"] = ds.pages.size();
    meta["page_len"] = ds.page_len();
    std::size_t clicks = 0;
    for (const auto& p : ds.pages)
        for (const auto& it : p.items) clicks += it.click;
    meta["ctr"] = static_cast<double>(clicks) / static_cast<double>(ds.n_items());
    write_json_report(cfg, cfg.out_dir + "/data.provenance.json", std::move(meta));
}

void cmd_train_clicker(const ExperimentConfig& cfg) {
    ensure_dir(cfg.out_dir);
    const SplitDataset splits = load_splits(cfg);
    std::vector<TrainRecord> history;
    const auto clicker = train_clicker_for(cfg, splits, &history);
    save_clicker(*clicker, cfg.out_dir + "/clicker_" + clicker->kind() + ".model");

    if (!history.empty()) {
        auto out = open_out(cfg.out_dir + "/clicker_" + clicker->kind() + "_history.csv");
        out << provenance_line(cfg) << "\n";
        out << "step,train_loss,val_auc,val_gauc\n";
        for (const auto& r : history)
            out << r.step << "," << fmt_num(r.train_loss) << "," << fmt_num(r.val_auc) << ","
                << fmt_num(r.val_gauc) << "\n";
    }

    const PagePredictions val = clicker_predictions(*clicker, splits.val);
    const auto a = auc(val.flat_labels, val.flat_preds);
    const auto g = gauc(val.labels, val.preds);
    json report;
    report["model"] = clicker->kind();
    report["split"] = "val";
    report["auc"] = a.has_value() ? json(*a) : json();
    report["gauc"] = g.value.has_value() ? json(*g.value) : json();
    report["gauc_skipped_pages"] = g.skipped;
    write_json_report(cfg, cfg.out_dir + "/clicker_" + clicker->kind() + "_eval.json",
                      std::move(report));
}

void cmd_eval_clicker(const ExperimentConfig& cfg, const std::string& model_path) {
    ensure_dir(cfg.out_dir);
    const SplitDataset splits = load_splits(cfg);
    const auto clicker = load_clicker(model_path);
    const PagePredictions test = clicker_predictions(*clicker, splits.test);
    const auto a = auc(test.flat_labels, test.flat_preds);
    const auto g = gauc(test.labels, test.preds);

    json report;
    report["model"] = clicker->kind();
    report["split"] = "test";
    report["auc"] = a.has_value() ? json(*a) : json();
    report["gauc"] = g.value.has_value() ? json(*g.value) : json();
    report["gauc_skipped_pages"] = g.skipped;
    write_json_report(cfg, cfg.out_dir + "/clicker_eval.json", std::move(report));

    auto out = open_out(cfg.out_dir + "/clicker_eval.csv");
    out << provenance_line(cfg) << "\n";
    out << "model,split,auc,gauc,gauc_skipped\n";
    out << clicker->kind() << ",test," << (a ? fmt_num(*a) : "nan") << ","
        << (g.value ? fmt_num(*g.value) : "nan") << "," << g.skipped << "\n";
}

void cmd_train_reranker(const ExperimentConfig& cfg, const std::string& clicker_path) {
    ensure_dir(cfg.out_dir);
    const auto clicker = load_clicker(clicker_path);
    if (clicker->kind() != cfg.clicker.kind)
        throw ConfigError("clicker checkpoint kind '" + clicker->kind() +
                          "' does not match configured kind '" + cfg.clicker.kind + "'");
    const SplitDataset splits = load_splits(cfg);
    RerankerConfig rc = cfg.reranker;
    rc.seed = derive_seed(cfg.seed, "reranker");
    auto result = train_reranker(*clicker, splits.train, splits.val, rc);

    {
        auto out = open_out(cfg.out_dir + "/reranker.params");
        result.model->save(out);
    }
    json sidecar;
    sidecar["hidden"] = rc.hidden;
    sidecar["alpha"] = rc.reg.alpha;
    sidecar["r_organic"] = rc.reg.r_organic;
    sidecar["sigma"] = rc.loss.sigma;
    sidecar["threshold"] = rc.loss.threshold;
    sidecar["clicker_kind"] = clicker->kind();
    write_json_report(cfg, cfg.out_dir + "/reranker.json", std::move(sidecar));

    auto out = open_out(cfg.out_dir + "/reranker_history.csv");
    out << provenance_line(cfg) << "\n";
    out << "step,loss,val_delta_revenue,val_difference,val_ndcg\n";
    for (const auto& r : result.history)
        out << r.step << "," << fmt_num(r.mean_loss) << "," << fmt_num(r.val_delta_revenue) << ","
            << fmt_num(r.val_difference) << "," << fmt_num(r.val_ndcg) << "\n";
}

void cmd_eval_reranker(const ExperimentConfig& cfg, const std::string& clicker_path,
                       const std::string& reranker_path, bool identity_stub) {
    ensure_dir(cfg.out_dir);
    const auto clicker = load_clicker(clicker_path);
    const SplitDataset splits = load_splits(cfg);

    std::unique_ptr<RerankerModel> model;
    if (!identity_stub) {
        std::ifstream in(reranker_path);
        if (!in) throw IoError("cannot open " + reranker_path);
        model = std::make_unique<RerankerModel>(RerankerModel::load(in));
    }
    auto rerank_fn = [&](const SearchPage& page) {
        return identity_stub ? Permutation::identity(page.size()) : model->rerank(page);
    };

    const double h = cfg.reranker.loss.threshold;
    const double P = cfg.metric_decay;
    MetricReport report;
    report.decay = P;
    report.threshold = h;
    report.alpha = cfg.reranker.reg.alpha;
    report.r_organic = cfg.reranker.reg.r_organic;
    report.seed = cfg.seed;

    const auto dr = delta_revenue(*clicker, rerank_fn, splits.test.pages, h);
    report.delta_revenue = dr.value;
    report.delta_revenue_excluded = dr.excluded;

    double diff_sum = 0.0, ndcg_sum = 0.0;
    for (const auto& page : splits.test.pages) {
        const Permutation perm = rerank_fn(page);
        const double d = difference(perm, P);
        const double g = ndcg(perm, P);
        diff_sum += d;
        ndcg_sum += g;
        QueryMetricsRow row;
        row.qid = page.query_id;
        row.difference = d;
        row.ndcg = g;
        report.per_query.push_back(row);
    }
    report.difference = diff_sum / static_cast<double>(splits.test.pages.size());
    report.ndcg = ndcg_sum / static_cast<double>(splits.test.pages.size());

    json body;
    body["delta_revenue"] = report.delta_revenue ? json(*report.delta_revenue) : json();
    body["delta_revenue_excluded_pages"] = report.delta_revenue_excluded;
    body["difference_nats"] = *report.difference;
    body["ndcg"] = *report.ndcg;
    body["decay"] = P;
    body["threshold"] = h;
    body["alpha"] = report.alpha;
    body["r_organic"] = report.r_organic;
    body["identity_stub"] = identity_stub;
    write_json_report(cfg, cfg.out_dir + "/reranker_eval.json", std::move(body));

    auto out = open_out(cfg.out_dir + "/reranker_eval.csv");
    out << provenance_line(cfg) << "\n";
    out << "qid,difference_nats,ndcg\n";
    for (const auto& row : report.per_query)
        out << row.qid << "," << fmt_num(*row.difference) << "," << fmt_num(*row.ndcg) << "\n";
    out << "aggregate," << fmt_num(*report.difference) << "," << fmt_num(*report.ndcg) << "\n";
}

void cmd_sweep_alpha(const ExperimentConfig& cfg, const std::vector<std::string>& clicker_paths) {
    ensure_dir(cfg.out_dir);
    if (clicker_paths.empty()) throw ConfigError("sweep-alpha needs at least one --clicker");
    const SplitDataset splits = load_splits(cfg);
    const double h = cfg.reranker.loss.threshold;
    const double P = cfg.metric_decay;

    auto rows_out = open_out(cfg.out_dir + "/alpha_sweep.csv");
    rows_out << provenance_line(cfg) << "\n";
    rows_out << "clicker,alpha,delta_revenue,difference_nats,ndcg,seeds\n";
    auto corr_out = open_out(cfg.out_dir + "/alpha_correlations.csv");
    corr_out << provenance_line(cfg) << "\n";
    corr_out << "clicker,revenue_vs_difference,revenue_vs_ndcg\n";

    for (const auto& path : clicker_paths) {
        const auto clicker = load_clicker(path);
        std::vector<double> series_r, series_d, series_n;
        for (double alpha : cfg.sweep.alphas) {
            double sum_r = 0.0, sum_d = 0.0, sum_n = 0.0;
            for (std::size_t s = 0; s < cfg.sweep.n_seeds; ++s) {
                RerankerConfig rc = cfg.reranker;
                rc.reg.alpha = alpha;
                rc.seed = derive_seed(cfg.seed, "alpha-sweep", s);
                auto trained = train_reranker(*clicker, splits.train, splits.val, rc);
                const RerankerModel& m = *trained.model;
                auto rerank_fn = [&m](const SearchPage& p) { return m.rerank(p); };
                const auto dr = delta_revenue(*clicker, rerank_fn, splits.test.pages, h);
                sum_r += dr.value.value_or(1.0);
                double diff_sum = 0.0, ndcg_sum = 0.0;
                for (const auto& page : splits.test.pages) {
                    const Permutation perm = m.rerank(page);
                    diff_sum += difference(perm, P);
                    ndcg_sum += ndcg(perm, P);
                }
                sum_d += diff_sum / static_cast<double>(splits.test.pages.size());
                sum_n += ndcg_sum / static_cast<double>(splits.test.pages.size());
            }
            const double k = static_cast<double>(cfg.sweep.n_seeds);
            series_r.push_back(sum_r / k);
            series_d.push_back(sum_d / k);
            series_n.push_back(sum_n / k);
            rows_out << clicker->kind() << "," << fmt_num(alpha) << "," << fmt_num(sum_r / k) << ","
                     << fmt_num(sum_d / k) << "," << fmt_num(sum_n / k) << "," << cfg.sweep.n_seeds
                     << "\n";
        }
        const auto rd = pearson(series_r, series_d);
        const auto rn = pearson(series_r, series_n);
        corr_out << clicker->kind() << "," << (rd ? fmt_num(*rd) : "nan") << ","
                 << (rn ? fmt_num(*rn) : "nan") << "\n";
    }
}

void cmd_sweep_k(const ExperimentConfig& cfg) {
    ensure_dir(cfg.out_dir);
    const SplitDataset splits = load_splits(cfg);
    GbdtConfig base = cfg.clicker.gbdt_c;
    base.seed = derive_seed(cfg.seed, "clicker");
    const auto rows = sweep_k(splits.train, splits.val, cfg.sweep.k_values, base);
    auto out = open_out(cfg.out_dir + "/k_sweep.csv");
    out << provenance_line(cfg) << "\n";
    out << "k,auc,gauc,inference_ms_per_page\n";
    for (const auto& r : rows)
        out << r.k << "," << (r.auc ? fmt_num(*r.auc) : "nan") << ","
            << (r.gauc ? fmt_num(*r.gauc) : "nan") << "," << fmt_num(r.inference_ms_per_page)
            << "\n";
}

void cmd_bench_attention(const ExperimentConfig& cfg, const std::string& clicker_path) {
    ensure_dir(cfg.out_dir);
    const auto clicker = load_clicker(clicker_path);
    const auto* saint = dynamic_cast<const SaintClicker*>(clicker.get());
    if (!saint) throw ConfigError("bench-attention needs a saint clicker checkpoint");
    const SplitDataset splits = load_splits(cfg);
    const auto rows = bench_chunk_batching(*saint, splits.test, cfg.sweep.b_values);
    auto out = open_out(cfg.out_dir + "/attention_bench.csv");
    out << provenance_line(cfg) << "\n";
    out << "pages_per_batch,ms_per_page\n";
    for (const auto& r : rows) out << r.pages_per_batch << "," << fmt_num(r.ms_per_page) << "\n";
}

void cmd_grid_search(const ExperimentConfig& cfg) {
    ensure_dir(cfg.out_dir);
    const SplitDataset splits = load_splits(cfg);
    const std::string& kind = cfg.clicker.kind;
    if (kind != "gbdt" && kind != "gbdt_c")
        throw ConfigError("grid-search supports gbdt/gbdt_c clickers, got " + kind);

    auto out = open_out(cfg.out_dir + "/grid_search.csv");
    out << provenance_line(cfg) << "\n";
    out << "iterations,learning_rate,depth,val_auc\n";

    double best_auc = -1.0;
    GbdtConfig best;
    for (int iters : cfg.sweep.gbdt_grid.iterations) {
        for (double lr : cfg.sweep.gbdt_grid.learning_rate) {
            for (int depth : cfg.sweep.gbdt_grid.depth) {
                GbdtConfig g = kind == "gbdt" ? cfg.clicker.gbdt : cfg.clicker.gbdt_c;
                if (kind == "gbdt") g.context_k = 0;
                g.iterations = iters;
                g.learning_rate = lr;
                g.depth = depth;
                g.seed = derive_seed(cfg.seed, "clicker");
                const auto clicker = train_gbdt_clicker(splits.train, g);
                const PagePredictions val = clicker_predictions(*clicker, splits.val);
                const auto a = auc(val.flat_labels, val.flat_preds);
                const double score = a.value_or(0.0);
                out << iters << "," << fmt_num(lr) << "," << depth << "," << fmt_num(score) << "\n";
                if (score > best_auc) {
                    best_auc = score;
                    best = g;
                }
            }
        }
    }
    json report;
    report["selection_metric"] = "val_auc";
    report["best"] = gbdt_json(best);
    report["best_val_auc"] = best_auc;
    write_json_report(cfg, cfg.out_dir + "/grid_search_best.json", std::move(report));
}

}  // namespace revrank
