#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "revrank/experiment.hpp"
#include "revrank/metrics.hpp"

using namespace revrank;
namespace fs = std::filesystem;

namespace {
std::string cli_path() {
    const char* env = std::getenv("REVRANK_CLI");
    REQUIRE_MESSAGE(env != nullptr, "REVRANK_CLI must point at the built binary");
    return env;
}

int run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE_MESSAGE(in.good(), "missing file " << p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_config(const fs::path& path, const fs::path& out_dir, const std::string& kind,
                  std::size_t pages = 24, std::size_t page_len = 5) {
    nlohmann::json j;
    j["seed"] = 100;
    j["out_dir"] = out_dir.string();
    j["data"] = {{"source", "synthetic"}, {"n_pages", pages}, {"page_len", page_len}};
    j["clicker"] = {{"kind", kind},
                    {"decay", 0.9},
                    {"gbdt", {{"iterations", 5}, {"depth", 2}, {"learning_rate", 0.3},
                              {"class_weight_positive", 1.0}}},
                    };
    j["reranker"] = {{"hidden", {8, 8, 8}}, {"epochs", 1}, {"alpha", 1.0}, {"r_organic", 0.0},
                     {"threshold", 0.05}};
    std::ofstream out(path);
    out << j.dump(2);
}
}  // namespace

TEST_CASE("gen-data writes a schema-exact csv deterministically") {
    const fs::path dir_a = fresh_dir("revrank_cli_gen_a");
    const fs::path dir_b = fresh_dir("revrank_cli_gen_b");
    const fs::path cfg = dir_a / "config.json";
    write_config(cfg, dir_a, "ctrv");
    REQUIRE(run("gen-data --config " + cfg.string()) == 0);
    REQUIRE(run("gen-data --config " + cfg.string() + " --out " + dir_b.string()) == 0);

    const std::string a = slurp(dir_a / "data.csv");
    const std::string b = slurp(dir_b / "data.csv");
    CHECK(a == b);
    CHECK(a.rfind("qid,hour,platform,", 0) == 0);

    const auto meta = nlohmann::json::parse(slurp(dir_a / "data.provenance.json"));
    CHECK(meta.contains("provenance"));
    CHECK(meta["provenance"].contains("config_hash"));
    CHECK(meta["provenance"]["seed"] == 100);
}

TEST_CASE("bad config and missing model map to exit codes 1 and 2") {
    const fs::path dir = fresh_dir("revrank_cli_err");
    const fs::path bad = dir / "bad.json";
    std::ofstream(bad) << "{ not json";
    CHECK(run("gen-data --config " + bad.string()) == 1);
    const fs::path cfg = dir / "config.json";
    write_config(cfg, dir, "ctrv");
    CHECK(run("eval-clicker --config " + cfg.string() + " --clicker /nonexistent.model") == 2);
    CHECK(run("definitely-not-a-verb") == 1);
}

TEST_CASE("train/eval clicker emit tagged models and reports with provenance") {
    const fs::path dir = fresh_dir("revrank_cli_clicker");
    const fs::path cfg = dir / "config.json";
    write_config(cfg, dir, "gbdt");
    REQUIRE(run("train-clicker --config " + cfg.string()) == 0);
    const fs::path model = dir / "clicker_gbdt.model";
    REQUIRE(fs::exists(model));
    CHECK(slurp(model).rfind("revrank-clicker gbdt v1", 0) == 0);

    REQUIRE(run("eval-clicker --config " + cfg.string() + " --clicker " + model.string()) == 0);
    const auto report = nlohmann::json::parse(slurp(dir / "clicker_eval.json"));
    CHECK(report.contains("auc"));
    CHECK(report.contains("gauc"));
    CHECK(report["provenance"]["seed"] == 100);
    const std::string csv = slurp(dir / "clicker_eval.csv");
    CHECK(csv.rfind("# revrank config_hash=", 0) == 0);
}

TEST_CASE("train-reranker refuses a clicker kind mismatch") {
    const fs::path dir = fresh_dir("revrank_cli_mismatch");
    const fs::path cfg = dir / "config.json";
    write_config(cfg, dir, "ctrv");
    {
        // a ctrv model on disk, but the config asks for gbdt
        CtrvClicker clicker(0.9);
        save_clicker(clicker, (dir / "clicker_ctrv.model").string());
    }
    const fs::path cfg2 = dir / "config2.json";
    write_config(cfg2, dir, "gbdt");
    CHECK(run("train-reranker --config " + cfg2.string() + " --clicker " +
              (dir / "clicker_ctrv.model").string()) == 1);
}

TEST_CASE("identity stub scores the perfect baseline") {
    const fs::path dir = fresh_dir("revrank_cli_identity");
    const fs::path cfg = dir / "config.json";
    write_config(cfg, dir, "ctrv");
    CtrvClicker clicker(0.9);
    save_clicker(clicker, (dir / "clicker_ctrv.model").string());
    REQUIRE(run("eval-reranker --config " + cfg.string() + " --clicker " +
                (dir / "clicker_ctrv.model").string() + " --identity") == 0);
    const auto report = nlohmann::json::parse(slurp(dir / "reranker_eval.json"));
    CHECK(report["delta_revenue"].get<double>() == doctest::Approx(1.0));
    CHECK(report["difference_nats"].get<double>() == doctest::Approx(0.0));
    CHECK(report["ndcg"].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("full train-reranker round trip over the cli") {
    const fs::path dir = fresh_dir("revrank_cli_rr");
    const fs::path cfg = dir / "config.json";
    write_config(cfg, dir, "ctrv", 18, 4);
    CtrvClicker clicker(0.9);
    save_clicker(clicker, (dir / "clicker_ctrv.model").string());
    REQUIRE(run("train-reranker --config " + cfg.string() + " --clicker " +
                (dir / "clicker_ctrv.model").string()) == 0);
    REQUIRE(fs::exists(dir / "reranker.params"));
    REQUIRE(fs::exists(dir / "reranker.json"));
    const std::string history = slurp(dir / "reranker_history.csv");
    CHECK(history.find("step,loss,val_delta_revenue,val_difference,val_ndcg") != std::string::npos);
    CHECK(history.rfind("# revrank config_hash=", 0) == 0);

    REQUIRE(run("eval-reranker --config " + cfg.string() + " --clicker " +
                (dir / "clicker_ctrv.model").string() + " --reranker " +
                (dir / "reranker.params").string()) == 0);
    const auto report = nlohmann::json::parse(slurp(dir / "reranker_eval.json"));
    CHECK(report.contains("delta_revenue"));
    CHECK(report.contains("ndcg"));
}

TEST_CASE("grid search: default grid shape, degenerate grid equals a direct run") {
    const GbdtGrid grid;  // the documented search space
    CHECK(grid.iterations == std::vector<int>{150, 200, 500});
    CHECK(grid.learning_rate == std::vector<double>{0.01, 0.03, 0.05, 0.1});
    CHECK(grid.depth == std::vector<int>{4, 5, 6});
    CHECK(grid.iterations.size() * grid.learning_rate.size() * grid.depth.size() == 36);

    const fs::path dir = fresh_dir("revrank_cli_grid");
    ExperimentConfig cfg;
    cfg.seed = 100;
    cfg.out_dir = dir.string();
    cfg.data.n_pages = 24;
    cfg.data.page_len = 5;
    cfg.clicker.kind = "gbdt";
    cfg.clicker.gbdt.iterations = 4;
    cfg.clicker.gbdt.depth = 2;
    cfg.clicker.gbdt.class_weight_positive = 1.0;
    cfg.sweep.gbdt_grid.iterations = {4};
    cfg.sweep.gbdt_grid.learning_rate = {0.3};
    cfg.sweep.gbdt_grid.depth = {2};
    cmd_grid_search(cfg);

    const auto best = nlohmann::json::parse(slurp(dir / "grid_search_best.json"));
    CHECK(best["best"]["iterations"] == 4);
    CHECK(best["selection_metric"] == "val_auc");

    // the 1-point grid must reproduce a direct training run
    const SplitDataset splits = load_splits(cfg);
    GbdtConfig direct;
    direct.iterations = 4;
    direct.learning_rate = 0.3;
    direct.depth = 2;
    direct.class_weight_positive = 1.0;
    direct.context_k = 0;
    direct.seed = derive_seed(cfg.seed, "clicker");
    const auto clicker = train_gbdt_clicker(splits.train, direct);
    std::vector<int> labels;
    std::vector<double> preds;
    for (const auto& page : splits.val.pages) {
        const auto pred = clicker->predict(page, Permutation::identity(page.size()));
        for (std::size_t j = 0; j < page.size(); ++j) {
            labels.push_back(page.items[j].click);
            preds.push_back(pred.probs[j]);
        }
    }
    CHECK(best["best_val_auc"].get<double>() == doctest::Approx(*auc(labels, preds)).epsilon(1e-12));
}

TEST_CASE("alpha sweep emits one row per clicker-alpha pair plus correlations") {
    const fs::path dir = fresh_dir("revrank_cli_sweep");
    ExperimentConfig cfg;
    cfg.seed = 100;
    cfg.out_dir = dir.string();
    cfg.data.n_pages = 20;
    cfg.data.page_len = 4;
    cfg.reranker.hidden = {8, 8, 8};
    cfg.reranker.epochs = 1;
    cfg.reranker.loss.threshold = 0.05;
    cfg.sweep.alphas = {0.0, 1.0};
    cfg.sweep.n_seeds = 1;

    CtrvClicker clicker(0.9);
    const std::string model_path = (dir / "clicker_ctrv.model").string();
    save_clicker(clicker, model_path);
    cmd_sweep_alpha(cfg, {model_path});

    const std::string rows = slurp(dir / "alpha_sweep.csv");
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 4);  // provenance + header + 2 rows
    const std::string corr = slurp(dir / "alpha_correlations.csv");
    CHECK(std::count(corr.begin(), corr.end(), '\n') == 3);  // provenance + header + 1 row
    CHECK(corr.find("ctrv,") != std::string::npos);
}

TEST_CASE("rerunning a command yields bit-identical non-timing outputs") {
    const fs::path dir_a = fresh_dir("revrank_cli_rep_a");
    const fs::path dir_b = fresh_dir("revrank_cli_rep_b");
    const fs::path cfg = dir_a / "config.json";
    write_config(cfg, dir_a, "gbdt");
    REQUIRE(run("train-clicker --config " + cfg.string()) == 0);
    REQUIRE(run("train-clicker --config " + cfg.string() + " --out " + dir_b.string()) == 0);
    CHECK(slurp(dir_a / "clicker_gbdt.model") == slurp(dir_b / "clicker_gbdt.model"));
}
