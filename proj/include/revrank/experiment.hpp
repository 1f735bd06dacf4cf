#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "revrank/clicker.hpp"
#include "revrank/data.hpp"
#include "revrank/gbdt.hpp"
#include "revrank/reranker.hpp"
#include "revrank/saint.hpp"

namespace revrank {

struct DataConfig {
    std::string source = "synthetic";  // synthetic | csv
    std::string csv_path;
    std::size_t n_pages = 2000;
    std::size_t page_len = 30;
    double context_strength = 1.0;
    std::array<double, 3> ratios = {0.65, 0.2, 0.15};
};

struct ClickerConfig {
    std::string kind = "gbdt";  // ctrv | gbdt | gbdt_c | saint_s | saint_q
    double ctrv_decay = 0.9;
    GbdtConfig gbdt = GbdtConfig::plain_defaults();
    GbdtConfig gbdt_c = GbdtConfig::context_defaults();
    SaintConfig saint;
};

struct GbdtGrid {
    std::vector<int> iterations = {150, 200, 500};
    std::vector<double> learning_rate = {0.01, 0.03, 0.05, 0.1};
    std::vector<int> depth = {4, 5, 6};
};

struct SweepConfig {
    std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::size_t n_seeds = 5;
    std::vector<int> k_values = {0, 1, 3, 5};
    std::vector<std::size_t> b_values = {1, 5, 10, 15, 16, 20};
    GbdtGrid gbdt_grid;
};

struct ExperimentConfig {
    std::uint64_t seed = 100;
    std::string out_dir = "out";
    DataConfig data;
    ClickerConfig clicker;
    RerankerConfig reranker;
    double metric_decay = 0.9;
    SweepConfig sweep;

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::json to_json() const;  // fully resolved echo
};

std::string config_hash(const nlohmann::json& resolved);
std::string provenance_line(const ExperimentConfig& cfg);  // "# revrank config_hash=... seed=..."

struct SplitDataset {
    Dataset train, val, test;
};

Dataset materialize_dataset(const ExperimentConfig& cfg);
SplitDataset load_splits(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// commands (each writes its artifacts under cfg.out_dir)
// ---------------------------------------------------------------------------

void cmd_gen_data(const ExperimentConfig& cfg);
void cmd_train_clicker(const ExperimentConfig& cfg);
void cmd_eval_clicker(const ExperimentConfig& cfg, const std::string& model_path);
void cmd_train_reranker(const ExperimentConfig& cfg, const std::string& clicker_path);
void cmd_eval_reranker(const ExperimentConfig& cfg, const std::string& clicker_path,
                       const std::string& reranker_path, bool identity_stub);
void cmd_sweep_alpha(const ExperimentConfig& cfg, const std::vector<std::string>& clicker_paths);
void cmd_sweep_k(const ExperimentConfig& cfg);
void cmd_bench_attention(const ExperimentConfig& cfg, const std::string& clicker_path);
void cmd_grid_search(const ExperimentConfig& cfg);

// helpers shared with tests
std::unique_ptr<Clicker> train_clicker_for(const ExperimentConfig& cfg, const SplitDataset& splits,
                                           std::vector<TrainRecord>* saint_history = nullptr);
std::string fmt_num(double v);

}  // namespace revrank
