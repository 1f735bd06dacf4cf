#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "revrank/clicker.hpp"
#include "revrank/data.hpp"
#include "revrank/nn.hpp"

namespace revrank {

// Tabular transformer clicker. Variant S self-attends over the feature tokens
// of each item; variant Q additionally applies intersample attention chunked
// to the items of one page, so large batches mix queries without leaking
// context across them.
struct SaintConfig {
    std::size_t d_model = 128;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    double attention_dropout = 0.79;
    double mlp_dropout = 0.77;
    bool label_smoothing = true;
    double smoothing_eps = 0.1;
    std::size_t head_hidden = 16;
    double learning_rate = 1e-4;
    bool intersample = true;  // true: variant Q, false: variant S
    std::size_t page_len = 30;
    std::size_t ff_mult = 2;  // feed-forward width multiplier

    // training schedule
    std::size_t pages_per_batch = 4;
    std::size_t max_steps = 1000;
    std::size_t eval_every = 100;
    std::uint64_t seed = 100;

    void validate() const;
    std::string variant_name() const { return intersample ? "saint_q" : "saint_s"; }
};

struct TrainRecord {
    std::size_t step = 0;
    double train_loss = 0.0;
    double val_auc = 0.0;
    double val_gauc = 0.0;
};

class SaintModel {
public:
    // Layout and normalization statistics come from the training matrix.
    SaintModel(SaintConfig config, const FeatureMatrix& layout_source, std::uint64_t init_seed);

    const SaintConfig& config() const { return config_; }
    num::ParamStore& params() { return params_; }
    const num::ParamStore& params() const { return params_; }

    // Per-item logits [rows, 2]. Training mode applies dropout from rng.
    num::Var forward(const FeatureMatrix& batch, bool training, Rng* dropout_rng) const;
    num::Var loss_on(const FeatureMatrix& batch, bool training, Rng* dropout_rng) const;

    // Eval-mode click probabilities, batched in page-aligned chunks.
    std::vector<double> predict_probs(const FeatureMatrix& batch) const;

    void save(std::ostream& os) const;
    static SaintModel load(std::istream& is);

private:
    void build_params(std::uint64_t init_seed);
    num::Var tokenize(const FeatureMatrix& batch) const;

    SaintConfig config_;
    std::vector<FeatureColumn> columns_;
    std::vector<std::int64_t> cat_max_code_;  // per column; token beyond it = unknown row
    std::vector<double> cont_mean_, cont_sd_;
    num::ParamStore params_;

    struct LayerRefs {
        num::Linear sa_q, sa_k, sa_v, sa_o;
        num::LayerNorm ln_sa;
        num::Linear is_q, is_k, is_v, is_o;
        num::LayerNorm ln_is;
        num::Linear ff1, ff2;
        num::LayerNorm ln_ff;
    };
    std::vector<LayerRefs> layers_;
    std::vector<num::Var> embed_tables_;  // per column: categorical table or affine [2, d]
    num::Var cls_;
    num::Linear head1_, head2_;
};

class SaintClicker : public Clicker {
public:
    SaintClicker(SaintModel model, FeatureSchema schema, std::vector<std::string> features);

    std::string kind() const override { return model_.config().variant_name(); }
    void save(std::ostream& os) const override;
    static std::unique_ptr<SaintClicker> load(std::istream& is);

    const SaintModel& model() const { return model_; }

protected:
    std::vector<double> predict_impl(const SearchPage& page,
                                     const Permutation& perm) const override;
    std::vector<std::vector<double>> predict_batch_impl(
        const SearchPage& page, const std::vector<Permutation>& perms) const override;

private:
    SaintModel model_;
    FeatureSchema schema_;
    std::vector<std::string> features_;
};

struct SaintTrainResult {
    std::unique_ptr<SaintClicker> clicker;
    std::vector<TrainRecord> history;
};

// Minibatch Adam over whole-page batches; model selection by validation GAUC.
SaintTrainResult train_saint_clicker(const Dataset& train, const Dataset& val,
                                     const SaintConfig& config);

struct BatchBenchRow {
    std::size_t pages_per_batch = 0;
    double ms_per_page = 0.0;
};

// Median per-page inference latency for each batch size, warmup excluded.
std::vector<BatchBenchRow> bench_chunk_batching(const SaintClicker& clicker,
                                                const Dataset& test,
                                                const std::vector<std::size_t>& b_values,
                                                int repetitions = 30);

}  // namespace revrank
