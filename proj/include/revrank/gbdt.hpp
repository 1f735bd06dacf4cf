#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "revrank/clicker.hpp"
#include "revrank/data.hpp"

namespace revrank {

struct GbdtConfig {
    int iterations = 200;
    double learning_rate = 0.05;
    int depth = 5;
    double class_weight_negative = 1.0;
    double class_weight_positive = 11.0;
    int context_k = 0;  // 0 = per-item features; >0 trains on the expanded window
    int min_samples_leaf = 1;
    double encoder_smoothing = 100.0;  // weight toward the prior in target statistics
    std::uint64_t seed = 100;

    static GbdtConfig plain_defaults() { return GbdtConfig{}; }
    static GbdtConfig context_defaults() {
        GbdtConfig c;
        c.iterations = 1000;
        c.learning_rate = 0.01;
        c.depth = 4;
        c.context_k = 5;
        return c;
    }
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    bool missing_left = true;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf log-odds contribution
};

struct Tree {
    std::vector<TreeNode> nodes;
    double predict_row(const std::vector<std::vector<double>>& cols, std::size_t row) const;
};

// Smoothed mean-target statistics for one categorical column, fitted on the
// training fold. Unseen categories fall back to the prior; the missing cell
// ("nan" category) has its own bucket when training contained one.
struct CategoryEncoder {
    std::unordered_map<std::int64_t, double> stats;
    double prior = 0.0;
    bool has_missing_bucket = false;
    double missing_value = 0.0;

    double encode(double raw) const;
};

class GbdtModel {
public:
    std::vector<FeatureColumn> columns;  // training layout (expanded when context_k > 0)
    std::vector<std::optional<CategoryEncoder>> encoders;  // per column, categorical only
    std::vector<Tree> trees;
    double base_score = 0.0;
    double learning_rate = 0.0;
    int context_k = 0;
    std::vector<double> train_loss;  // weighted logloss after each boosting round

    // features must match the training layout (same width and names).
    std::vector<double> predict_proba(const FeatureMatrix& features) const;

    void save(std::ostream& os) const;
    static GbdtModel load(std::istream& is);

private:
    std::vector<std::vector<double>> encode_columns(const FeatureMatrix& features) const;
};

// Boosted trees on weighted logloss. Each round fits a depth-limited
// regression tree to the weighted negative gradients; splits greedily
// maximize weighted variance reduction over exact sorted thresholds.
GbdtModel gbdt_fit(const FeatureMatrix& train, const GbdtConfig& config);

// Clicker wrapper: extracts the configured item features for the rendered
// page (expanding the neighbor window for context_k > 0) and applies the
// boosted model.
class GbdtClicker : public Clicker {
public:
    GbdtClicker(GbdtModel model, FeatureSchema schema, std::vector<std::string> features);

    std::string kind() const override { return model_.context_k > 0 ? "gbdt_c" : "gbdt"; }
    void save(std::ostream& os) const override;
    static std::unique_ptr<GbdtClicker> load(std::istream& is);

    const GbdtModel& model() const { return model_; }

protected:
    std::vector<double> predict_impl(const SearchPage& page,
                                     const Permutation& perm) const override;
    std::vector<std::vector<double>> predict_batch_impl(
        const SearchPage& page, const std::vector<Permutation>& perms) const override;

private:
    GbdtModel model_;
    FeatureSchema schema_;
    std::vector<std::string> features_;
};

// Fits on the train split with the window from config.context_k.
std::unique_ptr<GbdtClicker> train_gbdt_clicker(const Dataset& train, const GbdtConfig& config);

struct KSweepRow {
    int k = 0;
    std::optional<double> auc;
    std::optional<double> gauc;
    double inference_ms_per_page = 0.0;
};

// One context-window fit per k, evaluated on the validation split.
std::vector<KSweepRow> sweep_k(const Dataset& train, const Dataset& val,
                               const std::vector<int>& k_values, GbdtConfig base_config);

}  // namespace revrank
