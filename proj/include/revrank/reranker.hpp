#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "revrank/clicker.hpp"
#include "revrank/data.hpp"
#include "revrank/nn.hpp"
#include "revrank/permutation.hpp"

namespace revrank {

// r_reg = r_organic + alpha * r. alpha = 1 with zero organic reward trains a
// purely revenue-seeking reranker; alpha = 0 rewards every click equally.
struct RevenueRegularization {
    double alpha = 1.0;
    double r_organic = 0.0;

    void validate() const;
    double apply(double bid) const { return r_organic + alpha * bid; }
};

struct LossConfig {
    double sigma = 1.0;                             // scale inside the logistic term
    long budget = -1;                               // -1: all transpositions; m > 0: sample m
    RevenueMode revenue_mode = RevenueMode::Soft;   // revenue estimate used in the loss
    double threshold = 0.18;                        // h for thresholded mode and evaluation

    void validate() const;
};

struct RerankerConfig {
    std::vector<std::size_t> hidden = {220, 100, 62};
    double learning_rate = 0.01;
    double lr_decay = 1.0;  // per-epoch multiplier; the pair weights move with
                            // the ranking, so annealing settles the search
    std::size_t epochs = 3;
    RevenueRegularization reg;
    LossConfig loss;
    double decay = 0.9;  // P for validation Difference/NDCG
    std::uint64_t seed = 100;
};

// Tuned layer sizes, organic reward and click threshold per clicker kind.
RerankerConfig reranker_defaults_for(const std::string& clicker_kind);

// Stable descending sort; ties keep the lower original position first.
Permutation scores_to_permutation(const std::vector<double>& scores);

struct TrialTransposition {
    std::size_t slot_a = 0;  // upper display slot in the current ranking
    std::size_t slot_b = 0;  // lower display slot
    Permutation perm;        // current ranking with the two slots exchanged
};

// All N(N-1)/2 single transpositions of pi, or a seeded sample of m of them.
std::vector<TrialTransposition> trial_permutations(const Permutation& pi, long budget,
                                                   std::uint64_t seed = 0);

// Expected regularized page revenue under the frozen clicker for one ordering.
double page_revenue_abs(const Clicker& clicker, const SearchPage& page, const Permutation& perm,
                        const RevenueRegularization& reg, RevenueMode mode, double h);

double delta_revenue_abs(const Clicker& clicker, const SearchPage& page, const Permutation& pi,
                         const Permutation& pi_prime, const RevenueRegularization& reg,
                         RevenueMode mode, double h);

// Pairwise transposition loss: each trial swap that would raise the clicker's
// revenue estimate weights a logistic penalty on the score margin between the
// item it would promote and the item above it. Gradient flows only through
// the scores.
struct TranspositionLossValue {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d score, indexed like scores
};

TranspositionLossValue transposition_loss(const std::vector<double>& scores, const Permutation& pi,
                                          const std::vector<TrialTransposition>& trials,
                                          const std::vector<double>& deltas, double sigma);

// Graph form for training; scores is a [N] variable.
num::Var transposition_loss_node(const num::Var& scores, const Permutation& pi,
                                 const std::vector<TrialTransposition>& trials,
                                 const std::vector<double>& deltas, double sigma);

// Three-hidden-layer MLP scorer with batch norm after each hidden layer.
// Inputs are the per-item ranking features with the page-local price min-max
// and the regularized bid baked in, so inference needs no clicker and no
// extra context.
class RerankerModel {
public:
    RerankerModel(std::vector<std::size_t> hidden, RevenueRegularization reg, std::uint64_t seed);

    static const std::vector<std::string>& feature_names();  // 11 inputs

    num::Var score_graph(const SearchPage& page, bool training);
    std::vector<double> score(const SearchPage& page) const;
    Permutation rerank(const SearchPage& page) const;

    const RevenueRegularization& regularization() const { return reg_; }
    const std::vector<std::size_t>& hidden_sizes() const { return hidden_; }
    num::ParamStore& params() { return params_; }
    const num::ParamStore& params() const { return params_; }

    void save(std::ostream& os) const;
    static RerankerModel load(std::istream& is);

private:
    num::Tensor features_for(const SearchPage& page) const;

    std::vector<std::size_t> hidden_;
    RevenueRegularization reg_;
    num::ParamStore params_;
    std::vector<num::Linear> linears_;
    std::vector<num::BatchNorm1d> norms_;
    num::Linear out_;
};

struct RerankerEpochRecord {
    std::size_t step = 0;  // cumulative page updates at epoch end
    double mean_loss = 0.0;
    double val_delta_revenue = 0.0;
    double val_difference = 0.0;
    double val_ndcg = 0.0;
};

struct RerankerTrainResult {
    std::unique_ptr<RerankerModel> model;
    std::vector<RerankerEpochRecord> history;
};

// One Adam update per page per step against the frozen clicker (the clicker
// is const here and never mutated). Deterministic under config.seed.
RerankerTrainResult train_reranker(const Clicker& clicker, const Dataset& train,
                                   const Dataset& val, const RerankerConfig& config);

}  // namespace revrank
