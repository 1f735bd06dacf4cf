#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "revrank/clicker.hpp"
#include "revrank/data.hpp"
#include "revrank/permutation.hpp"

namespace revrank {

// Position-decay relevance: v_j = P^(j-1), plus the normalized copy used by
// KL-based comparisons.
struct RelevanceProfile {
    double decay = 0.0;
    std::vector<double> v;
    std::vector<double> v_norm;

    RelevanceProfile(double P, std::size_t n);
};

// Probability that a random positive outranks a random negative; ties count
// one half. Empty when only one class is present.
std::optional<double> auc(const std::vector<int>& labels, const std::vector<double>& scores);

struct GaucResult {
    std::optional<double> value;
    std::size_t used = 0;
    std::size_t skipped = 0;  // single-class pages
};

GaucResult gauc(const std::vector<std::vector<int>>& labels_per_page,
                const std::vector<std::vector<double>>& preds_per_page);

// KL divergence between the decayed relevance profile reordered by the
// permutation and the original profile. Natural log; reported in nats.
double difference(const Permutation& perm, double P);
double difference(const std::vector<Permutation>& perms, double P);  // mean over queries

// Gains are the decayed relevance of each item's original position; discount
// log2(slot+1); normalized by the original order's DCG.
double ndcg(const Permutation& perm, double P);

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

struct DeltaRevenueResult {
    std::optional<double> value;  // mean over included pages of reranked/original revenue
    std::size_t used = 0;
    std::size_t excluded = 0;  // pages with zero original revenue
};

// Revenue ratio under the clicker's thresholded clicks at h, raw bids on both
// sides regardless of any training-time bid regularization.
DeltaRevenueResult delta_revenue(const Clicker& clicker,
                                 const std::function<Permutation(const SearchPage&)>& rerank,
                                 const std::vector<SearchPage>& pages, double h);

struct QueryMetricsRow {
    std::int64_t qid = 0;
    std::optional<double> auc;
    std::optional<double> revenue_ratio;
    std::optional<double> difference;
    std::optional<double> ndcg;
};

struct MetricReport {
    std::optional<double> auc;
    std::optional<double> gauc;
    std::size_t gauc_skipped = 0;
    std::optional<double> delta_revenue;
    std::size_t delta_revenue_excluded = 0;
    std::optional<double> difference;
    std::optional<double> ndcg;
    std::vector<QueryMetricsRow> per_query;
    // config echo so every report is interpretable on its own
    double decay = 0.0;
    double threshold = 0.0;
    double alpha = 0.0;
    double r_organic = 0.0;
    std::uint64_t seed = 0;
};

}  // namespace revrank
