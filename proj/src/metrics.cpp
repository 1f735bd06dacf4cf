#include "revrank/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace revrank {

RelevanceProfile::RelevanceProfile(double P, std::size_t n) : decay(P) {
    if (P < 0.0 || P > 1.0)
        throw ConfigError("decay factor " + std::to_string(P) + " outside [0,1]");
    v.resize(n);
    double x = 1.0;
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        v[j] = x;
        total += x;
        x *= P;
    }
    v_norm.resize(n);
    for (std::size_t j = 0; j < n; ++j) v_norm[j] = v[j] / total;
}

std::optional<double> auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size())
        throw ShapeError("auc: " + std::to_string(labels.size()) + " labels vs " +
                         std::to_string(scores.size()) + " scores");
    const std::size_t n = labels.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += y > 0 ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    // average rank of positives (ties share the mean rank)
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] > 0) rank_sum_pos += mean_rank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

GaucResult gauc(const std::vector<std::vector<int>>& labels_per_page,
                const std::vector<std::vector<double>>& preds_per_page) {
    if (labels_per_page.size() != preds_per_page.size())
        throw ShapeError("gauc: page count mismatch");
    GaucResult res;
    double total = 0.0;
    for (std::size_t p = 0; p < labels_per_page.size(); ++p) {
        const auto a = auc(labels_per_page[p], preds_per_page[p]);
        if (a.has_value()) {
            total += *a;
            ++res.used;
        } else {
            ++res.skipped;
        }
    }
    if (res.used > 0) res.value = total / static_cast<double>(res.used);
    return res;
}

double difference(const Permutation& perm, double P) {
    if (P <= 0.0 || P >= 1.0)
        throw ConfigError("degenerate relevance profile: decay " + std::to_string(P) +
                          " must be inside (0,1)");
    const RelevanceProfile profile(P, perm.size());
    double kl = 0.0;
    for (std::size_t slot = 0; slot < perm.size(); ++slot) {
        const double reordered = profile.v_norm[perm.item_at(slot)];
        kl += reordered * std::log(reordered / profile.v_norm[slot]);
    }
    return kl;
}

double difference(const std::vector<Permutation>& perms, double P) {
    if (perms.empty()) throw ArgumentError("difference over zero queries");
    double total = 0.0;
    for (const auto& perm : perms) total += difference(perm, P);
    return total / static_cast<double>(perms.size());
}

double ndcg(const Permutation& perm, double P) {
    if (P <= 0.0 || P >= 1.0)
        throw ConfigError("degenerate relevance profile: decay " + std::to_string(P) +
                          " must be inside (0,1)");
    const RelevanceProfile profile(P, perm.size());
    double dcg = 0.0, ideal = 0.0;
    for (std::size_t slot = 0; slot < perm.size(); ++slot) {
        const double discount = 1.0 / std::log2(static_cast<double>(slot) + 2.0);
        dcg += profile.v[perm.item_at(slot)] * discount;  // gain: original-position relevance
        ideal += profile.v[slot] * discount;
    }
    return dcg / ideal;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw ShapeError("pearson: series lengths " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
    const std::size_t n = x.size();
    if (n < 2) throw ArgumentError("pearson needs at least 2 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

DeltaRevenueResult delta_revenue(const Clicker& clicker,
                                 const std::function<Permutation(const SearchPage&)>& rerank,
                                 const std::vector<SearchPage>& pages, double h) {
    if (h <= 0.0) throw ConfigError("delta revenue needs click threshold h > 0");
    DeltaRevenueResult res;
    double total = 0.0;
    for (const auto& page : pages) {
        const Permutation identity = Permutation::identity(page.size());
        const ClickPrediction base = clicker.predict(page, identity);
        const double original =
            expected_page_revenue(base.probs, page_bids(page), RevenueMode::Thresholded, h);
        if (original <= 0.0) {
            ++res.excluded;
            continue;
        }
        const Permutation reranked = rerank(page);
        const ClickPrediction moved = clicker.predict(page, reranked);
        const std::vector<double> bids = page_bids(page, &reranked);
        const double adjusted = expected_page_revenue(moved.probs, bids, RevenueMode::Thresholded, h);
        total += adjusted / original;
        ++res.used;
    }
    if (res.used > 0) res.value = total / static_cast<double>(res.used);
    return res;
}

}  // namespace revrank
