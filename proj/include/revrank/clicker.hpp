#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "revrank/data.hpp"
#include "revrank/permutation.hpp"

namespace revrank {

struct ClickPrediction {
    std::vector<double> probs;  // per display slot, in [0,1]
    Permutation perm;           // ordering the prediction was computed under
};

struct ClickVector {
    std::vector<std::uint8_t> clicks;  // c_j = 1 iff p_j >= threshold
    double threshold = 0.0;
};

enum class RevenueMode { Thresholded, Soft };

// Click model capability. Predictions take an explicit permutation so that
// contextual models recompute neighbor effects after reordering; pointwise
// models provably ignore it beyond the position feature. Trained clickers are
// immutable and predict is safe to call concurrently; the call counter is the
// only mutable state and exists so tests can assert the inference path stays
// clicker-free.
class Clicker {
public:
    virtual ~Clicker() = default;

    virtual std::string kind() const = 0;

    ClickPrediction predict(const SearchPage& page, const Permutation& perm) const;

    // One prediction per permutation of the same page. Batched models override
    // the implementation hook to evaluate all permutations in one pass.
    std::vector<ClickPrediction> predict_batch(const SearchPage& page,
                                               const std::vector<Permutation>& perms) const;

    virtual void save(std::ostream& os) const = 0;

    std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
    void reset_calls() const { calls_.store(0, std::memory_order_relaxed); }

protected:
    virtual std::vector<double> predict_impl(const SearchPage& page,
                                             const Permutation& perm) const = 0;
    virtual std::vector<std::vector<double>> predict_batch_impl(
        const SearchPage& page, const std::vector<Permutation>& perms) const;

private:
    mutable std::atomic<std::uint64_t> calls_{0};
};

// p_j = pointwise_j * decay^(j-1) for 1-based slot j.
ClickPrediction ctrv_predict(const std::vector<double>& pointwise, double decay);

// Exact indicator semantics; p == h maps to a click. Requires h > 0.
ClickVector threshold_clicks(const ClickPrediction& prediction, double h);

// Soft: sum p_i * r_i. Thresholded: apply h first, then sum c_i * r_i.
double expected_page_revenue(const std::vector<double>& probs, const std::vector<double>& bids,
                             RevenueMode mode, double h = 0.0);

// Bids of the displayed items in slot order (identity when perm is null).
std::vector<double> page_bids(const SearchPage& page, const Permutation* perm = nullptr);

// Pointwise baseline: production's per-item CTR estimate times a positional
// decay factor.
class CtrvClicker : public Clicker {
public:
    explicit CtrvClicker(double decay);

    std::string kind() const override { return "ctrv"; }
    void save(std::ostream& os) const override;
    static std::unique_ptr<CtrvClicker> load(std::istream& is);

    double decay() const { return decay_; }

protected:
    std::vector<double> predict_impl(const SearchPage& page,
                                     const Permutation& perm) const override;

private:
    double decay_;
};

// Polymorphic model file IO; files carry a kind tag in the header line.
void save_clicker(const Clicker& clicker, const std::string& path);
std::unique_ptr<Clicker> load_clicker(const std::string& path);

}  // namespace revrank
