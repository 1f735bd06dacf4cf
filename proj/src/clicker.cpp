#include "revrank/clicker.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "revrank/gbdt.hpp"
#include "revrank/saint.hpp"

namespace revrank {

ClickPrediction Clicker::predict(const SearchPage& page, const Permutation& perm) const {
    if (perm.size() != page.size())
        throw ArgumentError("permutation of size " + std::to_string(perm.size()) +
                            " for page of " + std::to_string(page.size()) + " items");
    calls_.fetch_add(1, std::memory_order_relaxed);
    return ClickPrediction{predict_impl(page, perm), perm};
}

std::vector<ClickPrediction> Clicker::predict_batch(const SearchPage& page,
                                                    const std::vector<Permutation>& perms) const {
    for (const auto& p : perms)
        if (p.size() != page.size())
            throw ArgumentError("permutation size mismatch in batch prediction");
    calls_.fetch_add(perms.size(), std::memory_order_relaxed);
    auto probs = predict_batch_impl(page, perms);
    std::vector<ClickPrediction> out;
    out.reserve(perms.size());
    for (std::size_t i = 0; i < perms.size(); ++i)
        out.push_back(ClickPrediction{std::move(probs[i]), perms[i]});
    return out;
}

std::vector<std::vector<double>> Clicker::predict_batch_impl(
    const SearchPage& page, const std::vector<Permutation>& perms) const {
    std::vector<std::vector<double>> out;
    out.reserve(perms.size());
    for (const auto& perm : perms) out.push_back(predict_impl(page, perm));
    return out;
}

ClickPrediction ctrv_predict(const std::vector<double>& pointwise, double decay) {
    if (decay < 0.0 || decay > 1.0)
        throw ConfigError("decay factor " + std::to_string(decay) + " outside [0,1]");
    for (double p : pointwise)
        if (p < 0.0 || p > 1.0)
            throw ArgumentError("pointwise probability " + std::to_string(p) + " outside [0,1]");
    ClickPrediction pred;
    pred.perm = Permutation::identity(pointwise.size());
    pred.probs.resize(pointwise.size());
    double factor = 1.0;
    for (std::size_t j = 0; j < pointwise.size(); ++j) {
        pred.probs[j] = pointwise[j] * factor;
        factor *= decay;
    }
    return pred;
}

ClickVector threshold_clicks(const ClickPrediction& prediction, double h) {
    if (h <= 0.0) throw ConfigError("click threshold must be > 0, got " + std::to_string(h));
    ClickVector cv;
    cv.threshold = h;
    cv.clicks.resize(prediction.probs.size());
    for (std::size_t i = 0; i < prediction.probs.size(); ++i)
        cv.clicks[i] = prediction.probs[i] >= h ? 1 : 0;
    return cv;
}

double expected_page_revenue(const std::vector<double>& probs, const std::vector<double>& bids,
                             RevenueMode mode, double h) {
    if (probs.size() != bids.size())
        throw ShapeError("revenue: " + std::to_string(probs.size()) + " probabilities vs " +
                         std::to_string(bids.size()) + " bids");
    for (double b : bids)
        if (b < 0.0) throw IntegrityError("negative bid " + std::to_string(b));
    double total = 0.0;
    if (mode == RevenueMode::Soft) {
        for (std::size_t i = 0; i < probs.size(); ++i) total += probs[i] * bids[i];
    } else {
        if (h <= 0.0) throw ConfigError("thresholded revenue needs h > 0");
        for (std::size_t i = 0; i < probs.size(); ++i)
            if (probs[i] >= h) total += bids[i];
    }
    return total;
}

std::vector<double> page_bids(const SearchPage& page, const Permutation* perm) {
    std::vector<double> bids(page.size());
    for (std::size_t slot = 0; slot < page.size(); ++slot)
        bids[slot] = page.items[perm ? perm->item_at(slot) : slot].bid;
    return bids;
}

CtrvClicker::CtrvClicker(double decay) : decay_(decay) {
    if (decay < 0.0 || decay > 1.0)
        throw ConfigError("decay factor " + std::to_string(decay) + " outside [0,1]");
}

std::vector<double> CtrvClicker::predict_impl(const SearchPage& page,
                                              const Permutation& perm) const {
    const FeatureSchema schema = FeatureSchema::standard();
    const int ctr_idx = schema.cont_index("ctr_pred");
    std::vector<double> probs(page.size());
    double factor = 1.0;
    for (std::size_t slot = 0; slot < page.size(); ++slot) {
        probs[slot] = page.items[perm.item_at(slot)].cont[ctr_idx] * factor;
        factor *= decay_;
    }
    return probs;
}

void CtrvClicker::save(std::ostream& os) const {
    os << "revrank-clicker ctrv v1\n";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", decay_);
    os << "decay " << buf << "\n";
}

std::unique_ptr<CtrvClicker> CtrvClicker::load(std::istream& is) {
    std::string kw, value;
    is >> kw >> value;
    if (kw != "decay") throw ParseError("bad ctrv model file");
    return std::make_unique<CtrvClicker>(std::strtod(value.c_str(), nullptr));
}

void save_clicker(const Clicker& clicker, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    clicker.save(out);
}

std::unique_ptr<Clicker> load_clicker(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string magic, kind, version;
    in >> magic >> kind >> version;
    if (magic != "revrank-clicker" || version != "v1")
        throw ParseError("not a clicker model file: " + path);
    if (kind == "ctrv") return CtrvClicker::load(in);
    if (kind == "gbdt" || kind == "gbdt_c") return GbdtClicker::load(in);
    if (kind == "saint_s" || kind == "saint_q") return SaintClicker::load(in);
    throw ParseError("unknown clicker kind: " + kind);
}

}  // namespace revrank
