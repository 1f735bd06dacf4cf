#include "revrank/reranker.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "revrank/metrics.hpp"
#include "revrank/rng.hpp"

namespace revrank {

using num::Var;

void RevenueRegularization::validate() const {
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("alpha " + std::to_string(alpha) + " outside [0,1]");
    if (r_organic < 0.0) throw ConfigError("organic reward must be >= 0");
}

void LossConfig::validate() const {
    if (sigma <= 0.0) throw ConfigError("sigma must be > 0, got " + std::to_string(sigma));
    if (budget == 0 || budget < -1) throw ConfigError("transposition budget must be -1 (all) or >= 1");
    if (revenue_mode == RevenueMode::Thresholded && threshold <= 0.0)
        throw ConfigError("thresholded revenue needs h > 0");
}

RerankerConfig reranker_defaults_for(const std::string& clicker_kind) {
    RerankerConfig cfg;
    if (clicker_kind == "ctrv") {
        cfg.hidden = {640, 146, 53};
        cfg.reg.r_organic = 10.0;
        cfg.loss.threshold = 0.18;
    } else if (clicker_kind == "gbdt") {
        cfg.hidden = {315, 122, 48};
        cfg.reg.r_organic = 50.0;
        cfg.loss.threshold = 0.18;
    } else if (clicker_kind == "gbdt_c") {
        cfg.hidden = {220, 100, 62};
        cfg.reg.r_organic = 15.0;
        cfg.loss.threshold = 0.18;
    } else if (clicker_kind == "saint_q" || clicker_kind == "saint_s") {
        cfg.hidden = {1024, 512, 128};
        cfg.reg.r_organic = 50.0;
        cfg.loss.threshold = 0.22;
    } else {
        throw ConfigError("no reranker defaults for clicker kind: " + clicker_kind);
    }
    return cfg;
}

Permutation scores_to_permutation(const std::vector<double>& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];  // stable: ties keep lower original position first
    });
    return Permutation(std::move(order));
}

std::vector<TrialTransposition> trial_permutations(const Permutation& pi, long budget,
                                                   std::uint64_t seed) {
    const std::size_t n = pi.size();
    const std::size_t all = n * (n - 1) / 2;
    if (budget == 0 || budget < -1 || (budget > 0 && static_cast<std::size_t>(budget) > all))
        throw ArgumentError("transposition budget " + std::to_string(budget) +
                            " outside 1.." + std::to_string(all));

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(all);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) pairs.emplace_back(a, b);

    if (budget > 0 && static_cast<std::size_t>(budget) < all) {
        Rng rng(derive_seed(seed, "trial-sample"));
        const auto chosen = rng.sample_without_replacement(all, static_cast<std::size_t>(budget));
        std::vector<std::pair<std::size_t, std::size_t>> subset;
        subset.reserve(chosen.size());
        for (std::size_t idx : chosen) subset.push_back(pairs[idx]);
        std::sort(subset.begin(), subset.end());
        pairs = std::move(subset);
    }

    std::vector<TrialTransposition> trials;
    trials.reserve(pairs.size());
    for (const auto& [a, b] : pairs) trials.push_back(TrialTransposition{a, b, pi.swapped(a, b)});
    return trials;
}

double page_revenue_abs(const Clicker& clicker, const SearchPage& page, const Permutation& perm,
                        const RevenueRegularization& reg, RevenueMode mode, double h) {
    const ClickPrediction pred = clicker.predict(page, perm);
    std::vector<double> reg_bids(page.size());
    for (std::size_t slot = 0; slot < page.size(); ++slot)
        reg_bids[slot] = reg.apply(page.items[perm.item_at(slot)].bid);
    return expected_page_revenue(pred.probs, reg_bids, mode, h);
}

double delta_revenue_abs(const Clicker& clicker, const SearchPage& page, const Permutation& pi,
                         const Permutation& pi_prime, const RevenueRegularization& reg,
                         RevenueMode mode, double h) {
    return page_revenue_abs(clicker, page, pi_prime, reg, mode, h) -
           page_revenue_abs(clicker, page, pi, reg, mode, h);
}

namespace {
// log(1 + exp(x)) without overflow
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

TranspositionLossValue transposition_loss(const std::vector<double>& scores, const Permutation& pi,
                                          const std::vector<TrialTransposition>& trials,
                                          const std::vector<double>& deltas, double sigma) {
    if (sigma <= 0.0) throw ConfigError("sigma must be > 0, got " + std::to_string(sigma));
    if (trials.size() != deltas.size())
        throw ArgumentError("trials and revenue deltas are misaligned: " +
                            std::to_string(trials.size()) + " vs " + std::to_string(deltas.size()));
    if (scores.size() != pi.size()) throw ShapeError("scores do not match permutation length");

    TranspositionLossValue out;
    out.grad.assign(scores.size(), 0.0);
    for (std::size_t t = 0; t < trials.size(); ++t) {
        const double weight = std::max(deltas[t], 0.0);  // only revenue-improving swaps penalize
        if (weight == 0.0) continue;
        const std::size_t promoted = pi.item_at(trials[t].slot_b);  // item the swap moves up
        const std::size_t demoted = pi.item_at(trials[t].slot_a);
        const double margin = scores[promoted] - scores[demoted];
        out.loss += weight * softplus(-sigma * margin);
        const double d = -weight * sigma * logistic(-sigma * margin);
        out.grad[promoted] += d;
        out.grad[demoted] -= d;
    }
    return out;
}

num::Var transposition_loss_node(const num::Var& scores, const Permutation& pi,
                                 const std::vector<TrialTransposition>& trials,
                                 const std::vector<double>& deltas, double sigma) {
    std::vector<double> values(scores.value().values());
    TranspositionLossValue v = transposition_loss(values, pi, trials, deltas, sigma);
    num::Tensor grad({values.size()}, std::move(v.grad));
    return num::make_node(num::Tensor::scalar(v.loss), {scores},
                          [grad = std::move(grad)](num::Node& n) {
                              num::Node& p = *n.parents[0];
                              const double g = n.grad[0];
                              for (std::size_t i = 0; i < grad.numel(); ++i)
                                  p.grad[i] += g * grad[i];
                          });
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

const std::vector<std::string>& RerankerModel::feature_names() {
    static const std::vector<std::string> names = {
        "with_delivery", "price",     "rel_pred",
        "ctr_pred",      "cr_pred",   "is_auction_winner",
        "pos_fixed",     "click_bid", "category_coincidence",
        "subcategory_coincidence",    "platform"};
    return names;
}

RerankerModel::RerankerModel(std::vector<std::size_t> hidden, RevenueRegularization reg,
                             std::uint64_t seed)
    : hidden_(std::move(hidden)), reg_(reg) {
    reg_.validate();
    if (hidden_.size() != 3) throw ConfigError("reranker expects three hidden layer sizes");
    Rng rng(derive_seed(seed, "reranker-init"));
    std::size_t in = feature_names().size();
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
        linears_.emplace_back(params_, "mlp." + std::to_string(i), in, hidden_[i], rng);
        norms_.emplace_back(params_, "bn." + std::to_string(i), hidden_[i]);
        in = hidden_[i];
    }
    out_ = num::Linear(params_, "mlp.out", in, 1, rng);
    // zero output layer: the fresh scorer ties every item, so the tie rule
    // starts training from the incoming order instead of a random shuffle
    for (double& v : out_.w.mutable_value().values()) v = 0.0;
}

num::Tensor RerankerModel::features_for(const SearchPage& page) const {
    const FeatureSchema schema = FeatureSchema::standard();
    const int rel = schema.cont_index("rel_pred");
    const int ctr = schema.cont_index("ctr_pred");
    const int cr = schema.cont_index("cr_pred");
    const int price = schema.cont_index("price");
    const int delivery = schema.cat_index("with_delivery");
    const int winner = schema.cat_index("is_auction_winner");
    const int cat_co = schema.cat_index("category_coincidence");
    const int sub_co = schema.cat_index("subcategory_coincidence");
    const int platform = schema.cat_index("platform");

    const std::size_t n = page.size();
    double price_min = page.items[0].cont[price], price_max = price_min;
    for (const auto& it : page.items) {
        price_min = std::min(price_min, it.cont[price]);
        price_max = std::max(price_max, it.cont[price]);
    }
    const double price_span = price_max - price_min;

    num::Tensor x({n, feature_names().size()});
    for (std::size_t j = 0; j < n; ++j) {
        const ItemRecord& it = page.items[j];
        double* row = x.data() + j * feature_names().size();
        row[0] = static_cast<double>(it.cat[delivery]);
        row[1] = price_span > 0.0 ? (it.cont[price] - price_min) / price_span : 0.0;
        row[2] = it.cont[rel];
        row[3] = it.cont[ctr];
        row[4] = it.cont[cr];
        row[5] = static_cast<double>(it.cat[winner]);
        row[6] = static_cast<double>(it.position) / static_cast<double>(n);
        row[7] = reg_.apply(it.bid) / 100.0;  // bids live on a 1..100 scale
        row[8] = static_cast<double>(it.cat[cat_co]);
        row[9] = static_cast<double>(it.cat[sub_co]);
        row[10] = static_cast<double>(it.cat[platform]);
    }
    return x;
}

num::Var RerankerModel::score_graph(const SearchPage& page, bool training) {
    Var x = Var::constant(features_for(page));
    for (std::size_t i = 0; i < linears_.size(); ++i) {
        x = linears_[i].forward(x);
        x = norms_[i].forward(x, training);
        x = num::relu(x);
    }
    x = out_.forward(x);  // [N, 1]
    return num::reshape(x, {page.size()});
}

std::vector<double> RerankerModel::score(const SearchPage& page) const {
    // eval mode touches no state; the cast only satisfies the layer signatures
    Var s = const_cast<RerankerModel*>(this)->score_graph(page, false);
    return s.value().values();
}

Permutation RerankerModel::rerank(const SearchPage& page) const {
    return scores_to_permutation(score(page));
}

void RerankerModel::save(std::ostream& os) const {
    os << "revrank-reranker v1\n";
    os << "hidden " << hidden_[0] << " " << hidden_[1] << " " << hidden_[2] << "\n";
    char a[40], r[40];
    std::snprintf(a, sizeof(a), "%a", reg_.alpha);
    std::snprintf(r, sizeof(r), "%a", reg_.r_organic);
    os << "regularization " << a << " " << r << "\n";
    params_.save(os);
}

RerankerModel RerankerModel::load(std::istream& is) {
    std::string magic, version, kw;
    is >> magic >> version;
    if (magic != "revrank-reranker" || version != "v1") throw ParseError("bad reranker model file");
    std::vector<std::size_t> hidden(3);
    is >> kw >> hidden[0] >> hidden[1] >> hidden[2];
    if (kw != "hidden") throw ParseError("bad reranker model file");
    std::string alpha, organic;
    is >> kw >> alpha >> organic;
    if (kw != "regularization") throw ParseError("bad reranker model file");
    RevenueRegularization reg{std::strtod(alpha.c_str(), nullptr),
                              std::strtod(organic.c_str(), nullptr)};
    RerankerModel model(hidden, reg, 0);
    model.params_.load(is);
    return model;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

RerankerTrainResult train_reranker(const Clicker& clicker, const Dataset& train,
                                   const Dataset& val, const RerankerConfig& config) {
    config.reg.validate();
    config.loss.validate();
    if (train.pages.empty()) throw TrainingError("no training pages");

    auto model = std::make_unique<RerankerModel>(config.hidden, config.reg, config.seed);
    auto trainable = model->params().trainable();
    num::Adam adam(trainable, num::AdamConfig{config.learning_rate});

    std::vector<std::size_t> page_order(train.pages.size());
    std::iota(page_order.begin(), page_order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, "reranker-pages"));

    RerankerTrainResult result;
    std::size_t step = 0;
    double best_val_revenue = -1.0;
    std::ostringstream best_params;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        adam.config().lr = config.learning_rate * std::pow(config.lr_decay, static_cast<double>(epoch));
        shuffle_rng.shuffle(page_order);
        double loss_sum = 0.0;

        for (std::size_t pi_idx : page_order) {
            const SearchPage& page = train.pages[pi_idx];
            ++step;

            num::zero_grad(trainable);
            Var scores = model->score_graph(page, true);
            const Permutation pi = scores_to_permutation(scores.value().values());
            const auto trials =
                trial_permutations(pi, config.loss.budget, derive_seed(config.seed, "trials", step));

            // one batched clicker pass: current ranking plus every trial swap
            std::vector<Permutation> perms;
            perms.reserve(trials.size() + 1);
            perms.push_back(pi);
            for (const auto& t : trials) perms.push_back(t.perm);
            const auto preds = clicker.predict_batch(page, perms);

            auto revenue_of = [&](const ClickPrediction& pred) {
                std::vector<double> reg_bids(page.size());
                for (std::size_t slot = 0; slot < page.size(); ++slot)
                    reg_bids[slot] = config.reg.apply(page.items[pred.perm.item_at(slot)].bid);
                return expected_page_revenue(pred.probs, reg_bids, config.loss.revenue_mode,
                                             config.loss.threshold);
            };
            const double base_revenue = revenue_of(preds[0]);
            std::vector<double> deltas(trials.size());
            for (std::size_t t = 0; t < trials.size(); ++t)
                deltas[t] = revenue_of(preds[t + 1]) - base_revenue;

            Var loss = transposition_loss_node(scores, pi, trials, deltas, config.loss.sigma);
            const double loss_value = loss.value()[0];
            if (!std::isfinite(loss_value))
                throw TrainingError("reranker loss diverged at step " + std::to_string(step));
            loss_sum += loss_value;
            num::backward(loss);
            adam.step();
        }

        RerankerEpochRecord rec;
        rec.step = step;
        rec.mean_loss = loss_sum / static_cast<double>(train.pages.size());
        if (!val.pages.empty()) {
            const RerankerModel& m = *model;
            auto rerank_fn = [&m](const SearchPage& p) { return m.rerank(p); };
            const auto dr = delta_revenue(clicker, rerank_fn, val.pages, config.loss.threshold);
            rec.val_delta_revenue = dr.value.value_or(0.0);
            double diff_sum = 0.0, ndcg_sum = 0.0;
            for (const auto& page : val.pages) {
                const Permutation perm = m.rerank(page);
                diff_sum += difference(perm, config.decay);
                ndcg_sum += ndcg(perm, config.decay);
            }
            rec.val_difference = diff_sum / static_cast<double>(val.pages.size());
            rec.val_ndcg = ndcg_sum / static_cast<double>(val.pages.size());
            if (rec.val_delta_revenue > best_val_revenue) {
                best_val_revenue = rec.val_delta_revenue;
                best_params.str("");
                best_params.clear();
                model->params().save(best_params);
            }
        }
        result.history.push_back(rec);
    }
    if (best_val_revenue >= 0.0) {  // keep the epoch with the best validation revenue
        std::istringstream in(best_params.str());
        model->params().load(in);
    }

    result.model = std::move(model);
    return result;
}

}  // namespace revrank
