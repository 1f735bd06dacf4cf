#include "revrank/saint.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "revrank/metrics.hpp"

namespace revrank {

using num::Var;

void SaintConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
        throw ConfigError("d_model " + std::to_string(d_model) + " must be divisible by " +
                          std::to_string(n_heads) + " heads");
    if (page_len < 1) throw ConfigError("page length must be >= 1");
    if (n_layers < 1) throw ConfigError("need at least one transformer layer");
}

// ---------------------------------------------------------------------------
// model construction
// ---------------------------------------------------------------------------

SaintModel::SaintModel(SaintConfig config, const FeatureMatrix& layout_source,
                       std::uint64_t init_seed)
    : config_(config) {
    config_.validate();
    columns_ = layout_source.columns;
    cat_max_code_.assign(columns_.size(), 0);
    cont_mean_.assign(columns_.size(), 0.0);
    cont_sd_.assign(columns_.size(), 1.0);
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        if (columns_[c].categorical) {
            std::int64_t mx = 0;
            for (double v : layout_source.data[c])
                if (!std::isnan(v)) mx = std::max(mx, static_cast<std::int64_t>(v));
            cat_max_code_[c] = mx;
        } else {
            double sum = 0.0, count = 0.0;
            for (double v : layout_source.data[c])
                if (!std::isnan(v)) {
                    sum += v;
                    count += 1.0;
                }
            const double mean = count > 0.0 ? sum / count : 0.0;
            double ss = 0.0;
            for (double v : layout_source.data[c])
                if (!std::isnan(v)) ss += (v - mean) * (v - mean);
            const double sd = count > 1.0 ? std::sqrt(ss / (count - 1.0)) : 1.0;
            cont_mean_[c] = mean;
            cont_sd_[c] = sd > 1e-12 ? sd : 1.0;
        }
    }
    build_params(init_seed);
}

void SaintModel::build_params(std::uint64_t init_seed) {
    Rng rng(derive_seed(init_seed, "saint-init"));
    // intersample parameters come from their own stream so both variants share
    // identical inits for everything else
    Rng isa_rng(derive_seed(init_seed, "saint-init-isa"));
    const std::size_t d = config_.d_model;

    auto zero_out_proj = [&](num::Linear& lin) {
        for (double& v : lin.w.mutable_value().values()) v = 0.0;
    };

    for (std::size_t c = 0; c < columns_.size(); ++c) {
        if (columns_[c].categorical) {
            const std::size_t rows = static_cast<std::size_t>(cat_max_code_[c]) + 2;  // +unknown
            embed_tables_.push_back(
                params_.create("embed." + columns_[c].name, num::xavier_init({rows, d}, rng)));
        } else {
            // affine token: row 0 = direction, row 1 = bias
            embed_tables_.push_back(
                params_.create("affine." + columns_[c].name, num::xavier_init({2, d}, rng)));
        }
    }
    cls_ = params_.create("cls", num::xavier_init({1, d}, rng));

    layers_.resize(config_.n_layers);
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        LayerRefs& lr = layers_[l];
        lr.ln_sa = num::LayerNorm(params_, p + "ln_sa", d);
        lr.sa_q = num::Linear(params_, p + "sa.q", d, d, rng);
        lr.sa_k = num::Linear(params_, p + "sa.k", d, d, rng);
        lr.sa_v = num::Linear(params_, p + "sa.v", d, d, rng);
        lr.sa_o = num::Linear(params_, p + "sa.o", d, d, rng);
        zero_out_proj(lr.sa_o);  // attention blocks start as identities
        if (config_.intersample) {
            lr.ln_is = num::LayerNorm(params_, p + "ln_is", d);
            lr.is_q = num::Linear(params_, p + "is.q", d, d, isa_rng);
            lr.is_k = num::Linear(params_, p + "is.k", d, d, isa_rng);
            lr.is_v = num::Linear(params_, p + "is.v", d, d, isa_rng);
            lr.is_o = num::Linear(params_, p + "is.o", d, d, isa_rng);
            zero_out_proj(lr.is_o);
        }
        lr.ln_ff = num::LayerNorm(params_, p + "ln_ff", d);
        lr.ff1 = num::Linear(params_, p + "ff.1", d, d * config_.ff_mult, rng);
        lr.ff2 = num::Linear(params_, p + "ff.2", d * config_.ff_mult, d, rng);
    }
    head1_ = num::Linear(params_, "head.1", d, config_.head_hidden, rng);
    head2_ = num::Linear(params_, "head.2", config_.head_hidden, 2, rng);
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

Var SaintModel::tokenize(const FeatureMatrix& batch) const {
    if (batch.columns.size() != columns_.size())
        throw ShapeError("batch width " + std::to_string(batch.columns.size()) +
                         " does not match model width " + std::to_string(columns_.size()));
    const std::size_t rows = batch.n_rows;
    const std::size_t d = config_.d_model;

    std::vector<Var> tokens;
    tokens.reserve(columns_.size() + 1);
    tokens.push_back(num::reshape(
        num::embedding_lookup(cls_, std::vector<std::int64_t>(rows, 0)), {rows, 1, d}));

    for (std::size_t c = 0; c < columns_.size(); ++c) {
        if (columns_[c].categorical) {
            std::vector<std::int64_t> idx(rows);
            const std::int64_t unknown = cat_max_code_[c] + 1;
            for (std::size_t r = 0; r < rows; ++r) {
                const double v = batch.data[c][r];
                if (std::isnan(v) || v < 0.0 || v > static_cast<double>(cat_max_code_[c]))
                    idx[r] = unknown;
                else
                    idx[r] = static_cast<std::int64_t>(v);
            }
            tokens.push_back(
                num::reshape(num::embedding_lookup(embed_tables_[c], idx), {rows, 1, d}));
        } else {
            num::Tensor z({rows, 1});
            for (std::size_t r = 0; r < rows; ++r) {
                const double v = batch.data[c][r];
                z[r] = std::isnan(v) ? 0.0 : (v - cont_mean_[c]) / cont_sd_[c];
            }
            Var direction = num::slice(embed_tables_[c], 0, 0, 1);  // [1, d]
            Var bias = num::slice(embed_tables_[c], 0, 1, 1);
            Var tok = num::matmul(Var::constant(std::move(z)), direction);  // [rows, d]
            tok = num::add_bias(tok, num::reshape(bias, {d}));
            tokens.push_back(num::reshape(tok, {rows, 1, d}));
        }
    }
    return num::concat(1, tokens);  // [rows, n_tokens, d]
}

namespace {
// Multi-head intersample attention chunked to page_len-item blocks: heads are
// split first, each head's chunk is flattened to (page_len, tokens*head_dim)
// and self-attended, exactly the per-chunk loop evaluated batch-wise.
Var chunked_intersample_mha(const Var& q, const Var& k, const Var& v, std::size_t n_heads,
                            std::size_t page_len, double attn_dropout, Rng* rng) {
    const auto& s = q.value().shape();  // [B, n, d]
    const std::size_t B = s[0], n = s[1], d = s[2];
    if (B % page_len != 0)
        throw ShapeError("intersample batch " + std::to_string(B) + " not divisible by page length " +
                         std::to_string(page_len));
    const std::size_t dh = d / n_heads;
    const std::size_t chunks = B / page_len;
    const std::size_t width = n * dh;

    auto to_chunks = [&](const Var& x) {
        Var r = num::reshape(x, {B, n, n_heads, dh});
        r = num::permute(r, {2, 0, 1, 3});  // [H, B, n, dh]
        return num::reshape(r, {n_heads, chunks, page_len, width});
    };
    Var qc = to_chunks(q), kc = to_chunks(k), vc = to_chunks(v);
    Var scores = num::scale(num::matmul(qc, num::transpose_last2(kc)),
                            1.0 / std::sqrt(static_cast<double>(width)));
    Var weights = num::softmax(scores, -1);
    if (attn_dropout > 0.0 && rng != nullptr) weights = num::dropout(weights, attn_dropout, *rng);
    Var y = num::matmul(weights, vc);  // [H, chunks, page_len, width]
    y = num::reshape(y, {n_heads, B, n, dh});
    y = num::permute(y, {1, 2, 0, 3});  // [B, n, H, dh]
    return num::reshape(y, {B, n, d});
}
}  // namespace

Var SaintModel::forward(const FeatureMatrix& batch, bool training, Rng* dropout_rng) const {
    if (config_.intersample && batch.n_rows % config_.page_len != 0)
        throw ShapeError("batch of " + std::to_string(batch.n_rows) +
                         " items not divisible by page length " + std::to_string(config_.page_len));
    Rng* rng = training ? dropout_rng : nullptr;
    const double attn_drop = training ? config_.attention_dropout : 0.0;
    const double mlp_drop = training ? config_.mlp_dropout : 0.0;

    // pre-norm residual blocks, as in the reference tabular-transformer design
    Var x = tokenize(batch);  // [B, n, d]
    for (const LayerRefs& lr : layers_) {
        {
            Var h = lr.ln_sa.forward(x);
            Var attn = num::multi_head_attention(lr.sa_q.forward(h), lr.sa_k.forward(h),
                                                 lr.sa_v.forward(h), config_.n_heads, attn_drop,
                                                 rng);
            x = num::add(x, lr.sa_o.forward(attn));
        }
        if (config_.intersample) {
            Var h = lr.ln_is.forward(x);
            Var attn = chunked_intersample_mha(lr.is_q.forward(h), lr.is_k.forward(h),
                                               lr.is_v.forward(h), config_.n_heads,
                                               config_.page_len, attn_drop, rng);
            x = num::add(x, lr.is_o.forward(attn));
        }
        {
            Var h = num::gelu(lr.ff1.forward(lr.ln_ff.forward(x)));
            if (mlp_drop > 0.0 && rng != nullptr) h = num::dropout(h, mlp_drop, *rng);
            x = num::add(x, lr.ff2.forward(h));
        }
    }
    const std::size_t rows = batch.n_rows;
    Var cls = num::reshape(num::slice(x, 1, 0, 1), {rows, config_.d_model});
    Var h = num::relu(head1_.forward(cls));
    if (mlp_drop > 0.0 && rng != nullptr) h = num::dropout(h, mlp_drop, *rng);
    return head2_.forward(h);  // [rows, 2]
}

Var SaintModel::loss_on(const FeatureMatrix& batch, bool training, Rng* dropout_rng) const {
    Var logits = forward(batch, training, dropout_rng);
    std::vector<std::int64_t> labels(batch.labels.begin(), batch.labels.end());
    if (config_.label_smoothing)
        return num::label_smoothing_loss(logits, labels, config_.smoothing_eps);
    return num::cross_entropy(logits, labels, {1.0, 1.0});
}

std::vector<double> SaintModel::predict_probs(const FeatureMatrix& batch) const {
    const std::size_t n = config_.page_len;
    const std::size_t rows = batch.n_rows;
    std::vector<double> out;
    out.reserve(rows);
    // chunk to a bounded number of pages per forward pass
    const std::size_t pages_per_eval = 16;
    const std::size_t step = config_.intersample ? pages_per_eval * n : pages_per_eval * n;
    for (std::size_t start = 0; start < rows; start += step) {
        const std::size_t len = std::min(step, rows - start);
        FeatureMatrix sub;
        sub.columns = batch.columns;
        sub.page_len = batch.page_len;
        sub.n_rows = len;
        sub.missing_marker = batch.missing_marker;
        sub.data.resize(batch.columns.size());
        for (std::size_t c = 0; c < batch.columns.size(); ++c)
            sub.data[c].assign(batch.data[c].begin() + start, batch.data[c].begin() + start + len);
        sub.labels.assign(len, 0);
        Var logits = forward(sub, false, nullptr);
        const num::Tensor& t = logits.value();
        for (std::size_t r = 0; r < len; ++r) {
            const double a = t[r * 2], b = t[r * 2 + 1];
            const double m = std::max(a, b);
            const double ea = std::exp(a - m), eb = std::exp(b - m);
            out.push_back(eb / (ea + eb));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {
std::string hexd(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}
}  // namespace

void SaintModel::save(std::ostream& os) const {
    os << "config " << config_.d_model << " " << config_.n_layers << " " << config_.n_heads << " "
       << hexd(config_.attention_dropout) << " " << hexd(config_.mlp_dropout) << " "
       << (config_.label_smoothing ? 1 : 0) << " " << hexd(config_.smoothing_eps) << " "
       << config_.head_hidden << " " << hexd(config_.learning_rate) << " "
       << (config_.intersample ? 1 : 0) << " " << config_.page_len << " " << config_.ff_mult
       << "\n";
    os << "columns " << columns_.size() << "\n";
    for (std::size_t c = 0; c < columns_.size(); ++c)
        os << columns_[c].name << " " << (columns_[c].categorical ? 1 : 0) << " "
           << cat_max_code_[c] << " " << hexd(cont_mean_[c]) << " " << hexd(cont_sd_[c]) << "\n";
    params_.save(os);
}

SaintModel SaintModel::load(std::istream& is) {
    std::string kw;
    SaintConfig cfg;
    is >> kw;
    if (kw != "config") throw ParseError("bad saint model file");
    int smoothing = 0, intersample = 0;
    std::string a_drop, m_drop, s_eps, lr;
    is >> cfg.d_model >> cfg.n_layers >> cfg.n_heads >> a_drop >> m_drop >> smoothing >> s_eps >>
        cfg.head_hidden >> lr >> intersample >> cfg.page_len >> cfg.ff_mult;
    cfg.attention_dropout = std::strtod(a_drop.c_str(), nullptr);
    cfg.mlp_dropout = std::strtod(m_drop.c_str(), nullptr);
    cfg.label_smoothing = smoothing != 0;
    cfg.smoothing_eps = std::strtod(s_eps.c_str(), nullptr);
    cfg.learning_rate = std::strtod(lr.c_str(), nullptr);
    cfg.intersample = intersample != 0;

    std::size_t n_cols = 0;
    is >> kw >> n_cols;
    if (kw != "columns") throw ParseError("bad saint model file");
    FeatureMatrix layout;
    layout.columns.resize(n_cols);
    layout.data.resize(n_cols);
    std::vector<std::int64_t> max_codes(n_cols);
    std::vector<double> means(n_cols), sds(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c) {
        int cat = 0;
        std::string mean, sd;
        is >> layout.columns[c].name >> cat >> max_codes[c] >> mean >> sd;
        layout.columns[c].categorical = cat != 0;
        means[c] = std::strtod(mean.c_str(), nullptr);
        sds[c] = std::strtod(sd.c_str(), nullptr);
        // seed the layout so the constructor sizes tables identically
        layout.data[c] = {layout.columns[c].categorical ? static_cast<double>(max_codes[c]) : 0.0};
    }
    layout.n_rows = 1;
    layout.page_len = 1;

    SaintModel model(cfg, layout, 0);
    model.cat_max_code_ = max_codes;
    model.cont_mean_ = means;
    model.cont_sd_ = sds;
    model.params_.load(is);
    return model;
}

// ---------------------------------------------------------------------------
// clicker wrapper + training
// ---------------------------------------------------------------------------

SaintClicker::SaintClicker(SaintModel model, FeatureSchema schema,
                           std::vector<std::string> features)
    : model_(std::move(model)), schema_(std::move(schema)), features_(std::move(features)) {}

std::vector<double> SaintClicker::predict_impl(const SearchPage& page,
                                               const Permutation& perm) const {
    FeatureMatrix m;
    append_page_features(m, page, &perm, schema_, features_);
    return model_.predict_probs(m);
}

std::vector<std::vector<double>> SaintClicker::predict_batch_impl(
    const SearchPage& page, const std::vector<Permutation>& perms) const {
    FeatureMatrix m;
    for (const auto& perm : perms) append_page_features(m, page, &perm, schema_, features_);
    const std::vector<double> flat = model_.predict_probs(m);
    const std::size_t n = page.size();
    std::vector<std::vector<double>> out(perms.size());
    for (std::size_t i = 0; i < perms.size(); ++i)
        out[i].assign(flat.begin() + i * n, flat.begin() + (i + 1) * n);
    return out;
}

void SaintClicker::save(std::ostream& os) const {
    os << "revrank-clicker " << kind() << " v1\n";
    os << "features " << features_.size();
    for (const auto& f : features_) os << " " << f;
    os << "\n";
    model_.save(os);
}

std::unique_ptr<SaintClicker> SaintClicker::load(std::istream& is) {
    std::string kw;
    std::size_t n = 0;
    is >> kw >> n;
    if (kw != "features") throw ParseError("bad saint clicker file");
    std::vector<std::string> features(n);
    for (auto& f : features) is >> f;
    SaintModel model = SaintModel::load(is);
    return std::make_unique<SaintClicker>(std::move(model), FeatureSchema::standard(),
                                          std::move(features));
}

namespace {
FeatureMatrix gather_pages(const FeatureMatrix& m, const std::vector<std::size_t>& page_idx) {
    FeatureMatrix out;
    out.columns = m.columns;
    out.page_len = m.page_len;
    out.missing_marker = m.missing_marker;
    out.data.resize(m.columns.size());
    const std::size_t n = m.page_len;
    for (std::size_t p : page_idx) {
        const std::size_t start = p * n;
        for (std::size_t c = 0; c < m.columns.size(); ++c)
            out.data[c].insert(out.data[c].end(), m.data[c].begin() + start,
                               m.data[c].begin() + start + n);
        out.labels.insert(out.labels.end(), m.labels.begin() + start, m.labels.begin() + start + n);
        out.qids.insert(out.qids.end(), m.qids.begin() + start, m.qids.begin() + start + n);
        out.n_rows += n;
    }
    return out;
}
}  // namespace

SaintTrainResult train_saint_clicker(const Dataset& train, const Dataset& val,
                                     const SaintConfig& config) {
    config.validate();
    if (train.page_len() != config.page_len)
        throw ConfigError("dataset page length " + std::to_string(train.page_len()) +
                          " does not match configured " + std::to_string(config.page_len));

    const auto& features = default_clicker_features();
    FeatureMatrix train_m = dataset_features(train, features);
    FeatureMatrix val_m = dataset_features(val, features);

    SaintModel model(config, train_m, config.seed);
    auto trainable = model.params().trainable();
    num::Adam adam(trainable, num::AdamConfig{config.learning_rate});

    const std::size_t n_pages = train.pages.size();
    std::vector<std::size_t> page_order(n_pages);
    for (std::size_t i = 0; i < n_pages; ++i) page_order[i] = i;
    Rng shuffle_rng(derive_seed(config.seed, "saint-batches"));

    auto evaluate = [&](const FeatureMatrix& m) {
        const std::vector<double> probs = model.predict_probs(m);
        std::vector<std::vector<int>> labels;
        std::vector<std::vector<double>> preds;
        const std::size_t n = m.page_len;
        for (std::size_t start = 0; start + n <= m.n_rows; start += n) {
            labels.emplace_back(m.labels.begin() + start, m.labels.begin() + start + n);
            preds.emplace_back(probs.begin() + start, probs.begin() + start + n);
        }
        std::vector<int> flat_labels(m.labels.begin(), m.labels.end());
        const auto a = auc(flat_labels, probs);
        const auto g = gauc(labels, preds);
        return std::pair<double, double>(a.value_or(0.5), g.value.value_or(0.5));
    };

    SaintTrainResult result;
    double best_gauc = -1.0;
    std::stringstream best_params;

    std::size_t cursor = n_pages;  // forces a shuffle on the first step
    for (std::size_t step = 1; step <= config.max_steps; ++step) {
        std::vector<std::size_t> batch_pages;
        for (std::size_t i = 0; i < config.pages_per_batch; ++i) {
            if (cursor >= n_pages) {
                shuffle_rng.shuffle(page_order);
                cursor = 0;
            }
            batch_pages.push_back(page_order[cursor++]);
        }
        const FeatureMatrix batch = gather_pages(train_m, batch_pages);

        Rng dropout_rng(derive_seed(config.seed, "saint-dropout", step));
        num::zero_grad(trainable);
        Var loss = model.loss_on(batch, true, &dropout_rng);
        const double loss_value = loss.value()[0];
        if (!std::isfinite(loss_value))
            throw TrainingError("loss diverged at step " + std::to_string(step));
        num::backward(loss);
        adam.step();

        if (step % config.eval_every == 0 || step == config.max_steps) {
            const auto [va, vg] = evaluate(val_m);
            result.history.push_back(TrainRecord{step, loss_value, va, vg});
            if (vg > best_gauc) {
                best_gauc = vg;
                best_params.str("");
                best_params.clear();
                model.params().save(best_params);
            }
        }
    }
    if (best_gauc >= 0.0) {
        best_params.seekg(0);
        model.params().load(best_params);
    }

    result.clicker = std::make_unique<SaintClicker>(std::move(model), train.schema, features);
    return result;
}

std::vector<BatchBenchRow> bench_chunk_batching(const SaintClicker& clicker, const Dataset& test,
                                                const std::vector<std::size_t>& b_values,
                                                int repetitions) {
    if (test.pages.empty()) throw ArgumentError("benchmark needs at least one page");
    const auto& features = default_clicker_features();
    std::vector<BatchBenchRow> rows;
    for (std::size_t b : b_values) {
        FeatureMatrix m;
        for (std::size_t i = 0; i < b; ++i)
            append_page_features(m, test.pages[i % test.pages.size()], nullptr, test.schema,
                                 features);
        for (int warm = 0; warm < 5; ++warm) clicker.model().predict_probs(m);
        std::vector<double> times;
        times.reserve(repetitions);
        for (int rep = 0; rep < repetitions; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            clicker.model().predict_probs(m);
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                            static_cast<double>(b));
        }
        std::sort(times.begin(), times.end());
        rows.push_back(BatchBenchRow{b, times[times.size() / 2]});
    }
    return rows;
}

}  // namespace revrank
