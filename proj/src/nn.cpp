#include "revrank/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "revrank/common.hpp"

namespace revrank::num {

Tensor xavier_init(const std::vector<std::size_t>& shape, Rng& rng) {
    if (shape.size() != 2) throw ShapeError("xavier_init expects a 2-D shape");
    const double stddev = std::sqrt(2.0 / static_cast<double>(shape[0] + shape[1]));
    Tensor t(shape);
    for (double& v : t.values()) v = rng.normal(0.0, stddev);
    return t;
}

Adam::Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Var& p : params_) {
        m_.emplace_back(p.value().shape());
        v_.emplace_back(p.value().shape());
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& value = params_[pi].mutable_value();
        const Tensor& grad = params_[pi].grad();
        if (grad.numel() != value.numel()) continue;  // no gradient this step
        Tensor& m = m_[pi];
        Tensor& v = v_[pi];
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double g = grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

Var ParamStore::create(const std::string& name, Tensor init, bool trainable) {
    for (const auto& [n, v] : items_)
        if (n == name) throw ConfigError("duplicate parameter name: " + name);
    if (name.find(' ') != std::string::npos) throw ConfigError("parameter name contains space: " + name);
    Var v = Var::leaf(std::move(init), trainable);
    items_.emplace_back(name, v);
    return v;
}

const Var& ParamStore::get(const std::string& name) const {
    for (const auto& [n, v] : items_)
        if (n == name) return v;
    throw ConfigError("unknown parameter: " + name);
}

std::vector<Var> ParamStore::trainable() const {
    std::vector<Var> out;
    for (const auto& [n, v] : items_)
        if (v.requires_grad()) out.push_back(v);
    return out;
}

void ParamStore::save(std::ostream& os) const {
    os << "revrank-params v1\n";
    os << "count " << items_.size() << "\n";
    char buf[64];
    for (const auto& [name, var] : items_) {
        const Tensor& t = var.value();
        os << "param " << name << " " << t.rank();
        for (std::size_t d : t.shape()) os << " " << d;
        os << "\n";
        for (std::size_t i = 0; i < t.numel(); ++i) {
            std::snprintf(buf, sizeof(buf), "%a", t[i]);
            os << buf << ((i + 1) % 8 == 0 || i + 1 == t.numel() ? "\n" : " ");
        }
        if (t.numel() == 0) os << "\n";
    }
}

void ParamStore::load(std::istream& is) {
    std::string magic, version;
    is >> magic >> version;
    if (magic != "revrank-params" || version != "v1")
        throw ParseError("bad parameter file header");
    std::string kw;
    std::size_t count = 0;
    is >> kw >> count;
    if (kw != "count") throw ParseError("bad parameter file: expected count");
    if (count != items_.size())
        throw ParseError("parameter file holds " + std::to_string(count) + " tensors, model has " +
                         std::to_string(items_.size()));
    for (auto& [name, var] : items_) {
        std::string pname;
        std::size_t rank = 0;
        is >> kw >> pname >> rank;
        if (kw != "param" || pname != name)
            throw ParseError("parameter file mismatch: expected " + name + ", got " + pname);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) is >> d;
        if (shape != var.value().shape())
            throw ParseError("parameter " + name + " shape mismatch: file has " +
                             Tensor::shape_string(shape));
        Tensor& t = var.mutable_value();
        std::string tok;
        for (std::size_t i = 0; i < t.numel(); ++i) {
            if (!(is >> tok)) throw ParseError("parameter file truncated in " + name);
            t[i] = std::strtod(tok.c_str(), nullptr);
        }
    }
}

Linear::Linear(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    w = ps.create(name + ".w", xavier_init({in, out}, rng));
    b = ps.create(name + ".b", Tensor({out}));
}

Var Linear::forward(const Var& x) const {
    const auto& shape = x.value().shape();
    const std::size_t in = w.value().dim(0);
    if (shape.empty() || shape.back() != in)
        throw ShapeError("linear: input " + x.value().shape_str() + " does not end in " +
                         std::to_string(in));
    if (shape.size() == 2) return add_bias(matmul(x, w), b);
    const std::size_t rows = x.value().numel() / in;
    Var flat = reshape(x, {rows, in});
    Var y = add_bias(matmul(flat, w), b);
    std::vector<std::size_t> out_shape = shape;
    out_shape.back() = w.value().dim(1);
    return reshape(y, out_shape);
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, std::size_t dim) {
    gain = ps.create(name + ".gain", Tensor({dim}, 1.0));
    bias = ps.create(name + ".bias", Tensor({dim}));
}

BatchNorm1d::BatchNorm1d(ParamStore& ps, const std::string& name, std::size_t features,
                         double momentum, double eps)
    : momentum_(momentum), eps_(eps), features_(features) {
    gain_ = ps.create(name + ".gain", Tensor({features}, 1.0));
    bias_ = ps.create(name + ".bias", Tensor({features}));
    running_mean_ = ps.create(name + ".running_mean", Tensor({features}), false);
    running_var_ = ps.create(name + ".running_var", Tensor({features}, 1.0), false);
}

Var BatchNorm1d::forward(const Var& x, bool training) {
    const auto& shape = x.value().shape();
    if (shape.empty() || shape.back() != features_)
        throw ShapeError("batch_norm: input " + x.value().shape_str() + " does not end in " +
                         std::to_string(features_));
    const std::size_t d = features_;
    const std::size_t rows = x.value().numel() / d;
    const double* xv = x.value().data();

    Tensor mu({d}), var({d});
    if (training) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) mu[j] += xv[r * d + j];
        for (std::size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) {
                const double c = xv[r * d + j] - mu[j];
                var[j] += c * c;
            }
        for (std::size_t j = 0; j < d; ++j) var[j] /= static_cast<double>(rows);
        Tensor& rm = running_mean_.mutable_value();
        Tensor& rv = running_var_.mutable_value();
        for (std::size_t j = 0; j < d; ++j) {
            rm[j] = (1.0 - momentum_) * rm[j] + momentum_ * mu[j];
            rv[j] = (1.0 - momentum_) * rv[j] + momentum_ * var[j];
        }
    } else {
        mu = running_mean_.value();
        var = running_var_.value();
    }

    Tensor inv_sigma({d});
    for (std::size_t j = 0; j < d; ++j) inv_sigma[j] = 1.0 / std::sqrt(var[j] + eps_);

    Tensor out(shape);
    Tensor xhat(shape);
    const double* gv = gain_.value().data();
    const double* bv = bias_.value().data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xv[r * d + j] - mu[j]) * inv_sigma[j];
            xhat[r * d + j] = h;
            out[r * d + j] = h * gv[j] + bv[j];
        }

    return make_node(
        std::move(out), {x, gain_, bias_},
        [rows, d, training, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Node& n) {
            Node& px = *n.parents[0];
            Node& pg = *n.parents[1];
            Node& pb = *n.parents[2];
            const double* g = n.grad.data();
            const double* gv = pg.value.data();
            if (pg.requires_grad)
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) pg.grad[j] += g[r * d + j] * xhat[r * d + j];
            if (pb.requires_grad)
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) pb.grad[j] += g[r * d + j];
            if (!px.requires_grad) return;
            if (!training) {
                // running stats are constants
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j)
                        px.grad[r * d + j] += g[r * d + j] * gv[j] * inv_sigma[j];
                return;
            }
            const double invr = 1.0 / static_cast<double>(rows);
            std::vector<double> sum_dh(d, 0.0), sum_dh_h(d, 0.0);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) {
                    const double dh = g[r * d + j] * gv[j];
                    sum_dh[j] += dh;
                    sum_dh_h[j] += dh * xhat[r * d + j];
                }
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) {
                    const double dh = g[r * d + j] * gv[j];
                    px.grad[r * d + j] += inv_sigma[j] * (dh - sum_dh[j] * invr -
                                                          xhat[r * d + j] * sum_dh_h[j] * invr);
                }
        });
}

}  // namespace revrank::num
