#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "revrank/autodiff.hpp"
#include "revrank/rng.hpp"
#include "revrank/tensor.hpp"

namespace revrank::num {

// Xavier/Glorot: normal with variance 2/(fan_in + fan_out). 2-D shapes only.
Tensor xavier_init(const std::vector<std::size_t>& shape, Rng& rng);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<Var> params, AdamConfig cfg);

    void step();  // consumes current .grad() values
    std::int64_t steps_taken() const { return t_; }
    AdamConfig& config() { return cfg_; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
    AdamConfig cfg_;
};

// Named parameters and persistent buffers (running stats). Text serialization
// uses hexfloat so round-trips are bit-exact.
class ParamStore {
public:
    Var create(const std::string& name, Tensor init, bool trainable = true);
    const Var& get(const std::string& name) const;
    std::vector<Var> trainable() const;
    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }

    void save(std::ostream& os) const;
    void load(std::istream& is);  // fills existing entries; names/shapes must match

private:
    std::vector<std::pair<std::string, Var>> items_;
};

struct Linear {
    Var w;  // [in, out]
    Var b;  // [out]
    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
    Var forward(const Var& x) const;  // x: [..., in] -> [..., out]
};

struct LayerNorm {
    Var gain, bias;
    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& name, std::size_t dim);
    Var forward(const Var& x) const { return layer_norm(x, gain, bias); }
};

// Normalizes each trailing-axis feature over all leading axes.
class BatchNorm1d {
public:
    BatchNorm1d() = default;
    BatchNorm1d(ParamStore& ps, const std::string& name, std::size_t features,
                double momentum = 0.1, double eps = 1e-5);
    Var forward(const Var& x, bool training);

private:
    Var gain_, bias_;
    Var running_mean_, running_var_;  // non-trainable buffers
    double momentum_ = 0.1;
    double eps_ = 1e-5;
    std::size_t features_ = 0;
};

}  // namespace revrank::num
