#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "revrank/rng.hpp"
#include "revrank/tensor.hpp"

namespace revrank::num {

// Reverse-mode automatic differentiation over dense tensors.
//
// A computation builds a dynamic graph of Nodes; backward() walks it in
// reverse topological order and accumulates gradients additively, so a value
// used twice receives the sum of both contributions. Graphs are rebuilt per
// step; leaf gradients persist across backward calls until zero_grad().

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // pushes this->grad into parents
    std::uint64_t id = 0;                 // creation order, for stable traversal
};

using NodePtr = std::shared_ptr<Node>;

class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    static Var constant(Tensor v);
    static Var leaf(Tensor v, bool requires_grad = true);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& mutable_grad() { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

// Builds a graph node from a computed value, its parents and a backprop
// functor. Exposed so higher layers can add fused ops.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

// Seeds root (scalar) with gradient 1 and propagates.
void backward(const Var& root);
void zero_grad(std::vector<Var>& params);

// --- elementwise / arithmetic ---
Var add(const Var& a, const Var& b);       // same shape
Var add_bias(const Var& a, const Var& b);  // b: 1-D, length = trailing dim of a
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise, same shape
Var scale(const Var& a, double s);
Var neg(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);

// --- shape ---
Var reshape(const Var& a, std::vector<std::size_t> shape);
Var permute(const Var& a, const std::vector<std::size_t>& axes);
Var transpose_last2(const Var& a);
Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t len);
Var concat(std::size_t axis, const std::vector<Var>& parts);

// --- linear algebra ---
// 2-D or batched: [..., m, k] x [..., k, n] with identical leading dims.
Var matmul(const Var& a, const Var& b);

// --- reductions / normalization ---
Var sum(const Var& a);
Var mean(const Var& a);
Var softmax(const Var& a, int axis);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// --- stochastic ---
Var dropout(const Var& x, double rate, Rng& rng);  // training mode; eval callers skip

// --- lookup ---
Var embedding_lookup(const Var& table, const std::vector<std::int64_t>& indices);

// --- losses ---
// Mean over the batch of class_weights[label] * negative log-likelihood.
Var cross_entropy(const Var& logits, const std::vector<std::int64_t>& labels,
                  const std::vector<double>& class_weights);
// Mean cross entropy against (1-eps)*onehot + eps/C targets. eps=0 == plain CE.
Var label_smoothing_loss(const Var& logits, const std::vector<std::int64_t>& labels, double epsilon);

// --- attention ---
// Scaled dot-product attention with multi-head split/merge (no projections).
// q: [..., Tq, D], k,v: [..., Tk, D]; D divisible by n_heads.
Var multi_head_attention(const Var& q, const Var& k, const Var& v, std::size_t n_heads,
                         double attn_dropout = 0.0, Rng* rng = nullptr);

// Intersample attention restricted to contiguous chunks of page_len rows.
// x: [b, n, d] with b divisible by page_len. Each chunk is reshaped to
// (page_len, n*d), self-attended with scale sqrt(n*d), and reshaped back.
// Chunks never attend across their boundary.
Var chunked_intersample_attention(const Var& x, std::size_t page_len);

}  // namespace revrank::num
