#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "revrank/autodiff.hpp"
#include "revrank/common.hpp"

using namespace revrank;
using namespace revrank::num;

namespace {
Var weighted_sum(const Var& v, Rng& rng) {
    // random linear functional to get a scalar loss out of a tensor output
    Tensor w(v.value().shape());
    for (double& x : w.values()) x = rng.normal();
    return sum(mul(v, Var::constant(std::move(w))));
}
}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
    Var x = Var::constant(Tensor({4}, std::vector<double>{1.5, 1.5, 1.5, 1.5}));
    Var y = softmax(x, -1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.value()[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(7);
    Var x = Var::leaf(oracles::random_tensor({3, 5, 4}, rng), false);
    Var y = softmax(x, 1);
    for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t in = 0; in < 4; ++in) {
            double s = 0.0;
            for (std::size_t d = 0; d < 5; ++d) s += y.value()[o * 20 + d * 4 + in];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
}

TEST_CASE("matmul identity") {
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
    Rng rng(3);
    Tensor a = oracles::random_tensor({3, 4}, rng);
    Var out = matmul(Var::constant(eye), Var::constant(a));
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(out.value()[i] == doctest::Approx(a[i]));
}

TEST_CASE("shape mismatch names both shapes") {
    Var a = Var::constant(Tensor({2, 3}));
    Var b = Var::constant(Tensor({4, 2}));
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2,3]"), ShapeError);
    CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("backward accumulates through a diamond: d(x+x)/dx = 2") {
    Var x = Var::leaf(Tensor::scalar(1.7));
    Var y = add(x, x);
    backward(y);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("cross entropy with class weights matches hand value") {
    // two equal logits give p = 0.5; weight 11 on the positive class
    Var logits = Var::leaf(Tensor({1, 2}, std::vector<double>{0.3, 0.3}));
    Var loss = cross_entropy(logits, {1}, {1.0, 11.0});
    CHECK(loss.value()[0] == doctest::Approx(11.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("label smoothing at eps 0 equals plain cross entropy") {
    Rng rng(11);
    Tensor t = oracles::random_tensor({6, 2}, rng);
    std::vector<std::int64_t> labels = {0, 1, 1, 0, 1, 0};
    Var a = cross_entropy(Var::leaf(t), labels, {1.0, 1.0});
    Var b = label_smoothing_loss(Var::leaf(t), labels, 0.0);
    CHECK(a.value()[0] == doctest::Approx(b.value()[0]).epsilon(1e-9));
}

TEST_CASE("dropout eval mode is identity and train mode scales") {
    Rng rng(5);
    Tensor t = oracles::random_tensor({100}, rng);
    // eval path: callers skip the op entirely; rate 0 is also identity
    Rng drop_rng(9);
    Var kept = dropout(Var::leaf(t), 0.0, drop_rng);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(kept.value()[i] == t[i]);
    Var dropped = dropout(Var::leaf(t), 0.5, drop_rng);
    int zeros = 0;
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (dropped.value()[i] == 0.0)
            ++zeros;
        else
            CHECK(dropped.value()[i] == doctest::Approx(t[i] * 2.0));
    }
    CHECK(zeros > 20);
    CHECK(zeros < 80);
}

TEST_CASE("attention with a single key returns V for any query") {
    Rng rng(13);
    Var q = Var::leaf(oracles::random_tensor({1, 3, 4}, rng), false);
    Tensor kv = oracles::random_tensor({1, 1, 4}, rng);
    Var k = Var::leaf(kv, false);
    Var v = Var::leaf(kv, false);
    Var out = multi_head_attention(q, k, v, 2);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t d = 0; d < 4; ++d)
            CHECK(out.value()[t * 4 + d] == doctest::Approx(kv[d]).epsilon(1e-12));
}

TEST_CASE("attention with orthogonal queries averages V uniformly") {
    // all scores equal (zero dot products) -> softmax uniform over keys
    Tensor q({1, 1, 2}, std::vector<double>{0.0, 0.0});
    Tensor k({1, 3, 2}, std::vector<double>{1.0, 0.0, 0.0, 1.0, -1.0, 0.0});
    Tensor v({1, 3, 2}, std::vector<double>{3.0, 0.0, 0.0, 6.0, 3.0, 3.0});
    Var out = multi_head_attention(Var::constant(q), Var::constant(k), Var::constant(v), 1);
    CHECK(out.value()[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(out.value()[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("attention head count must divide width") {
    Rng rng(17);
    Var x = Var::leaf(oracles::random_tensor({1, 2, 6}, rng), false);
    CHECK_THROWS_AS(multi_head_attention(x, x, x, 4), ConfigError);
}

TEST_CASE("chunked intersample attention rejects indivisible batches") {
    Rng rng(19);
    Var x = Var::leaf(oracles::random_tensor({5, 2, 3}, rng), false);
    CHECK_THROWS_WITH_AS(chunked_intersample_attention(x, 3), doctest::Contains("5"), ShapeError);
}

TEST_CASE("chunked intersample attention with page length 1 is identity") {
    Rng rng(23);
    Tensor t = oracles::random_tensor({4, 3, 2}, rng);
    Var y = chunked_intersample_attention(Var::leaf(t, false), 1);
    for (std::size_t i = 0; i < t.numel(); ++i)
        CHECK(y.value()[i] == doctest::Approx(t[i]).epsilon(1e-12));
}

TEST_CASE("chunked intersample attention matches the per-chunk loop oracle") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t pages = 1 + rng.below(4);
        const std::size_t n_len = 1 + rng.below(5);
        const std::size_t n = 1 + rng.below(4);
        const std::size_t d = 1 + rng.below(5);
        Tensor x = oracles::random_tensor({pages * n_len, n, d}, rng);
        Var y = chunked_intersample_attention(Var::leaf(x, false), n_len);
        Tensor ref = oracles::chunked_intersample_loop(x, n_len);
        for (std::size_t i = 0; i < ref.numel(); ++i)
            CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-9));
    }
}

TEST_CASE("gradients match finite differences across ops") {
    Rng rng(31);
    auto check = [&](const char* name, std::vector<Var> leaves,
                     std::function<Var(const std::vector<Var>&)> f) {
        for (int trial = 0; trial < 20; ++trial) {
            for (auto& leaf : leaves)
                for (double& v : leaf.mutable_value().values()) v = rng.normal();
            const auto res = oracles::finite_difference_check(leaves, f);
            INFO(name << " trial " << trial << ": analytic " << res.worst_analytic << " numeric "
                      << res.worst_numeric);
            CHECK(res.max_rel_error < 1e-3);
        }
    };

    check("matmul+relu", {Var::leaf(Tensor({3, 4})), Var::leaf(Tensor({4, 2}))},
          [&](const std::vector<Var>& l) { return sum(relu(matmul(l[0], l[1]))); });
    check("gelu", {Var::leaf(Tensor({7}))},
          [&](const std::vector<Var>& l) { return sum(gelu(l[0])); });
    check("sigmoid*mul", {Var::leaf(Tensor({5})), Var::leaf(Tensor({5}))},
          [&](const std::vector<Var>& l) { return sum(mul(sigmoid(l[0]), l[1])); });
    check("softmax", {Var::leaf(Tensor({2, 5}))},
          [&](const std::vector<Var>& l) {
              Rng wr(101);
              return weighted_sum(softmax(l[0], -1), wr);
          });
    check("layer_norm", {Var::leaf(Tensor({3, 6})), Var::leaf(Tensor({6})), Var::leaf(Tensor({6}))},
          [&](const std::vector<Var>& l) {
              Rng wr(102);
              return weighted_sum(layer_norm(l[0], l[1], l[2]), wr);
          });
    check("add_bias", {Var::leaf(Tensor({4, 3})), Var::leaf(Tensor({3}))},
          [&](const std::vector<Var>& l) { return mean(add_bias(l[0], l[1])); });
    check("slice+concat", {Var::leaf(Tensor({4, 6}))},
          [&](const std::vector<Var>& l) {
              Var a = slice(l[0], 1, 0, 2);
              Var b = slice(l[0], 1, 2, 4);
              return sum(mul(concat(1, {b, a}), concat(1, {b, a})));
          });
    check("permute+reshape", {Var::leaf(Tensor({2, 3, 4}))},
          [&](const std::vector<Var>& l) {
              Var p = permute(l[0], {2, 0, 1});
              return sum(mul(reshape(p, {4, 6}), reshape(p, {4, 6})));
          });
    check("embedding", {Var::leaf(Tensor({5, 3}))},
          [&](const std::vector<Var>& l) {
              return sum(embedding_lookup(l[0], {0, 2, 2, 4, 1}));
          });
    check("cross_entropy", {Var::leaf(Tensor({4, 2}))},
          [&](const std::vector<Var>& l) {
              return cross_entropy(l[0], {0, 1, 1, 0}, {1.0, 11.0});
          });
    check("label_smoothing", {Var::leaf(Tensor({4, 3}))},
          [&](const std::vector<Var>& l) {
              return label_smoothing_loss(l[0], {0, 2, 1, 0}, 0.1);
          });
    check("attention", {Var::leaf(Tensor({2, 3, 4})), Var::leaf(Tensor({2, 3, 4})),
                        Var::leaf(Tensor({2, 3, 4}))},
          [&](const std::vector<Var>& l) {
              Rng wr(103);
              return weighted_sum(multi_head_attention(l[0], l[1], l[2], 2), wr);
          });
    check("chunked_intersample", {Var::leaf(Tensor({4, 2, 3}))},
          [&](const std::vector<Var>& l) {
              Rng wr(104);
              return weighted_sum(chunked_intersample_attention(l[0], 2), wr);
          });
    check("batched_matmul", {Var::leaf(Tensor({2, 3, 4})), Var::leaf(Tensor({2, 4, 2}))},
          [&](const std::vector<Var>& l) { return sum(matmul(l[0], l[1])); });
}

TEST_CASE("backward requires a scalar root") {
    Var x = Var::leaf(Tensor({3}));
    CHECK_THROWS_AS(backward(x), ShapeError);
}
