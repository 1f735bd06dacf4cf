#include <doctest.h>

#include <cmath>
#include <sstream>

#include "revrank/clicker.hpp"
#include "revrank/data.hpp"

using namespace revrank;

namespace {
Dataset tiny() {
    SyntheticConfig cfg;
    cfg.n_pages = 4;
    cfg.page_len = 5;
    return generate_synthetic(cfg);
}
}  // namespace

TEST_CASE("ctrv_predict applies the positional decay") {
    const auto pred = ctrv_predict({0.5, 0.5, 0.5}, 0.9);
    CHECK(pred.probs[0] == doctest::Approx(0.5));
    CHECK(pred.probs[2] == doctest::Approx(0.405));

    const auto flat = ctrv_predict({0.2, 0.3}, 1.0);
    CHECK(flat.probs[0] == doctest::Approx(0.2));
    CHECK(flat.probs[1] == doctest::Approx(0.3));

    const auto degenerate = ctrv_predict({0.2, 0.3, 0.4}, 0.0);
    CHECK(degenerate.probs[0] == doctest::Approx(0.2));
    CHECK(degenerate.probs[1] == doctest::Approx(0.0));
    CHECK(degenerate.probs[2] == doctest::Approx(0.0));

    CHECK_THROWS_AS(ctrv_predict({0.5}, 1.5), ConfigError);
}

TEST_CASE("ctrv output is non-increasing for constant pointwise probabilities") {
    const auto pred = ctrv_predict(std::vector<double>(10, 0.4), 0.8);
    for (std::size_t j = 1; j < 10; ++j) CHECK(pred.probs[j] <= pred.probs[j - 1]);
}

TEST_CASE("threshold semantics include the boundary and respect monotonicity in h") {
    ClickPrediction pred;
    pred.probs = {0.3, 0.18, 0.1};
    pred.perm = Permutation::identity(3);
    const auto cv = threshold_clicks(pred, 0.18);
    CHECK(cv.clicks == std::vector<std::uint8_t>{1, 1, 0});
    const auto none = threshold_clicks(pred, 0.9);
    CHECK(none.clicks == std::vector<std::uint8_t>{0, 0, 0});
    CHECK_THROWS_AS(threshold_clicks(pred, 0.0), ConfigError);

    for (double h1 : {0.05, 0.15, 0.2}) {
        for (double h2 : {0.25, 0.5}) {
            const auto a = threshold_clicks(pred, h1);
            const auto b = threshold_clicks(pred, h2);
            for (std::size_t i = 0; i < 3; ++i) CHECK(a.clicks[i] >= b.clicks[i]);
        }
    }
}

TEST_CASE("expected revenue in both modes") {
    CHECK(expected_page_revenue({1.0, 0.0, 1.0}, {10, 20, 30}, RevenueMode::Thresholded, 0.5) ==
          doctest::Approx(40.0));
    CHECK(expected_page_revenue({0.0, 0.0}, {10, 20}, RevenueMode::Thresholded, 0.5) ==
          doctest::Approx(0.0));
    CHECK(expected_page_revenue({0.5, 0.5}, {10, 10}, RevenueMode::Soft) == doctest::Approx(10.0));
    CHECK_THROWS_AS(expected_page_revenue({0.5}, {-1.0}, RevenueMode::Soft), IntegrityError);
    CHECK_THROWS_AS(expected_page_revenue({0.5}, {1.0, 2.0}, RevenueMode::Soft), ShapeError);
}

TEST_CASE("soft revenue is linear in bids") {
    const std::vector<double> probs = {0.2, 0.7, 0.1};
    const std::vector<double> bids = {5.0, 0.0, 12.0};
    std::vector<double> doubled = bids;
    for (double& b : doubled) b *= 2.0;
    CHECK(expected_page_revenue(probs, doubled, RevenueMode::Soft) ==
          doctest::Approx(2.0 * expected_page_revenue(probs, bids, RevenueMode::Soft)));
}

TEST_CASE("ctrv clicker follows the permuted page and counts calls") {
    const Dataset ds = tiny();
    const SearchPage& page = ds.pages[0];
    const CtrvClicker clicker(0.5);
    clicker.reset_calls();

    const int ctr_idx = ds.schema.cont_index("ctr_pred");
    const Permutation identity = Permutation::identity(page.size());
    const auto base = clicker.predict(page, identity);
    for (std::size_t j = 0; j < page.size(); ++j)
        CHECK(base.probs[j] ==
              doctest::Approx(page.items[j].cont[ctr_idx] * std::pow(0.5, double(j))));

    const Permutation reversed({4, 3, 2, 1, 0});
    const auto rev = clicker.predict(page, reversed);
    for (std::size_t j = 0; j < page.size(); ++j)
        CHECK(rev.probs[j] ==
              doctest::Approx(page.items[4 - j].cont[ctr_idx] * std::pow(0.5, double(j))));

    // purity: same inputs, same outputs
    const auto again = clicker.predict(page, reversed);
    CHECK(again.probs == rev.probs);
    CHECK(clicker.calls() == 3);

    Permutation bad;
    CHECK_THROWS_AS(clicker.predict(page, bad), ArgumentError);
}

TEST_CASE("clicker files carry a kind tag and load polymorphically") {
    const CtrvClicker clicker(0.77);
    const std::string path = "/tmp/revrank_ctrv.model";
    save_clicker(clicker, path);
    const auto loaded = load_clicker(path);
    CHECK(loaded->kind() == "ctrv");
    CHECK(dynamic_cast<CtrvClicker*>(loaded.get())->decay() == doctest::Approx(0.77));
    std::remove(path.c_str());
}
