#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "revrank/common.hpp"
#include "revrank/permutation.hpp"

namespace revrank {

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

struct CategoricalFeature {
    std::string name;
    std::size_t cardinality = 0;
};

// Column layout of a click-log dataset. The standard schema is the 22-column
// search log: per-query context, per-item description, auction fields, and
// the click label.
struct FeatureSchema {
    std::vector<CategoricalFeature> categorical;
    std::vector<std::string> continuous;
    std::string label_column = "click";
    std::string query_id_column = "qid";
    std::string position_column = "pos_fixed";
    std::string bid_column = "click_bid";

    static FeatureSchema standard();

    std::vector<std::string> csv_columns() const;  // canonical header order
    int cat_index(const std::string& name) const;
    int cont_index(const std::string& name) const;
    void validate() const;
};

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct ItemRecord {
    std::int64_t query_id = 0;
    int position = 0;  // 1..N in the logged (original) order
    int click = 0;
    double bid = 0.0;                // mirror of the bid column value
    std::vector<std::int64_t> cat;   // codes, schema.categorical order
    std::vector<double> cont;        // values, schema.continuous order
};

// One query's result page; items sorted by original position (this order is
// the initial ranking the reranker perturbs).
struct SearchPage {
    std::int64_t query_id = 0;
    std::vector<ItemRecord> items;

    std::size_t size() const { return items.size(); }
};

struct Dataset {
    FeatureSchema schema;
    std::vector<SearchPage> pages;
    // per categorical feature: code -> original string value
    std::vector<std::vector<std::string>> cat_dicts;
    std::string split_tag = "full";

    std::size_t page_len() const { return pages.empty() ? 0 : pages.front().items.size(); }
    std::size_t n_items() const { return pages.size() * page_len(); }
};

// ---------------------------------------------------------------------------
// IO / splitting
// ---------------------------------------------------------------------------

Dataset load_csv(const std::string& path, const FeatureSchema& schema);
void save_csv(const Dataset& ds, const std::string& path);

// Whole-page split by largest-remainder counts; deterministic under seed.
std::array<Dataset, 3> split(const Dataset& ds, const std::array<double, 3>& ratios,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

// Ground-truth click process: click_j ~ Bernoulli(sigmoid(logit_j)) with
//   logit_j = base + own(features_j) + position_decay*(slot_j - 1)
//           + context_strength * neighbor(features_{j-1}, features_j, features_{j+1})
// The neighbor term reads relative log-price and relevance of the adjacent
// slots, so context-aware clickers have learnable signal. All coefficients
// are configuration; defaults target roughly 3 clicks per 30-item page.
struct SyntheticConfig {
    std::size_t n_pages = 1000;
    std::size_t page_len = 30;
    std::uint64_t seed = 100;
    double context_strength = 1.0;

    double base_logit = -1.80;
    double rel_weight = 2.2;
    double price_weight = -0.15;      // on standardized log-price
    double coincidence_weight = 0.2;  // on category/subcategory matches
    double position_decay = -0.08;     // per slot, in logit space
    double neighbor_price_weight = 0.8;
    double neighbor_rel_weight = -1.2;

    double log_price_center = 5.756;  // standardization constants for ln(price)
    double log_price_scale = 2.0;
};

Dataset generate_synthetic(const SyntheticConfig& cfg);

// Ground-truth click probabilities for a page as laid out (index = slot).
// Recomputable after neighbor edits; used by generator and tests.
std::vector<double> synthetic_click_probs(const SearchPage& page, const FeatureSchema& schema,
                                          const SyntheticConfig& cfg);

// ---------------------------------------------------------------------------
// Model feature views
// ---------------------------------------------------------------------------

struct FeatureColumn {
    std::string name;
    bool categorical = false;
};

// Row-per-item feature view. Categorical cells hold codes stored as doubles;
// NaN marks a missing cell in either kind (out-of-page neighbor slots). For
// categorical columns the NaN cell means the dedicated missing category.
struct FeatureMatrix {
    std::vector<FeatureColumn> columns;
    std::vector<std::vector<double>> data;  // column-major
    std::vector<int> labels;                // click per row
    std::vector<std::int64_t> qids;         // query id per row
    std::size_t n_rows = 0;
    std::size_t page_len = 0;  // rows per page (pages are contiguous)
    int context_k = 0;
    std::string missing_marker = "nan";

    double cell(std::size_t row, std::size_t col) const { return data[col][row]; }
};

// The item feature list the clicker models train on: seven categorical
// (delivery flag, platform, auction winner, campaign type, display position,
// region, hour) and four continuous (price, predicted CTR, promotion power,
// bid).
const std::vector<std::string>& default_clicker_features();

bool is_categorical_feature(const FeatureSchema& schema, const std::string& name);

// Features of one page rendered under `perm` (display slot order; pos_fixed
// becomes the display slot). Identity order when perm is null.
void append_page_features(FeatureMatrix& out, const SearchPage& page, const Permutation* perm,
                          const FeatureSchema& schema, const std::vector<std::string>& features);

FeatureMatrix dataset_features(const Dataset& ds, const std::vector<std::string>& features);

// Stacks each row with its k preceding and k following in-page neighbors.
// Row width becomes (2k+1) x base width; out-of-page slots are missing.
FeatureMatrix expand_context(const FeatureMatrix& base, int k,
                             const std::string& missing_marker = "nan");

}  // namespace revrank
