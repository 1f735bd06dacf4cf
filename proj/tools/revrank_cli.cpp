#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "revrank/common.hpp"
#include "revrank/experiment.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

void attach_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--seed", flags.seed, "master seed (overrides config)");
    cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
}

revrank::ExperimentConfig resolve(const CommonFlags& flags) {
    revrank::ExperimentConfig cfg;
    if (!flags.config_path.empty()) cfg = revrank::ExperimentConfig::from_file(flags.config_path);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.out_dir) cfg.out_dir = *flags.out_dir;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"revenue-aware reranking toolkit"};
    app.require_subcommand(1);

    CommonFlags gen_flags, train_c_flags, eval_c_flags, train_r_flags, eval_r_flags, sweep_a_flags,
        sweep_k_flags, bench_flags, grid_flags;
    std::string clicker_path, reranker_path;
    std::vector<std::string> clicker_paths;
    bool identity_stub = false;
    std::vector<double> alpha_override;
    std::vector<int> k_override;
    std::vector<std::size_t> b_override;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic click log");
    attach_common(gen, gen_flags);

    auto* train_c = app.add_subcommand("train-clicker", "train the configured click model");
    attach_common(train_c, train_c_flags);

    auto* eval_c = app.add_subcommand("eval-clicker", "evaluate a click model on the test split");
    attach_common(eval_c, eval_c_flags);
    eval_c->add_option("--clicker", clicker_path, "clicker model file")->required();

    auto* train_r = app.add_subcommand("train-reranker", "train the scorer against a frozen clicker");
    attach_common(train_r, train_r_flags);
    train_r->add_option("--clicker", clicker_path, "clicker model file")->required();

    auto* eval_r = app.add_subcommand("eval-reranker", "evaluate reranking quality on the test split");
    attach_common(eval_r, eval_r_flags);
    eval_r->add_option("--clicker", clicker_path, "clicker model file")->required();
    eval_r->add_option("--reranker", reranker_path, "reranker checkpoint (.params)");
    eval_r->add_flag("--identity", identity_stub, "evaluate the identity reranker instead");

    auto* sweep_a = app.add_subcommand("sweep-alpha", "revenue/relevance trade-off sweep");
    attach_common(sweep_a, sweep_a_flags);
    sweep_a->add_option("--clicker", clicker_paths, "clicker model files")->required();
    sweep_a->add_option("--alpha", alpha_override, "alpha values (overrides config)");

    auto* sweep_kc = app.add_subcommand("sweep-k", "neighbor-window sweep for the tree clicker");
    attach_common(sweep_kc, sweep_k_flags);
    sweep_kc->add_option("--k", k_override, "k values (overrides config)");

    auto* bench = app.add_subcommand("bench-attention", "batched inference latency table");
    attach_common(bench, bench_flags);
    bench->add_option("--clicker", clicker_path, "saint clicker model file")->required();
    bench->add_option("--b", b_override, "pages-per-batch values (overrides config)");

    auto* grid = app.add_subcommand("grid-search", "exhaustive hyperparameter grid");
    attach_common(grid, grid_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            revrank::cmd_gen_data(resolve(gen_flags));
        } else if (train_c->parsed()) {
            revrank::cmd_train_clicker(resolve(train_c_flags));
        } else if (eval_c->parsed()) {
            revrank::cmd_eval_clicker(resolve(eval_c_flags), clicker_path);
        } else if (train_r->parsed()) {
            revrank::cmd_train_reranker(resolve(train_r_flags), clicker_path);
        } else if (eval_r->parsed()) {
            if (!identity_stub && reranker_path.empty())
                throw revrank::ConfigError("eval-reranker needs --reranker or --identity");
            revrank::cmd_eval_reranker(resolve(eval_r_flags), clicker_path, reranker_path,
                                       identity_stub);
        } else if (sweep_a->parsed()) {
            auto cfg = resolve(sweep_a_flags);
            if (!alpha_override.empty()) cfg.sweep.alphas = alpha_override;
            revrank::cmd_sweep_alpha(cfg, clicker_paths);
        } else if (sweep_kc->parsed()) {
            auto cfg = resolve(sweep_k_flags);
            if (!k_override.empty()) cfg.sweep.k_values = k_override;
            revrank::cmd_sweep_k(cfg);
        } else if (bench->parsed()) {
            auto cfg = resolve(bench_flags);
            if (!b_override.empty()) cfg.sweep.b_values = b_override;
            revrank::cmd_bench_attention(cfg, clicker_path);
        } else if (grid->parsed()) {
            revrank::cmd_grid_search(resolve(grid_flags));
        }
    } catch (const revrank::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const revrank::SchemaError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    return 0;
}
