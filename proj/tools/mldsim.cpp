#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mldsim/config.hpp"
#include "mldsim/runner.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "TOML config file (defaults apply without it)");
    cmd->add_option("--override", args.overrides, "config override, key=value; repeatable");
    cmd->add_option("--seed", args.seed, "random seed (wins over config and overrides)");
    cmd->add_option("--out", args.out_dir, "output directory (default $MLDSIM_OUT or ./out)");
}

mldsim::RunConfig load_config(const CommonArgs& args) {
    mldsim::TomlTable table;
    if (!args.config_path.empty()) table = mldsim::parse_toml_file(args.config_path);
    for (const auto& kv : args.overrides) mldsim::apply_override(table, kv);
    mldsim::RunConfig cfg = mldsim::RunConfig::from_table(table);
    if (args.seed) cfg.seed = *args.seed;
    cfg.reward.validate();
    cfg.episode.validate();
    cfg.ppo.validate();
    return cfg;
}

std::string resolve_out(const CommonArgs& args) {
    if (!args.out_dir.empty()) return args.out_dir;
    if (const char* env = std::getenv("MLDSIM_OUT"); env && *env) return env;
    return "out";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale dual-arm reinforcement learning sandbox"};
    app.require_subcommand(1);

    CommonArgs train_args, eval_args, cloud_args, plot_args;
    std::string checkpoint_path;
    int cloud_steps = 0;

    CLI::App* train = app.add_subcommand("train", "train both agents and write run artifacts");
    add_common(train, train_args);

    CLI::App* eval = app.add_subcommand("eval", "run greedy episodes from a checkpoint");
    add_common(eval, eval_args);
    eval->add_option("--checkpoint", checkpoint_path,
                     "checkpoint file (default <out>/checkpoint_final.json)");

    CLI::App* cloud = app.add_subcommand("dump-cloud", "write one labeled point cloud as CSV");
    add_common(cloud, cloud_args);
    cloud->add_option("--steps", cloud_steps, "world steps to advance first (default 0)");

    CLI::App* plot = app.add_subcommand("plot", "rebuild SVG curves from metrics CSV files");
    add_common(plot, plot_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            mldsim::run_train(load_config(train_args), resolve_out(train_args));
        } else if (eval->parsed()) {
            const std::string out = resolve_out(eval_args);
            std::string ckpt = checkpoint_path;
            if (ckpt.empty())
                ckpt = (std::filesystem::path(out) / "checkpoint_final.json").string();
            mldsim::run_eval(load_config(eval_args), ckpt, out);
        } else if (cloud->parsed()) {
            mldsim::run_dump_cloud(load_config(cloud_args), resolve_out(cloud_args), cloud_steps);
        } else if (plot->parsed()) {
            mldsim::run_plot(resolve_out(plot_args));
        }
    } catch (const mldsim::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
