#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "easbo_cli/commands.hpp"

using namespace easbo;
using namespace easbo::cli;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitCompute = 2;
constexpr int kExitPartial = 3;

struct Args {
    std::string config;
    std::string out;
    std::string mode = "sf";
    long long seed = -1;
    bool force = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Args& args, bool with_mode) {
    cmd->add_option("--config", args.config, "experiment configuration (INI)")->required();
    cmd->add_option("--out", args.out, "output directory (overrides output.dir)");
    cmd->add_option("--seed", args.seed, "random seed")->check(CLI::NonNegativeNumber);
    cmd->add_flag("--force", args.force, "redo preprocessing even when up to date");
    cmd->add_flag("--quiet", args.quiet, "log only to <out>/run.log");
    if (with_mode) cmd->add_option("--mode", args.mode, "sf or mf")->check(CLI::IsMember({"sf", "mf"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Earliest-activation-site search with manifold Gaussian-process Bayesian optimization"};
    app.require_subcommand(1);
    Args args;
    auto* gen = app.add_subcommand("gen-mesh", "generate the HF and LF meshes");
    auto* pre = app.add_subcommand("preprocess", "meshes, eigenbasis, lead fields and tensors for both fidelities");
    auto* truth = app.add_subcommand("ground-truth", "reference ECG at the configured truth node");
    auto* run = app.add_subcommand("run", "one single- or multi-fidelity BO run");
    auto* bench = app.add_subcommand("benchmark", "SF and MF runs over the configured seed list");
    auto* lmap = app.add_subcommand("loss-map", "exhaustive LF loss landscape and BO certification");
    for (auto* cmd : {gen, pre, truth, bench}) add_common(cmd, args, false);
    for (auto* cmd : {run, lmap}) add_common(cmd, args, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        const auto config = load_config(args.config);
        CommandOptions options;
        if (!args.out.empty()) options.out = args.out;
        if (args.seed >= 0) options.seed = static_cast<std::uint64_t>(args.seed);
        options.force = args.force;
        options.quiet = args.quiet;
        options.mode = args.mode == "mf" ? Mode::mf : Mode::sf;

        if (gen->parsed()) {
            cmd_gen_mesh(config, options);
        } else if (pre->parsed()) {
            const auto report = cmd_preprocess(config, options);
            std::cout << (report.up_to_date ? "up-to-date" : "preprocessed") << '\n';
        } else if (truth->parsed()) {
            const auto r = cmd_ground_truth(config, options);
            std::cout << "truth node " << r.truth.node.index << " -> " << r.reference.string() << '\n';
        } else if (run->parsed()) {
            const auto r = cmd_run(config, options);
            std::cout << (r.summary.converged ? "converged" : "not converged") << " after "
                      << r.summary.acquisitions << " acquisitions, cost " << r.summary.total_cost << " -> "
                      << r.dir.string() << '\n';
        } else if (bench->parsed()) {
            const auto r = cmd_benchmark(config, options);
            std::cout << "sf median cost " << r.sf.cost_median << " (IQR " << r.sf.cost_iqr << "), mf median cost "
                      << r.mf.cost_median << " (IQR " << r.mf.cost_iqr << ") -> " << r.dir.string() << '\n';
            if (r.partial_failure) return kExitPartial;
        } else if (lmap->parsed()) {
            const auto r = cmd_loss_map(config, options);
            std::cout << (r.all_certified ? "certified" : "NOT certified") << " (" << r.checks.size()
                      << " seeds) -> " << r.dir.string() << '\n';
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCompute;
    }
}
