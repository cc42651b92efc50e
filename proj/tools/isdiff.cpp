// isdiff: importance-sampling estimators for small-noise diffusions.

#include <string>

#include "CLI11.hpp"

#include "../src/cli/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"importance sampling for small-noise diffusions"};
    app.set_version_flag("--version", "isdiff 0.1.0");
    app.require_subcommand(1);

    struct SubArgs {
        std::string config;
        isdiff::cli::CliOverrides ov;
    };

    auto add_common = [](CLI::App* sub, SubArgs& args) {
        sub->add_option("-c,--config", args.config, "JSON experiment config")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option_function<std::string>(
            "-o,--out", [&args](const std::string& v) { args.ov.out_dir = v; },
            "run directory (overrides output.dir)");
        sub->add_option_function<uint64_t>(
            "-s,--seed", [&args](uint64_t v) { args.ov.seed = v; },
            "RNG seed (overrides simulation.seed)");
        sub->add_option_function<int>(
            "-t,--threads", [&args](int v) { args.ov.threads = v; },
            "worker threads (overrides simulation.threads)")
            ->check(CLI::Range(1, 4096));
    };

    SubArgs est, exp, chk, cmp, pde;
    add_common(app.add_subcommand("estimate", "run the IS and direct estimators"), est);
    add_common(app.add_subcommand("expand", "small-noise expansion v0 + eps v1"), exp);
    add_common(app.add_subcommand("check", "verify the attached subsolution"), chk);
    add_common(app.add_subcommand("compare", "rank several controls"), cmp);
    add_common(app.add_subcommand("pde", "1D PDE oracle fields"), pde);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 1 : 0;
    }

    if (app.got_subcommand("estimate")) return isdiff::cli::cmd_estimate(est.config, est.ov);
    if (app.got_subcommand("expand")) return isdiff::cli::cmd_expand(exp.config, exp.ov);
    if (app.got_subcommand("check")) return isdiff::cli::cmd_check(chk.config, chk.ov);
    if (app.got_subcommand("compare")) return isdiff::cli::cmd_compare(cmp.config, cmp.ov);
    if (app.got_subcommand("pde")) return isdiff::cli::cmd_pde(pde.config, pde.ov);
    return 1;
}
