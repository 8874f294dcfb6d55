#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cspdc/config.hpp"
#include "cspdc/errors.hpp"
#include "cspdc/pipelines.hpp"

namespace {

using cspdc::pipelines::RunOptions;

struct Cli {
    RunOptions options;
    std::string inequality;
};

void add_common(CLI::App* cmd, Cli& cli, bool needs_config) {
    auto* config =
        cmd->add_option("--config", cli.options.config_path, "run config file");
    if (needs_config) config->required();
    cmd->add_option("--out", cli.options.out_dir, "output directory")
        ->required();
    cmd->add_option("--seed", cli.options.seed,
                    "override the seed from the config")
        ->each([&cli](const std::string&) { cli.options.seed_set = true; });
    cmd->add_flag("--force", cli.options.force,
                  "reuse an existing output directory");
    cmd->add_flag("--paper-exact", cli.options.paper_exact,
                  "ignore run.time_scale and simulate full duration");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cascaded-triplet experiment simulator and analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", cspdc::config::version_string());

    Cli cli;
    add_common(app.add_subcommand(
                   "simulate", "generate one time-tag acquisition"),
               cli, true);
    add_common(app.add_subcommand(
                   "histogram", "two-fold delay histogram and peak SNR"),
               cli, true);
    add_common(app.add_subcommand(
                   "phase-scan", "equatorial analyzer scan and cosine fit"),
               cli, true);
    add_common(app.add_subcommand(
                   "tomo", "27-setting tomography and state reconstruction"),
               cli, true);
    auto* inequality = app.add_subcommand(
        "inequality", "acquire and evaluate a Bell-type combination");
    inequality
        ->add_option("which", cli.inequality,
                     "one of mermin, svetlichny, chsh")
        ->required();
    add_common(inequality, cli, true);
    add_common(app.add_subcommand(
                   "herald", "herald rates and projection sweep"),
               cli, true);
    add_common(app.add_subcommand(
                   "dispersion", "visibility against compensation length"),
               cli, true);
    add_common(app.add_subcommand(
                   "report", "collect results under a directory into a report"),
               cli, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("simulate")) {
            cspdc::pipelines::cmd_simulate(cli.options);
        } else if (app.got_subcommand("histogram")) {
            cspdc::pipelines::cmd_histogram(cli.options);
        } else if (app.got_subcommand("phase-scan")) {
            cspdc::pipelines::cmd_phase_scan(cli.options);
        } else if (app.got_subcommand("tomo")) {
            cspdc::pipelines::cmd_tomo(cli.options);
        } else if (app.got_subcommand("inequality")) {
            cspdc::pipelines::cmd_inequality(cli.options, cli.inequality);
        } else if (app.got_subcommand("herald")) {
            cspdc::pipelines::cmd_herald(cli.options);
        } else if (app.got_subcommand("dispersion")) {
            cspdc::pipelines::cmd_dispersion(cli.options);
        } else if (app.got_subcommand("report")) {
            cspdc::pipelines::cmd_report(cli.options);
        }
    } catch (const cspdc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const cspdc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
