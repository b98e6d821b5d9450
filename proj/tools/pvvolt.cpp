// Command-line front end: simulate | cluster | fit | qq | regulate | report.
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// failure.

#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pvvolt/config.hpp"
#include "pvvolt/pipeline.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
};

int run(const CliOptions& options,
        const std::function<std::string(const pvvolt::RunConfig&)>& command) {
    try {
        pvvolt::RunConfig cfg = pvvolt::load_run_config(options.config_path);
        if (options.out_dir) cfg.output_dir = *options.out_dir;
        if (options.seed) cfg.seed = *options.seed;
        std::cout << command(cfg) << "\n";
        return 0;
    } catch (const pvvolt::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const pvvolt::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const pvvolt::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic PCC voltage modeling and LTC regulation"};
    app.require_subcommand(1);

    CliOptions options;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", options.config_path, "Path to the run config JSON")
            ->required();
        sub->add_option("--out", options.out_dir, "Output directory override")
            ->envname("PVVOLT_OUT");
        sub->add_option("--seed", options.seed, "Global seed override")
            ->envname("PVVOLT_SEED");
    };

    struct Command {
        const char* name;
        const char* help;
        std::string (*fn)(const pvvolt::RunConfig&);
    };
    const Command commands[] = {
        {"simulate", "Generate synthetic per-minute power and voltage data",
         pvvolt::cmd_simulate},
        {"cluster", "Cluster the stacked power matrix by sparse factors",
         pvvolt::cmd_cluster},
        {"fit", "Fit the per-consumer voltage models", pvvolt::cmd_fit},
        {"qq", "Emit Q-Q points of residuals against the fitted model",
         pvvolt::cmd_qq},
        {"regulate", "Run the conventional and stochastic LTC regulators",
         pvvolt::cmd_regulate},
        {"report", "Collect tables and summaries from the fitted artifacts",
         pvvolt::cmd_report},
    };

    int exit_code = 0;
    for (const auto& command : commands) {
        auto* sub = app.add_subcommand(command.name, command.help);
        add_common(sub);
        sub->callback([&options, &command, &exit_code] {
            exit_code = run(options, command.fn);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // bad usage is a configuration error
    }
    return exit_code;
}
