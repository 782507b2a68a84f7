#include "mfsmp/experiment.hpp"
#include "mfsmp/core.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Interacting-particle checks of the stochastic maximum principle for mean-field singular control"};
    app.footer(mfsmp::exit_code_help() +
               "\nCommands: simulate, cost, check-strict, check-relaxed, check-near, improve,\n"
               "          convergence, chattering-study, duality-study\n"
               "Environment: MFSMP_THREADS sets the worker thread count.");
    app.set_version_flag("--version", std::string(mfsmp::kVersion));

    std::string command, config_path, out_dir = "out";
    std::optional<std::uint64_t> seed;
    app.add_option("command", command, "experiment to run")->required();
    app.add_option("--config", config_path, "JSON configuration file")->required();
    app.add_option("--seed", seed, "override the configured seed");
    app.add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return mfsmp::exit_usage;
    }

    if (const char* t = std::getenv("MFSMP_THREADS")) {
        try {
            int n = std::stoi(t);
            if (n < 1) throw std::invalid_argument("nonpositive");
            mfsmp::set_thread_count(n);
        } catch (const std::exception&) {
            std::cerr << "usage error: MFSMP_THREADS must be a positive integer\n";
            return mfsmp::exit_usage;
        }
    }

    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "file system error: cannot open " << config_path << '\n';
        return mfsmp::exit_io;
    }
    nlohmann::json config;
    try {
        config = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return mfsmp::exit_config;
    }
    return mfsmp::run_experiment_guarded(command, config, seed, out_dir, std::cout, std::cerr);
}
