/*
 * Copyright (c) 2026, kmmd project contributors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <kmmd/experiment.hpp>

namespace {

struct CommonOptions {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    unsigned threads = 0;
};

void attach_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config file (INI or JSON)")
        ->required();
    cmd->add_option("--seed", opts.seed, "override the config seed")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--out", opts.out, "output file (default: config output.path or stdout)");
    cmd->add_option("--threads", opts.threads, "worker threads; never changes results")
        ->envname("KMMD_THREADS");
}

kmmd::ExperimentConfig load(const CommonOptions& opts) {
    kmmd::ExperimentConfig cfg = kmmd::load_config_file(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    if (opts.threads > 0) cfg.n_threads = opts.threads;
    if (!opts.out.empty()) cfg.output_path = opts.out;
    return cfg;
}

int emit(const kmmd::ExperimentConfig& cfg, const std::string& text) {
    if (cfg.output_path.empty()) {
        std::cout << text;
        return 0;
    }
    std::ofstream file(cfg.output_path, std::ios::binary);
    if (!file) {
        std::cerr << "error: cannot open output file '" << cfg.output_path << "'\n";
        return 1;
    }
    file << text;
    return file ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel two-sample tests on synthetic manifold data"};
    app.require_subcommand(1);

    CommonOptions test_opts, power_opts, oracle_opts, witness_opts;
    CLI::App* cmd_test =
        app.add_subcommand("test", "run one calibrated test and print a JSON record");
    attach_common(cmd_test, test_opts);
    CLI::App* cmd_power =
        app.add_subcommand("power", "estimate rejection rates over a bandwidth ladder");
    attach_common(cmd_power, power_opts);
    CLI::App* cmd_oracle =
        app.add_subcommand("oracle", "tabulate the population statistic against its "
                                     "small-bandwidth law");
    attach_common(cmd_oracle, oracle_opts);
    CLI::App* cmd_witness =
        app.add_subcommand("witness", "evaluate the witness function on a latent grid");
    attach_common(cmd_witness, witness_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (cmd_test->parsed()) {
            const auto cfg = load(test_opts);
            const auto record = kmmd::run_single_test(cfg);
            return emit(cfg, kmmd::to_json(record).dump(2) + "\n");
        }
        if (cmd_power->parsed()) {
            const auto cfg = load(power_opts);
            return emit(cfg, kmmd::power_csv(kmmd::power_table(cfg)));
        }
        if (cmd_oracle->parsed()) {
            const auto cfg = load(oracle_opts);
            const auto report = kmmd::oracle_report(cfg);
            const int rc = emit(cfg, kmmd::oracle_csv(report));
            if (rc != 0) return rc;
            if (!report.monotone_ok) {
                std::cerr << "error: |limit ratio - 1| is not monotone along the "
                             "bandwidth ladder\n";
                return 3;
            }
            return 0;
        }
        if (cmd_witness->parsed()) {
            const auto cfg = load(witness_opts);
            return emit(cfg, kmmd::witness_csv(kmmd::witness_table(cfg)));
        }
    } catch (const kmmd::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
