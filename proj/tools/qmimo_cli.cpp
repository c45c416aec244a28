// SPDX-License-Identifier: Apache-2.0
//
// qmimo — numerical laboratory for quantized MIMO transceivers
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "qmimo/runners.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace {

struct Overrides {
    std::string output_dir;
    long seed = -1;
    long trials = -1;
    int workers = -1;
};

qmimo::ExperimentConfig load_with_overrides(const std::string& config_path, const Overrides& ov) {
    qmimo::ExperimentConfig cfg = qmimo::load_experiment_config(config_path);
    if (!ov.output_dir.empty())
        cfg.output_dir = ov.output_dir;
    if (ov.seed >= 0)
        cfg.system.rng.seed = static_cast<std::uint64_t>(ov.seed);
    if (ov.trials >= 1)
        cfg.system.trials = ov.trials;
    if (ov.workers >= 0)
        cfg.workers = ov.workers;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qmimo — linearized-model analysis and Monte Carlo validation of quantized MIMO transceivers"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;

    CLI::App* run = app.add_subcommand("run", "run an experiment described by a JSON config");
    run->add_option("config", config_path, "path to the experiment config")->required();
    run->add_option("--output-dir", ov.output_dir, "override the configured output directory");
    run->add_option("--seed", ov.seed, "override the configured seed");
    run->add_option("--trials", ov.trials, "override the configured trial count");
    run->add_option("--workers", ov.workers, "worker threads (0 = hardware concurrency)");

    CLI::App* validate = app.add_subcommand("validate", "parse a config, print the resolved settings, run nothing");
    validate->add_option("config", config_path, "path to the experiment config")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            const qmimo::ExperimentConfig cfg = load_with_overrides(config_path, ov);
            std::cout << qmimo::resolved_config_json(cfg).dump(2) << "\n";
            return 0;
        }
        const qmimo::ExperimentConfig cfg = load_with_overrides(config_path, ov);
        return qmimo::run_experiment(cfg, std::cout);
    } catch (const qmimo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
