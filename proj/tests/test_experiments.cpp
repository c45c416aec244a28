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

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qmimo;
namespace fs = std::filesystem;

namespace {

Json tiny_beam_config() {
    return Json::parse(R"({
        "experiment": "beam_pattern",
        "seed": 7,
        "output_dir": "UNSET",
        "system": {
            "n_fft": 64,
            "n_streams_tx": 4,
            "n_ant_tx": 4,
            "subband_count": 2,
            "trials": 3,
            "calibration_samples": 5000
        },
        "sweep": { "dac_bits": [1, 2, "inf"], "angles": 19 },
        "tolerances": { "s1_rel_frob": 0.5, "beam_peak_frac": 0.5, "aclr_db": 5.0 }
    })");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("qmimo_test_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config validation diagnoses the offending field") {
    SECTION("missing n_fft") {
        Json j = tiny_beam_config();
        j["system"].erase("n_fft");
        try {
            parse_experiment_config(j);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(e.field() == "system.n_fft");
            CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("missing"));
        }
    }
    SECTION("zero bits") {
        Json j = tiny_beam_config();
        j["sweep"]["dac_bits"] = Json::array({0});
        try {
            parse_experiment_config(j);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(e.field() == "sweep.dac_bits[0]");
            CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("inf"));
        }
    }
    SECTION("unknown experiment") {
        Json j = tiny_beam_config();
        j["experiment"] = "frobnicate";
        CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
    }
    SECTION("rate sweep requires receive antennas") {
        Json j = tiny_beam_config();
        j["experiment"] = "rate_sweep";
        try {
            parse_experiment_config(j);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(e.field() == "system.n_ant_rx");
        }
    }
    SECTION("bad transform name") {
        Json j = tiny_beam_config();
        j["system"]["transform"] = "wavelet";
        CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
    }
    SECTION("valid config resolves with defaults visible") {
        Json j = tiny_beam_config();
        j.erase("tolerances");
        const ExperimentConfig cfg = parse_experiment_config(j);
        const OrderedJson echo = resolved_config_json(cfg);
        CHECK(echo["system"]["n_fft"] == 64);
        CHECK(echo["system"]["transform"] == "haar");
        CHECK(echo["sweep"]["dac_bits"].back() == "inf");
        CHECK(echo["tolerances"]["aclr_db"] == 0.5);
    }
}

TEST_CASE("beam pattern run writes manifest, csv and summary") {
    TempDir tmp("beam");
    ExperimentConfig cfg = parse_experiment_config(tiny_beam_config());
    cfg.output_dir = (tmp.path / "run1").string();
    std::ostringstream log;
    const int status = run_experiment(cfg, log);
    CHECK(status == 0);

    const fs::path dir = tmp.path / "run1";
    REQUIRE(fs::exists(dir / "run_manifest.json"));
    REQUIRE(fs::exists(dir / "beam_pattern.csv"));
    REQUIRE(fs::exists(dir / "summary.json"));

    const std::string csv = slurp(dir / "beam_pattern.csv");
    CHECK_THAT(csv, Catch::Matchers::StartsWith("angle_rad,bits,bf_theory,bf_sim_mean,bf_sim_stderr"));
    // 3 resolutions x 19 angles + header
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 19);

    const Json manifest = Json::parse(slurp(dir / "run_manifest.json"));
    CHECK(manifest["config"]["seed"] == 7);
    CHECK(manifest["tool"] == "qmimo");

    const Json summary = Json::parse(slurp(dir / "summary.json"));
    CHECK(summary["checks"].is_array());

    SECTION("reruns produce byte-identical CSV bodies") {
        ExperimentConfig cfg2 = parse_experiment_config(tiny_beam_config());
        cfg2.output_dir = (tmp.path / "run2").string();
        std::ostringstream log2;
        CHECK(run_experiment(cfg2, log2) == 0);
        CHECK(slurp(tmp.path / "run2" / "beam_pattern.csv") == csv);
        CHECK(slurp(tmp.path / "run2" / "summary.json") == slurp(dir / "summary.json"));
    }
}

TEST_CASE("aclr run emits the inf token at infinite resolution") {
    TempDir tmp("aclr");
    Json j = tiny_beam_config();
    j["experiment"] = "aclr_sweep";
    ExperimentConfig cfg = parse_experiment_config(j);
    cfg.output_dir = (tmp.path / "run").string();
    std::ostringstream log;
    const int status = run_experiment(cfg, log);
    // at this tiny scale the 0.5 dB gate may or may not hold; the artifact
    // contract is what matters here
    (void)status;
    const std::string csv = slurp(tmp.path / "run" / "aclr.csv");
    CHECK_THAT(csv, Catch::Matchers::StartsWith("bits,aclr_db_theory,aclr_db_sim,aclr_db_sim_stderr"));
    CHECK_THAT(csv, Catch::Matchers::ContainsSubstring("inf,inf,inf"));
}

TEST_CASE("rate sweep run on a tiny system") {
    TempDir tmp("rate");
    Json j = Json::parse(R"({
        "experiment": "rate_sweep",
        "seed": 11,
        "system": {
            "n_fft": 32,
            "n_streams_tx": 4,
            "n_ant_tx": 4,
            "n_ant_rx": 3,
            "n_streams_rx": 3,
            "subband_count": 1,
            "input": "identity",
            "trials": 2,
            "calibration_samples": 20000
        },
        "sweep": { "dac_bits": [1, 3, "inf"], "snr_db": [-10, 10] }
    })");
    ExperimentConfig cfg = parse_experiment_config(j);
    cfg.output_dir = (tmp.path / "run").string();
    std::ostringstream log;
    CHECK(run_experiment(cfg, log) == 0);
    const std::string csv = slurp(tmp.path / "run" / "rate.csv");
    CHECK_THAT(csv, Catch::Matchers::StartsWith("snr_db,bits,rate_bound,capacity"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 3);
    const Json summary = Json::parse(slurp(tmp.path / "run" / "summary.json"));
    CHECK(summary["pass"] == true);
}

TEST_CASE("validate_linearization run on a tiny system") {
    TempDir tmp("validate");
    Json j = Json::parse(R"({
        "experiment": "validate_linearization",
        "seed": 13,
        "system": {
            "n_fft": 256,
            "n_streams_tx": 4,
            "n_ant_tx": 4,
            "n_ant_rx": 3,
            "n_streams_rx": 3,
            "subband_count": 2,
            "dac_bits": 3,
            "adc_bits": 3,
            "snr_db": 10.0,
            "trials": 20,
            "calibration_samples": 100000
        },
        "tolerances": { "fit_rel_frob": 0.15 }
    })");
    ExperimentConfig cfg = parse_experiment_config(j);
    cfg.output_dir = (tmp.path / "run").string();
    std::ostringstream log;
    CHECK(run_experiment(cfg, log) == 0);
    const std::string csv = slurp(tmp.path / "run" / "validation.csv");
    CHECK_THAT(csv, Catch::Matchers::ContainsSubstring("tx,"));
    CHECK_THAT(csv, Catch::Matchers::ContainsSubstring("e2e,"));
}

TEST_CASE("channel file loading") {
    TempDir tmp("chan");
    const fs::path file = tmp.path / "h.csv";
    write_text_file(file, "1,0,0,-1\n0.5,0.5,2,0\n");
    const Matrix h = detail::load_channel_csv(file.string(), "system.channel.file");
    REQUIRE(h.rows() == 2);
    REQUIRE(h.cols() == 2);
    CHECK(h(0, 0) == Complex(1, 0));
    CHECK(h(0, 1) == Complex(0, -1));
    CHECK(h(1, 0) == Complex(0.5, 0.5));
    CHECK(h(1, 1) == Complex(2, 0));

    write_text_file(tmp.path / "bad.csv", "1,0,0\n");
    CHECK_THROWS_AS(detail::load_channel_csv((tmp.path / "bad.csv").string(), "system.channel.file"), ConfigError);
}
