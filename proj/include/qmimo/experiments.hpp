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

#pragma once

#include "qmimo/rate.hpp"
#include "qmimo/simkit.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qmimo {

inline constexpr const char* kVersion = "0.1.0";

// Theory models in experiment drivers draw from lanes far above any trial
// index, so trial streams and calibration streams never collide.
inline constexpr std::uint64_t kTheoryLane = 1u << 20;

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct SweepSpec {
    std::vector<int> dac_bits;  // QuantizerSpec::kInfiniteBits encodes "inf"
    std::vector<double> snr_db;
    Index angle_count = 181;
};

struct Tolerances {
    double s1_rel_frob = 0.05;    // in-band covariance, theory vs simulation
    double beam_peak_frac = 0.05; // beam overlay deviation over the theory peak
    double aclr_db = 0.5;         // theory vs simulation ACLR
    double fit_rel_frob = 0.05;   // regression fit vs calibrated model
};

struct ExperimentConfig {
    std::string experiment;  // beam_pattern | aclr_sweep | rate_sweep | validate_linearization | custom
    SystemConfig system;
    SweepSpec sweep;
    Tolerances tolerances;
    std::string output_dir;
    int workers = 0;
    double snr_db = 10.0;      // operating point for receive-side experiments
    bool compare_fft = false;  // extra haar-vs-fft report in validate_linearization
    std::string channel_source = "rayleigh";
    double beam_angle_rad = std::numbers::pi / 4.0;
    std::string input_kind = "beam";  // beam | identity
};

namespace detail {

inline std::string join_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

// Typed JSON access carrying the dotted field path for diagnostics.
class ConfigReader {
public:
    ConfigReader(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {
        if (!j.is_object())
            throw ConfigError(path_, "must be an object");
    }

    bool has(const std::string& key) const { return j_->contains(key); }

    const Json& raw(const std::string& key) const {
        if (!j_->contains(key))
            throw ConfigError(join_path(path_, key), "required field is missing");
        return (*j_)[key];
    }

    ConfigReader object(const std::string& key) const { return ConfigReader(raw(key), join_path(path_, key)); }

    std::optional<ConfigReader> maybe_object(const std::string& key) const {
        if (!has(key))
            return std::nullopt;
        return object(key);
    }

    long integer(const std::string& key) const {
        const Json& v = raw(key);
        if (!v.is_number_integer())
            throw ConfigError(join_path(path_, key), "must be an integer");
        return v.get<long>();
    }

    long integer_or(const std::string& key, long fallback) const { return has(key) ? integer(key) : fallback; }

    double number(const std::string& key) const {
        const Json& v = raw(key);
        if (!v.is_number())
            throw ConfigError(join_path(path_, key), "must be a number");
        return v.get<double>();
    }

    double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    bool boolean_or(const std::string& key, bool fallback) const {
        if (!has(key))
            return fallback;
        const Json& v = raw(key);
        if (!v.is_boolean())
            throw ConfigError(join_path(path_, key), "must be a boolean");
        return v.get<bool>();
    }

    std::string text(const std::string& key) const {
        const Json& v = raw(key);
        if (!v.is_string())
            throw ConfigError(join_path(path_, key), "must be a string");
        return v.get<std::string>();
    }

    std::string text_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? text(key) : fallback;
    }

    const std::string& path() const { return path_; }

private:
    const Json* j_;
    std::string path_;
};

inline int parse_bits(const Json& v, const std::string& path) {
    if (v.is_string()) {
        if (v.get<std::string>() == "inf")
            return QuantizerSpec::kInfiniteBits;
        throw ConfigError(path, "must be an integer >= 1 or \"inf\"");
    }
    if (!v.is_number_integer())
        throw ConfigError(path, "must be an integer >= 1 or \"inf\"");
    const long bits = v.get<long>();
    if (bits < 1 || bits > QuantizerSpec::kMaxBits)
        throw ConfigError(path, "must be an integer >= 1 or \"inf\"");
    return static_cast<int>(bits);
}

inline std::string bits_token(int bits) {
    return bits == QuantizerSpec::kInfiniteBits ? "inf" : std::to_string(bits);
}

inline std::string format_number(double v) {
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    if (std::isnan(v))
        return "nan";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// H from a CSV file: one row per receive antenna, re/im interleaved.
inline Matrix load_channel_csv(const std::string& file, const std::string& path) {
    std::ifstream in(file);
    if (!in)
        throw ConfigError(path, "cannot open channel file '" + file + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<double> values;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            values.push_back(std::stod(cell));
        rows.push_back(std::move(values));
    }
    if (rows.empty())
        throw ConfigError(path, "channel file '" + file + "' is empty");
    const std::size_t width = rows[0].size();
    if (width == 0 || width % 2 != 0)
        throw ConfigError(path, "channel file rows must hold interleaved re,im pairs");
    Matrix h(static_cast<Index>(rows.size()), static_cast<Index>(width / 2));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != width)
            throw ConfigError(path, "channel file rows have inconsistent lengths");
        for (std::size_t j = 0; j < width / 2; ++j)
            h(static_cast<Index>(i), static_cast<Index>(j)) = Complex(rows[i][2 * j], rows[i][2 * j + 1]);
    }
    return h;
}

}  // namespace detail

// The two experiment layouts of the reference study: a beamformed rank-1
// input over two equal sub-bands (spectral experiments) and an identity-
// covariance single-band input (rate experiments).
inline SystemConfig default_beam_system(std::uint64_t seed) {
    SystemConfig cfg;
    cfg.n_fft = 1024;
    cfg.n_streams_tx = 16;
    cfg.n_ant_tx = 16;
    cfg.n_ant_rx = 8;
    cfg.n_streams_rx = 8;
    cfg.plan = SubbandPlan::equal_blocks(1024, 2);
    const Vector e = array_response(16, std::numbers::pi / 4.0);
    cfg.covs = {Matrix((e * e.adjoint()) / 16.0), Matrix::Zero(16, 16)};
    cfg.dac_bits = 3;
    cfg.adc_bits = 3;
    cfg.w_tx = Matrix::Identity(16, 16);
    cfg.w_rx = Matrix::Identity(8, 8);
    cfg.trials = 100;
    cfg.calibration_samples = 200000;
    cfg.rng = RngStream{seed, 0};
    return cfg;
}

inline SystemConfig default_rate_system(std::uint64_t seed) {
    SystemConfig cfg;
    cfg.n_fft = 1024;
    cfg.n_streams_tx = 16;
    cfg.n_ant_tx = 16;
    cfg.n_ant_rx = 8;
    cfg.n_streams_rx = 8;
    cfg.plan = SubbandPlan::equal_blocks(1024, 1);
    cfg.covs = {Matrix::Identity(16, 16)};
    cfg.dac_bits = 3;
    cfg.adc_bits = 3;
    cfg.w_tx = Matrix::Identity(16, 16);
    cfg.w_rx = Matrix::Identity(8, 8);
    cfg.trials = 10;
    cfg.calibration_samples = 200000;
    cfg.rng = RngStream{seed, 0};
    return cfg;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

inline ExperimentConfig parse_experiment_config(const Json& root) {
    detail::ConfigReader top(root, "");
    ExperimentConfig cfg;
    cfg.experiment = top.text("experiment");
    const bool is_rate = cfg.experiment == "rate_sweep";
    const bool is_validate = cfg.experiment == "validate_linearization";
    if (cfg.experiment != "beam_pattern" && cfg.experiment != "aclr_sweep" && !is_rate && !is_validate &&
        cfg.experiment != "custom")
        throw ConfigError("experiment",
                          "must be one of beam_pattern, aclr_sweep, rate_sweep, validate_linearization, custom");

    const std::uint64_t seed = static_cast<std::uint64_t>(top.integer_or("seed", 1));
    const std::uint64_t stream_id = static_cast<std::uint64_t>(top.integer_or("stream_id", 0));
    cfg.output_dir = top.text_or("output_dir", "out/" + cfg.experiment);
    cfg.workers = static_cast<int>(top.integer_or("workers", 0));

    detail::ConfigReader sys = top.object("system");
    SystemConfig& s = cfg.system;
    s.rng = RngStream{seed, stream_id};
    s.n_fft = sys.integer("n_fft");
    if (s.n_fft < 1)
        throw ConfigError("system.n_fft", "must be at least 1");
    s.n_streams_tx = sys.integer("n_streams_tx");
    s.n_ant_tx = sys.integer("n_ant_tx");
    const bool needs_rx = is_rate || is_validate;
    s.n_ant_rx = sys.integer_or("n_ant_rx", needs_rx ? -1 : 0);
    if (needs_rx && s.n_ant_rx < 1) {
        if (!sys.has("n_ant_rx"))
            throw ConfigError("system.n_ant_rx", "required field is missing");
        throw ConfigError("system.n_ant_rx", "must be at least 1");
    }
    s.n_streams_rx = sys.integer_or("n_streams_rx", s.n_ant_rx);

    const long bands = sys.integer_or("subband_count", is_rate ? 1 : 2);
    if (bands < 1 || bands > s.n_fft)
        throw ConfigError("system.subband_count", "must be between 1 and n_fft");
    s.plan = SubbandPlan::equal_blocks(s.n_fft, static_cast<int>(bands));

    cfg.input_kind = sys.text_or("input", is_rate ? "identity" : "beam");
    cfg.beam_angle_rad = sys.number_or("beam_angle_rad", std::numbers::pi / 4.0);
    if (cfg.input_kind == "beam") {
        const Vector e = array_response(s.n_streams_tx, cfg.beam_angle_rad);
        s.covs.assign(static_cast<std::size_t>(bands), Matrix::Zero(s.n_streams_tx, s.n_streams_tx));
        s.covs[0] = (e * e.adjoint()) / static_cast<double>(s.n_streams_tx);
    } else if (cfg.input_kind == "identity") {
        s.covs.assign(static_cast<std::size_t>(bands), Matrix::Zero(s.n_streams_tx, s.n_streams_tx));
        s.covs[0] = Matrix::Identity(s.n_streams_tx, s.n_streams_tx);
    } else {
        throw ConfigError("system.input", "must be \"beam\" or \"identity\"");
    }

    s.dac_bits = sys.has("dac_bits") ? detail::parse_bits(sys.raw("dac_bits"), "system.dac_bits") : 3;
    s.adc_bits = sys.has("adc_bits") ? detail::parse_bits(sys.raw("adc_bits"), "system.adc_bits") : 3;
    if (sys.has("dac_step"))
        s.dac_step = sys.number("dac_step");
    if (sys.has("adc_step"))
        s.adc_step = sys.number("adc_step");

    const std::string transform = sys.text_or("transform", "haar");
    if (transform == "haar")
        s.transform = TransformKind::haar;
    else if (transform == "fft")
        s.transform = TransformKind::fft;
    else
        throw ConfigError("system.transform", "must be \"haar\" or \"fft\"");

    s.trials = sys.integer_or("trials", is_rate ? 10 : 100);
    if (s.trials < 1)
        throw ConfigError("system.trials", "must be at least 1");
    s.calibration_samples = sys.integer_or("calibration_samples", 200000);
    if (s.calibration_samples < 1000)
        throw ConfigError("system.calibration_samples", "must be at least 1000");
    s.resample_transform = !sys.boolean_or("pin_transform", false);
    s.resample_channel = !sys.boolean_or("pin_channel", is_validate);
    s.noise_std = sys.number_or("noise_std", 0.0);
    cfg.snr_db = sys.number_or("snr_db", 10.0);

    if (sys.has("channel")) {
        const Json& ch = sys.raw("channel");
        if (ch.is_string()) {
            if (ch.get<std::string>() != "rayleigh")
                throw ConfigError("system.channel", "must be \"rayleigh\" or {\"file\": path}");
            cfg.channel_source = "rayleigh";
        } else if (ch.is_object() && ch.contains("file") && ch["file"].is_string()) {
            const std::string file = ch["file"].get<std::string>();
            s.channel = detail::load_channel_csv(file, "system.channel.file");
            if (s.n_ant_rx > 0 && (s.channel.rows() != s.n_ant_rx || s.channel.cols() != s.n_ant_tx))
                throw ConfigError("system.channel.file", "matrix shape does not match the antenna counts");
            cfg.channel_source = file;
        } else {
            throw ConfigError("system.channel", "must be \"rayleigh\" or {\"file\": path}");
        }
    }

    s.w_tx = Matrix::Identity(s.n_ant_tx, s.n_streams_tx);
    if (s.n_ant_rx > 0)
        s.w_rx = Matrix::Identity(s.n_streams_rx, s.n_ant_rx);

    // sweep axes
    if (auto sweep = top.maybe_object("sweep")) {
        if (sweep->has("dac_bits")) {
            const Json& list = sweep->raw("dac_bits");
            if (!list.is_array() || list.empty())
                throw ConfigError("sweep.dac_bits", "must be a non-empty array");
            for (std::size_t i = 0; i < list.size(); ++i)
                cfg.sweep.dac_bits.push_back(
                    detail::parse_bits(list[i], "sweep.dac_bits[" + std::to_string(i) + "]"));
        }
        if (sweep->has("snr_db")) {
            const Json& grid = sweep->raw("snr_db");
            if (grid.is_array()) {
                for (const auto& v : grid) {
                    if (!v.is_number())
                        throw ConfigError("sweep.snr_db", "entries must be numbers");
                    cfg.sweep.snr_db.push_back(v.get<double>());
                }
            } else if (grid.is_object()) {
                detail::ConfigReader g(grid, "sweep.snr_db");
                const double from = g.number("from");
                const double to = g.number("to");
                const double step = g.number("step");
                if (!(step > 0.0) || to < from)
                    throw ConfigError("sweep.snr_db", "need step > 0 and to >= from");
                for (double v = from; v <= to + 1e-9; v += step)
                    cfg.sweep.snr_db.push_back(v);
            } else {
                throw ConfigError("sweep.snr_db", "must be an array or {from, to, step}");
            }
            if (cfg.sweep.snr_db.empty())
                throw ConfigError("sweep.snr_db", "must be non-empty");
        }
        cfg.sweep.angle_count = sweep->integer_or("angles", 181);
        if (cfg.sweep.angle_count < 1)
            throw ConfigError("sweep.angles", "must be at least 1");
    }
    if (cfg.sweep.dac_bits.empty()) {
        if (is_rate)
            cfg.sweep.dac_bits = {1, 3, 5, QuantizerSpec::kInfiniteBits};
        else
            cfg.sweep.dac_bits = {1, 2, 3, 4, 5, 6, QuantizerSpec::kInfiniteBits};
    }
    if (cfg.sweep.snr_db.empty())
        for (double v = -20.0; v <= 20.0 + 1e-9; v += 4.0)
            cfg.sweep.snr_db.push_back(v);

    if (auto tol = top.maybe_object("tolerances")) {
        cfg.tolerances.s1_rel_frob = tol->number_or("s1_rel_frob", cfg.tolerances.s1_rel_frob);
        cfg.tolerances.beam_peak_frac = tol->number_or("beam_peak_frac", cfg.tolerances.beam_peak_frac);
        cfg.tolerances.aclr_db = tol->number_or("aclr_db", cfg.tolerances.aclr_db);
        cfg.tolerances.fit_rel_frob = tol->number_or("fit_rel_frob", cfg.tolerances.fit_rel_frob);
    }
    cfg.compare_fft = top.boolean_or("compare_fft", false);
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError(path, "cannot open config file");
    Json root;
    try {
        root = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path, std::string("JSON parse error: ") + e.what());
    }
    return parse_experiment_config(root);
}

inline OrderedJson resolved_config_json(const ExperimentConfig& cfg) {
    OrderedJson j;
    j["experiment"] = cfg.experiment;
    j["seed"] = cfg.system.rng.seed;
    j["stream_id"] = cfg.system.rng.stream_id;
    j["output_dir"] = cfg.output_dir;
    j["workers"] = cfg.workers;
    OrderedJson sys;
    sys["n_fft"] = cfg.system.n_fft;
    sys["n_streams_tx"] = cfg.system.n_streams_tx;
    sys["n_ant_tx"] = cfg.system.n_ant_tx;
    sys["n_ant_rx"] = cfg.system.n_ant_rx;
    sys["n_streams_rx"] = cfg.system.n_streams_rx;
    sys["subband_count"] = cfg.system.plan.band_count();
    sys["input"] = cfg.input_kind;
    sys["beam_angle_rad"] = cfg.beam_angle_rad;
    sys["dac_bits"] = detail::bits_token(cfg.system.dac_bits);
    sys["adc_bits"] = detail::bits_token(cfg.system.adc_bits);
    if (cfg.system.dac_step)
        sys["dac_step"] = *cfg.system.dac_step;
    if (cfg.system.adc_step)
        sys["adc_step"] = *cfg.system.adc_step;
    sys["transform"] = cfg.system.transform == TransformKind::haar ? "haar" : "fft";
    sys["trials"] = cfg.system.trials;
    sys["calibration_samples"] = cfg.system.calibration_samples;
    sys["pin_transform"] = !cfg.system.resample_transform;
    sys["pin_channel"] = !cfg.system.resample_channel;
    sys["channel"] = cfg.channel_source;
    sys["snr_db"] = cfg.snr_db;
    sys["noise_std"] = cfg.system.noise_std;
    j["system"] = std::move(sys);
    OrderedJson sweep;
    OrderedJson bits = OrderedJson::array();
    for (int b : cfg.sweep.dac_bits)
        bits.push_back(detail::bits_token(b));
    sweep["dac_bits"] = std::move(bits);
    sweep["snr_db"] = cfg.sweep.snr_db;
    sweep["angles"] = cfg.sweep.angle_count;
    j["sweep"] = std::move(sweep);
    OrderedJson tol;
    tol["s1_rel_frob"] = cfg.tolerances.s1_rel_frob;
    tol["beam_peak_frac"] = cfg.tolerances.beam_peak_frac;
    tol["aclr_db"] = cfg.tolerances.aclr_db;
    tol["fit_rel_frob"] = cfg.tolerances.fit_rel_frob;
    j["tolerances"] = std::move(tol);
    j["compare_fft"] = cfg.compare_fft;
    return j;
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path) {
        if (!out_)
            throw std::runtime_error("cannot open output file " + path.string());
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i)
                out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    static std::string num(double v) { return detail::format_number(v); }

private:
    std::ofstream out_;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open output file " + path.string());
    out << content;
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Resolved config + seed + versions; the only artifact carrying a timestamp,
// so CSV bodies stay byte-identical across reruns.
inline void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& cfg) {
    OrderedJson manifest;
    manifest["tool"] = "qmimo";
    manifest["version"] = kVersion;
    manifest["created_utc"] = utc_timestamp();
    manifest["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION);
    manifest["config"] = OrderedJson::parse(resolved_config_json(cfg).dump());
    write_text_file(dir / "run_manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Spectral sweep (beam pattern + ACLR machinery)
// ---------------------------------------------------------------------------

struct SpectralBitsResult {
    int bits = 0;
    LinearModel model;              // calibrated transmit model
    std::vector<Matrix> s_theory;   // per band
    RealVector nu_theory;
    double aclr_db_theory = 0.0;    // +inf at infinite resolution
    RealVector beam_theory;
    RealVector floor_theory;        // per band
    std::vector<Matrix> s_sim;      // trial-mean empirical S_m
    RealVector nu_sim;
    RealVector nu_sim_stderr;
    double aclr_db_sim = 0.0;
    double aclr_db_sim_stderr = 0.0;
    RealVector beam_sim;
    RealVector beam_sim_stderr;
};

struct SpectralSweepResult {
    RealVector angles;
    std::vector<SpectralBitsResult> per_bits;
    double seconds = 0.0;
};

inline RealVector beam_angle_grid(Index count) {
    // count points over (0, pi]; the ULA pattern mirrors on (pi, 2pi]
    RealVector angles(count);
    for (Index k = 0; k < count; ++k)
        angles(k) = std::numbers::pi * static_cast<double>(k + 1) / static_cast<double>(count);
    return angles;
}

// Theory (calibrated model -> S_m) and simulation (trial-mean S_m(N)) for a
// list of DAC resolutions. Trials share V and Z across resolutions: the same
// transform is applied to the horizontally stacked per-resolution transmit
// blocks, which keeps the 100-trial reference configuration fast and gives
// common random numbers across the bit sweep.
inline SpectralSweepResult run_spectral_sweep(const SystemConfig& base, const std::vector<int>& bits_list,
                                              Index angle_count, int workers) {
    base.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const Index nb = static_cast<Index>(bits_list.size());
    const int bands = base.plan.band_count();
    const Matrix pbar = base.average_input_covariance();
    const RealVector deltas = base.plan.fractions_vector();

    SpectralSweepResult out;
    out.angles = beam_angle_grid(angle_count);
    out.per_bits.resize(static_cast<std::size_t>(nb));

    // calibrated theory per resolution
    std::vector<std::vector<QuantizerSpec>> dacs(static_cast<std::size_t>(nb));
    for (Index b = 0; b < nb; ++b) {
        SystemConfig cfg_b = base;
        cfg_b.dac_bits = bits_list[static_cast<std::size_t>(b)];
        auto& res = out.per_bits[static_cast<std::size_t>(b)];
        res.bits = cfg_b.dac_bits;
        dacs[static_cast<std::size_t>(b)] = dac_specs_for(cfg_b);
        const RowMap chain = make_tx_chain(base.w_tx, dacs[static_cast<std::size_t>(b)]);
        res.model = estimate_linear_model(chain, pbar, base.calibration_samples,
                                          base.rng.child(kTheoryLane + static_cast<std::uint64_t>(b)), workers);
        res.s_theory.reserve(static_cast<std::size_t>(bands));
        for (int m = 1; m <= bands; ++m)
            res.s_theory.push_back(
                subband_covariance(res.model, base.covs[static_cast<std::size_t>(m - 1)], base.plan.fraction(m)));
        res.nu_theory = power_fractions(SpectralCovarianceSet{res.s_theory});
        if (bands >= 2)
            res.aclr_db_theory = to_db(aclr(res.nu_theory, 1, 2));
        res.floor_theory = nu_floor(res.model, pbar, deltas);
        res.beam_theory.resize(out.angles.size());
        for (Index a = 0; a < out.angles.size(); ++a)
            res.beam_theory(a) = beam_power(res.s_theory[0], out.angles(a));
    }

    // simulation: trials outer, resolutions inner
    struct PerBits {
        std::vector<Matrix> s;
        RealVector nu;
        double aclr_db = 0.0;
        RealVector beam;
    };
    std::vector<std::vector<PerBits>> slots(static_cast<std::size_t>(base.trials));

    std::optional<UnitaryTransform> shared_v;
    if (base.transform == TransformKind::fft)
        shared_v = UnitaryTransform::dft(base.n_fft);
    else if (!base.resample_transform)
        shared_v = UnitaryTransform::haar(base.n_fft, base.rng.child(0).child(lanes::transform));

    parallel_for_index(base.trials, workers, [&](Index t) {
        const RngStream trial_rng = base.rng.child(static_cast<std::uint64_t>(t));
        const UnitaryTransform v = shared_v ? *shared_v
                                            : UnitaryTransform::haar(base.n_fft, trial_rng.child(lanes::transform));
        const Matrix z = generate_streams(base.plan, base.covs, base.n_streams_tx, trial_rng.child(lanes::signal));
        const Matrix u = v.apply_adjoint(z);

        Matrix x_all(base.n_fft, nb * base.n_ant_tx);
        for (Index b = 0; b < nb; ++b)
            x_all.middleCols(b * base.n_ant_tx, base.n_ant_tx) =
                quantize_columns(u, dacs[static_cast<std::size_t>(b)]) * base.w_tx.transpose();
        const Matrix r_all = v.apply(x_all);

        auto& trial_slots = slots[static_cast<std::size_t>(t)];
        trial_slots.resize(static_cast<std::size_t>(nb));
        for (Index b = 0; b < nb; ++b) {
            PerBits& pb = trial_slots[static_cast<std::size_t>(b)];
            const Matrix r = r_all.middleCols(b * base.n_ant_tx, base.n_ant_tx);
            pb.s = empirical_subband_covariance(r, base.plan);
            pb.nu = power_fractions(SpectralCovarianceSet{pb.s});
            if (bands >= 2)
                pb.aclr_db = to_db(aclr(pb.nu, 1, 2));
            pb.beam.resize(out.angles.size());
            for (Index a = 0; a < out.angles.size(); ++a)
                pb.beam(a) = beam_power(pb.s[0], out.angles(a));
        }
    });

    // reduce in trial order
    for (Index b = 0; b < nb; ++b) {
        auto& res = out.per_bits[static_cast<std::size_t>(b)];
        res.s_sim.assign(static_cast<std::size_t>(bands), Matrix::Zero(base.n_ant_tx, base.n_ant_tx));
        std::vector<std::vector<double>> nu_samples(static_cast<std::size_t>(bands));
        std::vector<double> aclr_samples;
        bool aclr_finite = true;
        std::vector<std::vector<double>> beam_samples(static_cast<std::size_t>(out.angles.size()));
        for (Index t = 0; t < base.trials; ++t) {
            const PerBits& pb = slots[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)];
            for (int m = 0; m < bands; ++m) {
                res.s_sim[static_cast<std::size_t>(m)] += pb.s[static_cast<std::size_t>(m)];
                nu_samples[static_cast<std::size_t>(m)].push_back(pb.nu(m));
            }
            if (bands >= 2) {
                if (std::isfinite(pb.aclr_db))
                    aclr_samples.push_back(pb.aclr_db);
                else
                    aclr_finite = false;
            }
            for (Index a = 0; a < out.angles.size(); ++a)
                beam_samples[static_cast<std::size_t>(a)].push_back(pb.beam(a));
        }
        for (auto& s : res.s_sim)
            s /= static_cast<double>(base.trials);
        res.nu_sim = power_fractions(SpectralCovarianceSet{res.s_sim});
        res.nu_sim_stderr.resize(bands);
        for (int m = 0; m < bands; ++m)
            res.nu_sim_stderr(m) = detail::stderr_of(nu_samples[static_cast<std::size_t>(m)]);
        if (bands >= 2) {
            res.aclr_db_sim = to_db(aclr(res.nu_sim, 1, 2));
            res.aclr_db_sim_stderr = aclr_finite ? detail::stderr_of(aclr_samples) : 0.0;
        }
        res.beam_sim.resize(out.angles.size());
        res.beam_sim_stderr.resize(out.angles.size());
        for (Index a = 0; a < out.angles.size(); ++a) {
            res.beam_sim(a) = beam_power(res.s_sim[0], out.angles(a));
            res.beam_sim_stderr(a) = detail::stderr_of(beam_samples[static_cast<std::size_t>(a)]);
        }
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
}

// ---------------------------------------------------------------------------
// Rate sweep
// ---------------------------------------------------------------------------

struct RateSweepResult {
    std::vector<RatePoint> points;  // mean over channel realizations, grid-ordered
    double seconds = 0.0;
};

inline RateSweepResult run_rate_sweep_grid(const SystemConfig& base, const std::vector<int>& bits_list,
                                           const std::vector<double>& snr_grid, int workers) {
    base.validate();
    require(base.n_ant_rx >= 1, "rate sweep: receive antennas required");
    const auto t_start = std::chrono::steady_clock::now();
    const Matrix pbar = base.average_input_covariance();
    const RealVector deltas = base.plan.fractions_vector();

    std::vector<Matrix> channels;
    channels.reserve(static_cast<std::size_t>(base.trials));
    for (Index r = 0; r < base.trials; ++r) {
        if (base.channel.size() > 0)
            channels.push_back(base.channel);
        else
            channels.push_back(sample_rayleigh_channel(
                base.n_ant_rx, base.n_ant_tx,
                base.rng.child(static_cast<std::uint64_t>(base.resample_channel ? r : 0)).child(lanes::channel)));
    }

    struct Cell {
        double bound = 0.0;
        double capacity = 0.0;
    };
    const Index n_snr = static_cast<Index>(snr_grid.size());
    const Index n_bits = static_cast<Index>(bits_list.size());
    std::vector<Cell> cells(static_cast<std::size_t>(n_snr * n_bits * base.trials));
    const auto cell_at = [&](Index si, Index bi, Index r) -> Cell& {
        return cells[static_cast<std::size_t>((si * n_bits + bi) * base.trials + r)];
    };

    parallel_for_index(n_snr * n_bits * base.trials, workers, [&](Index flat) {
        const Index si = flat / (n_bits * base.trials);
        const Index bi = (flat / base.trials) % n_bits;
        const Index r = flat % base.trials;
        const int bits = bits_list[static_cast<std::size_t>(bi)];
        const Matrix& h = channels[static_cast<std::size_t>(r)];
        const double noise_var = snr_to_noise_var(h, pbar, snr_grid[static_cast<std::size_t>(si)]);
        const double sigma = std::sqrt(noise_var);

        SystemConfig cfg = base;
        cfg.dac_bits = bits;
        cfg.adc_bits = bits;
        cfg.noise_std = sigma;
        const std::vector<QuantizerSpec> dac = dac_specs_for(cfg);
        const RngStream point_rng =
            base.rng.child(static_cast<std::uint64_t>(r)).child(kTheoryLane + static_cast<std::uint64_t>(si * n_bits + bi));
        const std::vector<QuantizerSpec> adc = adc_specs_for(cfg, dac, h, point_rng.child(lanes::adc_calibration));
        const RowMap chain = make_e2e_chain(cfg.w_tx, dac, h, sigma, cfg.w_rx, adc);
        const LinearModel model =
            estimate_linear_model(chain, pbar, base.calibration_samples, point_rng.child(lanes::model));

        Cell& cell = cell_at(si, bi, r);
        cell.capacity = shannon_capacity(h, pbar, noise_var);
        cell.bound = rate_lower_bound(model, base.covs, deltas);
    });

    RateSweepResult out;
    for (Index si = 0; si < n_snr; ++si)
        for (Index bi = 0; bi < n_bits; ++bi) {
            RatePoint p;
            p.snr_db = snr_grid[static_cast<std::size_t>(si)];
            p.bits_dac = bits_list[static_cast<std::size_t>(bi)];
            p.bits_adc = p.bits_dac;
            for (Index r = 0; r < base.trials; ++r) {
                const Cell& cell = cell_at(si, bi, r);
                p.rate_bound += cell.bound;
                p.capacity += cell.capacity;
            }
            p.rate_bound /= static_cast<double>(base.trials);
            p.capacity /= static_cast<double>(base.trials);
            out.points.push_back(p);
        }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
}

}  // namespace qmimo
