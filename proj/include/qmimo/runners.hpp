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
//
// Experiment drivers: each writes a run manifest, a plot-ready CSV, and a
// summary JSON with theory values, empirical values, standard errors and
// pass/fail against the configured tolerances.

#pragma once

#include "qmimo/experiments.hpp"

#include <iostream>

namespace qmimo {

namespace detail {

inline OrderedJson check_entry(const std::string& name, bool pass, const OrderedJson& details) {
    OrderedJson e;
    e["check"] = name;
    e["pass"] = pass;
    e["details"] = details;
    return e;
}

inline bool all_pass(const OrderedJson& checks) {
    for (const auto& c : checks)
        if (!c["pass"].get<bool>())
            return false;
    return true;
}

}  // namespace detail

inline std::filesystem::path prepare_output_dir(const ExperimentConfig& cfg) {
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// --------------------------------------------------------------------------
// beam_pattern: theory vs simulated spatial power per DAC resolution
// --------------------------------------------------------------------------

inline int run_beam_pattern(const ExperimentConfig& cfg, std::ostream& log) {
    const auto dir = prepare_output_dir(cfg);
    write_manifest(dir, cfg);
    const SpectralSweepResult sweep =
        run_spectral_sweep(cfg.system, cfg.sweep.dac_bits, cfg.sweep.angle_count, cfg.workers);

    CsvWriter csv(dir / "beam_pattern.csv");
    csv.row({"angle_rad", "bits", "bf_theory", "bf_sim_mean", "bf_sim_stderr"});
    for (const auto& res : sweep.per_bits)
        for (Index a = 0; a < sweep.angles.size(); ++a)
            csv.row({CsvWriter::num(sweep.angles(a)), detail::bits_token(res.bits),
                     CsvWriter::num(res.beam_theory(a)), CsvWriter::num(res.beam_sim(a)),
                     CsvWriter::num(res.beam_sim_stderr(a))});

    OrderedJson checks = OrderedJson::array();
    double previous_main_lobe = -1.0;
    bool lobes_ordered = true;
    for (const auto& res : sweep.per_bits) {
        const double peak = res.beam_theory.maxCoeff();
        const double dev = (res.beam_theory - res.beam_sim).cwiseAbs().maxCoeff();
        OrderedJson d;
        d["bits"] = detail::bits_token(res.bits);
        d["theory_peak"] = peak;
        d["max_abs_deviation"] = dev;
        d["deviation_over_peak"] = dev / peak;
        d["s1_rel_frob_err"] = rel_frobenius_error(res.s_sim[0], res.s_theory[0]);
        checks.push_back(detail::check_entry("beam_overlay_bits_" + detail::bits_token(res.bits),
                                             dev <= cfg.tolerances.beam_peak_frac * peak, d));
        if (res.bits != QuantizerSpec::kInfiniteBits) {
            const double main_lobe = beam_power(res.s_theory[0], cfg.beam_angle_rad);
            if (previous_main_lobe >= 0.0 && main_lobe <= previous_main_lobe)
                lobes_ordered = false;
            previous_main_lobe = main_lobe;
        }
    }
    {
        OrderedJson d;
        d["note"] = "main-lobe theory gain must increase with DAC resolution";
        checks.push_back(detail::check_entry("main_lobe_monotone_in_bits", lobes_ordered, d));
    }

    OrderedJson summary;
    summary["experiment"] = cfg.experiment;
    summary["csv"] = "beam_pattern.csv";
    summary["checks"] = checks;
    summary["pass"] = detail::all_pass(checks);
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    log << "beam_pattern: " << (summary["pass"].get<bool>() ? "pass" : "FAIL") << " (" << sweep.seconds << " s), "
        << "artifacts in " << dir.string() << "\n";
    return summary["pass"].get<bool>() ? 0 : 1;
}

// --------------------------------------------------------------------------
// aclr_sweep: theory vs simulated ACLR per DAC resolution
// --------------------------------------------------------------------------

inline int run_aclr_sweep(const ExperimentConfig& cfg, std::ostream& log) {
    require(cfg.system.plan.band_count() >= 2, "aclr_sweep: needs at least two sub-bands");
    const auto dir = prepare_output_dir(cfg);
    write_manifest(dir, cfg);
    const SpectralSweepResult sweep = run_spectral_sweep(cfg.system, cfg.sweep.dac_bits, 1, cfg.workers);

    CsvWriter csv(dir / "aclr.csv");
    csv.row({"bits", "aclr_db_theory", "aclr_db_sim", "aclr_db_sim_stderr"});
    for (const auto& res : sweep.per_bits)
        csv.row({detail::bits_token(res.bits), CsvWriter::num(res.aclr_db_theory), CsvWriter::num(res.aclr_db_sim),
                 CsvWriter::num(res.aclr_db_sim_stderr)});

    OrderedJson checks = OrderedJson::array();
    double previous = -std::numeric_limits<double>::infinity();
    bool increasing = true;
    for (const auto& res : sweep.per_bits) {
        if (res.bits == QuantizerSpec::kInfiniteBits)
            continue;  // the +inf sentinel sits outside the dB comparison
        OrderedJson d;
        d["bits"] = detail::bits_token(res.bits);
        d["aclr_db_theory"] = res.aclr_db_theory;
        d["aclr_db_sim"] = res.aclr_db_sim;
        d["abs_error_db"] = std::abs(res.aclr_db_theory - res.aclr_db_sim);
        checks.push_back(detail::check_entry("aclr_agreement_bits_" + detail::bits_token(res.bits),
                                             std::abs(res.aclr_db_theory - res.aclr_db_sim) <= cfg.tolerances.aclr_db,
                                             d));
        if (res.aclr_db_theory <= previous)
            increasing = false;
        previous = res.aclr_db_theory;
    }
    {
        OrderedJson d;
        d["note"] = "theory ACLR must increase strictly with DAC resolution";
        checks.push_back(detail::check_entry("aclr_monotone_in_bits", increasing, d));
    }

    OrderedJson summary;
    summary["experiment"] = cfg.experiment;
    summary["csv"] = "aclr.csv";
    summary["checks"] = checks;
    summary["pass"] = detail::all_pass(checks);
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    log << "aclr_sweep: " << (summary["pass"].get<bool>() ? "pass" : "FAIL") << " (" << sweep.seconds << " s), "
        << "artifacts in " << dir.string() << "\n";
    return summary["pass"].get<bool>() ? 0 : 1;
}

// --------------------------------------------------------------------------
// rate_sweep: achievable-rate lower bound vs Shannon capacity over SNR
// --------------------------------------------------------------------------

inline int run_rate_sweep(const ExperimentConfig& cfg, std::ostream& log) {
    const auto dir = prepare_output_dir(cfg);
    write_manifest(dir, cfg);
    const RateSweepResult sweep =
        run_rate_sweep_grid(cfg.system, cfg.sweep.dac_bits, cfg.sweep.snr_db, cfg.workers);

    CsvWriter csv(dir / "rate.csv");
    csv.row({"snr_db", "bits", "rate_bound", "capacity"});
    for (const auto& p : sweep.points)
        csv.row({CsvWriter::num(p.snr_db), detail::bits_token(p.bits_dac), CsvWriter::num(p.rate_bound),
                 CsvWriter::num(p.capacity)});

    // bound <= capacity (1% slack) and non-decreasing in bits at each SNR
    OrderedJson checks = OrderedJson::array();
    bool dominated = true, monotone = true;
    double worst_margin = 0.0;
    const Index n_bits = static_cast<Index>(cfg.sweep.dac_bits.size());
    for (Index si = 0; si < static_cast<Index>(cfg.sweep.snr_db.size()); ++si) {
        double previous = -1.0;
        for (Index bi = 0; bi < n_bits; ++bi) {
            const RatePoint& p = sweep.points[static_cast<std::size_t>(si * n_bits + bi)];
            worst_margin = std::max(worst_margin, (p.rate_bound - p.capacity) / std::max(p.capacity, 1e-12));
            if (p.rate_bound > p.capacity * 1.01)
                dominated = false;
            if (previous >= 0.0 && p.rate_bound < previous * 0.99)
                monotone = false;
            previous = p.rate_bound;
        }
    }
    {
        OrderedJson d;
        d["worst_bound_over_capacity_excess"] = worst_margin;
        checks.push_back(detail::check_entry("bound_below_capacity", dominated, d));
    }
    {
        OrderedJson d;
        d["note"] = "rate bound must not decrease when converters gain bits (1% slack)";
        checks.push_back(detail::check_entry("bound_monotone_in_bits", monotone, d));
    }

    OrderedJson summary;
    summary["experiment"] = cfg.experiment;
    summary["csv"] = "rate.csv";
    summary["checks"] = checks;
    summary["pass"] = detail::all_pass(checks);
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    log << "rate_sweep: " << (summary["pass"].get<bool>() ? "pass" : "FAIL") << " (" << sweep.seconds << " s), "
        << "artifacts in " << dir.string() << "\n";
    return summary["pass"].get<bool>() ? 0 : 1;
}

// --------------------------------------------------------------------------
// validate_linearization: calibrated model vs regression fit, tx and e2e
// --------------------------------------------------------------------------

inline int run_validate_linearization(const ExperimentConfig& cfg, std::ostream& log) {
    const auto dir = prepare_output_dir(cfg);
    write_manifest(dir, cfg);
    const auto t_start = std::chrono::steady_clock::now();

    SystemConfig sys = cfg.system;
    const Matrix pbar = sys.average_input_covariance();

    CsvWriter csv(dir / "validation.csv");
    csv.row({"stage", "bits", "gain_rel_err", "noise_rel_err", "fit_samples", "model_samples"});
    OrderedJson checks = OrderedJson::array();

    // transmit side: pooled regression of R on Z vs the calibrated model
    {
        RunOptions opt;
        opt.fit = FitTarget::tx;
        const TrialAggregate agg = run_trials(sys, opt);
        const RowMap chain = make_tx_chain(sys.w_tx, dac_specs_for(sys));
        const LinearModel model =
            estimate_linear_model(chain, pbar, sys.calibration_samples, sys.rng.child(kTheoryLane), cfg.workers);
        const double gain_err = rel_frobenius_error(agg.pooled_fit->gain, model.gain);
        const double noise_err = rel_frobenius_error(agg.pooled_fit->noise_cov, model.noise_cov);
        csv.row({"tx", detail::bits_token(sys.dac_bits), CsvWriter::num(gain_err), CsvWriter::num(noise_err),
                 std::to_string(agg.pooled_fit->sample_count), std::to_string(model.sample_count)});
        OrderedJson d;
        d["gain_rel_err"] = gain_err;
        d["noise_rel_err"] = noise_err;
        checks.push_back(detail::check_entry(
            "tx_fit_matches_model", gain_err <= cfg.tolerances.fit_rel_frob && noise_err <= cfg.tolerances.fit_rel_frob,
            d));
    }

    // end-to-end: pin the channel, derive sigma from the operating SNR
    if (sys.n_ant_rx >= 1) {
        SystemConfig e2e = sys;
        e2e.resample_channel = false;
        if (e2e.channel.size() == 0)
            e2e.channel = sample_rayleigh_channel(e2e.n_ant_rx, e2e.n_ant_tx, e2e.rng.child(0).child(lanes::channel));
        if (!(e2e.noise_std > 0.0))
            e2e.noise_std = std::sqrt(snr_to_noise_var(e2e.channel, pbar, cfg.snr_db));

        RunOptions opt;
        opt.include_rx = true;
        opt.fit = FitTarget::e2e;
        const TrialAggregate agg = run_trials(e2e, opt);

        const std::vector<QuantizerSpec> dac = dac_specs_for(e2e);
        const std::vector<QuantizerSpec> adc =
            adc_specs_for(e2e, dac, e2e.channel, e2e.rng.child(0).child(lanes::adc_calibration));
        const RowMap chain = make_e2e_chain(e2e.w_tx, dac, e2e.channel, e2e.noise_std, e2e.w_rx, adc);
        const LinearModel model =
            estimate_linear_model(chain, pbar, e2e.calibration_samples, e2e.rng.child(kTheoryLane + 1), cfg.workers);
        const double gain_err = rel_frobenius_error(agg.pooled_fit->gain, model.gain);
        const double noise_err = rel_frobenius_error(agg.pooled_fit->noise_cov, model.noise_cov);
        csv.row({"e2e", detail::bits_token(e2e.adc_bits), CsvWriter::num(gain_err), CsvWriter::num(noise_err),
                 std::to_string(agg.pooled_fit->sample_count), std::to_string(model.sample_count)});
        OrderedJson d;
        d["gain_rel_err"] = gain_err;
        d["noise_rel_err"] = noise_err;
        d["snr_db"] = cfg.snr_db;
        checks.push_back(detail::check_entry(
            "e2e_fit_matches_model",
            gain_err <= cfg.tolerances.fit_rel_frob && noise_err <= cfg.tolerances.fit_rel_frob, d));
    }

    OrderedJson summary;
    summary["experiment"] = cfg.experiment;
    summary["csv"] = "validation.csv";

    // optional: deterministic-transform comparison, reported but not gated
    if (cfg.compare_fft) {
        SystemConfig fft_sys = cfg.system;
        fft_sys.transform = TransformKind::fft;
        const TrialAggregate haar_agg = run_trials(cfg.system, RunOptions{});
        const TrialAggregate fft_agg = run_trials(fft_sys, RunOptions{});
        OrderedJson d;
        for (Index m = 0; m < haar_agg.nu.size(); ++m) {
            const double se = std::hypot(haar_agg.nu_stderr(m), fft_agg.nu_stderr(m));
            OrderedJson band;
            band["nu_haar"] = haar_agg.nu(m);
            band["nu_fft"] = fft_agg.nu(m);
            band["gap_in_stderrs"] = se > 0.0 ? std::abs(haar_agg.nu(m) - fft_agg.nu(m)) / se : 0.0;
            d["band_" + std::to_string(m + 1)] = band;
        }
        summary["fft_vs_haar"] = d;  // informational
    }

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    summary["checks"] = checks;
    summary["pass"] = detail::all_pass(checks);
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    log << "validate_linearization: " << (summary["pass"].get<bool>() ? "pass" : "FAIL") << " (" << seconds
        << " s), artifacts in " << dir.string() << "\n";
    return summary["pass"].get<bool>() ? 0 : 1;
}

// --------------------------------------------------------------------------
// custom: theory-vs-simulation spectral validation of the configured system
// --------------------------------------------------------------------------

inline int run_custom(const ExperimentConfig& cfg, std::ostream& log) {
    const auto dir = prepare_output_dir(cfg);
    write_manifest(dir, cfg);
    const std::vector<int> bits{cfg.system.dac_bits};
    const SpectralSweepResult sweep = run_spectral_sweep(cfg.system, bits, cfg.sweep.angle_count, cfg.workers);
    const SpectralBitsResult& res = sweep.per_bits[0];

    CsvWriter csv(dir / "spectral.csv");
    csv.row({"band", "delta", "nu_theory", "nu_sim", "nu_sim_stderr", "nu_floor"});
    for (Index m = 0; m < res.nu_theory.size(); ++m)
        csv.row({std::to_string(m + 1), CsvWriter::num(cfg.system.plan.fraction(static_cast<int>(m + 1))),
                 CsvWriter::num(res.nu_theory(m)), CsvWriter::num(res.nu_sim(m)),
                 CsvWriter::num(res.nu_sim_stderr(m)), CsvWriter::num(res.floor_theory(m))});

    OrderedJson checks = OrderedJson::array();
    for (Index m = 0; m < res.nu_theory.size(); ++m) {
        OrderedJson d;
        d["band"] = m + 1;
        d["s_rel_frob_err"] = res.s_theory[static_cast<std::size_t>(m)].norm() > 0.0
                                  ? rel_frobenius_error(res.s_sim[static_cast<std::size_t>(m)],
                                                        res.s_theory[static_cast<std::size_t>(m)])
                                  : 0.0;
        checks.push_back(detail::check_entry("s_band_" + std::to_string(m + 1),
                                             d["s_rel_frob_err"].get<double>() <= cfg.tolerances.s1_rel_frob, d));
    }

    OrderedJson summary;
    summary["experiment"] = cfg.experiment;
    summary["csv"] = "spectral.csv";
    if (res.nu_theory.size() >= 2) {
        summary["aclr_db_theory"] = res.aclr_db_theory;
        summary["aclr_db_sim"] = res.aclr_db_sim;
    }
    summary["checks"] = checks;
    summary["pass"] = detail::all_pass(checks);
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    log << "custom: " << (summary["pass"].get<bool>() ? "pass" : "FAIL") << " (" << sweep.seconds << " s), "
        << "artifacts in " << dir.string() << "\n";
    return summary["pass"].get<bool>() ? 0 : 1;
}

inline int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    if (cfg.experiment == "beam_pattern")
        return run_beam_pattern(cfg, log);
    if (cfg.experiment == "aclr_sweep")
        return run_aclr_sweep(cfg, log);
    if (cfg.experiment == "rate_sweep")
        return run_rate_sweep(cfg, log);
    if (cfg.experiment == "validate_linearization")
        return run_validate_linearization(cfg, log);
    if (cfg.experiment == "custom")
        return run_custom(cfg, log);
    throw ConfigError("experiment", "unknown experiment " + cfg.experiment);
}

}  // namespace qmimo
