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

#include "qmimo/channel.hpp"
#include "qmimo/linalg.hpp"
#include "qmimo/linearize.hpp"
#include "qmimo/quantizer.hpp"
#include "qmimo/random.hpp"
#include "qmimo/spectro.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace qmimo {

enum class TransformKind {
    haar,  // fresh Haar-distributed V (the modeled regime)
    fft,   // orthonormal DFT, i.e. the OFDM-like deterministic transform
};

// Fixed lanes partitioning a trial's stream among independent purposes.
namespace lanes {
inline constexpr std::uint64_t transform = 0;
inline constexpr std::uint64_t channel = 1;
inline constexpr std::uint64_t signal = 2;
inline constexpr std::uint64_t noise = 3;
inline constexpr std::uint64_t adc_calibration = 4;
inline constexpr std::uint64_t model = 5;
}  // namespace lanes

// Full transceiver description for a simulation run.
struct SystemConfig {
    Index n_fft = 0;
    Index n_streams_tx = 0;
    Index n_ant_tx = 0;
    Index n_ant_rx = 0;
    Index n_streams_rx = 0;
    SubbandPlan plan;
    std::vector<Matrix> covs;  // P_m per sub-band, n_streams_tx x n_streams_tx
    int dac_bits = QuantizerSpec::kInfiniteBits;
    int adc_bits = QuantizerSpec::kInfiniteBits;
    std::optional<double> dac_step;  // explicit shared step; omitted -> MSE-optimal per stream
    std::optional<double> adc_step;
    Matrix w_tx;
    Matrix w_rx;
    Matrix channel;  // fixed H; empty -> sampled per trial
    double noise_std = 0.0;
    TransformKind transform = TransformKind::haar;
    bool resample_transform = true;  // fresh V per trial
    bool resample_channel = true;    // fresh H per trial (when not fixed)
    Index trials = 100;
    Index calibration_samples = 200000;
    RngStream rng{1, 0};

    // P = sum_m delta_m P_m, the average per-row covariance the DACs see.
    Matrix average_input_covariance() const {
        Matrix p = Matrix::Zero(n_streams_tx, n_streams_tx);
        for (int m = 1; m <= plan.band_count(); ++m)
            p += plan.fraction(m) * covs[static_cast<std::size_t>(m - 1)];
        return hermitize(p);
    }

    bool channel_is_fixed() const { return channel.size() > 0 || !resample_channel; }

    void validate() const {
        require(n_fft >= 1, "system: n_fft must be at least 1");
        require(n_streams_tx >= 1 && n_ant_tx >= 1, "system: transmit dimensions must be at least 1");
        require(plan.size() == n_fft, "system: sub-band plan length must equal n_fft");
        require(static_cast<int>(covs.size()) == plan.band_count(), "system: one covariance per sub-band required");
        for (const auto& p : covs)
            require(p.rows() == n_streams_tx && p.cols() == n_streams_tx,
                    "system: sub-band covariance size mismatch");
        require(w_tx.rows() == n_ant_tx && w_tx.cols() == n_streams_tx, "system: precoder dimensions mismatch");
        if (n_ant_rx > 0) {
            require(n_streams_rx >= 1, "system: receive stream count must be at least 1");
            require(w_rx.rows() == n_streams_rx && w_rx.cols() == n_ant_rx, "system: combiner dimensions mismatch");
            if (channel.size() > 0)
                require(channel.rows() == n_ant_rx && channel.cols() == n_ant_tx,
                        "system: channel dimensions mismatch");
        }
        require(noise_std >= 0.0 && std::isfinite(noise_std), "system: noise std must be non-negative");
        require(trials >= 1, "system: at least one trial required");
        require(calibration_samples >= 1000, "system: at least 1000 calibration samples required");
    }
};

// Z with row n drawn from CN(0, P_{l_n}), rows independent. Bins whose band
// has a zero covariance come out exactly zero.
inline Matrix generate_streams(const SubbandPlan& plan, const std::vector<Matrix>& covs, Index n_streams,
                               RngStream rng) {
    require(static_cast<int>(covs.size()) == plan.band_count(), "generate_streams: one covariance per band required");
    std::vector<Matrix> factors;
    factors.reserve(covs.size());
    for (const auto& p : covs) {
        require(p.rows() == n_streams && p.cols() == n_streams, "generate_streams: covariance size mismatch");
        factors.push_back(gaussian_factor(p));
    }
    Sampler s(rng);
    Matrix z = Matrix::Zero(plan.size(), n_streams);
    Vector w;
    for (Index n = 0; n < plan.size(); ++n) {
        const Matrix& b = factors[static_cast<std::size_t>(plan.band_of(n) - 1)];
        if (b.cols() == 0)
            continue;
        w.resize(b.cols());
        for (Index k = 0; k < w.size(); ++k)
            w(k) = s.complex_gaussian();
        z.row(n) = (b * w).transpose();
    }
    return z;
}

// Per-stream DAC specs. Each stream is calibrated against its own marginal
// variance (sum_m delta_m P_m)_ii, halved per real dimension.
inline std::vector<QuantizerSpec> dac_specs_for(const SystemConfig& cfg) {
    if (cfg.dac_bits == QuantizerSpec::kInfiniteBits)
        return std::vector<QuantizerSpec>(static_cast<std::size_t>(cfg.n_streams_tx), QuantizerSpec::identity());
    if (cfg.dac_step)
        return std::vector<QuantizerSpec>(static_cast<std::size_t>(cfg.n_streams_tx),
                                          QuantizerSpec::uniform(cfg.dac_bits, *cfg.dac_step));
    const Matrix pbar = cfg.average_input_covariance();
    const double mean_marginal = pbar.trace().real() / static_cast<double>(cfg.n_streams_tx);
    std::vector<QuantizerSpec> specs;
    specs.reserve(static_cast<std::size_t>(cfg.n_streams_tx));
    for (Index i = 0; i < cfg.n_streams_tx; ++i) {
        double v = pbar(i, i).real() / 2.0;  // per real dimension
        if (!(v > 0.0))
            v = mean_marginal / 2.0;  // dead stream: fall back to the average power
        require(v > 0.0, "dac_specs_for: stream " + std::to_string(i) + " has zero input variance");
        specs.push_back(QuantizerSpec::mse_optimal(cfg.dac_bits, v));
    }
    return specs;
}

// Per-branch ADC specs, calibrated against the marginal variance of the
// quantizer's input rows H W_tx Q_tx(u) + sigma*xi, estimated by a short
// Monte Carlo over u ~ CN(0, P).
inline std::vector<QuantizerSpec> adc_specs_for(const SystemConfig& cfg, const std::vector<QuantizerSpec>& dac,
                                                const Matrix& h, RngStream rng) {
    require(h.rows() == cfg.n_ant_rx && h.cols() == cfg.n_ant_tx, "adc_specs_for: channel dimensions mismatch");
    if (cfg.adc_bits == QuantizerSpec::kInfiniteBits)
        return std::vector<QuantizerSpec>(static_cast<std::size_t>(cfg.n_ant_rx), QuantizerSpec::identity());
    if (cfg.adc_step)
        return std::vector<QuantizerSpec>(static_cast<std::size_t>(cfg.n_ant_rx),
                                          QuantizerSpec::uniform(cfg.adc_bits, *cfg.adc_step));
    const Index k = std::clamp<Index>(cfg.calibration_samples / 10, 4096, 65536);
    Sampler s(rng);
    const Matrix b = gaussian_factor(cfg.average_input_covariance());
    const Matrix u = s.complex_gaussian_matrix(k, b.cols()) * b.transpose();
    const Matrix x = quantize_columns(u, dac) * cfg.w_tx.transpose();
    const Matrix xi = s.complex_gaussian_matrix(k, cfg.n_ant_rx);
    const Matrix y = x * h.transpose() + cfg.noise_std * xi;
    std::vector<QuantizerSpec> specs;
    specs.reserve(static_cast<std::size_t>(cfg.n_ant_rx));
    for (Index j = 0; j < cfg.n_ant_rx; ++j) {
        const double v = y.col(j).squaredNorm() / static_cast<double>(k) / 2.0;
        require(v > 0.0, "adc_specs_for: branch " + std::to_string(j) + " has zero input variance");
        specs.push_back(QuantizerSpec::mse_optimal(cfg.adc_bits, v));
    }
    return specs;
}

struct TxPass {
    Matrix x;  // transmitted signal, N x n_ant_tx
    Matrix r;  // its transform V x, N x n_ant_tx
};

// U = V^H Z, X = Q_tx(U) W_tx^T (row-wise x_n = W_tx Q_tx(u_n)), R = V X.
inline TxPass run_transmitter(const Matrix& z, const UnitaryTransform& v, const std::vector<QuantizerSpec>& dac,
                              const Matrix& w_tx) {
    require(v.dim() == z.rows(), "run_transmitter: transform size mismatch");
    require(w_tx.cols() == z.cols(), "run_transmitter: precoder/stream mismatch");
    const Matrix u = v.apply_adjoint(z);
    Matrix x = quantize_columns(u, dac) * w_tx.transpose();
    Matrix r = v.apply(x);
    return TxPass{std::move(x), std::move(r)};
}

// Receive path: per row, z_hat row = W_rx Q_rx(H x + sigma*xi) — ADCs on the
// receive-antenna branches, combiner after — then the inverse transform V
// stacks the rows back into Z_hat. Matches the end-to-end chain exactly.
inline Matrix run_receiver(const Matrix& x, const Matrix& h, double noise_std, const Matrix& w_rx,
                           const std::vector<QuantizerSpec>& adc, const UnitaryTransform& v, RngStream noise_rng) {
    require(v.dim() == x.rows(), "run_receiver: transform size mismatch");
    require(w_rx.cols() == h.rows(), "run_receiver: combiner/channel mismatch");
    Sampler s(noise_rng);
    const Matrix xi = s.complex_gaussian_matrix(x.rows(), h.rows());
    const Matrix y = apply_channel(awgn_mimo(h, noise_std), x, xi);
    const Matrix quantized = quantize_columns(y, adc) * w_rx.transpose();
    return v.apply(quantized);
}

// Finite-N per-sample covariance in each sub-band:
// S_m(N) = (1/N) sum_n r_n r_n^H 1{l_n = m}. The band sums add up to
// (1/N) R^T R^* identically.
inline std::vector<Matrix> empirical_subband_covariance(const Matrix& r, const SubbandPlan& plan) {
    require(plan.size() == r.rows(), "empirical_subband_covariance: row count mismatch");
    const Index nt = r.cols();
    const double n = static_cast<double>(r.rows());
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(plan.band_count()));
    for (int m = 1; m <= plan.band_count(); ++m) {
        Index count = 0;
        for (Index i = 0; i < plan.size(); ++i)
            if (plan.band_of(i) == m)
                ++count;
        Matrix rows(count, nt);
        Index k = 0;
        for (Index i = 0; i < plan.size(); ++i)
            if (plan.band_of(i) == m)
                rows.row(k++) = r.row(i);
        out.push_back(Matrix(rows.transpose() * rows.conjugate()) / n);
    }
    return out;
}

// Pooled least-squares recovery of the linear model from (input, output) row
// pairs; accumulating moments lets several trials share one fit.
class LinearFitAccumulator {
public:
    LinearFitAccumulator(Index input_dim, Index output_dim)
        : czz_(Matrix::Zero(input_dim, input_dim)),
          crz_(Matrix::Zero(output_dim, input_dim)),
          crr_(Matrix::Zero(output_dim, output_dim)) {}

    void add(const Matrix& inputs, const Matrix& outputs) {
        require(inputs.rows() == outputs.rows(), "linear fit: sample counts differ");
        require(inputs.cols() == czz_.rows() && outputs.cols() == crr_.rows(), "linear fit: dimension mismatch");
        czz_ += inputs.transpose() * inputs.conjugate();
        crz_ += outputs.transpose() * inputs.conjugate();
        crr_ += outputs.transpose() * outputs.conjugate();
        count_ += inputs.rows();
    }

    Index sample_count() const { return count_; }

    LinearModel finalize() const {
        require(count_ > czz_.rows(), "linear fit: need more samples than input dimensions");
        const double n = static_cast<double>(count_);
        const Matrix czz = hermitize(czz_ / n);
        const Matrix crz = crz_ / n;
        const Matrix crr = crr_ / n;
        if (!(czz.trace().real() > 0.0) && crr.trace().real() > 0.0)
            throw std::runtime_error("linear fit: outputs carry power but inputs are identically zero");
        const Matrix a = crz * pinv_hermitian(czz, 1e-10);
        Matrix t = crr - a * crz.adjoint() - crz * a.adjoint() + a * czz * a.adjoint();
        t = floor_eigenvalues(hermitize(t), 0.0);
        return LinearModel{a, std::move(t), czz, count_};
    }

private:
    Matrix czz_, crz_, crr_;
    Index count_ = 0;
};

// A_hat = (sum r z^H)(sum z z^H)^+, T_hat = residual sample covariance.
inline LinearModel fit_linear_model(const Matrix& inputs, const Matrix& outputs) {
    LinearFitAccumulator acc(inputs.cols(), outputs.cols());
    acc.add(inputs, outputs);
    return acc.finalize();
}

enum class FitTarget {
    none,
    tx,   // regress R on Z (transmit-side model)
    e2e,  // regress Z_hat on Z (end-to-end model)
};

struct TrialResult {
    std::vector<Matrix> empirical_s;  // per band, from R
    RealVector nu;
    std::optional<double> aclr_db;  // only when the plan has >= 2 bands
    RealVector beam;                // BF of the signal band at the requested angles
    std::optional<LinearModel> fitted;
};

struct RunOptions {
    bool include_rx = false;
    FitTarget fit = FitTarget::none;
    RealVector beam_angles;  // empty -> no beam sampling
    int beam_band = 1;
    int signal_band = 1;
    int adjacent_band = 2;
    int workers = 0;
};

struct TrialAggregate {
    std::vector<Matrix> mean_s;       // arithmetic mean over trials
    RealVector nu;                    // derived from mean_s
    RealVector nu_stderr;             // spread of per-trial nu
    std::optional<double> aclr_db;    // derived from mean_s
    double aclr_db_stderr = 0.0;      // spread of per-trial ACLR (0 if any trial is inf)
    RealVector beam;                  // derived from mean_s
    RealVector beam_stderr;           // spread of per-trial beam curves
    std::optional<LinearModel> pooled_fit;  // moments pooled over all trials
    std::vector<TrialResult> trials;
};

namespace detail {

inline double stderr_of(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    if (n < 2)
        return 0.0;
    double mean = 0.0;
    for (double x : xs)
        mean += x;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double x : xs)
        ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

}  // namespace detail

// Runs the configured number of trials: fresh V (and fresh H, if configured)
// per trial, full transmit pass, empirical per-band statistics, optionally
// the receive pass and a regression fit. Trials are independent streams and
// are reduced in trial order, so the result does not depend on the worker
// count.
inline TrialAggregate run_trials(const SystemConfig& cfg, const RunOptions& opt) {
    cfg.validate();
    const std::vector<QuantizerSpec> dac = dac_specs_for(cfg);
    const bool needs_rx = opt.include_rx || opt.fit == FitTarget::e2e;
    if (needs_rx)
        require(cfg.n_ant_rx >= 1, "run_trials: receive path requested but no receive antennas configured");

    // Pinned parts are sampled once, from trial 0's lanes.
    std::optional<UnitaryTransform> shared_v;
    if (cfg.transform == TransformKind::fft)
        shared_v = UnitaryTransform::dft(cfg.n_fft);
    else if (!cfg.resample_transform)
        shared_v = UnitaryTransform::haar(cfg.n_fft, cfg.rng.child(0).child(lanes::transform));

    std::optional<Matrix> shared_h;
    std::vector<QuantizerSpec> shared_adc;
    if (needs_rx && cfg.channel_is_fixed()) {
        shared_h = cfg.channel.size() > 0 ? cfg.channel
                                          : sample_rayleigh_channel(cfg.n_ant_rx, cfg.n_ant_tx,
                                                                    cfg.rng.child(0).child(lanes::channel));
        shared_adc = adc_specs_for(cfg, dac, *shared_h, cfg.rng.child(0).child(lanes::adc_calibration));
    }

    struct Slot {
        TrialResult result;
        Matrix fit_czz, fit_crz, fit_crr;
        Index fit_rows = 0;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(cfg.trials));

    parallel_for_index(cfg.trials, opt.workers, [&](Index t) {
        const RngStream trial_rng = cfg.rng.child(static_cast<std::uint64_t>(t));
        const UnitaryTransform v = shared_v ? *shared_v
                                            : UnitaryTransform::haar(cfg.n_fft, trial_rng.child(lanes::transform));
        const Matrix z = generate_streams(cfg.plan, cfg.covs, cfg.n_streams_tx, trial_rng.child(lanes::signal));
        const TxPass tx = run_transmitter(z, v, dac, cfg.w_tx);

        TrialResult res;
        res.empirical_s = empirical_subband_covariance(tx.r, cfg.plan);
        res.nu = power_fractions(SpectralCovarianceSet{res.empirical_s});
        if (cfg.plan.band_count() >= 2)
            res.aclr_db = to_db(aclr(res.nu, opt.signal_band, opt.adjacent_band));
        if (opt.beam_angles.size() > 0) {
            res.beam.resize(opt.beam_angles.size());
            const Matrix& s_band = res.empirical_s[static_cast<std::size_t>(opt.beam_band - 1)];
            for (Index a = 0; a < opt.beam_angles.size(); ++a)
                res.beam(a) = beam_power(s_band, opt.beam_angles(a));
        }

        Slot& slot = slots[static_cast<std::size_t>(t)];
        if (needs_rx || opt.fit == FitTarget::tx) {
            Matrix outputs;
            if (opt.fit == FitTarget::tx) {
                outputs = tx.r;
            }
            if (needs_rx) {
                const Matrix h = shared_h ? *shared_h
                                          : sample_rayleigh_channel(cfg.n_ant_rx, cfg.n_ant_tx,
                                                                    trial_rng.child(lanes::channel));
                const std::vector<QuantizerSpec> adc =
                    shared_h ? shared_adc
                             : adc_specs_for(cfg, dac, h, trial_rng.child(lanes::adc_calibration));
                const Matrix z_hat =
                    run_receiver(tx.x, h, cfg.noise_std, cfg.w_rx, adc, v, trial_rng.child(lanes::noise));
                if (opt.fit == FitTarget::e2e)
                    outputs = z_hat;
            }
            if (opt.fit != FitTarget::none) {
                LinearFitAccumulator acc(z.cols(), outputs.cols());
                acc.add(z, outputs);
                res.fitted = acc.finalize();
                slot.fit_czz = z.transpose() * z.conjugate();
                slot.fit_crz = outputs.transpose() * z.conjugate();
                slot.fit_crr = outputs.transpose() * outputs.conjugate();
                slot.fit_rows = z.rows();
            }
        }
        slot.result = std::move(res);
    });

    TrialAggregate agg;
    agg.trials.reserve(slots.size());
    const int bands = cfg.plan.band_count();
    agg.mean_s.assign(static_cast<std::size_t>(bands), Matrix::Zero(cfg.n_ant_tx, cfg.n_ant_tx));
    std::vector<std::vector<double>> nu_samples(static_cast<std::size_t>(bands));
    std::vector<double> aclr_samples;
    bool aclr_finite = true;
    std::vector<std::vector<double>> beam_samples(static_cast<std::size_t>(opt.beam_angles.size()));

    for (auto& slot : slots) {
        const TrialResult& res = slot.result;
        for (int m = 0; m < bands; ++m) {
            agg.mean_s[static_cast<std::size_t>(m)] += res.empirical_s[static_cast<std::size_t>(m)];
            nu_samples[static_cast<std::size_t>(m)].push_back(res.nu(m));
        }
        if (res.aclr_db) {
            if (std::isfinite(*res.aclr_db))
                aclr_samples.push_back(*res.aclr_db);
            else
                aclr_finite = false;
        }
        for (Index a = 0; a < res.beam.size(); ++a)
            beam_samples[static_cast<std::size_t>(a)].push_back(res.beam(a));
        agg.trials.push_back(res);
    }
    for (auto& s : agg.mean_s)
        s /= static_cast<double>(cfg.trials);

    // pooled fit from raw per-trial moment sums (deterministic order)
    {
        bool any = false;
        for (const auto& slot : slots)
            if (slot.fit_rows > 0)
                any = true;
        if (any) {
            Matrix czz, crz, crr;
            Index rows = 0;
            for (const auto& slot : slots) {
                if (slot.fit_rows == 0)
                    continue;
                if (rows == 0) {
                    czz = slot.fit_czz;
                    crz = slot.fit_crz;
                    crr = slot.fit_crr;
                } else {
                    czz += slot.fit_czz;
                    crz += slot.fit_crz;
                    crr += slot.fit_crr;
                }
                rows += slot.fit_rows;
            }
            const double n = static_cast<double>(rows);
            const Matrix czz_m = hermitize(czz / n);
            const Matrix crz_m = crz / n;
            const Matrix crr_m = crr / n;
            const Matrix a = crz_m * pinv_hermitian(czz_m, 1e-10);
            Matrix t = crr_m - a * crz_m.adjoint() - crz_m * a.adjoint() + a * czz_m * a.adjoint();
            agg.pooled_fit = LinearModel{a, floor_eigenvalues(hermitize(t), 0.0), czz_m, rows};
        }
    }

    agg.nu = power_fractions(SpectralCovarianceSet{agg.mean_s});
    agg.nu_stderr.resize(bands);
    for (int m = 0; m < bands; ++m)
        agg.nu_stderr(m) = detail::stderr_of(nu_samples[static_cast<std::size_t>(m)]);
    if (bands >= 2) {
        agg.aclr_db = to_db(aclr(agg.nu, opt.signal_band, opt.adjacent_band));
        agg.aclr_db_stderr = aclr_finite ? detail::stderr_of(aclr_samples) : 0.0;
    }
    if (opt.beam_angles.size() > 0) {
        agg.beam.resize(opt.beam_angles.size());
        agg.beam_stderr.resize(opt.beam_angles.size());
        const Matrix& s_band = agg.mean_s[static_cast<std::size_t>(opt.beam_band - 1)];
        for (Index a = 0; a < opt.beam_angles.size(); ++a) {
            agg.beam(a) = beam_power(s_band, opt.beam_angles(a));
            agg.beam_stderr(a) = detail::stderr_of(beam_samples[static_cast<std::size_t>(a)]);
        }
    }
    return agg;
}

}  // namespace qmimo
