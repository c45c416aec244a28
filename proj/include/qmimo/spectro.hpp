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

#include "qmimo/linalg.hpp"
#include "qmimo/linearize.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace qmimo {

// Assignment of each of the N frequency bins to one of M sub-bands. Band
// labels are 1-based throughout, matching the selection-vector convention;
// fraction(m) is the bandwidth fraction delta_m.
class SubbandPlan {
public:
    SubbandPlan() = default;

    explicit SubbandPlan(std::vector<int> selection, int band_count = 0) {
        require(!selection.empty(), "subband plan: selection must be non-empty");
        int max_band = 0;
        for (int b : selection) {
            require(b >= 1, "subband plan: band labels are 1-based");
            max_band = std::max(max_band, b);
        }
        bands_ = band_count > 0 ? band_count : max_band;
        require(max_band <= bands_, "subband plan: label exceeds band count");
        selection_ = std::move(selection);
        fractions_.assign(bands_, 0.0);
        for (int b : selection_)
            fractions_[b - 1] += 1.0;
        for (auto& f : fractions_)
            f /= static_cast<double>(selection_.size());
    }

    // Contiguous blocks of (as close as possible to) equal size.
    static SubbandPlan equal_blocks(Index n, int bands) {
        require(bands >= 1 && n >= bands, "subband plan: need at least one bin per band");
        std::vector<int> sel(n);
        for (Index i = 0; i < n; ++i)
            sel[i] = 1 + static_cast<int>((i * bands) / n);
        return SubbandPlan(std::move(sel), bands);
    }

    Index size() const { return static_cast<Index>(selection_.size()); }
    int band_count() const { return bands_; }
    int band_of(Index bin) const { return selection_[bin]; }
    double fraction(int band) const { return fractions_[band - 1]; }
    const std::vector<double>& fractions() const { return fractions_; }
    RealVector fractions_vector() const {
        return Eigen::Map<const RealVector>(fractions_.data(), static_cast<Index>(fractions_.size()));
    }

private:
    std::vector<int> selection_;
    std::vector<double> fractions_;
    int bands_ = 0;
};

// Per-sub-band spectral covariances S_m; total() is their sum.
struct SpectralCovarianceSet {
    std::vector<Matrix> per_subband;

    Matrix total() const {
        require(!per_subband.empty(), "spectral covariance set: empty");
        Matrix sum = Matrix::Zero(per_subband[0].rows(), per_subband[0].cols());
        for (const auto& s : per_subband)
            sum += s;
        return sum;
    }
};

// S_m = delta_m * (A P_m A^H + T) for the calibrated transmit model.
inline Matrix subband_covariance(const LinearModel& tx, const Matrix& p_m, double delta_m) {
    require(p_m.rows() == tx.gain.cols() && p_m.cols() == tx.gain.cols(),
            "subband_covariance: sub-band covariance size mismatch");
    require(delta_m >= 0.0 && delta_m <= 1.0, "subband_covariance: bandwidth fraction must be in [0, 1]");
    return delta_m * (tx.gain * hermitize(p_m) * tx.gain.adjoint() + tx.noise_cov);
}

// nu_m = Tr(S_m) / Tr(sum of S_m).
inline RealVector power_fractions(const SpectralCovarianceSet& set) {
    require(!set.per_subband.empty(), "power_fractions: empty covariance set");
    RealVector traces(static_cast<Index>(set.per_subband.size()));
    for (Index m = 0; m < traces.size(); ++m)
        traces(m) = set.per_subband[static_cast<std::size_t>(m)].trace().real();
    const double total = traces.sum();
    if (!(total > 0.0))
        throw std::invalid_argument("power_fractions: total spectral power is zero");
    return traces / total;
}

// In-band over leaked power, linear scale (bigger is better). Returns +inf
// when the adjacent band carries no power (infinite-resolution corner);
// fractions below 1e-15 are unresolvable in double precision and count as
// zero, so a lossless V V^H round trip still reports the sentinel.
inline double aclr(const RealVector& nu, int signal_band, int adjacent_band) {
    require(signal_band >= 1 && signal_band <= nu.size(), "aclr: signal band out of range");
    require(adjacent_band >= 1 && adjacent_band <= nu.size(), "aclr: adjacent band out of range");
    const double leaked = nu(adjacent_band - 1);
    if (leaked <= 1e-15)
        return std::numeric_limits<double>::infinity();
    return nu(signal_band - 1) / leaked;
}

inline double to_db(double ratio) { return 10.0 * std::log10(ratio); }

// Half-wavelength ULA response e(psi) = [1, e^{i pi cos psi}, ...].
inline Vector array_response(Index n_ant, double psi) {
    require(n_ant >= 1, "array_response: need at least one antenna");
    Vector e(n_ant);
    const double phase = std::numbers::pi * std::cos(psi);
    for (Index k = 0; k < n_ant; ++k)
        e(k) = Complex(std::cos(phase * static_cast<double>(k)), std::sin(phase * static_cast<double>(k)));
    return e;
}

// BF_m(psi) = e(psi)^H S_m e(psi).
inline double beam_power(const Matrix& s_m, double psi) {
    require(s_m.rows() == s_m.cols() && s_m.rows() >= 1, "beam_power: covariance must be square");
    const Vector e = array_response(s_m.rows(), psi);
    const double value = (e.adjoint() * s_m * e).value().real();
    return std::max(value, 0.0);
}

// Per-sub-band lower bound on the power fraction:
// nu_m >= delta_m Tr(T) / Tr(A P A^H + T). Quantization noise is white, so a
// band's power cannot be pushed below its bandwidth share of the noise.
inline RealVector nu_floor(const LinearModel& tx, const Matrix& p, const RealVector& deltas) {
    require(p.rows() == tx.gain.cols() && p.cols() == tx.gain.cols(), "nu_floor: covariance size mismatch");
    const double tr_signal = (tx.gain * hermitize(p) * tx.gain.adjoint()).trace().real();
    const double tr_noise = tx.noise_cov.trace().real();
    const double denom = tr_signal + tr_noise;
    if (!(denom > 0.0))
        throw std::invalid_argument("nu_floor: total transmit power is zero");
    return deltas * (tr_noise / denom);
}

// Result of the power-fraction inversion: either the per-band covariances
// realizing nu, or the list of bands whose requested fraction sits below the
// feasibility floor (with the deficit).
struct SubbandConstruction {
    struct Violation {
        int band = 0;  // 1-based
        double nu = 0.0;
        double floor = 0.0;
        double deficit = 0.0;  // floor - nu
    };

    bool feasible = false;
    std::vector<Matrix> covariances;
    std::vector<Violation> violations;
};

// Explicit construction of per-band covariances P_m = c_m * P with
// c_m = [ (nu_m/delta_m) Tr(A P A^H + T) - Tr(T) ] / Tr(A P A^H),
// which realizes any feasible power-fraction vector and satisfies
// sum_m delta_m P_m = P. Infeasible nu produces a structured report.
inline SubbandConstruction construct_subband_covariances(const LinearModel& tx, const Matrix& p,
                                                         const RealVector& deltas, const RealVector& nu) {
    require(deltas.size() == nu.size(), "construct_subband_covariances: deltas/nu size mismatch");
    require(p.rows() == tx.gain.cols() && p.cols() == tx.gain.cols(),
            "construct_subband_covariances: covariance size mismatch");
    require(std::abs(deltas.sum() - 1.0) <= 1e-9, "construct_subband_covariances: deltas must sum to 1");
    require(std::abs(nu.sum() - 1.0) <= 1e-9, "construct_subband_covariances: nu must sum to 1");
    for (Index m = 0; m < nu.size(); ++m) {
        require(nu(m) >= -1e-12, "construct_subband_covariances: nu must be non-negative");
        if (nu(m) > 0.0)
            require(deltas(m) > 0.0,
                    "construct_subband_covariances: band " + std::to_string(m + 1) +
                        " has positive power but zero bandwidth");
    }
    const Matrix pbar = hermitize(p);
    const double tr_signal = (tx.gain * pbar * tx.gain.adjoint()).trace().real();
    const double tr_noise = tx.noise_cov.trace().real();
    require(tr_signal > 0.0, "construct_subband_covariances: Tr(A P A^H) must be positive");

    SubbandConstruction out;
    std::vector<double> coeff(static_cast<std::size_t>(nu.size()), 0.0);
    for (Index m = 0; m < nu.size(); ++m) {
        if (deltas(m) == 0.0)
            continue;  // nu_m = 0 here; contributes nothing
        const double floor_m = deltas(m) * tr_noise / (tr_signal + tr_noise);
        const double c = (nu(m) / deltas(m) * (tr_signal + tr_noise) - tr_noise) / tr_signal;
        if (nu(m) < floor_m - 1e-12) {
            out.violations.push_back({static_cast<int>(m + 1), nu(m), floor_m, floor_m - nu(m)});
            continue;
        }
        coeff[static_cast<std::size_t>(m)] = std::max(c, 0.0);
    }
    out.feasible = out.violations.empty();
    if (out.feasible) {
        out.covariances.reserve(coeff.size());
        for (double c : coeff)
            out.covariances.push_back(c * pbar);
    }
    return out;
}

}  // namespace qmimo
