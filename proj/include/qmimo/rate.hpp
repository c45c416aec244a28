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
#include <vector>

namespace qmimo {

// One point of a rate-versus-SNR sweep. Rates are in bits per sample (log
// base 2 everywhere).
struct RatePoint {
    double snr_db = 0.0;
    double rate_bound = 0.0;
    double capacity = 0.0;
    int bits_dac = QuantizerSpec::kInfiniteBits;
    int bits_adc = QuantizerSpec::kInfiniteBits;
};

namespace detail {

// log2 |I + M| for Hermitian PSD M, by eigenvalues (negatives clipped).
inline double log2_det_identity_plus(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitize(m));
    double sum = 0.0;
    for (Index i = 0; i < es.eigenvalues().size(); ++i)
        sum += std::log2(1.0 + std::max(es.eigenvalues()(i), 0.0));
    return sum;
}

}  // namespace detail

// Achievable-rate lower bound of the equivalent linear system:
//   sum_m delta_m * log2 |I + A P_m A^H T^{-1}|,
// evaluated through the symmetrized form |I + T^{-1/2} A P_m A^H T^{-1/2}|.
// T's eigenvalues are floored at 1e-12 * Tr(T)/dim before inversion; the
// exactly-singular T of the no-quantization/no-noise corner is served by the
// linear fast path plus shannon_capacity instead.
inline double rate_lower_bound(const LinearModel& rx, const std::vector<Matrix>& covs, const RealVector& deltas) {
    require(static_cast<Index>(covs.size()) == deltas.size(), "rate_lower_bound: covs/deltas size mismatch");
    require(std::abs(deltas.sum() - 1.0) <= 1e-9, "rate_lower_bound: deltas must sum to 1");
    for (Index m = 0; m < deltas.size(); ++m)
        require(deltas(m) >= 0.0, "rate_lower_bound: deltas must be non-negative");

    const Index dim = rx.noise_cov.rows();
    require(dim >= 1 && rx.noise_cov.cols() == dim, "rate_lower_bound: noise covariance must be square");
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitize(rx.noise_cov));
    const double tr = es.eigenvalues().sum();
    const double floor = 1e-12 * tr / static_cast<double>(dim);
    if (!(floor > 0.0))
        throw std::runtime_error("rate_lower_bound: noise covariance singular after regularization (smallest "
                                 "eigenvalue " +
                                 std::to_string(es.eigenvalues()(0)) + ")");
    RealVector inv_sqrt(dim);
    for (Index i = 0; i < dim; ++i)
        inv_sqrt(i) = 1.0 / std::sqrt(std::max(es.eigenvalues()(i), floor));
    const Matrix t_isqrt = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().adjoint();
    const Matrix b = t_isqrt * rx.gain;

    double rate = 0.0;
    for (Index m = 0; m < deltas.size(); ++m) {
        if (deltas(m) == 0.0)
            continue;
        const Matrix& p_m = covs[static_cast<std::size_t>(m)];
        require(p_m.rows() == rx.gain.cols() && p_m.cols() == rx.gain.cols(),
                "rate_lower_bound: sub-band covariance size mismatch");
        rate += deltas(m) * detail::log2_det_identity_plus(b * hermitize(p_m) * b.adjoint());
    }
    return rate;
}

// log2 |I + H P H^H / sigma^2|, bits per sample.
inline double shannon_capacity(const Matrix& h, const Matrix& p, double noise_var) {
    require(noise_var > 0.0 && std::isfinite(noise_var), "shannon_capacity: noise variance must be positive");
    require(p.rows() == h.cols() && p.cols() == h.cols(), "shannon_capacity: covariance size mismatch");
    return detail::log2_det_identity_plus(h * hermitize(p) * h.adjoint() / noise_var);
}

// sigma^2 such that the average received signal power per antenna over the
// noise power equals the target SNR: sigma^2 = Tr(H P H^H) / (N_r 10^(snr/10)).
inline double snr_to_noise_var(const Matrix& h, const Matrix& p, double target_snr_db) {
    require(p.rows() == h.cols() && p.cols() == h.cols(), "snr_to_noise_var: covariance size mismatch");
    const double signal = (h * hermitize(p) * h.adjoint()).trace().real();
    if (!(signal > 0.0))
        throw std::invalid_argument("snr_to_noise_var: zero signal power");
    return signal / (static_cast<double>(h.rows()) * std::pow(10.0, target_snr_db / 10.0));
}

}  // namespace qmimo
