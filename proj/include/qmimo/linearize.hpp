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
#include "qmimo/quantizer.hpp"
#include "qmimo/random.hpp"

#include <functional>
#include <optional>
#include <utility>

namespace qmimo {

// A row-wise separable map y = phi(u, xi): evaluating a matrix equals
// evaluating each row independently. apply_rows takes sample-per-row batches
// (K x input_dim, K x noise_dim) and returns K x output_dim; it must be pure
// and reentrant. Chains built from componentwise quantizers and fixed linear
// maps satisfy this by construction.
struct RowMap {
    struct Exact {
        Matrix gain;
        Matrix noise_cov;
    };

    Index input_dim = 0;
    Index output_dim = 0;
    Index noise_dim = 0;  // 0 when deterministic
    std::function<Matrix(const Matrix&, const Matrix&)> apply_rows;
    std::optional<Exact> exact;  // set when the whole chain is linear

    Vector apply_row(const Vector& u, const Vector& xi) const {
        const Matrix y = apply_rows(u.transpose(), xi.transpose());
        return y.row(0).transpose();
    }
};

// Equivalent linear model of a row-wise map under Gaussian input: gain A and
// additive-noise covariance T, with the input covariance used for calibration
// and the Monte Carlo sample count (0 for the exact linear fast path).
struct LinearModel {
    Matrix gain;       // A (output_dim x input_dim)
    Matrix noise_cov;  // T (output_dim x output_dim), Hermitian PSD
    Matrix input_cov;  // P used for calibration
    Index sample_count = 0;
};

// Transmit chain u -> W_tx * Q_tx(u), one DAC spec per stream.
inline RowMap make_tx_chain(const Matrix& w_tx, const std::vector<QuantizerSpec>& dac) {
    require(w_tx.size() > 0, "make_tx_chain: precoder must be non-empty");
    require(static_cast<Index>(dac.size()) == w_tx.cols(), "make_tx_chain: one DAC spec per stream required");
    RowMap map;
    map.input_dim = w_tx.cols();
    map.output_dim = w_tx.rows();
    map.noise_dim = 0;
    map.apply_rows = [w = w_tx, dac](const Matrix& u, const Matrix&) {
        return Matrix(quantize_columns(u, dac) * w.transpose());
    };
    bool linear = true;
    for (const auto& q : dac)
        linear = linear && q.is_identity();
    if (linear)
        map.exact = RowMap::Exact{w_tx, Matrix::Zero(w_tx.rows(), w_tx.rows())};
    return map;
}

// Full chain u -> W_rx * Q_rx(H * W_tx * Q_tx(u) + sigma * xi). ADCs sit on
// the N_r channel outputs, one spec per receive branch, with the combiner
// after them.
inline RowMap make_e2e_chain(const Matrix& w_tx, const std::vector<QuantizerSpec>& dac, const Matrix& h,
                             double noise_std, const Matrix& w_rx, const std::vector<QuantizerSpec>& adc) {
    require(w_tx.size() > 0 && h.size() > 0 && w_rx.size() > 0, "make_e2e_chain: empty matrix in chain");
    require(static_cast<Index>(dac.size()) == w_tx.cols(), "make_e2e_chain: one DAC spec per stream required");
    require(h.cols() == w_tx.rows(), "make_e2e_chain: channel/precoder dimension mismatch");
    require(static_cast<Index>(adc.size()) == h.rows(), "make_e2e_chain: one ADC spec per receive branch required");
    require(w_rx.cols() == h.rows(), "make_e2e_chain: combiner/channel dimension mismatch");
    require(noise_std >= 0.0 && std::isfinite(noise_std), "make_e2e_chain: noise std must be non-negative");
    RowMap map;
    map.input_dim = w_tx.cols();
    map.output_dim = w_rx.rows();
    map.noise_dim = h.rows();
    map.apply_rows = [w_tx, dac, h, noise_std, w_rx, adc](const Matrix& u, const Matrix& xi) {
        const Matrix x = quantize_columns(u, dac) * w_tx.transpose();
        const Matrix y = x * h.transpose() + noise_std * xi;
        return Matrix(quantize_columns(y, adc) * w_rx.transpose());
    };
    bool linear = true;
    for (const auto& q : dac)
        linear = linear && q.is_identity();
    for (const auto& q : adc)
        linear = linear && q.is_identity();
    if (linear)
        map.exact = RowMap::Exact{w_rx * h * w_tx, noise_std * noise_std * (w_rx * w_rx.adjoint())};
    return map;
}

// Equivalent linear model (A, T) of a row-wise map by Monte Carlo.
//
// A is computed through the Stein-identity route P A^H = E[U phi(U,Xi)^H]
// rather than as an expected Jacobian — staircase quantizers differentiate to
// zero almost everywhere, while the cross-moment is well behaved. With P
// possibly singular the pseudo-inverse restricts A to range(P); columns of A
// outside that range are exactly zero. T is the sample covariance of the
// residual phi(U,Xi) - A U, symmetrized and eigenvalue-floored at zero.
//
// When the chain is linear (all quantizers infinite-bit) the exact closed
// form is returned with no sampling. Samples are partitioned into fixed-size
// chunks, each with its own child stream, and partial sums are reduced in
// chunk order, so results are reproducible for any worker count.
inline LinearModel estimate_linear_model(const RowMap& phi, const Matrix& input_cov, Index samples, RngStream rng,
                                         int workers = 0) {
    require(input_cov.rows() == phi.input_dim && input_cov.cols() == phi.input_dim,
            "estimate_linear_model: input covariance size mismatch");
    if (phi.exact)
        return LinearModel{phi.exact->gain, phi.exact->noise_cov, hermitize(input_cov), 0};
    require(static_cast<bool>(phi.apply_rows), "estimate_linear_model: map has no evaluator");
    require(samples >= 1000, "estimate_linear_model: at least 1000 samples required");

    const Matrix p = hermitize(input_cov);
    const Matrix b = gaussian_factor(p);  // rejects non-PSD input
    const Matrix p_pinv = pinv_hermitian(p, 1e-10);

    const Index chunk = 8192;
    const Index nchunks = (samples + chunk - 1) / chunk;
    struct Partial {
        Matrix cyu, cyy, cuu;
    };
    std::vector<Partial> parts(nchunks);
    parallel_for_index(nchunks, workers, [&](Index c) {
        const Index k0 = c * chunk;
        const Index kn = std::min(chunk, samples - k0);
        Sampler s(rng.child(static_cast<std::uint64_t>(c)));
        const Matrix w = s.complex_gaussian_matrix(kn, b.cols());
        const Matrix u = w * b.transpose();  // rows ~ CN(0, P)
        const Matrix xi = s.complex_gaussian_matrix(kn, phi.noise_dim);
        const Matrix y = phi.apply_rows(u, xi);
        if (y.rows() != kn || y.cols() != phi.output_dim)
            throw std::runtime_error("estimate_linear_model: map returned wrong output shape");
        if (!y.allFinite()) {
            Index bad = 0;
            for (Index i = 0; i < y.rows(); ++i)
                if (!y.row(i).allFinite()) {
                    bad = k0 + i;
                    break;
                }
            throw std::runtime_error("estimate_linear_model: map produced non-finite output at sample " +
                                     std::to_string(bad));
        }
        parts[c] = Partial{y.transpose() * u.conjugate(), y.transpose() * y.conjugate(),
                           u.transpose() * u.conjugate()};
    });

    Matrix cyu = Matrix::Zero(phi.output_dim, phi.input_dim);
    Matrix cyy = Matrix::Zero(phi.output_dim, phi.output_dim);
    Matrix cuu = Matrix::Zero(phi.input_dim, phi.input_dim);
    for (const auto& part : parts) {
        cyu += part.cyu;
        cyy += part.cyy;
        cuu += part.cuu;
    }
    const double k = static_cast<double>(samples);
    cyu /= k;
    cyy /= k;
    cuu /= k;

    Matrix a = cyu * p_pinv;
    Matrix t = cyy - a * cyu.adjoint() - cyu * a.adjoint() + a * cuu * a.adjoint();
    t = floor_eigenvalues(hermitize(t), 0.0);
    return LinearModel{std::move(a), std::move(t), p, samples};
}

}  // namespace qmimo
