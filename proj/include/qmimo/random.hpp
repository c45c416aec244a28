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

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>

namespace qmimo {

namespace detail {

inline constexpr std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// 64-bit finalizer (Murmur3 style); bijective, breaks up counter structure.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 33;
    z *= 0xFF51AFD7ED558CCDull;
    z ^= z >> 33;
    z *= 0xC4CEB9FE1A85EC53ull;
    z ^= z >> 33;
    return z;
}

// xoshiro256++ (Blackman & Vigna). Small state, fast, and good enough for
// Monte Carlo; the state words are seeded through SplitMix64.
struct Xoshiro256pp {
    std::array<std::uint64_t, 4> s{};

    explicit Xoshiro256pp(std::uint64_t seed_word) {
        std::uint64_t x = seed_word;
        for (auto& w : s)
            w = splitmix64_next(x);
    }

    static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    double uniform01() {  // [0, 1), 53-bit resolution
        return static_cast<double>(next() >> 11) * 0x1p-53;
    }
};

}  // namespace detail

// A deterministic, splittable random stream. The same (seed, stream_id)
// reproduces the identical sample sequence bit for bit; distinct stream_ids
// give statistically independent sequences because the engine state is
// derived from both through a 64-bit hash, not by offsetting one sequence.
struct RngStream {
    std::uint64_t seed = 1;
    std::uint64_t stream_id = 0;

    // Independent sub-stream; lanes partition a stream among workers/purposes.
    RngStream child(std::uint64_t lane) const {
        return RngStream{seed, detail::mix64(stream_id * 0x9E3779B97F4A7C15ull + lane + 0x632BE59BD9B4E019ull)};
    }

    detail::Xoshiro256pp engine() const {
        const std::uint64_t word =
            detail::mix64(seed + 0xD1B54A32D192ED03ull) ^ detail::mix64(stream_id + 0x8CB92BA72F3D8DD7ull);
        return detail::Xoshiro256pp(word);
    }
};

// Stateful sampler over one stream.
class Sampler {
public:
    explicit Sampler(RngStream stream) : engine_(stream.engine()) {}

    double uniform01() { return engine_.uniform01(); }

    // CN(0,1): squared radius ~ Exp(1), uniform phase. Real and imaginary
    // parts are i.i.d. N(0, 1/2).
    Complex complex_gaussian() {
        const double u1 = engine_.uniform01();
        const double u2 = engine_.uniform01();
        const double r = std::sqrt(-std::log1p(-u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        return Complex(r * std::cos(theta), r * std::sin(theta));
    }

    double real_gaussian() {  // N(0,1)
        return complex_gaussian().real() * std::numbers::sqrt2;
    }

    Matrix complex_gaussian_matrix(Index rows, Index cols) {
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j)
                m(i, j) = complex_gaussian();
        return m;
    }

private:
    detail::Xoshiro256pp engine_;
};

struct UnitaryMatrix {
    Matrix entries;

    // Frobenius norm of V^H V - I.
    double unitarity_defect() const {
        return (entries.adjoint() * entries - Matrix::Identity(entries.cols(), entries.cols())).norm();
    }
};

// Factor B of a Hermitian PSD covariance such that B B^H = P, built from the
// eigendecomposition. Eigenvalues below 1e-12 * trace are treated as zero, so
// rank-deficient covariances (e.g. a rank-1 beamforming matrix) work.
// Rejects covariances with an eigenvalue below -1e-10.
inline Matrix gaussian_factor(const Matrix& covariance) {
    require(covariance.rows() == covariance.cols(), "gaussian_factor: covariance must be square");
    require(is_hermitian(covariance), "gaussian_factor: covariance must be Hermitian");
    if (covariance.size() == 0)
        return covariance;
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitize(covariance));
    const RealVector lam = es.eigenvalues();
    if (lam.minCoeff() < -1e-10)
        throw std::invalid_argument("gaussian_factor: covariance is not PSD (eigenvalue " +
                                    std::to_string(lam.minCoeff()) + ")");
    const double threshold = 1e-12 * std::max(lam.sum(), 0.0);
    Index rank = 0;
    for (Index i = 0; i < lam.size(); ++i)
        if (lam(i) > threshold)
            ++rank;
    Matrix b(covariance.rows(), rank);
    Index k = 0;
    for (Index i = 0; i < lam.size(); ++i)
        if (lam(i) > threshold)
            b.col(k++) = es.eigenvectors().col(i) * std::sqrt(lam(i));
    return b;
}

// Matrix with i.i.d. rows ~ CN(0, covariance).
inline Matrix sample_complex_gaussian(Index rows, Index cols, const Matrix& covariance, RngStream rng) {
    require(rows >= 0 && cols >= 0, "sample_complex_gaussian: negative dimensions");
    require(covariance.rows() == cols && covariance.cols() == cols,
            "sample_complex_gaussian: covariance must be cols x cols");
    const Matrix b = gaussian_factor(covariance);
    if (b.cols() == 0)
        return Matrix::Zero(rows, cols);
    Sampler s(rng);
    const Matrix w = s.complex_gaussian_matrix(rows, b.cols());
    return w * b.transpose();  // row n is (B w_n)^T
}

// An N x N unitary held either densely or as an implicit Householder
// factorization, so V X and V^H X cost O(N^2 k) without ever forming V.
class UnitaryTransform {
public:
    // Haar-distributed unitary: the Q factor of the Householder QR of an
    // i.i.d. CN(0,1) matrix, with the R-diagonal phase correction (column j
    // of Q scaled by conj(R_jj)/|R_jj|; plain QR is not Haar). Each
    // reflection of a Ginibre matrix leaves the trailing block Ginibre, so
    // the reflectors can be drawn directly from fresh Gaussian vectors of
    // shrinking length — the same factorization in O(N^2) instead of O(N^3).
    static UnitaryTransform haar(Index n, RngStream rng) {
        require(n >= 1, "UnitaryTransform::haar: dimension must be at least 1");
        Sampler s(rng);
        UnitaryTransform t;
        t.n_ = n;
        t.reflectors_.reserve(static_cast<std::size_t>(n - 1));
        t.taus_.resize(n - 1);
        t.phases_.resize(n);
        for (Index k = 0; k < n - 1; ++k) {
            const Index len = n - k;
            Vector g(len);
            for (Index i = 0; i < len; ++i)
                g(i) = s.complex_gaussian();
            const double norm = g.norm();
            const double head = std::abs(g(0));
            const Complex sign = head > 0.0 ? g(0) / head : Complex(1.0, 0.0);
            const Complex alpha = -sign * norm;  // R_kk before the phase fix
            Vector v = g;
            v(0) -= alpha;
            const double vsq = v.squaredNorm();
            t.taus_(k) = vsq > 0.0 ? 2.0 / vsq : 0.0;
            t.reflectors_.push_back(std::move(v));
            t.phases_(k) = norm > 0.0 ? std::conj(alpha) / norm : Complex(1.0, 0.0);
        }
        const Complex last = s.complex_gaussian();  // trailing 1x1 of R
        const double mag = std::abs(last);
        t.phases_(n - 1) = mag > 0.0 ? std::conj(last) / mag : Complex(1.0, 0.0);
        return t;
    }

    // Orthonormal DFT matrix, F_jk = exp(-2*pi*i*j*k/n)/sqrt(n).
    static UnitaryTransform dft(Index n) {
        require(n >= 1, "UnitaryTransform::dft: dimension must be at least 1");
        Matrix f(n, n);
        const double scale = 1.0 / std::sqrt(static_cast<double>(n));
        for (Index j = 0; j < n; ++j)
            for (Index k = 0; k < n; ++k) {
                const double angle = -2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / static_cast<double>(n);
                f(j, k) = scale * Complex(std::cos(angle), std::sin(angle));
            }
        return dense(std::move(f));
    }

    static UnitaryTransform dense(Matrix v) {
        require(v.rows() == v.cols() && v.rows() >= 1, "UnitaryTransform::dense: matrix must be square");
        UnitaryTransform t;
        t.n_ = v.rows();
        t.dense_ = std::move(v);
        return t;
    }

    Index dim() const { return n_; }

    Matrix apply(const Matrix& x) const {  // V * X = Q (Lambda X)
        require(x.rows() == n_, "UnitaryTransform::apply: row count mismatch");
        if (dense_.size() > 0)
            return dense_ * x;
        Matrix y = phases_.asDiagonal() * x;
        for (Index k = n_ - 2; k >= 0; --k)
            reflect(k, y);
        return y;
    }

    Matrix apply_adjoint(const Matrix& x) const {  // V^H * X = Lambda^H (Q^H X)
        require(x.rows() == n_, "UnitaryTransform::apply_adjoint: row count mismatch");
        if (dense_.size() > 0)
            return dense_.adjoint() * x;
        Matrix y = x;
        for (Index k = 0; k <= n_ - 2; ++k)
            reflect(k, y);  // reflections are Hermitian
        return phases_.conjugate().asDiagonal() * y;
    }

    Matrix dense_matrix() const {
        if (dense_.size() > 0)
            return dense_;
        return apply(Matrix::Identity(n_, n_));
    }

private:
    void reflect(Index k, Matrix& y) const {  // y[k:, :] -= tau * v (v^H y[k:, :])
        const Vector& v = reflectors_[static_cast<std::size_t>(k)];
        auto block = y.bottomRows(n_ - k);
        block.noalias() -= v * (taus_(k) * (v.adjoint() * block));
    }

    Index n_ = 0;
    std::vector<Vector> reflectors_;  // reflector k acts on rows k..n-1
    RealVector taus_;
    Vector phases_;  // conj(R_kk)/|R_kk|
    Matrix dense_;
};

inline UnitaryMatrix sample_haar_unitary(Index n, RngStream rng) {
    require(n >= 1, "sample_haar_unitary: dimension must be at least 1");
    return UnitaryMatrix{UnitaryTransform::haar(n, rng).dense_matrix()};
}

// i.i.d. CN(0,1) entries (Rayleigh fading).
inline Matrix sample_rayleigh_channel(Index n_r, Index n_t, RngStream rng) {
    require(n_r >= 1 && n_t >= 1, "sample_rayleigh_channel: dimensions must be at least 1");
    Sampler s(rng);
    return s.complex_gaussian_matrix(n_r, n_t);
}

}  // namespace qmimo
