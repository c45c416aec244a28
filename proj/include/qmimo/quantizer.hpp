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

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <vector>

namespace qmimo {

inline double optimize_step(int bits, double input_variance);

// Midrise uniform scalar quantizer, applied independently to the real and
// imaginary parts. Reconstruction points are ±(k - 1/2)·step for
// k = 1..2^(bits-1); inputs beyond the clip range saturate to the outermost
// level. bits == kInfiniteBits is the identity map.
struct QuantizerSpec {
    static constexpr int kInfiniteBits = -1;
    static constexpr int kMaxBits = 16;

    int bits = kInfiniteBits;
    double step = 0.0;

    static QuantizerSpec identity() { return {}; }

    static QuantizerSpec uniform(int bits, double step) {
        require(bits >= 1 && bits <= kMaxBits, "quantizer: bits must be in [1, 16] or infinite");
        require(step > 0.0 && std::isfinite(step), "quantizer: step must be positive and finite");
        return {bits, step};
    }

    // Step chosen to minimize the Gaussian MSE at the given per-real-dimension
    // input variance.
    static QuantizerSpec mse_optimal(int bits, double input_variance) {
        return uniform(bits, optimize_step(bits, input_variance));
    }

    bool is_identity() const { return bits == kInfiniteBits; }

    long levels() const { return is_identity() ? 0 : (1L << bits); }

    double clip() const {
        return is_identity() ? std::numeric_limits<double>::infinity() : step * static_cast<double>(1L << (bits - 1));
    }

    double apply_real(double x) const {
        if (is_identity())
            return x;
        const double half_levels = static_cast<double>(1L << (bits - 1));
        double cell = std::floor(std::abs(x) / step);
        if (cell > half_levels - 1.0)
            cell = half_levels - 1.0;  // saturation
        const double y = (cell + 0.5) * step;
        return x < 0.0 ? -y : y;
    }

    Complex apply(Complex z) const { return Complex(apply_real(z.real()), apply_real(z.imag())); }
};

// Column j of m quantized by specs[j]; rows are samples.
inline Matrix quantize_columns(const Matrix& m, const std::vector<QuantizerSpec>& specs) {
    require(static_cast<Index>(specs.size()) == m.cols(), "quantize_columns: one spec per column required");
    Matrix out(m.rows(), m.cols());
    for (Index j = 0; j < m.cols(); ++j) {
        const QuantizerSpec& q = specs[j];
        if (q.is_identity()) {
            out.col(j) = m.col(j);
            continue;
        }
        for (Index i = 0; i < m.rows(); ++i)
            out(i, j) = q.apply(m(i, j));
    }
    return out;
}

namespace detail {

template <class F>
double adaptive_simpson(F&& f, double a, double b, double fa, double fm, double fb, double whole, double rtol,
                        double atol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * (rtol * std::abs(left + right) + atol))
        return left + right + delta / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, rtol, 0.5 * atol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, rtol, 0.5 * atol, depth - 1);
}

template <class F>
double integrate(F&& f, double a, double b, double rtol, double atol) {
    if (!(b > a))
        return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, rtol, atol, 48);
}

}  // namespace detail

// E[(Q(x) - x)^2] for x ~ N(0, input_variance), by adaptive quadrature over
// each quantization cell. Cells beyond 8 standard deviations carry ~1e-15 of
// the mass and are folded into the truncated saturation term.
inline double quantizer_mse(const QuantizerSpec& spec, double input_variance) {
    require(input_variance > 0.0 && std::isfinite(input_variance),
            "quantizer_mse: input variance must be positive");
    if (spec.is_identity())
        return 0.0;
    const double sigma = std::sqrt(input_variance);
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    const auto density = [norm, input_variance](double x) { return norm * std::exp(-0.5 * x * x / input_variance); };
    const double limit = 8.0 * sigma;
    const long half_levels = spec.levels() / 2;
    double mse = 0.0;
    for (long k = 0; k < half_levels; ++k) {
        const double lo = static_cast<double>(k) * spec.step;
        if (lo >= limit)
            break;
        const bool saturating = (k == half_levels - 1);
        const double hi = saturating ? limit : std::min(static_cast<double>(k + 1) * spec.step, limit);
        const double level = (static_cast<double>(k) + 0.5) * spec.step;
        const auto integrand = [level, &density](double x) {
            const double e = level - x;
            return e * e * density(x);
        };
        mse += detail::integrate(integrand, lo, hi, 1e-10, 1e-16 * input_variance);
    }
    return 2.0 * mse;  // odd symmetry
}

// Step minimizing quantizer_mse for a Gaussian input. Scale covariance is
// exact: the unit-variance optimum is cached per bit depth and scaled by the
// input standard deviation.
inline double optimize_step(int bits, double input_variance) {
    require(bits >= 1 && bits <= QuantizerSpec::kMaxBits, "optimize_step: bits must be in [1, 16]");
    require(input_variance > 0.0 && std::isfinite(input_variance),
            "optimize_step: input variance must be positive");

    static std::map<int, double> cache;
    static std::mutex mutex;
    {
        std::lock_guard<std::mutex> lock(mutex);
        auto it = cache.find(bits);
        if (it != cache.end())
            return std::sqrt(input_variance) * it->second;
    }

    // Golden-section search; the Gaussian MSE is unimodal in the step.
    const auto unit_mse = [bits](double s) { return quantizer_mse(QuantizerSpec::uniform(bits, s), 1.0); };
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 1e-5;
    double hi = 8.0;
    double x1 = hi - ratio * (hi - lo);
    double x2 = lo + ratio * (hi - lo);
    double f1 = unit_mse(x1);
    double f2 = unit_mse(x2);
    for (int it = 0; it < 200 && (hi - lo) > 1e-13; ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = unit_mse(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = unit_mse(x2);
        }
    }
    const double best = 0.5 * (lo + hi);
    {
        std::lock_guard<std::mutex> lock(mutex);
        cache[bits] = best;
    }
    return std::sqrt(input_variance) * best;
}

}  // namespace qmimo
