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

#include <Eigen/Dense>

#include <atomic>
#include <complex>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace qmimo {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline void require(bool condition, const std::string& message) {
    if (!condition)
        throw std::invalid_argument(message);
}

inline Matrix hermitize(const Matrix& m) {
    return 0.5 * (m + m.adjoint());
}

inline bool is_hermitian(const Matrix& m, double tol = 1e-10) {
    if (m.rows() != m.cols())
        return false;
    if (m.size() == 0)
        return true;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
}

// Clip the eigenvalues of a Hermitian matrix from below. Used to project
// estimated noise covariances back onto the PSD cone.
inline Matrix floor_eigenvalues(const Matrix& m, double floor_value) {
    if (m.size() == 0)
        return m;
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitize(m));
    const RealVector lam = es.eigenvalues().cwiseMax(floor_value);
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();
}

// Moore-Penrose pseudo-inverse of a Hermitian PSD matrix. Eigenvalues below
// rel_cutoff * lambda_max count as zero, so the result is restricted to the
// numerical range of the input.
inline Matrix pinv_hermitian(const Matrix& m, double rel_cutoff = 1e-10) {
    require(m.rows() == m.cols(), "pinv_hermitian: matrix must be square");
    if (m.size() == 0)
        return m;
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitize(m));
    const RealVector lam = es.eigenvalues();
    const double cutoff = rel_cutoff * std::max(lam.maxCoeff(), 0.0);
    RealVector inv = RealVector::Zero(lam.size());
    for (Index i = 0; i < lam.size(); ++i)
        if (lam(i) > cutoff && lam(i) > 0.0)
            inv(i) = 1.0 / lam(i);
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().adjoint();
}

inline double rel_frobenius_error(const Matrix& value, const Matrix& reference) {
    const double scale = reference.norm();
    if (scale == 0.0)
        return value.norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return (value - reference).norm() / scale;
}

// Runs fn(i) once for every index in [0, count). Results must go into
// caller-owned per-index slots; reductions happen after the join in index
// order, so the outcome does not depend on the worker count.
template <class F>
void parallel_for_index(Index count, int workers, F&& fn) {
    if (workers <= 0)
        workers = static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (workers == 1 || count <= 1) {
        for (Index i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<Index> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const Index i = next.fetch_add(1);
                if (i >= count)
                    return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

}  // namespace qmimo
