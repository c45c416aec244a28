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

#include "qmimo/random.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace qmimo;

TEST_CASE("streams are reproducible and independent") {
    const RngStream rng{42, 7};
    const Matrix a = sample_rayleigh_channel(4, 5, rng);
    const Matrix b = sample_rayleigh_channel(4, 5, rng);
    CHECK(a == b);  // bit-for-bit

    const Matrix c = sample_rayleigh_channel(4, 5, RngStream{42, 8});
    CHECK((a - c).norm() > 1e-6);

    const Matrix d = sample_rayleigh_channel(4, 5, rng.child(3));
    CHECK((a - d).norm() > 1e-6);
    CHECK(sample_rayleigh_channel(4, 5, rng.child(3)) == d);
}

TEST_CASE("complex gaussian sampling matches the requested covariance") {
    SECTION("identity covariance") {
        const Matrix z = sample_complex_gaussian(100000, 2, Matrix::Identity(2, 2), RngStream{1, 0});
        const Matrix cov = (z.transpose() * z.conjugate()) / static_cast<double>(z.rows());
        CHECK((cov - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.02);
        // circular symmetry: each real dimension carries half the variance
        const double re_var = z.real().col(0).squaredNorm() / static_cast<double>(z.rows());
        const double im_var = z.imag().col(0).squaredNorm() / static_cast<double>(z.rows());
        CHECK(re_var == Catch::Approx(0.5).margin(0.02));
        CHECK(im_var == Catch::Approx(0.5).margin(0.02));
    }
    SECTION("zero covariance gives the zero matrix") {
        const Matrix z = sample_complex_gaussian(257, 2, Matrix::Zero(2, 2), RngStream{1, 1});
        CHECK(z.norm() == 0.0);
    }
    SECTION("scalar variance 4") {
        Matrix cov(1, 1);
        cov(0, 0) = 4.0;
        const Matrix z = sample_complex_gaussian(100000, 1, cov, RngStream{1, 2});
        const double second_moment = z.squaredNorm() / static_cast<double>(z.rows());
        CHECK(second_moment == Catch::Approx(4.0).epsilon(0.02));
    }
    SECTION("rank-1 covariance samples stay in the range") {
        Vector dir(3);
        dir << Complex(1, 0), Complex(0, 1), Complex(-1, 1);
        const Matrix cov = dir * dir.adjoint();
        const Matrix z = sample_complex_gaussian(64, 3, cov, RngStream{1, 3});
        for (Index n = 0; n < z.rows(); ++n) {
            const Vector row = z.row(n).transpose();
            const Complex scale = row(0) / dir(0);
            CHECK((row - scale * dir).norm() < 1e-10 * std::max(1.0, row.norm()));
        }
    }
    SECTION("non-PSD covariance is rejected") {
        Matrix bad(2, 2);
        bad << Complex(1, 0), Complex(2, 0), Complex(2, 0), Complex(1, 0);
        CHECK_THROWS_AS(sample_complex_gaussian(10, 2, bad, RngStream{1, 4}), std::invalid_argument);
    }
}

TEST_CASE("haar unitary sampling") {
    SECTION("n = 1 gives a uniform phase on the unit circle") {
        Complex mean(0, 0);
        const int draws = 4000;
        for (int k = 0; k < draws; ++k) {
            const UnitaryMatrix v = sample_haar_unitary(1, RngStream{5, static_cast<std::uint64_t>(k)});
            CHECK(std::abs(std::abs(v.entries(0, 0)) - 1.0) < 1e-12);
            mean += v.entries(0, 0);
        }
        CHECK(std::abs(mean) / draws < 3.0 / std::sqrt(static_cast<double>(draws)));
    }
    SECTION("unitarity at n = 64") {
        const UnitaryMatrix v = sample_haar_unitary(64, RngStream{6, 0});
        CHECK(v.unitarity_defect() < 1e-10);
    }
    SECTION("second moment of an entry is 1/n") {
        const Index n = 32;
        const int draws = 10000;
        double sum = 0.0;
        for (int k = 0; k < draws; ++k) {
            const UnitaryMatrix v = sample_haar_unitary(n, RngStream{7, static_cast<std::uint64_t>(k)});
            sum += std::norm(v.entries(0, 0));
        }
        const double mean = sum / draws;
        CHECK(mean == Catch::Approx(1.0 / static_cast<double>(n)).epsilon(0.10));
    }
}

TEST_CASE("haar invariance under fixed left and right multiplication") {
    // Moment tests up to order 2, tolerance 3 standard errors over 1e4 draws.
    const Index n = 8;
    const int draws = 10000;
    const Matrix w = sample_haar_unitary(n, RngStream{99, 0}).entries;

    auto moments = [&](int mode) {  // 0: plain, 1: W V, 2: V W
        std::vector<double> mean_re(draws), mean_abs2(draws);
        for (int k = 0; k < draws; ++k) {
            Matrix v = sample_haar_unitary(n, RngStream{11, static_cast<std::uint64_t>(k)}).entries;
            if (mode == 1)
                v = w * v;
            else if (mode == 2)
                v = v * w;
            mean_re[static_cast<std::size_t>(k)] = v.real().mean();
            mean_abs2[static_cast<std::size_t>(k)] = v.cwiseAbs2().mean();
        }
        return std::pair(mean_re, mean_abs2);
    };

    auto check_stats = [&](const std::vector<double>& xs, double expected) {
        double mean = 0.0;
        for (double x : xs)
            mean += x;
        mean /= xs.size();
        double var = 0.0;
        for (double x : xs)
            var += (x - mean) * (x - mean);
        var /= (xs.size() - 1);
        const double se = std::sqrt(var / xs.size());
        CHECK(std::abs(mean - expected) <= 3.0 * se + 1e-12);
    };

    for (int mode : {0, 1, 2}) {
        const auto [re, abs2] = moments(mode);
        check_stats(re, 0.0);
        check_stats(abs2, 1.0 / static_cast<double>(n));
    }
}

TEST_CASE("random unitary transform gaussianizes row statistics") {
    // Rows of V X with Haar V converge to CN(0, E[X X^H]); the fourth moment
    // separates a Gaussian limit (2) from the +/-1 input (1). Fixed seed.
    const Index n = 4096;
    Sampler s(RngStream{123, 5});
    Matrix x(n, 2);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < 2; ++j)
            x(i, j) = s.uniform01() < 0.5 ? Complex(-1, 0) : Complex(1, 0);

    const UnitaryTransform v = UnitaryTransform::haar(n, RngStream{123, 6});
    const Matrix u = v.apply(x);

    const Matrix cov = (u.transpose() * u.conjugate()) / static_cast<double>(n);
    CHECK(rel_frobenius_error(cov, Matrix::Identity(2, 2)) < 0.05);

    for (Index j = 0; j < 2; ++j) {
        const double fourth = u.col(j).cwiseAbs2().cwiseAbs2().mean();
        CHECK(fourth == Catch::Approx(2.0).epsilon(0.05));
    }
}

TEST_CASE("implicit transform matches its dense matrix") {
    const Index n = 24;
    const UnitaryTransform v = UnitaryTransform::haar(n, RngStream{77, 0});
    const Matrix dense = v.dense_matrix();
    CHECK(UnitaryMatrix{dense}.unitarity_defect() < 1e-10);

    const Matrix x = sample_rayleigh_channel(n, 3, RngStream{77, 1});
    CHECK((v.apply(x) - dense * x).norm() < 1e-11);
    CHECK((v.apply_adjoint(x) - dense.adjoint() * x).norm() < 1e-11);

    const UnitaryTransform f = UnitaryTransform::dft(16);
    CHECK(UnitaryMatrix{f.dense_matrix()}.unitarity_defect() < 1e-12);
}

TEST_CASE("rayleigh channel sampling") {
    const Matrix h = sample_rayleigh_channel(8, 16, RngStream{3, 0});
    CHECK(h.rows() == 8);
    CHECK(h.cols() == 16);

    double sum = 0.0;
    for (int k = 0; k < 100; ++k) {
        const Matrix draw = sample_rayleigh_channel(10, 100, RngStream{3, 1}.child(static_cast<std::uint64_t>(k)));
        sum += draw.squaredNorm() / 1000.0;
    }
    CHECK(sum / 100.0 == Catch::Approx(1.0).epsilon(0.02));
}
