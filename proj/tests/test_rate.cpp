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

#include "qmimo/rate.hpp"

#include "qmimo/random.hpp"
#include "qmimo/simkit.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace qmimo;

namespace {

LinearModel model_of(Matrix a, Matrix t) {
    const Index d = a.cols();
    return LinearModel{std::move(a), std::move(t), Matrix::Identity(d, d), 0};
}

}  // namespace

TEST_CASE("rate lower bound elementary values") {
    SECTION("scalar unit system gives exactly one bit") {
        const LinearModel m = model_of(Matrix::Identity(1, 1), Matrix::Identity(1, 1));
        RealVector deltas(1);
        deltas << 1.0;
        CHECK(rate_lower_bound(m, {Matrix::Identity(1, 1)}, deltas) == Catch::Approx(1.0).epsilon(1e-12));
    }
    SECTION("zero input covariance gives zero rate") {
        const LinearModel m = model_of(sample_rayleigh_channel(3, 3, RngStream{40, 0}), Matrix::Identity(3, 3));
        RealVector deltas(2);
        deltas << 0.5, 0.5;
        CHECK(rate_lower_bound(m, {Matrix::Zero(3, 3), Matrix::Zero(3, 3)}, deltas) == 0.0);
    }
    SECTION("singular noise covariance is named in the error") {
        const LinearModel m = model_of(Matrix::Identity(2, 2), Matrix::Zero(2, 2));
        RealVector deltas(1);
        deltas << 1.0;
        CHECK_THROWS_WITH(rate_lower_bound(m, {Matrix::Identity(2, 2)}, deltas),
                          Catch::Matchers::ContainsSubstring("eigenvalue"));
    }
}

TEST_CASE("shannon capacity") {
    SECTION("scalar unit channel at unit SNR") {
        Matrix p(1, 1);
        p(0, 0) = 1.0;
        CHECK(shannon_capacity(Matrix::Identity(1, 1), p, 1.0) == Catch::Approx(1.0).epsilon(1e-12));
    }
    SECTION("zero covariance carries nothing") {
        const Matrix h = sample_rayleigh_channel(4, 6, RngStream{41, 0});
        CHECK(shannon_capacity(h, Matrix::Zero(6, 6), 0.5) == 0.0);
    }
    SECTION("equals the bound under the linear fast path") {
        const Matrix h = sample_rayleigh_channel(8, 16, RngStream{41, 1});
        const Matrix p = Matrix::Identity(16, 16);
        const double noise_var = snr_to_noise_var(h, p, 5.0);
        const RowMap chain = make_e2e_chain(Matrix::Identity(16, 16),
                                            std::vector<QuantizerSpec>(16, QuantizerSpec::identity()), h,
                                            std::sqrt(noise_var), Matrix::Identity(8, 8),
                                            std::vector<QuantizerSpec>(8, QuantizerSpec::identity()));
        const LinearModel m = estimate_linear_model(chain, p, 1000, RngStream{41, 2});
        RealVector deltas(1);
        deltas << 1.0;
        const double bound = rate_lower_bound(m, {p}, deltas);
        const double capacity = shannon_capacity(h, p, noise_var);
        CHECK(std::abs(bound - capacity) <= 1e-9 * capacity);
    }
}

TEST_CASE("snr to noise variance") {
    const Matrix h = Matrix::Identity(4, 4);
    const Matrix p = Matrix::Identity(4, 4);
    SECTION("0 dB with per-antenna unit signal power gives unit noise") {
        CHECK(snr_to_noise_var(h, p, 0.0) == Catch::Approx(1.0).epsilon(1e-12));
    }
    SECTION("+10 dB shrinks the variance by exactly 10x") {
        CHECK(snr_to_noise_var(h, p, 10.0) == Catch::Approx(0.1).epsilon(1e-12));
        const Matrix g = sample_rayleigh_channel(3, 5, RngStream{42, 0});
        const Matrix q = Matrix::Identity(5, 5);
        CHECK(snr_to_noise_var(g, q, 10.0) == Catch::Approx(snr_to_noise_var(g, q, 0.0) / 10.0).epsilon(1e-12));
    }
    SECTION("zero signal power is rejected") {
        CHECK_THROWS_AS(snr_to_noise_var(h, Matrix::Zero(4, 4), 0.0), std::invalid_argument);
    }
}

TEST_CASE("sub-band additivity") {
    // M equal bands with identical P_m collapse to the single-band bound.
    const Matrix a = sample_rayleigh_channel(3, 4, RngStream{43, 0});
    const Matrix g = sample_rayleigh_channel(3, 3, RngStream{43, 1});
    const LinearModel m = model_of(a, hermitize(g * g.adjoint()) + 0.1 * Matrix::Identity(3, 3));
    const Matrix p = Matrix::Identity(4, 4);

    RealVector one(1);
    one << 1.0;
    const double single = rate_lower_bound(m, {p}, one);

    RealVector four = RealVector::Constant(4, 0.25);
    const double split = rate_lower_bound(m, {p, p, p, p}, four);
    CHECK(split == Catch::Approx(single).epsilon(1e-12));
}

TEST_CASE("rate behaviour across converter resolutions") {
    // Small end-to-end system: the bound never exceeds capacity and does not
    // decrease when converters gain bits ({1, 3, inf}, 1% slack).
    const Index nt = 4, nr = 4;
    const Matrix h = sample_rayleigh_channel(nr, nt, RngStream{44, 0});
    const Matrix p = Matrix::Identity(nt, nt);
    RealVector deltas(1);
    deltas << 1.0;

    for (double snr_db : {-5.0, 10.0}) {
        const double noise_var = snr_to_noise_var(h, p, snr_db);
        const double sigma = std::sqrt(noise_var);
        const double capacity = shannon_capacity(h, p, noise_var);

        double previous = 0.0;
        int index = 0;
        for (int bits : {1, 3, QuantizerSpec::kInfiniteBits}) {
            std::vector<QuantizerSpec> dac, adc;
            for (Index i = 0; i < nt; ++i)
                dac.push_back(bits == QuantizerSpec::kInfiniteBits ? QuantizerSpec::identity()
                                                                   : QuantizerSpec::mse_optimal(bits, 0.5));
            for (Index j = 0; j < nr; ++j) {
                const double branch_var = (h.row(j).squaredNorm() + noise_var) / 2.0;
                adc.push_back(bits == QuantizerSpec::kInfiniteBits ? QuantizerSpec::identity()
                                                                   : QuantizerSpec::mse_optimal(bits, branch_var));
            }
            const RowMap chain = make_e2e_chain(Matrix::Identity(nt, nt), dac, h, sigma, Matrix::Identity(nr, nr), adc);
            const LinearModel m = estimate_linear_model(chain, p, 100000, RngStream{44, 1}.child(bits + 2));
            const double bound = rate_lower_bound(m, {p}, deltas);
            CHECK(bound <= capacity * 1.01);
            if (index++ > 0)
                CHECK(bound >= previous * 0.99);
            previous = bound;
        }
        CHECK(previous == Catch::Approx(capacity).epsilon(1e-9));  // infinite bits
    }
}
