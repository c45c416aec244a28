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

#include "qmimo/channel.hpp"

#include "qmimo/random.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

using namespace qmimo;

TEST_CASE("awgn channel basics") {
    SECTION("identity channel without noise passes the signal through") {
        const ChannelSpec spec = awgn_mimo(Matrix::Identity(3, 3), 0.0);
        const Matrix x = sample_rayleigh_channel(16, 3, RngStream{1, 0});
        const Matrix noise = sample_rayleigh_channel(16, 3, RngStream{1, 1});
        CHECK((apply_channel(spec, x, noise) - x).norm() == 0.0);
    }
    SECTION("zero input leaves scaled noise") {
        const ChannelSpec spec = awgn_mimo(sample_rayleigh_channel(2, 4, RngStream{2, 0}), 0.5);
        const Matrix x = Matrix::Zero(8, 4);
        const Matrix noise = sample_rayleigh_channel(8, 2, RngStream{2, 1});
        CHECK((apply_channel(spec, x, noise) - 0.5 * noise).norm() < 1e-14);
    }
    SECTION("dimension mismatches are rejected") {
        const ChannelSpec spec = awgn_mimo(sample_rayleigh_channel(2, 4, RngStream{3, 0}), 0.1);
        CHECK_THROWS_AS(apply_channel(spec, Matrix::Zero(8, 3), Matrix::Zero(8, 2)), std::invalid_argument);
        CHECK_THROWS_AS(apply_channel(spec, Matrix::Zero(8, 4), Matrix::Zero(8, 3)), std::invalid_argument);
        CHECK_THROWS_AS(apply_channel(spec, Matrix::Zero(8, 4), Matrix::Zero(7, 2)), std::invalid_argument);
        CHECK_THROWS_AS(awgn_mimo(Matrix::Identity(2, 2), -1.0), std::invalid_argument);
    }
}

TEST_CASE("channel acts row-wise") {
    // permuting the rows of (X, noise) permutes the rows of Y identically
    const ChannelSpec spec = awgn_mimo(sample_rayleigh_channel(3, 5, RngStream{4, 0}), 0.7);
    const Index n = 32;
    const Matrix x = sample_rayleigh_channel(n, 5, RngStream{4, 1});
    const Matrix noise = sample_rayleigh_channel(n, 3, RngStream{4, 2});
    const Matrix y = apply_channel(spec, x, noise);

    Sampler s(RngStream{4, 3});
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<Index> perm(n);
        std::iota(perm.begin(), perm.end(), Index{0});
        for (Index i = n - 1; i > 0; --i)
            std::swap(perm[static_cast<std::size_t>(i)],
                      perm[static_cast<std::size_t>(static_cast<Index>(s.uniform01() * static_cast<double>(i + 1)))]);
        Matrix xp(n, 5), np(n, 3);
        for (Index i = 0; i < n; ++i) {
            xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
            np.row(i) = noise.row(perm[static_cast<std::size_t>(i)]);
        }
        const Matrix yp = apply_channel(spec, xp, np);
        for (Index i = 0; i < n; ++i)
            CHECK((yp.row(i) - y.row(perm[static_cast<std::size_t>(i)])).norm() == 0.0);
    }
}

TEST_CASE("sampled Lipschitz bound holds") {
    const ChannelSpec spec = awgn_mimo(sample_rayleigh_channel(4, 6, RngStream{5, 0}), 0.3);
    const double bound = spec.lipschitz_bound();
    Sampler s(RngStream{5, 1});
    for (int k = 0; k < 1000; ++k) {
        const Matrix x1 = s.complex_gaussian_matrix(1, 6);
        const Matrix x2 = s.complex_gaussian_matrix(1, 6);
        const Matrix xi = s.complex_gaussian_matrix(1, 4);
        const double lhs = (apply_channel(spec, x1, xi) - apply_channel(spec, x2, xi)).norm();
        CHECK(lhs <= bound * (x1 - x2).norm() + 1e-9);
    }
}
