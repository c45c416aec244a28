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

namespace qmimo {

// Row-wise channel abstraction. Only the MIMO AWGN instance ships; the kind
// tag is the extension point for nonlinear RF front ends.
enum class ChannelKind {
    awgn_mimo,
};

struct ChannelSpec {
    ChannelKind kind = ChannelKind::awgn_mimo;
    Matrix gain;             // H, n_r x n_t
    double noise_std = 0.0;  // sigma

    Index input_dim() const { return gain.cols(); }
    Index output_dim() const { return gain.rows(); }

    // The row map x -> H x + sigma*xi is Lipschitz in x with constant equal
    // to the largest singular value of H.
    double lipschitz_bound() const {
        Eigen::JacobiSVD<Matrix> svd(gain);
        return svd.singularValues()(0);
    }
};

inline ChannelSpec awgn_mimo(Matrix h, double noise_std) {
    require(h.size() > 0, "awgn_mimo: channel matrix must be non-empty");
    require(noise_std >= 0.0 && std::isfinite(noise_std), "awgn_mimo: noise std must be non-negative");
    return ChannelSpec{ChannelKind::awgn_mimo, std::move(h), noise_std};
}

// y_n = H x_n + sigma * xi_n for every row independently. Noise rows are
// i.i.d. CN(0, I); the sigma scaling happens here.
inline Matrix apply_channel(const ChannelSpec& spec, const Matrix& x, const Matrix& noise) {
    require(x.cols() == spec.input_dim(), "apply_channel: transmit dimension mismatch");
    require(noise.rows() == x.rows(), "apply_channel: noise row count mismatch");
    require(noise.cols() == spec.output_dim(), "apply_channel: noise dimension mismatch");
    return x * spec.gain.transpose() + spec.noise_std * noise;
}

}  // namespace qmimo
