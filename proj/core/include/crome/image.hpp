// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace crome {

// Dense HxWxC float image, row-major, channels innermost, values in model
// space (raw renders are in [0,1]; preprocessed images are normalized).
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> data;

    double& at(int y, int x, int ch) { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
};

}  // namespace crome
