// SPDX-License-Identifier: Apache-2.0
//
// Central-difference verification of every differentiable primitive and of
// the composite blocks, including both adapter branches.
#pragma once

#include <string>
#include <vector>

namespace crome {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
};

// Runs the whole battery; every entry should come back below 1e-4 at double
// precision. Deterministic under the seed.
std::vector<GradCheckResult> run_grad_check_suite(uint64_t seed = 123);

}  // namespace crome
