// SPDX-License-Identifier: Apache-2.0
//
// Exact trainable-parameter arithmetic for the adapter and the full-scale
// configurations, plus the inter-config delta check.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace crome {

// "5242880" -> "5.24M" (two decimals, truncating style rounding to nearest).
std::string format_millions(int64_t count);

struct FullScaleReport {
    int llm_dim_a = 0, llm_dim_b = 0, m = 0;
    std::vector<int> proj_in_dims;

    int64_t adapter_a = 0;  // 5*m*dim_a
    int64_t adapter_b = 0;
    int64_t proj_a = 0;  // sum(proj_in)*dim_a
    int64_t proj_b = 0;
    int64_t delta = 0;  // (5m + sum proj_in) * (dim_b - dim_a)

    std::string to_text() const;
};

FullScaleReport full_scale_accounting_report(int llm_dim_a, int llm_dim_b, int m,
                                             const std::vector<int>& proj_in_dims);

}  // namespace crome
