// SPDX-License-Identifier: Apache-2.0
#include "crome/accounting.hpp"

#include <cmath>
#include <sstream>

#include "crome/adapter.hpp"

namespace crome {

std::string format_millions(int64_t count) {
    const double m = static_cast<double>(count) / 1e6;
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << m << "M";
    return os.str();
}

FullScaleReport full_scale_accounting_report(int llm_dim_a, int llm_dim_b, int m,
                                             const std::vector<int>& proj_in_dims) {
    FullScaleReport r;
    r.llm_dim_a = llm_dim_a;
    r.llm_dim_b = llm_dim_b;
    r.m = m;
    r.proj_in_dims = proj_in_dims;
    int64_t proj_sum = 0;
    for (int p : proj_in_dims) proj_sum += p;
    r.adapter_a = adapter_param_count(llm_dim_a, m, /*gated=*/true);
    r.adapter_b = adapter_param_count(llm_dim_b, m, /*gated=*/true);
    r.proj_a = proj_sum * llm_dim_a;
    r.proj_b = proj_sum * llm_dim_b;
    r.delta = (5LL * m + proj_sum) * (llm_dim_b - llm_dim_a);
    return r;
}

std::string FullScaleReport::to_text() const {
    std::ostringstream os;
    os << "adapter trainable params @ d=" << llm_dim_a << ", m=" << m << ": " << adapter_a
       << " (" << format_millions(adapter_a) << ")\n";
    os << "adapter trainable params @ d=" << llm_dim_b << ", m=" << m << ": " << adapter_b
       << " (" << format_millions(adapter_b) << ")\n";
    os << "projection params @ d=" << llm_dim_a << ": " << proj_a << " ("
       << format_millions(proj_a) << ")\n";
    os << "projection params @ d=" << llm_dim_b << ": " << proj_b << " ("
       << format_millions(proj_b) << ")\n";
    os << "inter-config delta (5m + sum proj_in)*(d_b - d_a): " << delta << " ("
       << format_millions(delta) << ")\n";
    return os.str();
}

}  // namespace crome
