// SPDX-License-Identifier: Apache-2.0
//
// Gated bottleneck adapter with modality-specific down-projections and a
// weight-shared up-projection, applied to projected image and text features
// before the LM.
#pragma once

#include <string>

#include "crome/params.hpp"
#include "crome/rng.hpp"
#include "crome/tensor.hpp"

namespace crome {

enum class Branch { Image, Text };

struct AdapterConfig {
    int d = 64;          // input/output dim, equals d_llm
    int m = 16;          // bottleneck dim
    bool gated = true;   // false drops the gate matrices entirely
    void validate() const;
};

// Five weight matrices (gated) or three (ungated); no biases anywhere.
// W_u is a single storage object referenced by both branches.
class Adapter {
public:
    Adapter(const AdapterConfig& cfg, ParamRegistry& reg, Rng& rng);

    // Gated:   out = x + (SiLU(x W_d) .* (x W_g)) W_u
    // Ungated: out = x + SiLU(x W_d) W_u
    // Either way the residual skip makes a zero W_u the identity map.
    Tensor forward(const Tensor& x, Branch branch) const;

    // 5*d*m gated, 3*d*m ungated.
    int64_t trainable_param_count() const;

    const AdapterConfig& config() const { return cfg_; }

private:
    AdapterConfig cfg_;
    Tensor down_img_, gate_img_, down_txt_, gate_txt_, up_shared_;
};

// Sequence order [question token embeddings | text-branch | image-branch].
Tensor assemble_llm_input(const Tensor& question_embeds, const Tensor& txt_branch_out,
                          const Tensor& img_branch_out);

// Adapter trainable parameter count from dims alone (no registry needed).
int64_t adapter_param_count(int d, int m, bool gated);

}  // namespace crome
