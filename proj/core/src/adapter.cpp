// SPDX-License-Identifier: Apache-2.0
#include "crome/adapter.hpp"

namespace crome {

void AdapterConfig::validate() const {
    if (d <= 0 || m <= 0) throw ConfigError("adapter: d and m must be positive");
}

Adapter::Adapter(const AdapterConfig& cfg, ParamRegistry& reg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int64_t d = cfg_.d, m = cfg_.m;
    down_img_ = Tensor::randn({d, m}, rng, 0.02);
    down_txt_ = Tensor::randn({d, m}, rng, 0.02);
    if (cfg_.gated) {
        gate_img_ = Tensor::randn({d, m}, rng, 0.02);
        gate_txt_ = Tensor::randn({d, m}, rng, 0.02);
    }
    // Zero-initialized up-projection: training starts from an identity
    // adapter, so the first multimodal forward equals the adapter-less
    // baseline.
    up_shared_ = Tensor::zeros({m, d});

    reg.add("adapter.img.down", down_img_);
    reg.add("adapter.txt.down", down_txt_);
    if (cfg_.gated) {
        reg.add("adapter.img.gate", gate_img_);
        reg.add("adapter.txt.gate", gate_txt_);
    }
    reg.add("adapter.shared.up", up_shared_);
}

Tensor Adapter::forward(const Tensor& x, Branch branch) const {
    if (x.cols() != cfg_.d)
        throw ShapeError("adapter: input trailing dim " + std::to_string(x.cols()) +
                         " != d " + std::to_string(cfg_.d));
    const Tensor& w_d = branch == Branch::Image ? down_img_ : down_txt_;
    Tensor z = silu(matmul(x, w_d));
    if (cfg_.gated) {
        const Tensor& w_g = branch == Branch::Image ? gate_img_ : gate_txt_;
        z = mul(z, matmul(x, w_g));
    }
    return add(x, matmul(z, up_shared_));
}

int64_t Adapter::trainable_param_count() const {
    return adapter_param_count(cfg_.d, cfg_.m, cfg_.gated);
}

int64_t adapter_param_count(int d, int m, bool gated) {
    return static_cast<int64_t>(gated ? 5 : 3) * d * m;
}

Tensor assemble_llm_input(const Tensor& question_embeds, const Tensor& txt_branch_out,
                          const Tensor& img_branch_out) {
    const int64_t d = txt_branch_out.cols();
    if (img_branch_out.cols() != d ||
        (question_embeds.defined() && question_embeds.rows() > 0 &&
         question_embeds.cols() != d))
        throw ShapeError("assemble_llm_input: trailing dims disagree");
    if (!question_embeds.defined() || question_embeds.rows() == 0)
        return concat_rows({txt_branch_out, img_branch_out});
    return concat_rows({question_embeds, txt_branch_out, img_branch_out});
}

}  // namespace crome
