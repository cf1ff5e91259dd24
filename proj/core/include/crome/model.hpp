// SPDX-License-Identifier: Apache-2.0
//
// Full multimodal pipeline: frozen vision encoder and toy LM around the
// Q-Former, projection layers and gated adapter.
#pragma once

#include <memory>
#include <optional>

#include "crome/adapter.hpp"
#include "crome/data.hpp"
#include "crome/nn.hpp"

namespace crome {

enum class SequenceOrder {
    QuestionTextImage,  // [question | text branch | image branch] (default)
    QuestionImageText,
};

struct ModelConfig {
    VisionEncoderConfig vision;
    ToyLMConfig lm;
    QFormerConfig qformer;
    AdapterConfig adapter;
    bool adapter_enabled = true;  // false reproduces the adapter-less control
    SequenceOrder order = SequenceOrder::QuestionTextImage;

    void validate() const;
};

ModelConfig default_model_config(int vocab_size);

class CromeModel {
public:
    CromeModel(const ModelConfig& cfg, uint64_t seed);

    ParamRegistry& params() { return params_; }
    const ParamRegistry& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }

    const VisionEncoder& vision() const { return *vision_; }
    const ToyLM& lm() const { return *lm_; }
    const QFormer& qformer() const { return *qformer_; }
    const Adapter* adapter() const { return adapter_.get(); }

    // [question embeds | adapter(text branch) | adapter(image branch)],
    // assembled from a preprocessed image and instruction token ids.
    Tensor multimodal_prefix(const std::vector<int>& instr_ids, const Image& image) const;

    // Next-token loss over the target positions only.
    Tensor sample_loss(const std::vector<int>& instr_ids, const Image& image,
                       const std::vector<int>& target_ids) const;

    // Plain LM next-token loss over a token sequence (stage-0 pretraining).
    Tensor text_loss(const std::vector<int>& tokens) const;

    // Total log-likelihood of continuation tokens given the prefix.
    double continuation_loglik(const Tensor& prefix, const std::vector<int>& cont_ids) const;

private:
    ModelConfig cfg_;
    ParamRegistry params_;
    std::unique_ptr<VisionEncoder> vision_;
    std::unique_ptr<ToyLM> lm_;
    std::unique_ptr<QFormer> qformer_;
    std::unique_ptr<Adapter> adapter_;
    Tensor proj_img_, proj_txt_;
};

}  // namespace crome
