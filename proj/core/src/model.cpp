// SPDX-License-Identifier: Apache-2.0
#include "crome/model.hpp"

#include <cmath>

namespace crome {

void ModelConfig::validate() const {
    vision.validate();
    lm.validate();
    qformer.validate();
    adapter.validate();
    if (adapter.d != lm.d_llm)
        throw ConfigError("model: adapter dim must equal d_llm");
    if (qformer.d_kv != vision.d_v)
        throw ConfigError("model: qformer d_kv must equal vision d_v");
}

ModelConfig default_model_config(int vocab_size) {
    ModelConfig cfg;
    cfg.vision = VisionEncoderConfig{};
    cfg.lm = ToyLMConfig{};
    cfg.lm.vocab_size = vocab_size;
    cfg.qformer = QFormerConfig{};
    cfg.qformer.vocab_size = vocab_size;
    cfg.qformer.d_kv = cfg.vision.d_v;
    cfg.adapter = AdapterConfig{};
    cfg.adapter.d = cfg.lm.d_llm;
    return cfg;
}

CromeModel::CromeModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    // One substream per component: ablating one component leaves every other
    // component's initialization bitwise unchanged.
    const Rng root(seed);
    Rng r_vision = root.fork(0);
    Rng r_lm = root.fork(1);
    Rng r_qf = root.fork(2);
    Rng r_proj = root.fork(3);
    Rng r_adapter = root.fork(4);

    vision_ = std::make_unique<VisionEncoder>(cfg_.vision, params_, r_vision);
    lm_ = std::make_unique<ToyLM>(cfg_.lm, params_, r_lm);
    qformer_ = std::make_unique<QFormer>(cfg_.qformer, params_, r_qf);

    proj_img_ = Tensor::randn({cfg_.vision.d_v, cfg_.lm.d_llm}, r_proj, 0.02);
    proj_txt_ = Tensor::randn({cfg_.qformer.d_q, cfg_.lm.d_llm}, r_proj, 0.02);
    params_.add("proj.img", proj_img_);
    params_.add("proj.txt", proj_txt_);

    if (cfg_.adapter_enabled)
        adapter_ = std::make_unique<Adapter>(cfg_.adapter, params_, r_adapter);
}

Tensor CromeModel::multimodal_prefix(const std::vector<int>& instr_ids,
                                     const Image& image) const {
    Tensor img_feats = vision_->encode(image);
    Tensor qf_out = qformer_->forward(instr_ids, img_feats);

    Tensor txt_branch = project(qf_out, proj_txt_);
    Tensor img_branch = project(img_feats, proj_img_);
    if (adapter_) {
        txt_branch = adapter_->forward(txt_branch, Branch::Text);
        img_branch = adapter_->forward(img_branch, Branch::Image);
    }

    Tensor question =
        instr_ids.empty() ? Tensor() : lm_->embed_tokens(instr_ids);
    if (cfg_.order == SequenceOrder::QuestionImageText)
        return assemble_llm_input(question, img_branch, txt_branch);
    return assemble_llm_input(question, txt_branch, img_branch);
}

Tensor CromeModel::sample_loss(const std::vector<int>& instr_ids, const Image& image,
                               const std::vector<int>& target_ids) const {
    if (target_ids.empty()) throw ContractError("sample_loss: empty target");
    Tensor prefix = multimodal_prefix(instr_ids, image);
    const int64_t P = prefix.rows();
    Tensor seq = concat_rows({prefix, lm_->embed_tokens(target_ids)});
    Tensor logits = lm_->forward(seq);

    const int64_t T = seq.rows();
    const int64_t L = static_cast<int64_t>(target_ids.size());
    std::vector<int> targets(T, 0);
    std::vector<uint8_t> mask(T, 0);
    // Position t predicts token t+1; only answer tokens contribute.
    for (int64_t i = 0; i < L; ++i) {
        targets[P - 1 + i] = target_ids[i];
        mask[P - 1 + i] = 1;
    }
    return cross_entropy_next_token(logits, targets, mask);
}

Tensor CromeModel::text_loss(const std::vector<int>& tokens) const {
    if (tokens.size() < 2) throw ContractError("text_loss: need at least two tokens");
    Tensor logits = lm_->forward(lm_->embed_tokens(tokens));
    const int64_t T = static_cast<int64_t>(tokens.size());
    std::vector<int> targets(T, 0);
    std::vector<uint8_t> mask(T, 0);
    for (int64_t t = 0; t + 1 < T; ++t) {
        targets[t] = tokens[t + 1];
        mask[t] = 1;
    }
    return cross_entropy_next_token(logits, targets, mask);
}

double CromeModel::continuation_loglik(const Tensor& prefix,
                                       const std::vector<int>& cont_ids) const {
    if (cont_ids.empty()) throw ContractError("continuation_loglik: empty continuation");
    const int64_t P = prefix.rows();
    Tensor seq = concat_rows({prefix, lm_->embed_tokens(cont_ids)});
    Tensor logits = lm_->forward(seq);
    const int64_t V = logits.cols();

    double total = 0.0;
    for (size_t i = 0; i < cont_ids.size(); ++i) {
        const int64_t row = P - 1 + static_cast<int64_t>(i);
        const Scalar* l = logits.values().data() + row * V;
        Scalar mx = l[0];
        for (int64_t j = 1; j < V; ++j) mx = std::max(mx, l[j]);
        Scalar z = 0.0;
        for (int64_t j = 0; j < V; ++j) z += std::exp(l[j] - mx);
        total += l[cont_ids[i]] - (mx + std::log(z));
    }
    return total;
}

}  // namespace crome
