// SPDX-License-Identifier: Apache-2.0
//
// Frozen/trainable neural components around the adapter: vision encoder,
// toy decoder-only LM, Q-Former-lite and the projection layers.
#pragma once

#include <string>
#include <vector>

#include "crome/image.hpp"
#include "crome/params.hpp"
#include "crome/rng.hpp"
#include "crome/tensor.hpp"

namespace crome {

struct VisionEncoderConfig {
    int image_size = 16;  // square input, pixels
    int patch_size = 4;
    int channels = 3;
    int d_v = 32;
    int n_layers = 2;
    int n_heads = 4;

    int grid() const { return image_size / patch_size; }
    int n_patches() const { return grid() * grid(); }
    void validate() const;
};

struct ToyLMConfig {
    int vocab_size = 64;
    int d_llm = 64;
    int n_layers = 2;
    int n_heads = 4;
    int max_seq_len = 64;
    void validate() const;
};

struct QFormerConfig {
    int n_queries = 8;
    int d_q = 32;
    int n_layers = 4;
    int n_heads = 4;
    int cross_attn_every = 2;  // cross-attention in blocks with index % stride == 0
    int vocab_size = 64;       // own instruction embedding table
    int d_kv = 32;             // dimensionality of the image features attended to
    int max_instr_len = 32;
    void validate() const;
};

struct LayerNormParams {
    Tensor gain, bias;
};

struct AttnParams {
    Tensor q_proj, k_proj, v_proj, o_proj;
    int n_heads = 1;
};

struct MlpParams {
    Tensor w1, w2;
};

struct BlockParams {
    LayerNormParams ln1;
    AttnParams self_attn;
    bool has_cross = false;
    LayerNormParams ln_cross;
    AttnParams cross_attn;
    LayerNormParams ln2;
    MlpParams mlp;
};

// Multi-head scaled dot-product attention. x supplies queries, kv keys and
// values; kv may have a different feature width than x (cross-attention).
Tensor attention(const Tensor& x, const Tensor& kv, const AttnParams& p,
                 bool causal);

// Pre-LN residual block: self-attention, optional cross-attention to
// cross_kv, then a GELU MLP.
Tensor block_forward(const Tensor& x, const BlockParams& p, bool causal,
                     const Tensor& cross_kv = Tensor());

// Single linear map, no bias, no activation.
Tensor project(const Tensor& x, const Tensor& weight);

class VisionEncoder {
public:
    VisionEncoder(const VisionEncoderConfig& cfg, ParamRegistry& reg, Rng& rng);

    // Features from the second-to-last block.
    Tensor encode(const Image& img) const;
    // Output of every block, for instrumentation.
    std::vector<Tensor> forward_all(const Image& img) const;

    const VisionEncoderConfig& config() const { return cfg_; }

private:
    Tensor patchify(const Image& img) const;
    VisionEncoderConfig cfg_;
    Tensor patch_embed_, pos_;
    std::vector<BlockParams> blocks_;
};

class ToyLM {
public:
    ToyLM(const ToyLMConfig& cfg, ParamRegistry& reg, Rng& rng);

    // Token embeddings without positional terms; multimodal prefixes are
    // spliced in at this level and positions are added inside forward().
    Tensor embed_tokens(const std::vector<int>& ids) const;

    // Causal decoder over a pre-computed embedding sequence -> [T, V] logits.
    Tensor forward(const Tensor& input_embeds) const;

    const ToyLMConfig& config() const { return cfg_; }

private:
    ToyLMConfig cfg_;
    Tensor tok_embed_, pos_embed_;
    std::vector<BlockParams> blocks_;
    LayerNormParams ln_f_;
    Tensor head_;  // untied output head [d_llm, V]
};

class QFormer {
public:
    QFormer(const QFormerConfig& cfg, ParamRegistry& reg, Rng& rng);

    // Learnable queries and embedded instruction tokens jointly self-attend;
    // cross-attention to img_feats in designated blocks. Returns the final
    // query positions only: [n_queries, d_q]. Empty instructions are allowed
    // (caption-style pretraining); empty image features are not.
    Tensor forward(const std::vector<int>& instr_ids, const Tensor& img_feats) const;

    const QFormerConfig& config() const { return cfg_; }

private:
    QFormerConfig cfg_;
    Tensor queries_, tok_embed_, instr_pos_;
    std::vector<BlockParams> blocks_;
};

}  // namespace crome
