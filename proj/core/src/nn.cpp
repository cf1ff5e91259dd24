// SPDX-License-Identifier: Apache-2.0
#include "crome/nn.hpp"

#include <cmath>

namespace crome {

namespace {

constexpr Scalar kInitStd = 0.02;

Tensor init_weight(ParamRegistry& reg, const std::string& name, int64_t rows,
                   int64_t cols, Rng& rng) {
    Tensor t = Tensor::randn({rows, cols}, rng, kInitStd);
    reg.add(name, t);
    return t;
}

LayerNormParams init_ln(ParamRegistry& reg, const std::string& prefix, int64_t d) {
    LayerNormParams ln;
    ln.gain = Tensor::from({d}, std::vector<Scalar>(d, 1.0));
    ln.bias = Tensor::zeros({d});
    reg.add(prefix + ".gain", ln.gain);
    reg.add(prefix + ".bias", ln.bias);
    return ln;
}

AttnParams init_attn(ParamRegistry& reg, const std::string& prefix, int64_t d_model,
                     int64_t d_kv, int n_heads, Rng& rng) {
    AttnParams a;
    a.n_heads = n_heads;
    a.q_proj = init_weight(reg, prefix + ".q_proj", d_model, d_model, rng);
    a.k_proj = init_weight(reg, prefix + ".k_proj", d_kv, d_model, rng);
    a.v_proj = init_weight(reg, prefix + ".v_proj", d_kv, d_model, rng);
    a.o_proj = init_weight(reg, prefix + ".o_proj", d_model, d_model, rng);
    return a;
}

MlpParams init_mlp(ParamRegistry& reg, const std::string& prefix, int64_t d, Rng& rng) {
    MlpParams m;
    m.w1 = init_weight(reg, prefix + ".w1", d, 4 * d, rng);
    m.w2 = init_weight(reg, prefix + ".w2", 4 * d, d, rng);
    return m;
}

BlockParams init_block(ParamRegistry& reg, const std::string& prefix, int64_t d,
                       int n_heads, Rng& rng, bool with_cross = false, int64_t d_kv = 0) {
    BlockParams b;
    b.ln1 = init_ln(reg, prefix + ".ln1", d);
    b.self_attn = init_attn(reg, prefix + ".self", d, d, n_heads, rng);
    if (with_cross) {
        b.has_cross = true;
        b.ln_cross = init_ln(reg, prefix + ".ln_cross", d);
        b.cross_attn = init_attn(reg, prefix + ".cross", d, d_kv, n_heads, rng);
    }
    b.ln2 = init_ln(reg, prefix + ".ln2", d);
    b.mlp = init_mlp(reg, prefix + ".mlp", d, rng);
    return b;
}

}  // namespace

void VisionEncoderConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
        throw ConfigError("vision: image_size must be a positive multiple of patch_size");
    if (d_v <= 0 || n_heads <= 0 || d_v % n_heads != 0)
        throw ConfigError("vision: d_v must be divisible by n_heads");
    if (n_layers < 2) throw ConfigError("vision: need >= 2 layers for a penultimate tap");
}

void ToyLMConfig::validate() const {
    if (d_llm <= 0 || n_heads <= 0 || d_llm % n_heads != 0)
        throw ConfigError("lm: d_llm must be divisible by n_heads");
    if (vocab_size <= 0 || n_layers <= 0 || max_seq_len <= 0)
        throw ConfigError("lm: nonpositive config field");
}

void QFormerConfig::validate() const {
    if (d_q <= 0 || n_heads <= 0 || d_q % n_heads != 0)
        throw ConfigError("qformer: d_q must be divisible by n_heads");
    if (n_queries <= 0 || n_layers <= 0 || cross_attn_every <= 0)
        throw ConfigError("qformer: nonpositive config field");
}

Tensor attention(const Tensor& x, const Tensor& kv, const AttnParams& p, bool causal) {
    const int64_t d_model = p.q_proj.cols();
    const int64_t dh = d_model / p.n_heads;
    Tensor q = matmul(x, p.q_proj);
    Tensor k = matmul(kv, p.k_proj);
    Tensor v = matmul(kv, p.v_proj);
    const Scalar inv_sqrt_dh = 1.0 / std::sqrt(static_cast<Scalar>(dh));

    std::vector<Tensor> heads;
    heads.reserve(p.n_heads);
    for (int h = 0; h < p.n_heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, dh);
        Tensor kh = slice_cols(k, h * dh, dh);
        Tensor vh = slice_cols(v, h * dh, dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
        if (causal) scores = causal_mask_apply(scores);
        heads.push_back(matmul(softmax_rows(scores), vh));
    }
    return matmul(concat_cols(heads), p.o_proj);
}

Tensor block_forward(const Tensor& x, const BlockParams& p, bool causal,
                     const Tensor& cross_kv) {
    Tensor h = x;
    Tensor n1 = layernorm(h, p.ln1.gain, p.ln1.bias);
    h = add(h, attention(n1, n1, p.self_attn, causal));
    if (p.has_cross) {
        if (!cross_kv.defined())
            throw ContractError("block_forward: cross-attention block needs key/value input");
        h = add(h, attention(layernorm(h, p.ln_cross.gain, p.ln_cross.bias), cross_kv,
                             p.cross_attn, false));
    }
    Tensor m = layernorm(h, p.ln2.gain, p.ln2.bias);
    m = matmul(gelu(matmul(m, p.mlp.w1)), p.mlp.w2);
    return add(h, m);
}

Tensor project(const Tensor& x, const Tensor& weight) {
    if (x.cols() != weight.rows())
        throw ShapeError("project: input dim " + std::to_string(x.cols()) +
                         " does not match weight " + shape_str(weight.shape()));
    return matmul(x, weight);
}

VisionEncoder::VisionEncoder(const VisionEncoderConfig& cfg, ParamRegistry& reg, Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    const int64_t patch_dim =
        static_cast<int64_t>(cfg_.patch_size) * cfg_.patch_size * cfg_.channels;
    patch_embed_ = init_weight(reg, "vision.patch_embed", patch_dim, cfg_.d_v, rng);
    pos_ = Tensor::randn({cfg_.n_patches(), cfg_.d_v}, rng, kInitStd);
    reg.add("vision.pos", pos_);
    for (int i = 0; i < cfg_.n_layers; ++i)
        blocks_.push_back(init_block(reg, "vision.block" + std::to_string(i), cfg_.d_v,
                                     cfg_.n_heads, rng));
}

Tensor VisionEncoder::patchify(const Image& img) const {
    if (img.h != cfg_.image_size || img.w != cfg_.image_size || img.c != cfg_.channels)
        throw ShapeError("encode_image: image " + std::to_string(img.h) + "x" +
                         std::to_string(img.w) + "x" + std::to_string(img.c) +
                         " does not match config " + std::to_string(cfg_.image_size) +
                         "x" + std::to_string(cfg_.image_size) + "x" +
                         std::to_string(cfg_.channels));
    const int g = cfg_.grid(), ps = cfg_.patch_size;
    const int64_t patch_dim = static_cast<int64_t>(ps) * ps * cfg_.channels;
    std::vector<Scalar> rows(static_cast<size_t>(cfg_.n_patches()) * patch_dim);
    size_t idx = 0;
    for (int py = 0; py < g; ++py)
        for (int px = 0; px < g; ++px)
            for (int y = 0; y < ps; ++y)
                for (int x = 0; x < ps; ++x)
                    for (int ch = 0; ch < cfg_.channels; ++ch)
                        rows[idx++] = img.at(py * ps + y, px * ps + x, ch);
    return Tensor::from({cfg_.n_patches(), patch_dim}, std::move(rows));
}

std::vector<Tensor> VisionEncoder::forward_all(const Image& img) const {
    Tensor h = add(matmul(patchify(img), patch_embed_), pos_);
    std::vector<Tensor> outs;
    outs.reserve(blocks_.size());
    for (const BlockParams& b : blocks_) {
        h = block_forward(h, b, /*causal=*/false);
        outs.push_back(h);
    }
    return outs;
}

Tensor VisionEncoder::encode(const Image& img) const {
    // Second-to-last block output; the final block is not evaluated.
    Tensor h = add(matmul(patchify(img), patch_embed_), pos_);
    for (int i = 0; i + 1 < cfg_.n_layers; ++i)
        h = block_forward(h, blocks_[i], /*causal=*/false);
    return h;
}

ToyLM::ToyLM(const ToyLMConfig& cfg, ParamRegistry& reg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    tok_embed_ = init_weight(reg, "lm.tok_embed", cfg_.vocab_size, cfg_.d_llm, rng);
    pos_embed_ = init_weight(reg, "lm.pos_embed", cfg_.max_seq_len, cfg_.d_llm, rng);
    for (int i = 0; i < cfg_.n_layers; ++i)
        blocks_.push_back(init_block(reg, "lm.block" + std::to_string(i), cfg_.d_llm,
                                     cfg_.n_heads, rng));
    ln_f_ = init_ln(reg, "lm.ln_f", cfg_.d_llm);
    head_ = init_weight(reg, "lm.head", cfg_.d_llm, cfg_.vocab_size, rng);
}

Tensor ToyLM::embed_tokens(const std::vector<int>& ids) const {
    return embedding_rows(tok_embed_, ids);
}

Tensor ToyLM::forward(const Tensor& input_embeds) const {
    const int64_t T = input_embeds.rows();
    if (T > cfg_.max_seq_len)
        throw ShapeError("llm_forward: sequence length " + std::to_string(T) +
                         " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
    Tensor h = add(input_embeds, slice_rows(pos_embed_, 0, T));
    for (const BlockParams& b : blocks_) h = block_forward(h, b, /*causal=*/true);
    h = layernorm(h, ln_f_.gain, ln_f_.bias);
    return matmul(h, head_);
}

QFormer::QFormer(const QFormerConfig& cfg, ParamRegistry& reg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    queries_ = init_weight(reg, "qformer.queries", cfg_.n_queries, cfg_.d_q, rng);
    tok_embed_ = init_weight(reg, "qformer.tok_embed", cfg_.vocab_size, cfg_.d_q, rng);
    instr_pos_ = init_weight(reg, "qformer.instr_pos", cfg_.max_instr_len, cfg_.d_q, rng);
    for (int i = 0; i < cfg_.n_layers; ++i)
        blocks_.push_back(init_block(reg, "qformer.block" + std::to_string(i), cfg_.d_q,
                                     cfg_.n_heads, rng,
                                     /*with_cross=*/i % cfg_.cross_attn_every == 0,
                                     cfg_.d_kv));
}

Tensor QFormer::forward(const std::vector<int>& instr_ids, const Tensor& img_feats) const {
    if (!img_feats.defined() || img_feats.rows() == 0)
        throw ContractError("qformer_forward: image features must be non-empty");
    if (static_cast<int>(instr_ids.size()) > cfg_.max_instr_len)
        throw ShapeError("qformer_forward: instruction longer than max_instr_len");

    Tensor h = queries_;
    if (!instr_ids.empty()) {
        Tensor instr = embedding_rows(tok_embed_, instr_ids);
        instr = add(instr, slice_rows(instr_pos_, 0, static_cast<int64_t>(instr_ids.size())));
        h = concat_rows({queries_, instr});
    }
    for (const BlockParams& b : blocks_)
        h = block_forward(h, b, /*causal=*/false, img_feats);
    return slice_rows(h, 0, cfg_.n_queries);
}

}  // namespace crome
