// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <doctest.h>

#include "crome/nn.hpp"

using namespace crome;

namespace {

Image zero_image(int size = 16) {
    Image img;
    img.h = img.w = size;
    img.c = 3;
    img.data.assign(static_cast<size_t>(size) * size * 3, 0.0);
    return img;
}

Image noise_image(uint64_t seed, int size = 16) {
    Image img = zero_image(size);
    Rng rng(seed);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("vision encoder: patch count and penultimate tap") {
    ParamRegistry reg;
    Rng rng(5);
    VisionEncoderConfig cfg;  // 16x16, patch 4, 2 layers
    VisionEncoder enc(cfg, reg, rng);

    const Image img = noise_image(1);
    Tensor feats = enc.encode(img);
    CHECK(feats.shape() == Shape{16, cfg.d_v});

    // encode() returns the output of block n_layers-2 (second to last).
    std::vector<Tensor> all = enc.forward_all(img);
    CHECK(static_cast<int>(all.size()) == cfg.n_layers);
    CHECK(all[cfg.n_layers - 2].values() == feats.values());
    CHECK(all[cfg.n_layers - 1].values() != feats.values());
}

TEST_CASE("vision encoder: deterministic on the all-zero image") {
    ParamRegistry reg;
    Rng rng(5);
    VisionEncoder enc(VisionEncoderConfig{}, reg, rng);
    Tensor a = enc.encode(zero_image());
    Tensor b = enc.encode(zero_image());
    CHECK(a.values() == b.values());
}

TEST_CASE("vision encoder: wrong image size is a shape error") {
    ParamRegistry reg;
    Rng rng(5);
    VisionEncoder enc(VisionEncoderConfig{}, reg, rng);
    CHECK_THROWS_AS(enc.encode(zero_image(12)), ShapeError);
}

TEST_CASE("toy LM: causality under future perturbation") {
    ParamRegistry reg;
    Rng rng(6);
    ToyLMConfig cfg;
    cfg.vocab_size = 32;
    ToyLM lm(cfg, reg, rng);

    Rng xr(9);
    Tensor x = Tensor::randn({6, cfg.d_llm}, xr, 1.0);
    Tensor base = lm.forward(x);

    Tensor xp = Tensor::from(x.shape(), x.values());
    xp.values()[5 * cfg.d_llm + 3] += 10.0;  // perturb the last position
    Tensor pert = lm.forward(xp);

    const int64_t V = base.cols();
    for (int64_t t = 0; t < 5; ++t)
        for (int64_t v = 0; v < V; ++v)
            CHECK(base.values()[t * V + v] == pert.values()[t * V + v]);
    bool last_changed = false;
    for (int64_t v = 0; v < V; ++v)
        last_changed |= base.values()[5 * V + v] != pert.values()[5 * V + v];
    CHECK(last_changed);
}

TEST_CASE("toy LM: T=1 gives one well-formed next-token distribution") {
    ParamRegistry reg;
    Rng rng(6);
    ToyLMConfig cfg;
    cfg.vocab_size = 32;
    ToyLM lm(cfg, reg, rng);
    Rng xr(2);
    Tensor logits = lm.forward(Tensor::randn({1, cfg.d_llm}, xr, 1.0));
    CHECK(logits.shape() == Shape{1, 32});
    Tensor p = softmax_rows(logits);
    Scalar s = 0;
    for (Scalar v : p.values()) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("toy LM: sequence length guard") {
    ParamRegistry reg;
    Rng rng(6);
    ToyLMConfig cfg;
    cfg.vocab_size = 32;
    cfg.max_seq_len = 8;
    ToyLM lm(cfg, reg, rng);
    Rng xr(2);
    CHECK_THROWS_AS(lm.forward(Tensor::randn({9, cfg.d_llm}, xr, 1.0)), Error);
}

TEST_CASE("q-former: fixed output shape, cross-attention placement, contracts") {
    ParamRegistry reg;
    Rng rng(8);
    QFormerConfig cfg;
    cfg.vocab_size = 32;
    QFormer qf(cfg, reg, rng);

    Rng fr(3);
    Tensor img = Tensor::randn({16, cfg.d_kv}, fr, 1.0);
    Tensor out_empty = qf.forward({}, img);
    Tensor out_instr = qf.forward({4, 9, 2, 7, 11}, img);
    CHECK(out_empty.shape() == Shape{cfg.n_queries, cfg.d_q});
    CHECK(out_instr.shape() == Shape{cfg.n_queries, cfg.d_q});
    CHECK(out_empty.values() != out_instr.values());

    // cross_attn_every=2, n_layers=4 -> cross-attention in blocks 0 and 2.
    CHECK(reg.has("qformer.block0.cross.k_proj"));
    CHECK(reg.has("qformer.block2.cross.k_proj"));
    CHECK_FALSE(reg.has("qformer.block1.cross.k_proj"));
    CHECK_FALSE(reg.has("qformer.block3.cross.k_proj"));

    CHECK_THROWS_AS(qf.forward({4}, Tensor()), ContractError);
}

TEST_CASE("q-former: image patches attend as an unordered key set") {
    ParamRegistry reg;
    Rng rng(8);
    QFormerConfig cfg;
    cfg.vocab_size = 32;
    QFormer qf(cfg, reg, rng);

    Rng fr(3);
    Tensor img = Tensor::randn({6, cfg.d_kv}, fr, 1.0);
    // Reverse the patch rows.
    std::vector<Scalar> rev(img.values().size());
    for (int64_t r = 0; r < 6; ++r)
        for (int64_t c = 0; c < cfg.d_kv; ++c)
            rev[r * cfg.d_kv + c] = img.values()[(5 - r) * cfg.d_kv + c];
    Tensor img_rev = Tensor::from(img.shape(), rev);

    Tensor a = qf.forward({4, 9}, img);
    Tensor b = qf.forward({4, 9}, img_rev);
    for (size_t i = 0; i < a.values().size(); ++i)
        CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-10));
}

TEST_CASE("project: identity, zero, and shape guard") {
    Rng rng(1);
    Tensor x = Tensor::randn({3, 4}, rng, 1.0);
    Tensor eye = Tensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i) eye.values()[i * 4 + i] = 1.0;
    CHECK(project(x, eye).values() == x.values());

    Tensor z = project(x, Tensor::zeros({4, 7}));
    for (Scalar v : z.values()) CHECK(v == 0.0);

    CHECK_THROWS_AS(project(x, Tensor::zeros({5, 7})), ShapeError);
}
