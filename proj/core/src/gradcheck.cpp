// SPDX-License-Identifier: Apache-2.0
#include "crome/gradcheck.hpp"

#include "crome/adapter.hpp"
#include "crome/nn.hpp"
#include "crome/tensor.hpp"

namespace crome {

namespace {

Tensor weighted_sum(const Tensor& x, const Tensor& w) { return sum(mul(x, w)); }

}  // namespace

std::vector<GradCheckResult> run_grad_check_suite(uint64_t seed) {
    std::vector<GradCheckResult> out;
    Rng root(seed);
    auto rng_for = [&](uint64_t stream) { return root.fork(stream); };
    uint64_t stream = 0;

    auto fresh = [&](Shape shape, Scalar std_dev = 1.0) {
        Rng r = rng_for(stream++);
        return Tensor::randn(std::move(shape), r, std_dev);
    };
    auto check = [&](const std::string& name,
                     const std::function<Tensor(const Tensor&)>& fn, Tensor input) {
        out.push_back({name, grad_check(fn, std::move(input))});
    };

    // Fixed co-inputs; mixing them into the loss via a random weighting
    // keeps every output element in play.
    const Tensor b34 = fresh({3, 4});
    const Tensor w34 = fresh({3, 4});
    const Tensor b45 = fresh({4, 5});
    const Tensor w35 = fresh({3, 5});
    const Tensor w43 = fresh({4, 3});
    const Tensor w44 = fresh({4, 4});

    check("add", [&](const Tensor& x) { return weighted_sum(add(x, b34), w34); },
          fresh({3, 4}));
    check("sub", [&](const Tensor& x) { return weighted_sum(sub(x, b34), w34); },
          fresh({3, 4}));
    check("mul", [&](const Tensor& x) { return weighted_sum(mul(x, b34), w34); },
          fresh({3, 4}));
    check("scale", [&](const Tensor& x) { return weighted_sum(scale(x, -1.7), w34); },
          fresh({3, 4}));
    check("matmul_lhs", [&](const Tensor& x) { return weighted_sum(matmul(x, b45), w35); },
          fresh({3, 4}));
    check("matmul_rhs", [&](const Tensor& x) { return weighted_sum(matmul(b34, x), w35); },
          fresh({4, 5}));
    check("transpose", [&](const Tensor& x) { return weighted_sum(transpose(x), w43); },
          fresh({3, 4}));
    check("silu", [&](const Tensor& x) { return weighted_sum(silu(x), w34); },
          fresh({3, 4}));
    check("sigmoid", [&](const Tensor& x) { return weighted_sum(sigmoid(x), w34); },
          fresh({3, 4}));
    // ReLU is kinked at 0; keep the check away from it.
    {
        Tensor x = fresh({3, 4});
        for (Scalar& v : x.values()) v += (v >= 0 ? 0.5 : -0.5);
        check("relu", [&](const Tensor& t) { return weighted_sum(relu(t), w34); },
              std::move(x));
    }
    check("gelu", [&](const Tensor& x) { return weighted_sum(gelu(x), w34); },
          fresh({3, 4}));
    check("softmax_rows",
          [&](const Tensor& x) { return weighted_sum(softmax_rows(x), w34); },
          fresh({3, 4}));
    {
        const Tensor gain = fresh({4}, 0.5);
        const Tensor bias = fresh({4}, 0.5);
        const Tensor x = fresh({3, 4});
        check("layernorm_x",
              [&](const Tensor& t) { return weighted_sum(layernorm(t, gain, bias), w34); },
              fresh({3, 4}));
        check("layernorm_gain",
              [&](const Tensor& g) { return weighted_sum(layernorm(x, g, bias), w34); },
              fresh({4}, 0.5));
        check("layernorm_bias",
              [&](const Tensor& b) { return weighted_sum(layernorm(x, gain, b), w34); },
              fresh({4}, 0.5));
    }
    {
        const std::vector<int> ids = {2, 0, 2, 4};
        const Tensor w = fresh({4, 3});
        check("embedding_rows",
              [&](const Tensor& table) {
                  return weighted_sum(embedding_rows(table, ids), w);
              },
              fresh({5, 3}));
    }
    {
        const Tensor w64 = fresh({6, 4});
        check("concat_rows",
              [&](const Tensor& x) { return weighted_sum(concat_rows({x, b34}), w64); },
              fresh({3, 4}));
    }
    {
        const Tensor w38 = fresh({3, 8});
        check("concat_cols",
              [&](const Tensor& x) { return weighted_sum(concat_cols({x, b34}), w38); },
              fresh({3, 4}));
    }
    {
        const Tensor w24 = fresh({2, 4});
        check("slice_rows",
              [&](const Tensor& x) { return weighted_sum(slice_rows(x, 1, 2), w24); },
              fresh({4, 4}));
    }
    {
        const Tensor w42 = fresh({4, 2});
        check("slice_cols",
              [&](const Tensor& x) { return weighted_sum(slice_cols(x, 1, 2), w42); },
              fresh({4, 4}));
    }
    check("causal_mask_apply",
          [&](const Tensor& x) {
              return weighted_sum(softmax_rows(causal_mask_apply(x)), w44);
          },
          fresh({4, 4}));
    {
        const std::vector<int> targets = {1, 3, 0, 2};
        const std::vector<uint8_t> mask = {1, 0, 1, 1};
        check("cross_entropy_next_token",
              [&](const Tensor& logits) {
                  return cross_entropy_next_token(logits, targets, mask);
              },
              fresh({4, 5}));
    }
    check("sum", [&](const Tensor& x) { return sum(x); }, fresh({3, 4}));
    check("mean", [&](const Tensor& x) { return mean(x); }, fresh({3, 4}));

    // ------------------------------------------------------ composite blocks
    {
        AttnParams attn;
        Rng r = rng_for(stream++);
        attn.q_proj = Tensor::randn({8, 8}, r, 0.3);
        attn.k_proj = Tensor::randn({8, 8}, r, 0.3);
        attn.v_proj = Tensor::randn({8, 8}, r, 0.3);
        attn.o_proj = Tensor::randn({8, 8}, r, 0.3);
        attn.n_heads = 2;
        const Tensor w58 = fresh({5, 8});
        check("attention_x",
              [&](const Tensor& x) {
                  return weighted_sum(attention(x, x, attn, true), w58);
              },
              fresh({5, 8}, 0.5));
        const Tensor xq = fresh({5, 8}, 0.5);
        check("attention_kv",
              [&](const Tensor& kv) {
                  return weighted_sum(attention(xq, kv, attn, false), w58);
              },
              fresh({3, 8}, 0.5));
        check("attention_weight",
              [&](const Tensor&) {
                  return weighted_sum(attention(xq, xq, attn, true), w58);
              },
              attn.v_proj);
    }
    {
        Rng r = rng_for(stream++);
        BlockParams blk;
        blk.ln1.gain = Tensor::from({8}, std::vector<Scalar>(8, 1.0));
        blk.ln1.bias = Tensor::zeros({8});
        blk.self_attn.q_proj = Tensor::randn({8, 8}, r, 0.3);
        blk.self_attn.k_proj = Tensor::randn({8, 8}, r, 0.3);
        blk.self_attn.v_proj = Tensor::randn({8, 8}, r, 0.3);
        blk.self_attn.o_proj = Tensor::randn({8, 8}, r, 0.3);
        blk.self_attn.n_heads = 2;
        blk.ln2.gain = Tensor::from({8}, std::vector<Scalar>(8, 1.0));
        blk.ln2.bias = Tensor::zeros({8});
        blk.mlp.w1 = Tensor::randn({8, 32}, r, 0.3);
        blk.mlp.w2 = Tensor::randn({32, 8}, r, 0.3);
        const Tensor w48 = fresh({4, 8});
        check("block_forward_x",
              [&](const Tensor& x) {
                  return weighted_sum(block_forward(x, blk, true), w48);
              },
              fresh({4, 8}, 0.5));
        const Tensor xblk = fresh({4, 8}, 0.5);
        check("block_forward_mlp_w1",
              [&](const Tensor&) {
                  return weighted_sum(block_forward(xblk, blk, true), w48);
              },
              blk.mlp.w1);
    }
    {
        ParamRegistry reg;
        AdapterConfig cfg;
        cfg.d = 8;
        cfg.m = 3;
        cfg.gated = true;
        Rng r = rng_for(stream++);
        Adapter adapter(cfg, reg, r);
        // W_u starts at zero (identity at init); randomize it so gradients
        // actually flow through the bottleneck here.
        {
            Rng ru = rng_for(stream++);
            for (Scalar& v : reg.get("adapter.shared.up").values()) v = 0.3 * ru.normal();
        }
        const Tensor w48 = fresh({4, 8});
        check("adapter_image_branch_x",
              [&](const Tensor& x) {
                  return weighted_sum(adapter.forward(x, Branch::Image), w48);
              },
              fresh({4, 8}, 0.5));
        check("adapter_text_branch_x",
              [&](const Tensor& x) {
                  return weighted_sum(adapter.forward(x, Branch::Text), w48);
              },
              fresh({4, 8}, 0.5));
        const Tensor ximg = fresh({4, 8}, 0.5);
        const Tensor xtxt = fresh({4, 8}, 0.5);
        // Shared W_u receives contributions from both branches at once.
        check("adapter_shared_up_weight",
              [&](const Tensor&) {
                  return add(weighted_sum(adapter.forward(ximg, Branch::Image), w48),
                             weighted_sum(adapter.forward(xtxt, Branch::Text), w48));
              },
              reg.get("adapter.shared.up"));
        check("adapter_image_gate_weight",
              [&](const Tensor&) {
                  return weighted_sum(adapter.forward(ximg, Branch::Image), w48);
              },
              reg.get("adapter.img.gate"));
        check("adapter_text_down_weight",
              [&](const Tensor&) {
                  return weighted_sum(adapter.forward(xtxt, Branch::Text), w48);
              },
              reg.get("adapter.txt.down"));
    }
    {
        ParamRegistry reg;
        AdapterConfig cfg;
        cfg.d = 8;
        cfg.m = 3;
        cfg.gated = false;
        Rng r = rng_for(stream++);
        Adapter adapter(cfg, reg, r);
        Rng ru = rng_for(stream++);
        for (Scalar& v : reg.get("adapter.shared.up").values()) v = 0.3 * ru.normal();
        const Tensor w48 = fresh({4, 8});
        check("adapter_ungated_x",
              [&](const Tensor& x) {
                  return weighted_sum(adapter.forward(x, Branch::Image), w48);
              },
              fresh({4, 8}, 0.5));
    }

    return out;
}

}  // namespace crome
