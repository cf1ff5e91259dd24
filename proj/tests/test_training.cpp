// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <doctest.h>

#include "crome/training.hpp"

using namespace crome;

namespace {

bool mask_touches(const std::set<std::string>& mask, const std::string& prefix) {
    for (const auto& p : mask)
        if (p == prefix) return true;
    return false;
}

}  // namespace

TEST_CASE("stage names round trip, including the CLI spelling") {
    for (StageKind k : {StageKind::LmPretrain, StageKind::Pretrain, StageKind::Instruct,
                        StageKind::Finetune})
        CHECK(stage_from_name(stage_name(k)) == k);
    CHECK(stage_from_name("lm-pretrain") == StageKind::LmPretrain);
    CHECK_THROWS_AS(stage_from_name("warmup"), ConfigError);
}

TEST_CASE("freeze masks: stage-by-stage trainable prefixes") {
    CHECK(build_freeze_mask(StageKind::LmPretrain) == std::set<std::string>{"lm."});
    CHECK(build_freeze_mask(StageKind::Pretrain) ==
          std::set<std::string>{"proj.", "adapter."});
    CHECK(build_freeze_mask(StageKind::Instruct) ==
          std::set<std::string>{"qformer.", "proj.", "adapter."});
    CHECK(build_freeze_mask(StageKind::Finetune) == std::set<std::string>{"adapter."});

    // The instruction stage strictly extends the pretraining stage, and the
    // backbone components never become trainable in a multimodal stage.
    const auto pre = build_freeze_mask(StageKind::Pretrain);
    const auto it = build_freeze_mask(StageKind::Instruct);
    for (const auto& p : pre) CHECK(it.count(p) == 1);
    for (StageKind k : {StageKind::Pretrain, StageKind::Instruct, StageKind::Finetune}) {
        const auto m = build_freeze_mask(k);
        CHECK_FALSE(mask_touches(m, "vision."));
        CHECK_FALSE(mask_touches(m, "lm."));
    }
}

TEST_CASE("learning-rate schedule: exact boundary values") {
    const StageConfig pre = full_scale_stage_config(StageKind::Pretrain);
    CHECK(lr_at(0, pre.lr) == 1e-8);
    // Linear warmup halfway: 1e-8 + (1e-5 - 1e-8) / 2.
    CHECK(lr_at(500, pre.lr) == doctest::Approx(5.005e-6).epsilon(1e-12));
    CHECK(lr_at(1000, pre.lr) == 1e-5);
    CHECK(lr_at(pre.lr.max_steps, pre.lr) == 0.0);

    const StageConfig ft = full_scale_stage_config(StageKind::Finetune);
    CHECK(ft.lr.lr_peak == 1e-4);
    CHECK(lr_at(ft.lr.warmup_steps, ft.lr) == 1e-4);

    CHECK_THROWS_AS(lr_at(-1, pre.lr), ContractError);
    CHECK_THROWS_AS(lr_at(pre.lr.max_steps + 1, pre.lr), ContractError);
}

TEST_CASE("learning-rate schedule: continuity and monotone decay") {
    LrSchedule s;
    s.lr_start = 1e-8;
    s.lr_peak = 1e-3;
    s.warmup_steps = 10;
    s.max_steps = 50;
    CHECK(std::abs(lr_at(9, s) - lr_at(10, s)) < 1.2e-4);  // one warmup increment
    for (int t = 10; t < 50; ++t) CHECK(lr_at(t, s) > lr_at(t + 1, s));
    for (int t = 0; t <= 50; ++t) CHECK(lr_at(t, s) >= 0.0);
}

TEST_CASE("full-scale stage configurations carry the published hyperparameters") {
    for (StageKind k : {StageKind::LmPretrain, StageKind::Pretrain, StageKind::Instruct,
                        StageKind::Finetune}) {
        const StageConfig c = full_scale_stage_config(k);
        CHECK(c.opt.beta1 == 0.9);
        CHECK(c.opt.beta2 == 0.999);
        CHECK(c.opt.weight_decay == 0.05);
        CHECK(c.lr.lr_start == 1e-8);
        CHECK(c.lr.warmup_steps == 1000);
    }
    CHECK(full_scale_stage_config(StageKind::Pretrain).batch_size == 32);
    CHECK(full_scale_stage_config(StageKind::Instruct).batch_size == 16);
    CHECK(full_scale_stage_config(StageKind::Instruct).lr.lr_peak == 1e-5);
}

TEST_CASE("adamw: hand-checked first step without weight decay") {
    ParamRegistry reg;
    reg.add("w", Tensor::from({1}, {1.0}));
    OptimizerConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(reg, {"w"}, cfg);

    reg.get("w").ensure_grad() = {1.0};
    opt.step(0.1);
    // mhat = vhat = 1 after bias correction, so w <- 1 - 0.1 / (1 + eps).
    CHECK(reg.get("w").values()[0] ==
          doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw: decoupled weight decay acts even with zero gradients") {
    ParamRegistry reg;
    reg.add("w", Tensor::from({2}, {4.0, -2.0}));
    AdamW opt(reg, {"w"}, OptimizerConfig{});  // wd = 0.05

    reg.get("w").ensure_grad() = {0.0, 0.0};
    opt.step(0.1);
    // Zero moments give a zero Adam update; only the decay term remains.
    CHECK(reg.get("w").values()[0] == doctest::Approx(4.0 * (1 - 0.1 * 0.05)).epsilon(1e-15));
    CHECK(reg.get("w").values()[1] ==
          doctest::Approx(-2.0 * (1 - 0.1 * 0.05)).epsilon(1e-15));
}

TEST_CASE("adamw: a trainable parameter without a gradient is a contract error") {
    ParamRegistry reg;
    reg.add("w", Tensor::from({1}, {1.0}));
    AdamW opt(reg, {"w"}, OptimizerConfig{});
    CHECK_THROWS_AS(opt.step(0.1), ContractError);
}

TEST_CASE("train_stage: identical seeds give identical loss trajectories") {
    Vocab vocab;
    GeneratedDataset text = generate_dataset(TaskKind::Text, 32, 5, vocab);

    StageConfig stage = toy_stage_config(StageKind::LmPretrain);
    stage.max_steps = 5;
    stage.batch_size = 2;
    stage.lr.warmup_steps = 2;
    stage.lr.max_steps = 5;
    stage.seed = 123;

    const ModelConfig mc = default_model_config(vocab.size());
    CromeModel m1(mc, 42), m2(mc, 42);
    TrainResult r1 = train_stage(m1, stage, {text.dataset});
    TrainResult r2 = train_stage(m2, stage, {text.dataset});
    REQUIRE(r1.records.size() == 5);
    for (size_t i = 0; i < r1.records.size(); ++i) {
        CHECK(r1.records[i].loss == r2.records[i].loss);  // bitwise
        CHECK(r1.records[i].lr == r2.records[i].lr);
    }
}

TEST_CASE("train_stage: frozen backbone is bitwise untouched by a multimodal stage") {
    Vocab vocab;
    GeneratedDataset cap = generate_dataset(TaskKind::Caption, 16, 9, vocab);

    const ModelConfig mc = default_model_config(vocab.size());
    CromeModel model(mc, 42);

    std::map<std::string, uint64_t> before;
    for (const auto& [name, t] : model.params())
        if (name_matches_prefix(name, "lm.") || name_matches_prefix(name, "vision."))
            before[name] = tensor_hash(t);
    REQUIRE_FALSE(before.empty());

    StageConfig stage = toy_stage_config(StageKind::Pretrain);
    stage.max_steps = 3;
    stage.batch_size = 2;
    stage.lr.warmup_steps = 1;
    stage.lr.max_steps = 3;
    stage.seed = 7;
    train_stage(model, stage, {cap.dataset});

    for (const auto& [name, h] : before) CHECK(tensor_hash(model.params().get(name)) == h);
}

TEST_CASE("train_stage contract errors") {
    Vocab vocab;
    const ModelConfig mc = default_model_config(vocab.size());
    CromeModel model(mc, 1);
    StageConfig stage = toy_stage_config(StageKind::Pretrain);
    stage.max_steps = 1;
    stage.lr.warmup_steps = 0;
    CHECK_THROWS_AS(train_stage(model, stage, {}), ContractError);

    StageConfig bad = stage;
    bad.max_steps = 0;
    GeneratedDataset cap = generate_dataset(TaskKind::Caption, 4, 9, vocab);
    CHECK_THROWS_AS(train_stage(model, bad, {cap.dataset}), ConfigError);
}
