// SPDX-License-Identifier: Apache-2.0
//
// Staged training: per-stage freeze masks, warmup+cosine schedule, AdamW
// with decoupled weight decay, metrics logging and checkpointing.
#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crome/checkpoint.hpp"
#include "crome/data.hpp"
#include "crome/model.hpp"

namespace crome {

enum class StageKind { LmPretrain, Pretrain, Instruct, Finetune };

const char* stage_name(StageKind k);
StageKind stage_from_name(const std::string& name);

// Trainable parameter-name prefixes per stage. The vision encoder and the
// LM are frozen in every multimodal stage.
std::set<std::string> build_freeze_mask(StageKind stage);

struct LrSchedule {
    double lr_start = 1e-8;
    double lr_peak = 1e-5;
    double min_lr = 0.0;
    int warmup_steps = 1000;
    int max_steps = 2000;
};

// Linear warmup from lr_start to lr_peak, then cosine decay to min_lr at
// max_steps. Exact at the boundaries.
double lr_at(int step, const LrSchedule& sched);

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.05;
    double eps = 1e-8;
    double clip_norm = 1.0;  // global-norm gradient clip; <= 0 disables
};

class AdamW {
public:
    AdamW(ParamRegistry& reg, std::vector<std::string> trainable,
          const OptimizerConfig& cfg);

    // Consumes grads from the registry. Every trainable param must have a
    // populated gradient; frozen params are never touched.
    void step(double lr);

    uint64_t step_count() const { return step_count_; }
    const std::vector<std::string>& trainable() const { return trainable_; }

    void export_state(Checkpoint& ckpt) const;
    void import_state(const Checkpoint& ckpt);

private:
    ParamRegistry& reg_;
    std::vector<std::string> trainable_;
    OptimizerConfig cfg_;
    uint64_t step_count_ = 0;
    std::map<std::string, Checkpoint::OptEntry> moments_;
};

struct StageConfig {
    StageKind kind = StageKind::Pretrain;
    int max_steps = 2000;
    int batch_size = 16;
    LrSchedule lr;
    OptimizerConfig opt;
    uint64_t seed = 0;
    int checkpoint_interval = 0;  // 0 = final checkpoint only
    PreprocessSpec preprocess;

    void validate() const;
};

// Published full-scale hyperparameters for a stage (batch sizes, warmup,
// peak learning rates).
StageConfig full_scale_stage_config(StageKind kind);
// CPU-minutes defaults actually used for toy runs.
StageConfig toy_stage_config(StageKind kind);

struct StepRecord {
    int step = 0;
    std::string stage;
    double lr = 0.0;
    double loss = 0.0;
    int64_t wall_ms = 0;
};

std::string step_record_json(const StepRecord& r);

struct TrainResult {
    std::vector<StepRecord> records;
    std::string checkpoint_path;  // empty when out_dir was empty
    double final_loss = 0.0;
};

// Runs one stage. Per batch: pick a dataset by square-root balanced
// sampling, assemble the multimodal sequence, take the loss on target
// positions only, backprop and apply AdamW at the scheduled rate.
// out_dir, when non-empty, receives metrics.jsonl and checkpoints.
// resume, when given, restores params, optimizer and RNG state and
// continues from the recorded step.
TrainResult train_stage(CromeModel& model, const StageConfig& stage,
                        const std::vector<Dataset>& datasets,
                        const std::string& out_dir = "",
                        const Checkpoint* resume = nullptr);

}  // namespace crome
