// SPDX-License-Identifier: Apache-2.0
//
// Likelihood-scored multiple-choice evaluation, the ablation grid, the
// bottleneck-width sweep, and the zero-shot vs adapter-fine-tuned report.
#pragma once

#include <string>
#include <vector>

#include "crome/pipeline.hpp"

namespace crome {

struct EvalRecord {
    int index = 0;
    int predicted = -1;
    int gold = -1;
    std::vector<double> scores;  // per-choice total log-likelihood
};

struct EvalReport {
    std::string dataset;
    int n = 0;
    int correct = 0;
    std::string fingerprint;  // hex FNV over (index, predicted, gold)
    std::vector<EvalRecord> records;

    double accuracy() const { return n ? static_cast<double>(correct) / n : 0.0; }
    std::string to_json() const;
};

// Scores each choice by the total log-likelihood of its tokens (plus <eos>)
// after the multimodal prefix; ties resolve to the lowest index. Freezes
// every parameter for the duration, so no autodiff graph is built.
EvalReport evaluate_mc(CromeModel& model, const Dataset& ds, const Vocab& vocab,
                       const PreprocessSpec& pp);

// ------------------------------------------------------------- ablation

struct AblationRow {
    int index = 0;
    std::string label;
    bool adapter = false;
    bool gated = false;
    bool pretrain = false;
    bool extra_it = false;
    bool finetune = false;
    std::string eval_set;

    double accuracy = 0.0;
    double delta_vs_baseline = 0.0;
    std::string config_json;  // canonical row configuration
    std::string config_fingerprint;
    bool failed = false;
    std::string error;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    std::string to_text() const;
    std::string to_json() const;
};

// Seven training-and-eval runs sharing the same data and the same frozen
// LM weights; rows differ only along the adapter / gating / pretraining /
// extra-IT / fine-tuning axes. Row 1 is the adapter-less baseline; deltas
// are against it. A failed row is recorded and does not abort the grid.
AblationReport run_ablation_grid(const RunConfig& cfg, const DataBundle& data,
                                 const Checkpoint& lm_ckpt);

// ------------------------------------------------------------- sweeps

struct SweepRow {
    int m = 0;
    int64_t adapter_params = 0;  // 5*d*m
    double final_loss = 0.0;
    double accuracy = 0.0;
};

// Trains the gated adapter pipeline at several bottleneck widths and
// reports parameter cost against task accuracy.
std::vector<SweepRow> bottleneck_sweep(const RunConfig& cfg, const DataBundle& data,
                                       const Checkpoint& lm_ckpt,
                                       const std::vector<int>& widths = {4, 8, 16, 32});

// ------------------------------------------------- zero-shot vs fine-tune

struct FinetuneReport {
    EvalReport zero_shot;
    EvalReport finetuned;
    int64_t trainable_params = 0;
    int64_t expected_trainable = 0;  // adapter_param_count(d, m, gated)
    double train_seconds = 0.0;
};

// Takes a model at the instruction-tuned checkpoint: evaluates the held-out
// task zero-shot, fine-tunes the adapter only, and evaluates again. Hard
// error if any held-out task word leaked into the instruction-tuning data
// or if anything beyond the adapter was trainable.
FinetuneReport zero_vs_finetune(CromeModel& model, const RunConfig& cfg,
                                const DataBundle& data);

}  // namespace crome
