// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: model dims, stage hyperparameters, data sizes, output
// paths. Serialized as JSON; fingerprints hash the canonical form, not the
// raw file.
#pragma once

#include <map>
#include <string>

#include "crome/model.hpp"
#include "crome/training.hpp"

namespace crome {

struct DataConfig {
    uint64_t seed = 7;
    int render_size = 20;
    // Instruction-tuning mixture (deliberately unequal, the sampler balances).
    // The closed grammar admits roughly 550 distinct sentences.
    int text_n = 512;
    int caption_n = 512;
    int count_n = 512;
    int attribute_n = 384;
    // Single-object tasks admit at most 48 distinct (scene, answer) records
    // (3 shapes x 4 colors x 4 cells); the duplicate filter enforces this.
    int mc_n = 48;
    // "Additional IT data" axis of the ablation grid.
    int extra_count_n = 512;
    int extra_attribute_n = 384;
    // Held-out fine-tuning task.
    int property_train_n = 48;
    int property_eval_n = 48;
    int mc_eval_n = 48;
};

struct RunConfig {
    ModelConfig model;
    DataConfig data;
    std::map<std::string, StageConfig> stages;  // keyed by stage_name()
    uint64_t seed = 42;
    std::string out_dir = "out";
};

RunConfig default_run_config(int vocab_size);

RunConfig load_run_config(const std::string& path, int vocab_size);
void save_run_config(const RunConfig& cfg, const std::string& path);

// Key-sorted JSON with stable number formatting.
std::string canonical_config_json(const RunConfig& cfg);
// Hex FNV-1a of the canonical form.
std::string config_fingerprint(const RunConfig& cfg);

const StageConfig& stage_config(const RunConfig& cfg, StageKind kind);

}  // namespace crome
