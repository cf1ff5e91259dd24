// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration: the toy data bundle, stage sequencing with
// checkpoint prerequisites, and standard output-file naming.
#pragma once

#include <string>
#include <vector>

#include "crome/config.hpp"
#include "crome/model.hpp"
#include "crome/training.hpp"

namespace crome {

// All datasets one full run needs, generated deterministically from the
// data config. Held-out task data is generated but never mixed into the
// instruction-tuning pools.
struct DataBundle {
    Vocab vocab;
    Dataset text;                          // stage-0 language pretraining
    std::vector<Dataset> pretrain_sets;    // captions only
    std::vector<Dataset> instruct_sets;    // caption + QA mixture
    std::vector<Dataset> extra_instruct_sets;  // "additional IT data" axis
    Dataset property_train;                // held-out fine-tuning task
    Dataset property_eval;
    Dataset mc_eval;
};

DataBundle build_toy_data(const DataConfig& cfg);

// "checkpoint_<stage>.bin"
std::string checkpoint_filename(StageKind k);

// The stage a given stage resumes from; LmPretrain has none.
bool stage_prerequisite(StageKind k, StageKind& prev);

// Training datasets a stage consumes from the bundle.
std::vector<Dataset> stage_datasets(const DataBundle& data, StageKind kind,
                                    bool include_extra_it = false);

// Runs one stage inside cfg.out_dir: loads the prerequisite stage's
// checkpoint (hard error with the expected path if missing), trains, and
// writes checkpoint_<stage>.bin plus metrics.jsonl. `resume_path`, when
// non-empty, continues an interrupted run of this same stage.
TrainResult run_stage(CromeModel& model, const RunConfig& cfg, StageKind kind,
                      const DataBundle& data, const std::string& resume_path = "",
                      bool include_extra_it = false);

}  // namespace crome
