// SPDX-License-Identifier: Apache-2.0
#include "crome/pipeline.hpp"

#include <filesystem>

namespace crome {

namespace {

Dataset renamed(GeneratedDataset g, const std::string& name) {
    g.dataset.name = name;
    for (Sample& s : g.dataset.samples) s.tag = name;
    return std::move(g.dataset);
}

}  // namespace

DataBundle build_toy_data(const DataConfig& cfg) {
    DataBundle b;
    GeneratorOptions opts;
    opts.render_size = cfg.render_size;
    const Rng root(cfg.seed);
    auto seed_for = [&](uint64_t stream) { return root.fork(stream).state(); };

    b.text = renamed(generate_dataset(TaskKind::Text, cfg.text_n, seed_for(1), b.vocab, opts),
                     "text");
    Dataset caption = renamed(
        generate_dataset(TaskKind::Caption, cfg.caption_n, seed_for(2), b.vocab, opts),
        "caption");
    Dataset count = renamed(
        generate_dataset(TaskKind::CountQA, cfg.count_n, seed_for(3), b.vocab, opts), "count");
    Dataset attribute = renamed(
        generate_dataset(TaskKind::AttributeQA, cfg.attribute_n, seed_for(4), b.vocab, opts),
        "attribute");
    Dataset mc = renamed(
        generate_dataset(TaskKind::McQA, cfg.mc_n, seed_for(5), b.vocab, opts), "mc");

    b.pretrain_sets = {caption};
    b.instruct_sets = {std::move(caption), std::move(count), std::move(attribute),
                       std::move(mc)};

    b.extra_instruct_sets = {
        renamed(generate_dataset(TaskKind::CountQA, cfg.extra_count_n, seed_for(6), b.vocab,
                                 opts),
                "count-extra"),
        renamed(generate_dataset(TaskKind::AttributeQA, cfg.extra_attribute_n, seed_for(7),
                                 b.vocab, opts),
                "attribute-extra")};

    b.property_train = renamed(generate_dataset(TaskKind::PropertyQA, cfg.property_train_n,
                                                seed_for(8), b.vocab, opts),
                               "property-train");
    b.property_eval = renamed(generate_dataset(TaskKind::PropertyQA, cfg.property_eval_n,
                                               seed_for(9), b.vocab, opts),
                              "property-eval");
    b.mc_eval = renamed(
        generate_dataset(TaskKind::McQA, cfg.mc_eval_n, seed_for(10), b.vocab, opts),
        "mc-eval");

    // The held-out task must not leak into anything the instruction stages see.
    std::vector<Dataset> it_sets = b.instruct_sets;
    for (const Dataset& d : b.extra_instruct_sets) it_sets.push_back(d);
    for (const Dataset& d : b.pretrain_sets) it_sets.push_back(d);
    check_no_task_leakage(it_sets, b.vocab);
    return b;
}

std::string checkpoint_filename(StageKind k) {
    return std::string("checkpoint_") + stage_name(k) + ".bin";
}

bool stage_prerequisite(StageKind k, StageKind& prev) {
    switch (k) {
        case StageKind::LmPretrain: return false;
        case StageKind::Pretrain: prev = StageKind::LmPretrain; return true;
        case StageKind::Instruct: prev = StageKind::Pretrain; return true;
        case StageKind::Finetune: prev = StageKind::Instruct; return true;
    }
    throw ContractError("bad stage kind");
}

std::vector<Dataset> stage_datasets(const DataBundle& data, StageKind kind,
                                    bool include_extra_it) {
    switch (kind) {
        case StageKind::LmPretrain: return {data.text};
        case StageKind::Pretrain: return data.pretrain_sets;
        case StageKind::Instruct: {
            std::vector<Dataset> sets = data.instruct_sets;
            if (include_extra_it)
                for (const Dataset& d : data.extra_instruct_sets) sets.push_back(d);
            return sets;
        }
        case StageKind::Finetune: return {data.property_train};
    }
    throw ContractError("bad stage kind");
}

TrainResult run_stage(CromeModel& model, const RunConfig& cfg, StageKind kind,
                      const DataBundle& data, const std::string& resume_path,
                      bool include_extra_it) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    StageKind prev;
    if (stage_prerequisite(kind, prev)) {
        const std::string prev_path = cfg.out_dir + "/" + checkpoint_filename(prev);
        if (!fs::exists(prev_path))
            throw DataError(std::string("stage '") + stage_name(kind) +
                            "' needs the checkpoint of stage '" + stage_name(prev) +
                            "'; expected it at " + prev_path +
                            " (run that stage first)");
        apply_checkpoint(load_checkpoint(prev_path), model.params());
    }

    std::optional<Checkpoint> resume;
    if (!resume_path.empty()) resume = load_checkpoint(resume_path);

    const StageConfig& stage = stage_config(cfg, kind);
    return train_stage(model, stage, stage_datasets(data, kind, include_extra_it),
                       cfg.out_dir, resume ? &*resume : nullptr);
}

}  // namespace crome
