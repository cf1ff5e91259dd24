// SPDX-License-Identifier: Apache-2.0
#include "crome/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace crome {

const char* stage_name(StageKind k) {
    switch (k) {
        case StageKind::LmPretrain: return "lm_pretrain";
        case StageKind::Pretrain: return "pretrain";
        case StageKind::Instruct: return "instruct";
        case StageKind::Finetune: return "finetune";
    }
    throw ContractError("bad stage kind");
}

StageKind stage_from_name(const std::string& name) {
    for (StageKind k : {StageKind::LmPretrain, StageKind::Pretrain, StageKind::Instruct,
                        StageKind::Finetune}) {
        if (name == stage_name(k)) return k;
    }
    // CLI flag spelling.
    if (name == "lm-pretrain") return StageKind::LmPretrain;
    throw ConfigError("unknown stage: '" + name + "'");
}

std::set<std::string> build_freeze_mask(StageKind stage) {
    switch (stage) {
        case StageKind::LmPretrain: return {"lm."};
        case StageKind::Pretrain: return {"proj.", "adapter."};
        case StageKind::Instruct: return {"qformer.", "proj.", "adapter."};
        case StageKind::Finetune: return {"adapter."};
    }
    throw ContractError("bad stage kind");
}

double lr_at(int step, const LrSchedule& sched) {
    if (step < 0 || step > sched.max_steps)
        throw ContractError("lr_at: step out of [0, max_steps]");
    if (step < sched.warmup_steps)
        return sched.lr_start + (sched.lr_peak - sched.lr_start) *
                                    (static_cast<double>(step) / sched.warmup_steps);
    if (step >= sched.max_steps) return sched.min_lr;
    const double progress = static_cast<double>(step - sched.warmup_steps) /
                            (sched.max_steps - sched.warmup_steps);
    return sched.min_lr + 0.5 * (sched.lr_peak - sched.min_lr) *
                              (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(ParamRegistry& reg, std::vector<std::string> trainable,
             const OptimizerConfig& cfg)
    : reg_(reg), trainable_(std::move(trainable)), cfg_(cfg) {
    for (const auto& name : trainable_) {
        const Tensor& t = reg_.get(name);
        Checkpoint::OptEntry e;
        e.m.assign(t.numel(), 0.0);
        e.v.assign(t.numel(), 0.0);
        moments_[name] = std::move(e);
    }
}

void AdamW::step(double lr) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (const auto& name : trainable_) {
        Tensor& t = reg_.get(name);
        if (!t.has_grad())
            throw ContractError("adamw_step: trainable parameter '" + name +
                                "' has no gradient");
        auto& e = moments_[name];
        const auto& g = t.grad();
        auto& w = t.values();
        for (size_t i = 0; i < w.size(); ++i) {
            e.m[i] = cfg_.beta1 * e.m[i] + (1.0 - cfg_.beta1) * g[i];
            e.v[i] = cfg_.beta2 * e.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            // Decoupled decay, applied to the weight itself.
            w[i] -= lr * cfg_.weight_decay * w[i];
        }
    }
}

void AdamW::export_state(Checkpoint& ckpt) const {
    ckpt.optimizer_step = step_count_;
    ckpt.optimizer = moments_;
}

void AdamW::import_state(const Checkpoint& ckpt) {
    step_count_ = ckpt.optimizer_step;
    for (const auto& name : trainable_) {
        auto it = ckpt.optimizer.find(name);
        if (it == ckpt.optimizer.end())
            throw CheckpointMissingTensorError("checkpoint is missing optimizer state for '" +
                                               name + "'");
        if (it->second.m.size() != static_cast<size_t>(reg_.get(name).numel()))
            throw CheckpointCorruptError("optimizer state size mismatch for '" + name + "'");
        moments_[name] = it->second;
    }
}

void StageConfig::validate() const {
    if (max_steps <= 0 || batch_size <= 0)
        throw ConfigError("stage: max_steps and batch_size must be positive");
    if (lr.warmup_steps > max_steps)
        throw ConfigError("stage: warmup_steps must not exceed max_steps");
    if (lr.lr_start > lr.lr_peak)
        throw ConfigError("stage: lr_start must not exceed lr_peak");
}

StageConfig full_scale_stage_config(StageKind kind) {
    StageConfig c;
    c.kind = kind;
    c.lr.lr_start = 1e-8;
    c.lr.warmup_steps = 1000;
    c.lr.min_lr = 0.0;
    c.opt = OptimizerConfig{};  // beta1 0.9, beta2 0.999, wd 0.05
    switch (kind) {
        case StageKind::LmPretrain:
        case StageKind::Pretrain:
            c.batch_size = 32;
            c.lr.lr_peak = 1e-5;
            c.max_steps = 100000;
            break;
        case StageKind::Instruct:
            c.batch_size = 16;
            c.lr.lr_peak = 1e-5;
            c.max_steps = 2000000;
            break;
        case StageKind::Finetune:
            c.batch_size = 16;
            c.lr.lr_peak = 1e-4;
            c.max_steps = 100000;
            break;
    }
    c.lr.max_steps = c.max_steps;
    return c;
}

StageConfig toy_stage_config(StageKind kind) {
    StageConfig c;
    c.kind = kind;
    c.lr.lr_start = 1e-8;
    c.lr.min_lr = 0.0;
    switch (kind) {
        case StageKind::LmPretrain:
            c.max_steps = 1500;
            c.batch_size = 16;
            c.lr.lr_peak = 3e-3;
            c.lr.warmup_steps = 100;
            break;
        case StageKind::Pretrain:
            c.max_steps = 400;
            c.batch_size = 8;
            c.lr.lr_peak = 2e-3;
            c.lr.warmup_steps = 50;
            break;
        case StageKind::Instruct:
            c.max_steps = 3000;
            c.batch_size = 8;
            c.lr.lr_peak = 2e-3;
            c.lr.warmup_steps = 100;
            break;
        case StageKind::Finetune:
            c.max_steps = 1500;
            c.batch_size = 8;
            c.lr.lr_peak = 1e-2;
            c.lr.warmup_steps = 50;
            break;
    }
    c.lr.max_steps = c.max_steps;
    return c;
}

std::string step_record_json(const StepRecord& r) {
    std::ostringstream os;
    os.precision(17);
    os << "{\"step\":" << r.step << ",\"stage\":\"" << r.stage << "\",\"lr\":" << r.lr
       << ",\"loss\":" << r.loss << ",\"wall_ms\":" << r.wall_ms << "}";
    return os.str();
}

namespace {

double clip_gradients(ParamRegistry& reg, const std::vector<std::string>& trainable,
                      double clip_norm) {
    double sq = 0.0;
    for (const auto& name : trainable) {
        const Tensor& t = reg.get(name);
        if (!t.has_grad()) continue;
        for (double g : t.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (clip_norm > 0 && norm > clip_norm) {
        const double f = clip_norm / norm;
        for (const auto& name : trainable) {
            Tensor& t = reg.get(name);
            if (!t.has_grad()) continue;
            for (double& g : t.ensure_grad()) g *= f;
        }
    }
    return norm;
}

}  // namespace

TrainResult train_stage(CromeModel& model, const StageConfig& stage,
                        const std::vector<Dataset>& datasets,
                        const std::string& out_dir, const Checkpoint* resume) {
    stage.validate();
    if (datasets.empty()) throw ContractError("train_stage: no datasets");
    for (const Dataset& d : datasets)
        if (d.samples.empty()) throw ContractError("train_stage: empty dataset " + d.name);

    ParamRegistry& reg = model.params();
    const std::set<std::string> mask = build_freeze_mask(stage.kind);
    reg.apply_freeze(mask);
    const std::vector<std::string> trainable = reg.names_with_prefix(mask);
    if (trainable.empty())
        throw ContractError("train_stage: stage has no trainable parameters");

    AdamW opt(reg, trainable, stage.opt);
    Rng rng(stage.seed);
    int start_step = 0;
    if (resume) {
        apply_checkpoint(*resume, reg);
        opt.import_state(*resume);
        rng.set_state(resume->rng_state);
        start_step = static_cast<int>(resume->optimizer_step);
    }

    // Square-root balanced sampling over dataset sizes.
    std::vector<int64_t> sizes;
    for (const Dataset& d : datasets) sizes.push_back(static_cast<int64_t>(d.samples.size()));
    BalancedSampler sampler(sizes, 0);
    std::vector<double> cumulative;
    {
        double c = 0.0;
        for (double p : sampler.probabilities()) {
            c += p;
            cumulative.push_back(c);
        }
        cumulative.back() = 1.0;
    }
    auto pick_dataset = [&]() {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        return static_cast<size_t>(
            std::min<size_t>(it - cumulative.begin(), cumulative.size() - 1));
    };

    LrSchedule sched = stage.lr;
    sched.max_steps = stage.max_steps;

    std::ofstream metrics;
    if (!out_dir.empty()) {
        const std::string metrics_path =
            out_dir + "/metrics_" + stage_name(stage.kind) + ".jsonl";
        metrics.open(metrics_path, resume ? std::ios::app : std::ios::trunc);
        if (!metrics) throw DataError("cannot write metrics log: " + metrics_path);
    }

    // Interval snapshots get step-tagged names so an interrupted run can be
    // resumed; the final checkpoint uses the bare stage name.
    auto write_checkpoint = [&](int step, bool final_ckpt) {
        Checkpoint ckpt = Checkpoint::from_registry(reg);
        opt.export_state(ckpt);
        ckpt.rng_state = rng.state();
        std::ostringstream meta;
        meta << "{\"stage\":\"" << stage_name(stage.kind) << "\",\"step\":" << step << "}";
        ckpt.meta_json = meta.str();
        std::string path = out_dir + "/checkpoint_" + stage_name(stage.kind);
        if (!final_ckpt) path += "_step" + std::to_string(step);
        path += ".bin";
        save_checkpoint(ckpt, path);
        return path;
    };

    TrainResult result;
    for (int step = start_step; step < stage.max_steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        reg.zero_grads();

        Tensor total;
        for (int b = 0; b < stage.batch_size; ++b) {
            const Dataset& ds = datasets[pick_dataset()];
            const Sample& s = ds.samples[rng.uniform_index(ds.samples.size())];
            Tensor item_loss;
            if (ds.kind == TaskKind::Text || stage.kind == StageKind::LmPretrain) {
                item_loss = model.text_loss(s.target);
            } else {
                const Image img = preprocess(s.image, stage.preprocess,
                                             PreprocessMode::Train, rng);
                item_loss = model.sample_loss(s.instruction, img, s.target);
            }
            total = b == 0 ? item_loss : add(total, item_loss);
        }
        Tensor loss = scale(total, 1.0 / stage.batch_size);
        if (!std::isfinite(loss.item()))
            throw NumericError("non-finite loss at step " + std::to_string(step) +
                               " of stage " + stage_name(stage.kind));

        backward(loss);
        // A batch may leave some trainable parameter unused (e.g. the
        // instruction embeddings when every sampled instruction is empty);
        // its gradient for this step is an explicit zero.
        for (const auto& name : trainable) reg.get(name).ensure_grad();
        clip_gradients(reg, trainable, stage.opt.clip_norm);
        opt.step(lr_at(step, sched));

        StepRecord rec;
        rec.step = step;
        rec.stage = stage_name(stage.kind);
        rec.lr = lr_at(step, sched);
        rec.loss = loss.item();
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        if (metrics.is_open()) metrics << step_record_json(rec) << '\n';
        result.records.push_back(std::move(rec));

        if (!out_dir.empty() && stage.checkpoint_interval > 0 &&
            (step + 1) % stage.checkpoint_interval == 0 && step + 1 < stage.max_steps)
            write_checkpoint(step + 1, false);
    }

    if (!result.records.empty()) result.final_loss = result.records.back().loss;
    if (!out_dir.empty()) result.checkpoint_path = write_checkpoint(stage.max_steps, true);
    return result;
}

}  // namespace crome
