// SPDX-License-Identifier: Apache-2.0
#include "crome/eval.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace crome {

namespace {

using json = nlohmann::json;

std::string hex64(uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace

std::string EvalReport::to_json() const {
    json j;
    j["dataset"] = dataset;
    j["n"] = n;
    j["correct"] = correct;
    j["accuracy"] = accuracy();
    j["fingerprint"] = fingerprint;
    json recs = json::array();
    for (const EvalRecord& r : records)
        recs.push_back({{"index", r.index},
                        {"predicted", r.predicted},
                        {"gold", r.gold},
                        {"scores", r.scores}});
    j["records"] = recs;
    return j.dump();
}

EvalReport evaluate_mc(CromeModel& model, const Dataset& ds, const Vocab& vocab,
                       const PreprocessSpec& pp) {
    EvalReport rep;
    rep.dataset = ds.name;
    // No parameter needs a gradient during evaluation, so the forward pass
    // records no graph. Training stages re-apply their own masks.
    model.params().apply_freeze({});

    uint64_t h = fnv1a(nullptr, 0);
    Rng unused_rng(0);
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        if (s.choices.empty())
            throw ContractError("evaluate_mc: sample without choices in " + ds.name);
        if (s.gold_choice < 0 || s.gold_choice >= static_cast<int>(s.choices.size()))
            throw ContractError("evaluate_mc: sample without a gold choice in " + ds.name);

        const Image img = preprocess(s.image, pp, PreprocessMode::Eval, unused_rng);
        const Tensor prefix = model.multimodal_prefix(s.instruction, img);

        EvalRecord rec;
        rec.index = static_cast<int>(i);
        rec.gold = s.gold_choice;
        for (const std::string& choice : s.choices) {
            std::vector<int> ids = vocab.tokenize(choice);
            ids.push_back(vocab.eos());
            rec.scores.push_back(model.continuation_loglik(prefix, ids));
        }
        rec.predicted = 0;
        for (size_t c = 1; c < rec.scores.size(); ++c)
            if (rec.scores[c] > rec.scores[rec.predicted])
                rec.predicted = static_cast<int>(c);

        rep.n += 1;
        if (rec.predicted == rec.gold) rep.correct += 1;
        const int32_t trip[3] = {rec.index, rec.predicted, rec.gold};
        h = fnv1a(trip, sizeof trip, h);
        rep.records.push_back(std::move(rec));
    }
    rep.fingerprint = hex64(h);
    return rep;
}

// ------------------------------------------------------------- ablation

namespace {

struct RowSpec {
    int index;
    const char* label;
    bool adapter, gated, pretrain, extra_it, finetune;
    const char* eval_set;
};

constexpr RowSpec kGrid[] = {
    {1, "baseline (no adapter)", false, false, true, false, false, "mc-eval"},
    {2, "ungated adapter", true, false, true, false, false, "mc-eval"},
    {3, "gated adapter", true, true, true, false, false, "mc-eval"},
    {4, "gated adapter, no pretraining", true, true, false, false, false, "mc-eval"},
    {5, "gated adapter + extra IT data", true, true, true, true, false, "mc-eval"},
    {6, "no adapter, task fine-tune retrains q-former", false, false, true, false, true,
     "property-eval"},
    {7, "gated adapter, adapter-only fine-tune", true, true, true, false, true,
     "property-eval"},
};

std::string row_config_json(const RowSpec& spec, const ModelConfig& base) {
    json j;
    j["adapter"] = spec.adapter;
    j["gated"] = spec.adapter ? json(spec.gated) : json(nullptr);
    j["pretrain"] = spec.pretrain;
    j["extra_it"] = spec.extra_it;
    j["finetune"] = spec.finetune;
    j["d_llm"] = base.lm.d_llm;
    j["m"] = base.adapter.m;
    j["eval_set"] = spec.eval_set;
    return j.dump();
}

double run_ablation_row(const RowSpec& spec, const RunConfig& cfg, const DataBundle& data,
                        const Checkpoint& lm_ckpt) {
    ModelConfig mc = cfg.model;
    mc.adapter_enabled = spec.adapter;
    mc.adapter.gated = spec.gated;
    CromeModel model(mc, cfg.seed);
    apply_checkpoint(lm_ckpt, model.params(), {"lm."});

    if (spec.pretrain)
        train_stage(model, stage_config(cfg, StageKind::Pretrain),
                    stage_datasets(data, StageKind::Pretrain));
    train_stage(model, stage_config(cfg, StageKind::Instruct),
                stage_datasets(data, StageKind::Instruct, spec.extra_it));

    if (spec.finetune) {
        StageConfig ft = stage_config(cfg, StageKind::Finetune);
        if (!spec.adapter) {
            // Without an adapter the task fine-tune falls back to retraining
            // the q-former and projections, i.e. the instruct-stage mask.
            ft.kind = StageKind::Instruct;
        }
        train_stage(model, ft, {data.property_train});
    }

    Vocab vocab;  // fixed grammar, identical across instances
    const Dataset& eval_set =
        std::string(spec.eval_set) == "mc-eval" ? data.mc_eval : data.property_eval;
    PreprocessSpec pp;
    pp.resize_target = cfg.model.vision.image_size;
    return evaluate_mc(model, eval_set, vocab, pp).accuracy();
}

}  // namespace

AblationReport run_ablation_grid(const RunConfig& cfg, const DataBundle& data,
                                 const Checkpoint& lm_ckpt) {
    AblationReport rep;
    for (const RowSpec& spec : kGrid) {
        AblationRow row;
        row.index = spec.index;
        row.label = spec.label;
        row.adapter = spec.adapter;
        row.gated = spec.gated;
        row.pretrain = spec.pretrain;
        row.extra_it = spec.extra_it;
        row.finetune = spec.finetune;
        row.eval_set = spec.eval_set;
        row.config_json = row_config_json(spec, cfg.model);
        row.config_fingerprint =
            hex64(fnv1a(row.config_json.data(), row.config_json.size()));
        try {
            row.accuracy = run_ablation_row(spec, cfg, data, lm_ckpt);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            row.accuracy = std::numeric_limits<double>::quiet_NaN();
        }
        rep.rows.push_back(std::move(row));
    }
    const double base = rep.rows.empty() || rep.rows[0].failed
                            ? std::numeric_limits<double>::quiet_NaN()
                            : rep.rows[0].accuracy;
    for (AblationRow& r : rep.rows)
        r.delta_vs_baseline = r.failed ? std::numeric_limits<double>::quiet_NaN()
                                       : r.accuracy - base;
    return rep;
}

std::string AblationReport::to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    os << "row  adapter  gated  pretrain  extra-it  finetune  eval           acc     delta\n";
    for (const AblationRow& r : rows) {
        os << r.index << "    " << (r.adapter ? "yes" : "no ") << "      "
           << (r.adapter ? (r.gated ? "yes" : "no ") : "-  ") << "    "
           << (r.pretrain ? "yes" : "no ") << "       " << (r.extra_it ? "yes" : "no ")
           << "       " << (r.finetune ? "yes" : "no ") << "       " << r.eval_set << "  ";
        if (r.failed)
            os << "FAILED: " << r.error;
        else
            os << r.accuracy << "  " << std::showpos << r.delta_vs_baseline << std::noshowpos;
        os << "   # " << r.label << '\n';
    }
    return os.str();
}

std::string AblationReport::to_json() const {
    json arr = json::array();
    for (const AblationRow& r : rows) {
        json j;
        j["index"] = r.index;
        j["label"] = r.label;
        j["adapter"] = r.adapter;
        j["gated"] = r.gated;
        j["pretrain"] = r.pretrain;
        j["extra_it"] = r.extra_it;
        j["finetune"] = r.finetune;
        j["eval_set"] = r.eval_set;
        j["accuracy"] = r.failed ? json(nullptr) : json(r.accuracy);
        j["delta_vs_baseline"] = r.failed ? json(nullptr) : json(r.delta_vs_baseline);
        j["config"] = json::parse(r.config_json);
        j["config_fingerprint"] = r.config_fingerprint;
        j["failed"] = r.failed;
        if (r.failed) j["error"] = r.error;
        arr.push_back(std::move(j));
    }
    return arr.dump(2);
}

// ------------------------------------------------------------- sweeps

std::vector<SweepRow> bottleneck_sweep(const RunConfig& cfg, const DataBundle& data,
                                       const Checkpoint& lm_ckpt,
                                       const std::vector<int>& widths) {
    std::vector<SweepRow> rows;
    Vocab vocab;
    PreprocessSpec pp;
    pp.resize_target = cfg.model.vision.image_size;
    for (int m : widths) {
        ModelConfig mc = cfg.model;
        mc.adapter_enabled = true;
        mc.adapter.m = m;
        CromeModel model(mc, cfg.seed);
        apply_checkpoint(lm_ckpt, model.params(), {"lm."});

        train_stage(model, stage_config(cfg, StageKind::Pretrain),
                    stage_datasets(data, StageKind::Pretrain));
        TrainResult res = train_stage(model, stage_config(cfg, StageKind::Instruct),
                                      stage_datasets(data, StageKind::Instruct));

        SweepRow row;
        row.m = m;
        row.adapter_params = adapter_param_count(mc.adapter.d, m, mc.adapter.gated);
        row.final_loss = res.final_loss;
        row.accuracy = evaluate_mc(model, data.mc_eval, vocab, pp).accuracy();
        rows.push_back(row);
    }
    return rows;
}

// ------------------------------------------------- zero-shot vs fine-tune

FinetuneReport zero_vs_finetune(CromeModel& model, const RunConfig& cfg,
                                const DataBundle& data) {
    // Leakage is a hard error, not a warning: the zero-shot number is
    // meaningless if the tuning data ever saw the held-out task.
    std::vector<Dataset> it_sets = data.instruct_sets;
    for (const Dataset& d : data.extra_instruct_sets) it_sets.push_back(d);
    for (const Dataset& d : data.pretrain_sets) it_sets.push_back(d);
    check_no_task_leakage(it_sets, data.vocab);

    FinetuneReport rep;
    PreprocessSpec pp;
    pp.resize_target = cfg.model.vision.image_size;
    Vocab vocab;

    rep.zero_shot = evaluate_mc(model, data.property_eval, vocab, pp);

    const StageConfig& ft = stage_config(cfg, StageKind::Finetune);
    rep.trainable_params = model.params().count_params(build_freeze_mask(ft.kind));
    rep.expected_trainable = adapter_param_count(cfg.model.adapter.d, cfg.model.adapter.m,
                                                 cfg.model.adapter.gated);
    if (rep.trainable_params != rep.expected_trainable)
        throw VerificationError(
            "fine-tune would train " + std::to_string(rep.trainable_params) +
            " parameters, expected the adapter's " +
            std::to_string(rep.expected_trainable));

    const auto t0 = std::chrono::steady_clock::now();
    train_stage(model, ft, {data.property_train});
    rep.train_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();

    rep.finetuned = evaluate_mc(model, data.property_eval, vocab, pp);
    return rep;
}

}  // namespace crome
