// SPDX-License-Identifier: Apache-2.0
//
// crome: data generation, staged training, evaluation, ablations and
// parameter accounting for the toy multimodal pipeline.
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <unistd.h>

#include <CLI11.hpp>

#include "crome/accounting.hpp"
#include "crome/config.hpp"
#include "crome/eval.hpp"
#include "crome/gradcheck.hpp"
#include "crome/pipeline.hpp"

namespace {

using namespace crome;
namespace fs = std::filesystem;

// Exit codes: 0 ok, 2 config, 3 data/io, 4 numeric, 5 verification, 1 other.
constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitVerification = 5;

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<uint64_t> seed;
    bool dry_run = false;
};

RunConfig make_config(const CommonOpts& o) {
    const Vocab vocab;
    RunConfig cfg = o.config_path.empty() ? default_run_config(vocab.size())
                                          : load_run_config(o.config_path, vocab.size());
    cfg.out_dir = o.out_dir;
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.data.seed = *o.seed;
        for (auto& [name, s] : cfg.stages)
            s.seed = *o.seed + static_cast<uint64_t>(s.kind);
    }
    return cfg;
}

// Advisory lock: refuse to share an output directory with a live run.
class OutDirLock {
public:
    explicit OutDirLock(const std::string& out_dir) : path_(out_dir + "/.crome.lock") {
        fs::create_directories(out_dir);
        if (fs::exists(path_))
            throw DataError("output directory is locked by another run (" + path_ +
                            "); remove the lock file if that run is dead");
        std::ofstream os(path_);
        os << "pid " << ::getpid() << '\n';
        held_ = true;
    }
    ~OutDirLock() {
        if (held_) {
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    OutDirLock(const OutDirLock&) = delete;
    OutDirLock& operator=(const OutDirLock&) = delete;

private:
    std::string path_;
    bool held_ = false;
};

void print_data_summary(const std::string& header, const DataBundle& data) {
    std::cout << header << '\n';
    auto show = [](const Dataset& d) {
        std::cout << "  " << d.name << "  kind=" << task_kind_name(d.kind)
                  << "  n=" << d.samples.size() << '\n';
    };
    show(data.text);
    for (const Dataset& d : data.instruct_sets) show(d);
    for (const Dataset& d : data.extra_instruct_sets) show(d);
    show(data.property_train);
    show(data.property_eval);
    show(data.mc_eval);
    std::vector<int64_t> sizes;
    for (const Dataset& d : data.instruct_sets)
        sizes.push_back(static_cast<int64_t>(d.samples.size()));
    BalancedSampler sampler(sizes, 0);
    std::cout << "  instruct-mixture sampling probabilities:";
    for (size_t i = 0; i < sizes.size(); ++i)
        std::cout << ' ' << data.instruct_sets[i].name << '='
                  << std::fixed << std::setprecision(4) << sampler.probabilities()[i];
    std::cout << std::defaultfloat << '\n';
}

int cmd_gen_data(const CommonOpts& o) {
    RunConfig cfg = make_config(o);
    DataBundle data = build_toy_data(cfg.data);
    if (o.dry_run) {
        print_data_summary("would generate into " + cfg.out_dir + "/data:", data);
        return kExitOk;
    }
    const std::string dir = cfg.out_dir + "/data";
    fs::create_directories(dir);
    DatasetManifest manifest;
    auto emit = [&](const Dataset& d) {
        const std::string path = dir + "/" + d.name + ".jsonl";
        save_dataset(d, path);
        manifest.push_back({d.name, static_cast<int64_t>(d.samples.size()), d.kind, path});
    };
    emit(data.text);
    for (const Dataset& d : data.instruct_sets) emit(d);
    for (const Dataset& d : data.extra_instruct_sets) emit(d);
    emit(data.property_train);
    emit(data.property_eval);
    emit(data.mc_eval);
    save_manifest(manifest, dir + "/manifest.jsonl");
    print_data_summary("wrote " + std::to_string(manifest.size()) +
                           " datasets and manifest to " + dir + ":",
                       data);
    return kExitOk;
}

int cmd_train(const CommonOpts& o, const std::string& stage_arg,
              const std::string& resume_path, bool extra_it) {
    RunConfig cfg = make_config(o);
    const StageKind kind = stage_from_name(stage_arg);
    const StageConfig& stage = stage_config(cfg, kind);

    Vocab vocab;
    CromeModel model(cfg.model, cfg.seed);
    const auto mask = build_freeze_mask(kind);
    const int64_t trainable = model.params().count_params(mask);

    std::cout << "stage " << stage_name(kind) << ": " << stage.max_steps
              << " steps, batch " << stage.batch_size << ", peak lr " << stage.lr.lr_peak
              << '\n';
    std::cout << "trainable prefixes:";
    for (const auto& p : mask) std::cout << ' ' << p << '*';
    std::cout << "\ntrainable parameters: " << trainable << " / "
              << model.params().count_all() << '\n';
    if (o.dry_run) return kExitOk;

    OutDirLock lock(cfg.out_dir);
    DataBundle data = build_toy_data(cfg.data);
    TrainResult res = run_stage(model, cfg, kind, data, resume_path, extra_it);
    std::cout << "final loss " << res.final_loss << "\ncheckpoint " << res.checkpoint_path
              << '\n';
    return kExitOk;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt_path, const std::string& task,
             bool finetune_compare) {
    RunConfig cfg = make_config(o);
    Vocab vocab;
    CromeModel model(cfg.model, cfg.seed);
    if (ckpt_path.empty()) throw ConfigError("eval requires --checkpoint");
    apply_checkpoint(load_checkpoint(ckpt_path), model.params());
    DataBundle data = build_toy_data(cfg.data);

    if (finetune_compare) {
        FinetuneReport rep = zero_vs_finetune(model, cfg, data);
        std::cout << std::fixed << std::setprecision(4);
        std::cout << "held-out task, zero-shot:   " << rep.zero_shot.correct << "/"
                  << rep.zero_shot.n << " = " << rep.zero_shot.accuracy() << '\n';
        std::cout << "held-out task, fine-tuned:  " << rep.finetuned.correct << "/"
                  << rep.finetuned.n << " = " << rep.finetuned.accuracy() << '\n';
        std::cout << "adapter parameters trained: " << rep.trainable_params << '\n';
        std::cout << "fine-tune wall time:        " << rep.train_seconds << " s\n";
        return kExitOk;
    }

    const Dataset& ds = task == "property-eval" ? data.property_eval : data.mc_eval;
    PreprocessSpec pp;
    pp.resize_target = cfg.model.vision.image_size;
    EvalReport rep = evaluate_mc(model, ds, vocab, pp);
    std::cout << rep.dataset << ": " << rep.correct << "/" << rep.n << " = "
              << std::fixed << std::setprecision(4) << rep.accuracy() << "  (fingerprint "
              << rep.fingerprint << ")\n";
    if (!o.out_dir.empty()) {
        fs::create_directories(o.out_dir);
        const std::string path = o.out_dir + "/eval_" + rep.dataset + ".json";
        std::ofstream os(path);
        os << rep.to_json() << '\n';
        std::cout << "wrote " << path << '\n';
    }
    return kExitOk;
}

// The grid needs frozen LM weights; train stage 0 on the fly if the out
// directory has no checkpoint yet.
Checkpoint ensure_lm_checkpoint(CromeModel& model, const RunConfig& cfg,
                                const DataBundle& data) {
    const std::string path =
        cfg.out_dir + "/" + checkpoint_filename(StageKind::LmPretrain);
    if (fs::exists(path)) return load_checkpoint(path);
    std::cout << "no " << path << "; running the LM pretraining stage first\n";
    run_stage(model, cfg, StageKind::LmPretrain, data);
    return load_checkpoint(path);
}

int cmd_ablate(const CommonOpts& o) {
    RunConfig cfg = make_config(o);
    if (o.dry_run) {
        std::cout << "would run the 7-row ablation grid into " << cfg.out_dir << '\n';
        return kExitOk;
    }
    OutDirLock lock(cfg.out_dir);
    DataBundle data = build_toy_data(cfg.data);
    CromeModel model(cfg.model, cfg.seed);
    const Checkpoint lm_ckpt = ensure_lm_checkpoint(model, cfg, data);

    AblationReport rep = run_ablation_grid(cfg, data, lm_ckpt);
    std::cout << rep.to_text();
    const std::string path = cfg.out_dir + "/ablation.json";
    std::ofstream os(path);
    os << rep.to_json() << '\n';
    std::cout << "wrote " << path << '\n';
    for (const AblationRow& r : rep.rows)
        if (r.failed) return kExitNumeric;
    return kExitOk;
}

int cmd_sweep_m(const CommonOpts& o, std::vector<int> widths) {
    RunConfig cfg = make_config(o);
    if (widths.empty()) widths = {4, 8, 16, 32};
    if (o.dry_run) {
        std::cout << "would sweep bottleneck widths:";
        for (int m : widths) std::cout << ' ' << m;
        std::cout << '\n';
        return kExitOk;
    }
    OutDirLock lock(cfg.out_dir);
    DataBundle data = build_toy_data(cfg.data);
    CromeModel model(cfg.model, cfg.seed);
    const Checkpoint lm_ckpt = ensure_lm_checkpoint(model, cfg, data);

    std::cout << "m    adapter-params  final-loss  accuracy\n";
    std::cout << std::fixed << std::setprecision(4);
    for (const SweepRow& r : bottleneck_sweep(cfg, data, lm_ckpt, widths))
        std::cout << std::setw(3) << r.m << "  " << std::setw(14) << r.adapter_params
                  << "  " << std::setw(10) << r.final_loss << "  " << r.accuracy << '\n';
    return kExitOk;
}

int cmd_grad_check(uint64_t seed) {
    const auto results = run_grad_check_suite(seed);
    double worst = 0.0;
    for (const auto& r : results) {
        std::cout << std::left << std::setw(28) << r.name << std::scientific
                  << std::setprecision(3) << r.max_rel_err
                  << (r.max_rel_err < 1e-4 ? "  ok" : "  FAIL") << '\n';
        worst = std::max(worst, r.max_rel_err);
    }
    std::cout << "worst relative error: " << std::scientific << worst << '\n';
    if (worst >= 1e-4) {
        std::cerr << "gradient check failed (tolerance 1e-4)\n";
        return kExitVerification;
    }
    return kExitOk;
}

int cmd_report_params(const CommonOpts& o) {
    RunConfig cfg = make_config(o);
    CromeModel model(cfg.model, cfg.seed);
    const ParamRegistry& reg = model.params();
    std::cout << "toy pipeline parameters\n";
    for (const char* prefix : {"vision.", "lm.", "qformer.", "proj.", "adapter."})
        std::cout << "  " << std::left << std::setw(10) << prefix
                  << reg.count_params({prefix}) << '\n';
    std::cout << "  total     " << reg.count_all() << '\n';
    std::cout << "  adapter formula 5*d*m = 5*" << cfg.model.adapter.d << "*"
              << cfg.model.adapter.m << " = "
              << adapter_param_count(cfg.model.adapter.d, cfg.model.adapter.m, true)
              << "\n\n";
    const FullScaleReport rep =
        full_scale_accounting_report(4096, 5120, 256, {768, 1408});
    std::cout << rep.to_text();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy multimodal instruction-tuning pipeline"};
    app.require_subcommand(1);

    CommonOpts o;
    uint64_t seed_arg = 0;
    bool seed_given = false, out_given = false;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON run configuration");
        sub->add_option("--out", o.out_dir, "output directory")
            ->capture_default_str()
            ->each([&](const std::string&) { out_given = true; });
        sub->add_option("--seed", seed_arg, "master seed override")
            ->each([&](const std::string&) { seed_given = true; });
        sub->add_flag("--dry-run", o.dry_run, "print the plan, change nothing");
    };

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic datasets");
    add_common(gen);

    std::string stage_arg, resume_path, ckpt_path, eval_task = "mc-eval";
    bool extra_it = false, finetune_compare = false;
    auto* train = app.add_subcommand("train", "run one training stage");
    add_common(train);
    train->add_option("--stage", stage_arg, "lm-pretrain | pretrain | instruct | finetune")
        ->required();
    train->add_option("--checkpoint", resume_path, "resume this stage from a checkpoint");
    train->add_flag("--extra-it", extra_it, "include the extra instruction-tuning data");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a choice task");
    add_common(ev);
    ev->add_option("--checkpoint", ckpt_path, "model checkpoint to evaluate")->required();
    ev->add_option("--task", eval_task, "mc-eval | property-eval")->capture_default_str();
    ev->add_flag("--finetune-compare", finetune_compare,
                 "zero-shot vs adapter-only fine-tune on the held-out task");

    auto* ab = app.add_subcommand("ablate", "run the 7-row ablation grid");
    add_common(ab);

    std::vector<int> widths;
    auto* sw = app.add_subcommand("sweep-m", "sweep the adapter bottleneck width");
    add_common(sw);
    sw->add_option("--widths", widths, "bottleneck widths (default 4 8 16 32)");

    uint64_t gc_seed = 123;
    auto* gc = app.add_subcommand("grad-check", "verify analytic gradients numerically");
    gc->add_option("--seed", gc_seed, "rng seed")->capture_default_str();

    auto* rp = app.add_subcommand("report-params", "trainable-parameter accounting");
    add_common(rp);

    CLI11_PARSE(app, argc, argv);
    if (seed_given) o.seed = seed_arg;
    // The only environment override: output directory (explicit --out wins).
    if (const char* env_out = std::getenv("CROME_OUT"); env_out && !out_given)
        o.out_dir = env_out;

    try {
        if (gen->parsed()) return cmd_gen_data(o);
        if (train->parsed()) return cmd_train(o, stage_arg, resume_path, extra_it);
        if (ev->parsed()) return cmd_eval(o, ckpt_path, eval_task, finetune_compare);
        if (ab->parsed()) return cmd_ablate(o);
        if (sw->parsed()) return cmd_sweep_m(o, widths);
        if (gc->parsed()) return cmd_grad_check(gc_seed);
        if (rp->parsed()) return cmd_report_params(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const VerificationError& e) {
        std::cerr << "verification error: " << e.what() << '\n';
        return kExitVerification;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitOther;
    }
    return kExitOther;
}
