// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <doctest.h>

#include "crome/accounting.hpp"
#include "crome/config.hpp"
#include "crome/eval.hpp"

using namespace crome;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("run config: save/load round trip preserves the fingerprint") {
    Vocab vocab;
    RunConfig cfg = default_run_config(vocab.size());
    cfg.seed = 99;
    cfg.data.caption_n = 123;
    cfg.stages.at("instruct").max_steps = 777;

    const std::string path = tmp_path("crome_test_cfg.json");
    save_run_config(cfg, path);
    RunConfig loaded = load_run_config(path, vocab.size());
    std::remove(path.c_str());

    CHECK(loaded.seed == 99);
    CHECK(loaded.data.caption_n == 123);
    CHECK(stage_config(loaded, StageKind::Instruct).max_steps == 777);
    CHECK(canonical_config_json(loaded) == canonical_config_json(cfg));
    CHECK(config_fingerprint(loaded) == config_fingerprint(cfg));
}

TEST_CASE("run config: canonical form is stable and change-sensitive") {
    Vocab vocab;
    RunConfig a = default_run_config(vocab.size());
    RunConfig b = default_run_config(vocab.size());
    CHECK(config_fingerprint(a) == config_fingerprint(b));

    b.model.adapter.m += 1;
    CHECK(config_fingerprint(a) != config_fingerprint(b));
}

TEST_CASE("run config: partial files override only the sections they name") {
    Vocab vocab;
    const std::string path = tmp_path("crome_test_cfg_partial.json");
    {
        std::ofstream os(path);
        os << "{\"seed\": 5, \"out_dir\": \"elsewhere\"}";
    }
    RunConfig cfg = load_run_config(path, vocab.size());
    std::remove(path.c_str());
    CHECK(cfg.seed == 5);
    CHECK(cfg.out_dir == "elsewhere");
    // Untouched sections keep their defaults.
    CHECK(cfg.data.caption_n == DataConfig{}.caption_n);
    CHECK(stage_config(cfg, StageKind::Instruct).max_steps ==
          toy_stage_config(StageKind::Instruct).max_steps);
}

TEST_CASE("run config: unknown sequence order and malformed JSON are config errors") {
    Vocab vocab;
    const std::string path = tmp_path("crome_test_cfg_bad.json");
    {
        // Full model section written by the saver, then the order corrupted.
        save_run_config(default_run_config(vocab.size()), path);
        std::ifstream is(path);
        std::string body((std::istreambuf_iterator<char>(is)),
                         std::istreambuf_iterator<char>());
        is.close();
        const std::string key = "\"question-text-image\"";
        body.replace(body.find(key), key.size(), "\"image-first\"");
        std::ofstream os(path);
        os << body;
    }
    CHECK_THROWS_AS(load_run_config(path, vocab.size()), ConfigError);

    {
        std::ofstream os(path);
        os << "{not json";
    }
    CHECK_THROWS_AS(load_run_config(path, vocab.size()), ConfigError);
    CHECK_THROWS_AS(load_run_config(path + ".does-not-exist", vocab.size()), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("format_millions matches the published figures") {
    CHECK(format_millions(5242880) == "5.24M");
    CHECK(format_millions(6553600) == "6.55M");
    CHECK(format_millions(3538944) == "3.54M");
    CHECK(format_millions(0) == "0.00M");
}

TEST_CASE("full-scale accounting: published configuration and edge cases") {
    const FullScaleReport r = full_scale_accounting_report(4096, 5120, 256, {768, 1408});
    CHECK(r.adapter_a == 5242880);
    CHECK(r.adapter_b == 6553600);
    CHECK(r.delta == (r.adapter_b - r.adapter_a) + (r.proj_b - r.proj_a));
    CHECK(r.delta == 3538944);

    // Same LLM width on both sides: nothing changes.
    CHECK(full_scale_accounting_report(4096, 4096, 256, {768, 1408}).delta == 0);
    // No adapter (m = 0): only the projections scale.
    const FullScaleReport p = full_scale_accounting_report(100, 110, 0, {30});
    CHECK(p.adapter_a == 0);
    CHECK(p.delta == 30 * 10);
}

TEST_CASE("evaluate_mc: deterministic, well-formed records, guarded contracts") {
    Vocab vocab;
    GeneratedDataset mc = generate_dataset(TaskKind::McQA, 8, 21, vocab);
    CromeModel model(default_model_config(vocab.size()), 42);
    PreprocessSpec pp;

    EvalReport a = evaluate_mc(model, mc.dataset, vocab, pp);
    EvalReport b = evaluate_mc(model, mc.dataset, vocab, pp);
    CHECK(a.fingerprint == b.fingerprint);
    CHECK(a.n == 8);
    CHECK(a.correct >= 0);
    CHECK(a.correct <= a.n);
    REQUIRE(a.records.size() == 8);
    for (const EvalRecord& r : a.records) {
        CHECK(r.scores.size() == 4);
        CHECK(r.predicted >= 0);
        CHECK(r.predicted < 4);
        CHECK(r.gold >= 0);
        // The prediction attains the maximum score.
        for (double s : r.scores) CHECK(r.scores[r.predicted] >= s);
    }

    // Evaluation must not leave gradients or a grown graph behind.
    for (const auto& [name, t] : model.params()) CHECK_FALSE(t.has_grad());

    GeneratedDataset cap = generate_dataset(TaskKind::Caption, 4, 21, vocab);
    CHECK_THROWS_AS(evaluate_mc(model, cap.dataset, vocab, pp), ContractError);
}

TEST_CASE("eval report JSON carries the exact counts") {
    EvalReport r;
    r.dataset = "mc-eval";
    r.n = 48;
    r.correct = 47;
    r.fingerprint = "abcd";
    const std::string j = r.to_json();
    CHECK(j.find("\"n\":48") != std::string::npos);
    CHECK(j.find("\"correct\":47") != std::string::npos);
    CHECK(j.find("mc-eval") != std::string::npos);
}
