// SPDX-License-Identifier: Apache-2.0
#include "crome/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace crome {

namespace {

using json = nlohmann::json;  // sorts object keys: canonical by construction

json model_to_json(const ModelConfig& m) {
    json j;
    j["vision"] = {{"image_size", m.vision.image_size},
                   {"patch_size", m.vision.patch_size},
                   {"channels", m.vision.channels},
                   {"d_v", m.vision.d_v},
                   {"n_layers", m.vision.n_layers},
                   {"n_heads", m.vision.n_heads}};
    j["lm"] = {{"vocab_size", m.lm.vocab_size},
               {"d_llm", m.lm.d_llm},
               {"n_layers", m.lm.n_layers},
               {"n_heads", m.lm.n_heads},
               {"max_seq_len", m.lm.max_seq_len}};
    j["qformer"] = {{"n_queries", m.qformer.n_queries},
                    {"d_q", m.qformer.d_q},
                    {"n_layers", m.qformer.n_layers},
                    {"n_heads", m.qformer.n_heads},
                    {"cross_attn_every", m.qformer.cross_attn_every},
                    {"vocab_size", m.qformer.vocab_size},
                    {"d_kv", m.qformer.d_kv},
                    {"max_instr_len", m.qformer.max_instr_len}};
    j["adapter"] = {{"d", m.adapter.d}, {"m", m.adapter.m}, {"gated", m.adapter.gated}};
    j["adapter_enabled"] = m.adapter_enabled;
    j["order"] = m.order == SequenceOrder::QuestionTextImage ? "question-text-image"
                                                             : "question-image-text";
    return j;
}

void model_from_json(const json& j, ModelConfig& m) {
    const json& v = j.at("vision");
    v.at("image_size").get_to(m.vision.image_size);
    v.at("patch_size").get_to(m.vision.patch_size);
    v.at("channels").get_to(m.vision.channels);
    v.at("d_v").get_to(m.vision.d_v);
    v.at("n_layers").get_to(m.vision.n_layers);
    v.at("n_heads").get_to(m.vision.n_heads);
    const json& l = j.at("lm");
    l.at("vocab_size").get_to(m.lm.vocab_size);
    l.at("d_llm").get_to(m.lm.d_llm);
    l.at("n_layers").get_to(m.lm.n_layers);
    l.at("n_heads").get_to(m.lm.n_heads);
    l.at("max_seq_len").get_to(m.lm.max_seq_len);
    const json& q = j.at("qformer");
    q.at("n_queries").get_to(m.qformer.n_queries);
    q.at("d_q").get_to(m.qformer.d_q);
    q.at("n_layers").get_to(m.qformer.n_layers);
    q.at("n_heads").get_to(m.qformer.n_heads);
    q.at("cross_attn_every").get_to(m.qformer.cross_attn_every);
    q.at("vocab_size").get_to(m.qformer.vocab_size);
    q.at("d_kv").get_to(m.qformer.d_kv);
    q.at("max_instr_len").get_to(m.qformer.max_instr_len);
    const json& a = j.at("adapter");
    a.at("d").get_to(m.adapter.d);
    a.at("m").get_to(m.adapter.m);
    a.at("gated").get_to(m.adapter.gated);
    j.at("adapter_enabled").get_to(m.adapter_enabled);
    const std::string order = j.at("order").get<std::string>();
    if (order == "question-text-image")
        m.order = SequenceOrder::QuestionTextImage;
    else if (order == "question-image-text")
        m.order = SequenceOrder::QuestionImageText;
    else
        throw ConfigError("unknown sequence order: '" + order + "'");
}

json stage_to_json(const StageConfig& s) {
    json j;
    j["max_steps"] = s.max_steps;
    j["batch_size"] = s.batch_size;
    j["lr_start"] = s.lr.lr_start;
    j["lr_peak"] = s.lr.lr_peak;
    j["min_lr"] = s.lr.min_lr;
    j["warmup_steps"] = s.lr.warmup_steps;
    j["beta1"] = s.opt.beta1;
    j["beta2"] = s.opt.beta2;
    j["weight_decay"] = s.opt.weight_decay;
    j["clip_norm"] = s.opt.clip_norm;
    j["seed"] = s.seed;
    j["checkpoint_interval"] = s.checkpoint_interval;
    return j;
}

void stage_from_json(const json& j, StageConfig& s) {
    j.at("max_steps").get_to(s.max_steps);
    j.at("batch_size").get_to(s.batch_size);
    j.at("lr_start").get_to(s.lr.lr_start);
    j.at("lr_peak").get_to(s.lr.lr_peak);
    j.at("min_lr").get_to(s.lr.min_lr);
    j.at("warmup_steps").get_to(s.lr.warmup_steps);
    j.at("beta1").get_to(s.opt.beta1);
    j.at("beta2").get_to(s.opt.beta2);
    j.at("weight_decay").get_to(s.opt.weight_decay);
    j.at("clip_norm").get_to(s.opt.clip_norm);
    j.at("seed").get_to(s.seed);
    j.at("checkpoint_interval").get_to(s.checkpoint_interval);
    s.lr.max_steps = s.max_steps;
}

json data_to_json(const DataConfig& d) {
    json j;
    j["seed"] = d.seed;
    j["render_size"] = d.render_size;
    j["text_n"] = d.text_n;
    j["caption_n"] = d.caption_n;
    j["count_n"] = d.count_n;
    j["attribute_n"] = d.attribute_n;
    j["mc_n"] = d.mc_n;
    j["extra_count_n"] = d.extra_count_n;
    j["extra_attribute_n"] = d.extra_attribute_n;
    j["property_train_n"] = d.property_train_n;
    j["property_eval_n"] = d.property_eval_n;
    j["mc_eval_n"] = d.mc_eval_n;
    return j;
}

void data_from_json(const json& j, DataConfig& d) {
    j.at("seed").get_to(d.seed);
    j.at("render_size").get_to(d.render_size);
    j.at("text_n").get_to(d.text_n);
    j.at("caption_n").get_to(d.caption_n);
    j.at("count_n").get_to(d.count_n);
    j.at("attribute_n").get_to(d.attribute_n);
    j.at("mc_n").get_to(d.mc_n);
    j.at("extra_count_n").get_to(d.extra_count_n);
    j.at("extra_attribute_n").get_to(d.extra_attribute_n);
    j.at("property_train_n").get_to(d.property_train_n);
    j.at("property_eval_n").get_to(d.property_eval_n);
    j.at("mc_eval_n").get_to(d.mc_eval_n);
}

json run_to_json(const RunConfig& cfg) {
    json j;
    j["model"] = model_to_json(cfg.model);
    j["data"] = data_to_json(cfg.data);
    json stages;
    for (const auto& [name, s] : cfg.stages) stages[name] = stage_to_json(s);
    j["stages"] = stages;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    return j;
}

}  // namespace

RunConfig default_run_config(int vocab_size) {
    RunConfig cfg;
    cfg.model = default_model_config(vocab_size);
    for (StageKind k : {StageKind::LmPretrain, StageKind::Pretrain, StageKind::Instruct,
                        StageKind::Finetune}) {
        StageConfig s = toy_stage_config(k);
        s.preprocess.resize_target = cfg.model.vision.image_size;
        s.seed = cfg.seed + static_cast<uint64_t>(k);
        cfg.stages[stage_name(k)] = s;
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path, int vocab_size) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file: " + path);
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed config file: " + path);
    RunConfig cfg = default_run_config(vocab_size);
    try {
        if (j.contains("model")) model_from_json(j.at("model"), cfg.model);
        if (j.contains("data")) data_from_json(j.at("data"), cfg.data);
        if (j.contains("stages"))
            for (auto& [name, sj] : j.at("stages").items()) {
                StageConfig s = cfg.stages.count(name)
                                    ? cfg.stages[name]
                                    : toy_stage_config(stage_from_name(name));
                stage_from_json(sj, s);
                s.kind = stage_from_name(name);
                s.preprocess.resize_target = cfg.model.vision.image_size;
                cfg.stages[name] = s;
            }
        if (j.contains("seed")) j.at("seed").get_to(cfg.seed);
        if (j.contains("out_dir")) j.at("out_dir").get_to(cfg.out_dir);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config field: ") + e.what());
    }
    cfg.model.validate();
    for (auto& [name, s] : cfg.stages) {
        s.preprocess.resize_target = cfg.model.vision.image_size;
        s.validate();
    }
    return cfg;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write config file: " + path);
    os << run_to_json(cfg).dump(2) << '\n';
}

std::string canonical_config_json(const RunConfig& cfg) { return run_to_json(cfg).dump(); }

std::string config_fingerprint(const RunConfig& cfg) {
    const std::string canon = canonical_config_json(cfg);
    const uint64_t h = fnv1a(canon.data(), canon.size());
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

const StageConfig& stage_config(const RunConfig& cfg, StageKind kind) {
    auto it = cfg.stages.find(stage_name(kind));
    if (it == cfg.stages.end())
        throw ConfigError(std::string("config has no stage '") + stage_name(kind) + "'");
    return it->second;
}

}  // namespace crome
