// SPDX-License-Identifier: Apache-2.0
#include "crome/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "crome/params.hpp"

namespace crome {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------- vocab

namespace {

const std::vector<std::string>& word_list() {
    static const std::vector<std::string> words = {
        "<pad>", "<bos>", "<eos>",
        // colors
        "red", "green", "blue", "yellow",
        // shapes
        "square", "circle", "triangle",
        "squares", "circles", "triangles", "shapes",
        // numbers
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
        // grammar glue
        "a", "an", "the", "and", "is", "are", "there", "what", "color", "how",
        "many", "which", "in", "image", "scene", "picture", "describe",
        "contains", "with", "of",
        "yes", "no",
        // reserved for the held-out fine-tuning task
        "corners", "does", "object", "have"};
    return words;
}

}  // namespace

Vocab::Vocab() : words_(word_list()) {}

int Vocab::id(const std::string& word) const {
    auto it = std::find(words_.begin(), words_.end(), word);
    if (it == words_.end()) throw VocabError("out-of-vocabulary word: '" + word + "'");
    return static_cast<int>(it - words_.begin());
}

const std::string& Vocab::word(int id) const {
    if (id < 0 || id >= size())
        throw VocabError("token id " + std::to_string(id) + " out of range");
    return words_[id];
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
    std::vector<int> out;
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(id(w));
    return out;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += word(ids[i]);
    }
    return out;
}

const std::vector<std::string>& Vocab::heldout_task_words() {
    static const std::vector<std::string> words = {"corners", "does", "object", "have"};
    return words;
}

// ---------------------------------------------------------------- scenes

const char* shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::Square: return "square";
        case ShapeKind::Circle: return "circle";
        case ShapeKind::Triangle: return "triangle";
    }
    throw ContractError("bad shape kind");
}

const char* shape_plural(ShapeKind s) {
    switch (s) {
        case ShapeKind::Square: return "squares";
        case ShapeKind::Circle: return "circles";
        case ShapeKind::Triangle: return "triangles";
    }
    throw ContractError("bad shape kind");
}

const char* color_name(ColorKind c) {
    switch (c) {
        case ColorKind::Red: return "red";
        case ColorKind::Green: return "green";
        case ColorKind::Blue: return "blue";
        case ColorKind::Yellow: return "yellow";
    }
    throw ContractError("bad color kind");
}

std::array<double, 3> color_rgb(ColorKind c) {
    switch (c) {
        case ColorKind::Red: return {0.90, 0.10, 0.10};
        case ColorKind::Green: return {0.10, 0.75, 0.20};
        case ColorKind::Blue: return {0.10, 0.20, 0.90};
        case ColorKind::Yellow: return {0.95, 0.85, 0.10};
    }
    throw ContractError("bad color kind");
}

int SceneSpec::object_count() const {
    int n = 0;
    for (const auto& c : cells) n += c.has_value() ? 1 : 0;
    return n;
}

std::vector<SceneObject> SceneSpec::objects() const {
    std::vector<SceneObject> out;
    for (const auto& c : cells)
        if (c) out.push_back(*c);
    return out;
}

void SceneSpec::validate() const {
    if (grid_w <= 0 || grid_h <= 0 ||
        static_cast<int>(cells.size()) != grid_w * grid_h)
        throw ContractError("scene: cells must cover the grid");
    if (object_count() == 0) throw ContractError("scene: at least one object required");
}

Image render_scene(const SceneSpec& spec, int size) {
    spec.validate();
    if (size < 8 * std::max(spec.grid_w, spec.grid_h))
        throw ContractError("render_scene: size must be >= 8x grid extent");

    Image img;
    img.h = img.w = size;
    img.c = 3;
    img.data.assign(static_cast<size_t>(size) * size * 3, 0.95);  // light background

    for (int cy = 0; cy < spec.grid_h; ++cy)
        for (int cx = 0; cx < spec.grid_w; ++cx) {
            const auto& cell = spec.cells[cy * spec.grid_w + cx];
            if (!cell) continue;
            const auto rgb = color_rgb(cell->color);
            const double x0 = static_cast<double>(cx) * size / spec.grid_w;
            const double x1 = static_cast<double>(cx + 1) * size / spec.grid_w;
            const double y0 = static_cast<double>(cy) * size / spec.grid_h;
            const double y1 = static_cast<double>(cy + 1) * size / spec.grid_h;
            const double cxm = 0.5 * (x0 + x1), cym = 0.5 * (y0 + y1);
            const double half = 0.35 * std::min(x1 - x0, y1 - y0);

            for (int y = static_cast<int>(y0); y < static_cast<int>(y1); ++y)
                for (int x = static_cast<int>(x0); x < static_cast<int>(x1); ++x) {
                    const double px = x + 0.5, py = y + 0.5;
                    bool inside = false;
                    switch (cell->shape) {
                        case ShapeKind::Square:
                            inside = std::abs(px - cxm) <= half && std::abs(py - cym) <= half;
                            break;
                        case ShapeKind::Circle:
                            inside = (px - cxm) * (px - cxm) + (py - cym) * (py - cym) <=
                                     half * half;
                            break;
                        case ShapeKind::Triangle: {
                            // Upright triangle: apex top-center, base at the bottom.
                            const double ty = py - (cym - half);
                            if (ty < 0 || ty > 2 * half) break;
                            const double width = half * (ty / (2 * half));
                            inside = std::abs(px - cxm) <= width;
                            break;
                        }
                    }
                    if (inside)
                        for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = rgb[ch];
                }
        }
    return img;
}

// ----------------------------------------------------------- preprocessing

Image resize_bilinear(const Image& src, int target) {
    if (src.h <= 0 || src.w <= 0) throw ContractError("resize: empty image");
    Image out;
    out.h = out.w = target;
    out.c = src.c;
    out.data.resize(static_cast<size_t>(target) * target * src.c);
    const double sy = static_cast<double>(src.h) / target;
    const double sx = static_cast<double>(src.w) / target;
    for (int y = 0; y < target; ++y)
        for (int x = 0; x < target; ++x) {
            const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.h - 1.0);
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.w - 1.0);
            const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
            const int y1 = std::min(y0 + 1, src.h - 1), x1 = std::min(x0 + 1, src.w - 1);
            const double wy = fy - y0, wx = fx - x0;
            for (int ch = 0; ch < src.c; ++ch) {
                const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0, ch) +
                                             wx * src.at(y0, x1, ch)) +
                                 wy * ((1 - wx) * src.at(y1, x0, ch) +
                                       wx * src.at(y1, x1, ch));
                out.at(y, x, ch) = v;
            }
        }
    return out;
}

Image preprocess(const Image& raw, const PreprocessSpec& spec, PreprocessMode mode,
                 Rng& rng) {
    Image img = raw;
    if (mode == PreprocessMode::Train) {
        if (spec.random_crop) {
            const int min_dim = std::min(img.h, img.w);
            const int lo = std::max(spec.resize_target,
                                    static_cast<int>(std::ceil(0.8 * min_dim)));
            const int crop = lo + static_cast<int>(rng.uniform_index(
                                      static_cast<uint64_t>(min_dim - lo + 1)));
            const int oy = static_cast<int>(rng.uniform_index(img.h - crop + 1));
            const int ox = static_cast<int>(rng.uniform_index(img.w - crop + 1));
            Image cropped;
            cropped.h = cropped.w = crop;
            cropped.c = img.c;
            cropped.data.resize(static_cast<size_t>(crop) * crop * img.c);
            for (int y = 0; y < crop; ++y)
                for (int x = 0; x < crop; ++x)
                    for (int ch = 0; ch < img.c; ++ch)
                        cropped.at(y, x, ch) = img.at(oy + y, ox + x, ch);
            img = std::move(cropped);
        }
        if (spec.horizontal_flip && rng.uniform() < 0.5) {
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w / 2; ++x)
                    for (int ch = 0; ch < img.c; ++ch)
                        std::swap(img.at(y, x, ch), img.at(y, img.w - 1 - x, ch));
        }
    }
    img = resize_bilinear(img, spec.resize_target);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch)
                img.at(y, x, ch) = (img.at(y, x, ch) - spec.mean[ch]) / spec.std_dev[ch];
    return img;
}

// ---------------------------------------------------------------- datasets

const char* task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::Caption: return "caption";
        case TaskKind::CountQA: return "count-qa";
        case TaskKind::AttributeQA: return "attribute-qa";
        case TaskKind::McQA: return "mc-qa";
        case TaskKind::PropertyQA: return "property-qa";
        case TaskKind::Text: return "text";
    }
    throw ContractError("bad task kind");
}

TaskKind task_kind_from_name(const std::string& name) {
    for (TaskKind k : {TaskKind::Caption, TaskKind::CountQA, TaskKind::AttributeQA,
                       TaskKind::McQA, TaskKind::PropertyQA, TaskKind::Text})
        if (name == task_kind_name(k)) return k;
    throw DataError("unknown task kind: '" + name + "'");
}

namespace {

const std::array<ShapeKind, 3> kShapes = {ShapeKind::Square, ShapeKind::Circle,
                                          ShapeKind::Triangle};
const std::array<ColorKind, 4> kColors = {ColorKind::Red, ColorKind::Green,
                                          ColorKind::Blue, ColorKind::Yellow};

const char* number_word(int n) {
    static const char* words[] = {"zero", "one", "two",   "three", "four",
                                  "five", "six", "seven", "eight"};
    if (n < 0 || n > 8) throw ContractError("number out of grammar range");
    return words[n];
}

const char* corner_word(ShapeKind s) {
    switch (s) {
        case ShapeKind::Square: return "four";
        case ShapeKind::Circle: return "zero";
        case ShapeKind::Triangle: return "three";
    }
    throw ContractError("bad shape kind");
}

SceneSpec random_scene(Rng& rng, int min_objects, int max_objects,
                       bool distinct_shapes) {
    SceneSpec spec;
    spec.cells.assign(spec.grid_w * spec.grid_h, std::nullopt);
    const int n_cells = spec.grid_w * spec.grid_h;
    const int n = min_objects +
                  static_cast<int>(rng.uniform_index(max_objects - min_objects + 1));
    std::vector<int> cell_ids(n_cells);
    for (int i = 0; i < n_cells; ++i) cell_ids[i] = i;
    // Fisher-Yates prefix.
    for (int i = 0; i < n; ++i) {
        const int j = i + static_cast<int>(rng.uniform_index(n_cells - i));
        std::swap(cell_ids[i], cell_ids[j]);
    }
    std::vector<ShapeKind> shapes(kShapes.begin(), kShapes.end());
    for (size_t i = 0; i + 1 < shapes.size(); ++i) {
        const size_t j = i + rng.uniform_index(shapes.size() - i);
        std::swap(shapes[i], shapes[j]);
    }
    for (int i = 0; i < n; ++i) {
        SceneObject obj;
        obj.shape = distinct_shapes ? shapes[i % shapes.size()]
                                    : kShapes[rng.uniform_index(kShapes.size())];
        obj.color = kColors[rng.uniform_index(kColors.size())];
        spec.cells[cell_ids[i]] = obj;
    }
    return spec;
}

std::string caption_text(const SceneSpec& spec) {
    std::string out;
    for (const auto& obj : spec.objects()) {
        if (!out.empty()) out += " and ";
        out += "a ";
        out += color_name(obj.color);
        out += ' ';
        out += shape_name(obj.shape);
    }
    return out;
}

int count_matching(const SceneSpec& spec, std::optional<ColorKind> color,
                   std::optional<ShapeKind> shape) {
    int n = 0;
    for (const auto& obj : spec.objects())
        if ((!color || obj.color == *color) && (!shape || obj.shape == *shape)) ++n;
    return n;
}

struct QaRecord {
    std::string question;
    std::string answer;
    std::vector<std::string> choices;
    int gold = -1;
};

QaRecord make_count_question(const SceneSpec& spec, Rng& rng) {
    QaRecord r;
    switch (rng.uniform_index(3)) {
        case 0:
            r.question = "how many shapes are there";
            r.answer = number_word(spec.object_count());
            break;
        case 1: {
            const ColorKind c = kColors[rng.uniform_index(kColors.size())];
            r.question = std::string("how many ") + color_name(c) + " shapes are there";
            r.answer = number_word(count_matching(spec, c, std::nullopt));
            break;
        }
        default: {
            const ShapeKind s = kShapes[rng.uniform_index(kShapes.size())];
            r.question = std::string("how many ") + shape_plural(s) + " are there";
            r.answer = number_word(count_matching(spec, std::nullopt, s));
            break;
        }
    }
    return r;
}

QaRecord make_attribute_question(const SceneSpec& spec, Rng& rng) {
    // Pick a shape that occurs exactly once; callers generate scenes with
    // distinct shapes so one always exists.
    std::vector<SceneObject> unique;
    for (const auto& obj : spec.objects())
        if (count_matching(spec, std::nullopt, obj.shape) == 1) unique.push_back(obj);
    if (unique.empty()) throw ContractError("attribute question needs a unique shape");
    const SceneObject& obj = unique[rng.uniform_index(unique.size())];
    QaRecord r;
    r.question = std::string("what color is the ") + shape_name(obj.shape);
    r.answer = color_name(obj.color);
    return r;
}

QaRecord make_mc_question(const SceneSpec& spec, Rng& rng) {
    const auto objs = spec.objects();
    if (objs.size() != 1) throw ContractError("mc question expects a single object");
    const std::string correct =
        std::string(color_name(objs[0].color)) + " " + shape_name(objs[0].shape);
    std::set<std::string> pool;
    while (pool.size() < 3) {
        const std::string cand =
            std::string(color_name(kColors[rng.uniform_index(kColors.size())])) + " " +
            shape_name(kShapes[rng.uniform_index(kShapes.size())]);
        if (cand != correct) pool.insert(cand);
    }
    QaRecord r;
    r.question = "what is in the image";
    r.answer = correct;
    r.choices.assign(pool.begin(), pool.end());
    const size_t gold_pos = rng.uniform_index(r.choices.size() + 1);
    r.choices.insert(r.choices.begin() + gold_pos, correct);
    r.gold = static_cast<int>(gold_pos);
    return r;
}

QaRecord make_property_question(const SceneSpec& spec, Rng& rng) {
    const auto objs = spec.objects();
    if (objs.size() != 1) throw ContractError("property question expects a single object");
    QaRecord r;
    r.question = "how many corners does the object have";
    r.answer = corner_word(objs[0].shape);
    r.choices = {"zero", "one", "three", "four"};
    r.gold = -1;
    for (size_t i = 0; i < r.choices.size(); ++i)
        if (r.choices[i] == r.answer) r.gold = static_cast<int>(i);
    (void)rng;
    return r;
}

std::vector<int> with_eos(const Vocab& vocab, const std::string& text) {
    std::vector<int> ids = vocab.tokenize(text);
    ids.push_back(vocab.eos());
    return ids;
}

}  // namespace

GeneratedDataset generate_dataset(TaskKind kind, int n, uint64_t seed, const Vocab& vocab,
                                  const GeneratorOptions& opts) {
    if (n <= 0) throw DataError("generate_dataset: n must be positive");
    GeneratedDataset out;
    out.dataset.kind = kind;
    out.dataset.name = task_kind_name(kind);

    // Exact-duplicate filter over (image hash, instruction, target).
    std::unordered_set<uint64_t> seen;
    const Rng base(seed);

    auto record_key = [](uint64_t img_h, const std::vector<int>& instr,
                         const std::vector<int>& tgt) {
        uint64_t h = fnv1a(&img_h, sizeof img_h);
        h = fnv1a(instr.data(), instr.size() * sizeof(int), h);
        h = fnv1a(tgt.data(), tgt.size() * sizeof(int), h);
        return h;
    };

    for (uint64_t attempt = 0; static_cast<int>(out.dataset.samples.size()) < n;
         ++attempt) {
        Rng rng = base.fork(attempt);
        if (attempt > static_cast<uint64_t>(n) * 1000 + 100000)
            throw DataError("generate_dataset: duplicate filter exhausted the generator");

        if (kind == TaskKind::Text) {
            // Text-only grammar corpus for LM pretraining; covers every
            // sentence form, including the held-out task's.
            const SceneSpec spec = random_scene(rng, 1, 3, true);
            std::string text;
            switch (rng.uniform_index(5)) {
                case 0: text = caption_text(spec); break;
                case 1: {
                    const QaRecord r = make_count_question(spec, rng);
                    text = r.question + " " + r.answer;
                    break;
                }
                case 2: {
                    const QaRecord r = make_attribute_question(spec, rng);
                    text = r.question + " " + r.answer;
                    break;
                }
                case 3: {
                    const SceneSpec single = random_scene(rng, 1, 1, false);
                    const QaRecord r = make_mc_question(single, rng);
                    text = r.question + " " + r.answer;
                    break;
                }
                default: {
                    const SceneSpec single = random_scene(rng, 1, 1, false);
                    const QaRecord r = make_property_question(single, rng);
                    text = r.question + " " + r.answer;
                    break;
                }
            }
            Sample s;
            s.target.push_back(vocab.bos());
            for (int id : vocab.tokenize(text)) s.target.push_back(id);
            s.target.push_back(vocab.eos());
            s.tag = out.dataset.name;
            const uint64_t key = record_key(0, s.instruction, s.target);
            if (!seen.insert(key).second) continue;
            out.dataset.samples.push_back(std::move(s));
            continue;
        }

        const bool single_object = kind == TaskKind::McQA || kind == TaskKind::PropertyQA;
        const SceneSpec spec = single_object ? random_scene(rng, 1, 1, false)
                                             : random_scene(rng, 1, 3, true);
        const Image img = render_scene(spec, opts.render_size);
        const uint64_t img_h = image_hash(img);

        const int questions =
            (kind == TaskKind::CountQA || kind == TaskKind::AttributeQA)
                ? 1 + static_cast<int>(rng.uniform_index(opts.max_questions_per_image))
                : 1;
        for (int q = 0; q < questions && static_cast<int>(out.dataset.samples.size()) < n;
             ++q) {
            QaRecord r;
            switch (kind) {
                case TaskKind::Caption:
                    r.question = "";
                    r.answer = caption_text(spec);
                    break;
                case TaskKind::CountQA: r = make_count_question(spec, rng); break;
                case TaskKind::AttributeQA: r = make_attribute_question(spec, rng); break;
                case TaskKind::McQA: r = make_mc_question(spec, rng); break;
                case TaskKind::PropertyQA: r = make_property_question(spec, rng); break;
                case TaskKind::Text: break;
            }
            Sample s;
            s.image = img;
            s.instruction = vocab.tokenize(r.question);
            s.target = with_eos(vocab, r.answer);
            s.choices = r.choices;
            s.gold_choice = r.gold;
            s.tag = out.dataset.name;
            const uint64_t key = record_key(img_h, s.instruction, s.target);
            if (!seen.insert(key).second) continue;
            out.dataset.samples.push_back(std::move(s));
            out.specs.push_back(spec);
        }
    }
    return out;
}

bool answer_consistent(const Sample& s, const SceneSpec& spec, const Vocab& vocab) {
    std::vector<int> tgt = s.target;
    if (tgt.empty() || tgt.back() != vocab.eos()) return false;
    tgt.pop_back();
    const std::string answer = vocab.detokenize(tgt);
    const std::string q = vocab.detokenize(s.instruction);

    if (q.empty()) return answer == caption_text(spec);
    if (q == "how many shapes are there")
        return answer == number_word(spec.object_count());
    for (ColorKind c : kColors)
        if (q == std::string("how many ") + color_name(c) + " shapes are there")
            return answer == number_word(count_matching(spec, c, std::nullopt));
    for (ShapeKind sh : kShapes)
        if (q == std::string("how many ") + shape_plural(sh) + " are there")
            return answer == number_word(count_matching(spec, std::nullopt, sh));
    for (ShapeKind sh : kShapes)
        if (q == std::string("what color is the ") + shape_name(sh)) {
            const auto objs = spec.objects();
            for (const auto& obj : objs)
                if (obj.shape == sh && count_matching(spec, std::nullopt, sh) == 1)
                    return answer == color_name(obj.color);
            return false;
        }
    if (q == "what is in the image") {
        const auto objs = spec.objects();
        if (objs.size() != 1) return false;
        return answer == std::string(color_name(objs[0].color)) + " " +
                             shape_name(objs[0].shape);
    }
    if (q == "how many corners does the object have") {
        const auto objs = spec.objects();
        if (objs.size() != 1) return false;
        return answer == corner_word(objs[0].shape);
    }
    return false;
}

// ---------------------------------------------------------------- sampler

BalancedSampler::BalancedSampler(const std::vector<int64_t>& sizes, uint64_t seed)
    : rng_(seed) {
    if (sizes.empty()) throw ContractError("balanced_sampler: empty size list");
    double total = 0.0;
    for (int64_t n : sizes) {
        if (n < 1) throw ContractError("balanced_sampler: sizes must be >= 1");
        total += std::sqrt(static_cast<double>(n));
    }
    double cum = 0.0;
    for (int64_t n : sizes) {
        const double p = std::sqrt(static_cast<double>(n)) / total;
        probs_.push_back(p);
        cum += p;
        cumulative_.push_back(cum);
    }
    cumulative_.back() = 1.0;
}

int BalancedSampler::next() {
    const double u = rng_.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return static_cast<int>(std::min<size_t>(it - cumulative_.begin(),
                                             cumulative_.size() - 1));
}

// ---------------------------------------------------------------- file io

namespace {

json image_to_json(const Image& img) {
    json j;
    j["h"] = img.h;
    j["w"] = img.w;
    j["c"] = img.c;
    j["data"] = img.data;
    return j;
}

Image image_from_json(const json& j) {
    Image img;
    img.h = j.at("h").get<int>();
    img.w = j.at("w").get<int>();
    img.c = j.at("c").get<int>();
    img.data = j.at("data").get<std::vector<double>>();
    if (img.data.size() != static_cast<size_t>(img.h) * img.w * img.c)
        throw DataError("sample image: data length does not match dims");
    return img;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write dataset file: " + path);
    for (const Sample& s : ds.samples) {
        json j;
        j["image"] = s.image.data.empty() ? json(nullptr) : image_to_json(s.image);
        j["instruction"] = s.instruction;
        j["target"] = s.target;
        j["choices"] = s.choices;
        j["tag"] = s.tag;
        os << j.dump() << '\n';
    }
    if (!os) throw DataError("failed writing dataset file: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read dataset file: " + path);
    Dataset ds;
    Vocab vocab;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DataError("malformed dataset record in " + path);
        Sample s;
        if (!j.at("image").is_null()) s.image = image_from_json(j.at("image"));
        s.instruction = j.at("instruction").get<std::vector<int>>();
        s.target = j.at("target").get<std::vector<int>>();
        s.choices = j.at("choices").get<std::vector<std::string>>();
        s.tag = j.at("tag").get<std::string>();
        // Gold index is derivable: the choice whose tokens match the target.
        if (!s.choices.empty()) {
            std::vector<int> tgt = s.target;
            if (!tgt.empty() && tgt.back() == vocab.eos()) tgt.pop_back();
            const std::string ans = vocab.detokenize(tgt);
            for (size_t i = 0; i < s.choices.size(); ++i)
                if (s.choices[i] == ans) {
                    s.gold_choice = static_cast<int>(i);
                    break;
                }
        }
        ds.samples.push_back(std::move(s));
        if (ds.name.empty()) ds.name = ds.samples.back().tag;
    }
    ds.kind = ds.name.empty() ? TaskKind::Caption : task_kind_from_name(ds.name);
    return ds;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write manifest file: " + path);
    std::set<std::string> names;
    for (const ManifestEntry& e : m) {
        if (e.size <= 0) throw DataError("manifest: sizes must be positive");
        if (!names.insert(e.name).second)
            throw DataError("manifest: duplicate dataset name '" + e.name + "'");
        json j;
        j["name"] = e.name;
        j["size"] = e.size;
        j["kind"] = task_kind_name(e.kind);
        j["path"] = e.path;
        os << j.dump() << '\n';
    }
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read manifest file: " + path);
    DatasetManifest m;
    std::set<std::string> names;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DataError("malformed manifest record in " + path);
        ManifestEntry e;
        e.name = j.at("name").get<std::string>();
        e.size = j.at("size").get<int64_t>();
        e.kind = task_kind_from_name(j.at("kind").get<std::string>());
        e.path = j.at("path").get<std::string>();
        if (e.size <= 0) throw DataError("manifest: sizes must be positive");
        if (!names.insert(e.name).second)
            throw DataError("manifest: duplicate dataset name '" + e.name + "'");
        m.push_back(std::move(e));
    }
    return m;
}

void check_no_task_leakage(const std::vector<Dataset>& it_datasets, const Vocab& vocab) {
    std::set<int> banned;
    for (const auto& w : Vocab::heldout_task_words()) banned.insert(vocab.id(w));
    for (const Dataset& ds : it_datasets)
        for (const Sample& s : ds.samples) {
            for (int id : s.instruction)
                if (banned.count(id))
                    throw DataError("task leakage: held-out word '" + vocab.word(id) +
                                    "' found in dataset '" + ds.name + "'");
            for (int id : s.target)
                if (banned.count(id))
                    throw DataError("task leakage: held-out word '" + vocab.word(id) +
                                    "' found in dataset '" + ds.name + "'");
            for (const std::string& c : s.choices)
                for (int id : vocab.tokenize(c))
                    if (banned.count(id))
                        throw DataError("task leakage: held-out word '" + vocab.word(id) +
                                        "' found in dataset '" + ds.name + "'");
        }
}

uint64_t image_hash(const Image& img) {
    uint64_t h = fnv1a(&img.h, sizeof img.h);
    h = fnv1a(&img.w, sizeof img.w, h);
    h = fnv1a(&img.c, sizeof img.c, h);
    return fnv1a(img.data.data(), img.data.size() * sizeof(double), h);
}

}  // namespace crome
