// SPDX-License-Identifier: Apache-2.0
//
// Procedural toy multimodal data: rendered shape scenes with captions and
// QA, a word-level tokenizer over a closed grammar, preprocessing, dataset
// manifests, and the square-root balanced sampler.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "crome/error.hpp"
#include "crome/image.hpp"
#include "crome/rng.hpp"

namespace crome {

// ---------------------------------------------------------------- vocab

class Vocab {
public:
    Vocab();

    int id(const std::string& word) const;
    const std::string& word(int id) const;
    int size() const { return static_cast<int>(words_.size()); }

    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

    int pad() const { return 0; }
    int bos() const { return 1; }
    int eos() const { return 2; }

    // Question words reserved for the held-out fine-tuning task; they must
    // never appear in instruction-tuning data.
    static const std::vector<std::string>& heldout_task_words();

private:
    std::vector<std::string> words_;
};

// ---------------------------------------------------------------- scenes

enum class ShapeKind { Square, Circle, Triangle };
enum class ColorKind { Red, Green, Blue, Yellow };

const char* shape_name(ShapeKind s);
const char* shape_plural(ShapeKind s);
const char* color_name(ColorKind c);
std::array<double, 3> color_rgb(ColorKind c);

struct SceneObject {
    ShapeKind shape;
    ColorKind color;
};

struct SceneSpec {
    int grid_w = 2, grid_h = 2;
    // Row-major cells, empty or one object; at least one non-empty.
    std::vector<std::optional<SceneObject>> cells;

    int object_count() const;
    std::vector<SceneObject> objects() const;  // cell order
    void validate() const;
};

// Deterministic rasterization: same spec and size -> same pixels.
Image render_scene(const SceneSpec& spec, int size);

// ----------------------------------------------------------- preprocessing

struct PreprocessSpec {
    int resize_target = 16;
    std::array<double, 3> mean = {0.48145466, 0.4578275, 0.40821073};
    std::array<double, 3> std_dev = {0.26862954, 0.26130258, 0.27577711};
    bool random_crop = true;      // train mode only
    bool horizontal_flip = true;  // train mode only
};

enum class PreprocessMode { Train, Eval };

Image resize_bilinear(const Image& src, int target);

// Train: random crop + optional flip, then resize + normalize.
// Eval: resize + normalize only (rng unused).
Image preprocess(const Image& raw, const PreprocessSpec& spec, PreprocessMode mode,
                 Rng& rng);

// ---------------------------------------------------------------- datasets

enum class TaskKind { Caption, CountQA, AttributeQA, McQA, PropertyQA, Text };

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

struct Sample {
    Image image;                       // raw render; preprocess at use time
    std::vector<int> instruction;      // may be empty (captioning)
    std::vector<int> target;           // non-empty, ends with <eos>
    std::vector<std::string> choices;  // multiple-choice tasks only
    int gold_choice = -1;              // index into choices
    std::string tag;                   // dataset name
};

struct Dataset {
    std::string name;
    TaskKind kind = TaskKind::Caption;
    std::vector<Sample> samples;
};

struct ManifestEntry {
    std::string name;
    int64_t size = 0;
    TaskKind kind = TaskKind::Caption;
    std::string path;
};

using DatasetManifest = std::vector<ManifestEntry>;

struct GeneratorOptions {
    int render_size = 20;
    int max_questions_per_image = 4;  // count/attribute tasks reuse scenes
};

// Generated samples plus their ground-truth scene records (parallel array;
// empty for text-only data).
struct GeneratedDataset {
    Dataset dataset;
    std::vector<SceneSpec> specs;
};

// Ground truth is derived from the SceneSpec, so answers are exact by
// construction. Deterministic under (kind, n, seed); records are deduped on
// (image hash, instruction, target).
GeneratedDataset generate_dataset(TaskKind kind, int n, uint64_t seed, const Vocab& vocab,
                                  const GeneratorOptions& opts = {});

// Re-derives the expected answer of a generated sample from its scene; used
// by tests. Returns false if the stored target is inconsistent.
bool answer_consistent(const Sample& s, const SceneSpec& spec, const Vocab& vocab);

// ---------------------------------------------------------------- sampler

// I.i.d. draws with P(d) = sqrt(N_d) / sum_i sqrt(N_i).
class BalancedSampler {
public:
    BalancedSampler(const std::vector<int64_t>& sizes, uint64_t seed);

    const std::vector<double>& probabilities() const { return probs_; }
    int next();

    uint64_t rng_state() const { return rng_.state(); }
    void set_rng_state(uint64_t s) { rng_.set_state(s); }

private:
    std::vector<double> probs_;
    std::vector<double> cumulative_;
    Rng rng_;
};

// ---------------------------------------------------------------- file io

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Hard error if any held-out task word appears in the given datasets'
// instructions, targets or choices.
void check_no_task_leakage(const std::vector<Dataset>& it_datasets, const Vocab& vocab);

uint64_t image_hash(const Image& img);

}  // namespace crome
