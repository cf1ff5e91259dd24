// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "crome/checkpoint.hpp"

using namespace crome;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.tensors["adapter.img.down"] = {{2, 3}, {1, 2, 3, 4, 5, 6.5}};
    c.tensors["lm.embed"] = {{4}, {-0.25, 0, 1e-300, 7}};
    c.optimizer["adapter.img.down"] = {{0.1, 0.2, 0.3, 0.4, 0.5, 0.6},
                                       {1e-9, 2e-9, 3e-9, 4e-9, 5e-9, 6e-9}};
    c.optimizer_step = 42;
    c.rng_state = 0xdeadbeefcafef00dull;
    c.meta_json = "{\"stage\":\"pretrain\",\"step\":42}";
    return c;
}

}  // namespace

TEST_CASE("checkpoint: bitwise save/load round trip") {
    const std::string path = tmp_path("crome_test_ckpt.bin");
    const Checkpoint a = sample_checkpoint();
    save_checkpoint(a, path);
    const Checkpoint b = load_checkpoint(path);

    CHECK(b.optimizer_step == a.optimizer_step);
    CHECK(b.rng_state == a.rng_state);
    CHECK(b.meta_json == a.meta_json);
    REQUIRE(b.tensors.size() == a.tensors.size());
    for (const auto& [name, e] : a.tensors) {
        REQUIRE(b.tensors.count(name) == 1);
        CHECK(b.tensors.at(name).shape == e.shape);
        CHECK(b.tensors.at(name).values == e.values);  // bitwise, incl. subnormal range
    }
    REQUIRE(b.optimizer.size() == 1);
    CHECK(b.optimizer.at("adapter.img.down").m == a.optimizer.at("adapter.img.down").m);
    CHECK(b.optimizer.at("adapter.img.down").v == a.optimizer.at("adapter.img.down").v);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: truncation is detected, load has no partial effect") {
    const std::string path = tmp_path("crome_test_ckpt_trunc.bin");
    save_checkpoint(sample_checkpoint(), path);

    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full - 7);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointCorruptError);

    std::filesystem::resize_file(path, 12);  // magic + version only
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointCorruptError);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: wrong magic and unknown version are rejected") {
    const std::string path = tmp_path("crome_test_ckpt_ver.bin");
    save_checkpoint(sample_checkpoint(), path);

    {
        // Version field sits at byte offset 8, after the 8-byte magic.
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        const uint32_t bogus = 99;
        f.write(reinterpret_cast<const char*>(&bogus), 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointVersionError);

    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("NOTCROME", 8);
    }
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointCorruptError);
    std::remove(path.c_str());
}

TEST_CASE("apply_checkpoint: full restore requires every parameter") {
    ParamRegistry reg;
    reg.add("adapter.img.down", Tensor::zeros({2, 3}));
    reg.add("lm.embed", Tensor::zeros({4}));
    reg.add("proj.img", Tensor::from({1}, {5.0}));

    const Checkpoint c = sample_checkpoint();  // has no "proj.img"
    CHECK_THROWS_AS(apply_checkpoint(c, reg), CheckpointMissingTensorError);
}

TEST_CASE("apply_checkpoint: prefix filter loads a subset, leaves the rest") {
    ParamRegistry reg;
    reg.add("adapter.img.down", Tensor::zeros({2, 3}));
    reg.add("lm.embed", Tensor::from({4}, {9, 9, 9, 9}));
    reg.add("proj.img", Tensor::from({1}, {5.0}));

    const Checkpoint c = sample_checkpoint();
    apply_checkpoint(c, reg, {"adapter."});
    CHECK(reg.get("adapter.img.down").values() ==
          std::vector<Scalar>{1, 2, 3, 4, 5, 6.5});
    CHECK(reg.get("lm.embed").values() == std::vector<Scalar>{9, 9, 9, 9});
    CHECK(reg.get("proj.img").values() == std::vector<Scalar>{5.0});
}

TEST_CASE("apply_checkpoint: shape mismatch is corruption, not silent resize") {
    ParamRegistry reg;
    reg.add("adapter.img.down", Tensor::zeros({3, 2}));  // transposed shape
    reg.add("lm.embed", Tensor::zeros({4}));
    CHECK_THROWS_AS(apply_checkpoint(sample_checkpoint(), reg), CheckpointCorruptError);
}

TEST_CASE("from_registry captures every named tensor") {
    ParamRegistry reg;
    reg.add("a.x", Tensor::from({2}, {1, 2}));
    reg.add("b.y", Tensor::from({1}, {3}));
    Checkpoint c = Checkpoint::from_registry(reg);
    REQUIRE(c.tensors.size() == 2);
    CHECK(c.tensors.at("a.x").values == std::vector<Scalar>{1, 2});
    CHECK(c.tensors.at("b.y").shape == Shape{1});
}
