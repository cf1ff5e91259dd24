// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <doctest.h>

#include "crome/gradcheck.hpp"
#include "crome/tensor.hpp"

using namespace crome;

TEST_CASE("matmul identity and hand-checked product") {
    Tensor i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor r = matmul(i2, i2);
    CHECK(r.values() == std::vector<Scalar>{1, 0, 0, 1});

    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 1}, {0, 1});
    Tensor p = matmul(a, b);
    CHECK(p.shape() == Shape{2, 1});
    CHECK(p.values() == std::vector<Scalar>{2, 4});
}

TEST_CASE("matmul against zeros: zero output and zero grad") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, /*requires_grad=*/true);
    Tensor z = Tensor::zeros({3, 2});
    Tensor r = matmul(a, z);
    for (Scalar v : r.values()) CHECK(v == 0.0);
    backward(sum(r));
    for (Scalar g : a.grad()) CHECK(g == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("silu point values") {
    Tensor x = Tensor::from({3}, {0.0, 1.0, 20.0});
    Tensor y = silu(x);
    CHECK(y.values()[0] == 0.0);
    CHECK(y.values()[1] == doctest::Approx(0.7310586).epsilon(1e-6));
    CHECK(std::abs(y.values()[2] - 20.0) < 1e-6);
}

TEST_CASE("softmax rows: symmetry, stabilization, normalization") {
    Tensor u = softmax_rows(Tensor::from({1, 3}, {0, 0, 0}));
    for (Scalar v : u.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Tensor s = softmax_rows(Tensor::from({1, 2}, {1000, 0}));
    CHECK(std::isfinite(s.values()[0]));
    CHECK(s.values()[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.values()[1] == doctest::Approx(0.0).epsilon(1e-9));

    Rng rng(7);
    Tensor r = softmax_rows(Tensor::randn({5, 9}, rng, 2.0));
    for (int64_t i = 0; i < 5; ++i) {
        Scalar row = 0;
        for (int64_t j = 0; j < 9; ++j) {
            const Scalar v = r.values()[i * 9 + j];
            CHECK(v >= 0.0);
            row += v;
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("cross entropy: uniform logits give ln V") {
    const int V = 64;
    Tensor logits = Tensor::zeros({3, V});
    std::vector<int> targets = {5, 17, 60};
    std::vector<uint8_t> mask = {1, 1, 1};
    Tensor loss = cross_entropy_next_token(logits, targets, mask);
    CHECK(loss.item() == doctest::Approx(std::log(64.0)).epsilon(1e-6));
}

TEST_CASE("cross entropy: one-hot extreme logits give near-zero loss") {
    Tensor logits = Tensor::zeros({2, 4});
    logits.values()[1] = 100.0;   // row 0 predicts token 1
    logits.values()[4 + 3] = 100.0;  // row 1 predicts token 3
    Tensor loss = cross_entropy_next_token(logits, {1, 3}, {1, 1});
    CHECK(loss.item() < 1e-9);
}

TEST_CASE("cross entropy contract errors") {
    Tensor logits = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(cross_entropy_next_token(logits, {0, 1}, {0, 0}), ContractError);
    CHECK_THROWS_AS(cross_entropy_next_token(logits, {0, 9}, {1, 1}), VocabError);
}

TEST_CASE("backward: linear loss, detachment, accumulation") {
    Tensor w = Tensor::from({3}, {1, 2, 3}, true);
    Tensor x = Tensor::from({3}, {4, 5, 6});
    backward(sum(mul(w, x)));
    CHECK(w.grad() == std::vector<Scalar>{4, 5, 6});
    CHECK_FALSE(x.has_grad());  // detached leaf receives no grad

    // Accumulate-until-clear semantics.
    backward(sum(mul(w, x)));
    CHECK(w.grad() == std::vector<Scalar>{8, 10, 12});
    w.zero_grad();
    backward(sum(mul(w, x)));
    CHECK(w.grad() == std::vector<Scalar>{4, 5, 6});
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor w = Tensor::from({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(mul(w, w)), ContractError);
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(3);
    Tensor w = Tensor::randn({4, 4}, rng, 1.0, true);
    Tensor a = Tensor::randn({4, 4}, rng, 1.0);
    auto f = [&] { return sum(mul(silu(w), a)); };
    auto g = [&] { return mean(matmul(w, a)); };

    backward(f());
    std::vector<Scalar> gf = w.grad();
    w.zero_grad();
    backward(g());
    std::vector<Scalar> gg = w.grad();
    w.zero_grad();
    backward(add(f(), g()));
    for (size_t i = 0; i < gf.size(); ++i)
        CHECK(w.grad()[i] == doctest::Approx(gf[i] + gg[i]).epsilon(1e-10));
}

TEST_CASE("grad_check: exact on linear maps, tight on composition") {
    Tensor c = Tensor::from({2, 2}, {1, -2, 3, 0.5});
    double lin = grad_check(
        [&](const Tensor& x) { return sum(mul(x, c)); }, Tensor::from({2, 2}, {4, 3, 2, 1}));
    CHECK(lin < 1e-9);

    Rng rng(11);
    Tensor m = Tensor::randn({3, 3}, rng, 1.0);
    double comp = grad_check(
        [&](const Tensor& x) { return sum(silu(matmul(x, m))); },
        Tensor::randn({2, 3}, rng, 1.0));
    CHECK(comp < 1e-4);

    CHECK_THROWS_AS(grad_check([](const Tensor& x) { return sum(x); },
                               Tensor::zeros({2}), 0.0),
                    ContractError);
}

TEST_CASE("causal mask adds large negatives strictly above the diagonal") {
    Tensor s = Tensor::zeros({3, 3});
    Tensor m = causal_mask_apply(s);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j) {
            const Scalar v = m.values()[i * 3 + j];
            if (j > i)
                CHECK(v < -1e29);
            else
                CHECK(v == 0.0);
        }
}

TEST_CASE("randn is deterministic under a fixed seed") {
    Rng a(99), b(99);
    Tensor ta = Tensor::randn({4, 4}, a, 1.0);
    Tensor tb = Tensor::randn({4, 4}, b, 1.0);
    CHECK(ta.values() == tb.values());
}

TEST_CASE("gradient suite: every primitive and block below 1e-4") {
    for (const auto& r : run_grad_check_suite(2024)) {
        INFO(r.name);
        CHECK(r.max_rel_err < 1e-4);
    }
}
