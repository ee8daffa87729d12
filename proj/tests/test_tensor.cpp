#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stgcn/error.hpp"
#include "stgcn/ops.hpp"
#include "stgcn/rng.hpp"
#include "stgcn/tape.hpp"
#include "stgcn/tensor.hpp"
#include "test_helpers.hpp"

using namespace stgcn;
using test::bitwise_equal;
using test::gradcheck;
using test::max_abs_diff;
using test::random_tensor;

TEST_CASE("tensor basics") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.at({1, 2}) == 6.0);
    CHECK(t.extent(-1) == 3);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), ShapeError);
    CHECK_THROWS_AS(Tensor({0, 2}, std::vector<double>{}), ShapeError);
    CHECK(Tensor::eye(2).at({0, 0}) == 1.0);
    CHECK(Tensor::eye(2).at({0, 1}) == 0.0);
}

TEST_CASE("matmul identity and hand arithmetic") {
    Rng rng(1);
    const Tensor m = random_tensor(rng, {3, 3});
    CHECK(max_abs_diff(matmul(Tensor::eye(3), m), m) == 0.0);

    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({2, 1}, {0, 1});
    const Tensor c = matmul(a, b);
    CHECK(c.at({0, 0}) == 2.0);
    CHECK(c.at({1, 0}) == 4.0);
}

TEST_CASE("matmul rejects mismatched inner extents") {
    const Tensor a = Tensor::zeros({2, 3});
    CHECK_THROWS_WITH_AS(matmul(a, a), doctest::Contains("(2x3)"), ShapeError);
}

TEST_CASE("matmul batched lhs against shared rhs matches per-slice products") {
    Rng rng(2);
    const Tensor a = random_tensor(rng, {4, 2, 3});
    const Tensor b = random_tensor(rng, {3, 5});
    const Tensor c = matmul(a, b);
    for (int64_t t = 0; t < 4; ++t) {
        for (int64_t i = 0; i < 2; ++i)
            for (int64_t j = 0; j < 5; ++j) {
                double want = 0.0;
                for (int64_t k = 0; k < 3; ++k) want += a.at({t, i, k}) * b.at({k, j});
                CHECK(c.at({t, i, j}) == doctest::Approx(want).epsilon(1e-14));
            }
    }
    // equal leading dims broadcast
    const Tensor b3 = random_tensor(rng, {4, 3, 5});
    const Tensor c3 = matmul(a, b3);
    CHECK(c3.shape() == Shape{4, 2, 5});
    const Tensor bad = random_tensor(rng, {2, 3, 5});
    CHECK_THROWS_AS(matmul(a, bad), ShapeError);
}

TEST_CASE("elementwise identities and contract errors") {
    Rng rng(3);
    const Tensor a = random_tensor(rng, {2, 2});
    CHECK(bitwise_equal(mul(a, Tensor::ones({2, 2})), a));
    CHECK(sigmoid(Tensor::scalar(0.0)).value() == 0.5);
    CHECK_THROWS_AS(mul(Tensor::zeros({2, 2}), Tensor::zeros({2, 3})), ShapeError);
    CHECK_THROWS_AS(elementwise(EwOp::add, a, nullptr), ValueError);
    CHECK(bitwise_equal(elementwise(EwOp::relu, Tensor({1, 3}, {-1, 0, 2})),
                        Tensor({1, 3}, {0, 0, 2})));
}

TEST_CASE("non-finite results are an error, never silent") {
    CHECK_THROWS_AS(exp(Tensor::scalar(1e4)), NumericError);
}

TEST_CASE("softmax values and properties") {
    const Tensor u = softmax(Tensor({1, 3}, {7.5, 7.5, 7.5}), -1);
    for (int64_t j = 0; j < 3; ++j) CHECK(u.at({0, j}) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    // direct exp/sum oracle
    const Tensor s = softmax(Tensor({1, 3}, {10, 0, 0}), -1);
    const double denom = std::exp(10.0) + 2.0;
    CHECK(s.at({0, 0}) == doctest::Approx(std::exp(10.0) / denom).epsilon(1e-12));
    CHECK(s.at({0, 1}) == doctest::Approx(1.0 / denom).epsilon(1e-12));
    CHECK(s.at({0, 1}) == doctest::Approx(4.5395e-5).epsilon(1e-3));

    Rng rng(4);
    const Tensor x = random_tensor(rng, {5, 7}, -30.0, 30.0);
    const Tensor y = softmax(x, 1);
    for (int64_t i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (int64_t j = 0; j < 7; ++j) {
            CHECK(y.at({i, j}) >= 0.0);
            sum += y.at({i, j});
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }

    // shift invariance within 1e-9
    const Tensor shifted = softmax(add_scalar(x, 123.456), 1);
    CHECK(max_abs_diff(y, shifted) <= 1e-9);

    // axis handling
    const Tensor y0 = softmax(x, 0);
    for (int64_t j = 0; j < 7; ++j) {
        double sum = 0.0;
        for (int64_t i = 0; i < 5; ++i) sum += y0.at({i, j});
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("backward on simple analytic cases") {
    // loss = sum(x) -> grad ones
    {
        Tape tape;
        Tensor x = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
        Tensor loss = reduce_sum(x, {}, false);
        const Gradients g = tape.backward(loss);
        CHECK(bitwise_equal(g.of(x), Tensor::ones({2, 3})));
    }
    // loss = sum(x*x), x=[1,2,3] -> grad [2,4,6]
    {
        Tape tape;
        Tensor x = tape.leaf(Tensor({3}, {1, 2, 3}));
        Tensor loss = reduce_sum(mul(x, x), {}, false);
        const Gradients g = tape.backward(loss);
        CHECK(bitwise_equal(g.of(x), Tensor({3}, {2, 4, 6})));
    }
}

TEST_CASE("backward contract errors and unreachable parameters") {
    Tape tape;
    Tensor x = tape.leaf(Tensor({2}, {1, 2}));
    Tensor y = tape.leaf(Tensor({2}, {3, 4}));  // never used
    Tensor loss = reduce_sum(mul(x, x), {}, false);
    CHECK_THROWS_AS(tape.backward(mul(x, x)), ValueError);  // non-scalar loss
    const Gradients g = tape.backward(loss);
    CHECK(bitwise_equal(g.of(y), Tensor::zeros({2})));  // unreachable -> exact zeros
}

TEST_CASE("backward is deterministic bit for bit") {
    Rng rng(5);
    const Tensor a0 = random_tensor(rng, {4, 6});
    const Tensor b0 = random_tensor(rng, {6, 3});
    auto run = [&]() {
        Tape tape;
        Tensor a = tape.leaf(a0);
        Tensor b = tape.leaf(b0);
        Tensor h = sigmoid(matmul(a, b));
        Tensor loss = reduce_mean(mul(h, h), {}, false);
        const Gradients g = tape.backward(loss);
        return std::pair{g.of(a), g.of(b)};
    };
    auto [ga1, gb1] = run();
    auto [ga2, gb2] = run();
    CHECK(bitwise_equal(ga1, ga2));
    CHECK(bitwise_equal(gb1, gb2));
}

TEST_CASE("two-branch mini-model gradient matches finite differences") {
    Rng rng(6);
    Tensor w1 = random_tensor(rng, {3, 4});
    Tensor w2 = random_tensor(rng, {3, 4});
    Tensor x = random_tensor(rng, {2, 3});
    std::vector<ParamRef> params{{"w1", &w1}, {"w2", &w2}};
    auto build = [&](Tape* tape, std::span<const Tensor> bound) {
        (void)tape;
        Tensor branch_a = sigmoid(matmul(x, bound[0]));
        Tensor branch_b = relu(matmul(x, bound[1]));
        return reduce_mean(mul(add(branch_a, branch_b), add(branch_a, branch_b)), {}, false);
    };
    const FiniteDiffReport report = finite_diff_check(params, build, 1e-6);
    CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("finite_diff_check oracle behaviour") {
    // quadratic loss: analytic gradient is exact, so the report measures the
    // central-difference error itself
    Rng rng(7);
    Tensor x = random_tensor(rng, {5}, 0.5, 1.5);
    std::vector<ParamRef> params{{"x", &x}};
    auto quadratic = [](Tape*, std::span<const Tensor> bound) {
        return reduce_sum(mul(bound[0], bound[0]), {}, false);
    };
    CHECK(finite_diff_check(params, quadratic, 1e-6).max_rel_err <= 1e-8);

    auto linear = [](Tape*, std::span<const Tensor> bound) {
        return reduce_sum(scale(bound[0], 3.0), {}, false);
    };
    CHECK(finite_diff_check(params, linear, 1e-6).max_rel_err <= 1e-9);

    CHECK_THROWS_AS(finite_diff_check(params, quadratic, 0.0), ValueError);
    CHECK_THROWS_AS(finite_diff_check(params, quadratic, 1e-2), ValueError);
}

TEST_CASE("every primitive passes the central-difference check") {
    Rng rng(8);
    const double tol = 1e-4;

    CHECK(gradcheck([](auto in) { return relu(in[0]); }, {random_tensor(rng, {3, 4})}) <= tol);
    CHECK(gradcheck([](auto in) { return sigmoid(in[0]); }, {random_tensor(rng, {3, 4})}) <= tol);
    CHECK(gradcheck([](auto in) { return stgcn::exp(in[0]); }, {random_tensor(rng, {3, 4})}) <= tol);
    CHECK(gradcheck([](auto in) { return rsqrt_safe(in[0]); },
                    {random_tensor(rng, {3, 4}, 0.5, 2.0)}) <= tol);
    CHECK(gradcheck([](auto in) { return scale(in[0], -2.5); }, {random_tensor(rng, {3, 4})}) <= tol);
    CHECK(gradcheck([](auto in) { return add_scalar(in[0], 0.7); }, {random_tensor(rng, {2, 3})}) <=
          tol);
    CHECK(gradcheck([](auto in) { return add(in[0], in[1]); },
                    {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}) <= tol);
    CHECK(gradcheck([](auto in) { return sub(in[0], in[1]); },
                    {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}) <= tol);
    CHECK(gradcheck([](auto in) { return mul(in[0], in[1]); },
                    {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}) <= tol);
    CHECK(gradcheck([](auto in) { return add_bc(in[0], in[1]); },
                    {random_tensor(rng, {3, 4, 2}), random_tensor(rng, {1, 4, 1})}) <= tol);
    CHECK(gradcheck([](auto in) { return mul_bc(in[0], in[1]); },
                    {random_tensor(rng, {3, 4, 2}), random_tensor(rng, {3, 1, 2})}) <= tol);
    CHECK(gradcheck([](auto in) { return add_bias(in[0], in[1]); },
                    {random_tensor(rng, {3, 4}), random_tensor(rng, {4})}) <= tol);
    CHECK(gradcheck([](auto in) { return matmul(in[0], in[1]); },
                    {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})}) <= tol);
    CHECK(gradcheck([](auto in) { return matmul(in[0], in[1]); },
                    {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {4, 2})}) <= tol);
    CHECK(gradcheck([](auto in) { return matmul(in[0], in[1]); },
                    {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 4, 2})}) <= tol);
    CHECK(gradcheck([](auto in) { return softmax(in[0], -1); }, {random_tensor(rng, {4, 5})}) <=
          tol);
    CHECK(gradcheck([](auto in) { return softmax(in[0], 0); }, {random_tensor(rng, {4, 5})}) <= tol);
    CHECK(gradcheck([](auto in) { return reshape(in[0], {6, 2}); }, {random_tensor(rng, {3, 4})}) <=
          tol);
    CHECK(gradcheck([](auto in) { return permute(in[0], {2, 0, 1}); },
                    {random_tensor(rng, {2, 3, 4})}) <= tol);
    CHECK(gradcheck([](auto in) { return slice(in[0], 1, 1, 2); }, {random_tensor(rng, {3, 4})}) <=
          tol);
    CHECK(gradcheck([](auto in) { return concat({in[0], in[1]}, 1); },
                    {random_tensor(rng, {3, 2}), random_tensor(rng, {3, 3})}) <= tol);
    CHECK(gradcheck([](auto in) { return pad(in[0], 1, 1, 2); }, {random_tensor(rng, {2, 3})}) <=
          tol);
    CHECK(gradcheck([](auto in) { return reduce_sum(in[0], {1}, false); },
                    {random_tensor(rng, {3, 4, 2})}) <= tol);
    CHECK(gradcheck([](auto in) { return reduce_mean(in[0], {0, 2}, true); },
                    {random_tensor(rng, {3, 4, 2})}) <= tol);
    CHECK(gradcheck([](auto in) { return window_contract(in[0], in[1]); },
                    {random_tensor(rng, {2, 5, 4, 3}), random_tensor(rng, {2, 2, 3, 2})}) <= tol);
    CHECK(gradcheck([](auto in) { return layer_norm(in[0], in[1], in[2]); },
                    {random_tensor(rng, {4, 6}), random_tensor(rng, {6}, 0.5, 1.5),
                     random_tensor(rng, {6})}) <= tol);
    CHECK(gradcheck([](auto in) { return mse_loss(in[0], in[1]); },
                    {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}) <= tol);
}

TEST_CASE("shape ops round values correctly") {
    Rng rng(9);
    const Tensor x = random_tensor(rng, {2, 3, 4});

    const Tensor p = permute(x, {1, 2, 0});
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 3; ++j)
            for (int64_t k = 0; k < 4; ++k) CHECK(p.at({j, k, i}) == x.at({i, j, k}));

    const Tensor s = slice(x, 2, 1, 2);
    CHECK(s.shape() == Shape{2, 3, 2});
    CHECK(s.at({1, 2, 0}) == x.at({1, 2, 1}));

    const Tensor padded = pad(x, 1, 1, 2);
    CHECK(padded.shape() == Shape{2, 6, 4});
    CHECK(padded.at({0, 0, 0}) == 0.0);
    CHECK(padded.at({0, 1, 0}) == x.at({0, 0, 0}));
    CHECK(padded.at({1, 5, 3}) == 0.0);

    const Tensor c = concat({x, x}, 0);
    CHECK(c.shape() == Shape{4, 3, 4});
    CHECK(c.at({3, 1, 1}) == x.at({1, 1, 1}));

    CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);
    CHECK_THROWS_AS(slice(x, 0, 1, 5), ShapeError);
    CHECK_THROWS_AS(concat({x, random_tensor(rng, {2, 2, 4})}, 0), ShapeError);
}

TEST_CASE("reductions match loop oracles") {
    Rng rng(10);
    const Tensor x = random_tensor(rng, {3, 4, 2});
    const Tensor s = reduce_sum(x, {1}, false);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t k = 0; k < 2; ++k) {
            double want = 0.0;
            for (int64_t j = 0; j < 4; ++j) want += x.at({i, j, k});
            CHECK(s.at({i, k}) == doctest::Approx(want).epsilon(1e-14));
        }
    const Tensor m = reduce_mean(x, {}, false);
    double total = 0.0;
    for (double v : x.data()) total += v;
    CHECK(m.value() == doctest::Approx(total / 24.0).epsilon(1e-14));
}
