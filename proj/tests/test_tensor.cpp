#include "doctest.h"
#include "helpers.hpp"
#include "voxmesh/tensor.hpp"

#include <cmath>

using namespace voxmesh;
using testutil::grad_check;
using testutil::rand_leaf;
using testutil::rand_leaf_nonzero;

TEST_CASE("tensor construction and invariants") {
    Tensor t = Tensor::zeros({2, 3}, Dtype::F32);
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.dim(1) == 3);
    for (std::int64_t i = 0; i < 6; ++i) CHECK(t.value_at(i) == 0.0);

    Tensor f = Tensor::full({4}, 2.5, Dtype::F64);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(f.value_at(i) == 2.5);

    Tensor v = Tensor::from_values({2, 2}, {1, 2, 3, 4}, Dtype::F64);
    CHECK(v.value_at(3) == 4.0);

    CHECK_THROWS(Tensor::zeros({2, 0}, Dtype::F32));
    CHECK_THROWS(Tensor::from_values({2, 2}, {1, 2, 3}, Dtype::F32));
}

TEST_CASE("backward: sum gives all-ones grad, non-scalar loss rejected") {
    Rng rng(1);
    Tensor x = rand_leaf({3, 4}, rng);
    Tensor loss = sum(x);
    backward(loss);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(x.grad_at(i) == doctest::Approx(1.0));

    CHECK_THROWS(backward(x));
}

TEST_CASE("backward: sum(x*x) gives 2x") {
    Rng rng(2);
    Tensor x = rand_leaf({5}, rng);
    backward(sum(mul(x, x)));
    for (std::int64_t i = 0; i < 5; ++i)
        CHECK(x.grad_at(i) == doctest::Approx(2.0 * x.value_at(i)).epsilon(1e-12));
}

TEST_CASE("backward: leaf grads accumulate across calls, zero_grad resets") {
    Tensor x = Tensor::full({3}, 1.0, Dtype::F64, true);
    backward(sum(x));
    backward(sum(x));
    for (std::int64_t i = 0; i < 3; ++i) CHECK(x.grad_at(i) == doctest::Approx(2.0));
    x.zero_grad();
    backward(sum(x));
    for (std::int64_t i = 0; i < 3; ++i) CHECK(x.grad_at(i) == doctest::Approx(1.0));
}

TEST_CASE("backward: diamond graph (shared subexpression) accumulates once per path") {
    Tensor x = Tensor::full({2}, 3.0, Dtype::F64, true);
    Tensor y = mul(x, x);           // x^2
    Tensor z = add(y, y);           // 2 x^2 -> d/dx = 4x = 12
    backward(sum(z));
    for (std::int64_t i = 0; i < 2; ++i) CHECK(x.grad_at(i) == doctest::Approx(12.0));
}

TEST_CASE("relu values and grad convention") {
    Tensor x = Tensor::from_values({3}, {-1.0, 0.0, 2.0}, Dtype::F64, true);
    Tensor y = relu(x);
    CHECK(y.value_at(0) == 0.0);
    CHECK(y.value_at(1) == 0.0);
    CHECK(y.value_at(2) == 2.0);
    backward(sum(y));
    CHECK(x.grad_at(0) == 0.0);
    CHECK(x.grad_at(2) == 1.0);
}

TEST_CASE("elementwise and reduction ops match finite differences") {
    Rng rng(7);
    Tensor a = rand_leaf({2, 3}, rng);
    Tensor b = rand_leaf({2, 3}, rng);

    CHECK(grad_check([&] { return sum(add(a, b)); }, {a, b}) < 1e-3);
    CHECK(grad_check([&] { return sum(sub(a, b)); }, {a, b}) < 1e-3);
    CHECK(grad_check([&] { return sum(mul(a, b)); }, {a, b}) < 1e-3);
    CHECK(grad_check([&] { return mean(mul(a, a)); }, {a}) < 1e-3);
    CHECK(grad_check([&] { return sum(scale(a, -2.5)); }, {a}) < 1e-3);
    CHECK(grad_check([&] { return sum(add_scalar(mul(a, b), 3.0)); }, {a, b}) < 1e-3);
    CHECK(grad_check([&] { return sum(voxmesh::tanh(a)); }, {a}) < 1e-3);

    Tensor c = rand_leaf_nonzero({4, 4}, rng);
    CHECK(grad_check([&] { return sum(relu(c)); }, {c}) < 1e-3);
}

TEST_CASE("reshape and flatten preserve values and route grads") {
    Rng rng(11);
    Tensor a = rand_leaf({2, 6}, rng);
    Tensor r = reshape(a, {3, 4});
    CHECK(r.dim(0) == 3);
    for (std::int64_t i = 0; i < 12; ++i) CHECK(r.value_at(i) == a.value_at(i));
    CHECK_THROWS(reshape(a, {5, 5}));

    CHECK(grad_check([&] { return sum(mul(reshape(a, {3, 4}), reshape(a, {3, 4}))); }, {a}) < 1e-3);
    Tensor fl = flatten(a);
    CHECK(fl.rank() == 1);
    CHECK(fl.numel() == 12);
}

TEST_CASE("concat joins along a dim and splits grads back") {
    Rng rng(13);
    Tensor a = rand_leaf({2, 3}, rng);
    Tensor b = rand_leaf({2, 5}, rng);
    Tensor c = concat({a, b}, 1);
    CHECK(c.dim(0) == 2);
    CHECK(c.dim(1) == 8);
    CHECK(c.value_at(0) == a.value_at(0));
    CHECK(c.value_at(3) == b.value_at(0));
    CHECK(c.value_at(8) == a.value_at(3));

    CHECK(grad_check([&] { return sum(mul(concat({a, b}, 1), concat({a, b}, 1))); }, {a, b}) < 1e-3);

    Tensor d = rand_leaf({1, 3}, rng);
    CHECK_THROWS(concat({a, d}, 1));  // dim-0 mismatch
    Tensor e = concat({a, d}, 0);
    CHECK(e.dim(0) == 3);
}

TEST_CASE("composite graph matches finite differences") {
    Rng rng(17);
    Tensor a = rand_leaf_nonzero({3, 3}, rng);
    Tensor b = rand_leaf_nonzero({3, 3}, rng);
    auto f = [&] { return mean(mul(relu(add(a, b)), voxmesh::tanh(sub(a, b)))); };
    CHECK(grad_check(f, {a, b}) < 1e-3);
}

TEST_CASE("gradients are bit-identical across repeated runs") {
    auto run = [] {
        Rng rng(23);
        Tensor a = rand_leaf({4, 4}, rng);
        Tensor b = rand_leaf({4, 4}, rng);
        backward(sum(mul(voxmesh::tanh(a), add(a, b))));
        return a.grad_values();
    };
    auto g1 = run();
    auto g2 = run();
    REQUIRE(g1.size() == g2.size());
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("detach stops gradients; to_dtype converts") {
    Rng rng(29);
    Tensor a = rand_leaf({3}, rng);
    Tensor d = a.detach();
    CHECK_FALSE(d.requires_grad());
    backward(sum(mul(a, d)));
    for (std::int64_t i = 0; i < 3; ++i)
        CHECK(a.grad_at(i) == doctest::Approx(d.value_at(i)));

    Tensor f32 = a.to_dtype(Dtype::F32);
    CHECK(f32.dtype() == Dtype::F32);
    CHECK(f32.value_at(0) == doctest::Approx(a.value_at(0)).epsilon(1e-6));
}

TEST_CASE("rng streams are deterministic and name-separated") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng n1 = named_rng(7, "unet.enc0.weight");
    Rng n2 = named_rng(7, "unet.enc0.weight");
    Rng n3 = named_rng(7, "unet.enc1.weight");
    CHECK(n1.next_u64() == n2.next_u64());
    CHECK(n1.next_u64() != n3.next_u64());

    Rng u(5);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
}
