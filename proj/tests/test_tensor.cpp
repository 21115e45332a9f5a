#include "doctest.h"
#include "sharnn/tape.hpp"
#include "sharnn/tensor.hpp"
#include "sharnn/ops.hpp"

using namespace sharnn;

TEST_CASE("tensor construction and shape accounting") {
    auto t = Tensor<double>::zeros({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK_FALSE(t.requires_grad());

    auto f = Tensor<double>::full({4}, 2.5);
    for (int i = 0; i < 4; ++i) CHECK(f.at(i) == 2.5);

    CHECK_THROWS_AS(Tensor<double>::from({1.0, 2.0}, {3}), ShapeError);
    CHECK_THROWS_AS(Tensor<double>::zeros({-1, 2}), ShapeError);
}

TEST_CASE("copies and reshapes share storage; detach copies") {
    auto a = Tensor<double>::from({1, 2, 3, 4}, {2, 2});
    Tensor<double> b = a;
    b.at(0, 0) = 9;
    CHECK(a.at(0, 0) == 9);
    CHECK(a.same_storage(b));

    auto v = a.reshape({4});
    CHECK(v.same_storage(a));
    CHECK(v.rank() == 1);
    CHECK(v.at(3) == 4);
    CHECK_THROWS_AS(a.reshape({3}), ShapeError);

    auto d = a.detached();
    CHECK_FALSE(d.same_storage(a));
    d.at(0) = -1;
    CHECK(a.at(0, 0) == 9);
}

TEST_CASE("gradient buffers allocate lazily and accumulate") {
    auto p = Tensor<double>::from({1, 2}, {2}, true);
    CHECK_FALSE(p.has_grad());
    CHECK_THROWS_AS(p.grad(), ContractError);
    p.ensure_grad();
    CHECK(p.has_grad());
    p.grad()[0] += 1.5;
    p.grad()[0] += 0.5;
    CHECK(p.grad()[0] == 2.0);
    p.zero_grad();
    CHECK(p.grad()[0] == 0.0);
}

TEST_CASE("backward requires a scalar and seeds gradient 1") {
    Tape<double> tape;
    auto x = Tensor<double>::from({3.0}, {}, true);
    auto y = scalar_mul(&tape, x, 2.0);
    tape.backward(y);
    CHECK(x.grad()[0] == 2.0);

    Tape<double> tape2;
    auto v = Tensor<double>::from({1, 2}, {2}, true);
    auto w = scalar_mul(&tape2, v, 1.0);
    CHECK_THROWS_AS(tape2.backward(w), ShapeError);
}

TEST_CASE("clearing the tape releases the recorded intermediates") {
    Tape<double> tape;
    auto x = Tensor<double>::from({1.0}, {}, true);
    const void* intermediate_id = nullptr;
    long count_while_held = 0;
    {
        auto y = scalar_mul(&tape, x, 2.0);
        auto z = scalar_mul(&tape, y, 3.0);
        intermediate_id = y.storage_id();
        count_while_held = y.storage_use_count();
        CHECK(tape.size() == 2);
        tape.backward(z);
        CHECK(x.grad()[0] == 6.0);
    }
    CHECK(count_while_held > 1);  // the tape's closures held the handle
    CHECK(intermediate_id != nullptr);
    tape.clear();
    CHECK(tape.size() == 0);
}
