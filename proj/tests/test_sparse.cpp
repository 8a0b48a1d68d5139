#include "doctest.h"
#include "helpers.hpp"
#include "voxmesh/sparse.hpp"

#include <cmath>

using namespace voxmesh;
using testutil::grad_check;
using testutil::rand_leaf;

TEST_CASE("sparse matrix canonicalizes and validates") {
    SparseMatrix m(3, 4, {{2, 1, 5.0}, {0, 3, 1.0}, {0, 0, 2.0}});
    CHECK(m.nnz() == 3);
    CHECK(m.entries()[0].row == 0);
    CHECK(m.entries()[0].col == 0);
    CHECK(m.entries()[1].col == 3);
    CHECK(m.entries()[2].row == 2);
    CHECK(m.row_ptr().size() == 4);
    CHECK(m.row_ptr()[3] == 3);

    CHECK_THROWS(SparseMatrix(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}));  // duplicate
    CHECK_THROWS(SparseMatrix(2, 2, {{2, 0, 1.0}}));               // row out of range
    CHECK_THROWS(SparseMatrix(2, 2, {{0, -1, 1.0}}));              // col out of range
}

TEST_CASE("sparse identity times x equals x") {
    Rng rng(3);
    SparseMatrix id = SparseMatrix::identity(5);
    Tensor x = rand_leaf({5, 3}, rng);
    Tensor y = sparse_matmul(id, x);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.value_at(i) == x.value_at(i));
}

TEST_CASE("sparse_matmul matches dense oracle up to 64x64") {
    Rng rng(5);
    for (int trial = 0; trial < 8; ++trial) {
        const std::int64_t r = 1 + rng.uniform_int(64);
        const std::int64_t c = 1 + rng.uniform_int(64);
        const std::int64_t f = 1 + rng.uniform_int(8);
        std::vector<SparseEntry> ents;
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j)
                if (rng.uniform() < 0.15) ents.push_back({i, j, rng.uniform(-2.0, 2.0)});
        SparseMatrix m(r, c, ents);
        Tensor x = rand_leaf({c, f}, rng, -1.0, 1.0, false);

        Tensor y = sparse_matmul(m, x);
        const std::vector<double> dense = m.to_dense();
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t k = 0; k < f; ++k) {
                double acc = 0.0;
                for (std::int64_t j = 0; j < c; ++j)
                    acc += dense[i * c + j] * x.value_at(j * f + k);
                CHECK(std::abs(y.value_at(i * f + k) - acc) < 1e-7);
            }
    }
}

TEST_CASE("sparse_matmul gradient matches finite differences") {
    Rng rng(9);
    std::vector<SparseEntry> ents = {{0, 0, 0.5}, {0, 2, -1.0}, {1, 1, 2.0}, {2, 0, 1.5}, {3, 2, 0.25}};
    SparseMatrix m(4, 3, ents);
    Tensor x = rand_leaf({3, 2}, rng);
    CHECK(grad_check([&] { return sum(mul(sparse_matmul(m, x), sparse_matmul(m, x))); }, {x}) < 1e-3);
}

TEST_CASE("transpose and row sums") {
    SparseMatrix m(2, 3, {{0, 1, 2.0}, {1, 0, 3.0}, {1, 2, 4.0}});
    SparseMatrix t = m.transposed();
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 2);
    const auto dense = m.to_dense();
    const auto dt = t.to_dense();
    for (std::int64_t i = 0; i < 2; ++i)
        for (std::int64_t j = 0; j < 3; ++j) CHECK(dense[i * 3 + j] == dt[j * 2 + i]);

    const auto rs = m.row_sums();
    CHECK(rs[0] == doctest::Approx(2.0));
    CHECK(rs[1] == doctest::Approx(7.0));
}

TEST_CASE("apply matches sparse_matmul values") {
    Rng rng(12);
    SparseMatrix m(3, 3, {{0, 0, 1.0}, {1, 2, -2.0}, {2, 1, 0.5}});
    Tensor x = rand_leaf({3, 4}, rng, -1.0, 1.0, false);
    std::vector<double> xv = x.values();
    std::vector<double> y(3 * 4, 0.0);
    m.apply(xv.data(), 4, y.data());
    Tensor z = sparse_matmul(m, x);
    for (std::int64_t i = 0; i < 12; ++i) CHECK(y[static_cast<std::size_t>(i)] == doctest::Approx(z.value_at(i)));
}
