#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "voxmesh/tensor.hpp"

namespace voxmesh {

struct SparseEntry {
    std::int64_t row;
    std::int64_t col;
    double value;
};

// COO sparse matrix in canonical row-major entry order (no duplicates).
// Entries are fixed at construction and never trainable. Copies share
// storage, so capturing a SparseMatrix in an autodiff closure is cheap.
class SparseMatrix {
public:
    SparseMatrix() = default;
    // Validates indices, sorts entries row-major, rejects duplicates.
    SparseMatrix(std::int64_t rows, std::int64_t cols, std::vector<SparseEntry> entries);

    static SparseMatrix identity(std::int64_t n);

    std::int64_t rows() const { return impl_ ? impl_->rows : 0; }
    std::int64_t cols() const { return impl_ ? impl_->cols : 0; }
    std::int64_t nnz() const { return impl_ ? static_cast<std::int64_t>(impl_->entries.size()) : 0; }
    const std::vector<SparseEntry>& entries() const { return impl_->entries; }
    // CSR row pointers into entries(), size rows()+1.
    const std::vector<std::int64_t>& row_ptr() const { return impl_->row_ptr; }

    SparseMatrix transposed() const;
    std::vector<double> to_dense() const;  // row-major rows() x cols()
    std::vector<double> row_sums() const;

    // y = M x for plain row-major data (no autodiff); x is cols() x f.
    void apply(const double* x, std::int64_t f, double* y) const;

private:
    struct Impl {
        std::int64_t rows = 0;
        std::int64_t cols = 0;
        std::vector<SparseEntry> entries;
        std::vector<std::int64_t> row_ptr;
    };
    std::shared_ptr<const Impl> impl_;
};

// out[rows, F] = m * x, differentiable w.r.t. x only.
Tensor sparse_matmul(const SparseMatrix& m, const Tensor& x);

}  // namespace voxmesh
