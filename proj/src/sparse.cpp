#include "voxmesh/sparse.hpp"

#include <algorithm>

namespace voxmesh {

SparseMatrix::SparseMatrix(std::int64_t rows, std::int64_t cols, std::vector<SparseEntry> entries) {
    require(rows > 0 && cols > 0, "SparseMatrix: extents must be positive");
    auto impl = std::make_shared<Impl>();
    impl->rows = rows;
    impl->cols = cols;
    impl->entries = std::move(entries);
    std::sort(impl->entries.begin(), impl->entries.end(), [](const SparseEntry& a, const SparseEntry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t i = 0; i < impl->entries.size(); ++i) {
        const auto& e = impl->entries[i];
        require(e.row >= 0 && e.row < rows && e.col >= 0 && e.col < cols,
                "SparseMatrix: entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                    ") out of range for " + std::to_string(rows) + "x" + std::to_string(cols));
        if (i > 0) {
            const auto& p = impl->entries[i - 1];
            require(!(p.row == e.row && p.col == e.col),
                    "SparseMatrix: duplicate entry at (" + std::to_string(e.row) + "," +
                        std::to_string(e.col) + ")");
        }
    }
    impl->row_ptr.assign(static_cast<std::size_t>(rows) + 1, 0);
    for (const auto& e : impl->entries) ++impl->row_ptr[static_cast<std::size_t>(e.row) + 1];
    for (std::int64_t r = 0; r < rows; ++r)
        impl->row_ptr[static_cast<std::size_t>(r) + 1] += impl->row_ptr[static_cast<std::size_t>(r)];
    impl_ = std::move(impl);
}

SparseMatrix SparseMatrix::identity(std::int64_t n) {
    std::vector<SparseEntry> e;
    e.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) e.push_back({i, i, 1.0});
    return SparseMatrix(n, n, std::move(e));
}

SparseMatrix SparseMatrix::transposed() const {
    std::vector<SparseEntry> e;
    e.reserve(impl_->entries.size());
    for (const auto& x : impl_->entries) e.push_back({x.col, x.row, x.value});
    return SparseMatrix(cols(), rows(), std::move(e));
}

std::vector<double> SparseMatrix::to_dense() const {
    std::vector<double> d(static_cast<std::size_t>(rows() * cols()), 0.0);
    for (const auto& e : impl_->entries)
        d[static_cast<std::size_t>(e.row * cols() + e.col)] = e.value;
    return d;
}

std::vector<double> SparseMatrix::row_sums() const {
    std::vector<double> s(static_cast<std::size_t>(rows()), 0.0);
    for (const auto& e : impl_->entries) s[static_cast<std::size_t>(e.row)] += e.value;
    return s;
}

void SparseMatrix::apply(const double* x, std::int64_t f, double* y) const {
    std::fill(y, y + rows() * f, 0.0);
    for (const auto& e : impl_->entries) {
        const double v = e.value;
        const double* xr = x + e.col * f;
        double* yr = y + e.row * f;
        for (std::int64_t j = 0; j < f; ++j) yr[j] += v * xr[j];
    }
}

namespace {

template <class T>
void spmm_fill(const SparseMatrix& m, const detail::Node& x, detail::Node& out, std::int64_t f) {
    const T* px = x.val<T>();
    T* po = out.val<T>();
    for (const auto& e : m.entries()) {
        const T v = static_cast<T>(e.value);
        const T* xr = px + e.col * f;
        T* yr = po + e.row * f;
        for (std::int64_t j = 0; j < f; ++j) yr[j] += v * xr[j];
    }
}

template <class T>
void spmm_backward(const SparseMatrix& m, detail::Node& x, detail::Node& out, std::int64_t f) {
    const T* g = out.grad<T>();
    T* gx = x.grad<T>();
    for (const auto& e : m.entries()) {
        const T v = static_cast<T>(e.value);
        const T* gr = g + e.row * f;
        T* xr = gx + e.col * f;
        for (std::int64_t j = 0; j < f; ++j) xr[j] += v * gr[j];
    }
}

}  // namespace

Tensor sparse_matmul(const SparseMatrix& m, const Tensor& x) {
    require(x.defined(), "sparse_matmul: undefined input");
    require(x.rank() == 2, "sparse_matmul: x must be rank 2, got " + shape_str(x.shape()));
    require(x.dim(0) == m.cols(), "sparse_matmul: matrix cols " + std::to_string(m.cols()) +
                                      " != x rows " + std::to_string(x.dim(0)));
    const std::int64_t f = x.dim(1);
    detail::NodePtr px = x.node();
    SparseMatrix mat = m;  // shared storage
    Tensor out = detail::make_op({m.rows(), f}, x.dtype(), {x}, [mat, px, f](detail::Node& o) {
        if (o.dtype == Dtype::F32) spmm_backward<float>(mat, *px, o, f);
        else spmm_backward<double>(mat, *px, o, f);
    });
    if (x.dtype() == Dtype::F32) spmm_fill<float>(m, *px, *out.node(), f);
    else spmm_fill<double>(m, *px, *out.node(), f);
    return out;
}

}  // namespace voxmesh
