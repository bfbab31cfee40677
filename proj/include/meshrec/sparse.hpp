#pragma once

// Triplet sparse matrix, just enough for the pooling/unpooling transforms:
// unique (row, col) pairs kept sorted row-major so serialized output is stable.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshrec/tensor.hpp"

namespace meshrec {

struct SparseTriplet {
    int row = 0, col = 0;
    double value = 0.0;
};

struct SparseMatrix {
    int rows = 0, cols = 0;
    std::vector<SparseTriplet> triplets;

    static SparseMatrix identity(int n) {
        SparseMatrix s;
        s.rows = s.cols = n;
        s.triplets.reserve(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) s.triplets.push_back({i, i, 1.0});
        return s;
    }

    void sort_triplets() {
        std::sort(triplets.begin(), triplets.end(), [](const SparseTriplet& a, const SparseTriplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
    }

    void validate() const {
        for (size_t i = 0; i < triplets.size(); ++i) {
            const auto& t = triplets[i];
            if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
                throw std::invalid_argument("SparseMatrix: triplet out of bounds");
            if (i > 0 && triplets[i - 1].row == t.row && triplets[i - 1].col == t.col)
                throw std::invalid_argument("SparseMatrix: duplicate (row, col)");
        }
    }
};

// Y = S * X, X is rows-of-S.cols x C, both dense row-major.
template <class Real>
Tensor<Real> spmm(const SparseMatrix& s, const Tensor<Real>& x) {
    if (x.ndim() != 2 || x.dim(0) != s.cols)
        throw std::invalid_argument("spmm: dimension mismatch (" + std::to_string(s.rows) + "x" +
                                    std::to_string(s.cols) + " * " + std::to_string(x.dim(0)) +
                                    " rows)");
    const int c = x.dim(1);
    Tensor<Real> y({s.rows, c});
    for (const SparseTriplet& t : s.triplets) {
        const Real v = static_cast<Real>(t.value);
        const Real* xr = x.data() + static_cast<size_t>(t.col) * c;
        Real* yr = y.data() + static_cast<size_t>(t.row) * c;
        for (int j = 0; j < c; ++j) yr[j] += v * xr[j];
    }
    return y;
}

inline SparseMatrix sparse_multiply(const SparseMatrix& a, const SparseMatrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("sparse_multiply: dimension mismatch");
    // b rows indexed for the accumulation
    std::vector<std::vector<std::pair<int, double>>> brow(static_cast<size_t>(b.rows));
    for (const auto& t : b.triplets) brow[static_cast<size_t>(t.row)].push_back({t.col, t.value});
    std::vector<std::vector<std::pair<int, double>>> acc(static_cast<size_t>(a.rows));
    for (const auto& t : a.triplets)
        for (const auto& [c, v] : brow[static_cast<size_t>(t.col)])
            acc[static_cast<size_t>(t.row)].push_back({c, t.value * v});
    SparseMatrix out;
    out.rows = a.rows;
    out.cols = b.cols;
    for (int r = 0; r < out.rows; ++r) {
        auto& row = acc[static_cast<size_t>(r)];
        std::sort(row.begin(), row.end());
        for (size_t i = 0; i < row.size();) {
            double sum = 0.0;
            size_t j = i;
            while (j < row.size() && row[j].first == row[i].first) sum += row[j++].second;
            if (sum != 0.0) out.triplets.push_back({r, row[i].first, sum});
            i = j;
        }
    }
    return out;
}

}  // namespace meshrec
