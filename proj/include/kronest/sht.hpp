#pragma once

#include <utility>

#include "kronest/kron.hpp"

namespace kronest {

/// Row-sparsity budget for the two factors. s_left == d1 and s_right == d2
/// disables thresholding.
struct SparsityLevels {
    Index left = 0;
    Index right = 0;

    static SparsityLevels full(const KroneckerShape& shape) { return {shape.d1(), shape.d2()}; }
    bool disabled(const KroneckerShape& shape) const noexcept { return left >= shape.d1() && right >= shape.d2(); }
    void validate(const KroneckerShape& shape) const;
};

/// Keeps the s rows of largest Euclidean norm (ties to the lower index) and
/// zeroes the rest. Rows that are already zero are never selected, so fewer
/// than s rows may survive.
Matrix hard_threshold_rows(const Matrix& m, Index s);

/// Row norms of L (R^T R)^{1/2} and R (L^T L)^{1/2}, computed as
/// sqrt(e_i^T L (R^T R) L^T e_i). Invariant under (L, R) -> (L Q, R Q^{-T}).
std::pair<Vector, Vector> scaled_row_norms(const FactorPair& f);

/// Scaled hard thresholding. Both factors are thresholded from the same
/// incoming pair:
///   L+ = HT(L (R^T R)^{1/2}, s_L) (R^T R)^{-1/2}
///   R+ = HT(R (L^T L)^{1/2}, s_R) (L^T L)^{-1/2}
FactorPair scaled_hard_threshold(const FactorPair& f, const SparsityLevels& levels);

} // namespace kronest
