#include "kronest/sht.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "kronest/error.hpp"
#include "kronest/robust_grad.hpp"

namespace kronest {

namespace {

// Indices of the s largest entries of norms; ties go to the lower index.
std::vector<Index> top_rows(const Vector& norms, Index s)
{
    std::vector<Index> order(static_cast<std::size_t>(norms.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return norms(a) > norms(b); });
    std::vector<Index> keep;
    for (const Index i : order) {
        if (static_cast<Index>(keep.size()) == s || norms(i) == 0.0) {
            break;
        }
        keep.push_back(i);
    }
    return keep;
}

Matrix keep_rows(const Matrix& m, const std::vector<Index>& rows)
{
    Matrix out = Matrix::Zero(m.rows(), m.cols());
    for (const Index i : rows) {
        out.row(i) = m.row(i);
    }
    return out;
}

void check_level(Index s, Index d, const char* which)
{
    if (s < 1 || s > d) {
        throw ParameterError(std::string("sparsity level ") + which + "=" + std::to_string(s) + " outside [1, " +
                             std::to_string(d) + "]");
    }
}

} // namespace

void SparsityLevels::validate(const KroneckerShape& shape) const
{
    check_level(left, shape.d1(), "s_L");
    check_level(right, shape.d2(), "s_R");
}

Matrix hard_threshold_rows(const Matrix& m, Index s)
{
    check_level(s, m.rows(), "s");
    if (s == m.rows()) {
        return m;
    }
    return keep_rows(m, top_rows(m.rowwise().norm(), s));
}

std::pair<Vector, Vector> scaled_row_norms(const FactorPair& f)
{
    const Matrix rtr = f.right.transpose() * f.right;
    const Matrix ltl = f.left.transpose() * f.left;
    const Vector left = ((f.left * rtr).cwiseProduct(f.left)).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
    const Vector right = ((f.right * ltl).cwiseProduct(f.right)).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
    return {left, right};
}

FactorPair scaled_hard_threshold(const FactorPair& f, const SparsityLevels& levels)
{
    check_level(levels.left, f.left.rows(), "s_L");
    check_level(levels.right, f.right.rows(), "s_R");
    if (levels.left == f.left.rows() && levels.right == f.right.rows()) {
        return f;
    }
    // Support selection uses the invariant quadratic-form norms; the scaled
    // factors themselves are only needed for the rows that survive.
    const auto [left_norms, right_norms] = scaled_row_norms(f);
    FactorPair out;
    if (levels.left == f.left.rows()) {
        out.left = f.left;
    } else {
        const Matrix scaled = f.left * gram_sqrt(f.right);
        out.left = keep_rows(scaled, top_rows(left_norms, levels.left)) * gram_inv_sqrt(f.right);
    }
    if (levels.right == f.right.rows()) {
        out.right = f.right;
    } else {
        const Matrix scaled = f.right * gram_sqrt(f.left);
        out.right = keep_rows(scaled, top_rows(right_norms, levels.right)) * gram_inv_sqrt(f.left);
    }
    return out;
}

} // namespace kronest
