#include "kronest/kron.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kronest/error.hpp"

namespace kronest {

namespace {

std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

std::vector<Index> nonzero_rows(const Matrix& m)
{
    std::vector<Index> rows;
    for (Index i = 0; i < m.rows(); ++i) {
        if ((m.row(i).array() != 0.0).any()) {
            rows.push_back(i);
        }
    }
    return rows;
}

} // namespace

void KroneckerShape::validate() const
{
    if (p1 < 1 || q1 < 1 || p2 < 1 || q2 < 1) {
        throw ParameterError("Kronecker dimensions must be positive");
    }
    if (rank < 1 || rank > std::min(d1(), d2())) {
        throw ParameterError("Kronecker rank " + std::to_string(rank) + " outside [1, min(d1, d2)] = [1, " +
                             std::to_string(std::min(d1(), d2())) + "]");
    }
}

bool FactorPair::conforms(const KroneckerShape& shape) const noexcept
{
    return left.rows() == shape.d1() && right.rows() == shape.d2() && left.cols() == right.cols();
}

bool FactorPair::all_finite() const { return left.allFinite() && right.allFinite(); }

GroundTruth GroundTruth::from_factors(FactorPair factors, const KroneckerShape& shape)
{
    if (!factors.conforms(shape)) {
        throw ShapeError("ground-truth factors do not conform to shape");
    }
    GroundTruth truth;
    truth.theta = compose(factors, shape);
    Eigen::JacobiSVD<Matrix> svd(factors.left * factors.right.transpose());
    truth.sigma = svd.singularValues().head(factors.rank());
    truth.left_support = nonzero_rows(factors.left);
    truth.right_support = nonzero_rows(factors.right);
    truth.factors = std::move(factors);
    return truth;
}

GroundTruth GroundTruth::from_theta(const Matrix& theta, const KroneckerShape& shape)
{
    GroundTruth truth = from_factors(factorize(theta, shape, shape.rank), shape);
    truth.theta = theta;
    return truth;
}

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unvec(const Vector& v, Index rows, Index cols)
{
    if (v.size() != rows * cols) {
        throw ShapeError("cannot reshape vector of length " + std::to_string(v.size()) + " to " + dims(rows, cols));
    }
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Matrix kron(const Matrix& a, const Matrix& b)
{
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index j = 0; j < a.cols(); ++j) {
        for (Index i = 0; i < a.rows(); ++i) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

Matrix permute(const Matrix& theta, const KroneckerShape& shape)
{
    if (theta.rows() != shape.rows() || theta.cols() != shape.cols()) {
        throw ShapeError("permute: expected " + dims(shape.rows(), shape.cols()) + ", got " +
                         dims(theta.rows(), theta.cols()));
    }
    Matrix out(shape.d1(), shape.d2());
    for (Index b = 0; b < shape.q1; ++b) {
        for (Index a = 0; a < shape.p1; ++a) {
            const Index row = b * shape.p1 + a;
            for (Index c = 0; c < shape.q2; ++c) {
                for (Index r = 0; r < shape.p2; ++r) {
                    out(row, c * shape.p2 + r) = theta(a * shape.p2 + r, b * shape.q2 + c);
                }
            }
        }
    }
    return out;
}

Matrix permute_inverse(const Matrix& m, const KroneckerShape& shape)
{
    if (m.rows() != shape.d1() || m.cols() != shape.d2()) {
        throw ShapeError("permute_inverse: expected " + dims(shape.d1(), shape.d2()) + ", got " +
                         dims(m.rows(), m.cols()));
    }
    Matrix out(shape.rows(), shape.cols());
    for (Index b = 0; b < shape.q1; ++b) {
        for (Index a = 0; a < shape.p1; ++a) {
            const Index row = b * shape.p1 + a;
            for (Index c = 0; c < shape.q2; ++c) {
                for (Index r = 0; r < shape.p2; ++r) {
                    out(a * shape.p2 + r, b * shape.q2 + c) = m(row, c * shape.p2 + r);
                }
            }
        }
    }
    return out;
}

Matrix compose(const FactorPair& f, const KroneckerShape& shape)
{
    if (!f.conforms(shape)) {
        throw ShapeError("compose: factors " + dims(f.left.rows(), f.left.cols()) + " / " +
                         dims(f.right.rows(), f.right.cols()) + " do not conform to d1=" +
                         std::to_string(shape.d1()) + ", d2=" + std::to_string(shape.d2()));
    }
    return permute_inverse(f.left * f.right.transpose(), shape);
}

FactorPair factorize(const Matrix& theta, const KroneckerShape& shape, Index rank)
{
    const Matrix m = permute(theta, shape);
    if (rank < 1 || rank > std::min(m.rows(), m.cols())) {
        throw ParameterError("factorize: rank " + std::to_string(rank) + " out of range");
    }
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector root = svd.singularValues().head(rank).cwiseSqrt();
    FactorPair f;
    f.left = svd.matrixU().leftCols(rank) * root.asDiagonal();
    f.right = svd.matrixV().leftCols(rank) * root.asDiagonal();
    return f;
}

double relative_error(const Matrix& estimate, const Matrix& truth)
{
    const double denom = truth.norm();
    if (denom == 0.0) {
        throw ParameterError("relative_error: zero reference matrix");
    }
    return (estimate - truth).norm() / denom;
}

} // namespace kronest
