#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace kronest {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dimensions of a sum of K Kronecker products A_k (p1 x q1) (x) B_k (p2 x q2).
///
/// The full parameter is (p1*p2) x (q1*q2); its rearrangement is d1 x d2 with
/// d1 = p1*q1 and d2 = p2*q2.
struct KroneckerShape {
    Index p1 = 1;
    Index q1 = 1;
    Index p2 = 1;
    Index q2 = 1;
    Index rank = 1;

    Index d1() const noexcept { return p1 * q1; }
    Index d2() const noexcept { return p2 * q2; }
    Index rows() const noexcept { return p1 * p2; }
    Index cols() const noexcept { return q1 * q2; }

    /// Throws ParameterError unless all dims >= 1 and 1 <= rank <= min(d1, d2).
    void validate() const;

    friend bool operator==(const KroneckerShape&, const KroneckerShape&) = default;
};

/// Factors of the rearranged parameter, P(Theta) = left * right^T.
struct FactorPair {
    Matrix left;  // d1 x K
    Matrix right; // d2 x K

    Index rank() const noexcept { return left.cols(); }
    bool conforms(const KroneckerShape& shape) const noexcept;
    bool all_finite() const;
};

struct GroundTruth {
    FactorPair factors;
    Matrix theta;
    Vector sigma; // singular values of P(theta), descending, length K
    std::vector<Index> left_support;
    std::vector<Index> right_support;

    /// Wraps caller supplied factors, which are expected to be balanced
    /// (left^T left == right^T right == diag(sigma)). Every generator in
    /// this library produces balanced factors.
    static GroundTruth from_factors(FactorPair factors, const KroneckerShape& shape);

    /// Balanced factors from the rank-K SVD of P(theta).
    static GroundTruth from_theta(const Matrix& theta, const KroneckerShape& shape);
};

Vector vec(const Matrix& m);
Matrix unvec(const Vector& v, Index rows, Index cols);
Matrix kron(const Matrix& a, const Matrix& b);

/// Van Loan-Pitsianis rearrangement: block (a, b) of theta (p2 x q2) is
/// vectorized column-major into row b*p1 + a, so permute(A (x) B) = vec(A) vec(B)^T.
Matrix permute(const Matrix& theta, const KroneckerShape& shape);
Matrix permute_inverse(const Matrix& m, const KroneckerShape& shape);

/// permute_inverse(left * right^T).
Matrix compose(const FactorPair& f, const KroneckerShape& shape);

/// Balanced rank-K factors (U S^{1/2}, V S^{1/2}) of P(theta).
FactorPair factorize(const Matrix& theta, const KroneckerShape& shape, Index rank);

double relative_error(const Matrix& estimate, const Matrix& truth);

struct FactorDistance {
    double value = 0.0;
    // True when the value comes from a local search and only bounds the infimum from above.
    bool upper_bound = false;
};

/// Distance between factorizations modulo GL(K), weighted by the target's
/// singular values. Exact for K = 1; a local-search upper bound for K >= 2.
FactorDistance factor_distance(const FactorPair& f, const GroundTruth& target, std::uint64_t seed = 0x5eed);

} // namespace kronest
