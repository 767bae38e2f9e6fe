#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "kronest/error.hpp"
#include "kronest/kron.hpp"
#include "oracles.hpp"

using namespace kronest;
using oracle::gaussian_matrix;

TEST_SUITE("kron")
{

TEST_CASE("permute of a scalar times B is the row a vec(B)^T")
{
    const KroneckerShape shape{1, 1, 2, 3, 1};
    Matrix b(2, 3);
    b << 1, 2, 3, 4, 5, 6;
    const Matrix p = permute(2.5 * b, shape);
    REQUIRE(p.rows() == 1);
    REQUIRE(p.cols() == 6);
    CHECK(p == (2.5 * vec(b)).transpose());
}

TEST_CASE("permute(A kron B) matches index enumeration of the 4x4 product")
{
    Rng rng(17);
    const KroneckerShape shape{2, 2, 2, 2, 1};
    const Matrix a = oracle::integer_matrix(rng, 2, 2, -9, 9);
    const Matrix b = oracle::integer_matrix(rng, 2, 2, -9, 9);
    const Matrix theta = oracle::brute_kron(a, b);
    const Matrix p = permute(theta, shape);
    // Block (i, j) of theta holds a(i, j) * B, so row i + 2 j of P is a(i, j) vec(B)^T.
    for (Index i = 0; i < 2; ++i) {
        for (Index j = 0; j < 2; ++j) {
            for (Index k = 0; k < 2; ++k) {
                for (Index l = 0; l < 2; ++l) {
                    CHECK(p(i + 2 * j, k + 2 * l) == theta(2 * i + k, 2 * j + l));
                    CHECK(p(i + 2 * j, k + 2 * l) == a(i, j) * b(k, l));
                }
            }
        }
    }
}

TEST_CASE("permute(A kron B) == vec(A) vec(B)^T exactly on random shapes")
{
    Rng rng(2024);
    for (int t = 0; t < 100; ++t) {
        const KroneckerShape s = oracle::random_shape(rng, 4, 1);
        const Matrix a = oracle::integer_matrix(rng, s.p1, s.q1, -20, 20);
        const Matrix b = oracle::integer_matrix(rng, s.p2, s.q2, -20, 20);
        CHECK(permute(oracle::brute_kron(a, b), s) == vec(a) * vec(b).transpose());
        CHECK(kron(a, b) == oracle::brute_kron(a, b));
    }
}

TEST_CASE("permute round trip and linearity are exact")
{
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
        const KroneckerShape s = oracle::random_shape(rng, 4, 1);
        const Matrix m = gaussian_matrix(rng, s.rows(), s.cols());
        const Matrix n = gaussian_matrix(rng, s.rows(), s.cols());
        CHECK(permute_inverse(permute(m, s), s) == m);
        const Matrix pm = gaussian_matrix(rng, s.d1(), s.d2());
        CHECK(permute(permute_inverse(pm, s), s) == pm);
        // Entries are only moved, so sums and norms survive bit for bit.
        CHECK(permute(2.0 * m + n, s) == 2.0 * permute(m, s) + permute(n, s));
        std::vector<double> before(m.data(), m.data() + m.size());
        const Matrix pmm = permute(m, s);
        std::vector<double> after(pmm.data(), pmm.data() + pmm.size());
        std::sort(before.begin(), before.end());
        std::sort(after.begin(), after.end());
        CHECK(before == after);
    }
}

TEST_CASE("permute_inverse(vec(A) vec(B)^T) is the Kronecker product")
{
    Rng rng(8);
    const KroneckerShape s{3, 2, 2, 4, 1};
    const Matrix a = gaussian_matrix(rng, 3, 2);
    const Matrix b = gaussian_matrix(rng, 2, 4);
    CHECK(permute_inverse(vec(a) * vec(b).transpose(), s) == oracle::brute_kron(a, b));
}

TEST_CASE("1x1 rearrangement passes through")
{
    const KroneckerShape s{1, 1, 1, 1, 1};
    Matrix m(1, 1);
    m << -3.5;
    CHECK(permute(m, s) == m);
    CHECK(permute_inverse(m, s) == m);
}

TEST_CASE("dimension mismatch is a shape error")
{
    const KroneckerShape s{2, 2, 2, 2, 1};
    CHECK_THROWS_AS(permute(Matrix::Zero(3, 4), s), ShapeError);
    CHECK_THROWS_AS(permute_inverse(Matrix::Zero(4, 3), s), ShapeError);
    CHECK_THROWS_AS(compose(FactorPair{Matrix::Zero(3, 1), Matrix::Zero(4, 1)}, s), ShapeError);
}

TEST_CASE("shape validation")
{
    CHECK_NOTHROW(KroneckerShape{2, 3, 1, 1, 1}.validate());
    CHECK_THROWS_AS((KroneckerShape{0, 3, 1, 1, 1}.validate()), ParameterError);
    CHECK_THROWS_AS((KroneckerShape{2, 3, 1, 1, 2}.validate()), ParameterError);
    CHECK_THROWS_AS((KroneckerShape{2, 3, 1, 1, 0}.validate()), ParameterError);
}

TEST_CASE("compose of rank one factors and of zero factors")
{
    Rng rng(9);
    const KroneckerShape s{2, 3, 3, 2, 1};
    const Matrix a = gaussian_matrix(rng, 2, 3);
    const Matrix b = gaussian_matrix(rng, 3, 2);
    CHECK((compose(FactorPair{vec(a), vec(b)}, s) - oracle::brute_kron(a, b)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(compose(FactorPair{Matrix::Zero(6, 1), Matrix::Zero(6, 1)}, s).isZero(0.0));
}

TEST_CASE("factorize is balanced and reproduces low-rank targets")
{
    Rng rng(10);
    for (int t = 0; t < 20; ++t) {
        const KroneckerShape s = oracle::random_shape(rng, 4, 3);
        Matrix p = Matrix::Zero(s.d1(), s.d2());
        for (Index k = 0; k < s.rank; ++k) {
            p += gaussian_matrix(rng, s.d1(), 1) * gaussian_matrix(rng, s.d2(), 1).transpose();
        }
        const Matrix theta = permute_inverse(p, s);
        const FactorPair f = factorize(theta, s, s.rank);
        CHECK((compose(f, s) - theta).cwiseAbs().maxCoeff() < 1e-10);
        for (Index k = 0; k < s.rank; ++k) {
            CHECK(f.left.col(k).norm() == doctest::Approx(f.right.col(k).norm()).epsilon(1e-10));
        }
    }
}

TEST_CASE("factorize of A kron B at K = 1 and of full-rank targets")
{
    Rng rng(11);
    const KroneckerShape s{3, 2, 2, 3, 1};
    const Matrix a = gaussian_matrix(rng, 3, 2);
    const Matrix b = gaussian_matrix(rng, 2, 3);
    const FactorPair f = factorize(oracle::brute_kron(a, b), s, 1);
    CHECK((f.left * f.right.transpose() - vec(a) * vec(b).transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(f.left.norm() == doctest::Approx(f.right.norm()).epsilon(1e-10));

    const KroneckerShape full{2, 2, 2, 3, 4};
    const Matrix theta = gaussian_matrix(rng, 4, 6);
    CHECK((compose(factorize(theta, full, 4), full) - theta).cwiseAbs().maxCoeff() < 1e-10);

    const FactorPair z = factorize(Matrix::Zero(4, 6), full, 2);
    CHECK(z.left.isZero(0.0));
    CHECK(z.right.isZero(0.0));
}

TEST_CASE("ground truth from factors is consistent")
{
    Rng rng(12);
    const KroneckerShape s{3, 3, 2, 2, 2};
    const GroundTruth g = GroundTruth::from_theta(compose({gaussian_matrix(rng, 9, 2), gaussian_matrix(rng, 4, 2)}, s), s);
    CHECK((compose(g.factors, s) - g.theta).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(g.sigma(0) >= g.sigma(1));
    CHECK(g.sigma(1) > 0.0);
}

TEST_CASE("relative error")
{
    Matrix t(1, 2);
    t << 3, 4;
    Matrix e(1, 2);
    e << 3, 4.5;
    CHECK(relative_error(e, t) == doctest::Approx(0.1));
    CHECK(relative_error(t, t) == 0.0);
}

TEST_CASE("factor distance is zero on the invariance class")
{
    Rng rng(13);
    const KroneckerShape s{3, 2, 2, 2, 1};
    const GroundTruth g = GroundTruth::from_factors(factorize(compose({gaussian_matrix(rng, 6, 1), gaussian_matrix(rng, 4, 1)}, s), s, 1), s);
    CHECK(factor_distance(g.factors, g).value == doctest::Approx(0.0).epsilon(1e-12));
    for (double c : {3.0, -0.25, 1e-3, -40.0}) {
        const FactorDistance d = factor_distance({c * g.factors.left, g.factors.right / c}, g);
        CHECK(d.value < 1e-9);
        CHECK_FALSE(d.upper_bound);
    }
}

TEST_CASE("K = 1 factor distance matches a dense grid")
{
    Rng rng(14);
    const KroneckerShape s{3, 3, 2, 3, 1};
    for (int t = 0; t < 10; ++t) {
        const GroundTruth g =
            GroundTruth::from_factors(factorize(compose({gaussian_matrix(rng, 9, 1), gaussian_matrix(rng, 6, 1)}, s), s, 1), s);
        const double c = t % 2 == 0 ? 2.0 : -0.5;
        const FactorPair f{c * (g.factors.left + gaussian_matrix(rng, 9, 1, 0.2)),
                           (g.factors.right + gaussian_matrix(rng, 6, 1, 0.2)) / c};
        const double exact = factor_distance(f, g).value;
        // The minimizer sits near q = 1/c; one decade around it keeps the grid fine enough.
        const double centre = -std::log10(std::abs(c));
        const double grid = oracle::factor_distance_grid(f, g, 10000, centre - 0.5, centre + 0.5);
        CHECK(exact <= grid + 1e-12);
        CHECK(grid - exact <= 1e-6);
    }
}

TEST_CASE("K >= 2 factor distance is a flagged upper bound")
{
    Rng rng(15);
    const KroneckerShape s{3, 3, 3, 3, 2};
    const GroundTruth g = GroundTruth::from_theta(compose({gaussian_matrix(rng, 9, 2), gaussian_matrix(rng, 9, 2)}, s), s);
    const Matrix q = oracle::random_gl(rng, 2);
    const FactorDistance d = factor_distance({g.factors.left * q, g.factors.right * q.inverse().transpose()}, g);
    CHECK(d.upper_bound);
    CHECK(d.value < 1e-6);
    const FactorDistance far = factor_distance({g.factors.left + gaussian_matrix(rng, 9, 2), g.factors.right}, g);
    CHECK(far.value > 1e-3);
}

TEST_CASE("composed equality implies zero distance for K = 1")
{
    Rng rng(16);
    const KroneckerShape s{2, 2, 2, 2, 1};
    for (int t = 0; t < 20; ++t) {
        const FactorPair f{gaussian_matrix(rng, 4, 1), gaussian_matrix(rng, 4, 1)};
        const GroundTruth g = GroundTruth::from_theta(compose(f, s), s);
        CHECK(factor_distance(f, g).value < 1e-8);
    }
}

}
