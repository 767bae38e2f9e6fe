#include "kronest/generate.hpp"

#include <cmath>
#include <string>

#include "kronest/error.hpp"

namespace kronest {

namespace {

Matrix random_orthonormal(Index rows, Index cols, Rng& rng)
{
    Matrix g(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) {
            g(i, j) = rng.normal();
        }
    }
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
    // Fix signs so the result does not depend on QR sign conventions.
    const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (Index j = 0; j < cols; ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) *= -1.0;
        }
    }
    return q;
}

Vector sparse_gaussian_unit(Index dim, Index support, Rng& rng)
{
    Vector v = Vector::Zero(dim);
    for (Index i = 0; i < support; ++i) {
        v(i) = rng.normal();
    }
    const double norm = v.norm();
    if (norm == 0.0) {
        throw ParameterError("random_sparse truth drew an all-zero factor");
    }
    return v / norm;
}

} // namespace

void GeneratorConfig::validate() const
{
    shape.validate();
    predictor.validate();
    noise.validate();
    if (inactive_predictor) {
        inactive_predictor->validate();
    }
    if (truth.support < 1 || truth.support > std::min(shape.d1(), shape.d2())) {
        throw ConfigError("truth support " + std::to_string(truth.support) + " outside [1, min(d1, d2)]");
    }
    if (truth.recipe != TruthRecipe::orthonormal && shape.rank != 1) {
        throw ConfigError("only the orthonormal truth recipe supports rank > 1");
    }
    if (truth.recipe == TruthRecipe::orthonormal) {
        if (!(truth.kappa >= 1.0)) {
            throw ConfigError("kappa must be >= 1");
        }
        if (truth.support < shape.rank) {
            throw ConfigError("orthonormal truth needs support >= rank");
        }
    }
    if (truth.recipe == TruthRecipe::random_sparse && !(truth.sigma1 > 0.0)) {
        throw ConfigError("sigma1 must be positive");
    }
}

GroundTruth make_truth(const GeneratorConfig& config, Rng& rng)
{
    config.validate();
    const KroneckerShape& shape = config.shape;
    const TruthSpec& spec = config.truth;
    FactorPair f;
    f.left = Matrix::Zero(shape.d1(), shape.rank);
    f.right = Matrix::Zero(shape.d2(), shape.rank);
    switch (spec.recipe) {
    case TruthRecipe::ones:
        f.left.col(0).head(spec.support).setOnes();
        f.right.col(0).head(spec.support).setOnes();
        break;
    case TruthRecipe::constant:
        f.left.col(0).head(spec.support).setConstant(spec.value);
        f.right.col(0).head(spec.support).setConstant(spec.value);
        break;
    case TruthRecipe::orthonormal: {
        Vector s(shape.rank);
        for (Index k = 0; k < shape.rank; ++k) {
            s(k) = shape.rank == 1 ? 1.0
                                   : std::pow(spec.kappa, -static_cast<double>(k) / static_cast<double>(shape.rank - 1));
        }
        const Matrix root = s.cwiseSqrt().asDiagonal();
        f.left.topRows(spec.support) = random_orthonormal(spec.support, shape.rank, rng) * root;
        f.right.topRows(spec.support) = random_orthonormal(spec.support, shape.rank, rng) * root;
        break;
    }
    case TruthRecipe::random_sparse: {
        const double scale = std::sqrt(spec.sigma1);
        f.left.col(0) = scale * sparse_gaussian_unit(shape.d1(), spec.support, rng);
        f.right.col(0) = scale * sparse_gaussian_unit(shape.d2(), spec.support, rng);
        break;
    }
    }
    return GroundTruth::from_factors(std::move(f), shape);
}

Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> active_predictor_mask(const GeneratorConfig& config,
                                                                          const GroundTruth& truth)
{
    const KroneckerShape& s = config.shape;
    if (config.family != ModelFamily::bilinear) {
        return truth.theta.array() != 0.0;
    }
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask(s.q1, s.q2);
    mask.setConstant(false);
    for (Index j1 = 0; j1 < s.q1; ++j1) {
        for (Index j2 = 0; j2 < s.q2; ++j2) {
            bool a_col = false;
            bool b_col = false;
            for (Index k = 0; k < s.rank; ++k) {
                const Eigen::Map<const Matrix> a(truth.factors.left.col(k).data(), s.p1, s.q1);
                const Eigen::Map<const Matrix> b(truth.factors.right.col(k).data(), s.p2, s.q2);
                a_col = a_col || (a.col(j1).array() != 0.0).any();
                b_col = b_col || (b.col(j2).array() != 0.0).any();
            }
            mask(j1, j2) = a_col && b_col;
        }
    }
    return mask;
}

Dataset generate_dataset(const GeneratorConfig& config, const GroundTruth& truth, Index n, Rng& rng)
{
    config.validate();
    if (n < 1) {
        throw ConfigError("sample size must be positive");
    }
    const KroneckerShape& s = config.shape;
    const bool bilinear = config.family == ModelFamily::bilinear;
    const Index xr = bilinear ? s.q1 : s.rows();
    const Index xc = bilinear ? s.q2 : s.cols();
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
    if (config.inactive_predictor) {
        mask = active_predictor_mask(config, truth);
    }

    std::vector<Sample> samples(static_cast<std::size_t>(n));
    for (Sample& sample : samples) {
        sample.x.resize(xr, xc);
        for (Index j = 0; j < xc; ++j) {
            for (Index i = 0; i < xr; ++i) {
                const TailSpec& law = (config.inactive_predictor && !mask(i, j)) ? *config.inactive_predictor
                                                                                 : config.predictor;
                sample.x(i, j) = law.draw(rng);
            }
        }
        switch (config.family) {
        case ModelFamily::trace:
            sample.y = (sample.x.array() * truth.theta.array()).sum() + config.noise.draw(rng);
            break;
        case ModelFamily::logistic: {
            const double t = (sample.x.array() * truth.theta.array()).sum();
            sample.y = rng.uniform() < ModelOracle::link(t) ? 1.0 : 0.0;
            break;
        }
        case ModelFamily::bilinear: {
            sample.response = Matrix::Zero(s.p1, s.p2);
            for (Index k = 0; k < s.rank; ++k) {
                const Eigen::Map<const Matrix> a(truth.factors.left.col(k).data(), s.p1, s.q1);
                const Eigen::Map<const Matrix> b(truth.factors.right.col(k).data(), s.p2, s.q2);
                sample.response.noalias() += a * sample.x * b.transpose();
            }
            for (Index j = 0; j < s.p2; ++j) {
                for (Index i = 0; i < s.p1; ++i) {
                    sample.response(i, j) += config.noise.draw(rng);
                }
            }
            break;
        }
        }
    }
    return Dataset::from_samples(config.family, s, samples);
}

} // namespace kronest
