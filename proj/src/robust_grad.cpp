#include "kronest/robust_grad.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <omp.h>

#include "kronest/error.hpp"

namespace kronest {

namespace {

struct SymmetricRoots {
    Matrix root;
    Matrix inv_root;
};

SymmetricRoots gram_roots(const Matrix& m, bool need_inverse)
{
    const Matrix gram = m.transpose() * m;
    if (gram.rows() == 1) {
        const double g = gram(0, 0);
        if (need_inverse && !(g > singularity_floor(gram))) {
            throw NearSingularGram("Gram matrix is singular (value " + std::to_string(g) + ")");
        }
        const double r = std::sqrt(std::max(g, 0.0));
        return {Matrix::Constant(1, 1, r), Matrix::Constant(1, 1, need_inverse ? 1.0 / r : 0.0)};
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const Vector& lambda = eig.eigenvalues();
    const Matrix& v = eig.eigenvectors();
    if (need_inverse && !(lambda.minCoeff() > singularity_floor(gram))) {
        std::ostringstream os;
        os << "Gram matrix is near singular (min eigenvalue " << lambda.minCoeff() << ", floor "
           << singularity_floor(gram) << ")";
        throw NearSingularGram(os.str());
    }
    SymmetricRoots roots;
    roots.root = v * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal() * v.transpose();
    if (need_inverse) {
        roots.inv_root = v * lambda.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    }
    return roots;
}

struct Partial {
    Matrix left;
    Matrix right;
};

void accumulate_range(const ModelOracle& oracle, const Dataset& data, const FactorPair& f, const ContractionSpec& spec,
                      Index begin, Index end, Partial& acc, ContractionWorkspace& ws, Matrix& left_i, Matrix& right_i)
{
    for (Index i = begin; i < end; ++i) {
        contract_gradient(oracle, data, i, f, spec.left_post, spec.right_post, spec.residual_clip, left_i, right_i, ws);
        if (spec.truncation.active()) {
            truncate_in_place(left_i, spec.truncation);
            truncate_in_place(right_i, spec.truncation);
        }
        acc.left += left_i;
        acc.right += right_i;
    }
}

GradientPair serial_reference(const ModelOracle& oracle, const Dataset& data, const FactorPair& f,
                              const ContractionSpec& spec)
{
    Partial acc{Matrix::Zero(f.left.rows(), f.rank()), Matrix::Zero(f.right.rows(), f.rank())};
    ContractionWorkspace ws;
    Matrix left_i;
    Matrix right_i;
    accumulate_range(oracle, data, f, spec, 0, data.size(), acc, ws, left_i, right_i);
    const double n = static_cast<double>(data.size());
    return {acc.left / n, acc.right / n};
}

GradientPair blocked_parallel(const ModelOracle& oracle, const Dataset& data, const FactorPair& f,
                              const ContractionSpec& spec)
{
    const Index n = data.size();
    const Index blocks = (n + kReductionBlock - 1) / kReductionBlock;
    std::vector<Partial> partial(static_cast<std::size_t>(blocks));

#pragma omp parallel if (blocks > 1 && !omp_in_parallel())
    {
        ContractionWorkspace ws;
        Matrix left_i;
        Matrix right_i;
#pragma omp for schedule(static)
        for (Index b = 0; b < blocks; ++b) {
            Partial& acc = partial[static_cast<std::size_t>(b)];
            acc.left = Matrix::Zero(f.left.rows(), f.rank());
            acc.right = Matrix::Zero(f.right.rows(), f.rank());
            accumulate_range(oracle, data, f, spec, b * kReductionBlock, std::min(n, (b + 1) * kReductionBlock), acc,
                             ws, left_i, right_i);
        }
    }

    // Pairwise tree over block index: stride 1, 2, 4, ...
    for (std::size_t stride = 1; stride < partial.size(); stride *= 2) {
        for (std::size_t b = 0; b + stride < partial.size(); b += 2 * stride) {
            partial[b].left += partial[b + stride].left;
            partial[b].right += partial[b + stride].right;
        }
    }
    const double scale = static_cast<double>(n);
    return {partial[0].left / scale, partial[0].right / scale};
}

} // namespace

Truncation Truncation::at(double tau)
{
    if (!(tau > 0.0)) {
        throw ParameterError("truncation level must be positive");
    }
    return {tau};
}

Matrix truncate(const Matrix& m, Truncation t)
{
    Matrix out = m;
    truncate_in_place(out, t);
    return out;
}

void truncate_in_place(Matrix& m, Truncation t)
{
    if (t.active()) {
        m = m.cwiseMax(-t.tau).cwiseMin(t.tau);
    }
}

double singularity_floor(const Matrix& gram) { return 1e-10 * gram.trace() / static_cast<double>(gram.rows()); }

Matrix gram_inv_sqrt(const Matrix& m) { return gram_roots(m, true).inv_root; }

Matrix gram_sqrt(const Matrix& m) { return gram_roots(m, false).root; }

GradientPair average_gradient_terms(const ModelOracle& oracle, const Dataset& data, const FactorPair& f,
                                    const ContractionSpec& spec, Execution exec)
{
    if (data.size() == 0) {
        throw ParameterError("gradient of an empty batch");
    }
    if (!f.conforms(data.shape)) {
        throw ShapeError("factors do not conform to the dataset shape");
    }
    if (exec == Execution::serial_reference) {
        return serial_reference(oracle, data, f, spec);
    }
    return blocked_parallel(oracle, data, f, spec);
}

GradientPair robust_gradient_pair(const ModelOracle& oracle, const FactorPair& f, const Dataset& batch,
                                  Truncation trunc, Execution exec)
{
    ContractionSpec spec;
    spec.left_post = gram_inv_sqrt(f.right);
    spec.right_post = gram_inv_sqrt(f.left);
    spec.truncation = trunc;
    return average_gradient_terms(oracle, batch, f, spec, exec);
}

} // namespace kronest
