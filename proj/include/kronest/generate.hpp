#pragma once

#include <optional>

#include "kronest/models.hpp"
#include "kronest/random.hpp"

namespace kronest {

/// Ground-truth constructions used by the simulation studies.
///  ones:          L* = R* = (1, ..., 1, 0, ..., 0)^T with `support` ones (K = 1)
///  constant:      `support` leading entries of vec(A*), vec(B*) equal to `value` (K = 1)
///  orthonormal:   L* = (U^T, 0)^T S^{1/2}, R* = (V^T, 0)^T S^{1/2}, U, V random
///                 orthonormal support x K, S = diag(1, ..., 1/kappa) log-spaced
///  random_sparse: first `support` entries N(0, 1), rescaled to norm sqrt(sigma1) (K = 1)
enum class TruthRecipe { ones, constant, orthonormal, random_sparse };

struct TruthSpec {
    TruthRecipe recipe = TruthRecipe::ones;
    Index support = 1;
    double value = 1.0;  // constant
    double kappa = 1.0;  // orthonormal
    double sigma1 = 1.0; // random_sparse
};

struct GeneratorConfig {
    ModelFamily family = ModelFamily::trace;
    KroneckerShape shape;
    TruthSpec truth;
    TailSpec predictor = TailSpec::gaussian();
    /// When set, predictor entries that cannot affect the response are drawn
    /// from this law instead (heterogeneous design); active entries use `predictor`.
    std::optional<TailSpec> inactive_predictor;
    TailSpec noise = TailSpec::gaussian();

    void validate() const;
};

GroundTruth make_truth(const GeneratorConfig& config, Rng& rng);

/// Entries of the natural-layout predictor that influence the response:
/// nonzero entries of Theta* (scalar response) or X[j1, j2] with column j1 of
/// A* and column j2 of B* nonzero (bilinear).
Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> active_predictor_mask(const GeneratorConfig& config,
                                                                          const GroundTruth& truth);

/// n i.i.d. samples. Logistic responses are Bernoulli(g'(<X, Theta*>)); the
/// noise law is ignored for that family.
Dataset generate_dataset(const GeneratorConfig& config, const GroundTruth& truth, Index n, Rng& rng);

} // namespace kronest
