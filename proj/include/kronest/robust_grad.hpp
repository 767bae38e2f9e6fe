#pragma once

#include <limits>

#include "kronest/models.hpp"

namespace kronest {

/// Element-wise truncation level. An infinite tau disables truncation.
struct Truncation {
    double tau = std::numeric_limits<double>::infinity();

    static Truncation none() { return {}; }
    static Truncation at(double tau);
    bool active() const noexcept { return tau < std::numeric_limits<double>::infinity(); }
};

/// sgn(m) * min(|m|, tau), element-wise.
Matrix truncate(const Matrix& m, Truncation t);
void truncate_in_place(Matrix& m, Truncation t);

/// Floor below which the smallest Gram eigenvalue counts as singular:
/// 1e-10 * trace(G) / K.
double singularity_floor(const Matrix& gram);

/// (m^T m)^{-1/2} by symmetric eigendecomposition. Throws NearSingularGram.
Matrix gram_inv_sqrt(const Matrix& m);
/// (m^T m)^{1/2}.
Matrix gram_sqrt(const Matrix& m);

/// How the per-sample terms are accumulated.
///  serial_reference: one plain loop in sample order (kept for testing).
///  parallel:         fixed-size sample blocks summed by an OpenMP team, block
///                    partials combined by a pairwise tree in block order, so the
///                    result is bit-identical for any thread count.
enum class Execution { serial_reference, parallel };

struct GradientPair {
    Matrix left;  // d1 x K
    Matrix right; // d2 x K
};

/// Per-sample transform applied before averaging:
///   left_i  = T((G_i R) * left_post, tau)
///   right_i = T((G_i^T L) * right_post, tau)
/// with residuals clipped at residual_clip inside G_i.
struct ContractionSpec {
    Matrix left_post;
    Matrix right_post;
    double residual_clip = std::numeric_limits<double>::infinity();
    Truncation truncation;
};

GradientPair average_gradient_terms(const ModelOracle& oracle, const Dataset& data, const FactorPair& f,
                                    const ContractionSpec& spec, Execution exec = Execution::parallel);

/// De-scaled truncated gradient pair (G_L, G_R):
///   G_L = n^-1 sum_i T(G_i R (R^T R)^{-1/2}, tau)
///   G_R = n^-1 sum_i T(G_i^T L (L^T L)^{-1/2}, tau)
GradientPair robust_gradient_pair(const ModelOracle& oracle, const FactorPair& f, const Dataset& batch,
                                  Truncation trunc, Execution exec = Execution::parallel);

/// Samples per block in the parallel reduction.
inline constexpr Index kReductionBlock = 64;

} // namespace kronest
