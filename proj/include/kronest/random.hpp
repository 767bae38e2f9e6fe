#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace kronest {

/// Seeded random stream. All draws go through the wrapped distributions so the
/// sequence is a pure function of the seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
    double chi_square(double dof) { return 2.0 * gamma(0.5 * dof); }
    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// scale * Z / sqrt(V / dof), Z standard normal and V chi-square(dof).
double draw_student_t(Rng& rng, double dof, double scale = 1.0);

enum class TailFamily { gaussian, student_t, truncated_t };

struct TailSpec {
    TailFamily family = TailFamily::gaussian;
    double dof = 0.0;   // student_t / truncated_t
    double clip = 0.0;  // truncated_t: draws clamped to [-clip, clip]
    double scale = 1.0;

    static TailSpec gaussian(double scale = 1.0) { return {TailFamily::gaussian, 0.0, 0.0, scale}; }
    static TailSpec student_t(double dof, double scale = 1.0) { return {TailFamily::student_t, dof, 0.0, scale}; }
    static TailSpec truncated_t(double dof, double clip, double scale = 1.0)
    {
        return {TailFamily::truncated_t, dof, clip, scale};
    }

    void validate() const;
    double draw(Rng& rng) const;
    /// Compact label such as "t1.5" or "0.1t2.1" or "N" used in report cell names.
    std::string label() const;
};

} // namespace kronest
