#include "kronest/random.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kronest/error.hpp"

namespace kronest {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double draw_student_t(Rng& rng, double dof, double scale)
{
    if (!(dof > 0.0)) {
        throw ParameterError("student-t degrees of freedom must be positive");
    }
    const double z = rng.normal();
    const double v = rng.chi_square(dof);
    return scale * z / std::sqrt(v / dof);
}

void TailSpec::validate() const
{
    if (!(scale >= 0.0) || !std::isfinite(scale)) {
        throw ParameterError("tail scale must be finite and nonnegative");
    }
    if (family == TailFamily::student_t && !(dof > 1.0)) {
        throw ParameterError("student-t tail requires dof > 1");
    }
    if (family == TailFamily::truncated_t && (!(dof > 0.0) || !(clip > 0.0))) {
        throw ParameterError("truncated-t tail requires dof > 0 and clip > 0");
    }
}

double TailSpec::draw(Rng& rng) const
{
    switch (family) {
    case TailFamily::gaussian:
        return scale * rng.normal();
    case TailFamily::student_t:
        return draw_student_t(rng, dof, scale);
    case TailFamily::truncated_t:
        return scale * std::clamp(draw_student_t(rng, dof, 1.0), -clip, clip);
    }
    return 0.0;
}

std::string TailSpec::label() const
{
    std::ostringstream os;
    if (scale != 1.0) {
        os << scale;
    }
    switch (family) {
    case TailFamily::gaussian:
        os << "N";
        break;
    case TailFamily::student_t:
        os << "t" << dof;
        break;
    case TailFamily::truncated_t:
        os << "tbar" << dof << "[" << clip << "]";
        break;
    }
    return os.str();
}

} // namespace kronest
