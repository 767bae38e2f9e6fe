#include <cmath>
#include <sstream>

#include "json.hpp"

#include "kronest/io.hpp"
#include "kronest/simlab.hpp"

namespace kronest {

namespace {

using nlohmann::ordered_json;

// JSON has no NaN; missing values become null.
ordered_json number(double v)
{
    if (!std::isfinite(v)) {
        return nullptr;
    }
    return v;
}

std::string csv_number(double v) { return std::isnan(v) ? std::string("nan") : format_double(v); }

} // namespace

std::string records_to_csv(const ExperimentReport& report)
{
    std::ostringstream os;
    os << "experiment,method,model,eps,kappa,n,rep,seed,rel_error,iters,status,wall_ms\n";
    for (const Record& r : report.records) {
        os << r.experiment << ',' << to_string(r.method) << ',' << to_string(r.model) << ',' << format_double(r.eps)
           << ',' << format_double(r.kappa) << ',' << r.n << ',' << r.rep << ',' << r.seed << ','
           << csv_number(r.rel_error) << ',' << r.iters << ',' << r.status << ',' << format_double(r.wall_ms) << '\n';
    }
    return os.str();
}

std::string trajectories_to_csv(const ExperimentReport& report)
{
    std::ostringstream os;
    os << "experiment,method,kappa,iteration,mean_rel_error,reps\n";
    for (const TrajectoryRow& t : report.trajectories) {
        os << t.experiment << ',' << to_string(t.method) << ',' << format_double(t.kappa) << ',' << t.iteration << ','
           << format_double(t.mean_rel_error) << ',' << t.reps << '\n';
    }
    return os.str();
}

std::string summary_to_json(const ExperimentReport& report)
{
    ordered_json j;
    j["experiment"] = report.name;
    j["kind"] = std::string(to_string(report.kind));
    j["records"] = report.records.size();
    std::size_t failed = 0;
    for (const Record& r : report.records) {
        failed += r.ok() ? 0 : 1;
    }
    j["failures"] = failed;

    ordered_json cells = ordered_json::array();
    for (const Summary& s : report.summaries) {
        cells.push_back({{"experiment", s.experiment},
                         {"method", std::string(to_string(s.method))},
                         {"eps", s.eps},
                         {"kappa", s.kappa},
                         {"n", s.n},
                         {"count", s.count},
                         {"failures", s.failures},
                         {"mean", number(s.mean)},
                         {"median", number(s.median)},
                         {"q1", number(s.q1)},
                         {"q3", number(s.q3)},
                         {"median_ci95", {number(s.median_ci_lo), number(s.median_ci_hi)}}});
    }
    j["cells"] = std::move(cells);

    ordered_json slopes = ordered_json::array();
    for (const SlopeRow& s : report.slopes) {
        slopes.push_back({{"method", std::string(to_string(s.method))},
                          {"eps", s.eps},
                          {"theory", s.theory},
                          {"slope", number(s.fit.slope)},
                          {"intercept", number(s.fit.intercept)},
                          {"stderr", number(s.fit.stderr_slope)}});
    }
    j["slopes"] = std::move(slopes);

    if (!report.pilot_tau.empty()) {
        ordered_json taus = ordered_json::object();
        for (const auto& [key, tau] : report.pilot_tau) {
            taus[key] = number(tau);
        }
        j["pilot_tau"] = std::move(taus);
    }
    return j.dump(2) + "\n";
}

} // namespace kronest
