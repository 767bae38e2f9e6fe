// kronest: run simulation experiments, generate synthetic data, fit datasets.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include <spdlog/spdlog.h>

#include "kronest/config.hpp"
#include "kronest/error.hpp"
#include "kronest/generate.hpp"
#include "kronest/init.hpp"
#include "kronest/io.hpp"
#include "kronest/log.hpp"
#include "kronest/optimizer.hpp"
#include "kronest/simlab.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace kronest;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitFailed = 3;

struct ShapeFlags {
    std::string model = "trace";
    Index p1 = 0, q1 = 0, p2 = 0, q2 = 0, rank = 1;
    std::optional<Index> sl, sr;

    void add(CLI::App* cmd)
    {
        cmd->add_option("--model", model, "trace | logistic | bilinear")->capture_default_str();
        cmd->add_option("--p1", p1)->required();
        cmd->add_option("--q1", q1)->required();
        cmd->add_option("--p2", p2)->required();
        cmd->add_option("--q2", q2)->required();
        cmd->add_option("--rank", rank)->capture_default_str();
        cmd->add_option("--sl", sl, "row sparsity of the left factor (default: no thresholding)");
        cmd->add_option("--sr", sr, "row sparsity of the right factor");
    }

    KroneckerShape shape() const
    {
        KroneckerShape s{p1, q1, p2, q2, rank};
        s.validate();
        return s;
    }

    std::optional<SparsityLevels> levels() const
    {
        if (!sl && !sr) {
            return std::nullopt;
        }
        const KroneckerShape s = shape();
        SparsityLevels l{sl.value_or(s.d1()), sr.value_or(s.d2())};
        l.validate(s);
        return l;
    }
};

struct FitFlags {
    std::string data;
    std::optional<double> tau;
    double eta = 0.01;
    int iters = 500;
    std::string method = "SRGD";
    int cv_tau = 0;
    int folds = 5;
    std::optional<double> tau_x, tau_yx, radius;
    int trajectory_every = 10;

    void add(CLI::App* cmd)
    {
        cmd->add_option("--data", data, "dataset CSV")->required();
        cmd->add_option("--tau", tau, "truncation level (default sqrt(n / log d))");
        cmd->add_option("--eta", eta)->capture_default_str();
        cmd->add_option("--iters", iters)->capture_default_str();
        cmd->add_option("--method", method, "SRGD | ScGD | RGD | HuberGD")->capture_default_str();
        cmd->add_option("--tau-x", tau_x, "predictor covariance truncation (default sqrt(n / log m))");
        cmd->add_option("--tau-yx", tau_yx, "cross covariance truncation (default sqrt(n / log m))");
        cmd->add_option("--radius", radius, "Dantzig radius / Lasso penalty (default 0.1 sqrt(log m / n))");
        cmd->add_option("--folds", folds)->capture_default_str();
        cmd->add_option("--trajectory-every", trajectory_every)->capture_default_str();
    }
};

ordered_json matrix_json(const Matrix& m)
{
    ordered_json rows = ordered_json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j)
{
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw DataError("expected a nested numeric array");
    }
    Matrix m(static_cast<Index>(j.size()), static_cast<Index>(j[0].size()));
    for (Index i = 0; i < m.rows(); ++i) {
        if (j[static_cast<std::size_t>(i)].size() != static_cast<std::size_t>(m.cols())) {
            throw DataError("ragged matrix in JSON");
        }
        for (Index k = 0; k < m.cols(); ++k) {
            m(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
        }
    }
    return m;
}

int run_experiment_cmd(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                       const std::optional<int>& workers, const std::optional<std::string>& out,
                       const std::optional<int>& reps, bool timing)
{
    RunConfig rc = load_run_config(config_path);
    if (seed) {
        rc.spec.seed = *seed;
    }
    if (workers) {
        rc.workers = *workers;
    }
    if (out) {
        rc.out = *out;
    }
    if (reps) {
        rc.spec.replications = *reps;
    }
    rc.timing = rc.timing || timing;
    if (rc.workers < 1) {
        throw ConfigError("--workers must be >= 1");
    }
    rc.spec.validate();

    const fs::path dir = rc.out;
    RunOptions opts;
    opts.workers = rc.workers;
    opts.timing = rc.timing;
    opts.progress = [](std::size_t done, std::size_t total) { spdlog::info("completed {}/{}", done, total); };
    write_file_atomic(dir / "config.resolved.json", run_config_to_json(rc));
    const ExperimentReport report = run_experiment(rc.spec, opts);
    write_file_atomic(dir / "records.csv", records_to_csv(report));
    write_file_atomic(dir / "summary.json", summary_to_json(report));
    if (!report.trajectories.empty()) {
        write_file_atomic(dir / "trajectories.csv", trajectories_to_csv(report));
    }
    std::size_t failed = 0;
    for (const Record& r : report.records) {
        failed += r.ok() ? 0 : 1;
    }
    std::cout << report.name << ": " << report.records.size() << " records (" << failed << " failed) -> "
              << dir.string() << "\n";
    for (const SlopeRow& s : report.slopes) {
        std::cout << "  " << to_string(s.method) << " eps=" << s.eps << " slope=" << s.fit.slope << " (theory "
                  << s.theory << ", stderr " << s.fit.stderr_slope << ")\n";
    }
    return kExitOk;
}

struct GenerateFlags {
    ShapeFlags shape;
    Index n = 100;
    std::uint64_t seed = 1;
    std::string out;
    std::string truth = "ones";
    Index support = 1;
    double value = 1.0;
    double kappa = 1.0;
    double sigma1 = 1.0;
    std::string x = "N";
    std::string xbar;
    std::string noise = "N";
    bool zero_noise = false;
};

int run_generate_cmd(const GenerateFlags& g)
{
    GeneratorConfig cfg;
    cfg.family = parse_model_family(g.shape.model);
    cfg.shape = g.shape.shape();
    const std::string recipe = g.truth;
    if (recipe == "ones") {
        cfg.truth.recipe = TruthRecipe::ones;
    } else if (recipe == "constant") {
        cfg.truth.recipe = TruthRecipe::constant;
    } else if (recipe == "orthonormal") {
        cfg.truth.recipe = TruthRecipe::orthonormal;
    } else if (recipe == "random_sparse") {
        cfg.truth.recipe = TruthRecipe::random_sparse;
    } else {
        throw ConfigError("unknown --truth '" + recipe + "'");
    }
    cfg.truth.support = g.support;
    cfg.truth.value = g.value;
    cfg.truth.kappa = g.kappa;
    cfg.truth.sigma1 = g.sigma1;
    cfg.predictor = parse_tail_spec(g.x);
    if (!g.xbar.empty()) {
        cfg.inactive_predictor = parse_tail_spec(g.xbar);
    }
    cfg.noise = g.zero_noise ? TailSpec::gaussian(0.0) : parse_tail_spec(g.noise);
    if (g.n < 1) {
        throw ConfigError("--n must be >= 1");
    }
    cfg.validate();

    Rng rng(g.seed);
    const GroundTruth truth = make_truth(cfg, rng);
    const Dataset data = generate_dataset(cfg, truth, g.n, rng);

    ordered_json side;
    side["model"] = std::string(to_string(cfg.family));
    side["shape"] = {{"p1", cfg.shape.p1}, {"q1", cfg.shape.q1}, {"p2", cfg.shape.p2}, {"q2", cfg.shape.q2},
                     {"rank", cfg.shape.rank}};
    side["seed"] = g.seed;
    side["n"] = g.n;
    side["theta"] = matrix_json(truth.theta);
    side["left"] = matrix_json(truth.factors.left);
    side["right"] = matrix_json(truth.factors.right);
    side["sigma"] = std::vector<double>(truth.sigma.data(), truth.sigma.data() + truth.sigma.size());
    side["left_support"] = truth.left_support;
    side["right_support"] = truth.right_support;

    const fs::path out = g.out;
    write_file_atomic(out, dataset_to_csv(data));
    fs::path sidecar = out;
    sidecar += ".truth.json";
    write_file_atomic(sidecar, side.dump(2) + "\n");
    std::cout << "wrote " << g.n << " samples to " << out.string() << " and truth to " << sidecar.string() << "\n";
    return kExitOk;
}

struct FitContext {
    Dataset data;
    InitConfig init;
    InitResult init_result;
    OptimizerConfig opt;
    double tau0 = 0.0;
};

FitContext prepare_fit(const ShapeFlags& sf, const FitFlags& ff)
{
    FitContext c;
    const KroneckerShape shape = sf.shape();
    const ModelFamily family = parse_model_family(sf.model);
    c.data = read_dataset_csv(ff.data, family, shape);
    const Index n = c.data.size();
    if (n < 2) {
        throw DataError("need at least 2 samples");
    }
    const auto m = std::max<Index>(c.data.design().rows(), 2);
    const double root = std::sqrt(static_cast<double>(n) / std::log(static_cast<double>(m)));
    c.init.tau_x = ff.tau_x.value_or(root);
    c.init.tau_yx = ff.tau_yx.value_or(root);
    c.init.radius = ff.radius.value_or(0.1 / root);
    c.init.validate();

    c.tau0 = sqrt_n_over_log_d(n, std::max<Index>(std::max(shape.d1(), shape.d2()), 2));
    c.opt.eta = ff.eta;
    c.opt.iterations = ff.iters;
    c.opt.method = parse_method(ff.method);
    c.opt.levels = sf.levels();
    c.opt.trunc = Truncation::at(ff.tau.value_or(c.tau0));
    c.opt.trajectory_every = ff.trajectory_every;
    c.opt.validate();

    c.init_result = robust_initialize(c.data, c.init, c.opt.levels.value_or(SparsityLevels::full(shape)));
    return c;
}

ordered_json cv_json(const CvResult& cv, int folds)
{
    ordered_json table = ordered_json::array();
    for (const CvRow& r : cv.table) {
        ordered_json row = {{"tau", r.tau}, {"mean_loss", nullptr}, {"failed", r.failed}};
        if (!r.failed && std::isfinite(r.mean_loss)) {
            row["mean_loss"] = r.mean_loss;
        }
        if (r.failed) {
            row["reason"] = r.reason;
        }
        table.push_back(std::move(row));
    }
    return {{"folds", folds}, {"chosen_tau", cv.tau}, {"table", table}};
}

int run_fit_cmd(const ShapeFlags& sf, const FitFlags& ff, const std::string& out_dir, const std::string& truth_path)
{
    FitContext c = prepare_fit(sf, ff);
    ordered_json report;
    report["model"] = sf.model;
    report["n"] = c.data.size();
    report["init"] = {{"tau_x", c.init.tau_x},
                      {"tau_yx", c.init.tau_yx},
                      {"radius", c.init.radius},
                      {"status", std::string(to_string(c.init_result.status))},
                      {"iterations", c.init_result.iterations}};
    if (ff.cv_tau > 0) {
        const CvResult cv = cross_validate_tau(log_grid(0.05 * c.tau0, 20.0 * c.tau0, ff.cv_tau), ff.folds,
                                               c.init_result.factors, c.data, c.opt);
        c.opt.trunc = Truncation::at(cv.tau);
        report["cv"] = cv_json(cv, ff.folds);
    }
    std::optional<Matrix> truth;
    if (!truth_path.empty()) {
        const auto j = nlohmann::json::parse(read_file(truth_path));
        truth = matrix_from_json(j.at("theta"));
    }
    const FitResult fr = fit(c.init_result.factors, c.data, c.opt, truth ? &*truth : nullptr);

    report["method"] = std::string(to_string(c.opt.method));
    report["tau"] = c.opt.trunc.tau;
    report["eta"] = c.opt.eta;
    report["status"] = std::string(to_string(fr.status));
    if (!fr.ok()) {
        report["reason"] = fr.reason;
    }
    report["iterations"] = fr.iterations;
    if (truth) {
        report["rel_error"] = relative_error(fr.theta, *truth);
    }
    ordered_json traj = ordered_json::array();
    for (const TrajectoryPoint& p : fr.trajectory) {
        ordered_json pt = {{"iteration", p.iteration}, {"loss", p.loss}};
        if (p.rel_error) {
            pt["rel_error"] = *p.rel_error;
        }
        traj.push_back(std::move(pt));
    }
    report["trajectory"] = traj;

    const fs::path dir = out_dir;
    write_file_atomic(dir / "theta.csv", matrix_to_csv(fr.theta));
    write_file_atomic(dir / "left.csv", matrix_to_csv(fr.factors.left));
    write_file_atomic(dir / "right.csv", matrix_to_csv(fr.factors.right));
    write_file_atomic(dir / "fit.json", report.dump(2) + "\n");
    if (!fr.ok()) {
        std::cerr << "error: fit failed: " << fr.reason << "\n";
        return kExitFailed;
    }
    std::cout << "status " << to_string(fr.status) << " after " << fr.iterations << " iterations";
    if (truth) {
        std::cout << ", relative error " << relative_error(fr.theta, *truth);
    }
    std::cout << "\n";
    return kExitOk;
}

int run_cv_cmd(const ShapeFlags& sf, FitFlags ff, const std::string& out_path, int points)
{
    if (points < 1) {
        throw ConfigError("--points must be >= 1");
    }
    FitContext c = prepare_fit(sf, ff);
    const CvResult cv =
        cross_validate_tau(log_grid(0.05 * c.tau0, 20.0 * c.tau0, points), ff.folds, c.init_result.factors, c.data, c.opt);
    const ordered_json j = cv_json(cv, ff.folds);
    if (!out_path.empty()) {
        write_file_atomic(out_path, j.dump(2) + "\n");
    }
    std::cout << "tau " << format_double(cv.tau) << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    init_logging();
    CLI::App app{"Robust estimation of Kronecker-structured matrices"};
    app.require_subcommand(1);

    auto* exp = app.add_subcommand("experiment", "run a simulation experiment from a JSON config");
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
    std::optional<int> reps;
    bool timing = false;
    exp->add_option("--config", config_path)->required();
    exp->add_option("--seed", seed);
    exp->add_option("--workers", workers);
    exp->add_option("--out", out);
    exp->add_option("--reps", reps);
    exp->add_flag("--timing", timing, "record wall time per fit (makes output nondeterministic)");

    auto* gen = app.add_subcommand("generate", "write a synthetic dataset CSV and a truth sidecar");
    GenerateFlags gf;
    gf.shape.add(gen);
    gen->add_option("--n", gf.n)->capture_default_str();
    gen->add_option("--seed", gf.seed)->capture_default_str();
    gen->add_option("--out", gf.out)->required();
    gen->add_option("--truth", gf.truth, "ones | constant | orthonormal | random_sparse")->capture_default_str();
    gen->add_option("--support", gf.support)->capture_default_str();
    gen->add_option("--value", gf.value)->capture_default_str();
    gen->add_option("--kappa", gf.kappa)->capture_default_str();
    gen->add_option("--sigma1", gf.sigma1)->capture_default_str();
    gen->add_option("--x", gf.x, "predictor law, e.g. N, t2.5")->capture_default_str();
    gen->add_option("--xbar", gf.xbar, "law of inactive predictor entries, e.g. tbar1.1[100]");
    gen->add_option("--noise", gf.noise, "noise law, e.g. 0.1t1.5")->capture_default_str();
    gen->add_flag("--zero-noise", gf.zero_noise);

    auto* fitc = app.add_subcommand("fit", "robust initialization followed by SRGD-SHT on a dataset CSV");
    ShapeFlags fit_shape;
    FitFlags fit_flags;
    std::string fit_out = "fit_out";
    std::string truth_path;
    fit_shape.add(fitc);
    fit_flags.add(fitc);
    fitc->add_option("--out", fit_out)->capture_default_str();
    fitc->add_option("--cv-tau", fit_flags.cv_tau, "choose tau by CV over an N-point log grid");
    fitc->add_option("--truth", truth_path, "truth sidecar JSON, to report the relative error");

    auto* cvc = app.add_subcommand("cv-tau", "cross-validate the truncation level on a dataset CSV");
    ShapeFlags cv_shape;
    FitFlags cv_flags;
    std::string cv_out;
    int cv_points = 8;
    cv_shape.add(cvc);
    cv_flags.add(cvc);
    cvc->add_option("--points", cv_points)->capture_default_str();
    cvc->add_option("--out", cv_out, "write the CV table as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    try {
        if (*exp) {
            return run_experiment_cmd(config_path, seed, workers, out, reps, timing);
        }
        if (*gen) {
            return run_generate_cmd(gf);
        }
        if (*fitc) {
            return run_fit_cmd(fit_shape, fit_flags, fit_out, truth_path);
        }
        if (*cvc) {
            return run_cv_cmd(cv_shape, cv_flags, cv_out, cv_points);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailed;
    }
    return kExitInvalid;
}
