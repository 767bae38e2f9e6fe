#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"

#include "kronest/config.hpp"
#include "kronest/error.hpp"
#include "kronest/io.hpp"

namespace kronest {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Read-side view of one JSON object that remembers which keys were consumed.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) {
            throw ConfigError(where() + " must be an object");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const json& raw(const std::string& key)
    {
        used_.insert(key);
        if (!j_.contains(key)) {
            throw ConfigError("missing key " + child(key));
        }
        return j_.at(key);
    }

    template <class T>
    T get(const std::string& key)
    {
        const json& v = raw(key);
        try {
            return v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(child(key) + " has the wrong type");
        }
    }

    template <class T>
    T get(const std::string& key, T fallback)
    {
        used_.insert(key);
        return has(key) ? get<T>(key) : fallback;
    }

    Obj sub(const std::string& key) { return Obj(raw(key), child(key)); }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string where() const { return path_.empty() ? "config" : path_; }

    void finish() const
    {
        for (const auto& item : j_.items()) {
            if (!used_.contains(item.key())) {
                throw ConfigError("unknown key " + child(item.key()));
            }
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

double parse_double(std::string_view s, std::string_view whole)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw ConfigError("cannot parse tail spec '" + std::string(whole) + "'");
    }
    return v;
}

TailSpec tail_from_json(const json& j, const std::string& path)
{
    if (j.is_string()) {
        try {
            return parse_tail_spec(j.get<std::string>());
        } catch (const ConfigError& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }
    Obj o(j, path);
    const auto family = o.get<std::string>("family");
    TailSpec t;
    if (family == "gaussian") {
        t = TailSpec::gaussian(o.get<double>("scale", 1.0));
    } else if (family == "student_t") {
        t = TailSpec::student_t(o.get<double>("dof"), o.get<double>("scale", 1.0));
    } else if (family == "truncated_t") {
        t = TailSpec::truncated_t(o.get<double>("dof"), o.get<double>("clip"), o.get<double>("scale", 1.0));
    } else {
        throw ConfigError(o.child("family") + ": unknown family '" + family + "'");
    }
    o.finish();
    try {
        t.validate();
    } catch (const Error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return t;
}

ordered_json tail_to_json(const TailSpec& t)
{
    switch (t.family) {
    case TailFamily::gaussian:
        return {{"family", "gaussian"}, {"scale", t.scale}};
    case TailFamily::student_t:
        return {{"family", "student_t"}, {"dof", t.dof}, {"scale", t.scale}};
    case TailFamily::truncated_t:
        return {{"family", "truncated_t"}, {"dof", t.dof}, {"clip", t.clip}, {"scale", t.scale}};
    }
    return nullptr;
}

std::vector<TailSpec> tails(Obj& o, const std::string& key)
{
    std::vector<TailSpec> out;
    if (!o.has(key)) {
        o.get<json>(key, json());
        return out;
    }
    const json& arr = o.raw(key);
    if (!arr.is_array()) {
        throw ConfigError(o.child(key) + " must be an array");
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
        out.push_back(tail_from_json(arr[i], o.child(key) + "[" + std::to_string(i) + "]"));
    }
    return out;
}

TruthRecipe parse_recipe(const std::string& s, const std::string& path)
{
    if (s == "ones") {
        return TruthRecipe::ones;
    }
    if (s == "constant") {
        return TruthRecipe::constant;
    }
    if (s == "orthonormal") {
        return TruthRecipe::orthonormal;
    }
    if (s == "random_sparse") {
        return TruthRecipe::random_sparse;
    }
    throw ConfigError(path + ": unknown truth recipe '" + s + "'");
}

std::string recipe_name(TruthRecipe r)
{
    switch (r) {
    case TruthRecipe::ones:
        return "ones";
    case TruthRecipe::constant:
        return "constant";
    case TruthRecipe::orthonormal:
        return "orthonormal";
    case TruthRecipe::random_sparse:
        return "random_sparse";
    }
    return "ones";
}

template <class F>
auto wrap(const std::string& path, F&& f)
{
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

ExperimentSpec parse_spec(Obj& o)
{
    ExperimentSpec s;
    s.name = o.get<std::string>("name");
    s.kind = wrap(o.child("kind"), [&] { return parse_experiment_kind(o.get<std::string>("kind")); });
    s.family = wrap(o.child("model"), [&] { return parse_model_family(o.get<std::string>("model")); });
    {
        Obj sh = o.sub("shape");
        s.shape.p1 = sh.get<Index>("p1");
        s.shape.q1 = sh.get<Index>("q1");
        s.shape.p2 = sh.get<Index>("p2");
        s.shape.q2 = sh.get<Index>("q2");
        s.shape.rank = sh.get<Index>("rank", 1);
        sh.finish();
    }
    {
        Obj t = o.sub("truth");
        s.truth.recipe = parse_recipe(t.get<std::string>("recipe"), t.child("recipe"));
        s.truth.support = t.get<Index>("support");
        s.truth.value = t.get<double>("value", 1.0);
        s.truth.kappa = t.get<double>("kappa", 1.0);
        s.truth.sigma1 = t.get<double>("sigma1", 1.0);
        t.finish();
    }
    s.eps = o.get<std::vector<double>>("eps", {});
    s.noise_scale = o.get<double>("noise_scale", 1.0);
    s.n = o.get<std::vector<Index>>("n");
    s.kappa = o.get<std::vector<double>>("kappa", {s.truth.kappa});
    s.predictors = tails(o, "predictors");
    s.inactive_predictors = tails(o, "inactive_predictors");
    s.noises = tails(o, "noises");
    for (const auto& m : o.get<std::vector<std::string>>("methods")) {
        s.methods.push_back(wrap(o.child("methods"), [&] { return parse_method(m); }));
    }
    s.replications = o.get<int>("replications");
    s.seed = o.get<std::uint64_t>("seed", 1);
    if (o.has("levels")) {
        Obj l = o.sub("levels");
        s.levels = SparsityLevels{l.get<Index>("left"), l.get<Index>("right")};
        l.finish();
    } else {
        o.get<json>("levels", json());
    }
    if (o.has("schedules")) {
        s.schedules.clear();
        const json& arr = o.raw("schedules");
        if (!arr.is_array()) {
            throw ConfigError(o.child("schedules") + " must be an array");
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Obj so(arr[i], o.child("schedules") + "[" + std::to_string(i) + "]");
            s.schedules.push_back(Schedule{so.get<double>("eta"), so.get<int>("iterations")});
            so.finish();
        }
    } else {
        o.get<json>("schedules", json());
    }
    s.trajectory_every = o.get<int>("trajectory_every", 0);
    if (o.has("tau")) {
        Obj t = o.sub("tau");
        const auto base = t.get<std::string>("base", "sqrt_n_log_d");
        if (base == "power") {
            s.tau.base = TauBase::power;
        } else if (base == "sqrt_n_log_d") {
            s.tau.base = TauBase::sqrt_n_log_d;
        } else {
            throw ConfigError(t.child("base") + ": expected power or sqrt_n_log_d");
        }
        s.tau.constant = t.get<double>("constant", 1.0);
        const auto mode = t.get<std::string>("mode", "fixed");
        if (mode == "fixed") {
            s.tau.mode = TauMode::fixed;
        } else if (mode == "cv") {
            s.tau.mode = TauMode::cv;
        } else if (mode == "cv_pilot") {
            s.tau.mode = TauMode::cv_pilot;
        } else {
            throw ConfigError(t.child("mode") + ": expected fixed, cv or cv_pilot");
        }
        if (t.has("multiplier")) {
            const json& m = t.raw("multiplier");
            if (!m.is_object()) {
                throw ConfigError(t.child("multiplier") + " must be an object");
            }
            for (const auto& item : m.items()) {
                const Method method = wrap(t.child("multiplier"), [&] { return parse_method(item.key()); });
                if (!item.value().is_number()) {
                    throw ConfigError(t.child("multiplier") + "." + item.key() + " must be a number");
                }
                s.tau.multiplier[method] = item.value().get<double>();
            }
        } else {
            t.get<json>("multiplier", json());
        }
        if (t.has("cv")) {
            Obj c = t.sub("cv");
            s.tau.cv_lo = c.get<double>("lo", s.tau.cv_lo);
            s.tau.cv_hi = c.get<double>("hi", s.tau.cv_hi);
            s.tau.cv_points = c.get<int>("points", s.tau.cv_points);
            s.tau.cv_folds = c.get<int>("folds", s.tau.cv_folds);
            c.finish();
        } else {
            t.get<json>("cv", json());
        }
        t.finish();
    } else {
        o.get<json>("tau", json());
    }
    if (o.has("init")) {
        Obj i = o.sub("init");
        s.init.truth_init = i.get<bool>("truth_init", false);
        s.init.c_x = i.get<double>("c_x", s.init.c_x);
        s.init.c_yx = i.get<double>("c_yx", s.init.c_yx);
        s.init.radius = i.get<double>("radius", s.init.radius);
        s.init.radius_scaled = i.get<bool>("radius_scaled", true);
        if (i.has("dantzig")) {
            Obj d = i.sub("dantzig");
            s.init.dantzig.tolerance = d.get<double>("tolerance", s.init.dantzig.tolerance);
            s.init.dantzig.gap_tolerance = d.get<double>("gap_tolerance", s.init.dantzig.gap_tolerance);
            s.init.dantzig.max_iterations = d.get<int>("max_iterations", s.init.dantzig.max_iterations);
            d.finish();
        } else {
            i.get<json>("dantzig", json());
        }
        if (i.has("lasso")) {
            Obj l = i.sub("lasso");
            s.init.lasso.tolerance = l.get<double>("tolerance", s.init.lasso.tolerance);
            s.init.lasso.max_iterations = l.get<int>("max_iterations", s.init.lasso.max_iterations);
            l.finish();
        } else {
            i.get<json>("lasso", json());
        }
        i.finish();
    } else {
        o.get<json>("init", json());
    }
    return s;
}

} // namespace

TailSpec parse_tail_spec(std::string_view text)
{
    const std::string_view whole = text;
    std::size_t i = 0;
    while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) {
        ++i;
    }
    const double scale = i == 0 ? 1.0 : parse_double(text.substr(0, i), whole);
    text.remove_prefix(i);
    TailSpec t;
    if (text == "N") {
        t = TailSpec::gaussian(scale);
    } else if (text.starts_with("tbar")) {
        text.remove_prefix(4);
        const auto open = text.find('[');
        if (open == std::string_view::npos || text.back() != ']') {
            throw ConfigError("tail spec '" + std::string(whole) + "' needs a clip such as tbar1.1[100]");
        }
        const double dof = parse_double(text.substr(0, open), whole);
        const double clip = parse_double(text.substr(open + 1, text.size() - open - 2), whole);
        t = TailSpec::truncated_t(dof, clip, scale);
    } else if (text.starts_with("t")) {
        text.remove_prefix(1);
        t = TailSpec::student_t(parse_double(text, whole), scale);
    } else {
        throw ConfigError("cannot parse tail spec '" + std::string(whole) + "'");
    }
    try {
        t.validate();
    } catch (const Error& e) {
        throw ConfigError("tail spec '" + std::string(whole) + "': " + e.what());
    }
    return t;
}

RunConfig parse_run_config(std::string_view json_text)
{
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    Obj o(j, "");
    RunConfig rc;
    rc.spec = parse_spec(o);
    rc.out = o.get<std::string>("out", rc.out);
    rc.workers = o.get<int>("workers", rc.workers);
    rc.timing = o.get<bool>("timing", false);
    o.finish();
    if (rc.workers < 1) {
        throw ConfigError("workers must be >= 1");
    }
    wrap("config", [&] {
        rc.spec.validate();
        return 0;
    });
    return rc;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) {
        throw ConfigError("config file not found: " + path.string());
    }
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error&) {
        throw ConfigError("cannot read config file: " + path.string());
    }
    try {
        return parse_run_config(text);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string run_config_to_json(const RunConfig& c)
{
    const ExperimentSpec& s = c.spec;
    ordered_json j;
    j["name"] = s.name;
    j["kind"] = std::string(to_string(s.kind));
    j["model"] = std::string(to_string(s.family));
    j["shape"] = {{"p1", s.shape.p1}, {"q1", s.shape.q1}, {"p2", s.shape.p2}, {"q2", s.shape.q2}, {"rank", s.shape.rank}};
    j["truth"] = {{"recipe", recipe_name(s.truth.recipe)},
                  {"support", s.truth.support},
                  {"value", s.truth.value},
                  {"kappa", s.truth.kappa},
                  {"sigma1", s.truth.sigma1}};
    j["eps"] = s.eps;
    j["noise_scale"] = s.noise_scale;
    j["n"] = s.n;
    j["kappa"] = s.kappa;
    auto tail_array = [](const std::vector<TailSpec>& ts) {
        ordered_json a = ordered_json::array();
        for (const auto& t : ts) {
            a.push_back(tail_to_json(t));
        }
        return a;
    };
    j["predictors"] = tail_array(s.predictors);
    j["inactive_predictors"] = tail_array(s.inactive_predictors);
    j["noises"] = tail_array(s.noises);
    ordered_json methods = ordered_json::array();
    for (Method m : s.methods) {
        methods.push_back(std::string(to_string(m)));
    }
    j["methods"] = methods;
    j["replications"] = s.replications;
    j["seed"] = s.seed;
    j["levels"] = s.levels ? ordered_json{{"left", s.levels->left}, {"right", s.levels->right}} : ordered_json(nullptr);
    ordered_json schedules = ordered_json::array();
    for (const Schedule& sc : s.schedules) {
        schedules.push_back({{"eta", sc.eta}, {"iterations", sc.iterations}});
    }
    j["schedules"] = schedules;
    j["trajectory_every"] = s.trajectory_every;
    ordered_json mult = ordered_json::object();
    for (const auto& [m, v] : s.tau.multiplier) {
        mult[std::string(to_string(m))] = v;
    }
    const char* mode = s.tau.mode == TauMode::fixed ? "fixed" : s.tau.mode == TauMode::cv ? "cv" : "cv_pilot";
    j["tau"] = {{"base", s.tau.base == TauBase::power ? "power" : "sqrt_n_log_d"},
                {"constant", s.tau.constant},
                {"mode", mode},
                {"multiplier", mult},
                {"cv", {{"lo", s.tau.cv_lo}, {"hi", s.tau.cv_hi}, {"points", s.tau.cv_points}, {"folds", s.tau.cv_folds}}}};
    j["init"] = {{"truth_init", s.init.truth_init},
                 {"c_x", s.init.c_x},
                 {"c_yx", s.init.c_yx},
                 {"radius", s.init.radius},
                 {"radius_scaled", s.init.radius_scaled},
                 {"dantzig",
                  {{"tolerance", s.init.dantzig.tolerance},
                   {"gap_tolerance", s.init.dantzig.gap_tolerance},
                   {"max_iterations", s.init.dantzig.max_iterations}}},
                 {"lasso", {{"tolerance", s.init.lasso.tolerance}, {"max_iterations", s.init.lasso.max_iterations}}}};
    j["out"] = c.out;
    j["workers"] = c.workers;
    j["timing"] = c.timing;
    return j.dump(2) + "\n";
}

} // namespace kronest
