// hive: command-line front end.
//
//   hive fit       --x X.csv --y Y.csv (--k K | --select-k ratio|pa) [--lambda1 --lambda2 --lambda3 | --cv F]
//   hive select-k  --x X.csv --y Y.csv --method ratio|pa [--lambda1 --lambda2 | --cv F]
//   hive tune      --x X.csv --y Y.csv [--cv F] [--tune grid|sequential]
//   hive simulate  --config grid.json --seed S --out DIR
//
// Exit codes: 0 ok, 2 usage, 3 data, 4 non-convergence under --strict.

#include "hive/hive.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace hive;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNonConvergence = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonArgs {
    std::string x_path;
    std::string y_path;
    bool header = false;
    std::uint64_t seed = 0;
    unsigned threads = default_threads();
    std::string out = ".";
    bool strict = false;
    bool timing = false;
};

struct PenaltyArgs {
    std::optional<double> lambda1, lambda2, lambda3;
    std::optional<int> cv;
    std::string tune = "grid";
    double c0 = 4.0;
};

struct KArgs {
    std::optional<long> k;
    std::optional<std::string> select_k;
    std::optional<long> k_bar;
    int pa_perm = 100;
    double pa_quantile = 0.95;
    bool allow_no_hidden = false;
};

struct FitArgs {
    bool hetero = false;
    int t_iters = 5;
    bool no_standardize = false;
    int max_sweeps = GroupLassoOptions{}.max_iter;
    double tol = GroupLassoOptions{}.tol;
};

void add_fit_flags(CLI::App* cmd, FitArgs& f) {
    cmd->add_flag("--hetero", f.hetero, "HeteroPCA projection (H-HIVE)");
    cmd->add_option("--t-iters", f.t_iters, "HeteroPCA iterations")->check(CLI::NonNegativeNumber);
    cmd->add_flag("--no-standardize", f.no_standardize, "use X and Y as given");
    cmd->add_option("--max-sweeps", f.max_sweeps, "group-lasso sweep limit per solve")->check(CLI::PositiveNumber);
    cmd->add_option("--tol", f.tol, "group-lasso convergence tolerance")->check(CLI::PositiveNumber);
}

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_data) {
    if (needs_data) {
        cmd->add_option("--x", a.x_path, "design matrix CSV (rows = samples)")->required();
        cmd->add_option("--y", a.y_path, "response matrix CSV (rows = samples)")->required();
        cmd->add_flag("--header", a.header, "first line of each CSV is a header");
    }
    cmd->add_option("--seed", a.seed, "seed for folds, permutations and simulation");
    cmd->add_option("--threads", a.threads, "worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", a.out, "output directory");
    cmd->add_flag("--strict", a.strict, "exit 4 if any solver failed to converge");
    cmd->add_flag("--timing", a.timing, "record wall-clock seconds in the JSON output");
}

void add_penalties(CLI::App* cmd, PenaltyArgs& p, bool with_lambda3) {
    auto* l1 = cmd->add_option("--lambda1", p.lambda1, "stage-1 group-lasso penalty")->check(CLI::NonNegativeNumber);
    auto* l2 = cmd->add_option("--lambda2", p.lambda2, "stage-1 ridge penalty")->check(CLI::NonNegativeNumber);
    if (with_lambda3)
        cmd->add_option("--lambda3", p.lambda3, "projected group-lasso penalty")->check(CLI::NonNegativeNumber);
    cmd->add_option("--cv", p.cv, "tune unspecified penalties by F-fold cross-validation")
        ->check(CLI::Range(2, 1000000));
    cmd->add_option("--tune", p.tune, "stage-1 tuning scheme")->check(CLI::IsMember({"grid", "sequential"}));
    cmd->add_option("--c0", p.c0, "constant of the sequential lambda1 rule")->check(CLI::PositiveNumber);
    l1->needs(l2);
    l2->needs(l1);
}

void add_k(CLI::App* cmd, KArgs& k) {
    auto* ko = cmd->add_option("--k", k.k, "number of hidden variables");
    auto* so = cmd->add_option("--select-k", k.select_k, "select K from the data")
                   ->check(CLI::IsMember({"ratio", "pa", "auto"}));
    ko->excludes(so);
    cmd->add_option("--k-bar", k.k_bar, "largest K considered by the ratio rule")->check(CLI::PositiveNumber);
    cmd->add_option("--pa-permutations", k.pa_perm, "permutations for parallel analysis")->check(CLI::PositiveNumber);
    cmd->add_option("--pa-quantile", k.pa_quantile, "null quantile for parallel analysis")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_flag("--allow-no-hidden", k.allow_no_hidden, "fall back to plain group lasso when K = 0 is selected");
}

struct LoadedData {
    Matrix x, y;
    std::vector<std::string> x_names, y_names;
};

LoadedData load_data(const CommonArgs& a) {
    auto x = io::load_matrix_csv(a.x_path, a.header);
    auto y = io::load_matrix_csv(a.y_path, a.header);
    if (x.values.rows() != y.values.rows())
        throw DataError("X has " + std::to_string(x.values.rows()) + " rows but Y has " +
                        std::to_string(y.values.rows()));
    return {std::move(x.values), std::move(y.values), std::move(x.header), std::move(y.header)};
}

fs::path prepare_out(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
    return p;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << std::setw(2) << j << '\n';
}

/// Finite doubles as numbers; JSON has no inf/nan.
json num(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

json vec_json(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
    return a;
}

json index_json(const std::vector<Index>& idx) {
    json a = json::array();
    for (Index i : idx) a.push_back(i);
    return a;
}

json stage_json(const TuningStage& st) {
    json j;
    j["name"] = st.name;
    j["params"] = st.params;
    j["points"] = st.points;
    j["mean_errors"] = st.mean_errors;
    j["fold_errors"] = st.fold_errors;
    j["selected"] = st.selected;
    return j;
}

json tuning_json(const TuningRecord& r) {
    json j;
    j["lambda1"] = r.lambda1 ? json(*r.lambda1) : json(nullptr);
    j["lambda2"] = r.lambda2 ? json(*r.lambda2) : json(nullptr);
    j["lambda3"] = r.lambda3 ? json(*r.lambda3) : json(nullptr);
    j["folds"] = r.folds;
    j["seed"] = r.seed;
    j["projection_fixed_across_folds"] = r.projection_fixed_across_folds;
    j["stages"] = json::array();
    for (const auto& st : r.stages) j["stages"].push_back(stage_json(st));
    return j;
}

json k_selection_json(const KSelectionRecord& r) {
    json j;
    j["method"] = to_string(r.method);
    j["k"] = r.k;
    j["eigenvalues"] = vec_json(r.eigenvalues);
    if (r.method == KMethod::Ratio) {
        j["k_bar"] = r.k_bar;
        j["ratios"] = vec_json(r.ratios);
    } else {
        j["n_perm"] = r.n_perm;
        j["quantile"] = r.quantile;
        j["thresholds"] = vec_json(r.thresholds);
    }
    return j;
}

json manifest(const std::string& command, const CommonArgs& a, json options, const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["version"] = hive::version;
    json inputs;
    if (!a.x_path.empty()) inputs["x"] = a.x_path;
    if (!a.y_path.empty()) inputs["y"] = a.y_path;
    inputs["header"] = a.header;
    m["inputs"] = inputs;
    m["seed"] = a.seed;
    m["options"] = std::move(options);
    m["outputs"] = outputs;
    return m;
}

std::vector<std::string> column_names(const std::vector<std::string>& names, Index count, const std::string& prefix) {
    if (!names.empty()) return names;
    std::vector<std::string> out;
    for (Index i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i + 1));
    return out;
}

/// Resolved options shared by fit and tune.
HiveOptions hive_options(const CommonArgs& a, const PenaltyArgs& p, const KArgs& k, const FitArgs& f,
                         const LoadedData& d) {
    const Index m = d.y.cols();
    HiveOptions o;
    if (k.k) {
        if (*k.k < 1 || *k.k >= m)
            throw UsageError("--k must satisfy 1 <= k < m (got k=" + std::to_string(*k.k) +
                             ", m=" + std::to_string(m) + ")");
        o.k = static_cast<Index>(*k.k);
    } else if (k.select_k) {
        o.k_method = parse_k_method(*k.select_k);
    }
    if (k.k_bar) o.k_bar = static_cast<Index>(*k.k_bar);
    o.pa_permutations = k.pa_perm;
    o.pa_quantile = k.pa_quantile;
    o.allow_no_hidden = k.allow_no_hidden;
    o.hetero = f.hetero;
    o.t_iters = f.t_iters;
    o.lambda1 = p.lambda1;
    o.lambda2 = p.lambda2;
    o.lambda3 = p.lambda3;
    o.tune = parse_tune_mode(p.tune);
    o.folds = p.cv.value_or(10);
    o.c0 = p.c0;
    o.standardize = !f.no_standardize;
    o.stage1.solver.max_iter = f.max_sweeps;
    o.stage1.solver.tol = f.tol;
    o.seed = a.seed;
    o.threads = a.threads;
    if (!p.cv && (!p.lambda1 || !p.lambda3))
        throw UsageError("give --lambda1, --lambda2 and --lambda3, or --cv FOLDS to tune the missing ones");
    if (p.cv && *p.cv > d.x.rows())
        throw DataError("--cv " + std::to_string(*p.cv) + " exceeds the number of samples (" +
                        std::to_string(d.x.rows()) + ")");
    return o;
}

json options_json(const HiveOptions& o, const PenaltyArgs& p) {
    json j;
    j["k"] = o.k ? json(*o.k) : json(nullptr);
    j["k_method"] = o.k ? json(nullptr) : json(to_string(o.k_method));
    j["k_bar"] = o.k_bar ? json(*o.k_bar) : json(nullptr);
    j["pa_permutations"] = o.pa_permutations;
    j["pa_quantile"] = o.pa_quantile;
    j["allow_no_hidden"] = o.allow_no_hidden;
    j["hetero"] = o.hetero;
    j["t_iters"] = o.t_iters;
    j["lambda1"] = o.lambda1 ? json(*o.lambda1) : json(nullptr);
    j["lambda2"] = o.lambda2 ? json(*o.lambda2) : json(nullptr);
    j["lambda3"] = o.lambda3 ? json(*o.lambda3) : json(nullptr);
    j["cv_folds"] = p.cv ? json(*p.cv) : json(nullptr);
    j["tune"] = to_string(o.tune);
    j["c0"] = o.c0;
    j["standardize"] = o.standardize;
    j["max_sweeps"] = o.stage1.solver.max_iter;
    j["tol"] = o.stage1.solver.tol;
    return j;
}

struct SolveCounter {
    long solves0, bad0;
    SolveCounter()
        : solves0(group_lasso_stats().solves.load()), bad0(group_lasso_stats().non_converged.load()) {}
    long solves() const { return group_lasso_stats().solves.load() - solves0; }
    long non_converged() const { return group_lasso_stats().non_converged.load() - bad0; }
};

int finish(const CommonArgs& a, const SolveCounter& sc) {
    if (a.strict && sc.non_converged() > 0) {
        std::cerr << "error: " << sc.non_converged() << " of " << sc.solves()
                  << " group-lasso solves did not converge (--strict)\n";
        return kExitNonConvergence;
    }
    return kExitOk;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_fit(const CommonArgs& a, const PenaltyArgs& p, const KArgs& k, const FitArgs& f) {
    auto t0 = std::chrono::steady_clock::now();
    if (!k.k && !k.select_k) throw UsageError("fit needs --k K or --select-k {ratio,pa}");
    LoadedData d = load_data(a);
    HiveOptions o = hive_options(a, p, k, f, d);
    SolveCounter sc;
    HiveFit fit = fit_hive(d.x, d.y, o);

    fs::path out = prepare_out(a.out);
    auto xn = column_names(d.x_names, d.x.cols(), "x");
    auto yn = column_names(d.y_names, d.y.cols(), "y");
    io::write_matrix_csv((out / "theta.csv").string(), fit.theta_original(), yn);
    io::write_matrix_csv((out / "psi.csv").string(), fit.psi_original(), yn);
    io::write_matrix_csv((out / "l.csv").string(), fit.l_original(), yn);
    std::vector<std::string> un;
    for (Index c = 0; c < fit.projection.u_hat.cols(); ++c) un.push_back("u" + std::to_string(c + 1));
    io::write_matrix_csv((out / "u_hat.csv").string(), fit.projection.u_hat, un);

    json j;
    j["estimator"] = f.hetero ? "h-hive" : "hive";
    j["k"] = fit.k_used;
    j["projection_method"] = to_string(fit.projection.method);
    j["heteropca_iterations"] = fit.projection.heteropca_iterations;
    j["projection_eigenvalues"] = vec_json(fit.projection.eigenvalues);
    j["lambda1"] = fit.stage1.lambda1;
    j["lambda2"] = fit.stage1.lambda2;
    j["lambda3"] = fit.theta.lambda3;
    j["theta_support"] = index_json(fit.theta.support);
    j["psi_support"] = index_json(fit.stage1.psi_support);
    j["predictors"] = xn;
    j["kkt_violation"] = {{"stage1", fit.stage1.kkt_violation}, {"theta", fit.theta.kkt_violation}};
    j["converged"] = {{"stage1", fit.stage1.converged},
                      {"theta", fit.theta.converged},
                      {"all_solves", sc.non_converged() == 0}};
    j["iterations"] = {{"stage1", fit.stage1.iterations}, {"theta", fit.theta.iterations}};
    j["solver_calls"] = {{"total", sc.solves()}, {"non_converged", sc.non_converged()}};
    j["stage1_flags"] = {{"pseudo_inverse", fit.stage1.pseudo_inverse},
                         {"degenerate_covariance", fit.stage1.degenerate_covariance}};
    j["standardization"] = {{"applied", fit.standardization.applied},
                            {"degenerate_columns", index_json(fit.standardization.degenerate_columns)}};
    j["k_selection"] = fit.k_selection ? k_selection_json(*fit.k_selection) : json(nullptr);
    j["tuning"] = tuning_json(fit.tuning);
    j["manifest"] = manifest("fit", a, options_json(o, p),
                             {(out / "theta.csv").string(), (out / "psi.csv").string(), (out / "l.csv").string(),
                              (out / "u_hat.csv").string(), (out / "fit.json").string()});
    if (a.timing) j["manifest"]["wall_clock_seconds"] = seconds_since(t0);
    write_json(out / "fit.json", j);
    std::cout << "k=" << fit.k_used << " lambda1=" << io::format_double(fit.stage1.lambda1)
              << " lambda2=" << io::format_double(fit.stage1.lambda2)
              << " lambda3=" << io::format_double(fit.theta.lambda3) << " support=" << fit.theta.support.size()
              << " rows\nwrote " << (out / "fit.json").string() << "\n";
    return finish(a, sc);
}

int run_select_k(const CommonArgs& a, const PenaltyArgs& p, const KArgs& k, const std::string& method,
                 bool write_file) {
    auto t0 = std::chrono::steady_clock::now();
    LoadedData d = load_data(a);
    if (d.y.cols() < 2) throw DataError("Y must have at least 2 columns to select K");
    if (!p.cv && !p.lambda1) throw UsageError("select-k needs --lambda1 and --lambda2, or --cv FOLDS");
    KMethod km = parse_k_method(method);
    SolveCounter sc;
    Standardized s = standardize(d.x, d.y);
    double l1, l2;
    TuningRecord rec;
    if (p.lambda1) {
        l1 = *p.lambda1;
        l2 = *p.lambda2;
    } else {
        if (*p.cv > d.x.rows()) throw DataError("--cv exceeds the number of samples");
        CvOptions cv;
        cv.folds = *p.cv;
        cv.seed = a.seed;
        cv.threads = a.threads;
        std::vector<double> grid2 = default_lambda2_grid(s.x);
        Stage1Tuning t = parse_tune_mode(p.tune) == TuneMode::Grid
                             ? cv_tune_stage1(s.x, s.y, default_lambda1_grid(s.x, s.y, grid2), grid2, cv)
                             : sequential_tune(s.x, s.y, grid2, p.c0, {}, cv);
        l1 = t.lambda1;
        l2 = t.lambda2;
        rec = std::move(t.record);
    }
    Stage1Fit fit = fit_stage1(s.x, s.y, l1, l2);
    KSelectionRecord r = select_k(fit, km, k.k_bar ? std::optional<Index>(*k.k_bar) : std::nullopt, k.pa_perm,
                                  k.pa_quantile, a.seed, a.threads);

    std::cout << "K = " << r.k << " (" << to_string(r.method) << ")\n";
    if (r.method == KMethod::Ratio) {
        std::cout << "j\teigenvalue\tratio\n";
        for (Index j = 0; j < r.eigenvalues.size(); ++j) {
            std::cout << j + 1 << '\t' << io::format_double(r.eigenvalues(j)) << '\t'
                      << (j < r.ratios.size() ? io::format_double(r.ratios(j)) : std::string("-")) << '\n';
        }
    } else {
        std::cout << "j\tobserved\tnull_quantile\texceeds\n";
        for (Index j = 0; j < r.eigenvalues.size(); ++j) {
            std::cout << j + 1 << '\t' << io::format_double(r.eigenvalues(j)) << '\t'
                      << io::format_double(r.thresholds(j)) << '\t'
                      << (r.eigenvalues(j) > r.thresholds(j) ? "yes" : "no") << '\n';
        }
    }
    if (write_file) {
        fs::path out = prepare_out(a.out);
        json j = k_selection_json(r);
        j["lambda1"] = l1;
        j["lambda2"] = l2;
        j["tuning"] = tuning_json(rec);
        json opts;
        opts["method"] = method;
        opts["lambda1"] = p.lambda1 ? json(*p.lambda1) : json(nullptr);
        opts["lambda2"] = p.lambda2 ? json(*p.lambda2) : json(nullptr);
        opts["cv_folds"] = p.cv ? json(*p.cv) : json(nullptr);
        opts["tune"] = p.tune;
        j["manifest"] = manifest("select-k", a, opts, {(out / "select_k.json").string()});
        if (a.timing) j["manifest"]["wall_clock_seconds"] = seconds_since(t0);
        write_json(out / "select_k.json", j);
    }
    return finish(a, sc);
}

int run_tune(const CommonArgs& a, PenaltyArgs p, const KArgs& k, const FitArgs& f) {
    auto t0 = std::chrono::steady_clock::now();
    if (!p.cv) p.cv = 10;
    LoadedData d = load_data(a);
    PenaltyArgs tuned = p;
    tuned.lambda1.reset();
    tuned.lambda2.reset();
    tuned.lambda3.reset();
    KArgs kk = k;
    if (!kk.k && !kk.select_k) kk.select_k = "auto";
    HiveOptions o = hive_options(a, tuned, kk, f, d);
    SolveCounter sc;
    HiveFit fit = fit_hive(d.x, d.y, o);

    fs::path out = prepare_out(a.out);
    json j;
    j["lambda1"] = fit.stage1.lambda1;
    j["lambda2"] = fit.stage1.lambda2;
    j["lambda3"] = fit.theta.lambda3;
    j["k"] = fit.k_used;
    j["k_selection"] = fit.k_selection ? k_selection_json(*fit.k_selection) : json(nullptr);
    j["tuning"] = tuning_json(fit.tuning);
    j["manifest"] = manifest("tune", a, options_json(o, tuned), {(out / "tuning.json").string()});
    if (a.timing) j["manifest"]["wall_clock_seconds"] = seconds_since(t0);
    write_json(out / "tuning.json", j);
    std::cout << "lambda1=" << io::format_double(fit.stage1.lambda1)
              << " lambda2=" << io::format_double(fit.stage1.lambda2)
              << " lambda3=" << io::format_double(fit.theta.lambda3) << " k=" << fit.k_used << '\n';
    return finish(a, sc);
}

// --- simulate -------------------------------------------------------------

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
    throw DataError("config " + where + ": " + what);
}

template <class T>
T get_field(const json& obj, const std::string& key, const std::string& where, T fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) config_error(where + "." + key, "expected a string");
        return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) config_error(where + "." + key, "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (v.is_number_unsigned()) return v.get<T>();
            if (v.get<long long>() < 0) config_error(where + "." + key, "expected a nonnegative integer");
        }
        return v.get<T>();
    } else {
        if (!v.is_number()) config_error(where + "." + key, "expected a number");
        return v.get<T>();
    }
}

void reject_unknown(const json& obj, const std::vector<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            config_error(where + "." + it.key(), "unknown field");
    }
}

sim::SimConfig parse_sim_config(const json& j, const std::string& where) {
    if (!j.is_object()) config_error(where, "expected an object");
    reject_unknown(j,
                   {"n", "p", "m", "k", "s_star", "rho", "eta", "alpha", "mu_theta", "sigma_theta", "sigma_w", "seed"},
                   where);
    sim::SimConfig c;
    c.n = get_field<Index>(j, "n", where, c.n);
    c.p = get_field<Index>(j, "p", where, c.p);
    c.m = get_field<Index>(j, "m", where, c.m);
    c.k = get_field<Index>(j, "k", where, c.k);
    c.s_star = get_field<Index>(j, "s_star", where, c.s_star);
    c.rho = get_field<double>(j, "rho", where, c.rho);
    c.eta = get_field<double>(j, "eta", where, c.eta);
    c.alpha = get_field<double>(j, "alpha", where, c.alpha);
    c.mu_theta = get_field<double>(j, "mu_theta", where, c.mu_theta);
    c.sigma_theta = get_field<double>(j, "sigma_theta", where, c.sigma_theta);
    c.sigma_w = get_field<double>(j, "sigma_w", where, c.sigma_w);
    c.seed = get_field<std::uint64_t>(j, "seed", where, c.seed);
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        config_error(where, e.what());
    }
    return c;
}

struct SimulationPlan {
    std::vector<sim::SimConfig> configs;
    std::vector<std::string> methods;
    int replicates = 1;
    sim::ExperimentOptions eo;
};

SimulationPlan parse_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("config " + path + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) config_error("<root>", "expected an object");
    reject_unknown(j, {"configs", "config", "methods", "replicates", "folds", "tune", "t_iters"}, "<root>");
    SimulationPlan plan;
    if (j.contains("configs")) {
        if (!j["configs"].is_array() || j["configs"].empty()) config_error("configs", "expected a nonempty array");
        for (std::size_t i = 0; i < j["configs"].size(); ++i)
            plan.configs.push_back(parse_sim_config(j["configs"][i], "configs[" + std::to_string(i) + "]"));
    } else if (j.contains("config")) {
        plan.configs.push_back(parse_sim_config(j["config"], "config"));
    } else {
        config_error("<root>", "missing 'configs' (array) or 'config' (object)");
    }
    if (!j.contains("methods") || !j["methods"].is_array() || j["methods"].empty())
        config_error("methods", "expected a nonempty array of method names");
    for (std::size_t i = 0; i < j["methods"].size(); ++i) {
        const auto& v = j["methods"][i];
        if (!v.is_string()) config_error("methods[" + std::to_string(i) + "]", "expected a string");
        plan.methods.push_back(v.get<std::string>());
    }
    try {
        sim::validate_methods(plan.methods);
    } catch (const InvalidArgument& e) {
        config_error("methods", std::string(e.what()) + " (known: oracle, hive, hhive, hive_init, lasso, ridge, sva, "
                                                        "ols, rrr)");
    }
    plan.replicates = get_field<int>(j, "replicates", "<root>", 1);
    if (plan.replicates < 1) config_error("replicates", "must be at least 1");
    plan.eo.folds = get_field<int>(j, "folds", "<root>", plan.eo.folds);
    if (plan.eo.folds < 2) config_error("folds", "must be at least 2");
    std::string tune = get_field<std::string>(j, "tune", "<root>", "grid");
    if (tune != "grid" && tune != "sequential") config_error("tune", "expected 'grid' or 'sequential'");
    plan.eo.tune = parse_tune_mode(tune);
    plan.eo.t_iters = get_field<int>(j, "t_iters", "<root>", plan.eo.t_iters);
    if (plan.eo.t_iters < 0) config_error("t_iters", "must be nonnegative");
    for (std::size_t i = 0; i < plan.configs.size(); ++i)
        if (plan.configs[i].n < plan.eo.folds)
            config_error("configs[" + std::to_string(i) + "].n", "smaller than the number of folds");
    return plan;
}

int run_simulate(const CommonArgs& a, const std::string& config_path) {
    auto t0 = std::chrono::steady_clock::now();
    SimulationPlan plan = parse_plan(config_path);
    plan.eo.threads = a.threads;
    SolveCounter sc;
    auto table = sim::run_experiment(plan.configs, plan.methods, plan.replicates, a.seed, plan.eo);

    fs::path out = prepare_out(a.out);
    {
        std::ofstream csv(out / "results.csv");
        if (!csv) throw DataError("cannot write '" + (out / "results.csv").string() + "'");
        csv << "config_id,method,replicate,rsse,pmse,seed\n";
        for (const auto& r : table) {
            csv << r.config_id << ',' << r.method << ',' << r.replicate << ',' << io::format_double(r.rsse) << ','
                << (r.pmse ? io::format_double(*r.pmse) : std::string("NA")) << ',' << r.seed << '\n';
        }
    }
    json s;
    s["summary"] = json::array();
    for (const auto& m : sim::summarize(table)) {
        json e;
        e["config_id"] = m.config_id;
        e["method"] = m.method;
        e["replicates"] = m.count;
        e["rsse_mean"] = num(m.rsse_mean);
        e["rsse_sd"] = num(m.rsse_sd);
        e["pmse_mean"] = m.pmse_mean ? num(*m.pmse_mean) : json(nullptr);
        e["pmse_sd"] = m.pmse_sd ? num(*m.pmse_sd) : json(nullptr);
        s["summary"].push_back(e);
    }
    s["solver_calls"] = {{"total", sc.solves()}, {"non_converged", sc.non_converged()}};
    json opts;
    opts["config"] = config_path;
    opts["replicates"] = plan.replicates;
    opts["methods"] = plan.methods;
    opts["folds"] = plan.eo.folds;
    opts["tune"] = to_string(plan.eo.tune);
    opts["t_iters"] = plan.eo.t_iters;
    s["manifest"] = manifest("simulate", a, opts, {(out / "results.csv").string(), (out / "summary.json").string()});
    if (a.timing) s["manifest"]["wall_clock_seconds"] = seconds_since(t0);
    write_json(out / "summary.json", s);
    std::cout << "wrote " << table.size() << " rows to " << (out / "results.csv").string() << '\n';
    return finish(a, sc);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HIVE and H-HIVE estimators for multivariate regression with hidden variables", "hive"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(hive::version));

    CommonArgs fit_c, sel_c, tune_c, sim_c;
    PenaltyArgs fit_p, sel_p, tune_p;
    KArgs fit_k, sel_k, tune_k;
    FitArgs fit_f, tune_f;
    std::string sel_method;
    std::string sim_config;

    auto* fit = app.add_subcommand("fit", "fit HIVE (or H-HIVE with --hetero) and write the estimates");
    add_common(fit, fit_c, true);
    add_penalties(fit, fit_p, true);
    add_k(fit, fit_k);
    add_fit_flags(fit, fit_f);

    auto* sel = app.add_subcommand("select-k", "estimate the number of hidden variables");
    add_common(sel, sel_c, true);
    add_penalties(sel, sel_p, false);
    sel->add_option("--method", sel_method, "selection rule")->required()->check(CLI::IsMember({"ratio", "pa", "auto"}));
    sel->add_option("--k-bar", sel_k.k_bar, "largest K considered by the ratio rule")->check(CLI::PositiveNumber);
    sel->add_option("--pa-permutations", sel_k.pa_perm, "permutations for parallel analysis")
        ->check(CLI::PositiveNumber);
    sel->add_option("--pa-quantile", sel_k.pa_quantile, "null quantile for parallel analysis")
        ->check(CLI::Range(0.0, 1.0));

    auto* tune = app.add_subcommand("tune", "cross-validate all penalties and report the selection");
    add_common(tune, tune_c, true);
    add_penalties(tune, tune_p, false);
    add_k(tune, tune_k);
    add_fit_flags(tune, tune_f);

    auto* simc = app.add_subcommand("simulate", "run the simulation benchmark from a JSON grid");
    add_common(simc, sim_c, false);
    simc->add_option("--config", sim_config, "JSON: {configs|config, methods, replicates, folds, tune, t_iters}")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (fit->parsed()) return run_fit(fit_c, fit_p, fit_k, fit_f);
        if (sel->parsed()) return run_select_k(sel_c, sel_p, sel_k, sel_method, true);
        if (tune->parsed()) return run_tune(tune_c, tune_p, tune_k, tune_f);
        if (simc->parsed()) return run_simulate(sim_c, sim_config);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NoHiddenVariables& e) {
        std::cerr << "data error: " << e.what() << " (pass --allow-no-hidden to proceed)\n";
        return kExitData;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
