#pragma once

#include <bpstop/bpstop.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace bpstop::cli {

enum ExitCode : int { kOk = 0, kMathFailure = 1, kUsageFailure = 2 };

// A mathematical check that the command was asked to make did not hold.
class CheckFailure : public Error {
public:
    using Error::Error;
};

struct RunConfig {
    std::string command;
    std::vector<std::string> models;
    std::string stop_set;
    int cap = 0;  // 0: per-command default
    int t = 0;
    double tol = 0.0;
    std::uint64_t seed = 1;
    long long reps = 100000;
    int workers = 1;
    std::string out;
    std::string n;
    std::string r;
    int j = 1;
    std::string a;
    std::string grid;
    bool inject_fault = false;
};

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level_from_env() {
    const char* v = std::getenv("BP_LOG");
    if (!v) return LogLevel::quiet;
    const std::string s(v);
    if (s == "debug" || s == "2") return LogLevel::debug;
    if (s == "info" || s == "1") return LogLevel::info;
    return LogLevel::quiet;
}

class Logger {
public:
    Logger(std::ostream& os, LogLevel level) : os_(os), level_(level) {}
    void info(const std::string& msg) const {
        if (level_ >= LogLevel::info) os_ << "[info] " << msg << '\n';
    }
    void debug(const std::string& msg) const {
        if (level_ >= LogLevel::debug) os_ << "[debug] " << msg << '\n';
    }

private:
    std::ostream& os_;
    LogLevel level_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A stopping-set file is either a list of count vectors or {"stopping_set": [...]}.
inline StoppingSet load_stopping_set(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        auto [line, col] = detail::line_column(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ParseError("malformed JSON", line, col);
    }
    if (root.is_object()) {
        detail::reject_unknown_keys(root, {"stopping_set"}, "stop-set file");
        if (!root.contains("stopping_set")) throw ParseError("stop-set file: missing field 'stopping_set'");
        root = root["stopping_set"];
    }
    if (!root.is_array()) throw ParseError("stop-set file: expected a list of count vectors");
    std::vector<PopulationState> members;
    for (std::size_t i = 0; i < root.size(); ++i)
        members.push_back(detail::counts_from_json(root[i], "stopping_set[" + std::to_string(i) + "]"));
    return StoppingSet(std::move(members));
}

struct Problem {
    std::string path;
    BranchingModel model;
    std::optional<StoppingSet> s;

    const StoppingSet& stopping_set() const {
        if (!s) throw PreconditionError(path + ": no stopping set (use --stop-set or add stopping_set to the model)");
        return *s;
    }
};

inline Problem load_problem(const std::string& path, const std::string& stop_set_path) {
    LoadedModel lm = load_model(read_file(path));
    Problem p{path, std::move(lm.model), std::move(lm.stopping_set)};
    if (!stop_set_path.empty()) p.s = load_stopping_set(read_file(stop_set_path));
    if (p.s && p.s->dimension() != p.model.type_count())
        throw ValidationError("stopping set dimension does not match the type count");
    return p;
}

inline PopulationState parse_state_for(const std::string& text, const BranchingModel& m, const char* what) {
    PopulationState st = parse_state(text);
    if (st.dimension() != m.type_count())
        throw PreconditionError(std::string(what) + " " + st.str() + " has the wrong dimension");
    return st;
}

// --r defaults to the only member of S.
inline PopulationState target_state(const RunConfig& cfg, const Problem& p) {
    const StoppingSet& s = p.stopping_set();
    if (cfg.r.empty()) {
        if (s.size() != 1) throw PreconditionError("--r is required when the stopping set has several members");
        return s.members().front();
    }
    PopulationState r = parse_state_for(cfg.r, p.model, "target");
    if (!s.contains(r)) throw PreconditionError("target " + r.str() + " is not in the stopping set");
    return r;
}

inline Vector parse_list(const std::string& text) {
    Vector out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw PreconditionError("cannot parse number '" + item + "'");
        }
    }
    return out;
}

// "lo:hi:points" for a geometric grid, or an explicit comma-separated list.
inline std::vector<long long> parse_grid(const std::string& text) {
    if (text.find(':') != std::string::npos) {
        std::stringstream ss(text);
        std::string a, b, c;
        std::getline(ss, a, ':');
        std::getline(ss, b, ':');
        std::getline(ss, c, ':');
        try {
            return geometric_grid(std::stoll(a), std::stoll(b), c.empty() ? 8 : std::stoi(c));
        } catch (const std::logic_error&) {
            throw PreconditionError("bad grid '" + text + "'");
        }
    }
    std::vector<long long> out;
    for (double v : parse_list(text)) {
        if (v < 1 || v != std::floor(v)) throw PreconditionError("grid totals must be positive integers");
        out.push_back(static_cast<long long>(v));
    }
    return out;
}

struct Output {
    std::ofstream file;
    std::ostream* os;

    Output(const std::string& path, std::ostream& fallback) : os(&fallback) {
        if (!path.empty()) {
            file.open(path);
            if (!file) throw PreconditionError("cannot write " + path);
            os = &file;
        }
    }
    std::ostream& stream() { return *os; }
};

struct Context {
    const RunConfig& cfg;
    std::ostream& out;
    std::ostream& err;
    Logger log;
};

inline const std::string& single_model(const RunConfig& cfg) {
    if (cfg.models.size() != 1) throw PreconditionError("exactly one --model is required");
    return cfg.models.front();
}

inline std::shared_ptr<const StateSpace> make_space(const BranchingModel& m, int cap) {
    return std::make_shared<const StateSpace>(m.type_count(), cap);
}

inline int cmd_classify(Context& ctx) {
    const Problem p = load_problem(single_model(ctx.cfg), ctx.cfg.stop_set);
    const MomentData md = moments(p.model);
    const Classification c = classify(md);
    std::optional<SpectralSummary> summary;
    if (c.noncyclic()) {
        summary = perron_triple(md);
        if (summary->subcritical()) attach_survival_constants(p.model, *summary);
    }
    nlohmann::json j = to_json(c, summary ? &*summary : nullptr);
    j["model"] = p.path;
    Output o(ctx.cfg.out, ctx.out);
    o.stream() << j.dump(2) << '\n';
    ctx.log.info("delta = " + format_double(c.delta) + ", condition 1 " + (c.condition1() ? "holds" : "fails"));
    return c.condition1() ? kOk : kMathFailure;
}

inline int cmd_stop_prob(Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const Problem p = load_problem(single_model(cfg), cfg.stop_set);
    const StoppingSet& s = p.stopping_set();
    if (cfg.n.empty()) throw PreconditionError("--n is required");
    const PopulationState n = parse_state_for(cfg.n, p.model, "start");
    const PopulationState r = target_state(cfg, p);
    const int cap = cfg.cap > 0 ? cfg.cap : 60;
    const int t_max = cfg.t > 0 ? cfg.t : 20;
    const double tol = cfg.tol > 0 ? cfg.tol : 1e-10;

    const auto space = make_space(p.model, cap);
    detail::require_start(*space, s, n);
    const TransitionKernel kernel = one_step_kernel(p.model, space);
    const AbsorptionTable direct = absorption_direct(kernel, s, r, t_max);
    const RestrictedKernel restricted = restricted_kernel(kernel, s, t_max);
    const AbsorptionTable rsum = absorption_restricted_sum(restricted, r, direct.overflow);
    const FreeColumns free = free_columns(kernel, s, t_max);
    const StopCoefficients coeffs = stop_coefficients(restricted, *space, t_max);
    const AbsorptionTable formula = absorption_formula(free, coeffs, r, direct.overflow);

    const std::size_t i = space->index(n);
    Output o(cfg.out, ctx.out);
    CsvWriter csv(o.stream());
    csv.row("n", "r", "t", "q_direct", "q_formula", "q_restricted_sum", "dev_formula_direct", "dev_restricted_direct",
            "dev_formula_restricted", "overflow_bound");
    double worst = 0.0;
    for (int t = 1; t <= t_max; ++t) {
        const double qd = direct.at(t, i);
        const double qf = formula.at(t, i);
        const double qr = rsum.at(t, i);
        const double d1 = std::abs(qf - qd);
        const double d2 = std::abs(qr - qd);
        const double d3 = std::abs(qf - qr);
        worst = std::max({worst, d1, d2, d3});
        csv.row(n.str(), r.str(), t, qd, qf, qr, d1, d2, d3, direct.overflow[static_cast<std::size_t>(t - 1)][i]);
    }
    ctx.log.info("largest route deviation " + format_double(worst));
    if (worst > tol) throw CheckFailure("routes disagree by " + format_double(worst) + " > " + format_double(tol));
    return kOk;
}

inline SpectralSummary subcritical_summary(const BranchingModel& m, const MomentData& md) {
    const Classification c = classify(md);
    if (!c.condition1()) {
        throw CheckFailure(std::string("model is not indecomposable, noncyclic and subcritical (") +
                           (c.indecomposable ? "" : "decomposable, ") + "period " + std::to_string(c.period) +
                           ", " + to_string(c.criticality) + ")");
    }
    SpectralSummary s = perron_triple(md);
    attach_survival_constants(m, s);
    return s;
}

inline int cmd_series(Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const Problem p = load_problem(single_model(cfg), cfg.stop_set);
    const StoppingSet& s = p.stopping_set();
    if (cfg.n.empty()) throw PreconditionError("--n is required");
    const PopulationState n = parse_state_for(cfg.n, p.model, "start");
    const PopulationState r = target_state(cfg, p);
    const MomentData md = moments(p.model);
    const SpectralSummary summary = subcritical_summary(p.model, md);
    const int cap = cfg.cap > 0 ? cfg.cap : 60;
    const double tol = cfg.tol > 0 ? cfg.tol : 1e-10;
    const auto space = make_space(p.model, cap);
    detail::require_start(*space, s, n);
    const TransitionKernel kernel = one_step_kernel(p.model, space);
    ctx.log.debug("state space of " + std::to_string(space->size()) + " states");
    const LimitValue v = limiting_absorption(kernel, s, md.A, summary, n, r, tol);
    ctx.log.info("series used " + std::to_string(v.terms) + " terms, bound " + format_double(v.bound));
    Output o(cfg.out, ctx.out);
    CsvWriter csv(o.stream());
    csv.row("n", "r", "q", "series_bound", "overflow_bound", "terms");
    csv.row(n.str(), r.str(), v.q, v.bound, v.overflow_bound, v.terms);
    return kOk;
}

inline int cmd_yaglom(Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const Problem p = load_problem(single_model(cfg), cfg.stop_set);
    const std::size_t k = p.model.type_count();
    if (cfg.j < 1 || static_cast<std::size_t>(cfg.j) > k)
        throw PreconditionError("--j " + std::to_string(cfg.j) + " out of range 1.." + std::to_string(k));
    const MomentData md = moments(p.model);
    const SpectralSummary summary = subcritical_summary(p.model, md);
    const int cap = cfg.cap > 0 ? cfg.cap : 400;
    const int t = cfg.t > 0 ? cfg.t : 60;
    const double tol = cfg.tol > 0 ? cfg.tol : 1e-3;
    const auto space = make_space(p.model, cap);
    const TransitionKernel kernel = one_step_kernel(p.model, space);
    ctx.log.debug("state space of " + std::to_string(space->size()) + " states");
    const YaglomData y = yaglom(p.model, kernel, summary, static_cast<std::size_t>(cfg.j), t);
    ctx.log.info("survival to t = " + std::to_string(t) + " is " + format_double(y.survival));
    const auto grid = make_s_grid(k, 25);
    const YaglomResidual res = yaglom_residual(p.model, y, summary, grid);

    Output o(cfg.out, ctx.out);
    CsvWriter csv(o.stream());
    csv.row("state", "p_star");
    for (std::size_t i = 0; i < y.support.size(); ++i)
        if (y.p_star[i] > 0.0) csv.row(y.support[i].str(), y.p_star[i]);

    const Vector mean = y.mean();
    double mean_total = 0.0;
    for (double v : mean) mean_total += v;
    ctx.err << "functional-equation residual " << format_double(res.max_residual) << ", deficit "
            << format_double(y.deficit) << ", snapshot distance " << format_double(y.snapshot_distance) << '\n';

    if (res.max_residual > tol)
        throw CheckFailure("functional-equation residual " + format_double(res.max_residual) + " exceeds " +
                           format_double(tol));
    if (!(mean_total > 0.0)) throw CheckFailure("conditional law has zero mean");
    if (single_offspring_condition(p.model)) {
        for (std::size_t i = 1; i <= k; ++i) {
            if (!(y.mass_of(unit_state(i, k)) > 0.0))
                throw CheckFailure("p* puts no mass on the unit state of type " + std::to_string(i));
        }
    } else {
        ctx.err << "single-offspring condition fails; unit-state positivity not required\n";
    }
    return kOk;
}

inline int cmd_probe(Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const Problem p = load_problem(single_model(cfg), cfg.stop_set);
    const StoppingSet& s = p.stopping_set();
    const std::size_t k = p.model.type_count();
    const PopulationState r = target_state(cfg, p);
    const MomentData md = moments(p.model);
    const SpectralSummary summary = subcritical_summary(p.model, md);
    Vector a = cfg.a.empty() ? Vector(k, 1.0 / static_cast<double>(k)) : parse_list(cfg.a);
    if (a.size() != k) throw PreconditionError("--a needs " + std::to_string(k) + " components");
    const auto grid = parse_grid(cfg.grid.empty() ? "100:500:8" : cfg.grid);
    const int cap = cfg.cap > 0 ? cfg.cap : 4000;
    const double tol = cfg.tol > 0 ? cfg.tol : 1e-10;
    const CyclicModel cm = build_cyclic_model(summary, a, s);
    const auto space = make_space(p.model, cap);
    const TransitionKernel kernel = one_step_kernel(p.model, space);
    ctx.log.info("probing " + std::to_string(grid.size()) + " totals at cap " + std::to_string(cap));
    const ProbeReport rep = periodicity_probe(kernel, s, r, a, grid, md.A, summary, tol);

    Output o(cfg.out, ctx.out);
    write_csv(o.stream(), rep);
    ctx.err << "theta " << format_double(rep.theta) << (rep.pre_asymptotic ? " (pre-asymptotic rows present)" : "")
            << '\n';
    if (rep.rows.size() >= 2 * static_cast<std::size_t>(cm.r0)) {
        try {
            const AmplitudeFit fit = fit_cyclic_amplitudes(rep, cm);
            ctx.err << "fitted amplitudes (least-squares surrogate):";
            for (double c : fit.c) ctx.err << ' ' << format_double(c);
            ctx.err << ", rms " << format_double(fit.rms_residual) << (fit.rank_deficient ? ", rank deficient" : "")
                    << '\n';
        } catch (const NumericalError& e) {
            ctx.err << "amplitude fit skipped: " << e.what() << '\n';
        }
    }
    if (!(rep.theta > 0.0)) throw CheckFailure("theta is not positive");
    return kOk;
}

// ---- verify ----

struct CheckResult {
    std::string model;
    std::string name;
    bool passed = false;
    double seconds = 0.0;
    std::string detail;
};

inline TransitionKernel perturb_kernel(const TransitionKernel& k) {
    std::vector<KernelRow> rows;
    for (std::size_t i = 0; i < k.size(); ++i) rows.push_back(k.row(i));
    // the row of the first state with more than one successor
    for (auto& row : rows) {
        if (row.p.size() > 1) {
            row.p.front() += 1e-6;
            row.p.back() -= 1e-6 * 0.5;
            break;
        }
    }
    return TransitionKernel(k.space_ptr(), k.steps(), std::move(rows));
}

inline std::vector<CheckResult> verify_model(const Problem& p, int cap, int t_max, bool inject_fault) {
    std::vector<CheckResult> out;
    auto run = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        CheckResult r{p.path, name, false, 0.0, ""};
        try {
            auto [ok, detail] = body();
            r.passed = ok;
            r.detail = detail;
        } catch (const std::exception& e) {
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(r));
    };
    auto within = [](double v, double tol) { return std::make_pair(v <= tol, format_double(v)); };

    const std::size_t k = p.model.type_count();
    const auto space = make_space(p.model, cap);
    TransitionKernel kernel = one_step_kernel(p.model, space);
    if (inject_fault) kernel = perturb_kernel(kernel);
    const MomentData md = moments(p.model);

    run("validation", [&] {
        std::optional<std::vector<PopulationState>> members;
        if (p.s) members = p.s->members();
        const ValidationReport rep = validate_model(p.model, members);
        return std::make_pair(rep.structural_ok(), std::string(rep.structural_ok() ? "structural checks pass" : "structural failure"));
    });
    run("kernel row sums", [&] { return within(kernel.max_row_defect(), 1e-12); });
    run("chapman-kolmogorov", [&] {
        // composed kernel against two forward steps of each indicator row
        const TransitionKernel two = compose(kernel, kernel);
        double worst = 0.0;
        for (std::size_t i = 0; i < two.size(); ++i) {
            Vector pi(two.size(), 0.0);
            pi[i] = 1.0;
            double ov = 0.0;
            pi = kernel.apply_left(pi, ov);
            pi = kernel.apply_left(pi, ov);
            for (std::size_t j = 0; j < two.size(); ++j) worst = std::max(worst, std::abs(two.prob(i, j) - pi[j]));
            worst = std::max(worst, std::abs(two.overflow_mass(i) - ov));
        }
        return within(worst, 1e-12);
    });
    run("generating-function semigroup", [&] {
        std::mt19937_64 rng(12345);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double worst = 0.0;
        for (int rep = 0; rep < 10; ++rep) {
            Vector s(k);
            for (double& v : s) v = u(rng);
            const int t = 1 + rep % 4;
            const int tau = 1 + (rep * 3) % 4;
            const Vector lhs = iterate_h(p.model, t + tau, s).h;
            const Vector rhs = iterate_h(p.model, t, iterate_h(p.model, tau, s).h).h;
            for (std::size_t i = 0; i < k; ++i) worst = std::max(worst, std::abs(lhs[i] - rhs[i]));
        }
        return within(worst, 1e-12);
    });
    run("kernel extinction column equals h(t, 0)", [&] {
        double worst = 0.0;
        Vector col(kernel.size(), 0.0);
        col[space->zero_index()] = 1.0;
        for (int t = 1; t <= 6; ++t) {
            col = kernel.apply(col);
            const Vector h = iterate_h(p.model, t, Vector(k, 0.0)).h;
            for (std::size_t i = 1; i <= k; ++i) worst = std::max(worst, std::abs(col[space->index(unit_state(i, k))] - h[i - 1]));
        }
        // truncation below the cap can only lose mass; states of total t*max_offspring stay exact for small t
        return within(worst, 1e-12);
    });
    run("mean dominance", [&] { return within(mean_dominance(p.model, md.A, make_s_grid(k, 200)), 1e-12); });
    if (p.s) {
        const StoppingSet& s = *p.s;
        run("three-route equality", [&] {
            double worst = 0.0;
            const RestrictedKernel restricted = restricted_kernel(kernel, s, t_max);
            const FreeColumns free = free_columns(kernel, s, t_max);
            const StopCoefficients coeffs = stop_coefficients(restricted, *space, t_max);
            for (const auto& r : s.members()) {
                const AbsorptionTable d = absorption_direct(kernel, s, r, t_max);
                const AbsorptionTable f = absorption_formula(free, coeffs, r);
                const AbsorptionTable rs = absorption_restricted_sum(restricted, r);
                for (int t = 1; t <= t_max; ++t)
                    for (std::size_t i = 0; i < kernel.size(); ++i) {
                        if (i == space->zero_index() || s.contains(space->state(i))) continue;
                        worst = std::max(worst, std::abs(d.at(t, i) - f.at(t, i)));
                        worst = std::max(worst, std::abs(d.at(t, i) - rs.at(t, i)));
                    }
            }
            return within(worst, 1e-10);
        });
        run("inclusion-exclusion identity", [&] {
            const int l = std::min(t_max, 12);
            const RestrictedKernel a = restricted_kernel(kernel, s, l);
            const RestrictedKernel b = restricted_kernel_inclusion_exclusion(kernel, s, l);
            double worst = 0.0;
            for (int t = 1; t <= l; ++t)
                for (std::size_t r = 0; r < s.size(); ++r)
                    for (std::size_t i = 0; i < kernel.size(); ++i)
                        worst = std::max(worst, std::abs(a.value(t, i, r) - b.value(t, i, r)));
            return within(worst, 1e-12);
        });
    }
    const Classification c = classify(md);
    if (c.noncyclic()) {
        run("perron residuals", [&] {
            const SpectralSummary ss = perron_triple(md);
            return within(std::max(ss.residual_right, ss.residual_left), 1e-10);
        });
    }
    run("monte carlo worker invariance", [&] {
        const PopulationState from = unit_state(1, k);
        auto total = [](const PopulationState& x) { return x.total(); };
        const Estimate e1 = estimate_step_mean(from, p.model, total, 2000, 7, 1);
        const Estimate e3 = estimate_step_mean(from, p.model, total, 2000, 7, 3);
        const bool same = e1.value == e3.value && e1.std_error == e3.std_error;
        return std::make_pair(same, format_double(e1.value) + " vs " + format_double(e3.value));
    });
    return out;
}

inline int cmd_verify(Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    if (cfg.models.empty()) throw PreconditionError("verify needs at least one --model");
    std::vector<Problem> problems;
    for (const auto& m : cfg.models) problems.push_back(load_problem(m, cfg.stop_set));
    const int cap = cfg.cap > 0 ? cfg.cap : 30;
    const int t_max = cfg.t > 0 ? cfg.t : 10;
    Output o(cfg.out, ctx.out);
    CsvWriter csv(o.stream());
    csv.row("model", "check", "status", "seconds", "detail");
    bool ok = true;
    for (const auto& p : problems) {
        ctx.log.info("verifying " + p.path);
        for (const auto& r : verify_model(p, cap, t_max, cfg.inject_fault)) {
            csv.row(r.model, r.name, r.passed ? "PASS" : "FAIL", r.seconds, r.detail);
            ok = ok && r.passed;
        }
    }
    return ok ? kOk : kMathFailure;
}

inline void add_common(CLI::App* sub, RunConfig& cfg, bool many_models = false) {
    if (many_models) {
        sub->add_option("--model", cfg.models, "model file(s)")->required()->check(CLI::ExistingFile);
    } else {
        sub->add_option("--model", cfg.models, "model file")->required()->expected(1)->check(CLI::ExistingFile);
    }
    sub->add_option("--stop-set", cfg.stop_set, "stopping-set file overriding the model's")->check(CLI::ExistingFile);
    sub->add_option("--cap", cfg.cap, "largest total population in the state space")->check(CLI::PositiveNumber);
    sub->add_option("--t", cfg.t, "horizon")->check(CLI::PositiveNumber);
    sub->add_option("--tol", cfg.tol, "tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--seed", cfg.seed, "random seed");
    sub->add_option("--reps", cfg.reps, "Monte Carlo repetitions")->check(CLI::PositiveNumber);
    sub->add_option("--workers", cfg.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", cfg.out, "output file (default stdout)");
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig cfg;
    CLI::App app{"Absorption probabilities of stopped multitype branching processes"};
    app.set_config("--config", "", "TOML/INI file with option defaults; flags take precedence");
    app.allow_config_extras(false);
    app.require_subcommand(1);

    auto* classify_cmd = app.add_subcommand("classify", "type-graph structure, Perron triple and survival constants");
    add_common(classify_cmd, cfg);
    auto* stop = app.add_subcommand("stop-prob", "q^n_r(t) by three independent routes");
    add_common(stop, cfg);
    stop->add_option("--n", cfg.n, "start state, e.g. [1,0]");
    stop->add_option("--r", cfg.r, "target state in S");
    auto* series = app.add_subcommand("series", "limiting absorption probability by the series representation");
    add_common(series, cfg);
    series->add_option("--n", cfg.n, "start state");
    series->add_option("--r", cfg.r, "target state in S");
    auto* yag = app.add_subcommand("yaglom", "conditional limit law and its functional-equation residual");
    add_common(yag, cfg);
    yag->add_option("--j", cfg.j, "source type (1-based)");
    auto* probe = app.add_subcommand("probe", "periodicity probe of q along a direction");
    add_common(probe, cfg);
    probe->add_option("--r", cfg.r, "target state in S");
    probe->add_option("--a", cfg.a, "direction, comma separated (default uniform)");
    probe->add_option("--grid", cfg.grid, "lo:hi:points or a comma-separated list of totals");
    auto* verify = app.add_subcommand("verify", "run the invariant checks on one or more models");
    add_common(verify, cfg, true);
    verify->add_flag("--inject-fault", cfg.inject_fault, "perturb one kernel row before checking");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageFailure;
    }

    Context ctx{cfg, out, err, Logger(err, log_level_from_env())};
    try {
        if (*classify_cmd) return cmd_classify(ctx);
        if (*stop) return cmd_stop_prob(ctx);
        if (*series) return cmd_series(ctx);
        if (*yag) return cmd_yaglom(ctx);
        if (*probe) return cmd_probe(ctx);
        if (*verify) return cmd_verify(ctx);
    } catch (const CheckFailure& e) {
        err << "check failed: " << e.what() << '\n';
        return kMathFailure;
    } catch (const CapacityError& e) {
        err << "capacity: " << e.what() << '\n';
        return kMathFailure;
    } catch (const NumericalError& e) {
        err << "numerical: " << e.what() << '\n';
        return kMathFailure;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kUsageFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsageFailure;
    }
    return kUsageFailure;
}

}  // namespace bpstop::cli
