#pragma once

// Experiment harness: spec parsing, the pipelines behind each experiment id,
// and deterministic CSV / JSON emission of result rows.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cfomimo/analysis.hpp"
#include "cfomimo/errors.hpp"
#include "cfomimo/estimators.hpp"
#include "cfomimo/montecarlo.hpp"
#include "cfomimo/receiver.hpp"
#include "cfomimo/sysmodel.hpp"

namespace cfomimo {

inline const std::vector<std::string>& experiment_ids() {
    static const std::vector<std::string> ids = {"mse-sweep",  "tradeoff",           "rate-vs-nd",
                                                 "array-gain", "phasor-convergence", "validate-sinr"};
    return ids;
}

/// Everything one experiment run needs. Defaults reproduce the reference setup of
/// the chosen experiment (see defaults_for()).
struct ExperimentSpec {
    std::string experiment;

    // Base system.
    int M = 80, K = 10, L = 5, N = 2000, N_u = 5000;
    double alpha = 1.6;
    double gamma_db = -10.0;
    double sigma2 = 1.0;
    double delta_max = std::numbers::pi / 2500.0;

    // Grids (an empty list means "use the base value").
    std::vector<int> M_values, N_values, N_u_values;

    // alpha* rule.
    bool alpha_search = false;
    double alpha_min = 1.0, alpha_max = 2.0, alpha_step = 0.1, alpha_delta = 0.02;

    // Required-SNR search.
    double target_rate = 1.0;
    double snr_lo_db = -25.0, snr_hi_db = 0.0, snr_tol_db = 0.05;

    // phasor-convergence: gamma_db(M) = gamma_db - 5 log10(M / M_ref).
    int M_ref = 20;

    // validate-sinr.
    int cfo_grouping = 1;

    int user = 0;
    int trials = 200;
    std::uint64_t seed = 1;
    int workers = 0;
    std::string out = "-";
    std::string format = "csv";
};

/// Reference defaults per experiment.
inline ExperimentSpec defaults_for(const std::string& id) {
    ExperimentSpec s;
    s.experiment = id;
    if (id == "mse-sweep") {
        s.M = 80;
        s.gamma_db = -10.0;
        s.alpha = 1.6;
        s.N_values = {500, 1000, 2000, 4000};
    } else if (id == "tradeoff") {
        s.M = 80;
        s.gamma_db = -12.0;
        s.N_values = {500, 1000, 2000};
    } else if (id == "rate-vs-nd") {
        s.M = 40;
        s.gamma_db = -10.0;
        s.N = 2000;
        s.N_u_values = {2000, 3000, 4000, 5000};
        s.alpha_search = true;
    } else if (id == "array-gain") {
        s.M_values = {40, 80};
        s.N = 2000;
        s.alpha = 1.6;
    } else if (id == "phasor-convergence") {
        s.M_values = {20, 40, 80, 160};
        s.gamma_db = -14.0;
        s.alpha = 1.6;
        s.trials = 10000;
    } else if (id == "validate-sinr") {
        s.M = 40;
        s.gamma_db = -10.0;
        s.alpha = 1.4;
        s.trials = 10000;
    } else {
        throw ConfigError("unknown experiment '" + id + "'");
    }
    return s;
}

/// Applies flat key/value overrides (a JSON object) onto a spec. Unknown keys
/// are rejected so typos do not silently fall back to defaults.
inline void apply_overrides(ExperimentSpec& s, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "experiment") {
                if (v.get<std::string>() != s.experiment)
                    throw ConfigError("config is for experiment '" + v.get<std::string>() + "'");
            } else if (key == "M") s.M = v.get<int>();
            else if (key == "K") s.K = v.get<int>();
            else if (key == "L") s.L = v.get<int>();
            else if (key == "N") s.N = v.get<int>();
            else if (key == "N_u") s.N_u = v.get<int>();
            else if (key == "alpha") s.alpha = v.get<double>();
            else if (key == "gamma_db") s.gamma_db = v.get<double>();
            else if (key == "sigma2") s.sigma2 = v.get<double>();
            else if (key == "delta_max") s.delta_max = v.get<double>();
            else if (key == "M_values") s.M_values = v.get<std::vector<int>>();
            else if (key == "N_values") s.N_values = v.get<std::vector<int>>();
            else if (key == "N_u_values") s.N_u_values = v.get<std::vector<int>>();
            else if (key == "alpha_search") s.alpha_search = v.get<bool>();
            else if (key == "alpha_min") s.alpha_min = v.get<double>();
            else if (key == "alpha_max") s.alpha_max = v.get<double>();
            else if (key == "alpha_step") s.alpha_step = v.get<double>();
            else if (key == "alpha_delta") s.alpha_delta = v.get<double>();
            else if (key == "target_rate") s.target_rate = v.get<double>();
            else if (key == "snr_lo_db") s.snr_lo_db = v.get<double>();
            else if (key == "snr_hi_db") s.snr_hi_db = v.get<double>();
            else if (key == "snr_tol_db") s.snr_tol_db = v.get<double>();
            else if (key == "M_ref") s.M_ref = v.get<int>();
            else if (key == "cfo_grouping") s.cfo_grouping = v.get<int>();
            else if (key == "user") s.user = v.get<int>();
            else if (key == "trials") s.trials = v.get<int>();
            else if (key == "seed") s.seed = v.get<std::uint64_t>();
            else if (key == "workers") s.workers = v.get<int>();
            else if (key == "out") s.out = v.get<std::string>();
            else if (key == "format") s.format = v.get<std::string>();
            else throw ConfigError("unknown config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }
}

inline ExperimentSpec load_spec(const std::string& id, const std::string& config_path) {
    ExperimentSpec s = defaults_for(id);
    if (config_path.empty()) return s;
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config file " + config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + config_path + ": " + e.what());
    }
    apply_overrides(s, j);
    return s;
}

/// The base SystemConfig of a spec (grids not applied).
inline SystemConfig base_config(const ExperimentSpec& s) {
    SystemConfig c;
    c.M = s.M;
    c.K = s.K;
    c.L = s.L;
    c.N = s.N;
    c.N_u = s.N_u;
    c.alpha = s.alpha;
    c.sigma2 = s.sigma2;
    c.delta_max = s.delta_max;
    c.set_gamma_db(s.gamma_db);
    return c;
}

// --- rows -------------------------------------------------------------------

/// Parameter columns shared by every row, in CSV order.
inline const std::vector<std::string>& param_columns() {
    static const std::vector<std::string> cols = {"M", "K", "L", "N", "N_u", "alpha", "gamma_db", "t"};
    return cols;
}

struct ResultRow {
    std::string experiment;
    std::map<std::string, double> params;  ///< keys from param_columns(); absent = not applicable
    std::string metric;
    double value = 0.0;
    std::optional<double> std_err;
    int trials = 0;
    std::uint64_t seed = 0;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline std::map<std::string, double> params_of(const SystemConfig& c, bool with_alpha = true) {
    std::map<std::string, double> p{{"M", c.M}, {"K", c.K}, {"L", c.L}, {"N", c.N}, {"N_u", c.N_u},
                                    {"gamma_db", c.gamma_db()}};
    if (with_alpha) p["alpha"] = c.alpha;
    return p;
}

/// "%.12g": the decimal form every emitted value goes through.
inline std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline double round_12(double v) { return std::stod(format_value(v)); }

// --- pipelines ------------------------------------------------------------------

namespace detail {

// Stable substream id of a grid point, independent of its position in the
// grid: FNV-1a of the point label.
inline std::uint64_t point_key(const std::string& label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : label) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <class Fn>
auto with_context(const std::string& where, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (Error& e) {
        e.add_context(where);
        throw;
    }
}

inline TrialPlan plan_for(const ExperimentSpec& s, const std::string& label) {
    return TrialPlan{s.seed, point_key(s.experiment + "|" + label), s.trials, s.workers};
}

struct RowSink {
    const ExperimentSpec& spec;
    std::vector<ResultRow>& rows;

    void add(std::map<std::string, double> params, std::string metric, double value,
             std::optional<double> se = std::nullopt, std::optional<int> trials = std::nullopt) {
        ResultRow r;
        r.experiment = spec.experiment;
        for (auto& [k, v] : params) v = round_12(v);
        r.params = std::move(params);
        r.metric = std::move(metric);
        r.value = round_12(value);
        if (se) r.std_err = round_12(*se);
        r.trials = trials.value_or(spec.trials);
        r.seed = spec.seed;
        rows.push_back(std::move(r));
    }
};

}  // namespace detail

/// First ladder value whose grid resolves a nonzero offset inside the CFO
/// support (half spacing pi/N^alpha below delta_max). Coarser grids map every
/// CFO to the zero offset, so their rates coincide and the relative-change
/// test would stop on them trivially.
inline AlphaLadder resolving_ladder(AlphaLadder ladder, int N, double delta_max) {
    for (double a : ladder.values()) {
        if (build_grid(N, a, delta_max).spacing / 2.0 < delta_max) {
            ladder.min = a;
            return ladder;
        }
    }
    throw NotFound("no alpha on the ladder resolves the CFO support");
}

/// alpha* for a configuration with the periodogram rate of user k as the
/// evaluator. Every ladder value shares the plan's substreams.
inline AlphaStarResult alpha_star_for(const SystemConfig& cfg, const PowerDelayProfile& pdp,
                                      const TrialPlan& plan, const AlphaLadder& ladder, double delta,
                                      int k = 0) {
    return find_alpha_star(resolving_ladder(ladder, cfg.N, cfg.delta_max), delta, [&](double a) {
        SystemConfig c = cfg;
        c.alpha = a;
        return rate_for_mode(c, pdp, CfoMode::periodogram, plan, k).rate;
    });
}

namespace detail {

inline void check_common(const ExperimentSpec& s) {
    if (s.trials < 1) throw ConfigError("trials must be >= 1 (got " + std::to_string(s.trials) + ")");
    if (s.format != "csv" && s.format != "json") throw ConfigError("format must be csv or json");
    if (s.user < 0 || s.user >= s.K) throw ConfigError("user index out of range");
}

inline std::vector<int> or_base(const std::vector<int>& v, int base) {
    return v.empty() ? std::vector<int>{base} : v;
}

inline AlphaLadder ladder_of(const ExperimentSpec& s) { return {s.alpha_min, s.alpha_max, s.alpha_step}; }

inline std::vector<ResultRow> run_mse_sweep(const ExperimentSpec& s) {
    const auto Ns = or_base(s.N_values, s.N);
    std::vector<SystemConfig> cfgs;
    for (int N : Ns) {
        SystemConfig c = base_config(s);
        c.N = N;
        c.N_u = std::max(c.N_u, N);
        with_context("N=" + std::to_string(N), [&] { validate_config(c); });
        cfgs.push_back(c);
    }
    const auto pdp = PowerDelayProfile::uniform(s.K, s.L);
    std::vector<ResultRow> rows;
    RowSink sink{s, rows};
    std::vector<MsePoint> perio, corr;
    for (const auto& c : cfgs) {
        const std::string label = "N=" + std::to_string(c.N);
        with_context(label, [&] {
            const auto plan = plan_for(s, label);
            perio.push_back(mse_point(c.N, collect_residuals(c, pdp, CfoMode::periodogram, plan)));
            sink.add(params_of(c), "mse_periodogram", perio.back().mse, perio.back().std_err);
            corr.push_back(mse_point(c.N, collect_residuals(c, pdp, CfoMode::correlation, plan)));
            sink.add(params_of(c, false), "mse_correlation", corr.back().mse, corr.back().std_err);
        });
    }
    const SystemConfig b = base_config(s);
    auto summary = params_of(b);
    summary.erase("N");
    summary.erase("N_u");
    const MseResult fp = with_context("periodogram slope", [&] { return mse_and_slope(perio); });
    const MseResult fc = with_context("correlation slope", [&] { return mse_and_slope(corr); });
    sink.add(summary, "slope_periodogram", fp.slope);
    sink.add(summary, "intercept_periodogram", fp.intercept);
    summary.erase("alpha");
    sink.add(summary, "slope_correlation", fc.slope);
    sink.add(summary, "intercept_correlation", fc.intercept);
    return rows;
}

inline std::vector<ResultRow> run_tradeoff(const ExperimentSpec& s) {
    const auto Ns = or_base(s.N_values, s.N);
    const auto ladder = ladder_of(s);
    for (int N : Ns) {
        SystemConfig c = base_config(s);
        c.N = N;
        with_context("N=" + std::to_string(N), [&] { validate_config(c); });
    }
    const auto pdp = PowerDelayProfile::uniform(s.K, s.L);
    std::vector<ResultRow> rows;
    RowSink sink{s, rows};
    for (int N : Ns) {
        const std::string label = "N=" + std::to_string(N);
        with_context(label, [&] {
            SystemConfig c = base_config(s);
            c.N = N;
            const auto plan = plan_for(s, label);
            std::map<double, double> rate_at;
            for (double a : ladder.values()) {
                c.alpha = a;
                const double r = rate_for_mode(c, pdp, CfoMode::periodogram, plan, s.user).rate;
                rate_at[a] = r;
                sink.add(params_of(c), "rate_periodogram", r);
                sink.add(params_of(c), "ops_periodogram", static_cast<double>(op_count_periodogram(c, build_grid(c)).total()), std::nullopt, 0);
            }
            const auto star = find_alpha_star(resolving_ladder(ladder, N, c.delta_max), s.alpha_delta,
                                              [&](double a) { return rate_at.at(a); });
            auto p = params_of(c, false);
            sink.add(p, "alpha_star", star.alpha_star);
            sink.add(p, "rate_correlation", rate_for_mode(c, pdp, CfoMode::correlation, plan, s.user).rate);
            sink.add(p, "ops_correlation", static_cast<double>(op_count_correlation(c).total()), std::nullopt, 0);
            sink.add(p, "rate_zero_cfo", rate_for_mode(c, pdp, CfoMode::ideal, plan, s.user).rate, std::nullopt, 0);
        });
    }
    return rows;
}

inline std::vector<ResultRow> run_rate_vs_nd(const ExperimentSpec& s) {
    const auto Nus = or_base(s.N_u_values, s.N_u);
    for (int Nu : Nus) {
        SystemConfig c = base_config(s);
        c.N_u = Nu;
        with_context("N_u=" + std::to_string(Nu), [&] { validate_config(c); });
    }
    const auto pdp = PowerDelayProfile::uniform(s.K, s.L);
    std::vector<ResultRow> rows;
    RowSink sink{s, rows};
    for (int Nu : Nus) {
        const std::string label = "N_u=" + std::to_string(Nu);
        with_context(label, [&] {
            SystemConfig c = base_config(s);
            c.N_u = Nu;
            const auto plan = plan_for(s, label);
            if (s.alpha_search)
                c.alpha = alpha_star_for(c, pdp, plan, ladder_of(s), s.alpha_delta, s.user).alpha_star;
            const double zero = rate_for_mode(c, pdp, CfoMode::ideal, plan, s.user).rate;
            const double perio = rate_for_mode(c, pdp, CfoMode::periodogram, plan, s.user).rate;
            const double corr = rate_for_mode(c, pdp, CfoMode::correlation, plan, s.user).rate;
            auto p = params_of(c, false);
            p["N_D"] = validate_config(c).N_D;
            const auto pa = params_of(c);
            sink.add(p, "rate_zero_cfo", zero, std::nullopt, 0);
            sink.add(pa, "rate_periodogram", perio);
            sink.add(p, "rate_correlation", corr);
            sink.add(pa, "loss_pct_periodogram", 100.0 * (1.0 - perio / zero));
            sink.add(p, "loss_pct_correlation", 100.0 * (1.0 - corr / zero));
            sink.add(p, "alpha_used", c.alpha);
        });
    }
    return rows;
}

inline std::vector<ResultRow> run_array_gain(const ExperimentSpec& s) {
    const auto Ms = or_base(s.M_values, s.M);
    for (int M : Ms) {
        SystemConfig c = base_config(s);
        c.M = M;
        with_context("M=" + std::to_string(M), [&] { validate_config(c); });
    }
    const auto pdp = PowerDelayProfile::uniform(s.K, s.L);
    const BisectionOptions bis{s.snr_lo_db, s.snr_hi_db, s.snr_tol_db, 40, 5};
    std::vector<ResultRow> rows;
    RowSink sink{s, rows};
    std::optional<double> prev;
    for (int M : Ms) {
        const std::string label = "M=" + std::to_string(M);
        with_context(label, [&] {
            SystemConfig c = base_config(s);
            c.M = M;
            const auto plan = plan_for(s, label);
            auto rate_at = [&](CfoMode mode) {
                return [&, mode](double db) {
                    SystemConfig g = c;
                    g.set_gamma_db(db);
                    return rate_for_mode(g, pdp, mode, plan, s.user).rate;
                };
            };
            const auto req = required_snr(s.target_rate, rate_at(CfoMode::periodogram), bis);
            const auto req0 = required_snr(s.target_rate, rate_at(CfoMode::ideal), bis);
            auto p = params_of(c);
            p.erase("gamma_db");
            sink.add(p, "required_snr_db_periodogram", req.gamma_db, 0.5 * (req.hi_db - req.lo_db));
            p.erase("alpha");
            sink.add(p, "required_snr_db_zero_cfo", req0.gamma_db, 0.5 * (req0.hi_db - req0.lo_db), 0);
            if (prev) sink.add(p, "snr_saving_db_vs_previous_M", *prev - req.gamma_db);
            prev = req.gamma_db;
        });
    }
    return rows;
}

inline std::vector<ResultRow> run_phasor_convergence(const ExperimentSpec& s) {
    const auto Ms = or_base(s.M_values, s.M);
    if (s.M_ref < 1) throw ConfigError("M_ref must be >= 1");
    std::vector<SystemConfig> cfgs;
    for (int M : Ms) {
        SystemConfig c = base_config(s);
        c.M = M;
        c.set_gamma_db(s.gamma_db - 5.0 * std::log10(static_cast<double>(M) / s.M_ref));
        with_context("M=" + std::to_string(M), [&] { validate_config(c); });
        cfgs.push_back(c);
    }
    const auto pdp = PowerDelayProfile::uniform(s.K, s.L);
    std::vector<ResultRow> rows;
    RowSink sink{s, rows};
    std::optional<double> prev;
    for (const auto& c : cfgs) {
        const std::string label = "M=" + std::to_string(c.M);
        with_context(label, [&] {
            const FramePlan f = validate_config(c);
            const int k = s.user;
            const int t = f.data_end;
            const int tau = t - k * c.L;
            const Eigen::MatrixXd res = collect_residuals(c, pdp, CfoMode::periodogram, plan_for(s, label));
            const int R = static_cast<int>(res.rows());
            double sc = 0, sc2 = 0, ss = 0;
            for (int r = 0; r < R; ++r) {
                const double a = res(r, k) * tau;
                sc += std::cos(a);
                sc2 += std::cos(a) * std::cos(a);
                ss += -std::sin(a);
            }
            const double re = sc / R, im = ss / R;
            const double se = R > 1 ? std::sqrt(std::max(0.0, sc2 / R - re * re) / (R - 1.0)) : 0.0;
            auto p = params_of(c);
            p["t"] = t;
            sink.add(p, "phi_real", re, se);
            sink.add(p, "phi_abs", std::hypot(re, im));
            if (prev) sink.add(p, "phi_real_abs_diff_vs_previous_M", std::abs(re - *prev));
            prev = re;
        });
    }
    return rows;
}

inline std::vector<ResultRow> run_validate_sinr(const ExperimentSpec& s) {
    SystemConfig c = base_config(s);
    const FramePlan f = with_context("base config", [&] { return validate_config(c); });
    const auto pdp = PowerDelayProfile::uniform(s.K, s.L);
    const std::vector<int> times = {f.data_start, f.data_end};
    EmpiricalSinrOptions opt;
    opt.mode = CfoMode::periodogram;
    opt.plan = plan_for(s, "base");
    opt.cfo_grouping = s.cfo_grouping;
    const auto rep = with_context("base config", [&] {
        return measure_empirical_sinr(c, pdp, f, times, s.user, opt);
    });
    const auto phasors = phasor_mean(rep.residuals, f, s.user);
    std::vector<ResultRow> rows;
    RowSink sink{s, rows};
    for (const auto& e : rep.points) {
        const double analytic = analytic_sinr(c, pdp, phasors, s.user, e.t);
        auto p = params_of(c);
        p["t"] = e.t;
        sink.add(p, "sinr_empirical", e.sinr, e.sinr_stderr);
        sink.add(p, "sinr_analytic", analytic, std::nullopt, phasors.R);
        sink.add(p, "sinr_rel_error", std::abs(e.sinr - analytic) / analytic);
    }
    return rows;
}

}  // namespace detail

/// Checks a spec without running anything: common fields, then every grid
/// point, with the failing point recorded in the error context.
inline void validate_spec(const ExperimentSpec& s) {
    detail::check_common(s);
    const std::string& id = s.experiment;
    if (s.trials < 100)
        throw InsufficientTrials(id + " needs at least 100 trials per grid point (got " +
                                 std::to_string(s.trials) + ")");
    auto check = [&](const std::string& label, SystemConfig c, bool needs_correlation) {
        detail::with_context(label, [&] {
            validate_config(c);
            if (needs_correlation) op_count_correlation(c);
        });
    };
    if (id == "mse-sweep" || id == "tradeoff") {
        if (id == "tradeoff" || s.alpha_search) resolving_ladder(detail::ladder_of(s), s.N, s.delta_max);
        for (int N : detail::or_base(s.N_values, s.N)) {
            SystemConfig c = base_config(s);
            c.N = N;
            if (id == "mse-sweep") c.N_u = std::max(c.N_u, N);
            check("N=" + std::to_string(N), c, true);
        }
    } else if (id == "rate-vs-nd") {
        for (int Nu : detail::or_base(s.N_u_values, s.N_u)) {
            SystemConfig c = base_config(s);
            c.N_u = Nu;
            check("N_u=" + std::to_string(Nu), c, true);
        }
    } else if (id == "array-gain" || id == "phasor-convergence") {
        if (s.M_ref < 1) throw ConfigError("M_ref must be >= 1");
        for (int M : detail::or_base(s.M_values, s.M)) {
            SystemConfig c = base_config(s);
            c.M = M;
            check("M=" + std::to_string(M), c, false);
        }
    } else if (id == "validate-sinr") {
        check("base config", base_config(s), false);
        if (s.cfo_grouping < 1) throw ConfigError("cfo_grouping must be >= 1");
    } else {
        throw ConfigError("unknown experiment '" + id + "'");
    }
}

/// Runs the pipeline of spec.experiment. Every grid point is validated before
/// any Monte Carlo work starts; errors carry the grid point in their context.
inline std::vector<ResultRow> run_experiment(const ExperimentSpec& s) {
    validate_spec(s);
    const std::string& id = s.experiment;
    if (id == "mse-sweep") return detail::run_mse_sweep(s);
    if (id == "tradeoff") return detail::run_tradeoff(s);
    if (id == "rate-vs-nd") return detail::run_rate_vs_nd(s);
    if (id == "array-gain") return detail::run_array_gain(s);
    if (id == "phasor-convergence") return detail::run_phasor_convergence(s);
    if (id == "validate-sinr") return detail::run_validate_sinr(s);
    throw ConfigError("unknown experiment '" + id + "'");
}

// --- emission -----------------------------------------------------------------

inline const std::vector<std::string>& csv_header() {
    static const std::vector<std::string> h = [] {
        std::vector<std::string> v{"experiment"};
        for (const auto& c : param_columns()) v.push_back(c);
        for (const char* c : {"metric", "value", "stderr", "trials", "seed"}) v.emplace_back(c);
        return v;
    }();
    return h;
}

inline std::string csv_field(const std::string& f) {
    if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
    std::string q = "\"";
    for (char ch : f) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + '"';
}

namespace detail {

// Parameters outside param_columns() (e.g. N_D) are folded into the metric
// cell as "metric[key=value;...]" so every row keeps the fixed header.
inline std::string metric_cell(const ResultRow& r) {
    std::string extra;
    for (const auto& [k, v] : r.params) {
        if (std::find(param_columns().begin(), param_columns().end(), k) != param_columns().end()) continue;
        extra += (extra.empty() ? "" : ";") + k + "=" + format_value(v);
    }
    return extra.empty() ? r.metric : r.metric + "[" + extra + "]";
}

}  // namespace detail

inline std::string to_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    const auto& h = csv_header();
    for (std::size_t i = 0; i < h.size(); ++i) os << (i ? "," : "") << h[i];
    os << "\r\n";
    for (const auto& r : rows) {
        os << csv_field(r.experiment);
        for (const auto& c : param_columns()) {
            os << ',';
            if (auto it = r.params.find(c); it != r.params.end()) os << format_value(it->second);
        }
        os << ',' << csv_field(detail::metric_cell(r)) << ',' << format_value(r.value) << ',';
        if (r.std_err) os << format_value(*r.std_err);
        os << ',' << r.trials << ',' << r.seed << "\r\n";
    }
    return os.str();
}

inline nlohmann::ordered_json to_json(const std::vector<ResultRow>& rows) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json o;
        o["experiment"] = r.experiment;
        for (const auto& c : param_columns()) {
            auto it = r.params.find(c);
            o[c] = it == r.params.end() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(it->second);
        }
        o["metric"] = detail::metric_cell(r);
        o["value"] = r.value;
        o["stderr"] = r.std_err ? nlohmann::ordered_json(*r.std_err) : nlohmann::ordered_json(nullptr);
        o["trials"] = r.trials;
        o["seed"] = r.seed;
        arr.push_back(std::move(o));
    }
    return arr;
}

/// Writes rows as csv or json to path ("-" for stdout).
inline void emit_results(const std::vector<ResultRow>& rows, const std::string& format,
                         const std::string& path) {
    if (rows.empty()) throw ConfigError("no result rows to emit");
    std::string text;
    if (format == "csv") text = to_csv(rows);
    else if (format == "json") text = to_json(rows).dump(2) + "\n";
    else throw ConfigError("format must be csv or json, got '" + format + "'");
    if (path == "-") {
        std::cout << text << std::flush;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    out.close();
    if (!out) throw IoError("write to " + path + " failed");
}

// --- parse-back ------------------------------------------------------------------

namespace detail {

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> recs;
    std::vector<std::string> rec;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
            any = true;
        } else if (ch == ',') {
            rec.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (ch == '\r' || ch == '\n') {
            if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                rec.push_back(std::move(field));
                recs.push_back(std::move(rec));
            }
            rec.clear();
            field.clear();
            any = false;
        } else {
            field += ch;
            any = true;
        }
    }
    if (any || !field.empty()) {
        rec.push_back(std::move(field));
        recs.push_back(std::move(rec));
    }
    return recs;
}

// Inverse of metric_cell().
inline void split_metric(ResultRow& r, const std::string& cell) {
    const auto lb = cell.find('[');
    if (lb == std::string::npos || cell.back() != ']') {
        r.metric = cell;
        return;
    }
    r.metric = cell.substr(0, lb);
    std::stringstream ss(cell.substr(lb + 1, cell.size() - lb - 2));
    std::string kv;
    while (std::getline(ss, kv, ';')) {
        const auto eq = kv.find('=');
        r.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }
}

}  // namespace detail

inline std::vector<ResultRow> read_results_csv(const std::string& text) {
    const auto recs = detail::parse_csv(text);
    if (recs.empty() || recs.front() != csv_header()) throw IoError("CSV header mismatch");
    const std::size_t np = param_columns().size();
    std::vector<ResultRow> rows;
    for (std::size_t i = 1; i < recs.size(); ++i) {
        const auto& f = recs[i];
        if (f.size() != csv_header().size()) throw IoError("CSV row " + std::to_string(i) + " has wrong width");
        ResultRow r;
        r.experiment = f[0];
        for (std::size_t c = 0; c < np; ++c)
            if (!f[1 + c].empty()) r.params[param_columns()[c]] = std::stod(f[1 + c]);
        detail::split_metric(r, f[1 + np]);
        r.value = std::stod(f[2 + np]);
        if (!f[3 + np].empty()) r.std_err = std::stod(f[3 + np]);
        r.trials = std::stoi(f[4 + np]);
        r.seed = std::stoull(f[5 + np]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<ResultRow> read_results_json(const std::string& text) {
    const auto arr = nlohmann::json::parse(text);
    std::vector<ResultRow> rows;
    for (const auto& o : arr) {
        ResultRow r;
        r.experiment = o.at("experiment").get<std::string>();
        for (const auto& c : param_columns())
            if (!o.at(c).is_null()) r.params[c] = o.at(c).get<double>();
        detail::split_metric(r, o.at("metric").get<std::string>());
        r.value = o.at("value").get<double>();
        if (!o.at("stderr").is_null()) r.std_err = o.at("stderr").get<double>();
        r.trials = o.at("trials").get<int>();
        r.seed = o.at("seed").get<std::uint64_t>();
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace cfomimo
