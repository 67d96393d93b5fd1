// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "cfomimo/harness.hpp"

using namespace cfomimo;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [miss]");
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

bool has(const ResultRow& r, const std::string& key, double v) {
    auto it = r.params.find(key);
    return it != r.params.end() && std::abs(it->second - v) < 1e-9;
}

double value_of(const std::vector<ResultRow>& rows, const std::string& metric,
                const std::vector<std::pair<std::string, double>>& where = {}) {
    for (const auto& r : rows) {
        if (r.metric != metric) continue;
        bool ok = true;
        for (const auto& [k, v] : where) ok = ok && has(r, k, v);
        if (ok) return r.value;
    }
    throw NotFound("no row for metric " + metric);
}

int failures = 0;

void run(int id, const std::string& title, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const Error& e) {
        o.pass = false;
        o.detail = std::string(e.kind()) + ": " + e.what() + (e.context().empty() ? "" : " @ " + e.context());
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, title.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::vector<ResultRow> mse_rows;

Outcome mse_slope_periodogram() {
    mse_rows = run_experiment(defaults_for("mse-sweep"));
    Outcome o;
    const double s = value_of(mse_rows, "slope_periodogram");
    o.check(s >= -3.5 && s <= -2.5, "slope " + fmt("%.3f", s) + " in [-3.5, -2.5]");
    return o;
}

Outcome mse_slope_correlation() {
    if (mse_rows.empty()) mse_rows = run_experiment(defaults_for("mse-sweep"));
    Outcome o;
    const double s = value_of(mse_rows, "slope_correlation");
    o.check(s >= -1.3 && s <= -0.7, "slope " + fmt("%.3f", s) + " in [-1.3, -0.7]");
    return o;
}

Outcome required_snr_per_m() {
    ExperimentSpec s = defaults_for("array-gain");
    s.M_values = {40, 80, 160};
    const auto rows = run_experiment(s);
    const double g40 = value_of(rows, "required_snr_db_periodogram", {{"M", 40}});
    const double g80 = value_of(rows, "required_snr_db_periodogram", {{"M", 80}});
    const double g160 = value_of(rows, "required_snr_db_periodogram", {{"M", 160}});
    Outcome o;
    o.check(std::abs(g40 + 9.9) <= 1.0, "M=40 " + fmt("%.2f", g40) + " dB vs -9.9 +- 1");
    o.check(std::abs(g80 + 12.53) <= 1.0, "M=80 " + fmt("%.2f", g80) + " dB vs -12.53 +- 1");
    const double d1 = g40 - g80, d2 = g80 - g160;
    o.check(d1 > d2 && d2 >= 1.2, "doubling deltas " + fmt("%.2f", d1) + ", " + fmt("%.2f", d2) +
                                      " dB decreasing and >= 1.2");
    return o;
}

std::vector<ResultRow> nd_rows;

Outcome staleness() {
    ExperimentSpec s = defaults_for("rate-vs-nd");
    s.N_u_values = {2000, 5000};
    nd_rows = run_experiment(s);
    Outcome o;
    const struct {
        int Nu;
        double perio, perio_tol, corr, corr_tol;
    } refs[] = {{2000, 1.12, 1.5, 5.0, 3.0}, {5000, 2.87, 2.0, 23.62, 6.0}};
    for (const auto& r : refs) {
        const double lp = value_of(nd_rows, "loss_pct_periodogram", {{"N_u", r.Nu}});
        const double lc = value_of(nd_rows, "loss_pct_correlation", {{"N_u", r.Nu}});
        const double a = value_of(nd_rows, "alpha_used", {{"N_u", r.Nu}});
        const std::string at = "N_u=" + std::to_string(r.Nu) + " ";
        o.check(std::abs(lp - r.perio) <= r.perio_tol,
                at + "periodogram loss " + fmt("%.2f", lp) + "% (alpha " + fmt("%.1f", a) + ")");
        o.check(std::abs(lc - r.corr) <= r.corr_tol, at + "correlation loss " + fmt("%.2f", lc) + "%");
        o.check(lp < lc, at + "periodogram loss below correlation loss");
    }
    return o;
}

std::vector<ResultRow> tradeoff_rows;

const std::vector<ResultRow>& tradeoff() {
    if (tradeoff_rows.empty()) {
        ExperimentSpec s = defaults_for("tradeoff");
        s.N_values = {1000};
        tradeoff_rows = run_experiment(s);
    }
    return tradeoff_rows;
}

Outcome tradeoff_gap() {
    const auto& rows = tradeoff();
    const double rp = value_of(rows, "rate_periodogram", {{"alpha", 1.6}});
    const double rc = value_of(rows, "rate_correlation");
    const double ops16 = value_of(rows, "ops_periodogram", {{"alpha", 1.6}});
    const double ops18 = value_of(rows, "ops_periodogram", {{"alpha", 1.8}});
    Outcome o;
    const double gain = 100.0 * (rp - rc) / rc;
    o.check(std::abs(gain - 20.0) <= 8.0, "periodogram " + fmt("%.4f", rp) + " vs correlation " +
                                              fmt("%.4f", rc) + ": +" + fmt("%.1f", gain) + "% vs 20 +- 8");
    o.check(ops18 / ops16 >= 3.0 && ops18 / ops16 <= 5.0, "op-count ratio 1.8/1.6 = " + fmt("%.3f", ops18 / ops16));
    return o;
}

Outcome alpha_star() {
    const auto& rows = tradeoff();
    const double a = value_of(rows, "alpha_star");
    Outcome o;
    o.check(std::abs(a - 1.6) < 1e-9, "alpha* = " + fmt("%.1f", a) + " (exact ladder match)");
    return o;
}

Outcome sinr_validation() {
    const auto rows = run_experiment(defaults_for("validate-sinr"));
    Outcome o;
    for (const auto& r : rows) {
        if (r.metric != "sinr_rel_error") continue;
        const double t = r.params.at("t");
        const double emp = value_of(rows, "sinr_empirical", {{"t", t}});
        const double ana = value_of(rows, "sinr_analytic", {{"t", t}});
        o.check(r.value <= 0.10, "t=" + fmt("%.0f", t) + " empirical " + fmt("%.4f", emp) + " analytic " +
                                     fmt("%.4f", ana) + " rel err " + fmt("%.3f", r.value));
    }
    return o;
}

SystemConfig reference(int M, int N, double alpha, double dmax) {
    SystemConfig c;
    c.M = M;
    c.K = 10;
    c.L = 5;
    c.N = N;
    c.N_u = 5000;
    c.alpha = alpha;
    c.delta_max = dmax;
    c.set_gamma_db(-10.0);
    return c;
}

Outcome exact_oracles() {
    Outcome o;
    const auto pdp = PowerDelayProfile::uniform(10, 5);

    double worst = 0.0;
    for (int M : {20, 40, 80, 160})
        for (double db : {-15.0, -10.0, 0.0}) {
            SystemConfig c = reference(M, 2000, 1.6, std::numbers::pi / 2500);
            c.set_gamma_db(db);
            const double g = c.gamma();
            const double closed = 1.0 / (1.0 / (M * 10.0 * g * g) + 2.0 / (M * g) + 10.0 / M);
            worst = std::max(worst, std::abs(analytic_sinr(c, pdp, 1.0, 0) - closed) / closed);
        }
    o.check(worst <= 1e-12, "zero-CFO SINR closed form rel err " + fmt("%.1e", worst));

    {
        SystemConfig c = reference(8, 2000, 1.0, std::numbers::pi / 200);
        c.sigma2 = 0.0;
        const auto grid = build_grid(c);
        RandomStream rng(1);
        const auto h = draw_channel(c, pdp, rng);
        CfoVector w;
        for (int k = 0; k < c.K; ++k) w.omega.push_back(grid.offset(k % (2 * grid.T0 + 1) - grid.T0));
        const auto est = estimate_cfo_periodogram(synth_ce_pilot_rx(c, h, w, rng), c, grid);
        o.check(est.omega_hat == w.omega, "noiseless on-grid recovery exact");
    }

    {
        SystemConfig c = reference(3, 250, 1.2, std::numbers::pi / 2500);
        RandomStream rng(2);
        const auto h = draw_channel(c, pdp, rng);
        const auto w = draw_cfos(c, rng);
        OpCounter p, q;
        estimate_cfo_periodogram_direct(synth_ce_pilot_rx(c, h, w, rng), c, build_grid(c), p);
        estimate_cfo_correlation(synth_impulse_train_rx(c, h, w, rng), c, q);
        o.check(p.count == op_count_periodogram(c, build_grid(c)) && q.count == op_count_correlation(c),
                "instrumented op counts equal closed forms");
    }

    {
        SystemConfig c = reference(5, 97, 1.0, 0.02);
        c.sigma2 = 0.0;
        RandomStream rng(3);
        const auto h = draw_channel(c, pdp, rng);
        const auto w = draw_cfos(c, rng);
        const auto sig = synth_ce_pilot_rx(c, h, w, rng);
        double err = 0.0;
        for (int m = 0; m < c.M; ++m)
            for (int t = 0; t < c.N; ++t) {
                cplx ref{};
                for (int q = 0; q < c.K; ++q)
                    for (int l = 0; l < c.L; ++l)
                        ref += h(m, q, l) * std::polar(1.0, 2 * std::numbers::pi * q * (t - l) / c.K + w.omega[q] * t);
                err = std::max(err, std::abs(std::sqrt(c.p_u) * ref - sig.at(m, t)));
            }
        o.check(err < 1e-10, "pilot dual-form agreement " + fmt("%.1e", err));
    }

    {
        double worst_slope = 0.0;
        for (int p : {1, 2, 3}) {
            std::vector<MsePoint> pts;
            for (int N : {500, 1000, 2000, 4000}) pts.push_back({N, 2.5 * std::pow(N, -p), 0.0, 200});
            worst_slope = std::max(worst_slope, std::abs(mse_and_slope(pts).slope + p));
        }
        o.check(worst_slope <= 1e-12, "c/N^p slope recovery err " + fmt("%.1e", worst_slope));
    }

    {
        SystemConfig c = reference(40, 2000, 1.6, std::numbers::pi / 2500);
        const FramePlan f = validate_config(c);
        const auto r = info_rate(f, sinr_profile(c, pdp, f, unit_phasor_profile(f, 0)));
        o.check(static_cast<int>(r.addends.size()) == f.N_D && f.N_D == 4942,
                "rate term count " + std::to_string(r.addends.size()));
    }
    return o;
}

Outcome properties() {
    Outcome o;
    {
        const int L = 5, draws = 4000;
        bool all = true;
        std::string detail;
        for (int M : {20, 80, 320}) {
            SystemConfig c;
            c.M = M;
            c.K = 1;
            c.L = L;
            const auto pdp = PowerDelayProfile::uniform(1, L);
            RandomStream rng(1000 + M);
            double s = 0, s2 = 0;
            for (int d = 0; d < draws; ++d) {
                double g = 0;
                for (const auto& v : draw_channel(c, pdp, rng).data()) g += std::norm(v);
                s += g / M;
                s2 += (g / M) * (g / M);
            }
            const double mean = s / draws;
            const double ratio = std::sqrt(s2 / draws - mean * mean) / mean;
            const double target = 1.0 / std::sqrt(M * L);
            all = all && std::abs(ratio / target - 1.0) <= 0.10;
            detail += (detail.empty() ? "" : ", ") + fmt("%.3f", ratio / target);
        }
        o.check(all, "hardening ratio / (1/sqrt(ML)) = " + detail);
    }
    {
        SystemConfig c = reference(40, 2000, 1.6, std::numbers::pi / 2500);
        const auto res = collect_residuals(c, PowerDelayProfile::uniform(10, 5), CfoMode::periodogram,
                                           TrialPlan{5, 0, 200, 0});
        const Eigen::VectorXd col = res.col(0);
        const auto p = phasor_mean(std::span<const double>(col.data(), col.size()), 1000, 0);
        o.check(p.phi[0] == 1.0, "phi[0] == 1 exactly");
    }
    {
        bool bound = true;
        int checked = 0;
        for (const auto* rows : {&nd_rows, &tradeoff_rows}) {
            for (const auto& r : *rows) {
                if (r.metric != "rate_periodogram" && r.metric != "rate_correlation") continue;
                std::vector<std::pair<std::string, double>> where;
                for (const char* k : {"N", "N_u", "M"}) where.emplace_back(k, r.params.at(k));
                bound = bound && r.value <= value_of(*rows, "rate_zero_cfo", where);
                ++checked;
            }
        }
        o.check(bound && checked > 0, "zero-CFO rate bounds " + std::to_string(checked) + " residual-CFO rates");
    }
    {
        std::vector<std::string> outs;
        for (int w : {1, 4, 8}) {
            ExperimentSpec s = defaults_for("rate-vs-nd");
            s.M = 16;
            s.N = 1000;
            s.N_u_values = {2000, 3000};
            s.trials = 100;
            s.workers = w;
            outs.push_back(to_csv(run_experiment(s)));
        }
        o.check(outs[0] == outs[1] && outs[0] == outs[2], "byte-identical output under 1, 4, 8 workers");
    }
    return o;
}

}  // namespace

int main() {
    run(1, "periodogram MSE slope", mse_slope_periodogram);
    run(2, "correlation MSE slope", mse_slope_correlation);
    run(3, "required SNR per array size", required_snr_per_m);
    run(4, "rate loss vs data length", staleness);
    run(5, "rate and op-count trade-off", tradeoff_gap);
    run(6, "alpha* reproduction", alpha_star);
    run(7, "analytic vs empirical SINR", sinr_validation);
    run(8, "exact oracles", exact_oracles);
    run(9, "property suite", properties);
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
