#pragma once

// Achievable-rate analysis of the TR-MRC uplink with residual CFO: phasor
// means of the residual, the closed-form per-time SINR lower bound, the
// per-user rate, MSE slope fits, the alpha* rule and the required-SNR search.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfomimo/errors.hpp"
#include "cfomimo/montecarlo.hpp"
#include "cfomimo/sysmodel.hpp"

namespace cfomimo {

/// phi[tau] ~ E[exp(-j dw tau)] for tau = 0..tau_max of one user, estimated
/// from R independent residuals dw. Only the real part is kept.
struct PhasorMeanProfile {
    int k = 0;
    int R = 0;
    std::vector<double> phi;
    std::vector<double> std_err;
    /// Largest |mean imaginary part| / its standard error over tau. Stays small
    /// when the residual law is symmetric.
    double max_imag_z = 0.0;

    int tau_max() const { return static_cast<int>(phi.size()) - 1; }
};

inline PhasorMeanProfile phasor_mean(std::span<const double> residuals, int tau_max, int k = 0) {
    const int R = static_cast<int>(residuals.size());
    if (R < 100) throw InsufficientTrials("phasor mean needs >= 100 residual draws, got " +
                                          std::to_string(R));
    if (tau_max < 0) throw ConfigError("tau_max must be >= 0");
    PhasorMeanProfile p;
    p.k = k;
    p.R = R;
    p.phi.assign(static_cast<std::size_t>(tau_max) + 1, 0.0);
    p.std_err.assign(p.phi.size(), 0.0);
    std::vector<double> sum_c2(p.phi.size(), 0.0), sum_s(p.phi.size(), 0.0), sum_s2(p.phi.size(), 0.0);
    for (double dw : residuals) {
        for (int tau = 0; tau <= tau_max; ++tau) {
            // Sign irrelevant for the real part; the imaginary part of
            // exp(-j dw tau) is -sin(dw tau).
            const double c = std::cos(dw * tau), s = -std::sin(dw * tau);
            p.phi[tau] += c;
            sum_c2[tau] += c * c;
            sum_s[tau] += s;
            sum_s2[tau] += s * s;
        }
    }
    for (int tau = 0; tau <= tau_max; ++tau) {
        const double mc = p.phi[tau] / R;
        const double ms = sum_s[tau] / R;
        const double vc = std::max(0.0, sum_c2[tau] / R - mc * mc);
        const double vs = std::max(0.0, sum_s2[tau] / R - ms * ms);
        p.phi[tau] = mc;
        p.std_err[tau] = std::sqrt(vc / (R - 1.0));
        const double se_s = std::sqrt(vs / (R - 1.0));
        if (se_s > 0.0) p.max_imag_z = std::max(p.max_imag_z, std::abs(ms) / se_s);
    }
    p.phi[0] = 1.0;  // cos(0) exactly; pinned against summation rounding
    return p;
}

/// Profile over the user's data span: tau = t - kL for t up to data_end.
inline PhasorMeanProfile phasor_mean(std::span<const double> residuals, const FramePlan& frame, int k) {
    return phasor_mean(residuals, frame.data_end - k * frame.L, k);
}

/// Profile of a CFO-free link: phi == 1.
inline PhasorMeanProfile unit_phasor_profile(const FramePlan& frame, int k) {
    PhasorMeanProfile p;
    p.k = k;
    p.phi.assign(static_cast<std::size_t>(frame.data_end - k * frame.L) + 1, 1.0);
    p.std_err.assign(p.phi.size(), 0.0);
    return p;
}

/// Normalized variance of the multi-user interference, ISI, estimation error
/// and noise lump. Does not depend on t.
inline double muin_variance(const SystemConfig& cfg, const PowerDelayProfile& pdp, int k) {
    const double M = cfg.M, K = cfg.K, g = cfg.gamma();
    const double th = pdp.theta(k), sum = pdp.theta_sum();
    return 1.0 / (M * K * g * g * th * th) + (1.0 / (M * g)) * (1.0 + sum / (K * th * th)) +
           sum / (M * th);
}

/// SINR_k for a phasor mean phi: phi^2 / ((1 - phi^2) + MUIN).
inline double analytic_sinr(const SystemConfig& cfg, const PowerDelayProfile& pdp, double phi, int k) {
    const double p2 = phi * phi;
    return p2 / ((1.0 - p2) + muin_variance(cfg, pdp, k));
}

inline double analytic_sinr(const SystemConfig& cfg, const PowerDelayProfile& pdp,
                            const PhasorMeanProfile& profile, int k, int t) {
    const int tau = t - k * cfg.L;
    if (tau < 0 || tau > profile.tau_max())
        throw ConfigError("t = " + std::to_string(t) + " is outside the phasor profile");
    return analytic_sinr(cfg, pdp, profile.phi[tau], k);
}

/// SINR_k[t] over the data span, index t - data_start.
struct SinrProfile {
    int k = 0;
    int data_start = 0;
    std::vector<double> sinr;
    std::vector<double> sif_var;
    double muin_var = 0.0;
};

inline SinrProfile sinr_profile(const SystemConfig& cfg, const PowerDelayProfile& pdp,
                                const FramePlan& frame, const PhasorMeanProfile& phasors) {
    const int k = phasors.k;
    SinrProfile s;
    s.k = k;
    s.data_start = frame.data_start;
    s.muin_var = muin_variance(cfg, pdp, k);
    s.sinr.reserve(static_cast<std::size_t>(frame.N_D));
    s.sif_var.reserve(static_cast<std::size_t>(frame.N_D));
    for (int t = frame.data_start; t <= frame.data_end; ++t) {
        const double phi = phasors.phi.at(static_cast<std::size_t>(t - k * cfg.L));
        const double p2 = phi * phi;
        s.sif_var.push_back(1.0 - p2);
        s.sinr.push_back(p2 / ((1.0 - p2) + s.muin_var));
    }
    return s;
}

struct RateResult {
    int k = 0;
    double rate = 0.0;             ///< bits per channel use
    std::vector<double> addends;   ///< log2(1 + SINR_k[t]) per data index
};

/// I_k = (1/N_u) sum_{t = KL+L-1}^{N_u-L} log2(1 + SINR_k[t]).
inline RateResult info_rate(const FramePlan& frame, const SinrProfile& sinr) {
    if (static_cast<int>(sinr.sinr.size()) != frame.N_D || sinr.data_start != frame.data_start)
        throw ConfigError("SINR profile does not cover the data span");
    RateResult r;
    r.k = sinr.k;
    r.addends.reserve(sinr.sinr.size());
    double sum = 0.0;
    for (double s : sinr.sinr) {
        r.addends.push_back(std::log2(1.0 + s));
        sum += r.addends.back();
    }
    r.rate = sum / frame.N_u;
    return r;
}

/// Rate of user k from a batch of residual draws of that user.
inline RateResult rate_from_residuals(const SystemConfig& cfg, const PowerDelayProfile& pdp,
                                      const FramePlan& frame, std::span<const double> residuals, int k) {
    return info_rate(frame, sinr_profile(cfg, pdp, frame, phasor_mean(residuals, frame, k)));
}

/// Rate of user k under the given CFO handling. The ideal mode needs no
/// trials; the others run plan.trials CFO-estimation rounds.
inline RateResult rate_for_mode(const SystemConfig& cfg, const PowerDelayProfile& pdp, CfoMode mode,
                                const TrialPlan& plan, int k = 0) {
    const FramePlan frame = validate_config(cfg);
    if (mode == CfoMode::ideal) return info_rate(frame, sinr_profile(cfg, pdp, frame, unit_phasor_profile(frame, k)));
    const Eigen::MatrixXd res = collect_residuals(cfg, pdp, mode, plan);
    const Eigen::VectorXd col = res.col(k);
    return rate_from_residuals(cfg, pdp, frame, std::span<const double>(col.data(), col.size()), k);
}

// --- MSE ------------------------------------------------------------------

struct MsePoint {
    int N = 0;
    double mse = 0.0;
    double std_err = 0.0;
    int trials = 0;
};

struct MseResult {
    std::vector<MsePoint> points;
    double slope = 0.0;
    double intercept = 0.0;  ///< log10 mse at log10 N = 0
};

/// Mean squared residual pooled over all users (residual matrix is trials x K).
inline MsePoint mse_point(int N, const Eigen::MatrixXd& residuals) {
    MsePoint p;
    p.N = N;
    p.trials = static_cast<int>(residuals.rows());
    const Eigen::ArrayXd sq = residuals.array().square().reshaped();
    const double n = static_cast<double>(sq.size());
    p.mse = sq.mean();
    if (n > 1) p.std_err = std::sqrt(((sq - p.mse).square().sum() / (n - 1.0)) / n);
    return p;
}

/// Least-squares line through (log10 x, log10 y); returns {slope, intercept}.
inline std::pair<double, double> fit_loglog(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw DegenerateFit("need >= 2 points of equal count");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DegenerateFit("log-log fit needs positive values");
        const double lx = std::log10(x[i]), ly = std::log10(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw DegenerateFit("all x values coincide");
    const double slope = (n * sxy - sx * sy) / den;
    return {slope, (sy - slope * sx) / n};
}

inline MseResult mse_and_slope(std::vector<MsePoint> points) {
    if (points.size() < 3) throw InsufficientTrials("slope fit needs >= 3 pilot lengths");
    std::vector<double> xs, ys;
    for (const auto& p : points) {
        if (p.trials < 100)
            throw InsufficientTrials("N = " + std::to_string(p.N) + " has only " +
                                     std::to_string(p.trials) + " trials (need >= 100)");
        if (!(p.mse > 0.0)) throw DegenerateFit("N = " + std::to_string(p.N) + " has zero MSE");
        xs.push_back(p.N);
        ys.push_back(p.mse);
    }
    MseResult r;
    std::tie(r.slope, r.intercept) = fit_loglog(xs, ys);
    r.points = std::move(points);
    return r;
}

// --- alpha* ------------------------------------------------------------------

struct AlphaLadder {
    double min = 1.0;
    double max = 2.0;
    double step = 0.1;

    std::vector<double> values() const {
        std::vector<double> v;
        const int n = static_cast<int>(std::floor((max - min) / step + 1e-9));
        for (int i = 0; i <= n; ++i) v.push_back(std::round((min + i * step) * 1e9) / 1e9);
        return v;
    }
};

struct AlphaStarResult {
    double alpha_star = 0.0;
    std::vector<std::pair<double, double>> scanned;  ///< (alpha, rate) in scan order
};

/// Smallest alpha on the ladder with |(I(alpha) - I(alpha + step)) / I(alpha)| < delta,
/// scanning upward. `rate_at` is called at most once per ladder value.
inline AlphaStarResult find_alpha_star(const AlphaLadder& ladder, double delta,
                                       const std::function<double(double)>& rate_at) {
    const auto alphas = ladder.values();
    AlphaStarResult res;
    if (alphas.size() < 2) throw NotFound("alpha ladder has fewer than two values");
    double prev = rate_at(alphas[0]);
    res.scanned.emplace_back(alphas[0], prev);
    for (std::size_t i = 1; i < alphas.size(); ++i) {
        const double cur = rate_at(alphas[i]);
        res.scanned.emplace_back(alphas[i], cur);
        if (prev != 0.0 && std::abs((prev - cur) / prev) < delta) {
            res.alpha_star = alphas[i - 1];
            return res;
        }
        prev = cur;
    }
    throw NotFound("no alpha in [" + std::to_string(ladder.min) + ", " + std::to_string(ladder.max) +
                   "] meets the relative-change threshold " + std::to_string(delta));
}

// --- required SNR ------------------------------------------------------------

struct BisectionOptions {
    double lo_db = -25.0;
    double hi_db = 0.0;
    double tol_db = 0.05;
    int max_iter = 40;
    int probe_points = 5;  ///< evenly spaced monotonicity probes, ends included
};

struct RequiredSnrResult {
    double gamma_db = 0.0;
    double lo_db = 0.0, hi_db = 0.0;  ///< final bracket
    int evaluations = 0;
};

/// Transmit SNR (dB) at which rate_at_db reaches target, by bisection.
///
/// The evaluator is probed on an even grid over the bracket first: the probes
/// must be non-decreasing and straddle the target, otherwise BracketError. The
/// search then continues inside the straddling probe interval until it is
/// narrower than tol_db and returns the midpoint.
inline RequiredSnrResult required_snr(double target, const std::function<double(double)>& rate_at_db,
                                      const BisectionOptions& opt = {}) {
    if (!(opt.hi_db > opt.lo_db) || opt.probe_points < 2 || !(opt.tol_db > 0.0))
        throw BracketError("invalid bisection options");
    RequiredSnrResult r;
    std::vector<double> g, v;
    for (int i = 0; i < opt.probe_points; ++i) {
        g.push_back(opt.lo_db + (opt.hi_db - opt.lo_db) * i / (opt.probe_points - 1));
        v.push_back(rate_at_db(g.back()));
        ++r.evaluations;
        if (i > 0 && v[i] < v[i - 1])
            throw BracketError("rate is not monotone in SNR between " + std::to_string(g[i - 1]) +
                               " dB and " + std::to_string(g[i]) + " dB");
    }
    if (!(v.front() < target && v.back() >= target))
        throw BracketError("rate over [" + std::to_string(opt.lo_db) + ", " + std::to_string(opt.hi_db) +
                           "] dB is [" + std::to_string(v.front()) + ", " + std::to_string(v.back()) +
                           "], which does not straddle " + std::to_string(target));
    std::size_t j = 1;
    while (v[j] < target) ++j;
    double lo = g[j - 1], hi = g[j];
    for (int it = 0; it < opt.max_iter && hi - lo > opt.tol_db; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double val = rate_at_db(mid);
        ++r.evaluations;
        (val < target ? lo : hi) = mid;
    }
    r.lo_db = lo;
    r.hi_db = hi;
    r.gamma_db = 0.5 * (lo + hi);
    return r;
}

}  // namespace cfomimo
