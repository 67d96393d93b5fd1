#pragma once

// Uplink receiver: CFO-compensated ML channel estimation from the impulse
// pilots, modified TR-MRC detection, and a Monte Carlo probe of the
// signal-to-interference ratio seen at the detector output.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cfomimo/errors.hpp"
#include "cfomimo/estimators.hpp"
#include "cfomimo/montecarlo.hpp"
#include "cfomimo/parallel.hpp"
#include "cfomimo/sysmodel.hpp"

namespace cfomimo {

struct ChannelEstimate {
    ChannelRealization h_hat;
    CfoEstimate cfo;
};

/// h_hat_mk[l] = r_m[kL+l] exp(-j omega_hat_k (kL+l)) / sqrt(KL p_u).
inline ChannelEstimate estimate_channel(const ReceivedSignal& sig, const CfoEstimate& cfo,
                                        const SystemConfig& cfg) {
    const int KL = cfg.K * cfg.L;
    if (sig.antennas() != cfg.M || sig.time_origin > 0 || sig.time_origin + sig.length() < KL)
        throw ConfigError("impulse-pilot block [0, K*L) is not covered by the signal");
    if (static_cast<int>(cfo.omega_hat.size()) != cfg.K)
        throw ConfigError("CFO estimate does not match the configuration");
    const double inv_amp = 1.0 / std::sqrt(static_cast<double>(KL) * cfg.p_u);
    ChannelEstimate est{ChannelRealization(cfg.M, cfg.K, cfg.L), cfo};
    for (int k = 0; k < cfg.K; ++k)
        for (int l = 0; l < cfg.L; ++l) {
            const int t = k * cfg.L + l;
            const cplx derot = inv_amp * std::polar(1.0, -cfo.omega_hat[k] * t);
            for (int m = 0; m < cfg.M; ++m) est.h_hat(m, k, l) = sig.at(m, t) * derot;
        }
    return est;
}

/// x_hat[k][t - t_first] for t in [t_first, t_last].
struct DetectedSymbols {
    int t_first = 0;
    CMatrix x_hat;  // K x (t_last - t_first + 1)

    cplx at(int k, int t) const { return x_hat(k, t - t_first); }
};

/// Modified TR-MRC:
///   x_hat_k[t] = sqrt(p_u) sum_m sum_l conj(h_hat_mk[l]) r_m[t+l] exp(-j omega_hat_k (t+l)).
/// Defaults to the frame's data span; the signal must cover [t_first, t_last + L - 1].
inline DetectedSymbols trmrc_detect(const ReceivedSignal& data, const ChannelEstimate& est,
                                    const CfoEstimate& cfo, const SystemConfig& cfg,
                                    const FramePlan& frame, int t_first = -1, int t_last = -1) {
    if (t_first < 0) t_first = frame.data_start;
    if (t_last < 0) t_last = frame.data_end;
    if (t_first > t_last) throw ConfigError("empty detection range");
    if (t_first < data.time_origin || t_last + cfg.L > data.time_origin + data.length())
        throw ConfigError("data signal does not cover [" + std::to_string(t_first) + ", " +
                          std::to_string(t_last + cfg.L - 1) + "]");
    const double amp = std::sqrt(cfg.p_u);
    DetectedSymbols out;
    out.t_first = t_first;
    out.x_hat = CMatrix::Zero(cfg.K, t_last - t_first + 1);
    for (int k = 0; k < cfg.K; ++k) {
        for (int t = t_first; t <= t_last; ++t) {
            cplx acc{0.0, 0.0};
            for (int l = 0; l < cfg.L; ++l) {
                cplx tap{0.0, 0.0};
                for (int m = 0; m < cfg.M; ++m) tap += std::conj(est.h_hat(m, k, l)) * data.at(m, t + l);
                acc += tap * std::polar(1.0, -cfo.omega_hat[k] * (t + l));
            }
            out.x_hat(k, t - t_first) = amp * acc;
        }
    }
    return out;
}

/// Regression decomposition x_hat = a x + w measured over trials at one time
/// index: a = E[x_hat conj(x)] / E|x|^2, v = E|x_hat - a x|^2, sinr = |a|^2/v.
struct EmpiricalSinr {
    int t = 0;
    cplx signal_coeff{};
    double noise_var = 0.0;
    double sinr = 0.0;
    double sinr_stderr = 0.0;  ///< delete-a-block jackknife, 20 blocks
    double coeff_imag_stderr = 0.0;
    int trials = 0;
};

struct EmpiricalSinrReport {
    std::vector<EmpiricalSinr> points;
    /// Residual CFO of user k, one entry per CFO-estimation round.
    std::vector<double> residuals;
};

struct EmpiricalSinrOptions {
    CfoMode mode = CfoMode::periodogram;
    TrialPlan plan;
    /// Coherence intervals served by one CFO estimate.
    int cfo_grouping = 1;
};

namespace detail {

struct SinrMoments {
    cplx sxy{};
    double sxx = 0.0, syy = 0.0;
    int n = 0;

    void add(cplx y, cplx x) {
        sxy += y * std::conj(x);
        sxx += std::norm(x);
        syy += std::norm(y);
        ++n;
    }
    void sub(const SinrMoments& o) {
        sxy -= o.sxy;
        sxx -= o.sxx;
        syy -= o.syy;
        n -= o.n;
    }
    cplx coeff() const { return sxy / sxx; }
    // mean |y - a x|^2 expanded in sufficient statistics.
    double resid() const {
        const cplx a = coeff();
        return (syy - 2.0 * std::real(std::conj(a) * sxy) + std::norm(a) * sxx) / n;
    }
    double sinr() const { return std::norm(coeff()) / resid(); }
};

}  // namespace detail

/// Monte Carlo SINR at the TR-MRC output for user k at each requested time.
///
/// Every trial is an independent coherence interval: fresh channel, symbols
/// and noise. Trials r with equal r / cfo_grouping share one CFO-estimation
/// round (fresh CFOs, estimation channel and pilot noise).
inline EmpiricalSinrReport measure_empirical_sinr(const SystemConfig& cfg,
                                                  const PowerDelayProfile& pdp,
                                                  const FramePlan& frame, std::span<const int> times,
                                                  int k, const EmpiricalSinrOptions& opt) {
    const int trials = opt.plan.trials;
    if (trials < 100) throw InsufficientTrials("empirical SINR needs >= 100 trials, got " +
                                               std::to_string(trials));
    if (opt.cfo_grouping < 1) throw ConfigError("cfo_grouping must be >= 1");
    if (k < 0 || k >= cfg.K) throw ConfigError("user index out of range");
    for (int t : times)
        if (t < frame.data_start || t > frame.data_end)
            throw ConfigError("time index " + std::to_string(t) + " is outside the data span");

    const CfoRoundRunner runner(cfg, pdp, opt.mode);
    const std::size_t T = times.size();
    const auto master = opt.plan.master_seed;
    const auto point = opt.plan.point;

    std::vector<cplx> y(static_cast<std::size_t>(trials) * T), x(y.size());
    const int rounds = (trials + opt.cfo_grouping - 1) / opt.cfo_grouping;
    std::vector<double> residuals(static_cast<std::size_t>(rounds));

    parallel_for(static_cast<std::size_t>(trials), opt.plan.workers, [&](std::size_t r) {
        const std::uint64_t g = r / static_cast<std::size_t>(opt.cfo_grouping);
        const CfoRound round = runner.run(master, point, g);
        if (r % static_cast<std::size_t>(opt.cfo_grouping) == 0) residuals[g] = round.estimate.residual[k];

        RandomStream ch_rng(master, point, r, StreamPhase::data_channel);
        RandomStream pilot_rng(master, point, r, StreamPhase::impulse_pilot_noise);
        RandomStream sym_rng(master, point, r, StreamPhase::data_symbols);
        RandomStream noise_rng(master, point, r, StreamPhase::data_noise);

        const ChannelRealization h = draw_channel(cfg, pdp, ch_rng);
        const ChannelEstimate est =
            estimate_channel(synth_impulse_pilot_rx(cfg, h, round.truth, pilot_rng), round.estimate, cfg);
        DataSymbols sym;
        for (int t : times) draw_symbols_range(sym, cfg, frame, sym_rng, t - cfg.L + 1, t + cfg.L - 1);
        for (std::size_t i = 0; i < T; ++i) {
            const int t = times[i];
            const ReceivedSignal data = synth_data_rx(cfg, h, round.truth, sym, noise_rng, t, t + cfg.L);
            const DetectedSymbols det = trmrc_detect(data, est, round.estimate, cfg, frame, t, t);
            y[r * T + i] = det.at(k, t);
            x[r * T + i] = sym.x(k, t);
        }
    });

    EmpiricalSinrReport rep;
    rep.residuals = std::move(residuals);
    constexpr int kBlocks = 20;
    for (std::size_t i = 0; i < T; ++i) {
        detail::SinrMoments total;
        std::vector<detail::SinrMoments> block(kBlocks);
        for (int r = 0; r < trials; ++r) {
            const std::size_t idx = static_cast<std::size_t>(r) * T + i;
            total.add(y[idx], x[idx]);
            block[static_cast<std::size_t>(r) * kBlocks / trials].add(y[idx], x[idx]);
        }
        EmpiricalSinr e;
        e.t = times[i];
        e.trials = trials;
        e.signal_coeff = total.coeff();
        e.noise_var = total.resid();
        e.sinr = total.sinr();

        double mean = 0.0, mean_im = 0.0;
        std::vector<double> loo(kBlocks), loo_im(kBlocks);
        for (int b = 0; b < kBlocks; ++b) {
            detail::SinrMoments rest = total;
            rest.sub(block[b]);
            loo[b] = rest.sinr();
            loo_im[b] = std::imag(rest.coeff());
            mean += loo[b] / kBlocks;
            mean_im += loo_im[b] / kBlocks;
        }
        double ss = 0.0, ss_im = 0.0;
        for (int b = 0; b < kBlocks; ++b) {
            ss += (loo[b] - mean) * (loo[b] - mean);
            ss_im += (loo_im[b] - mean_im) * (loo_im[b] - mean_im);
        }
        e.sinr_stderr = std::sqrt((kBlocks - 1.0) / kBlocks * ss);
        e.coeff_imag_stderr = std::sqrt((kBlocks - 1.0) / kBlocks * ss_im);
        rep.points.push_back(e);
    }
    return rep;
}

}  // namespace cfomimo
