#pragma once

// One CFO-estimation round (fresh CFOs, estimation-slot channel, pilot noise,
// estimate) and the seeded, order-preserving trial loop built on it.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>

#include "cfomimo/errors.hpp"
#include "cfomimo/estimators.hpp"
#include "cfomimo/parallel.hpp"
#include "cfomimo/rng.hpp"
#include "cfomimo/sysmodel.hpp"

namespace cfomimo {

enum class CfoMode {
    ideal,        ///< zero CFO, nothing to estimate
    periodogram,  ///< CE pilot + spatially averaged periodogram (uses cfg.alpha)
    correlation,  ///< impulse-train pilot + lag-KL correlation
};

inline const char* to_string(CfoMode m) {
    switch (m) {
        case CfoMode::ideal: return "zero_cfo";
        case CfoMode::periodogram: return "periodogram";
        case CfoMode::correlation: return "correlation";
    }
    return "?";
}

/// Where a batch of trials draws its randomness from. Trial r of a plan uses
/// the substreams derive_seed(master_seed, point, r, phase).
struct TrialPlan {
    std::uint64_t master_seed = 1;
    std::uint64_t point = 0;
    int trials = 200;
    int workers = 0;
};

struct CfoRound {
    CfoVector truth;
    CfoEstimate estimate;  ///< residual attached
};

/// Executes CFO-estimation rounds for a fixed configuration. Immutable after
/// construction and safe to share between workers.
class CfoRoundRunner {
public:
    CfoRoundRunner(const SystemConfig& cfg, const PowerDelayProfile& pdp, CfoMode mode)
        : cfg_(cfg), pdp_(pdp), mode_(mode) {
        validate_config(cfg_);
        if (mode_ == CfoMode::periodogram) periodogram_.emplace(cfg_, build_grid(cfg_));
        if (mode_ == CfoMode::correlation) op_count_correlation(cfg_);  // pilot-length check
    }

    const SystemConfig& config() const { return cfg_; }
    CfoMode mode() const { return mode_; }

    CfoRound run(std::uint64_t master, std::uint64_t point, std::uint64_t round) const {
        CfoRound out;
        if (mode_ == CfoMode::ideal) {
            out.truth.omega.assign(static_cast<std::size_t>(cfg_.K), 0.0);
            out.estimate.omega_hat = out.truth.omega;
            out.estimate.attach_truth(out.truth);
            return out;
        }
        RandomStream cfo_rng(master, point, round, StreamPhase::cfo_draw);
        RandomStream ch_rng(master, point, round, StreamPhase::estimation_channel);
        out.truth = draw_cfos(cfg_, cfo_rng);
        const ChannelRealization h = draw_channel(cfg_, pdp_, ch_rng);
        if (mode_ == CfoMode::periodogram) {
            RandomStream noise(master, point, round, StreamPhase::ce_pilot_noise);
            out.estimate = periodogram_->estimate(synth_ce_pilot_rx(cfg_, h, out.truth, noise));
        } else {
            RandomStream noise(master, point, round, StreamPhase::impulse_train_noise);
            out.estimate = estimate_cfo_correlation(synth_impulse_train_rx(cfg_, h, out.truth, noise), cfg_);
        }
        out.estimate.attach_truth(out.truth);
        return out;
    }

private:
    SystemConfig cfg_;
    PowerDelayProfile pdp_;
    CfoMode mode_;
    std::optional<PeriodogramEstimator> periodogram_;
};

/// Residual CFOs of plan.trials independent rounds: a trials x K matrix, row r
/// from round r.
inline Eigen::MatrixXd collect_residuals(const CfoRoundRunner& runner, const TrialPlan& plan) {
    if (plan.trials < 1) throw InsufficientTrials("trial count must be >= 1");
    const int K = runner.config().K;
    Eigen::MatrixXd res(plan.trials, K);
    parallel_for(static_cast<std::size_t>(plan.trials), plan.workers, [&](std::size_t r) {
        const CfoRound round = runner.run(plan.master_seed, plan.point, r);
        for (int k = 0; k < K; ++k) res(static_cast<Eigen::Index>(r), k) = round.estimate.residual[k];
    });
    return res;
}

inline Eigen::MatrixXd collect_residuals(const SystemConfig& cfg, const PowerDelayProfile& pdp,
                                         CfoMode mode, const TrialPlan& plan) {
    return collect_residuals(CfoRoundRunner(cfg, pdp, mode), plan);
}

}  // namespace cfomimo
