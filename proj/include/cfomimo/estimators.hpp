#pragma once

// CFO estimators: the spatially averaged periodogram over a discrete offset
// grid, the lag-KL correlation baseline on an impulse-train pilot, and the
// complex-operation cost model of both.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "cfomimo/errors.hpp"
#include "cfomimo/sysmodel.hpp"

namespace cfomimo {

/// Offsets Omega(i) = 2 pi i / N^alpha for |i| <= T0, with
/// T0 = ceil(delta_max N^alpha / (2 pi)).
struct FrequencyGrid {
    double alpha = 1.0;
    int N = 1;
    int T0 = 0;
    double spacing = 0.0;  ///< 2 pi / N^alpha

    int size() const { return 2 * T0 + 1; }
    /// Offset of grid index i in [-T0, T0].
    double offset(int i) const { return spacing * i; }
    /// Offset stored at array position p in [0, size()).
    double at(int p) const { return offset(p - T0); }
};

inline FrequencyGrid build_grid(int N, double alpha, double delta_max) {
    FrequencyGrid g;
    g.alpha = alpha;
    g.N = N;
    const double n_alpha = std::pow(static_cast<double>(N), alpha);
    g.spacing = kTwoPi / n_alpha;
    if (delta_max > 0.0) {
        g.T0 = static_cast<int>(std::ceil(delta_max / kTwoPi * n_alpha));
        // The ceiling of the rounded product can land one short of covering
        // the CFO support.
        while (g.offset(g.T0) < delta_max) ++g.T0;
    }
    return g;
}

inline FrequencyGrid build_grid(const SystemConfig& cfg) {
    return build_grid(cfg.N, cfg.alpha, cfg.delta_max);
}

/// Per-user CFO estimates; residual is filled by attach_truth().
struct CfoEstimate {
    std::vector<double> omega_hat;
    std::vector<int> grid_index;  ///< argmax index i in [-T0, T0]; empty for the baseline
    std::vector<double> residual; ///< omega_hat - omega

    void attach_truth(const CfoVector& truth) {
        residual.resize(omega_hat.size());
        for (std::size_t k = 0; k < omega_hat.size(); ++k)
            residual[k] = omega_hat[k] - truth.omega.at(k);
    }
};

struct OpCount {
    std::uint64_t complex_mults = 0;
    std::uint64_t complex_adds = 0;

    std::uint64_t total() const { return complex_mults + complex_adds; }
    friend bool operator==(const OpCount&, const OpCount&) = default;
};

/// Counts operations as they are executed.
struct OpCounter {
    OpCount count;
    void mul(std::uint64_t n = 1) { count.complex_mults += n; }
    void add(std::uint64_t n = 1) { count.complex_adds += n; }
};

/// Counter that compiles away.
struct NullCounter {
    void mul(std::uint64_t = 1) {}
    void add(std::uint64_t = 1) {}
};

namespace detail {

inline void check_pilot(const ReceivedSignal& sig, const SystemConfig& cfg) {
    if (sig.antennas() != cfg.M || sig.length() != cfg.N)
        throw ConfigError("pilot signal is " + std::to_string(sig.antennas()) + "x" +
                          std::to_string(sig.length()) + ", expected M x N = " +
                          std::to_string(cfg.M) + "x" + std::to_string(cfg.N));
}

// Grid positions in argmax visiting order: 0, -1, +1, -2, +2, ... With a
// strict '>' update this breaks ties toward the smallest |theta|, negative
// first.
inline std::vector<int> tie_break_order(int T0) {
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(2 * T0 + 1));
    order.push_back(0);
    for (int i = 1; i <= T0; ++i) {
        order.push_back(-i);
        order.push_back(i);
    }
    return order;
}

// exp(-j (2 pi k / K + theta) t) for t = 0..N-1.
inline CVector demod_twiddles(int k, int K, double theta, int N) {
    CVector tw(N);
    for (int t = 0; t < N; ++t) tw(t) = std::polar(1.0, -(pilot_tone_phase(k, K, t) + theta * t));
    return tw;
}

}  // namespace detail

/// Phi_k(theta) = (1/M) sum_m (1/N) |sum_t r_m[t] exp(-j (2 pi k/K + theta) t)|^2,
/// by direct summation.
template <class Counter>
double periodogram_value(const ReceivedSignal& sig, const SystemConfig& cfg, int k, double theta,
                         Counter& ops) {
    detail::check_pilot(sig, cfg);
    const CVector tw = detail::demod_twiddles(k, cfg.K, theta, cfg.N);
    double sum = 0.0;
    for (int m = 0; m < cfg.M; ++m) {
        cplx acc{0.0, 0.0};
        for (int t = 0; t < cfg.N; ++t) acc += sig.r(m, t) * tw(t);
        ops.mul(static_cast<std::uint64_t>(cfg.N));
        ops.add(static_cast<std::uint64_t>(cfg.N));
        sum += std::norm(acc);
        ops.mul();
        ops.add();
    }
    return sum / (static_cast<double>(cfg.M) * cfg.N);
}

inline double periodogram_value(const ReceivedSignal& sig, const SystemConfig& cfg, int k,
                                double theta) {
    NullCounter ops;
    return periodogram_value(sig, cfg, k, theta, ops);
}

/// Reference periodogram estimator: every grid point evaluated with
/// periodogram_value(). This is the strategy op_count_periodogram() models.
template <class Counter>
CfoEstimate estimate_cfo_periodogram_direct(const ReceivedSignal& sig, const SystemConfig& cfg,
                                            const FrequencyGrid& grid, Counter& ops) {
    const auto order = detail::tie_break_order(grid.T0);
    CfoEstimate est;
    est.omega_hat.resize(static_cast<std::size_t>(cfg.K));
    est.grid_index.resize(static_cast<std::size_t>(cfg.K));
    for (int k = 0; k < cfg.K; ++k) {
        double best = -std::numeric_limits<double>::infinity();
        int best_i = 0;
        for (int i : order) {
            const double v = periodogram_value(sig, cfg, k, grid.offset(i), ops);
            ops.add();  // comparison
            if (v > best) {
                best = v;
                best_i = i;
            }
        }
        est.grid_index[k] = best_i;
        est.omega_hat[k] = grid.offset(best_i);
    }
    return est;
}

/// Fast evaluator of the whole periodogram surface {Phi_k(Omega(i))}.
///
/// Splitting t = K b + c, the tone exp(-j 2 pi k t / K) only depends on c, so
///   sum_t r[t] e^{-j(2 pi k/K + W) t}
///     = sum_c e^{-j(2 pi k c/K + W c)} sum_b r[K b + c] e^{-j W K b}.
/// The inner sums are shared by all users and computed for every antenna,
/// phase c and grid offset W as one matrix product. The result equals the
/// direct sum up to floating-point rounding. The grid-dependent factors are
/// built once, so one instance should be reused across Monte Carlo trials.
class PeriodogramEstimator {
public:
    PeriodogramEstimator(const SystemConfig& cfg, FrequencyGrid grid)
        : K_(cfg.K), N_(cfg.N), grid_(grid), order_(detail::tie_break_order(grid.T0)) {
        blocks_ = (N_ + K_ - 1) / K_;
        const int G = grid_.size();
        inner_.resize(blocks_, G);
        for (int p = 0; p < G; ++p) {
            const double w = grid_.at(p);
            for (int b = 0; b < blocks_; ++b)
                inner_(b, p) = std::polar(1.0, -w * (static_cast<double>(K_) * b));
        }
        // outer_[p](c, k) = exp(-j (2 pi k c / K + W_p c))
        outer_.assign(static_cast<std::size_t>(G), CMatrix(K_, K_));
        for (int p = 0; p < G; ++p)
            for (int k = 0; k < K_; ++k)
                for (int c = 0; c < K_; ++c)
                    outer_[p](c, k) = std::polar(1.0, -(pilot_tone_phase(k, K_, c) + grid_.at(p) * c));
    }

    const FrequencyGrid& grid() const { return grid_; }

    /// K x G matrix of Phi_k at grid position p (offset grid().at(p)).
    Eigen::MatrixXd surface(const ReceivedSignal& sig) const {
        const int M = sig.antennas();
        if (sig.length() != N_) throw ConfigError("pilot length does not match the estimator");
        CMatrix poly = CMatrix::Zero(static_cast<Eigen::Index>(M) * K_, blocks_);
        for (int t = 0; t < N_; ++t) {
            const int b = t / K_, c = t % K_;
            poly.block(static_cast<Eigen::Index>(c) * M, b, M, 1) = sig.r.col(t);
        }
        const CMatrix partial = poly * inner_;  // (M K) x G

        const int G = grid_.size();
        Eigen::MatrixXd phi(K_, G);
        const double scale = 1.0 / (static_cast<double>(M) * N_);
        CMatrix z(M, K_);
        for (int p = 0; p < G; ++p) {
            Eigen::Map<const CMatrix> per_phase(partial.col(p).data(), M, K_);
            z.noalias() = per_phase * outer_[p];
            phi.col(p) = z.colwise().squaredNorm().transpose() * scale;
        }
        return phi;
    }

    CfoEstimate estimate(const ReceivedSignal& sig) const {
        const Eigen::MatrixXd phi = surface(sig);
        CfoEstimate est;
        est.omega_hat.resize(static_cast<std::size_t>(K_));
        est.grid_index.resize(static_cast<std::size_t>(K_));
        for (int k = 0; k < K_; ++k) {
            double best = -std::numeric_limits<double>::infinity();
            int best_i = 0;
            for (int i : order_) {
                const double v = phi(k, i + grid_.T0);
                if (v > best) {
                    best = v;
                    best_i = i;
                }
            }
            est.grid_index[k] = best_i;
            est.omega_hat[k] = grid_.offset(best_i);
        }
        return est;
    }

private:
    int K_, N_, blocks_ = 0;
    FrequencyGrid grid_;
    std::vector<int> order_;
    CMatrix inner_;
    std::vector<CMatrix> outer_;
};

/// omega_hat_k = argmax over the grid of Phi_k, independently per user.
inline CfoEstimate estimate_cfo_periodogram(const ReceivedSignal& sig, const SystemConfig& cfg,
                                            const FrequencyGrid& grid) {
    detail::check_pilot(sig, cfg);
    return PeriodogramEstimator(cfg, grid).estimate(sig);
}

/// Correlation baseline on the impulse-train pilot:
///   omega_hat_k = arg( sum_m sum_{b>=1} sum_l r_m[bKL+kL+l] conj(r_m[(b-1)KL+kL+l]) ) / KL.
/// Unambiguous for |omega_k| < pi/(KL).
template <class Counter>
CfoEstimate estimate_cfo_correlation(const ReceivedSignal& sig, const SystemConfig& cfg,
                                     Counter& ops) {
    detail::check_pilot(sig, cfg);
    const int KL = cfg.K * cfg.L;
    if (cfg.N % KL != 0 || cfg.N / KL < 2)
        throw PilotLengthError("correlation estimator needs N = B*K*L with B >= 2 blocks; got N = " +
                               std::to_string(cfg.N) + ", K*L = " + std::to_string(KL));
    const int blocks = cfg.N / KL;
    CfoEstimate est;
    est.omega_hat.resize(static_cast<std::size_t>(cfg.K));
    for (int k = 0; k < cfg.K; ++k) {
        cplx acc{0.0, 0.0};
        for (int m = 0; m < cfg.M; ++m)
            for (int b = 1; b < blocks; ++b)
                for (int l = 0; l < cfg.L; ++l) {
                    const int t = b * KL + k * cfg.L + l;
                    acc += sig.r(m, t) * std::conj(sig.r(m, t - KL));
                }
        const auto products = static_cast<std::uint64_t>(cfg.M) * (blocks - 1) * cfg.L;
        ops.mul(products);
        ops.add(products);
        est.omega_hat[k] = std::arg(acc) / KL;
        ops.mul();  // phase extraction
    }
    return est;
}

inline CfoEstimate estimate_cfo_correlation(const ReceivedSignal& sig, const SystemConfig& cfg) {
    NullCounter ops;
    return estimate_cfo_correlation(sig, cfg, ops);
}

/// Cost of estimate_cfo_periodogram_direct(). Per user, grid point and
/// antenna: N multiplies and N adds for the demodulating inner product, one
/// multiply for |.|^2 and one add into the spatial average. Per user and grid
/// point: one comparison (counted as an add). Twiddle factors do not depend on
/// the received samples and are treated as tabulated.
///   total = K G M (2N + 1) + K G M + K G,  G = 2 T0 + 1.
inline OpCount op_count_periodogram(const SystemConfig& cfg, const FrequencyGrid& grid) {
    const auto K = static_cast<std::uint64_t>(cfg.K);
    const auto G = static_cast<std::uint64_t>(grid.size());
    const auto M = static_cast<std::uint64_t>(cfg.M);
    const auto N = static_cast<std::uint64_t>(cfg.N);
    OpCount c;
    c.complex_mults = K * G * M * (N + 1);
    c.complex_adds = K * G * M * N + K * G * M + K * G;
    return c;
}

/// Cost of estimate_cfo_correlation(): M (N - KL) lag products, each one
/// multiply and one accumulate, plus one phase extraction per user (counted as
/// a multiply).
inline OpCount op_count_correlation(const SystemConfig& cfg) {
    const int KL = cfg.K * cfg.L;
    if (cfg.N % KL != 0 || cfg.N / KL < 2)
        throw PilotLengthError("correlation estimator needs N = B*K*L with B >= 2 blocks; got N = " +
                               std::to_string(cfg.N) + ", K*L = " + std::to_string(KL));
    const auto products = static_cast<std::uint64_t>(cfg.M) * static_cast<std::uint64_t>(cfg.N - KL);
    OpCount c;
    c.complex_mults = products + static_cast<std::uint64_t>(cfg.K);
    c.complex_adds = products;
    return c;
}

}  // namespace cfomimo
