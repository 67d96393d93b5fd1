#pragma once

// System model of the single-cell massive MU-MIMO uplink: configuration and
// frame timing, power delay profile, channel and CFO draws, and synthesis of
// every received-signal phase (CE pilot, impulse pilot, impulse train, data).
//
// Users are indexed 0..K-1 in code. User k transmits the CE pilot tone
// 2*pi*k/K and its channel-estimation impulse at t = k*L.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "cfomimo/errors.hpp"
#include "cfomimo/rng.hpp"

namespace cfomimo {

using cplx = std::complex<double>;
using CMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic>;
using CVector = Eigen::Matrix<cplx, Eigen::Dynamic, 1>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Scalars of one simulated system. The transmit SNR is not stored: it is
/// always p_u / sigma2, which makes the two impossible to disagree.
struct SystemConfig {
    int M = 1;           ///< BS antennas
    int K = 1;           ///< users
    int L = 1;           ///< channel taps
    int N = 1;           ///< CFO pilot length (samples)
    int N_u = 1;         ///< uplink slot length (samples)
    double alpha = 1.0;  ///< periodogram grid resolution exponent
    double p_u = 1.0;    ///< per-user transmit power
    double sigma2 = 1.0; ///< AWGN variance; 0 gives noiseless synthesis
    double delta_max = 0.0;  ///< max |CFO|, radians/sample
    int N_c = 0;         ///< coherence interval length (framing only)

    double gamma() const { return p_u / sigma2; }
    double gamma_db() const { return linear_to_db(gamma()); }

    /// Sets p_u so that gamma() == gamma_linear at the current sigma2.
    SystemConfig& set_gamma(double gamma_linear) {
        p_u = gamma_linear * sigma2;
        return *this;
    }
    SystemConfig& set_gamma_db(double db) { return set_gamma(db_to_linear(db)); }
};

/// Uplink data slot timing: impulse pilots on [0, K*L), pre-amble, N_D data
/// samples, post-amble.
struct FramePlan {
    int K = 1;
    int L = 1;
    int N_u = 1;
    int N_D = 0;
    int data_start = 0;  ///< K*L + L - 1
    int data_end = -1;   ///< N_u - L

    /// Time index of the channel-estimation impulse of user k seen on tap l.
    int ce_pilot_index(int k, int l) const { return k * L + l; }
};

/// Per-user, per-tap channel variances and their row sums theta_k.
class PowerDelayProfile {
public:
    PowerDelayProfile() = default;

    explicit PowerDelayProfile(Eigen::MatrixXd sigma2_h) : sigma2_h_(std::move(sigma2_h)) {
        if (sigma2_h_.size() == 0) throw ConfigError("power delay profile is empty");
        if ((sigma2_h_.array() <= 0.0).any() || !sigma2_h_.allFinite())
            throw ConfigError("power delay profile entries must be finite and > 0");
        theta_ = sigma2_h_.rowwise().sum();
    }

    /// sigma2_hkl = 1/L for every user and tap (theta_k = 1).
    static PowerDelayProfile uniform(int K, int L) {
        return PowerDelayProfile(Eigen::MatrixXd::Constant(K, L, 1.0 / L));
    }

    int users() const { return static_cast<int>(sigma2_h_.rows()); }
    int taps() const { return static_cast<int>(sigma2_h_.cols()); }
    double variance(int k, int l) const { return sigma2_h_(k, l); }
    double theta(int k) const { return theta_(k); }
    double theta_sum() const { return theta_.sum(); }
    const Eigen::MatrixXd& variances() const { return sigma2_h_; }

private:
    Eigen::MatrixXd sigma2_h_;
    Eigen::VectorXd theta_;
};

/// Complex tap gains h_mk[l], stored as [m][k][l].
class ChannelRealization {
public:
    ChannelRealization() = default;
    ChannelRealization(int M, int K, int L)
        : M_(M), K_(K), L_(L), h_(static_cast<std::size_t>(M) * K * L) {}

    int antennas() const { return M_; }
    int users() const { return K_; }
    int taps() const { return L_; }

    cplx& operator()(int m, int k, int l) { return h_[index(m, k, l)]; }
    const cplx& operator()(int m, int k, int l) const { return h_[index(m, k, l)]; }

    const std::vector<cplx>& data() const { return h_; }

private:
    std::size_t index(int m, int k, int l) const {
        return (static_cast<std::size_t>(m) * K_ + k) * L_ + l;
    }
    int M_ = 0, K_ = 0, L_ = 0;
    std::vector<cplx> h_;
};

/// True per-user CFOs, radians/sample.
struct CfoVector {
    std::vector<double> omega;
};

enum class SignalPhase { ce_pilot, impulse_pilot, impulse_train, data };

inline const char* to_string(SignalPhase p) {
    switch (p) {
        case SignalPhase::ce_pilot: return "CE_PILOT";
        case SignalPhase::impulse_pilot: return "IMPULSE_PILOT";
        case SignalPhase::impulse_train: return "IMPULSE_TRAIN";
        case SignalPhase::data: return "DATA";
    }
    return "?";
}

/// Samples r_m[t] of one received phase. Row m is antenna m; column c holds
/// time index time_origin + c of the phase's own time axis.
struct ReceivedSignal {
    SignalPhase phase = SignalPhase::ce_pilot;
    int time_origin = 0;
    CMatrix r;

    int antennas() const { return static_cast<int>(r.rows()); }
    int length() const { return static_cast<int>(r.cols()); }
    const cplx& at(int m, int t) const { return r(m, t - time_origin); }
};

/// Information symbols x_k[t] over the uplink slot (K x N_u); zero on the
/// pilot block [0, K*L), unit-variance Gaussian on the ambles and data.
struct DataSymbols {
    CMatrix x;
};

// ---------------------------------------------------------------------------

/// Checks the configuration and derives the slot timing.
inline FramePlan validate_config(const SystemConfig& cfg) {
    if (cfg.M < 1 || cfg.K < 1 || cfg.L < 1)
        throw ConfigError("M, K and L must all be >= 1");
    if (cfg.N < 1) throw ConfigError("pilot length N must be >= 1");
    if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha))
        throw ConfigError("alpha must be a finite value > 0");
    if (!(cfg.p_u > 0.0) || !std::isfinite(cfg.p_u))
        throw ConfigError("p_u must be a finite value > 0");
    if (!(cfg.sigma2 >= 0.0) || !std::isfinite(cfg.sigma2))
        throw ConfigError("sigma2 must be finite and >= 0");
    if (!(cfg.delta_max >= 0.0) || !std::isfinite(cfg.delta_max))
        throw ConfigError("delta_max must be finite and >= 0");
    if (cfg.N_c < 0) throw ConfigError("N_c must be >= 0");
    if (cfg.delta_max >= std::numbers::pi / cfg.K)
        throw OverlapError("delta_max = " + std::to_string(cfg.delta_max) +
                           " must be below pi/K = " + std::to_string(std::numbers::pi / cfg.K));

    FramePlan f;
    f.K = cfg.K;
    f.L = cfg.L;
    f.N_u = cfg.N_u;
    f.N_D = cfg.N_u - cfg.K * cfg.L - 2 * (cfg.L - 1);
    f.data_start = cfg.K * cfg.L + cfg.L - 1;
    f.data_end = cfg.N_u - cfg.L;
    if (f.N_D < 1)
        throw FrameError("N_u = " + std::to_string(cfg.N_u) + " leaves N_D = " +
                         std::to_string(f.N_D) + " data samples");
    if (cfg.N > cfg.N_u)
        throw FrameError("pilot length N = " + std::to_string(cfg.N) +
                         " exceeds the slot length N_u = " + std::to_string(cfg.N_u));
    return f;
}

/// Maximum CFO in radians/sample for a carrier f_c, bandwidth bw and an
/// oscillator tolerance kappa (fraction, 0.1 ppm = 1e-7).
inline double derive_delta_max(double f_c, double bw, double kappa) {
    return kTwoPi * kappa * f_c / bw;
}

/// Phase of the CE pilot tone of user q at (possibly negative) time t,
/// reduced exactly through (q*t mod K).
inline double pilot_tone_phase(int q, int K, std::int64_t t) {
    std::int64_t r = (static_cast<std::int64_t>(q) * t) % K;
    if (r < 0) r += K;
    return kTwoPi * static_cast<double>(r) / K;
}

inline ChannelRealization draw_channel(const SystemConfig& cfg, const PowerDelayProfile& pdp,
                                       RandomStream& rng) {
    if (pdp.users() != cfg.K || pdp.taps() != cfg.L)
        throw ConfigError("power delay profile is " + std::to_string(pdp.users()) + "x" +
                          std::to_string(pdp.taps()) + ", config needs K x L = " +
                          std::to_string(cfg.K) + "x" + std::to_string(cfg.L));
    ChannelRealization h(cfg.M, cfg.K, cfg.L);
    for (int m = 0; m < cfg.M; ++m)
        for (int k = 0; k < cfg.K; ++k)
            for (int l = 0; l < cfg.L; ++l) h(m, k, l) = rng.complex_gaussian(pdp.variance(k, l));
    return h;
}

/// omega_k ~ U[-delta_max, delta_max], independently per user.
inline CfoVector draw_cfos(const SystemConfig& cfg, RandomStream& rng) {
    CfoVector c;
    c.omega.resize(static_cast<std::size_t>(cfg.K));
    for (auto& w : c.omega) w = cfg.delta_max > 0.0 ? rng.uniform(-cfg.delta_max, cfg.delta_max) : 0.0;
    return c;
}

/// H_mk = sum_l h_mk[l] exp(-j 2 pi k l / K): the gain user k's CE pilot tone
/// sees at antenna m.
inline cplx effective_gain(const ChannelRealization& h, int k, int m) {
    const int K = h.users();
    cplx acc{0.0, 0.0};
    for (int l = 0; l < h.taps(); ++l)
        acc += h(m, k, l) * std::polar(1.0, -pilot_tone_phase(k, K, l));
    return acc;
}

namespace detail {

inline void add_noise(CMatrix& r, double sigma2, RandomStream& rng) {
    if (sigma2 <= 0.0) return;
    for (Eigen::Index t = 0; t < r.cols(); ++t)
        for (Eigen::Index m = 0; m < r.rows(); ++m) r(m, t) += rng.complex_gaussian(sigma2);
}

inline void check_dims(const SystemConfig& cfg, const ChannelRealization& h, const CfoVector& cfos) {
    if (h.antennas() != cfg.M || h.users() != cfg.K || h.taps() != cfg.L)
        throw ConfigError("channel realization does not match the configuration");
    if (static_cast<int>(cfos.omega.size()) != cfg.K)
        throw ConfigError("CFO vector does not match the configuration");
}

}  // namespace detail

/// Received CE pilot over t = 0..N-1:
///   r_m[t] = sqrt(p_u) sum_q H_mq exp(j (2 pi q / K + omega_q) t) + n_m[t].
inline ReceivedSignal synth_ce_pilot_rx(const SystemConfig& cfg, const ChannelRealization& h,
                                        const CfoVector& cfos, RandomStream& noise) {
    detail::check_dims(cfg, h, cfos);
    CMatrix gains(cfg.M, cfg.K);
    for (int m = 0; m < cfg.M; ++m)
        for (int q = 0; q < cfg.K; ++q) gains(m, q) = effective_gain(h, q, m);

    CMatrix tones(cfg.K, cfg.N);
    for (int t = 0; t < cfg.N; ++t)
        for (int q = 0; q < cfg.K; ++q)
            tones(q, t) = std::polar(1.0, pilot_tone_phase(q, cfg.K, t) + cfos.omega[q] * t);

    ReceivedSignal sig;
    sig.phase = SignalPhase::ce_pilot;
    sig.r.noalias() = std::sqrt(cfg.p_u) * gains * tones;
    detail::add_noise(sig.r, cfg.sigma2, noise);
    return sig;
}

/// Received channel-estimation block, t = 0..KL-1 of the data slot:
///   r_m[kL + l] = sqrt(KL p_u) h_mk[l] exp(j omega_k (kL + l)) + n_m[kL + l].
inline ReceivedSignal synth_impulse_pilot_rx(const SystemConfig& cfg, const ChannelRealization& h,
                                             const CfoVector& cfos, RandomStream& noise) {
    detail::check_dims(cfg, h, cfos);
    const int KL = cfg.K * cfg.L;
    const double amp = std::sqrt(static_cast<double>(KL) * cfg.p_u);
    ReceivedSignal sig;
    sig.phase = SignalPhase::impulse_pilot;
    sig.r = CMatrix::Zero(cfg.M, KL);
    for (int k = 0; k < cfg.K; ++k)
        for (int l = 0; l < cfg.L; ++l) {
            const int t = k * cfg.L + l;
            const cplx rot = amp * std::polar(1.0, cfos.omega[k] * t);
            for (int m = 0; m < cfg.M; ++m) sig.r(m, t) = rot * h(m, k, l);
        }
    detail::add_noise(sig.r, cfg.sigma2, noise);
    return sig;
}

/// Received impulse-train pilot for the correlation baseline: user k sends
/// amplitude sqrt(KL p_u) at t = b*KL + k*L for every block b < N/(KL).
inline ReceivedSignal synth_impulse_train_rx(const SystemConfig& cfg, const ChannelRealization& h,
                                             const CfoVector& cfos, RandomStream& noise) {
    detail::check_dims(cfg, h, cfos);
    const int KL = cfg.K * cfg.L;
    if (cfg.N % KL != 0)
        throw PilotLengthError("impulse-train pilot length N = " + std::to_string(cfg.N) +
                               " is not a multiple of K*L = " + std::to_string(KL));
    const int blocks = cfg.N / KL;
    const double amp = std::sqrt(static_cast<double>(KL) * cfg.p_u);
    ReceivedSignal sig;
    sig.phase = SignalPhase::impulse_train;
    sig.r = CMatrix::Zero(cfg.M, cfg.N);
    for (int b = 0; b < blocks; ++b)
        for (int k = 0; k < cfg.K; ++k)
            for (int l = 0; l < cfg.L; ++l) {
                const int t = b * KL + k * cfg.L + l;
                const cplx rot = amp * std::polar(1.0, cfos.omega[k] * t);
                for (int m = 0; m < cfg.M; ++m) sig.r(m, t) = rot * h(m, k, l);
            }
    detail::add_noise(sig.r, cfg.sigma2, noise);
    return sig;
}

/// Draws x_k[t] ~ CN(0,1) on [K*L, N_u): pre-amble, data and post-amble.
inline DataSymbols draw_symbols(const SystemConfig& cfg, const FramePlan& frame, RandomStream& rng) {
    DataSymbols s;
    s.x = CMatrix::Zero(cfg.K, frame.N_u);
    for (int t = cfg.K * cfg.L; t < frame.N_u; ++t)
        for (int k = 0; k < cfg.K; ++k) s.x(k, t) = rng.complex_gaussian(1.0);
    return s;
}

/// Fills the symbols on [t_lo, t_hi] (clipped to [K*L, N_u)) with fresh draws.
/// Lets a caller that only detects a few time indices skip the rest of the slot.
inline void draw_symbols_range(DataSymbols& s, const SystemConfig& cfg, const FramePlan& frame,
                               RandomStream& rng, int t_lo, int t_hi) {
    if (s.x.rows() != cfg.K || s.x.cols() != frame.N_u) s.x = CMatrix::Zero(cfg.K, frame.N_u);
    for (int t = std::max(t_lo, cfg.K * cfg.L); t <= std::min(t_hi, frame.N_u - 1); ++t)
        for (int k = 0; k < cfg.K; ++k) s.x(k, t) = rng.complex_gaussian(1.0);
}

/// Received data-slot samples on [t_begin, t_end):
///   r_m[t] = sqrt(p_u) sum_q sum_l h_mq[l] x_q[t-l] exp(j omega_q t) + n_m[t].
/// The default window is the whole slot. Noise is drawn for the window only.
inline ReceivedSignal synth_data_rx(const SystemConfig& cfg, const ChannelRealization& h,
                                    const CfoVector& cfos, const DataSymbols& sym,
                                    RandomStream& noise, int t_begin = 0, int t_end = -1) {
    detail::check_dims(cfg, h, cfos);
    const int slot = static_cast<int>(sym.x.cols());
    if (t_end < 0) t_end = slot;
    if (t_begin < 0 || t_end > slot || t_begin >= t_end)
        throw ConfigError("data window [" + std::to_string(t_begin) + ", " + std::to_string(t_end) +
                          ") is outside the slot");
    const double amp = std::sqrt(cfg.p_u);
    ReceivedSignal sig;
    sig.phase = SignalPhase::data;
    sig.time_origin = t_begin;
    sig.r = CMatrix::Zero(cfg.M, t_end - t_begin);
    for (int t = t_begin; t < t_end; ++t) {
        for (int q = 0; q < cfg.K; ++q) {
            const cplx rot = amp * std::polar(1.0, cfos.omega[q] * t);
            for (int l = 0; l < cfg.L && l <= t; ++l) {
                const cplx xs = sym.x(q, t - l);
                if (xs == cplx{}) continue;
                const cplx c = rot * xs;
                for (int m = 0; m < cfg.M; ++m) sig.r(m, t - t_begin) += h(m, q, l) * c;
            }
        }
    }
    detail::add_noise(sig.r, cfg.sigma2, noise);
    return sig;
}

}  // namespace cfomimo
