#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cfomimo/analysis.hpp"
#include "cfomimo/harness.hpp"

using namespace cfomimo;

namespace {

SystemConfig reference_config(int M, double gamma_db, int N, int N_u) {
    SystemConfig c;
    c.M = M;
    c.K = 10;
    c.L = 5;
    c.N = N;
    c.N_u = N_u;
    c.alpha = 1.6;
    c.delta_max = std::numbers::pi / 2500.0;
    c.set_gamma_db(gamma_db);
    return c;
}

}  // namespace

TEST(AnalyticSinr, WorkedExample) {
    SystemConfig c = reference_config(100, 0.0, 2000, 5000);
    const auto pdp = PowerDelayProfile::uniform(10, 5);
    EXPECT_NEAR(muin_variance(c, pdp, 0), 0.121, 1e-15);
    EXPECT_NEAR(analytic_sinr(c, pdp, 1.0, 0), 8.2645, 1e-4);
    EXPECT_EQ(analytic_sinr(c, pdp, 0.0, 0), 0.0);
}

TEST(AnalyticSinr, ZeroCfoClosedForm) {
    const auto pdp = PowerDelayProfile::uniform(10, 5);
    for (int M : {20, 40, 80, 160, 640})
        for (double db : {-20.0, -10.0, 0.0, 7.5}) {
            SystemConfig c = reference_config(M, db, 2000, 5000);
            const double g = c.gamma(), K = 10.0;
            const double closed = 1.0 / (1.0 / (M * K * g * g) + 2.0 / (M * g) + K / M);
            EXPECT_NEAR(analytic_sinr(c, pdp, 1.0, 3), closed, 1e-12 * closed);
        }
}

TEST(AnalyticSinr, NonUniformProfile) {
    Eigen::MatrixXd v(2, 2);
    v << 1.0, 1.0, 0.5, 0.25;
    const PowerDelayProfile pdp(v);
    SystemConfig c;
    c.M = 10;
    c.K = 2;
    c.L = 2;
    c.set_gamma(2.0);
    const double th = 0.75, sum = 2.75;
    const double muin = 1.0 / (10 * 2 * 4 * th * th) + (1.0 / 20) * (1 + sum / (2 * th * th)) + sum / (10 * th);
    EXPECT_NEAR(muin_variance(c, pdp, 1), muin, 1e-15);
}

TEST(PhasorMean, TwoPointResidualsGiveCosine) {
    const double d = 1e-3;
    std::vector<double> res(200);
    for (std::size_t i = 0; i < res.size(); ++i) res[i] = (i % 2 ? d : -d);
    const auto p = phasor_mean(res, 3000, 0);
    EXPECT_EQ(p.phi[0], 1.0);
    for (int tau : {1, 10, 777, 3000}) EXPECT_NEAR(p.phi[tau], std::cos(d * tau), 1e-12);
    EXPECT_LT(p.max_imag_z, 1e-6);
}

TEST(PhasorMean, FirstEntryIsExactlyOne) {
    std::vector<double> res(150);
    RandomStream rng(3);
    for (auto& r : res) r = rng.uniform(-0.01, 0.01);
    EXPECT_EQ(phasor_mean(res, 50, 0).phi[0], 1.0);
}

TEST(PhasorMean, NeedsHundredDraws) {
    std::vector<double> res(99, 0.0);
    EXPECT_THROW(phasor_mean(res, 10, 0), InsufficientTrials);
}

TEST(Rate, ConstantSinrClosedFormAndTermCount) {
    SystemConfig c = reference_config(40, -10.0, 2000, 5000);
    const auto pdp = PowerDelayProfile::uniform(10, 5);
    const FramePlan f = validate_config(c);
    const auto prof = sinr_profile(c, pdp, f, unit_phasor_profile(f, 2));
    ASSERT_EQ(static_cast<int>(prof.sinr.size()), f.N_D);
    const auto r = info_rate(f, prof);
    EXPECT_EQ(static_cast<int>(r.addends.size()), f.N_D);
    EXPECT_EQ(f.N_D, 4942);
    const double s = analytic_sinr(c, pdp, 1.0, 2);
    EXPECT_NEAR(r.rate, 4942.0 / 5000.0 * std::log2(1.0 + s), 1e-12);
}

TEST(Rate, ZeroCfoUpperBoundsResidualCfo) {
    const auto pdp = PowerDelayProfile::uniform(10, 5);
    for (int Nu : {2000, 5000}) {
        SystemConfig c = reference_config(20, -10.0, 500, Nu);
        const TrialPlan plan{7, 1, 100, 0};
        const double ideal = rate_for_mode(c, pdp, CfoMode::ideal, plan).rate;
        EXPECT_LE(rate_for_mode(c, pdp, CfoMode::periodogram, plan).rate, ideal);
        EXPECT_LE(rate_for_mode(c, pdp, CfoMode::correlation, plan).rate, ideal);
    }
}

TEST(Slope, SyntheticPowerLawsAreRecovered) {
    for (int p : {1, 2, 3}) {
        std::vector<MsePoint> pts;
        for (int N : {500, 1000, 2000, 4000}) pts.push_back({N, 3.7 * std::pow(N, -p), 0.0, 200});
        EXPECT_NEAR(mse_and_slope(pts).slope, -p, 1e-12);
    }
}

TEST(Slope, DegenerateInputs) {
    std::vector<MsePoint> pts{{500, 1e-8, 0, 200}, {1000, 1e-9, 0, 200}};
    EXPECT_THROW(mse_and_slope(pts), InsufficientTrials);
    pts.push_back({2000, 0.0, 0, 200});
    EXPECT_THROW(mse_and_slope(pts), DegenerateFit);
    pts.back() = {2000, 1e-10, 0, 99};
    EXPECT_THROW(mse_and_slope(pts), InsufficientTrials);
}

TEST(Slope, MsePointPoolsUsers) {
    Eigen::MatrixXd r(2, 2);
    r << 1.0, -1.0, 3.0, 1.0;
    const auto p = mse_point(100, r);
    EXPECT_DOUBLE_EQ(p.mse, 3.0);
    EXPECT_EQ(p.trials, 2);
}

TEST(AlphaStar, StopsAtFirstSmallRelativeChange) {
    const std::map<double, double> rates{{1.0, 0.5}, {1.1, 0.8}, {1.2, 0.95}, {1.3, 0.96}, {1.4, 0.961}};
    int calls = 0;
    const auto r = find_alpha_star({1.0, 1.4, 0.1}, 0.02, [&](double a) {
        ++calls;
        return rates.at(a);
    });
    EXPECT_DOUBLE_EQ(r.alpha_star, 1.2);
    EXPECT_EQ(calls, 4);
}

TEST(AlphaStar, NotFoundWhenRateKeepsMoving) {
    EXPECT_THROW(find_alpha_star({1.0, 1.5, 0.1}, 0.02, [](double a) { return std::exp(a); }), NotFound);
}

TEST(AlphaStar, LadderStartsAtFirstResolvingGrid) {
    const double dmax = std::numbers::pi / 2500.0;
    EXPECT_DOUBLE_EQ(resolving_ladder({}, 1000, dmax).min, 1.2);
    EXPECT_DOUBLE_EQ(resolving_ladder({}, 2000, dmax).min, 1.1);
    EXPECT_THROW(resolving_ladder({1.0, 1.1, 0.1}, 100, dmax), NotFound);
}

TEST(RequiredSnr, BisectsMonotoneRate) {
    const auto rate = [](double db) { return std::log2(1.0 + db_to_linear(db)); };
    const auto r = required_snr(1.0, rate);
    EXPECT_NEAR(r.gamma_db, 0.0, 0.05);
    EXPECT_LE(r.hi_db - r.lo_db, 0.05);
    const auto s = required_snr(0.5, rate);
    EXPECT_NEAR(s.gamma_db, linear_to_db(std::sqrt(2.0) - 1.0), 0.05);
}

TEST(RequiredSnr, BracketErrors) {
    const auto rate = [](double db) { return std::log2(1.0 + db_to_linear(db)); };
    EXPECT_THROW(required_snr(5.0, rate), BracketError);
    EXPECT_THROW(required_snr(1e-6, rate), BracketError);
    EXPECT_THROW(required_snr(1.0, [](double db) { return 2.0 - std::abs(db + 12.0) / 6.0; }), BracketError);
    EXPECT_THROW(required_snr(1.0, rate, {0.0, -1.0}), BracketError);
}
