#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "collapselab/experiments.hpp"
#include "collapselab/grid.hpp"
#include "test_helpers.hpp"

using namespace collapselab;
using namespace testing_helpers;

namespace {

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
    return v;
}

TrainConfig gd_auto() {
    TrainConfig t;
    t.optimizer = TrainConfig::Optimizer::gradient_descent;
    t.auto_lr = true;
    t.max_iters = 200000;
    t.grad_tol = 1e-11;
    t.seed = 3;
    return t;
}

} // namespace

TEST(Grid, RejectsNonMonotoneAxis) {
    EXPECT_THROW(SweepGrid({Axis{"x", {0.0, 1.0, 1.0}}}, {"y"}), InvalidArgument);
    EXPECT_THROW(SweepGrid({Axis{"x", {}}}, {"y"}), InvalidArgument);
    EXPECT_NO_THROW(SweepGrid({Axis{"x", {3.0, 2.0, 1.0}}}, {"y"}));
}

TEST(Grid, FirstAxisSlowest) {
    SweepGrid g({Axis{"a", {1, 2}}, Axis{"b", {10, 20, 30}}}, {"v"});
    EXPECT_EQ(g.cell_count(), 6u);
    EXPECT_EQ(g.cell({1, 2}), 5u);
    EXPECT_EQ(g.coord(4, 0), 2.0);
    EXPECT_EQ(g.coord(4, 1), 20.0);
    EXPECT_EQ(g.unflatten(3), (std::vector<std::size_t>{1, 0}));
}

TEST(Grid, CsvLayout) {
    SweepGrid g({Axis{"x", {0.1, 0.2}}}, {"y"}, {"label"});
    g.set(0, "y", 1.0 / 3.0);
    g.set_text(0, "label", "a,b");
    g.mark_failed(1);
    std::ostringstream os;
    g.write_csv(os);
    EXPECT_EQ(os.str(), "x,y,label,failed\r\n0.1,0.3333333333333333,\"a,b\",0\r\n0.2,,,1\r\n");
}

TEST(Experiments, PrincipalAngle) {
    Matrix a(2, 1), b(2, 1);
    a(0, 0) = 1.0;
    b(0, 0) = std::cos(0.3);
    b(1, 0) = std::sin(0.3);
    EXPECT_NEAR(largest_principal_angle(a, b), 0.3, 1e-12);
    EXPECT_EQ(largest_principal_angle(a, a), 0.0);
}

TEST(Experiments, SigmaScalingAnalytic) {
    std::vector<double> sigmas;
    for (int i = 0; i <= 20; ++i) sigmas.push_back(std::pow(10.0, -1.0 + 3.0 * i / 20));
    const auto res = sigma_scaling(SigmaScalingParams{SymMatrix::identity(4), sigmas, SweepMode::analytic, {}});
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
        const double s2 = sigmas[k] * sigmas[k];
        EXPECT_NEAR(res.grid.get(k, "eig_small_0"), 0.5 / ((1 + s2) * (1 + s2)), 1e-14);
        EXPECT_GT(res.grid.get(k, "min_eig"), 0.0);
    }
    EXPECT_NEAR(res.summary_value("top_decade_slope"), -4.0, 0.2);
}

TEST(Experiments, SigmaScalingTrainedMatches) {
    const auto res = sigma_scaling(
        SigmaScalingParams{SymMatrix::diagonal({1.0, 0.5, 2.0}), {0.1, 1.0, 3.0}, SweepMode::trained, gd_auto()});
    for (std::size_t k = 0; k < 3; ++k) {
        ASSERT_FALSE(res.grid.failed(k));
        for (int i = 0; i < 3; ++i) {
            const std::string suffix = std::to_string(i);
            const double th = res.grid.get(k, "theory_small_" + suffix);
            EXPECT_NEAR(res.grid.get(k, "eig_small_" + suffix), th, 1e-3 * th);
        }
    }
}

TEST(Experiments, CriticalNAnalyticFlip) {
    CriticalNParams p;
    for (int n = 2; n <= 40; ++n) p.ns.push_back(n);
    const auto res = critical_n_sweep(p);
    EXPECT_EQ(res.summary_value("flip_after_n"), 22.0);
    EXPECT_EQ(res.summary_value("flip_before_n"), 23.0);
    EXPECT_NEAR(res.summary_value("n_star"), 22.5, 1e-12);
}

TEST(Experiments, CriticalNAlphaOneNeverCollapses) {
    CriticalNParams p;
    p.alpha = 1.0;
    p.ns = {2, 8, 64};
    const auto res = critical_n_sweep(p);
    for (double v : res.grid.column("predicted_collapsed")) EXPECT_EQ(v, 0.0);
}

TEST(Experiments, BetaSweepHalf) {
    BetaSweepParams p;
    p.betas = {0.5, 1.0, 1.5};
    const auto res = beta_collapse_sweep(p);
    const std::vector<double> expect = {0, 0, 1, 1, 1};
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(res.grid.get(0, "predicted_collapse_" + std::to_string(i)), expect[i]);
        EXPECT_EQ(res.grid.get(1, "predicted_collapse_" + std::to_string(i)), 0.0);
        EXPECT_EQ(res.grid.get(2, "predicted_collapse_" + std::to_string(i)), 0.0);
    }
    EXPECT_EQ(res.grid.get(0, "eig_2"), 0.0);
    EXPECT_GT(res.grid.get(0, "eig_1"), 0.0);
}

TEST(Experiments, BetaSweepTrainedVerdicts) {
    BetaSweepParams p;
    p.betas = {0.5};
    p.mode = SweepMode::trained;
    p.train = gd_auto();
    const auto res = beta_collapse_sweep(p);
    for (std::size_t i = 0; i < 5; ++i) {
        const std::string s = std::to_string(i);
        EXPECT_EQ(res.grid.get(0, "trained_collapse_" + s), res.grid.get(0, "predicted_collapse_" + s));
    }
}

TEST(Experiments, NormalizationCollapseAnisotropic) {
    std::vector<double> a(32);
    for (std::size_t i = 0; i < 32; ++i) a[i] = 0.2 + 1.8 * static_cast<double>(i) / 31.0;
    NormalizationParams p;
    p.a0 = SymMatrix::diagonal(a);
    p.sigmas = {0.0, 0.2, 0.4};
    const auto res = normalization_collapse(p);
    EXPECT_EQ(res.grid.get(0, "d_m"), 32.0);
    EXPECT_NEAR(res.summary_value("smallest_a"), 0.2, 1e-12);
    const double s2 = res.summary_value("smallest_mode_collapse_sigma2");
    EXPECT_GT(s2, 0.0);
    EXPECT_LT(s2, 0.2);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_GT(res.grid.get(k, "unnormalized_min_eig"), 0.0);
}

TEST(Experiments, PhaseDiagramCases) {
    PhaseParams p;
    p.sigmas = {0.0, 1.0, 2.0, 4.0};
    p.thetas = {0.0, 0.5, 1.0};
    const auto res = phase_diagram(p);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(res.grid.get(res.grid.cell({0, j}), "pattern"), 0.0);
    // theta = 1: style mode collapses once sigma^2 >= a2 / (1 - beta) = 2.
    EXPECT_EQ(res.grid.text(res.grid.cell({2, 2}), "label"), "mode-2 only");
    EXPECT_EQ(res.grid.get(res.grid.cell({3, 1}), "pattern"), 3.0);
}

TEST(Experiments, DownstreamOrdering) {
    DownstreamParams p;
    p.sigmas = {0.0, 4.0};
    const auto res = downstream_eval(p);
    const double base_half = res.grid.get(res.grid.cell({0, 0}), "test_mse");
    const double base_one = res.grid.get(res.grid.cell({0, 1}), "test_mse");
    EXPECT_EQ(base_half, base_one);
    const double big_half = res.grid.get(res.grid.cell({1, 0}), "test_mse");
    const double big_one = res.grid.get(res.grid.cell({1, 1}), "test_mse");
    EXPECT_LT(big_one, big_half);
    EXPECT_LT(big_one, 2.0 * res.summary_value("baseline_mse") + 1e-12);
    EXPECT_NEAR(big_half, res.summary_value("var_y"), 0.05 * res.summary_value("var_y"));
}

TEST(Experiments, RidgeFitExact) {
    Matrix z(3, 1);
    z(0, 0) = 1.0;
    z(1, 0) = 2.0;
    z(2, 0) = 3.0;
    const auto g = ridge_fit(z, {2.0, 4.0, 6.0}, 0.5);
    // (14/3 + 0.5) g = 28/3
    EXPECT_NEAR(g[0], (28.0 / 3.0) / (14.0 / 3.0 + 0.5), 1e-14);
}

TEST(Experiments, ImbalanceAngles) {
    ImbalanceParams p;
    p.proportions = linspace(0.5, 0.95, 10);
    const auto res = imbalance_robustness(p);
    const auto scl = res.grid.column("angle_scl");
    const auto inf = res.grid.column("angle_infonce");
    EXPECT_EQ(inf[0], 0.0);
    for (double v : scl) EXPECT_LE(v, 1e-9);
    for (std::size_t k = 1; k < inf.size(); ++k) EXPECT_GT(inf[k], inf[k - 1]);
}

TEST(Experiments, SliceOriginTaxonomy) {
    SliceParams p;
    p.values = linspace(-1.0, 1.0, 11);
    p.cov = CovarianceModel(SymMatrix::diagonal({1.0, 1.0}), SymMatrix::diagonal({0.0, 4.0}));
    p.spec = LossSpec::infonce();
    EXPECT_EQ(origin_label(static_cast<int>(landscape_slice(p).summary_value("origin_class"))), "local max");
    p.spec = LossSpec::beta_infonce(0.5);
    EXPECT_EQ(origin_label(static_cast<int>(landscape_slice(p).summary_value("origin_class"))), "saddle");
    p.spec = LossSpec::beta_infonce(0.5);
    p.cov = CovarianceModel(SymMatrix::diagonal({1.0, 1.0}), SymMatrix::diagonal({4.0, 4.0}));
    EXPECT_EQ(origin_label(static_cast<int>(landscape_slice(p).summary_value("origin_class"))), "local min");
}

TEST(Experiments, SliceNeedsZero) {
    SliceParams p;
    p.values = {-1.0, 1.0};
    p.cov = CovarianceModel(SymMatrix::identity(2), SymMatrix::zeros(2));
    EXPECT_THROW(landscape_slice(p), InvalidArgument);
}
