#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scalefit/numerics.hpp"
#include "scalefit/scaling_fit.hpp"

using namespace scalefit;
using namespace scalefit::numerics;

TEST(Huber, HandValues) {
    EXPECT_EQ(huber(0.0), 0.0);
    EXPECT_NEAR(huber(1e-3), 5e-7, 1e-15);
    EXPECT_NEAR(huber(0.1), 9.95e-5, 1e-15);
}

TEST(Huber, EvenAndBoundedByQuadratic) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 2000; ++i) {
        const double r = u(rng) * std::pow(10.0, -3.0 * std::abs(u(rng)));
        EXPECT_EQ(huber(r), huber(-r));
        EXPECT_LE(huber(r), 0.5 * r * r);
        if (std::abs(r) <= 1e-3)
            EXPECT_EQ(huber(r), 0.5 * r * r);
        else
            EXPECT_LT(huber(r), 0.5 * r * r);
    }
}

TEST(Huber, ContinuousAtKnee) {
    const double d = 1e-3, eps = 1e-12;
    EXPECT_LT(std::abs(huber(d + eps) - huber(d - eps)), 1e-14);
    EXPECT_LT(std::abs(huber_derivative(d + eps) - huber_derivative(d - eps)), 1e-11);
}

TEST(Lse, Examples) {
    EXPECT_DOUBLE_EQ(lse({4.25}), 4.25);
    EXPECT_NEAR(lse({0.0, 0.0}), std::log(2.0), 1e-12);
    EXPECT_NEAR(lse({1.0, 2.0, 3.0}), 3.0 + std::log(std::exp(-2.0) + std::exp(-1.0) + 1.0), 1e-12);
    EXPECT_NEAR(lse({1.0, 2.0, 3.0}), 3.40760596, 1e-8);
}

TEST(Lse, EmptyThrows) { EXPECT_THROW(lse(std::span<const double>{}), Error); }

TEST(Lse, NoOverflow) { EXPECT_NEAR(lse({1000.0, 1000.0}), 1000.0 + std::log(2.0), 1e-12); }

TEST(Lse, ShiftAndBounds) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int i = 0; i < 500; ++i) {
        std::vector<double> t(1 + i % 6);
        for (auto& v : t) v = u(rng);
        const double c = u(rng);
        auto shifted = t;
        for (auto& v : shifted) v += c;
        EXPECT_NEAR(lse(shifted), lse(t) + c, 1e-12);
        const double mx = *std::max_element(t.begin(), t.end());
        EXPECT_GE(lse(t), mx);
        EXPECT_LE(lse(t), mx + std::log(double(t.size())) + 1e-15);
    }
}

TEST(LogLogLinreg, ExactLinear) {
    std::vector<double> x, y;
    for (int i = 1; i <= 10; ++i) {
        x.push_back(i * 1.7);
        y.push_back(6.0 * i * 1.7);
    }
    auto f = loglog_linreg(x, y);
    EXPECT_NEAR(f.intercept, std::log(6.0), 1e-12);
    EXPECT_NEAR(f.slope, 1.0, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
}

TEST(LogLogLinreg, ExactPower) {
    std::vector<double> x, y;
    for (int i = 1; i <= 10; ++i) {
        x.push_back(std::pow(3.0, i));
        y.push_back(2.0 * std::pow(x.back(), 1.1));
    }
    auto f = loglog_linreg(x, y);
    EXPECT_NEAR(f.intercept, std::log(2.0), 1e-10);
    EXPECT_NEAR(f.slope, 1.1, 1e-12);
}

TEST(LogLogLinreg, Errors) {
    std::vector<double> same{2, 2, 2}, y{1, 2, 3};
    EXPECT_THROW(loglog_linreg(same, y), Error);
    std::vector<double> neg{1, -2, 3};
    EXPECT_THROW(loglog_linreg(neg, y), Error);
    std::vector<double> one{1};
    EXPECT_THROW(loglog_linreg(one, one), Error);
}

namespace {

double quad(std::span<const double> x, std::span<double> g) {
    if (!g.empty()) g[0] = 2.0 * (x[0] - 3.0);
    return (x[0] - 3.0) * (x[0] - 3.0);
}

double rosenbrock(std::span<const double> x, std::span<double> g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    if (!g.empty()) {
        g[0] = -2.0 * a - 400.0 * x[0] * b;
        g[1] = 200.0 * b;
    }
    return a * a + 100.0 * b * b;
}

}  // namespace

TEST(Minimize, Quadratic) {
    auto r = minimize(quad, {0.0});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x_star[0], 3.0, 1e-6);
    EXPECT_LE(r.grad_norm, OptimizerConfig{}.grad_tol);
}

TEST(Minimize, Rosenbrock) {
    OptimizerConfig cfg;
    cfg.max_iters = 5000;
    auto r = minimize(rosenbrock, {-1.2, 1.0}, cfg);
    EXPECT_NEAR(r.x_star[0], 1.0, 1e-4);
    EXPECT_NEAR(r.x_star[1], 1.0, 1e-4);
    if (r.converged) {
        EXPECT_LE(r.grad_norm, cfg.grad_tol);
    }
}

TEST(Minimize, Constant) {
    auto r = minimize([](std::span<const double>, std::span<double> g) {
        for (auto& v : g) v = 0.0;
        return 1.5;
    }, {0.3, -0.2});
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 0);
    EXPECT_EQ(r.x_star[0], 0.3);
    EXPECT_EQ(r.grad_norm, 0.0);
}

TEST(Minimize, FiniteDifferenceMode) {
    OptimizerConfig cfg;
    cfg.gradient_mode = GradientMode::finite_difference;
    cfg.grad_tol = 1e-6;
    auto r = minimize(quad, {10.0}, cfg);
    EXPECT_NEAR(r.x_star[0], 3.0, 1e-5);
}

TEST(Minimize, NonFiniteStartThrows) {
    auto f = [](std::span<const double> x, std::span<double>) { return std::log(x[0]); };
    EXPECT_THROW(minimize(f, {-1.0}), Error);
}

TEST(Minimize, BitIdenticalReruns) {
    OptimizerConfig cfg;
    cfg.max_iters = 5000;
    auto a = minimize(rosenbrock, {-1.2, 1.0}, cfg);
    auto b = minimize(rosenbrock, {-1.2, 1.0}, cfg);
    EXPECT_EQ(a.x_star, b.x_star);
    EXPECT_EQ(a.f_star, b.f_star);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Minimize, AcceptedStepsNeverIncrease) {
    // Record the value at every evaluation that the optimizer later keeps: the
    // best-so-far sequence of evaluated points must reach f_star monotonically.
    OptimizerConfig cfg;
    cfg.max_iters = 5000;
    std::vector<double> values;
    auto f = [&](std::span<const double> x, std::span<double> g) {
        double v = rosenbrock(x, g);
        values.push_back(v);
        return v;
    };
    auto r = minimize(f, {-1.2, 1.0}, cfg);
    EXPECT_LE(r.f_star, values.front());
    EXPECT_EQ(r.f_star, *std::min_element(values.begin(), values.end()));
}

TEST(CheckGradient, Examples) {
    auto sq = [](std::span<const double> x, std::span<double> g) {
        if (!g.empty()) g[0] = 2.0 * x[0];
        return x[0] * x[0];
    };
    EXPECT_LT(check_gradient(sq, std::vector<double>{2.0}, 1e-6), 1e-8);
    auto wrong = [](std::span<const double> x, std::span<double> g) {
        if (!g.empty()) g[0] = 4.0 * x[0];
        return x[0] * x[0];
    };
    EXPECT_NEAR(check_gradient(wrong, std::vector<double>{2.0}, 1e-6), 0.5, 1e-6);
}

TEST(CheckGradient, HuberLseObjectiveAtGridPoints) {
    std::vector<fit::CurvePoint> pts;
    for (int i = 0; i < 30; ++i) {
        const double x = std::pow(10.0, -2.0 + 4.0 * i / 29.0);
        pts.push_back({x, 0.52 + 0.55 * std::pow(x, -0.16)});
    }
    std::vector<double> xs, ls;
    for (auto& p : pts) {
        xs.push_back(p.x);
        ls.push_back(p.loss);
    }
    fit::PowerLawObjective obj(xs, ls, {});
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> e(0, 4), a(0, 5), al(0, 4);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> p{-1.0 + 0.5 * e(rng), 5.0 * a(rng), 0.5 * al(rng)};
        EXPECT_LT(check_gradient(obj, p, 1e-6), 1e-4) << p[0] << ' ' << p[1] << ' ' << p[2];
    }
}

TEST(Quantile, Type7) {
    std::vector<double> v{4, 1, 3, 2};
    EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(quantile(v, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile(v, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(median({5, 1, 3}), 3.0);
}

TEST(Pearson, Basics) {
    std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1}, k{1, 1, 1, 1};
    EXPECT_DOUBLE_EQ(pearson(a, b), 1.0);
    EXPECT_DOUBLE_EQ(pearson(a, c), -1.0);
    EXPECT_TRUE(std::isnan(pearson(a, k)));
}
