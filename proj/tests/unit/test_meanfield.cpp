#include <cmath>

#include <gtest/gtest.h>

#include "kacpotts/meanfield.hpp"

using namespace kacpotts;

TEST(BetaCritical, ClosedForms) {
    EXPECT_NEAR(beta_critical(3), 4.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(beta_critical(4), 3.0 * std::log(3.0), 1e-12);
    EXPECT_NEAR(beta_critical(3), 2.772589, 1e-6);
    EXPECT_NEAR(beta_critical(4), 3.295837, 1e-6);
    EXPECT_DOUBLE_EQ(beta_critical(2), 2.0);
    EXPECT_THROW(beta_critical(1), InvalidArgument);
}

TEST(BetaCritical, LargeRAsymptotics) {
    double prev = 1e9;
    for (int r : {10, 100, 1000, 100000, 10000000}) {
        double dev = std::abs(beta_critical(r) / std::log(static_cast<double>(r)) - 2.0);
        EXPECT_LT(dev, prev);
        prev = dev;
    }
    EXPECT_LT(prev, 1e-6 + 0.01);
}

TEST(MfRate, Examples) {
    for (int r : {2, 3, 5}) {
        std::vector<double> eq(r, 1.0 / r);
        EXPECT_NEAR(mf_rate(eq, 1.7), -1.7 / r, 1e-14);
    }
    std::vector<double> pure{1.0, 0.0, 0.0};
    EXPECT_NEAR(mf_rate(pure, 1.0), -1.0 + std::log(3.0), 1e-14);
    std::vector<double> a{0.2, 0.5, 0.3};
    EXPECT_GT(mf_rate(a, 0.0), 0.0);
    std::vector<double> eq3(3, 1.0 / 3);
    EXPECT_NEAR(mf_rate(eq3, 0.0), 0.0, 1e-15);
}

TEST(MfEquation, BetaZero) {
    for (int r : {2, 3, 4, 7}) {
        EXPECT_EQ(mf_equation_solve(MeanFieldBeta(0.0), r), 0.0);
    }
}

TEST(MfEquation, CriticalIdentity) {
    EXPECT_NEAR(mf_equation_solve(MeanFieldBeta(beta_critical(3)), 3), 0.5, 1e-10);
    EXPECT_NEAR(mf_equation_solve(MeanFieldBeta(beta_critical(5)), 5), 0.75, 1e-10);
    for (int r = 3; r <= 10; ++r) {
        EXPECT_NEAR(mf_equation_solve(MeanFieldBeta(beta_critical(r)), r), (r - 2.0) / (r - 1.0), 1e-10);
    }
}

TEST(MfEquation, ResidualAndMonotone) {
    for (int r : {2, 3, 4, 6}) {
        double prev = 0.0;
        for (double b = 0.0; b <= 8.0; b += 0.05) {
            MeanFieldBeta bm(b);
            double u = mf_order_parameter(bm, r);
            EXPECT_GE(u, prev - 1e-12);
            prev = u;
            double us = mf_equation_solve(bm, r);
            if (us > 0.0) {
                EXPECT_LT(std::abs(mf_equation_residual(us, bm, r)), 1e-10);
            }
        }
    }
}

TEST(MfEquation, FirstOrderJumpLocalized) {
    for (int r : {3, 4, 5}) {
        double lo = 0.5 * beta_critical(r);
        double hi = 2.0 * beta_critical(r);
        ASSERT_EQ(mf_order_parameter(MeanFieldBeta(lo), r), 0.0);
        ASSERT_GT(mf_order_parameter(MeanFieldBeta(hi), r), 0.0);
        while (hi - lo > 1e-9) {
            double mid = 0.5 * (lo + hi);
            (mf_order_parameter(MeanFieldBeta(mid), r) > 0.0 ? hi : lo) = mid;
        }
        EXPECT_NEAR(hi, beta_critical(r), 1e-6);
        EXPECT_NEAR(mf_order_parameter(MeanFieldBeta(hi), r), (r - 2.0) / (r - 1.0), 1e-6);
    }
}

TEST(MfEquation, IsingContinuous) {
    EXPECT_EQ(mf_order_parameter(MeanFieldBeta(1.99), 2), 0.0);
    double u = mf_order_parameter(MeanFieldBeta(2.02), 2);
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 0.2);
}

TEST(MfMinimizers, Examples) {
    auto z = mf_minimizers(MeanFieldBeta(0.0), 3);
    ASSERT_EQ(z.size(), 1u);
    for (double v : z[0]) {
        EXPECT_NEAR(v, 1.0 / 3, 1e-15);
    }
    auto c = mf_minimizers(MeanFieldBeta(beta_critical(3)), 3);
    EXPECT_EQ(c.size(), 4u);
    const double beff = to_kac_beta(MeanFieldBeta(beta_critical(3)));
    for (const auto& v : c) {
        EXPECT_NEAR(mf_rate(v, beff), mf_rate(c[0], beff), 1e-10);
    }
    MeanFieldBeta above(1.1 * beta_critical(3));
    auto a = mf_minimizers(above, 3);
    EXPECT_EQ(a.size(), 3u);
    std::vector<double> eq(3, 1.0 / 3);
    for (const auto& v : a) {
        EXPECT_LT(mf_rate(v, to_kac_beta(above)), mf_rate(eq, to_kac_beta(above)) - 1e-6);
    }
}

TEST(MfMinimizers, StationaryUnderConversion) {
    for (int r : {2, 3, 4}) {
        for (double b : {0.5, 2.5, 3.0, 4.0, 6.0}) {
            MeanFieldBeta bm(b);
            for (const auto& v : mf_minimizers(bm, r)) {
                EXPECT_LT(projected_gradient_norm(mf_rate_gradient(v, to_kac_beta(bm))), 1e-8) << r << " " << b;
            }
        }
    }
}

TEST(Conversion, RoundTrip) {
    EXPECT_DOUBLE_EQ(from_kac_beta(1.25).value, 2.5);
    EXPECT_DOUBLE_EQ(to_kac_beta(MeanFieldBeta(3.0)), 1.5);
}

TEST(Phi, ClosedForms) {
    EXPECT_NEAR(phi_minus(3), std::pow(2.0, 8.0 / 3.0), 1e-12);
    EXPECT_NEAR(phi_plus(3), (std::pow(2.0, 16.0 / 3.0) + std::pow(2.0, 7.0 / 3.0)) / 3.0, 1e-12);
    EXPECT_NEAR(phi_minus(3), 6.3496, 1e-4);
    EXPECT_NEAR(phi_plus(3), 15.119, 1e-3);
    for (int r = 3; r <= 10; ++r) {
        EXPECT_GT(phi_plus(r), phi_minus(r));
    }
    EXPECT_THROW(phi_minus(2), InvalidArgument);
    EXPECT_THROW(phi_plus(2), InvalidArgument);
}
