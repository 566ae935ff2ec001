#include <cmath>

#include <gtest/gtest.h>

#include "kacpotts/fuzzy.hpp"

using namespace kacpotts;

namespace {

KernelQuery query_from(const TorusGrid& g, std::size_t site, const std::vector<Color>& classes, int s) {
    return KernelQuery{site, ColorConfiguration(Subvolume::perforated(g, site), classes, s)};
}

std::vector<std::vector<Color>> all_boundaries(std::size_t len, int s) {
    std::vector<std::vector<Color>> out;
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) {
        total *= static_cast<std::size_t>(s);
    }
    for (std::size_t code = 0; code < total; ++code) {
        std::vector<Color> c(len);
        std::size_t x = code;
        for (auto& v : c) {
            v = static_cast<Color>(x % s);
            x /= s;
        }
        out.push_back(c);
    }
    return out;
}

}

TEST(FuzzyPartition, Validation) {
    EXPECT_THROW(FuzzyPartition({3}), InvalidArgument);
    EXPECT_THROW(FuzzyPartition({1, 1}), InvalidArgument);
    EXPECT_THROW(FuzzyPartition({2, 0}), InvalidArgument);
    FuzzyPartition p({3, 1});
    EXPECT_EQ(p.q(), 4);
    EXPECT_EQ(p.class_of(2), 0);
    EXPECT_EQ(p.class_of(3), 1);
}

TEST(FuzzyMap, Examples) {
    TorusGrid g(1, 4);
    auto f = fuzzy_map(ColorConfiguration(Subvolume::full(g), {0, 1, 2, 3}, 4), FuzzyPartition({3, 1}));
    EXPECT_EQ(std::vector<Color>(f.colors().begin(), f.colors().end()), (std::vector<Color>{0, 0, 0, 1}));
    EXPECT_EQ(f.num_colors(), 2);
    auto m = fuzzy_map(ColorConfiguration::monochrome(Subvolume::full(g), 4, 3), FuzzyPartition({2, 1, 1}));
    for (Color c : m.colors()) {
        EXPECT_EQ(c, 2);
    }
    auto two = fuzzy_map(ColorConfiguration(Subvolume::full(g), {0, 1, 2, 3}, 4), FuzzyPartition({2, 1, 1}));
    EXPECT_EQ(two.colors()[0], 0);
    EXPECT_EQ(two.colors()[1], 0);
}

TEST(LevelSets, Examples) {
    TorusGrid g(1, 8);
    auto all = ColorConfiguration(Subvolume::perforated(g, 0), std::vector<Color>(7, 0), 2);
    auto ls = level_sets(all, 1.6);
    EXPECT_EQ(ls.sets[0].size(), 7u);
    EXPECT_TRUE(ls.sets[1].empty());
    EXPECT_NEAR(ls.betas[0], 1.6 * 7 / 8, 1e-15);
    EXPECT_EQ(ls.betas[1], 0.0);
    for (std::size_t site : {0u, 1u}) {
        auto dom = Subvolume::perforated(g, site);
        std::vector<Color> c;
        for (std::size_t x : dom.sites()) {
            c.push_back(static_cast<Color>(x % 2));
        }
        auto alt = level_sets(ColorConfiguration(dom, c, 2), 1.0);
        EXPECT_EQ(alt.sets[0].size() + alt.sets[1].size(), 7u);
        EXPECT_EQ(alt.sets[0].size(), site == 0 ? 3u : 4u);
    }
}

TEST(KernelDirect, BetaZeroCountsPreimages) {
    TorusGrid g(1, 3);
    FuzzyPartition p({2, 1});
    auto k = kernel_direct(ModelParams{3, 0.0, KacKernel::cosine()}, p, query_from(g, 1, {0, 1}, 2));
    EXPECT_NEAR(k[0], 2.0 / 3, 1e-14);
    EXPECT_NEAR(k[1], 1.0 / 3, 1e-14);
}

TEST(KernelFactorized, BetaZero) {
    TorusGrid g(1, 4);
    FuzzyPartition p({2, 1, 1});
    auto k = kernel_factorized(ModelParams{4, 0.0, KacKernel::cosine()}, p, query_from(g, 0, {0, 2, 1}, 3));
    EXPECT_NEAR(k.probabilities[0], 0.5, 1e-15);
    EXPECT_NEAR(k.probabilities[1], 0.25, 1e-15);
    EXPECT_NEAR(k.probabilities[2], 0.25, 1e-15);
}

TEST(KernelFactorized, MatchesDirectSmallInstances) {
    struct Case {
        int n;
        std::vector<int> sizes;
        double beta;
        KacKernel kernel;
    };
    std::vector<Case> cases{{3, {2, 1}, 1.0, KacKernel::uniform()},
                            {3, {2, 1}, 1.0, KacKernel::box(0.3)},
                            {3, {2, 1}, 2.0, KacKernel::cosine()},
                            {4, {3, 1}, 2.0, KacKernel::uniform()},
                            {4, {3, 1}, 2.0, KacKernel::wrapped_gaussian(0.2)},
                            {4, {2, 2}, 1.5, KacKernel::cosine()},
                            {4, {2, 1, 1}, 0.7, KacKernel::box(0.25)}};
    for (const auto& c : cases) {
        TorusGrid g(1, c.n);
        FuzzyPartition p(c.sizes);
        ModelParams params{p.q(), c.beta, c.kernel};
        for (const auto& b : all_boundaries(static_cast<std::size_t>(c.n - 1), p.s())) {
            for (std::size_t site : {std::size_t{0}, static_cast<std::size_t>(c.n - 1)}) {
                auto q = query_from(g, site, b, p.s());
                auto d = kernel_direct(params, p, q);
                auto f = kernel_factorized(params, p, q);
                double sum = 0.0;
                for (int k = 0; k < p.s(); ++k) {
                    EXPECT_NEAR(d[k], f.probabilities[k], 1e-12) << c.kernel.describe() << " n=" << c.n;
                    sum += f.probabilities[k];
                }
                EXPECT_NEAR(sum, 1.0, 1e-12);
            }
        }
    }
}

TEST(KernelDirect, WithinClassPermutationInvariance) {
    TorusGrid g(1, 4);
    FuzzyPartition p({2, 2});
    ModelParams params{4, 1.4, KacKernel::cosine()};
    auto q = query_from(g, 2, {0, 1, 1}, 2);
    auto a = kernel_direct(params, p, q);
    auto f = kernel_factorized(params, p, q);
    EXPECT_NEAR(a[0] + a[1], 1.0, 1e-12);
    EXPECT_NEAR(f.probabilities[0], a[0], 1e-12);
}

TEST(EstimateA, DegenerateCases) {
    TorusGrid g(1, 6);
    auto st = discretize_kernel(KacKernel::cosine(), g);
    auto vol = Subvolume(g, {1, 2, 4});
    EXPECT_EQ(estimate_A(0, 0.0, 3, vol, st).value, 1.0);
    EXPECT_EQ(estimate_A(0, 1.2, 3, Subvolume(g, {}), st).value, 1.0);
    auto one = estimate_A(0, 1.2, 1, vol, st);
    double jsum = st[g.difference(0, 1)] + st[g.difference(0, 2)] + st[g.difference(0, 4)];
    EXPECT_NEAR(one.value, std::exp(2.0 * 1.2 * jsum / 3.0), 1e-12);
    EXPECT_EQ(one.std_error, 0.0);
}

TEST(EstimateA, McmcAgreesWithExact) {
    TorusGrid g(1, 8);
    auto st = discretize_kernel(KacKernel::cosine(), g);
    auto vol = Subvolume(g, {1, 2, 3, 5, 6, 7});
    auto ex = estimate_A(0, 1.5, 3, vol, st);
    auto mc = estimate_A(0, 1.5, 3, vol, st, EstimationMode::mcmc(20000, 8, 3));
    EXPECT_GT(mc.std_error, 0.0);
    EXPECT_LT(std::abs(mc.value - ex.value), 4.0 * mc.std_error + 1e-12);
}

TEST(LimitingKernel, EquidistributedAndBetaZero) {
    FuzzyPartition p({2, 1});
    TorusGrid mesh(1, 8);
    std::vector<double> a{2.0 / 3, 1.0 / 3};
    for (double beta : {0.0, 0.5, 3.0}) {
        auto lk = limiting_kernel(ModelParams{3, beta, KacKernel::cosine()}, p, 3, DensityProfile::flat(mesh, a));
        EXPECT_NEAR(lk.probabilities[0], 2.0 / 3, 1e-14);
        EXPECT_NEAR(lk.probabilities[1], 1.0 / 3, 1e-14);
    }
    std::vector<double> b{0.2, 0.8};
    auto lk0 = limiting_kernel(ModelParams{3, 0.0, KacKernel::cosine()}, p, 0, DensityProfile::flat(mesh, b));
    EXPECT_NEAR(lk0.probabilities[0], 2.0 / 3, 1e-14);
}

TEST(LimitingKernel, ClassPermutationSymmetry) {
    TorusGrid mesh(1, 4);
    DensityProfile rho(mesh, 3, {0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2, 0.3, 0.3, 0.4});
    auto lk = limiting_kernel(ModelParams{6, 1.3, KacKernel::cosine()}, FuzzyPartition({1, 2, 3}), 1, rho);
    std::vector<double> v;
    for (std::size_t c = 0; c < 4; ++c) {
        v.push_back(rho.at(c, 2));
        v.push_back(rho.at(c, 0));
        v.push_back(rho.at(c, 1));
    }
    auto lp = limiting_kernel(ModelParams{6, 1.3, KacKernel::cosine()}, FuzzyPartition({3, 1, 2}), 1,
                              DensityProfile(mesh, 3, v));
    EXPECT_NEAR(lk.probabilities[0], lp.probabilities[1], 1e-14);
    EXPECT_NEAR(lk.probabilities[1], lp.probabilities[2], 1e-14);
    EXPECT_NEAR(lk.probabilities[2], lp.probabilities[0], 1e-14);
}

TEST(GngClassify, Examples) {
    FuzzyPartition p({3, 1});
    EXPECT_EQ(gng_classify(p, MeanFieldBeta(0.9 * beta_critical(3))), Gibbsianness::gibbs);
    EXPECT_EQ(gng_classify(p, MeanFieldBeta(beta_critical(3))), Gibbsianness::non_gibbs);
    FuzzyPartition q5({2, 3});
    EXPECT_EQ(gng_classify(q5, MeanFieldBeta(0.5 * (beta_critical(2) + beta_critical(3)))), Gibbsianness::outside_theorem);
    EXPECT_EQ(gng_classify(q5, MeanFieldBeta(1.0)), Gibbsianness::gibbs);
}

TEST(BadProfilePair, FourColorsHalfHalf) {
    FuzzyPartition p({3, 1});
    auto bad = bad_profile_pair(p, MeanFieldBeta(2 * beta_critical(3)), 8);
    EXPECT_EQ(bad.critical_class, 0);
    EXPECT_NEAR(bad.alpha[0], 0.5, 1e-15);
    EXPECT_NEAR(bad.alpha[1], 0.5, 1e-15);
    EXPECT_NEAR(bad.minus[0], 0.5 - 0.125, 1e-15);
    EXPECT_NEAR(bad.plus[0], 0.5 + 0.125, 1e-15);
    EXPECT_NEAR(bad.minus[1], 0.5 + 0.125, 1e-15);
    EXPECT_NEAR(bad.plus[1], 0.5 - 0.125, 1e-15);
}

TEST(BadProfilePair, NoBadPointBelowThreshold) {
    EXPECT_THROW(bad_profile_pair(FuzzyPartition({3, 1}), MeanFieldBeta(0.9 * beta_critical(3)), 8), Infeasible);
}

TEST(BadProfilePair, SevenColors) {
    FuzzyPartition p({3, 4});
    MeanFieldBeta b(beta_critical(3) / 0.4);
    ASSERT_GT(std::abs(b.value * 0.6 - beta_critical(4)), 1e-6);
    auto bad = bad_profile_pair(p, b, 20);
    EXPECT_EQ(bad.critical_class, 0);
    EXPECT_NEAR(bad.alpha[0], 0.4, 1e-14);
    EXPECT_NEAR(bad.alpha[1], 0.6, 1e-14);
    EXPECT_TRUE(bad.also_critical.empty());
}

TEST(KernelGap, ClosedFormValues) {
    FuzzyPartition p({3, 1});
    MeanFieldBeta b(2 * beta_critical(3));
    auto bad = bad_profile_pair(p, b, 8);
    auto gap = kernel_gap(p, b, bad);
    const double minus = 3 * phi_minus(3) / (3 * phi_minus(3) + 256.0);
    const double plus = 3 * phi_plus(3) / (3 * phi_plus(3) + 256.0);
    EXPECT_NEAR(gap.gamma_minus[0], minus, 1e-12);
    EXPECT_NEAR(gap.gamma_plus[0], plus, 1e-12);
    EXPECT_NEAR(gap.gamma_minus[0], 0.0693, 1e-4);
    EXPECT_NEAR(gap.gamma_plus[0], 0.1505, 1e-4);
    EXPECT_NEAR(gap.gap, 0.081, 1e-3);
    EXPECT_NEAR(gap.gamma_minus[0] + gap.gamma_minus[1], 1.0, 1e-14);
}

TEST(KernelGap, PositiveForAdmissibleBetas) {
    for (auto sizes : {std::vector<int>{3, 1}, std::vector<int>{3, 2}, std::vector<int>{3, 4}, std::vector<int>{1, 3, 1}}) {
        FuzzyPartition p(sizes);
        for (double f : {1.2, 2.0, 3.0}) {
            MeanFieldBeta b(f * beta_critical(3));
            try {
                auto bad = bad_profile_pair(p, b, 64);
                EXPECT_GT(kernel_gap(p, b, bad).gap, 0.0);
            } catch (const Infeasible&) {
            }
        }
    }
}

TEST(KernelGap, RejectsIsingClass) {
    FuzzyPartition p({2, 1});
    BadProfilePair fake;
    fake.critical_class = 0;
    fake.alpha = {0.5, 0.5};
    fake.minus = fake.alpha;
    fake.plus = fake.alpha;
    EXPECT_THROW(kernel_gap(p, MeanFieldBeta(4.0), fake), InvalidArgument);
}

TEST(FlatFuzzyBoundary, Frequencies) {
    TorusGrid g(1, 64);
    std::vector<double> a{0.375, 0.625};
    auto b = flat_fuzzy_boundary(a, g, 0);
    EXPECT_EQ(b.size(), 63u);
    std::size_t ones = 0;
    for (Color c : b.colors()) {
        ones += c == 1;
    }
    EXPECT_NEAR(ones / 64.0, 0.625, 1.0 / 64 + 1e-12);
}
