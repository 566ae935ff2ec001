#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "kacpotts/profile_io.hpp"
#include "kacpotts/profiles.hpp"
#include "kacpotts/rng.hpp"

using namespace kacpotts;

namespace {

ColorConfiguration full_cfg(const TorusGrid& g, std::vector<Color> c, int q) {
    return ColorConfiguration(Subvolume::full(g), std::move(c), q);
}

DensityProfile random_profile(const TorusGrid& mesh, int q, std::uint64_t seed) {
    CounterRng rng(seed);
    std::gamma_distribution<double> gd(1.0, 1.0);
    std::vector<double> v;
    for (std::size_t c = 0; c < mesh.size(); ++c) {
        std::vector<double> row(q);
        double s = 0.0;
        for (auto& x : row) {
            s += (x = gd(rng));
        }
        for (double x : row) {
            v.push_back(x / s);
        }
    }
    return DensityProfile(mesh, q, std::move(v));
}

}

TEST(EmpiricalProfile, Monochrome) {
    TorusGrid g(1, 6);
    auto e = empirical_profile(ColorConfiguration::monochrome(Subvolume::full(g), 3, 0));
    EXPECT_DOUBLE_EQ(e.mass(0), 1.0);
    EXPECT_DOUBLE_EQ(e.mass(1), 0.0);
    EXPECT_EQ(e.sites(0).size(), 6u);
}

TEST(EmpiricalProfile, Alternating) {
    TorusGrid g(1, 4);
    auto e = empirical_profile(full_cfg(g, {0, 1, 0, 1}, 2));
    EXPECT_DOUBLE_EQ(e.mass(0), 0.5);
    EXPECT_DOUBLE_EQ(e.mass(1), 0.5);
    EXPECT_EQ(std::vector<std::size_t>(e.sites(0).begin(), e.sites(0).end()), (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(std::vector<std::size_t>(e.sites(1).begin(), e.sites(1).end()), (std::vector<std::size_t>{1, 3}));
}

TEST(DensityProfile, SimplexEnforced) {
    TorusGrid m(1, 2);
    EXPECT_THROW(DensityProfile(m, 2, {0.5, 0.6, 0.5, 0.5}), InvalidArgument);
    EXPECT_THROW(DensityProfile(m, 2, {1.1, -0.1, 0.5, 0.5}), InvalidArgument);
    EXPECT_NO_THROW(DensityProfile(m, 2, {0.25, 0.75, 1.0, 0.0}));
}

TEST(DilutionField, RangeAndNormalization) {
    TorusGrid m(1, 4);
    EXPECT_THROW(DilutionField(m, {0.5, 1.2, 0, 0}), InvalidArgument);
    DilutionField d(m, {1, 1, 0, 0});
    EXPECT_DOUBLE_EQ(d.mass(), 0.5);
    EXPECT_DOUBLE_EQ(d.normalized()[0], 2.0);
    EXPECT_DOUBLE_EQ(d.normalized()[3], 0.0);
    EXPECT_THROW(DilutionField(m, {0, 0, 0, 0}).normalized(), InvalidArgument);
}

TEST(WeakDistance, Basics) {
    TorusGrid g(1, 16);
    auto mesh = TorusGrid(1, 4);
    auto a = to_measure(random_profile(mesh, 3, 1));
    auto b = to_measure(random_profile(mesh, 3, 2));
    auto c = to_measure(random_profile(mesh, 3, 3));
    EXPECT_NEAR(weak_distance(a, a).value, 0.0, 1e-15);
    auto ab = weak_distance(a, b);
    EXPECT_NEAR(ab.value, weak_distance(b, a).value, 1e-15);
    EXPECT_LE(ab.value, 1.0 + ab.tail);
    EXPECT_LE(ab.value, weak_distance(a, c).value + weak_distance(c, b).value + 1e-15);
}

TEST(WeakDistance, TriangleOnRandomTriples) {
    auto mesh = TorusGrid(2, 3);
    for (std::uint64_t k = 0; k < 30; ++k) {
        auto a = to_measure(random_profile(mesh, 2, 3 * k));
        auto b = to_measure(random_profile(mesh, 2, 3 * k + 1));
        auto c = to_measure(random_profile(mesh, 2, 3 * k + 2));
        auto ab = weak_distance(a, b, 32);
        EXPECT_LE(ab.value, weak_distance(a, c, 32).value + weak_distance(c, b, 32).value + 2 * ab.tail);
    }
}

TEST(WeakDistance, IidUniformColorsCloseToEquidistribution) {
    TorusGrid g(1, 256);
    CounterRng rng(2024);
    std::vector<Color> c(256);
    for (auto& x : c) {
        x = static_cast<Color>(rng() % 3);
    }
    auto emp = to_measure(empirical_profile(full_cfg(g, c, 3)));
    auto flat = to_measure(DensityProfile::equidistribution(TorusGrid(1, 1), 3));
    EXPECT_LT(weak_distance(emp, flat).value, 0.05);
}

TEST(WeakDistance, CellMeasuresIntegrateExactly) {
    // a flat density is Lebesgue measure whatever the mesh, so every nonconstant mode integrates to zero
    TestFunctionFamily fam(2, 2, 40);
    std::vector<double> a{0.3, 0.7};
    for (int n : {1, 3, 8}) {
        auto m = to_measure(DensityProfile::flat(TorusGrid(2, n), a));
        for (std::size_t j = 0; j < fam.size(); ++j) {
            const auto& f = fam[j];
            bool constant = f.k[0] == 0 && f.k[1] == 0;
            double expect = constant && !f.sine ? a[static_cast<std::size_t>(f.color)] : 0.0;
            EXPECT_NEAR(integrate(m, f), expect, 1e-14) << n << " " << j;
        }
    }
    // one cell [0, 1/2) of a two-cell mesh carrying all the mass
    DensityProfile half(TorusGrid(1, 2), 1, {1.0, 1.0});
    ScalarField dens(TorusGrid(1, 2), std::vector<double>{2.0, 0.0});
    TestFunction s1{{1, 0, 0}, true, 0};
    EXPECT_NEAR(integrate(to_measure(half, &dens), s1), 2.0 / std::numbers::pi, 1e-14);
}

TEST(WeakDistance, FamilyBoundedBySupNorm) {
    TestFunctionFamily fam(2, 3, 64);
    ASSERT_EQ(fam.size(), 64u);
    for (std::size_t j = 0; j < fam.size(); ++j) {
        for (double x : {0.0, 0.13, 0.5, 0.77}) {
            for (int a = 0; a < 3; ++a) {
                EXPECT_LE(std::abs(fam[j]({x, 1 - x, 0}, a, 2)), 1.0 + 1e-15);
            }
        }
    }
}

TEST(CoarseGrain, SingleBlockGivesGlobalMean) {
    TorusGrid mesh(1, 6);
    auto p = random_profile(mesh, 3, 4);
    auto out = coarse_grain(p, uniform_blocks(mesh, 1)).profile;
    for (int a = 0; a < 3; ++a) {
        double mean = p.component(a).mean();
        for (std::size_t c = 0; c < 6; ++c) {
            EXPECT_NEAR(out.at(c, a), mean, 1e-15);
        }
    }
}

TEST(CoarseGrain, TwoBlockExample) {
    TorusGrid mesh(1, 4);
    DensityProfile p(mesh, 2, {1, 0, 1, 0, 0, 1, 0, 1});
    auto out = coarse_grain(p, uniform_blocks(mesh, 2)).profile;
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_DOUBLE_EQ(out.values()[i], p.values()[i]);
    }
}

TEST(CoarseGrain, Projection) {
    TorusGrid mesh(2, 6);
    auto p = random_profile(mesh, 4, 5);
    auto blocks = uniform_blocks(mesh, 3);
    DilutionField rho(mesh, std::vector<double>(36, 0.3));
    auto once = coarse_grain(p, blocks, &rho).profile;
    auto twice = coarse_grain(once, blocks, &rho).profile;
    for (std::size_t i = 0; i < once.values().size(); ++i) {
        EXPECT_EQ(once.values()[i], twice.values()[i]);
    }
}

TEST(CoarseGrain, ZeroMassBlockConvention) {
    TorusGrid mesh(1, 4);
    DensityProfile p(mesh, 2, {0.2, 0.8, 0.4, 0.6, 0.5, 0.5, 1, 0});
    DilutionField rho(mesh, {1, 1, 0, 0});
    auto cg = coarse_grain(p, uniform_blocks(mesh, 2), &rho);
    EXPECT_FALSE(cg.zero_mass_block[0]);
    EXPECT_TRUE(cg.zero_mass_block[1]);
    EXPECT_NEAR(cg.profile.at(0, 0), 0.3, 1e-15);
    EXPECT_EQ(cg.profile.at(2, 0), 0.0);
    EXPECT_EQ(cg.profile.at(3, 1), 0.0);
}

TEST(RealizeProfile, AlternatingHalfHalf) {
    TorusGrid g(1, 10);
    std::vector<double> a{0.5, 0.5};
    auto r = realize_profile(DensityProfile::flat(TorusGrid(1, 1), a), g);
    EXPECT_EQ(r.max_error, 0.0);
    auto c = r.configuration.colors();
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
        EXPECT_NE(c[i], c[i + 1]);
    }
}

TEST(RealizeProfile, OneThirdTwoThirds) {
    TorusGrid g(1, 9);
    std::vector<double> a{1.0 / 3, 2.0 / 3};
    auto r = realize_profile(DensityProfile::flat(TorusGrid(1, 1), a), g);
    auto e = empirical_profile(r.configuration);
    EXPECT_NEAR(e.mass(0), 3.0 / 9, 1e-15);
    EXPECT_NEAR(e.mass(1), 6.0 / 9, 1e-15);
    auto c = r.configuration.colors();
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(c[i], c[i + 3]);
    }
}

TEST(RealizeProfile, RoundTripWithinOneSitePerCell) {
    // a cell holding k sites can only represent multiples of 1/k, so 1/k is the resolution
    for (int cells : {1, 4}) {
        TorusGrid mesh(1, cells);
        auto target = random_profile(mesh, 3, 6);
        for (int n : {16, 64, 256}) {
            TorusGrid g(1, n);
            const double per_cell = static_cast<double>(n / cells);
            auto r = realize_profile(target, g);
            auto back = empirical_to_mesh(empirical_profile(r.configuration), mesh);
            auto cg = coarse_grain(back, uniform_blocks(mesh, cells)).profile;
            for (std::size_t i = 0; i < target.values().size(); ++i) {
                EXPECT_LT(std::abs(cg.values()[i] - target.values()[i]), 1.0 / per_cell);
            }
            EXPECT_LT(r.max_error, 1.0 / per_cell);
        }
    }
}

TEST(LevelsetDilution, FullTorus) {
    std::vector<Subvolume> ladder;
    for (int n : {64, 128, 256}) {
        ladder.push_back(Subvolume::full(TorusGrid(1, n)));
    }
    for (int mesh : {1, 8}) {
        auto rep = levelset_dilution(ladder, DilutionField::constant(TorusGrid(1, mesh), 1.0));
        for (const auto& row : rep.rows) {
            EXPECT_NEAR(row.distance, 0.0, 1e-14);
        }
    }
}

TEST(LevelsetDilution, EvenSites) {
    std::vector<Subvolume> ladder;
    for (int n : {8, 32, 128, 512}) {
        ladder.push_back(levelset(TorusGrid(1, n), [](const Point&, std::size_t x) { return x % 2 == 0; }));
    }
    auto rep = levelset_dilution(ladder, DilutionField::constant(TorusGrid(1, 1), 0.5));
    EXPECT_TRUE(rep.decreasing);
    EXPECT_LT(rep.rows.back().distance, 0.02);
}

TEST(LevelsetDilution, LeftHalf) {
    std::vector<Subvolume> ladder;
    for (int n : {8, 32, 128, 512}) {
        ladder.push_back(levelset(TorusGrid(1, n), [](const Point& u, std::size_t) { return u[0] < 0.5; }));
    }
    std::vector<double> rho(64);
    for (int i = 0; i < 64; ++i) {
        rho[i] = i < 32 ? 1.0 : 0.0;
    }
    auto rep = levelset_dilution(ladder, DilutionField(TorusGrid(1, 64), rho));
    EXPECT_TRUE(rep.decreasing);
}

TEST(ProfileIo, BinaryAndCsvRoundTrip) {
    TorusGrid mesh(2, 3);
    auto p = random_profile(mesh, 3, 9);
    std::stringstream bin;
    write_profile_binary(bin, p);
    auto pb = read_profile_binary(bin);
    std::stringstream csv;
    write_profile_csv(csv, p);
    auto pc = read_profile_csv(csv, mesh, 3);
    for (std::size_t i = 0; i < p.values().size(); ++i) {
        EXPECT_EQ(pb.values()[i], p.values()[i]);
        EXPECT_EQ(pc.values()[i], p.values()[i]);
    }
    std::stringstream bad("XXXX");
    EXPECT_THROW(read_profile_binary(bad), std::exception);
}

TEST(ProfileIo, ConfigurationRoundTrip) {
    TorusGrid g(1, 7);
    ColorConfiguration cfg(Subvolume(g, {0, 2, 3, 6}), {2, 0, 1, 1}, 3);
    std::stringstream s;
    write_configuration_binary(s, cfg);
    auto back = read_configuration_binary(s);
    EXPECT_EQ(back.size(), 4u);
    EXPECT_TRUE(std::equal(back.colors().begin(), back.colors().end(), cfg.colors().begin()));
    EXPECT_TRUE(std::equal(back.domain().sites().begin(), back.domain().sites().end(), cfg.domain().sites().begin()));
}
