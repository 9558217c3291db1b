#include <gtest/gtest.h>

#include <kolmo/dyadic.hpp>
#include <kolmo/numerics.hpp>

#include "test_support.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace kolmo;
using kolmo::testing::random_compact_field;

TEST(Profile, SmoothingRange) {
    EXPECT_THROW(build_profile(0.0), config_error);
    EXPECT_THROW(build_profile(0.125), config_error);
    EXPECT_THROW(build_profile(0.3), config_error);
    EXPECT_NO_THROW(build_profile(0.01));
    EXPECT_NO_THROW(build_profile(0.124));
}

TEST(Profile, SupportsAndPlateau) {
    for (double d : {0.01, 0.05, 0.1, 0.124}) {
        DyadicProfile p(d);
        for (double r = 0.0; r <= 6.0; r += 1e-3) {
            EXPECT_GE(p.psi(r), 0.0);
            EXPECT_GE(p.phi(r), 0.0);
            if (r <= 0.75) {
                EXPECT_EQ(p.psi(r), 1.0);
                EXPECT_EQ(p.phi(r), 0.0);
            }
            if (r >= 4.0 / 3.0) {
                EXPECT_EQ(p.psi(r), 0.0);
            }
            if (r >= 8.0 / 3.0) {
                EXPECT_EQ(p.phi(r), 0.0);
            }
        }
    }
}

TEST(Profile, PartitionAtTwo) {
    DyadicProfile p;
    EXPECT_EQ(p.psi(2.0), 0.0);
    double s = 0;
    for (int j = 0; j < 10; ++j) s += p.phi(std::ldexp(2.0, -j));
    EXPECT_NEAR(s, 1.0, 1e-15);
}

TEST(Profile, PartitionResidual) {
    DyadicProfile p;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    double worst = 0;
    for (int t = 0; t < 100000; ++t) {
        const double r = std::pow(2.0, 14.0 * ud(rng)) - 1.0;
        double s = p.psi(r);
        for (int j = 0; j < 20; ++j) s += p.block(j, r);
        worst = std::max(worst, std::abs(s - 1.0));
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(Profile, Disjointness) {
    DyadicProfile p;
    for (double r = 0.0; r < 40.0; r += 1e-3) {
        EXPECT_EQ(p.phi(r) * p.phi(r / 4.0), 0.0);
        for (int j = 1; j < 5; ++j) EXPECT_EQ(p.psi(r) * p.block(j, r), 0.0);
        for (int j = 0; j < 4; ++j)
            for (int k = j + 2; k < 6; ++k) EXPECT_EQ(p.block(j, r) * p.block(k, r), 0.0);
    }
}

class ProjectionTest : public ::testing::Test {
protected:
    BoxGrid g{1, 64.0, 1024};
    std::mt19937_64 rng{3};
};

TEST_F(ProjectionTest, FrequencyPartitionReconstructs) {
    const int J = max_freq_block(g);
    for (int t = 0; t < 5; ++t) {
        auto f = random_compact_field(g, rng, 10.0, 20.0);
        auto F = to_frequency(f);
        std::vector<cplx> band(F.samples());
        // strictly band-limited version
        auto xr = g.frequency_radii();
        for (std::size_t i = 0; i < band.size(); ++i)
            if (xr[i] > 0.75 * std::ldexp(1.0, J + 1)) band[i] = 0.0;
        auto fb = to_physical(SpectralField(g, band, representation::frequency));
        auto sum = SpectralField::zeros(g);
        for (int j = -1; j <= J; ++j) sum = sum + freq_project(fb, j);
        EXPECT_LE(l2_norm(sum - fb), 1e-12 * l2_norm(fb));
    }
}

TEST_F(ProjectionTest, SingleModeMultiplier) {
    DyadicProfile p;
    for (int j = 0; j <= 3; ++j) {
        // pick the lattice mode closest to 1.5 * 2^j and compare with phi at that radius
        const long m = std::lround(1.5 * std::ldexp(1.0, j) / g.mode_spacing());
        const double xi = m * g.mode_spacing();
        auto f = sample(g, [&](const point& v) { return std::polar(1.0, xi * v[0]); });
        auto out = freq_project(f, j);
        const double expect = p.phi(std::ldexp(xi, -j));
        EXPECT_LE(l2_norm(out - cplx(expect) * f), 1e-12 * l2_norm(f));
    }
    auto mode = sample(g, [&](const point& v) { return std::polar(1.0, 96 * g.mode_spacing() * v[0]); });
    auto out = freq_project(mode, 1);
    EXPECT_LE(l2_norm(out), 1e-14 * l2_norm(mode));
}

TEST_F(ProjectionTest, FrequencyDisjointness) {
    auto f = random_compact_field(g, rng, 20.0, 20.0);
    const double n = l2_norm(f);
    for (int j = -1; j <= 3; ++j)
        for (int k = j + 2; k <= 3; ++k) EXPECT_LE(l2_norm(freq_project(freq_project(f, k), j)), 1e-14 * n);
}

TEST_F(ProjectionTest, FrequencyOutOfRange) {
    EXPECT_THROW(freq_project(SpectralField::zeros(g), max_freq_block(g) + 1), out_of_range_error);
    EXPECT_THROW(freq_project(SpectralField::zeros(g), -2), out_of_range_error);
}

TEST_F(ProjectionTest, PhasePartitionReconstructs) {
    const int K = max_phase_block(g);
    auto f = random_compact_field(g, rng, 10.0, 0.75 * std::ldexp(1.0, K + 1));
    auto sum = SpectralField::zeros(g);
    for (int k = -1; k <= K; ++k) sum = sum + phase_project(f, k);
    double worst = 0;
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(sum[i] - f[i]));
    EXPECT_LE(worst, 1e-12 * max_abs(f));
}

TEST_F(ProjectionTest, PhaseSmallSupportAndDisjointness) {
    auto f = random_compact_field(g, rng, 10.0, 0.5);
    for (int k = 1; k <= max_phase_block(g); ++k) EXPECT_EQ(l2_norm(phase_project(f, k)), 0.0);
    auto h = random_compact_field(g, rng, 10.0, 20.0);
    for (int k = -1; k <= 3; ++k)
        for (int l = k + 2; l <= 4; ++l)
            EXPECT_LE(l2_norm(phase_project(phase_project(h, k), l)), 1e-14 * l2_norm(h));
    EXPECT_THROW(phase_project(h, max_phase_block(g) + 1), out_of_range_error);
}

TEST_F(ProjectionTest, RepresentationPreserved) {
    auto f = random_compact_field(g, rng, 10.0, 20.0);
    auto a = freq_project(to_frequency(f), 1);
    EXPECT_EQ(a.rep(), representation::frequency);
    EXPECT_LE(l2_norm(to_physical(a) - freq_project(f, 1)), 1e-12 * l2_norm(f));
}

TEST(BlockEnergy, ZeroField) {
    BoxGrid g(1, 32.0, 512);
    auto b = block_energy_matrix(SpectralField::zeros(g), 2, 2);
    for (double e : b.energies) EXPECT_EQ(e, 0.0);
}

TEST(BlockEnergy, WavePacketConcentration) {
    BoxGrid g(1, 256.0, 8192);
    for (auto [j0, k0] : {std::pair{2, 3}, std::pair{3, 5}, std::pair{4, 4}}) {
        const double v0 = 1.25 * std::ldexp(1.0, k0);
        const double rho = 0.25 * std::ldexp(1.0, k0);
        const double xi0 = 1.25 * std::ldexp(1.0, j0);
        auto f = sample(g, [&](const point& v) {
            return kolmo::testing::bump((v[0] - v0) / rho) * std::polar(1.0, xi0 * v[0]);
        });
        auto b = block_energy_matrix(f, max_freq_block(g), max_phase_block(g));
        double near = 0;
        for (int j = j0 - 1; j <= j0 + 1; ++j)
            for (int k = k0 - 1; k <= k0 + 1; ++k) near += b.at(j, k);
        EXPECT_GE(near / b.total(), 0.8) << j0 << "," << k0;
    }
}

TEST(BlockEnergy, TotalWithinOverlapBounds) {
    BoxGrid g(1, 64.0, 1024);
    std::mt19937_64 rng(5);
    for (int t = 0; t < 50; ++t) {
        auto f = random_compact_field(g, rng, 10.0, 20.0);
        auto b = block_energy_matrix(f, max_freq_block(g), max_phase_block(g));
        for (double e : b.energies) EXPECT_GE(e, 0.0);
        const double r = b.total() / std::pow(l2_norm(f), 2);
        EXPECT_GE(r, 0.25);
        EXPECT_LE(r, 4.0);
    }
}

TEST(BlockEnergy, OrderingsDifferByCommutator) {
    BoxGrid g(1, 64.0, 1024);
    std::mt19937_64 rng(6);
    auto f = random_compact_field(g, rng, 10.0, 20.0);
    auto a = block_energy_matrix(f, 3, 4, block_order::freq_after_phase);
    auto b = block_energy_matrix(f, 3, 4, block_order::phase_after_freq);
    for (int j = -1; j <= 3; ++j)
        for (int k = -1; k <= 4; ++k) {
            double d = std::abs(std::sqrt(a.at(j, k)) - std::sqrt(b.at(j, k)));
            EXPECT_LE(d, commutator_probe(f, j, k) * (1 + 1e-9) + 1e-14);
        }
}

TEST(BlockEnergy, CsvAndJson) {
    BoxGrid g(1, 32.0, 512);
    std::mt19937_64 rng(8);
    auto b = block_energy_matrix(random_compact_field(g, rng, 5.0, 8.0), 1, 2);
    std::ostringstream c, j;
    write_blocks_csv(c, b);
    write_blocks_json(j, b);
    EXPECT_EQ(c.str().substr(0, 14), "j,k,energy\n-1,");
    EXPECT_NE(j.str().find("\"energies\":[["), std::string::npos);
}

TEST(DyadicNorm, EquivalenceWithDirectNorm) {
    BoxGrid g(1, 64.0, 1024);
    std::mt19937_64 rng(9);
    double lo = 1e300, hi = 0;
    for (int t = 0; t < 50; ++t) {
        auto f = random_compact_field(g, rng, 10.0, 20.0);
        auto b = block_energy_matrix(f, max_freq_block(g), max_phase_block(g));
        const double base = dyadic_norm_from_blocks(b, 0, 0) / l2_norm(f);
        EXPECT_GE(base, 0.5);
        EXPECT_LE(base, 2.0);
        double prev = 0;
        for (int m = -2; m <= 2; ++m) {
            const double dm = dyadic_norm_from_blocks(b, m, 1);
            EXPECT_GE(dm, prev);
            prev = dm;
            for (int l = -2; l <= 2; ++l) {
                const double r = dyadic_norm_from_blocks(b, m, l) / sobolev_norm(f, {double(m), double(l)});
                lo = std::min(lo, r);
                hi = std::max(hi, r);
            }
        }
    }
    EXPECT_GE(lo, 1.0 / 8.0);
    EXPECT_LE(hi, 8.0);
    RecordProperty("ratio_min", std::to_string(lo));
    RecordProperty("ratio_max", std::to_string(hi));
}

TEST(DyadicNorm, TwoDimensionalEquivalence) {
    BoxGrid g(2, 32.0, 256);
    std::mt19937_64 rng(10);
    for (int t = 0; t < 3; ++t) {
        auto f = random_compact_field(g, rng, 8.0, 10.0);
        for (int m : {-1, 0, 2})
            for (int l : {-2, 0, 1}) {
                const double r = dyadic_sobolev_norm(f, m, l) / sobolev_norm(f, {double(m), double(l)});
                EXPECT_GE(r, 1.0 / 8.0);
                EXPECT_LE(r, 8.0);
            }
    }
}

TEST(Commutator, ZeroAndFarMode) {
    BoxGrid g(1, 64.0, 8192);
    EXPECT_EQ(commutator_probe(SpectralField::zeros(g), 1, 1), 0.0);
    // lattice mode at |xi| ~ 80, far above frequency block 0
    auto mode = sample(g, [&](const point& v) { return std::polar(1.0, 1630 * g.mode_spacing() * v[0]); });
    EXPECT_LE(commutator_probe(mode, 0, 3), 1e-8 * l2_norm(mode));
    // tail decays faster than any fixed power as the mode moves away
    auto at = [&](long m) {
        auto f = sample(g, [&](const point& v) { return std::polar(1.0, m * g.mode_spacing() * v[0]); });
        return commutator_probe(f, 0, 3) / l2_norm(f);
    };
    EXPECT_LT(at(815) / at(407), 0.05);
}

TEST(Commutator, ScalingBoundedOverSweep) {
    // neighbour blocks j+1 <= 6 must be resolved for the local normaliser
    BoxGrid g(1, 256.0, 32768);
    std::mt19937_64 rng(11);
    std::vector<double> acc(25, 0.0), loc(25, 0.0);
    double nf2 = 0;
    for (int r = 0; r < 4; ++r) {
        auto f = kolmo::testing::octave_noise(g, rng);
        nf2 += std::pow(l2_norm(f), 2);
        auto b = block_energy_matrix(f, 6, 6);
        for (int j = 1; j <= 5; ++j)
            for (int k = 1; k <= 5; ++k) {
                acc[(j - 1) * 5 + k - 1] += std::pow(commutator_probe(f, j, k), 2);
                for (int a = j - 1; a <= j + 1; ++a)
                    for (int c = k - 1; c <= k + 1; ++c) loc[(j - 1) * 5 + k - 1] += b.at(a, c);
            }
    }
    double lo = 1e300, hi = 0;
    std::vector<double> x, y, xu, yu;
    for (int j = 1; j <= 5; ++j)
        for (int k = 1; k <= 5; ++k) {
            const std::size_t i = (j - 1) * 5 + k - 1;
            const double scaled = std::sqrt(acc[i] / nf2) * std::ldexp(1.0, j + k);
            lo = std::min(lo, scaled);
            hi = std::max(hi, scaled);
            const double r = std::log2(std::sqrt(acc[i] / loc[i]) * std::ldexp(1.0, j + k));
            x.push_back(j + k);
            y.push_back(r);
            if (j + k >= 6) {
                xu.push_back(j + k);
                yu.push_back(r);
            }
        }
    EXPECT_LE(hi / lo, 10.0);
    // the locally normalised ratio rises while 2^{j+k} is comparable to the
    // inverse transition width squared, then levels off
    const double full = least_squares(x, y).slope;
    const double upper = least_squares(xu, yu).slope;
    RecordProperty("slope_full", std::to_string(full));
    RecordProperty("slope_upper", std::to_string(upper));
    EXPECT_LT(upper, full);
    EXPECT_LT(full, 0.5);
}

TEST(Bernstein, SingleModeExact) {
    BoxGrid g(1, 16.0 * std::numbers::pi, 1024);
    for (int j = 1; j <= 3; ++j) {
        const double xi = std::ldexp(1.0, j);
        const long m = std::lround(xi / g.mode_spacing());
        ASSERT_NEAR(m * g.mode_spacing(), xi, 1e-12);
        auto f = sample(g, [&](const point& v) { return std::polar(1.0, xi * v[0]); });
        for (double m_ : {0.5, 1.0, 2.0}) {
            auto r = bernstein_check(f, j, m_);
            EXPECT_NEAR(r.upper, std::pow(japanese(xi) / xi, m_), 1e-12);
        }
    }
}

TEST(Bernstein, RandomBlockFields) {
    BoxGrid g(1, 32.0, 2048);
    std::mt19937_64 rng(12);
    for (int j = 1; j <= 5; ++j)
        for (int t = 0; t < 5; ++t) {
            auto f = random_compact_field(g, rng, 3.0 * std::ldexp(1.0, j), 8.0);
            for (double m : {0.5, 1.0, 2.0}) {
                auto r = bernstein_check(f, j, m);
                EXPECT_GE(r.upper, 0.25);
                EXPECT_LE(r.upper, 4.0);
                EXPECT_GE(r.lower, 0.25);
                EXPECT_LE(r.lower, 4.0);
            }
        }
}

TEST(Bernstein, LowBlockBound) {
    BoxGrid g(1, 32.0, 512);
    std::mt19937_64 rng(13);
    for (int t = 0; t < 10; ++t) {
        auto f = random_compact_field(g, rng, 4.0, 8.0);
        for (double m : {0.5, 1.0, 2.0}) EXPECT_LE(bernstein_check(f, -1, m).upper, std::pow(8.0 / 3.0, m));
    }
}

TEST(Bernstein, EmptyBlockIsUndefined) {
    BoxGrid g(1, 32.0, 512);
    EXPECT_THROW(bernstein_check(SpectralField::zeros(g), 1, 1.0), undefined_ratio);
}
