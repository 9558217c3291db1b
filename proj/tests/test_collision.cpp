#include <gtest/gtest.h>

#include <kolmo/collision.hpp>
#include <kolmo/data_factory.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace kolmo;

namespace {

double gaussian2(const point& v) { return std::exp(-0.5 * (v[0] * v[0] + v[1] * v[1])); }

// cheap rules for tests that only need structure, not accuracy
CollisionParams coarse(int d = 2) {
    CollisionParams p;
    p.dim = d;
    p.radial_nodes = 8;
    p.angular_nodes = 6;
    p.azimuth_nodes = 6;
    p.direction_nodes = 16;
    return p;
}

// Phi_k^ * G on the lattice, as a physical field
SpectralField lattice_convolution(const SpectralField& g, const KernelBlock& kb) {
    auto F = detail::band_limited(g);
    const auto& grid = F.grid();
    std::vector<cplx> s(F.samples());
    auto r = grid.frequency_radii();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= kb.transform_exact(r[i]);
    return to_physical(with_samples(F, std::move(s), g.real_valued()));
}

double max_diff(const SpectralField& a, const SpectralField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST(CollisionParams, Violations) {
    CollisionParams p;
    EXPECT_TRUE(p.violations().empty());
    p.gamma = -2.5; // below -2s-1 = -2
    p.s = 0.5;
    p.eps_theta = 2.0;
    p.dim = 4;
    p.c = 0;
    EXPECT_EQ(p.violations().size(), 4u);
    EXPECT_THROW(p.validate(), config_error);
    CollisionParams q;
    q.s = 0.9;
    q.gamma = -2.5; // inside (-2s-1, 0) but not integrable in d = 2
    EXPECT_EQ(q.violations().size(), 1u);
    q.dim = 3;
    EXPECT_TRUE(q.violations().empty());
}

TEST(AngularKernel, NormalisedSingularity) {
    for (int d : {2, 3}) {
        CollisionParams p;
        p.dim = d;
        p.c = 1.7;
        p.s = 0.3;
        for (double t : {0.31, 0.5, 1.0, 1.5}) {
            const double sd = d == 3 ? std::sin(t) : 1.0;
            EXPECT_NEAR(sd * angular_b(p, t) * std::pow(t, 1.0 + 2.0 * p.s), p.c, 1e-12);
        }
        EXPECT_EQ(angular_b(p, 0.29), 0.0);
        EXPECT_EQ(angular_b(p, 1.6), 0.0);
    }
}

TEST(AngularKernel, MassMatchesClosedForm) {
    CollisionParams p;
    for (double s : {0.25, 0.5, 0.8})
        for (double e : {0.4, 0.05}) {
            p.s = s;
            p.gamma = -0.5;
            p.eps_theta = e;
            const double exact = (std::pow(e, -2 * s) - std::pow(0.5 * std::numbers::pi, -2 * s)) / (2 * s);
            EXPECT_NEAR(angular_mass(p) / exact, 1.0, 1e-12);
        }
}

TEST(AngularKernel, BlowUpRate) {
    for (double s : {0.25, 0.5, 0.75}) {
        CollisionParams p;
        p.s = s;
        p.gamma = -0.5;
        auto f = angular_blowup(p, {0.4, 0.2, 0.1, 0.05});
        EXPECT_LE(f.rel_error(), 0.05);
        EXPECT_NEAR(f.constant, f.predicted_constant, 1e-6);
    }
    EXPECT_THROW(angular_blowup(CollisionParams{}, {0.1, 0.2, 0.05}), precondition_violation);
}

TEST(KernelBlocks, ReconstructPowerLaw) {
    BoxGrid g(2, 8.0, 16);
    CollisionParams p;
    p.K = 1;
    DyadicProfile prof;
    std::mt19937_64 rng(3);
    const double top = std::ldexp(prof.phi_support_lo(), p.K + 1);
    std::uniform_real_distribution<double> U(1e-3, top);
    for (int i = 0; i < 1000; ++i) {
        const double r = U(rng);
        double acc = 0.0;
        for (int k = -1; k <= p.K; ++k) acc += kernel_profile(prof, p.gamma, k, r);
        ASSERT_NEAR(acc / std::pow(r, p.gamma), 1.0, 1e-10) << r;
    }
    for (int k = 0; k <= 3; ++k) EXPECT_EQ(kernel_profile(prof, p.gamma, k, std::ldexp(1.0, k + 3)), 0.0);
}

TEST(KernelBlocks, RangeOverflow) {
    CollisionParams p;
    p.K = 2; // 2^2 * 8/3 > 8
    EXPECT_THROW(build_kernel_blocks(p, BoxGrid(2, 8.0, 16)), out_of_range_error);
    p.K = 1;
    EXPECT_EQ(build_kernel_blocks(p, BoxGrid(2, 8.0, 16)).size(), 3u);
    EXPECT_THROW(build_kernel_block(p, BoxGrid(3, 8.0, 8), 0), contract_violation);
}

TEST(KernelBlocks, TransformAtOriginIsKernelMass) {
    BoxGrid g(2, 8.0, 16);
    CollisionParams p;
    DyadicProfile prof;
    for (int k = -1; k <= 1; ++k) {
        auto kb = build_kernel_block(p, g, k, prof);
        // composite Simpson on 2 pi int Phi_k(r) r dr, gamma = -1 so the integrand is bounded
        const int n = 200000;
        const double a = 0.0, b = kb.r_hi, h = (b - a) / n;
        double acc = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double r = a + i * h;
            const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            acc += w * (r > 0 ? kernel_profile(prof, p.gamma, k, r) * r : 1.0 * (k < 0));
        }
        acc *= 2.0 * std::numbers::pi * h / 3.0;
        EXPECT_NEAR(kb.transform_exact(0.0) / acc, 1.0, 1e-8) << k;
    }
}

TEST(KernelBlocks, TableInterpolation) {
    BoxGrid g(2, 8.0, 32);
    for (int d : {2, 3}) {
        CollisionParams p;
        p.dim = d;
        BoxGrid gd(d, 8.0, d == 2 ? 32 : 8);
        for (int k = -1; k <= 1; ++k) {
            auto kb = build_kernel_block(p, gd, k);
            const double ref = std::abs(kb.transform_exact(0.0));
            double e = 0.0;
            for (double r = 0.0; r < kb.rho_max(); r += 0.0137) e = std::max(e, std::abs(kb.transform(r) - kb.transform_exact(r)));
            EXPECT_LE(e, 1e-8 * ref) << "d=" << d << " k=" << k;
            EXPECT_THROW(kb.transform(kb.rho_max() + 1.0), out_of_range_error);
        }
    }
    (void)g;
}

TEST(Bobylev, MatchesDirectOracle) {
    BoxGrid g(2, 4.0, 16);
    CollisionParams p;
    p.radial_nodes = 32;
    p.direction_nodes = 48;
    auto G = sample(g, gaussian2);
    auto H = sample(g, [](const point& v) { return std::exp(-((v[0] - 0.5) * (v[0] - 0.5) + v[1] * v[1]) / 0.8); });
    for (int k : {-1, 1}) {
        auto kb = build_kernel_block(p, g, k);
        auto qb = bobylev_apply(G, H, kb, p);
        auto qd = direct_quadrature_apply(G, H, kb, p);
        EXPECT_LE(max_diff(qb, qd), 1e-6 * max_abs(qb)) << k;
        EXPECT_LE(std::abs(integral(qb).real()), 1e-8 * max_abs(qb));
        EXPECT_LE(std::abs(integral(qd).real()), 1e-8 * max_abs(qb));
        EXPECT_TRUE(qb.real_valued());
    }
}

TEST(Bobylev, MaxwellianIsAnEquilibrium) {
    BoxGrid g(2, 8.0, 32);
    CollisionParams p;
    p.K = 1;
    auto mu = sample(g, gaussian2);
    auto blocks = build_kernel_blocks(p, g);
    auto Q = collision_sum(mu, mu, blocks, p);
    auto loss = collision_sum(mu, mu, blocks, p, collision_terms::loss);
    EXPECT_LE(l2_norm(Q), 1e-6 * l2_norm(loss));
    // each block separately, since mu' mu'_* = mu mu_* pointwise
    for (const auto& kb : blocks) EXPECT_LE(l2_norm(bobylev_apply(mu, mu, kb, p)), 1e-6 * l2_norm(loss));
}

TEST(Bobylev, LossTermIsConvolution) {
    for (int d : {2, 3}) {
        BoxGrid g(d, 4.0, d == 2 ? 16 : 8);
        auto p = coarse(d);
        auto G = sample(g, [](const point& v) { return std::exp(-(v[0] * v[0] + 2 * v[1] * v[1] + v[2] * v[2])); });
        auto H = sample(g, [](const point& v) { return 1.0 / (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); });
        auto kb = build_kernel_block(p, g, 0);
        const double B0 = angular_kernel(p).total(d);
        auto conv = lattice_convolution(G, kb);
        auto Hb = to_physical(detail::band_limited(H));
        std::vector<cplx> ref(g.size());
        for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = -B0 * Hb[i] * conv[i];
        SpectralField R(g, ref, representation::physical, true);
        auto qb = bobylev_apply(G, H, kb, p, collision_terms::loss);
        EXPECT_LE(max_diff(qb, R), 1e-10 * max_abs(R)) << d;
        if (d == 2) {
            CollisionParams full; // resolved u rule for the physical-space path
            auto kbf = build_kernel_block(full, g, 0);
            const double Bf = angular_kernel(full).total(d);
            auto convf = lattice_convolution(G, kbf);
            for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = -Bf * Hb[i] * convf[i];
            SpectralField Rf(g, ref, representation::physical, true);
            auto qd = direct_quadrature_apply(G, H, kbf, full, collision_terms::loss);
            EXPECT_LE(max_diff(qd, Rf), 1e-10 * max_abs(Rf));
        }
    }
}

TEST(Bobylev, MassNullInThreeDimensions) {
    BoxGrid g(3, 4.0, 8);
    auto p = coarse(3);
    auto G = sample(g, [](const point& v) { return std::exp(-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])); });
    auto H = sample(g, [](const point& v) { return std::exp(-((v[0] - 1) * (v[0] - 1) + v[1] * v[1] + v[2] * v[2])); });
    auto q = bobylev_apply(G, H, -1, p);
    ASSERT_GT(max_abs(q), 0.0);
    EXPECT_LE(std::abs(integral(q).real()), 1e-8 * max_abs(q));
}

TEST(Bobylev, Errors) {
    BoxGrid g(2, 4.0, 16);
    CollisionParams p;
    auto f = sample(g, gaussian2);
    auto kb = build_kernel_block(p, g, -1);
    auto tight = p;
    tight.cost_cap = 1e3;
    EXPECT_THROW(bobylev_apply(f, f, kb, tight), cost_cap_exceeded);
    EXPECT_THROW(direct_quadrature_apply(f, f, kb, tight), cost_cap_exceeded);
    EXPECT_THROW(bobylev_apply(f, sample(BoxGrid(2, 4.0, 32), gaussian2), kb, p), contract_violation);
    // table built for the coarse grid cannot serve a finer one
    auto fine = sample(BoxGrid(2, 4.0, 32), gaussian2);
    EXPECT_THROW(bobylev_apply(fine, fine, kb, p), out_of_range_error);
}

TEST(DirectOracle, KernelSupport) {
    // |v - v_*| ~ 6 lies outside the k = -1 block, so Q_{-1}(g, h) vanishes
    BoxGrid g(2, 8.0, 64);
    auto p = coarse();
    auto G = sample(g, [](const point& v) { return std::exp(-2.0 * ((v[0] + 3) * (v[0] + 3) + v[1] * v[1])); });
    auto H = sample(g, [](const point& v) { return std::exp(-2.0 * ((v[0] - 3) * (v[0] - 3) + v[1] * v[1])); });
    auto kb = build_kernel_block(p, g, -1);
    auto q = direct_quadrature_apply(G, H, kb, p);
    const double scale = angular_kernel(p).total(2) * kb.transform_exact(0.0);
    EXPECT_LE(max_abs(q), 1e-8 * scale);
    // the same pair inside a block that does reach them gives a visible result
    auto kb2 = build_kernel_block(p, g, 2);
    EXPECT_GT(max_abs(direct_quadrature_apply(G, H, kb2, p)), 1e-4 * scale);
}

TEST(Cancellation, RegularAndSingular) {
    BoxGrid g(2, 8.0, 32);
    CollisionParams p;
    auto f = sample(g, gaussian2);
    for (auto kind : {change_of_variables::regular, change_of_variables::singular}) {
        auto r = cancellation_check(f, p, kind, {0.3, -0.2, 0.0});
        EXPECT_LE(r.rel_diff(), 1e-8) << static_cast<int>(kind);
        EXPECT_GT(r.rhs, 0.0);
    }
}

TEST(FourierBound, GaussianSmallFrequencyLaw) {
    BoxGrid g(2, 80.0, 128);
    auto f = sample(g, gaussian2);
    auto b = fourier_lower_bound_check(f);
    EXPECT_GE(b.G_min, 0.0);
    EXPECT_NEAR(b.power, 2.0, 0.02);
    EXPECT_NEAR(b.constant / (0.5 * b.l1), 1.0, 0.02);
    EXPECT_GT(b.c_small, 0.0);
    EXPECT_GT(b.c_plateau, 0.0);
}

TEST(FourierBound, RoughDataPlateau) {
    BoxGrid g(1, 512.0, 65536);
    RoughDataSpec s;
    s.J = 5;
    s.nonneg = true;
    auto b = fourier_lower_bound_check(rough_data(s, g), 0.05);
    EXPECT_GE(b.G_min, 0.0);
    EXPECT_GT(b.c_plateau, 0.0);
    EXPECT_GT(b.c_small, 0.0);
}

TEST(FourierBound, NegativeSamplesRejected) {
    BoxGrid g(1, 16.0, 256);
    auto f = sample(g, [](const point& v) { return std::exp(-v[0] * v[0]) - 0.01; });
    EXPECT_THROW(fourier_lower_bound_check(f), precondition_violation);
}

TEST(Coercivity, RefinementAndHomogeneity) {
    CollisionParams p;
    std::vector<double> ratios;
    coercivity_terms last;
    SpectralField f_last;
    for (std::size_t N : {16u, 32u}) {
        BoxGrid g(2, 10.0, N);
        auto f = sample(g, gaussian2);
        auto t = coercivity_check(f, p);
        EXPECT_GT(t.ratio, 0.0);
        EXPECT_GT(t.dirichlet, 0.0);
        EXPECT_GT(t.weighted_ratio, 0.0);
        ratios.push_back(t.ratio);
        last = t;
        f_last = f;
    }
    EXPECT_NEAR(ratios[1] / ratios[0], 1.0, 0.2);
    auto t2 = coercivity_check(cplx(2.0) * f_last, p);
    EXPECT_NEAR(t2.dirichlet / (8.0 * last.dirichlet), 1.0, 1e-8);
    EXPECT_NEAR(t2.l2sq / (4.0 * last.l2sq), 1.0, 1e-8);
    EXPECT_NEAR(t2.rhs / (std::exp2(11) * 4.0 * last.rhs), 1.0, 1e-8);
    EXPECT_NEAR(t2.weighted_dirichlet / (8.0 * last.weighted_dirichlet), 1.0, 1e-8);
}

TEST(Coercivity, DegenerateAndPreconditions) {
    BoxGrid g(2, 10.0, 16);
    CollisionParams p;
    auto t = coercivity_check(SpectralField::zeros(g), p);
    EXPECT_TRUE(t.degenerate);
    auto neg = sample(g, [](const point& v) { return gaussian2(v) - 0.5; });
    EXPECT_THROW(coercivity_check(neg, p), precondition_violation);
}

TEST(Coercivity, MonteCarloAgreesWithQuadrature) {
    BoxGrid g(2, 10.0, 32);
    auto p = coarse();
    p.angular_nodes = 24;
    p.direction_nodes = 32;
    const double det = dirichlet_form(sample(g, gaussian2), p, 0.0, 32);
    auto mc = dirichlet_monte_carlo(gaussian2, p, 10.0, 400000, 11);
    EXPECT_TRUE(mc.contains(det)) << mc.mean << " +- " << mc.std_error << " vs " << det;
    EXPECT_LT(mc.std_error, 0.1 * mc.mean);
    auto again = dirichlet_monte_carlo(gaussian2, p, 10.0, 400000, 11);
    EXPECT_EQ(again.mean, mc.mean);
    EXPECT_EQ(again.std_error, mc.std_error);
}

TEST(Coercivity, MonteCarloThreeDimensions) {
    CollisionParams p;
    p.dim = 3;
    BoxGrid g(3, 6.0, 16);
    auto f = [](const point& v) { return std::exp(-0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])); };
    auto rep = coercivity_check_mc(f, g, p, 200000, 5);
    EXPECT_FALSE(rep.terms.degenerate);
    EXPECT_GT(rep.dirichlet.lo, 0.0);
    EXPECT_LT(rep.dirichlet.lo, rep.dirichlet.hi);
    EXPECT_GT(rep.ratio_lo, 0.0);
    auto zero = coercivity_check_mc([](const point&) { return 0.0; }, g, p, 1000, 5);
    EXPECT_TRUE(zero.terms.degenerate);
}
