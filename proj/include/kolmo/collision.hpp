#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dyadic.hpp"
#include "field.hpp"
#include "numerics.hpp"

namespace kolmo {

struct CollisionParams {
    double gamma = -1.0;
    double s = 0.5;
    double eps_theta = 0.3;
    double c = 1.0;
    int K = 1;
    int dim = 2;
    std::size_t radial_nodes = 48;   // per radial piece
    std::size_t angular_nodes = 24;  // theta nodes on [eps, pi/2]
    std::size_t azimuth_nodes = 16;  // sigma azimuth (d = 3)
    std::size_t direction_nodes = 64; // directions of u
    double table_step = 0.01;        // Hankel table step in units of 1/r_max
    double cost_cap = 2e10;

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (!(s > 0.0 && s < 1.0)) v.push_back("s must lie in (0, 1)");
        if (!(gamma < 0.0 && gamma > -2.0 * s - 1.0))
            v.push_back("gamma must lie in (-2s-1, 0); got " + format_double(gamma));
        if (dim != 2 && dim != 3) v.push_back("collision dimension must be 2 or 3");
        else if (!(gamma > -static_cast<double>(dim))) v.push_back("gamma must exceed -d for |u|^gamma to be locally integrable");
        if (!(eps_theta > 0.0 && eps_theta < 0.5 * std::numbers::pi)) v.push_back("eps_theta must lie in (0, pi/2)");
        if (!(c > 0.0)) v.push_back("angular constant c must be positive");
        if (K < -1) v.push_back("K must be >= -1");
        if (radial_nodes < 2 || angular_nodes < 2 || azimuth_nodes < 2 || direction_nodes < 4)
            v.push_back("quadrature node counts too small");
        if (!(table_step > 0.0 && table_step <= 0.1)) v.push_back("table step must lie in (0, 0.1]");
        if (!(cost_cap > 0.0)) v.push_back("cost cap must be positive");
        return v;
    }

    void validate() const {
        auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid collision params:";
        for (auto& e : v) msg += " " + e + ";";
        throw config_error(msg);
    }
};

// ---- angular kernel ----

// b(cos theta) with sin^{d-2}(theta) b(cos theta) = c theta^{-1-2s} on [eps, pi/2]
inline double angular_b(const CollisionParams& p, double theta) {
    if (theta < p.eps_theta || theta > 0.5 * std::numbers::pi) return 0.0;
    double b = p.c * std::pow(theta, -1.0 - 2.0 * p.s);
    if (p.dim == 3) b /= std::sin(theta);
    return b;
}

// |S^{d-2}|: the measure of sigma directions at a fixed polar angle
inline double azimuth_measure(int d) { return d == 2 ? 2.0 : 2.0 * std::numbers::pi; }

struct angular_rule {
    std::vector<double> theta;
    std::vector<double> weight; // d theta weights
    std::vector<double> b;      // b(cos theta) at the nodes

    // int_{S^{d-1}} b dsigma
    double total(int d) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i)
            acc += weight[i] * b[i] * (d == 3 ? std::sin(theta[i]) : 1.0);
        return azimuth_measure(d) * acc;
    }
};

// Gauss-Legendre in log theta on [eps, pi/2]
inline angular_rule angular_kernel(const CollisionParams& p) {
    p.validate();
    auto q = gauss_legendre(p.angular_nodes, std::log(p.eps_theta), std::log(0.5 * std::numbers::pi));
    angular_rule r;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double t = std::exp(q.nodes[i]);
        r.theta.push_back(t);
        r.weight.push_back(q.weights[i] * t);
        r.b.push_back(angular_b(p, t));
    }
    return r;
}

// int_eps^{pi/2} sin^{d-2} b dtheta from the quadrature
inline double angular_mass(const CollisionParams& p) {
    auto r = angular_kernel(p);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.theta.size(); ++i)
        acc += r.weight[i] * r.b[i] * (p.dim == 3 ? std::sin(r.theta[i]) : 1.0);
    return acc;
}

struct blowup_fit {
    std::vector<double> eps;
    std::vector<double> mass;
    double rate = 0.0;      // fitted exponent of the divergent part
    double predicted = 0.0; // 2s
    double constant = 0.0;  // fitted A in A eps^{-2s}
    double predicted_constant = 0.0;
    double rel_error() const { return std::abs(rate - predicted) / predicted; }
};

// M(eps) = A eps^{-2s} + B; successive differences remove B
inline blowup_fit angular_blowup(CollisionParams p, const std::vector<double>& eps_list) {
    if (eps_list.size() < 3) throw insufficient_data("blow-up fit needs at least three cutoffs");
    blowup_fit f;
    f.predicted = 2.0 * p.s;
    f.predicted_constant = p.c / (2.0 * p.s);
    for (double e : eps_list) {
        p.eps_theta = e;
        f.eps.push_back(e);
        f.mass.push_back(angular_mass(p));
    }
    std::vector<double> x, y;
    for (std::size_t i = 1; i < eps_list.size(); ++i) {
        const double a = eps_list[i - 1], b = eps_list[i];
        const double dm = f.mass[i] - f.mass[i - 1];
        if (!(b < a) || !(dm > 0.0)) throw precondition_violation("cutoffs must decrease strictly");
        x.push_back(std::log(b));
        y.push_back(std::log(dm / (1.0 - std::pow(b / a, 2.0 * p.s))));
    }
    auto lf = least_squares(x, y);
    f.rate = -lf.slope;
    f.constant = std::exp(lf.intercept);
    return f;
}

// ---- kernel blocks ----

// Phi_k(r) = r^gamma phi(2^{-k} r), Phi_{-1}(r) = r^gamma psi(r)
inline double kernel_profile(const DyadicProfile& prof, double gamma, int k, double r) {
    if (r <= 0.0) return 0.0;
    const double cut = k < 0 ? prof.psi(r) : prof.phi(std::ldexp(r, -k));
    return cut == 0.0 ? 0.0 : std::pow(r, gamma) * cut;
}

struct KernelBlock {
    int k = -1;
    int dim = 2;
    double gamma = -1.0;
    double r_lo = 0.0, r_hi = 0.0;
    quadrature_rule radial; // int_0^inf Phi_k(r) F(r) r^{d-1} dr = sum w F(r)
    double drho = 0.0;
    std::vector<double> table;

    // radial Fourier transform from the quadrature
    double transform_exact(double rho) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < radial.size(); ++i) {
            const double x = rho * radial.nodes[i];
            double j;
            if (dim == 2) j = std::cyl_bessel_j(0.0, x);
            else j = x < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
            acc += radial.weights[i] * j;
        }
        return (dim == 2 ? 2.0 : 4.0) * std::numbers::pi * acc;
    }

    // cubic Lagrange interpolation in the table
    double transform(double rho) const {
        const double t = rho / drho;
        auto i = static_cast<std::ptrdiff_t>(std::floor(t));
        const auto n = static_cast<std::ptrdiff_t>(table.size());
        if (i + 2 >= n) throw out_of_range_error("kernel transform queried beyond its table");
        i = std::max<std::ptrdiff_t>(i, 1);
        const double x = t - static_cast<double>(i);
        const double f0 = table[i - 1], f1 = table[i], f2 = table[i + 1], f3 = table[i + 2];
        // nodes at -1, 0, 1, 2
        return -x * (x - 1.0) * (x - 2.0) / 6.0 * f0 + (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0 * f1 -
               (x + 1.0) * x * (x - 2.0) / 2.0 * f2 + (x + 1.0) * x * (x - 1.0) / 6.0 * f3;
    }

    double rho_max() const { return drho * static_cast<double>(table.size() - 3); }
};

// pieces split at the transition points of the cutoff
inline quadrature_rule kernel_radial_rule(const DyadicProfile& prof, double gamma, int k, int d, std::size_t n) {
    const double beta = gamma + d - 1.0;
    quadrature_rule q;
    auto add = [&](quadrature_rule piece) {
        for (std::size_t i = 0; i < piece.size(); ++i)
            piece.weights[i] *= kernel_profile(prof, gamma, k, piece.nodes[i]) * std::pow(piece.nodes[i], -gamma);
        q.append(piece);
    };
    if (k < 0) {
        const double a = prof.phi_support_lo(), b = prof.psi_support_hi();
        add(gauss_radial_power(n, beta, a));
        add(weighted_legendre(2 * n, a, b, beta));
    } else {
        const double s = std::ldexp(1.0, k);
        const double e[4] = {prof.phi_support_lo() * s, prof.phi_flat_lo() * s, prof.phi_flat_hi() * s,
                             prof.phi_support_hi() * s};
        add(weighted_legendre(2 * n, e[0], e[1], beta));
        add(weighted_legendre(n, e[1], e[2], beta));
        add(weighted_legendre(2 * n, e[2], e[3], beta));
    }
    return q;
}

inline double relative_velocity_range(const BoxGrid& g) { return g.half_length(); }

// largest |zeta| a Bobylev evaluation on g can query
inline double bobylev_rho_max(const BoxGrid& g) { return 3.0 * std::sqrt(static_cast<double>(g.dim())) * g.nyquist(); }

inline KernelBlock build_kernel_block(const CollisionParams& p, const BoxGrid& g, int k,
                                      const DyadicProfile& prof = DyadicProfile()) {
    p.validate();
    if (g.dim() != p.dim) throw contract_violation("grid dimension differs from collision dimension");
    if (k < -1) throw out_of_range_error("kernel block index below -1");
    const double outer = k < 0 ? prof.psi_support_hi() : prof.phi_support_hi() * std::ldexp(1.0, k);
    if (outer > relative_velocity_range(g))
        throw out_of_range_error("kernel block " + std::to_string(k) + " reaches |u| = " + format_double(outer) +
                                 " beyond the relative-velocity range " +
                                 format_double(relative_velocity_range(g)));
    KernelBlock kb;
    kb.k = k;
    kb.dim = p.dim;
    kb.gamma = p.gamma;
    kb.r_lo = k < 0 ? 0.0 : prof.phi_support_lo() * std::ldexp(1.0, k);
    kb.r_hi = outer;
    kb.radial = kernel_radial_rule(prof, p.gamma, k, p.dim, p.radial_nodes);
    kb.drho = p.table_step / outer;
    const auto n = static_cast<std::size_t>(std::ceil(bobylev_rho_max(g) / kb.drho)) + 4;
    kb.table.resize(n);
    parallel_for(n, [&](std::size_t i) { kb.table[i] = kb.transform_exact(kb.drho * static_cast<double>(i)); });
    return kb;
}

inline std::vector<KernelBlock> build_kernel_blocks(const CollisionParams& p, const BoxGrid& g,
                                                    const DyadicProfile& prof = DyadicProfile()) {
    p.validate();
    if (std::ldexp(1.0, std::max(p.K, 0)) * 8.0 / 3.0 > relative_velocity_range(g) + 1e-12)
        throw out_of_range_error("2^K * 8/3 exceeds the relative-velocity range " +
                                 format_double(relative_velocity_range(g)));
    std::vector<KernelBlock> out;
    for (int k = -1; k <= p.K; ++k) out.push_back(build_kernel_block(p, g, k, prof));
    return out;
}

// ---- shared geometry ----

namespace detail {

inline point unit(const point& a) {
    const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    return {a[0] / n, a[1] / n, a[2] / n};
}

// orthonormal e1, e2 perpendicular to unit n
inline std::pair<point, point> frame(const point& n) {
    point a = std::abs(n[0]) < 0.9 ? point{1, 0, 0} : point{0, 1, 0};
    const double d = a[0] * n[0] + a[1] * n[1] + a[2] * n[2];
    point e1 = unit({a[0] - d * n[0], a[1] - d * n[1], a[2] - d * n[2]});
    point e2 = {n[1] * e1[2] - n[2] * e1[1], n[2] * e1[0] - n[0] * e1[2], n[0] * e1[1] - n[1] * e1[0]};
    return {e1, e2};
}

struct sigma_node {
    point sigma;
    double theta;
    double weight; // includes b and the sphere measure
};

// quadrature over sigma in S^{d-1} for b(n . sigma), n a unit vector
inline std::vector<sigma_node> sigma_rule(const angular_rule& ar, const point& n, int d, std::size_t azimuth) {
    std::vector<sigma_node> out;
    if (d == 2) {
        for (std::size_t i = 0; i < ar.theta.size(); ++i)
            for (double sg : {1.0, -1.0}) {
                const double t = sg * ar.theta[i], c = std::cos(t), s = std::sin(t);
                out.push_back({{c * n[0] - s * n[1], s * n[0] + c * n[1], 0.0}, ar.theta[i], ar.weight[i] * ar.b[i]});
            }
        return out;
    }
    auto [e1, e2] = frame(n);
    const double dpsi = 2.0 * std::numbers::pi / static_cast<double>(azimuth);
    for (std::size_t i = 0; i < ar.theta.size(); ++i) {
        const double c = std::cos(ar.theta[i]), s = std::sin(ar.theta[i]);
        for (std::size_t j = 0; j < azimuth; ++j) {
            const double ps = dpsi * static_cast<double>(j);
            const double a = s * std::cos(ps), b = s * std::sin(ps);
            out.push_back({{c * n[0] + a * e1[0] + b * e2[0], c * n[1] + a * e1[1] + b * e2[1],
                            c * n[2] + a * e1[2] + b * e2[2]},
                           ar.theta[i], ar.weight[i] * ar.b[i] * s * dpsi});
        }
    }
    return out;
}

struct direction_node {
    point dir;
    double weight;
};

inline std::vector<direction_node> direction_rule(int d, std::size_t n) {
    std::vector<direction_node> out;
    if (d == 2) {
        for (std::size_t j = 0; j < n; ++j) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
            out.push_back({{std::cos(a), std::sin(a), 0.0}, 2.0 * std::numbers::pi / static_cast<double>(n)});
        }
        return out;
    }
    const std::size_t nc = std::max<std::size_t>(n / 2, 2);
    auto q = gauss_legendre(nc, -1.0, 1.0);
    for (std::size_t i = 0; i < nc; ++i) {
        const double ct = q.nodes[i], st = std::sqrt(1.0 - ct * ct);
        for (std::size_t j = 0; j < n; ++j) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
            out.push_back({{st * std::cos(a), st * std::sin(a), ct},
                           q.weights[i] * 2.0 * std::numbers::pi / static_cast<double>(n)});
        }
    }
    return out;
}

// frequency field with the Nyquist planes removed, so the interpolant is
// the same band-limited function in every evaluation path
inline SpectralField band_limited(const SpectralField& f) {
    auto F = to_frequency(as_physical(f));
    const auto& g = F.grid();
    const std::size_t ny = g.points() / 2;
    std::vector<cplx> s(F.samples());
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto idx = g.unflatten(i);
        for (int a = 0; a < g.dim(); ++a)
            if (idx[a] == ny) s[i] = 0.0;
    }
    return with_samples(F, std::move(s), f.real_valued());
}

inline void require_collision_inputs(const SpectralField& g, const SpectralField& h, const CollisionParams& p,
                                     const char* what) {
    if (!(g.grid() == h.grid())) throw contract_violation(std::string(what) + ": fields live on different grids");
    if (g.grid().dim() != p.dim) throw contract_violation(std::string(what) + ": grid dimension differs from params");
}

inline void check_finite(const std::vector<cplx>& s, const char* what) {
    for (const auto& z : s)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw numerical_error(std::string(what) + " produced a non-finite value");
}

} // namespace detail

// ---- Bobylev evaluation ----

enum class collision_terms { full, gain, loss };

// Q_k(g, h) through
//   Q^(xi) = int_sigma b(xi/|xi| . sigma) sum_{a+b=xi} G_a H_b [Phi^(xi+ - b) - Phi^(a)]
// on the Fourier series of the band-limited interpolants; output modes beyond
// the grid are folded so the physical samples are exact values of Q
inline SpectralField bobylev_apply(const SpectralField& g, const SpectralField& h, const KernelBlock& kb,
                                   const CollisionParams& p, collision_terms terms = collision_terms::full) {
    p.validate();
    detail::require_collision_inputs(g, h, p, "bobylev_apply");
    const auto& grid = g.grid();
    const int d = grid.dim();
    const auto N = static_cast<long>(grid.points());
    const long M = N / 2 - 1;        // input modes |m_i| <= M
    const long side_in = 2 * M + 1;
    const long side_out = 4 * M + 1; // output modes |m_i| <= 2M
    auto ar = angular_kernel(p);
    const std::size_t nsig = d == 2 ? 2 * ar.theta.size() : ar.theta.size() * p.azimuth_nodes;
    const double cost = std::pow(static_cast<double>(side_out), d) * std::pow(static_cast<double>(side_in), d) *
                        static_cast<double>(nsig + 1);
    if (cost > p.cost_cap)
        throw cost_cap_exceeded("bobylev_apply would take " + format_double(cost) + " kernel evaluations (cap " +
                                    format_double(p.cost_cap) + ")",
                                cost);
    if (kb.dim != d) throw contract_violation("kernel block dimension differs from the field");
    if (kb.rho_max() < bobylev_rho_max(grid) - 1e-9) throw out_of_range_error("kernel table built for a coarser grid");

    // Fourier series coefficients: f(v) = sum_m C_m e^{i xi_m . v}
    auto coeffs = [&](const SpectralField& f) {
        auto F = detail::band_limited(f);
        const double norm = std::pow(static_cast<double>(N), -0.5 * d);
        std::vector<cplx> c(static_cast<std::size_t>(std::pow(side_in, d)));
        for (std::size_t i = 0; i < c.size(); ++i) {
            long rem = static_cast<long>(i);
            std::array<std::size_t, 3> idx{0, 0, 0};
            long parity = 0;
            for (int a = d - 1; a >= 0; --a) {
                const long m = rem % side_in - M;
                rem /= side_in;
                idx[a] = static_cast<std::size_t>((m + N) % N);
                parity += m;
            }
            c[i] = F[grid.flat(idx)] * norm * ((parity & 1) ? -1.0 : 1.0);
        }
        return c;
    };
    const auto G = coeffs(g), H = coeffs(h);
    const double dxi = grid.mode_spacing();
    const double B0 = ar.total(d);

    auto split = [&](long i, long side, long off, long* m) {
        for (int a = d - 1; a >= 0; --a) {
            m[a] = i % side - off;
            i /= side;
        }
    };
    auto index_in = [&](const long* m) {
        long i = 0;
        for (int a = 0; a < d; ++a) {
            if (m[a] < -M || m[a] > M) return -1L;
            i = i * side_in + (m[a] + M);
        }
        return i;
    };
    std::vector<double> phi_at_alpha(G.size());
    for (std::size_t i = 0; i < G.size(); ++i) {
        long m[3] = {0, 0, 0};
        split(static_cast<long>(i), side_in, M, m);
        double r2 = 0.0;
        for (int a = 0; a < d; ++a) r2 += std::pow(dxi * m[a], 2);
        phi_at_alpha[i] = kb.transform(std::sqrt(r2));
    }

    const auto n_out = static_cast<std::size_t>(std::pow(side_out, d));
    std::vector<cplx> Q(n_out);
    parallel_for(n_out, [&](std::size_t o) {
        long xm[3] = {0, 0, 0};
        split(static_cast<long>(o), side_out, 2 * M, xm);
        point xi{0, 0, 0};
        for (int a = 0; a < d; ++a) xi[a] = dxi * xm[a];
        const double nx = std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]);
        if (nx == 0.0 && terms == collision_terms::full) return; // bracket vanishes identically
        auto sig = detail::sigma_rule(ar, nx > 0.0 ? detail::unit(xi) : point{1, 0, 0}, d, p.azimuth_nodes);
        std::vector<point> xp(sig.size());
        for (std::size_t q = 0; q < sig.size(); ++q)
            for (int a = 0; a < 3; ++a) xp[q][a] = 0.5 * (xi[a] + nx * sig[q].sigma[a]);
        cplx acc = 0.0;
        long am[3] = {0, 0, 0}, bm[3] = {0, 0, 0};
        for (std::size_t ia = 0; ia < G.size(); ++ia) {
            if (G[ia] == 0.0) continue;
            split(static_cast<long>(ia), side_in, M, am);
            for (int a = 0; a < d; ++a) bm[a] = xm[a] - am[a];
            const long ib = index_in(bm);
            if (ib < 0 || H[static_cast<std::size_t>(ib)] == 0.0) continue;
            double gain = 0.0;
            for (std::size_t q = 0; q < sig.size() && terms != collision_terms::loss; ++q) {
                double r2 = 0.0;
                for (int a = 0; a < d; ++a) r2 += std::pow(xp[q][a] - dxi * bm[a], 2);
                gain += sig[q].weight * kb.transform(std::sqrt(r2));
            }
            const double loss = terms == collision_terms::gain ? 0.0 : B0 * phi_at_alpha[ia];
            acc += G[ia] * H[static_cast<std::size_t>(ib)] * (gain - loss);
        }
        Q[o] = acc;
    });

    // fold onto the grid: Q(v_i) = sum_m Q_m (-1)^m e^{2 pi i m . i / N}
    std::vector<cplx> A(grid.size());
    for (std::size_t o = 0; o < n_out; ++o) {
        if (Q[o] == 0.0) continue;
        long xm[3] = {0, 0, 0};
        split(static_cast<long>(o), side_out, 2 * M, xm);
        std::array<std::size_t, 3> idx{0, 0, 0};
        long parity = 0;
        for (int a = 0; a < d; ++a) {
            idx[a] = static_cast<std::size_t>(((xm[a] % N) + N) % N);
            parity += xm[a];
        }
        A[grid.flat(idx)] += Q[o] * ((parity & 1) ? -1.0 : 1.0);
    }
    auto phys = dft(grid, A, false);
    const double scale = std::pow(static_cast<double>(N), 0.5 * d);
    const bool real = g.real_valued() && h.real_valued();
    for (auto& z : phys) z = real ? cplx(z.real() * scale, 0.0) : z * scale;
    detail::check_finite(phys, "bobylev_apply");
    return SpectralField(grid, std::move(phys), representation::physical, real);
}

inline SpectralField bobylev_apply(const SpectralField& g, const SpectralField& h, int k, const CollisionParams& p,
                                   const DyadicProfile& prof = DyadicProfile()) {
    return bobylev_apply(g, h, build_kernel_block(p, g.grid(), k, prof), p);
}

// sum over k = -1..K
inline SpectralField collision_sum(const SpectralField& g, const SpectralField& h,
                                   const std::vector<KernelBlock>& blocks, const CollisionParams& p,
                                   collision_terms terms = collision_terms::full) {
    auto acc = SpectralField::zeros(g.grid());
    for (const auto& kb : blocks) acc = acc + bobylev_apply(g, h, kb, p, terms);
    return acc;
}

// ---- direct quadrature oracle ----

// int_u Phi_k(|u|) int_sigma b (g(v'_*) h(v') - g(v - u) h(v)) with polar u,
// sigma measured from u/|u|, and off-grid values from FFT shifts
inline SpectralField direct_quadrature_apply(const SpectralField& g, const SpectralField& h, const KernelBlock& kb,
                                             const CollisionParams& p,
                                             collision_terms terms = collision_terms::full) {
    p.validate();
    detail::require_collision_inputs(g, h, p, "direct_quadrature_apply");
    const auto& grid = g.grid();
    const int d = grid.dim();
    auto ar = angular_kernel(p);
    const double B0 = ar.total(d);
    auto dirs = detail::direction_rule(d, p.direction_nodes);
    const std::size_t nsig = d == 2 ? 2 * ar.theta.size() : ar.theta.size() * p.azimuth_nodes;
    const double per_shift = static_cast<double>(grid.size()) * std::log2(static_cast<double>(grid.size()) + 1.0);
    const double cost = static_cast<double>(kb.radial.size() * dirs.size()) * (2.0 * nsig + 1.0) * per_shift;
    if (cost > p.cost_cap)
        throw cost_cap_exceeded("direct_quadrature_apply would cost " + format_double(cost) + " (cap " +
                                    format_double(p.cost_cap) + ")",
                                cost);
    const auto G = detail::band_limited(g), H = detail::band_limited(h);
    const auto Hp = to_physical(H);
    const std::size_t nodes = kb.radial.size() * dirs.size();
    const std::size_t chunks = std::min<std::size_t>(nodes, 16);
    std::vector<std::vector<cplx>> part(chunks, std::vector<cplx>(grid.size()));
    parallel_for(chunks, [&](std::size_t c) {
        auto& acc = part[c];
        for (std::size_t n = c; n < nodes; n += chunks) {
            const std::size_t ir = n / dirs.size(), id = n % dirs.size();
            const double r = kb.radial.nodes[ir];
            const double W = kb.radial.weights[ir] * dirs[id].weight;
            const point& e = dirs[id].dir;
            const point u{r * e[0], r * e[1], r * e[2]};
            if (terms != collision_terms::gain) {
                auto gs = shifted(G, u);
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] -= W * B0 * gs[i] * Hp[i];
            }
            if (terms == collision_terms::loss) continue;
            for (const auto& sg : detail::sigma_rule(ar, e, d, p.azimuth_nodes)) {
                point a, b;
                for (int x = 0; x < 3; ++x) {
                    a[x] = 0.5 * (u[x] - r * sg.sigma[x]);
                    b[x] = 0.5 * (u[x] + r * sg.sigma[x]);
                }
                auto gs = shifted(G, b), hs = shifted(H, a);
                const double w = W * sg.weight;
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * gs[i] * hs[i];
            }
        }
    });
    std::vector<cplx> out(grid.size());
    for (const auto& pc : part)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += pc[i];
    const bool real = g.real_valued() && h.real_valued();
    if (real)
        for (auto& z : out) z = z.real();
    detail::check_finite(out, "direct_quadrature_apply");
    return SpectralField(grid, std::move(out), representation::physical, real);
}

// ---- cancellation identities ----

enum class change_of_variables {
    regular, // v -> v' at fixed v_*, factor cos^{-(d+gamma)}(theta/2)
    singular // v_* -> v' at fixed v, factor sin^{-(d+gamma)}(theta/2)
};

struct cancellation_result {
    change_of_variables kind = change_of_variables::regular;
    double lhs = 0.0;
    double rhs = 0.0;
    double rel_diff() const { return std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-300); }
};

// f is taken to vanish outside the box; anchor is v_* (regular) or v (singular)
inline cancellation_result cancellation_check(const SpectralField& f, const CollisionParams& p,
                                              change_of_variables kind, const point& anchor = {0, 0, 0},
                                              std::size_t nodes_per_unit = 12) {
    p.validate();
    const auto& grid = f.grid();
    const int d = grid.dim();
    if (d != p.dim) throw contract_violation("cancellation_check: grid dimension differs from params");
    const auto F = detail::band_limited(f);
    const double L = grid.half_length();
    auto val = [&](const point& v) {
        for (int a = 0; a < d; ++a)
            if (std::abs(v[a]) > L) return 0.0;
        return evaluate(F, v).real();
    };
    auto ar = angular_kernel(p);
    auto dirs = detail::direction_rule(d, p.direction_nodes);
    double reach = 0.0;
    for (int a = 0; a < d; ++a) reach += std::pow(std::abs(anchor[a]) + L, 2);
    reach = std::sqrt(reach);
    // |v' - anchor| = |u| cos(theta/2) or |u| sin(theta/2)
    const double R = kind == change_of_variables::regular ? reach / std::cos(0.25 * std::numbers::pi)
                                                          : reach / std::sin(0.5 * p.eps_theta);
    const double beta = p.gamma + d - 1.0;
    auto rad = gauss_radial_power(nodes_per_unit, beta, 1.0);
    const auto pieces = static_cast<std::size_t>(std::ceil(R - 1.0));
    for (std::size_t i = 0; i < pieces; ++i) {
        const double lo = 1.0 + (R - 1.0) * static_cast<double>(i) / static_cast<double>(pieces);
        const double hi = 1.0 + (R - 1.0) * static_cast<double>(i + 1) / static_cast<double>(pieces);
        rad.append(weighted_legendre(nodes_per_unit, lo, hi, beta));
    }

    cancellation_result res;
    res.kind = kind;
    const double sgn = kind == change_of_variables::regular ? 1.0 : -1.0;
    // rhs: int_sigma b J dsigma * int |u|^gamma f(anchor + sgn u) du
    double jac = 0.0;
    for (std::size_t i = 0; i < ar.theta.size(); ++i) {
        const double half = 0.5 * ar.theta[i];
        const double base = kind == change_of_variables::regular ? std::cos(half) : std::sin(half);
        jac += ar.weight[i] * ar.b[i] * (d == 3 ? std::sin(ar.theta[i]) : 1.0) * std::pow(base, -(d + p.gamma));
    }
    jac *= azimuth_measure(d);
    const std::size_t nodes = rad.size() * dirs.size();
    std::vector<double> rhs_part(nodes), lhs_part(nodes);
    parallel_for(nodes, [&](std::size_t n) {
        const std::size_t ir = n / dirs.size(), id = n % dirs.size();
        const double r = rad.nodes[ir];
        const double W = rad.weights[ir] * dirs[id].weight;
        const point& e = dirs[id].dir;
        point v;
        for (int a = 0; a < 3; ++a) v[a] = anchor[a] + sgn * r * e[a];
        rhs_part[n] = W * val(v);
        double acc = 0.0;
        for (const auto& sg : detail::sigma_rule(ar, e, d, p.azimuth_nodes)) {
            // regular: v' = v_* + (u + |u| sigma)/2; singular: v' = v - (u - |u| sigma)/2
            for (int a = 0; a < 3; ++a) v[a] = anchor[a] + 0.5 * r * (sgn * e[a] + sg.sigma[a]);
            acc += sg.weight * val(v);
        }
        lhs_part[n] = W * acc;
    });
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t n = 0; n < nodes; ++n) {
        lhs += lhs_part[n];
        rhs += rhs_part[n];
    }
    res.lhs = lhs;
    res.rhs = jac * rhs;
    return res;
}

// ---- Fourier lower bound ----

struct fourier_bound {
    double l1 = 0.0;         // F f(0)
    double G_min = 0.0;      // min over the lattice of F f(0) - |F f(xi)|
    double c_small = 0.0;    // min over 0 < |xi| <= 1 of G / |xi|^2
    double c_plateau = 0.0;  // min over |xi| > 1 of G
    double power = 0.0;      // fitted small-xi exponent
    double constant = 0.0;   // fitted prefactor
    double fit_residual = 0.0;
    std::size_t fit_points = 0;
};

inline fourier_bound fourier_lower_bound_check(const SpectralField& f, double fit_radius = 0.1) {
    auto P = as_physical(f);
    double mn = 0.0;
    for (const auto& z : P.samples()) mn = std::min(mn, z.real());
    if (mn < -1e-12 || !P.real_valued())
        throw precondition_violation("fourier lower bound needs a nonnegative real field; min sample " +
                                     format_double(mn));
    const auto& g = P.grid();
    auto F = to_frequency(P);
    auto r = g.frequency_radii();
    const double scale = g.cell_volume() * std::sqrt(static_cast<double>(g.size()));
    fourier_bound b;
    for (const auto& z : P.samples()) b.l1 += z.real();
    b.l1 *= g.cell_volume();
    b.G_min = b.l1;
    b.c_small = b.c_plateau = std::numeric_limits<double>::infinity();
    std::vector<double> x, y;
    for (std::size_t i = 0; i < F.size(); ++i) {
        if (r[i] == 0.0) continue;
        const double G = b.l1 - scale * std::abs(F[i]);
        b.G_min = std::min(b.G_min, G);
        if (r[i] <= 1.0) b.c_small = std::min(b.c_small, G / (r[i] * r[i]));
        else b.c_plateau = std::min(b.c_plateau, G);
        if (r[i] <= fit_radius && G > 0.0) {
            x.push_back(std::log(r[i]));
            y.push_back(std::log(G));
        }
    }
    if (b.G_min < -1e-12 * b.l1) throw numerical_error("negative G beyond rounding: " + format_double(b.G_min));
    b.fit_points = x.size();
    if (x.size() < 2) throw insufficient_data("fewer than two lattice modes below the fit radius");
    auto lf = least_squares(x, y);
    b.power = lf.slope;
    b.constant = std::exp(lf.intercept);
    b.fit_residual = lf.residual;
    return b;
}

// ---- coercivity ----

struct coercivity_terms {
    double dirichlet = 0.0; // int b f_* (f - f')^2
    double l2sq = 0.0;
    double l1 = 0.0;
    double hs_sq = 0.0;
    double lhs = 0.0;
    double rhs = 0.0; // ||f||_1^11 ||f||_{H^s}^2
    double ratio = 0.0;
    // with |v - v_*|^gamma and <v>^{gamma/2} weights
    double weighted_dirichlet = 0.0;
    double weighted_l2sq = 0.0;
    double weighted_hs_sq = 0.0;
    double weighted_lhs = 0.0;
    double weighted_rhs = 0.0;
    double weighted_ratio = 0.0;
    bool degenerate = false;
};

// int_v int_u Phi(|u|) f(v-u) f(v) [(B0 + C) f(v) - 2 int_sigma b f(v')], where
// the f'^2 term has been moved onto f^2 by the regular change of variables
inline double dirichlet_form(const SpectralField& f, const CollisionParams& p, double weight_gamma,
                             std::size_t radial_nodes = 48) {
    const auto& grid = f.grid();
    const int d = grid.dim();
    const auto F = detail::band_limited(f);
    const auto Fp = to_physical(F);
    auto ar = angular_kernel(p);
    const double B0 = ar.total(d);
    double C = 0.0;
    for (std::size_t i = 0; i < ar.theta.size(); ++i)
        C += ar.weight[i] * ar.b[i] * (d == 3 ? std::sin(ar.theta[i]) : 1.0) *
             std::pow(std::cos(0.5 * ar.theta[i]), -(d + weight_gamma));
    C *= azimuth_measure(d);
    auto rad = gauss_radial_power(radial_nodes, weight_gamma + d - 1.0, grid.half_length());
    auto dirs = detail::direction_rule(d, p.direction_nodes);
    const std::size_t nodes = rad.size() * dirs.size();
    std::vector<double> part(nodes);
    parallel_for(nodes, [&](std::size_t n) {
        const std::size_t ir = n / dirs.size(), id = n % dirs.size();
        const double r = rad.nodes[ir];
        const point& e = dirs[id].dir;
        const point u{r * e[0], r * e[1], r * e[2]};
        auto fs = shifted(F, u);
        std::vector<double> inner(grid.size());
        for (std::size_t i = 0; i < inner.size(); ++i) inner[i] = (B0 + C) * Fp[i].real();
        for (const auto& sg : detail::sigma_rule(ar, e, d, p.azimuth_nodes)) {
            point a;
            for (int x = 0; x < 3; ++x) a[x] = 0.5 * (u[x] - r * sg.sigma[x]);
            auto fa = shifted(F, a);
            for (std::size_t i = 0; i < inner.size(); ++i) inner[i] -= 2.0 * sg.weight * fa[i].real();
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < inner.size(); ++i) acc += fs[i].real() * Fp[i].real() * inner[i];
        part[n] = rad.weights[ir] * dirs[id].weight * acc * grid.cell_volume();
    });
    double total = 0.0;
    for (double x : part) total += x;
    return total;
}

inline coercivity_terms coercivity_check(const SpectralField& f, const CollisionParams& p,
                                         std::size_t radial_nodes = 48) {
    p.validate();
    auto P = as_physical(f);
    if (P.grid().dim() != p.dim) throw contract_violation("coercivity_check: grid dimension differs from params");
    if (!P.real_valued()) throw precondition_violation("coercivity_check needs a real field");
    for (const auto& z : P.samples())
        if (z.real() < -1e-12) throw precondition_violation("coercivity_check needs f >= 0");
    coercivity_terms t;
    t.l1 = integral(P).real();
    if (max_abs(P) == 0.0) {
        t.degenerate = true;
        return t;
    }
    t.dirichlet = dirichlet_form(P, p, 0.0, radial_nodes);
    t.l2sq = std::pow(l2_norm(P), 2);
    t.hs_sq = std::pow(sobolev_norm(P, {p.s, 0.0}), 2);
    t.lhs = t.dirichlet + t.l2sq;
    t.rhs = std::pow(t.l1, 11) * t.hs_sq;
    t.ratio = t.lhs / t.rhs;
    t.weighted_dirichlet = dirichlet_form(P, p, p.gamma, radial_nodes);
    t.weighted_l2sq = std::pow(sobolev_norm(P, {0.0, 0.5 * p.gamma}), 2);
    t.weighted_hs_sq = std::pow(sobolev_norm(P, {p.s, 0.5 * p.gamma}), 2);
    t.weighted_lhs = t.weighted_dirichlet + t.weighted_l2sq;
    t.weighted_rhs = std::pow(t.l1, 11) * t.weighted_hs_sq;
    t.weighted_ratio = t.weighted_lhs / t.weighted_rhs;
    return t;
}

struct mc_estimate {
    double mean = 0.0;
    double std_error = 0.0;
    double lo = 0.0, hi = 0.0; // 95% interval
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    bool contains(double x) const { return lo <= x && x <= hi; }
};

// Monte-Carlo estimate of int Phi(|v-v_*|) b f_* (f - f')^2 with v, v_* uniform
// in [-R, R]^d and theta drawn from sin^{d-2} b; chunks carry their own
// generators so the result does not depend on the worker count
inline mc_estimate dirichlet_monte_carlo(const std::function<double(const point&)>& f, const CollisionParams& p,
                                         double R, std::size_t samples, std::uint64_t seed,
                                         double weight_gamma = 0.0) {
    p.validate();
    if (samples < 2) throw config_error("Monte-Carlo needs at least two samples");
    const int d = p.dim;
    const double a = std::pow(p.eps_theta, -2.0 * p.s), b = std::pow(0.5 * std::numbers::pi, -2.0 * p.s);
    const double B0 = azimuth_measure(d) * p.c * (a - b) / (2.0 * p.s);
    const double V = std::pow(2.0 * R, d);
    constexpr std::size_t chunks = 64;
    std::vector<double> sum(chunks), sq(chunks);
    std::vector<std::size_t> cnt(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        std::seed_seq sseq{seed, static_cast<std::uint64_t>(c)};
        std::mt19937_64 rng(sseq);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        const std::size_t n = samples / chunks + (c < samples % chunks ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) {
            point v{0, 0, 0}, vs{0, 0, 0};
            for (int x = 0; x < d; ++x) {
                v[x] = R * (2.0 * U(rng) - 1.0);
                vs[x] = R * (2.0 * U(rng) - 1.0);
            }
            const double th = std::pow(a - U(rng) * (a - b), -1.0 / (2.0 * p.s));
            point u{v[0] - vs[0], v[1] - vs[1], v[2] - vs[2]};
            const double r = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
            double X = 0.0;
            if (r > 0.0) {
                point e = detail::unit(u), sg;
                if (d == 2) {
                    const double t = U(rng) < 0.5 ? th : -th;
                    sg = {std::cos(t) * e[0] - std::sin(t) * e[1], std::sin(t) * e[0] + std::cos(t) * e[1], 0.0};
                } else {
                    auto [e1, e2] = detail::frame(e);
                    const double ps = 2.0 * std::numbers::pi * U(rng);
                    for (int x = 0; x < 3; ++x)
                        sg[x] = std::cos(th) * e[x] + std::sin(th) * (std::cos(ps) * e1[x] + std::sin(ps) * e2[x]);
                }
                point vp;
                for (int x = 0; x < 3; ++x) vp[x] = v[x] - 0.5 * (u[x] - r * sg[x]);
                const double diff = f(v) - f(vp);
                X = V * V * B0 * std::pow(r, weight_gamma) * f(vs) * diff * diff;
            }
            sum[c] += X;
            sq[c] += X * X;
        }
        cnt[c] = n;
    });
    double S = 0.0, S2 = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
        S += sum[c];
        S2 += sq[c];
        n += cnt[c];
    }
    mc_estimate e;
    e.samples = n;
    e.seed = seed;
    e.mean = S / static_cast<double>(n);
    const double var = std::max(0.0, (S2 / static_cast<double>(n) - e.mean * e.mean)) * n / (n - 1.0);
    e.std_error = std::sqrt(var / static_cast<double>(n));
    e.lo = e.mean - 1.96 * e.std_error;
    e.hi = e.mean + 1.96 * e.std_error;
    return e;
}

struct coercivity_mc_report {
    coercivity_terms terms; // deterministic pieces; dirichlet holds the MC mean
    mc_estimate dirichlet;
    double ratio_lo = 0.0, ratio_hi = 0.0;
};

// Dirichlet term by Monte-Carlo, norms from the samples of f on g
inline coercivity_mc_report coercivity_check_mc(const std::function<double(const point&)>& f, const BoxGrid& g,
                                                const CollisionParams& p, std::size_t samples, std::uint64_t seed) {
    p.validate();
    if (g.dim() != p.dim) throw contract_violation("coercivity_check_mc: grid dimension differs from params");
    auto P = sample(g, f);
    coercivity_mc_report rep;
    auto& t = rep.terms;
    t.l1 = integral(P).real();
    if (max_abs(P) == 0.0) {
        t.degenerate = true;
        return rep;
    }
    rep.dirichlet = dirichlet_monte_carlo(f, p, g.half_length(), samples, seed);
    t.dirichlet = rep.dirichlet.mean;
    t.l2sq = std::pow(l2_norm(P), 2);
    t.hs_sq = std::pow(sobolev_norm(P, {p.s, 0.0}), 2);
    t.lhs = t.dirichlet + t.l2sq;
    t.rhs = std::pow(t.l1, 11) * t.hs_sq;
    t.ratio = t.lhs / t.rhs;
    rep.ratio_lo = (rep.dirichlet.lo + t.l2sq) / t.rhs;
    rep.ratio_hi = (rep.dirichlet.hi + t.l2sq) / t.rhs;
    return rep;
}

} // namespace kolmo
