#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "data_factory.hpp"
#include "dyadic.hpp"
#include "field.hpp"
#include "numerics.hpp"

namespace kolmo {

enum class solver_mode { surrogate, full };

inline const char* to_string(solver_mode m) { return m == solver_mode::surrogate ? "surrogate" : "full"; }

// d_t f + (-Delta)^s (<v>^gamma f) = 0
struct ToyModelParams {
    double gamma = -1.0; // gamma = 0 is accepted as the constant-coefficient limit
    double s = 0.5;
    solver_mode mode = solver_mode::surrogate;
    double dt = 1e-3;
    double horizon = 1.0;

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (!(gamma > -3.0 && gamma <= 0.0)) v.push_back("gamma must lie in (-3, 0]");
        if (!(s > 0.0 && s < 1.0)) v.push_back("s must lie in (0, 1)");
        if (!(dt > 0.0)) v.push_back("dt must be positive");
        if (!(horizon > 0.0)) v.push_back("horizon must be positive");
        return v;
    }

    void validate() const {
        auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid toy model parameters:";
        for (auto& e : v) msg += " " + e + ";";
        throw config_error(msg);
    }
};

inline double max_wavenumber(const BoxGrid& g) { return g.nyquist() * std::sqrt(double(g.dim())); }

// explicit RK4 step bound from the diagonal majorant; the weight is <= 1 for gamma <= 0
inline double stability_limit(const BoxGrid& g, const ToyModelParams& p) {
    return 2.0 / std::pow(max_wavenumber(g), 2.0 * p.s);
}

// weight of phase block k in the surrogate; the top block K also takes the tail
inline double surrogate_block_weight(const DyadicProfile& prof, int k, int K, double r) {
    if (k < K) return prof.block(k, r);
    if (K < 0) return 1.0;
    return 1.0 - prof.Psi(std::ldexp(r, -K));
}

// frequency samples of the block states f_k(t) = exp(-t 2^{k gamma} |xi|^{2s}) P_k f0, k = -1..K
inline std::vector<std::vector<cplx>> surrogate_block_states(const SpectralField& f0, double t,
                                                             const ToyModelParams& p,
                                                             const DyadicProfile& prof = DyadicProfile()) {
    require(f0, representation::physical, "block_surrogate_evolve");
    if (!(t >= 0.0)) throw precondition_violation("surrogate time must be >= 0");
    p.validate();
    const auto& g = f0.grid();
    const int K = max_phase_block(g);
    if (K < -1) throw out_of_range_error("box too small for any phase block");
    auto vr = g.radii();
    auto xr = g.frequency_radii();
    const std::size_t nb = static_cast<std::size_t>(K + 2);
    std::vector<std::vector<cplx>> parts(nb);
    parallel_for(nb, [&](std::size_t b) {
        const int k = static_cast<int>(b) - 1;
        std::vector<cplx> s(f0.samples());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] *= surrogate_block_weight(prof, k, K, vr[i]);
        s = dft(g, s, true);
        const double rate = t * std::pow(block_scale(k), p.gamma);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] *= std::exp(-rate * std::pow(xr[i], 2.0 * p.s));
        parts[b] = std::move(s);
    });
    return parts;
}

// sum_k f_k(t); each block is evolved exactly
inline SpectralField block_surrogate_evolve(const SpectralField& f0, double t, const ToyModelParams& p,
                                            const DyadicProfile& prof = DyadicProfile()) {
    auto parts = surrogate_block_states(f0, t, p, prof);
    const auto& g = f0.grid();
    std::vector<cplx> acc(g.size());
    for (const auto& part : parts)
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += part[i];
    return to_physical(SpectralField(g, std::move(acc), representation::frequency, f0.real_valued()));
}

// e[j][k] = ||F_j f_k(t)||^2 over the surrogate block states
inline BlockSpectrum surrogate_block_energies(const SpectralField& f0, double t, const ToyModelParams& p,
                                              int j_max, const DyadicProfile& prof = DyadicProfile()) {
    const auto& g = f0.grid();
    check_freq_block(g, j_max);
    auto parts = surrogate_block_states(f0, t, p, prof);
    auto xr = g.frequency_radii();
    BlockSpectrum b;
    b.j_max = j_max;
    b.k_max = static_cast<int>(parts.size()) - 2;
    b.energies.assign(static_cast<std::size_t>((j_max + 2) * (b.k_max + 2)), 0.0);
    for (int j = -1; j <= j_max; ++j) {
        auto m = block_multiplier(prof, j, xr);
        for (int k = -1; k <= b.k_max; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m.size(); ++i) acc += m[i] * m[i] * std::norm(parts[k + 1][i]);
            b.at(j, k) = g.cell_volume() * acc;
        }
    }
    return b;
}

using evolution_observer = std::function<void(double, const SpectralField&)>;

// classical RK4 on the composed operator, stages evaluated spectrally
inline SpectralField toy_evolve(const SpectralField& f0, double T, const ToyModelParams& p,
                                const evolution_observer& observe = nullptr) {
    require(f0, representation::physical, "toy_evolve");
    p.validate();
    if (!(T >= 0.0)) throw precondition_violation("horizon must be >= 0");
    const auto& g = f0.grid();
    const double limit = stability_limit(g, p);
    if (p.dt > limit)
        throw config_error("dt = " + format_double(p.dt) + " exceeds the RK4 stability bound " +
                           format_double(limit) + " for xi_max = " + format_double(max_wavenumber(g)));
    const std::size_t steps = T == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(T / p.dt - 1e-9));
    const double h = steps ? T / double(steps) : 0.0;
    const bool real = f0.real_valued();

    auto vr = g.radii();
    auto xr = g.frequency_radii();
    std::vector<double> w(g.size()), sym(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        w[i] = std::pow(japanese(vr[i]), p.gamma);
        sym[i] = std::pow(xr[i], 2.0 * p.s);
    }
    // -A f
    auto rhs = [&](const std::vector<cplx>& f) {
        std::vector<cplx> u(f.size());
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = w[i] * f[i];
        u = dft(g, u, true);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] *= -sym[i];
        u = dft(g, u, false);
        if (real)
            for (auto& z : u) z = z.real();
        return u;
    };

    std::vector<cplx> f(f0.samples()), tmp(g.size());
    if (observe) observe(0.0, f0);
    for (std::size_t n = 0; n < steps; ++n) {
        auto k1 = rhs(f);
        for (std::size_t i = 0; i < f.size(); ++i) tmp[i] = f[i] + 0.5 * h * k1[i];
        auto k2 = rhs(tmp);
        for (std::size_t i = 0; i < f.size(); ++i) tmp[i] = f[i] + 0.5 * h * k2[i];
        auto k3 = rhs(tmp);
        for (std::size_t i = 0; i < f.size(); ++i) tmp[i] = f[i] + h * k3[i];
        auto k4 = rhs(tmp);
        bool finite = true;
        for (std::size_t i = 0; i < f.size(); ++i) {
            f[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if (!std::isfinite(f[i].real()) || !std::isfinite(f[i].imag())) finite = false;
        }
        if (!finite)
            throw numerical_error("non-finite value in toy_evolve at step " + std::to_string(n + 1) +
                                  ", t = " + format_double(double(n + 1) * h));
        if (observe) observe(double(n + 1) * h, SpectralField(g, f, representation::physical, real));
    }
    return SpectralField(g, std::move(f), representation::physical, real);
}

inline SpectralField evolve(const SpectralField& f0, double T, const ToyModelParams& p) {
    return p.mode == solver_mode::surrogate ? block_surrogate_evolve(f0, T, p) : toy_evolve(f0, T, p);
}

// ---- growth law ----

struct growth_fit {
    double q = 0.0;
    double intercept = 0.0;
    double residual = 0.0;
    std::vector<int> shells;
    std::vector<double> amplitudes; // max |d^alpha f| on each shell
};

// A_k = max over 2^k <= |v| < 2^{k+1} of |d^alpha f|, fitted log2 A_k ~ q k
inline growth_fit growth_exponent_fit(const SpectralField& f, const multi_index& alpha, int k_lo, int k_hi) {
    require(f, representation::physical, "growth_exponent_fit");
    const auto& g = f.grid();
    auto d = spectral_derivative(f, alpha);
    auto r = g.radii();
    growth_fit out;
    std::vector<double> ks, ys;
    for (int k = std::max(k_lo, 0); k <= k_hi; ++k) {
        const double lo = std::ldexp(1.0, k), hi = 2.0 * lo;
        if (hi > g.half_length()) break;
        double A = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i)
            if (r[i] >= lo && r[i] < hi) A = std::max(A, std::abs(d[i]));
        if (!(A > 0.0) || !std::isfinite(A)) continue;
        out.shells.push_back(k);
        out.amplitudes.push_back(A);
        ks.push_back(k);
        ys.push_back(std::log2(A));
    }
    if (ks.size() < 3)
        throw insufficient_data("growth fit needs at least 3 usable shells, got " + std::to_string(ks.size()));
    auto fit = least_squares(ks, ys);
    out.q = fit.slope;
    out.intercept = fit.intercept;
    out.residual = fit.residual;
    return out;
}

inline double predicted_growth_exponent(double gamma, double s, double ell, int order) {
    return -gamma * order / (2.0 * s) - ell;
}

// ---- smoothing / divergence dichotomy ----

struct scan_row {
    double n = 0.0;
    double l = 0.0;    // gamma n / (2s) + ell
    double norm = 0.0; // dyadic H^n_{l(n)} norm
    std::vector<double> D; // D[J-1] = D_J(n), J = 1..j_max
};

struct smoothing_scan {
    double ell = 0.0, gamma = 0.0, s = 0.0;
    int j_max = 0, k_max = 0;
    std::vector<scan_row> rows;
    double threshold() const { return 2.0 * s * ell / -gamma; }
};

// ||F_j f||^2 for j = -1..j_max by Plancherel
inline std::vector<double> freq_block_energies(const SpectralField& f, int j_max,
                                               const DyadicProfile& p = DyadicProfile()) {
    check_freq_block(f.grid(), j_max);
    auto F = as_frequency(f);
    auto xr = f.grid().frequency_radii();
    std::vector<double> e;
    for (int j = -1; j <= j_max; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < F.size(); ++i) {
            const double m = p.block(j, xr[i]);
            if (m != 0.0) acc += m * m * std::norm(F[i]);
        }
        e.push_back(f.grid().cell_volume() * acc);
    }
    return e;
}

// D_J(n) = sum_{j <= J} 2^{2 n j} ||F_j f||^2, the H^n partial sums by frequency block
inline smoothing_scan smoothing_norm_scan(const SpectralField& f, double ell, double gamma, double s,
                                          const std::vector<double>& n_list, int j_max = -2,
                                          const DyadicProfile& p = DyadicProfile()) {
    if (j_max < -1) j_max = max_freq_block(f.grid());
    const int k_max = max_phase_block(f.grid());
    auto b = block_energy_matrix(f, j_max, k_max, block_order::freq_after_phase, p);
    auto e = freq_block_energies(f, j_max, p);
    smoothing_scan out;
    out.ell = ell;
    out.gamma = gamma;
    out.s = s;
    out.j_max = j_max;
    out.k_max = k_max;
    for (double n : n_list) {
        scan_row row;
        row.n = n;
        row.l = gamma / (2.0 * s) * n + ell;
        row.norm = dyadic_norm_from_blocks(b, n, row.l);
        double acc = 0.0;
        for (int j = -1; j <= j_max; ++j) {
            acc += std::pow(block_scale(j), 2.0 * n) * e[j + 1];
            if (j >= 1) row.D.push_back(acc);
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

struct crossover_estimate {
    std::vector<double> n;
    std::vector<double> slope; // fitted slope of log2 (D_J - D_{J-1}) against J
    double n_star = std::numeric_limits<double>::quiet_NaN();
    bool found = false;
};

// n* = first sign change (saturating -> growing) of the increment slope, interpolated
inline crossover_estimate dichotomy_crossover(const smoothing_scan& scan, int J_lo) {
    crossover_estimate out;
    for (const auto& row : scan.rows) {
        std::vector<double> x, y;
        for (int J = std::max(J_lo, 2); J <= static_cast<int>(row.D.size()); ++J) {
            const double inc = row.D[J - 1] - row.D[J - 2];
            if (inc > 0.0) {
                x.push_back(J);
                y.push_back(std::log2(inc));
            }
        }
        out.n.push_back(row.n);
        out.slope.push_back(least_squares(x, y).slope);
    }
    for (std::size_t i = 1; i < out.n.size(); ++i) {
        const double a = out.slope[i - 1], b = out.slope[i];
        if (a <= 0.0 && b > 0.0) {
            out.n_star = out.n[i - 1] + (out.n[i] - out.n[i - 1]) * (-a) / (b - a);
            out.found = true;
            break;
        }
    }
    return out;
}

// Rough datum for the dichotomy. Family A: packets at frequency 2^j in shell
// floor(a j)+1, a = 2s/|gamma|, coefficient 2^{-(l a + delta/2) j}; these
// survive the flow. Family B: packets at frequency 2^j in a fixed low shell,
// coefficient 2^{-delta j/2}; these are damped away. Both families are in L^2_l.
struct DichotomyDataSpec {
    double gamma = -1.0;
    double s = 0.5;
    double ell = 2.0;
    double delta = 0.2;
    int J = 8;
    int low_shell = 1;
    double width = 0.25;
    bool with_low_family = true;

    double ratio() const { return 2.0 * s / -gamma; }

    void validate() const {
        std::vector<std::string> v;
        if (!(gamma > -3.0 && gamma < 0.0)) v.push_back("gamma must lie in (-3, 0)");
        if (!(s > 0.0 && s < 1.0)) v.push_back("s must lie in (0, 1)");
        if (!(ell > 0.0)) v.push_back("ell must be positive");
        if (!(delta > 0.0)) v.push_back("delta must be positive");
        if (J < 1) v.push_back("J must be at least 1");
        if (low_shell < 0) v.push_back("low shell must be >= 0");
        if (v.empty()) return;
        std::string msg = "invalid dichotomy data:";
        for (auto& e : v) msg += " " + e + ";";
        throw config_error(msg);
    }
};

inline SpectralField dichotomy_data(const DichotomyDataSpec& spec, const BoxGrid& g) {
    spec.validate();
    RoughDataSpec rs;
    rs.ell = spec.ell;
    rs.a = spec.ratio();
    rs.J = spec.J;
    rs.width = spec.width;
    std::vector<cplx> acc(g.size());
    auto add = [&](const SpectralField& p, double c) {
        c /= l2_norm(p);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * p[i];
    };
    const double bc = 1.25 * std::ldexp(1.0, spec.low_shell), br = spec.width * std::ldexp(1.0, spec.low_shell);
    for (int j = 1; j <= spec.J; ++j) {
        add(wave_packet(j, rs, g), std::exp2(-(spec.ell * rs.a + 0.5 * spec.delta) * j));
        if (spec.with_low_family) {
            if (block_outer_radius(j) > g.nyquist()) throw out_of_range_error("low-shell packet beyond Nyquist");
            add(bump_packet(g, bc, br, rs.frequency(j)), std::exp2(-0.5 * spec.delta * j));
        }
    }
    return SpectralField(g, std::move(acc), representation::physical, false);
}

// ---- output ----

struct time_sample {
    double t = 0.0;
    double mass = 0.0;
    double l2 = 0.0;
    std::vector<double> norms;
};

inline time_sample measure(double t, const SpectralField& f, const std::vector<WeightedNormParams>& extra) {
    time_sample s;
    s.t = t;
    s.mass = integral(f).real();
    s.l2 = l2_norm(f);
    for (const auto& p : extra) s.norms.push_back(sobolev_norm(f, p));
    return s;
}

inline void write_time_series_csv(std::ostream& os, const std::vector<time_sample>& ts,
                                  const std::vector<WeightedNormParams>& extra) {
    os << "t,mass,l2";
    for (const auto& p : extra) os << ",H^" << format_double(p.m) << "_" << format_double(p.l);
    os << "\n";
    for (const auto& s : ts) {
        os << format_double(s.t) << "," << format_double(s.mass) << "," << format_double(s.l2);
        for (double v : s.norms) os << "," << format_double(v);
        os << "\n";
    }
}

// one line per (n, J); DJ_ratio = D_J / D_{J-1}
inline void write_scan_csv(std::ostream& os, const smoothing_scan& scan) {
    os << "n,l,norm,J,DJ,DJ_ratio\n";
    for (const auto& r : scan.rows)
        for (std::size_t J = 1; J <= r.D.size(); ++J) {
            const double ratio = J >= 2 && r.D[J - 2] > 0.0 ? r.D[J - 1] / r.D[J - 2]
                                                          : std::numeric_limits<double>::quiet_NaN();
            os << format_double(r.n) << "," << format_double(r.l) << "," << format_double(r.norm) << "," << J
               << "," << format_double(r.D[J - 1]) << "," << format_double(ratio) << "\n";
        }
}

} // namespace kolmo
