#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dyadic.hpp"
#include "field.hpp"

namespace kolmo {

enum class amplitude_law {
    harmonic, // c_j = 2^{-l a j} / j
    geometric // c_j = 2^{-l a j}
};

enum class packet_normalization {
    l2,  // each packet has L2 norm = amplitude
    peak // each packet has peak modulus = amplitude
};

struct RoughDataSpec {
    double ell = 2.0;
    double eps = 0.2;
    double a = 1.0;
    int J = 6;
    double amplitude = 1.0;
    double width = 0.25; // envelope radius in units of 2^{k_j}
    amplitude_law law = amplitude_law::harmonic;
    packet_normalization normalization = packet_normalization::l2;
    bool nonneg = false;
    double background_eps = 0.05; // eps' of the nonneg background

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (!(ell > 0.0)) v.push_back("ell must be positive");
        if (!(eps > 0.0 && eps < 1.0)) v.push_back("eps must lie in (0, 1)");
        if (!(a > 0.0)) v.push_back("a must be positive");
        if (J < 1) v.push_back("J must be at least 1");
        if (!(width > 0.0)) v.push_back("envelope width must be positive");
        if (!(amplitude > 0.0)) v.push_back("amplitude must be positive");
        if (nonneg && !(background_eps > 0.0)) v.push_back("background eps' must be positive");
        return v;
    }

    void validate() const {
        auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid rough data spec:";
        for (auto& s : v) msg += " " + s + ";";
        throw config_error(msg);
    }

    // phase shell hosting packet j, strictly above a*j
    int shell(int j) const { return static_cast<int>(std::floor(a * j)) + 1; }
    double centre(int j) const { return 1.25 * std::ldexp(1.0, shell(j)); }
    double radius(int j) const { return width * std::ldexp(1.0, shell(j)); }
    double frequency(int j) const { return 1.25 * std::ldexp(1.0, j); }

    double coefficient(int j) const {
        double c = std::exp2(-ell * a * j);
        if (law == amplitude_law::harmonic) c /= j;
        return c;
    }
};

// smooth bump with peak 1 at the origin, support |x| < 1
inline double packet_bump(double r) {
    return r < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - r * r)) : 0.0;
}

inline void check_packet(const RoughDataSpec& spec, int j, const BoxGrid& g) {
    if (j < 1) throw out_of_range_error("packet index must be >= 1");
    const double reach = spec.centre(j) + spec.radius(j);
    if (reach > g.half_length())
        throw out_of_range_error("packet " + std::to_string(j) + " reaches |v| = " + format_double(reach) +
                                 " beyond box half-length " + format_double(g.half_length()));
    if (block_outer_radius(j) > g.nyquist())
        throw out_of_range_error("packet " + std::to_string(j) + " frequency block exceeds Nyquist " +
                                 format_double(g.nyquist()));
}

// amplitude * chi((v - centre e1)/radius) * e^{i xi v1}
inline SpectralField bump_packet(const BoxGrid& g, double centre, double radius, double xi,
                                 double amplitude = 1.0) {
    std::vector<cplx> s(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto v = g.position(i);
        const double dx = v[0] - centre;
        const double r = std::sqrt(dx * dx + v[1] * v[1] + v[2] * v[2]) / radius;
        if (r < 1.0) s[i] = amplitude * packet_bump(r) * std::polar(1.0, xi * v[0]);
    }
    return SpectralField(g, std::move(s), representation::physical, false);
}

inline SpectralField wave_packet(int j, const RoughDataSpec& spec, const BoxGrid& g) {
    spec.validate();
    check_packet(spec, j, g);
    return bump_packet(g, spec.centre(j), spec.radius(j), spec.frequency(j), spec.amplitude);
}

inline SpectralField rough_data(const RoughDataSpec& spec, const BoxGrid& g) {
    spec.validate();
    for (int j = 1; j <= spec.J; ++j) check_packet(spec, j, g);
    std::vector<cplx> acc(g.size());
    for (int j = 1; j <= spec.J; ++j) {
        auto p = wave_packet(j, spec, g);
        double c = spec.coefficient(j);
        if (spec.normalization == packet_normalization::l2) c *= spec.amplitude / l2_norm(p);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * p[i];
    }
    SpectralField f(g, std::move(acc), representation::physical, false);
    if (!spec.nonneg) return f;
    // real part plus a positive background <v>^{-l-d/2-eps'} large enough to
    // dominate the oscillation everywhere on the grid
    auto re = real_part(f);
    const double q = spec.ell + 0.5 * g.dim() + spec.background_eps;
    auto r = g.radii();
    double B = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        B = std::max(B, -re[i].real() * std::pow(japanese(r[i]), q));
    B = 1.01 * B + 1e-12;
    std::vector<cplx> s(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) s[i] = re[i].real() + B * std::pow(japanese(r[i]), -q);
    return SpectralField(g, std::move(s), representation::physical, true);
}

// lacunary x-modes m_j = floor(2^{(1-eps) j}), j = 1..J
struct XModeSet {
    int J = 0;
    double eps = 0.2;
    std::vector<long> modes; // modes[j-1] = m_j

    XModeSet() = default;
    XModeSet(int J_, double eps_) : J(J_), eps(eps_) {
        if (J < 0) throw config_error("x-mode truncation must be >= 0");
        if (!(eps > 0.0 && eps < 1.0)) throw config_error("eps must lie in (0, 1)");
        for (int j = 1; j <= J; ++j) {
            long m = static_cast<long>(std::floor(std::exp2((1.0 - eps) * j)));
            if (!modes.empty() && m <= modes.back())
                throw config_error("x-modes are not strictly increasing at j = " + std::to_string(j) +
                                   " (eps too close to 1)");
            modes.push_back(m);
        }
    }

    long mode(int j) const { return modes.at(static_cast<std::size_t>(j - 1)); }

    // (ln m)^{-2}; the m = 1 entry has no finite coefficient and is left out
    static double coefficient(long m) {
        return m >= 2 ? std::pow(std::log(static_cast<double>(m)), -2.0) : 0.0;
    }
};

// x-grid on the unit torus: [-1/2, 1/2) so the mode spacing is 2 pi
inline BoxGrid torus_grid(std::size_t points) { return BoxGrid(1, 0.5, points); }

// Fourier coefficient int_0^1 g(x) e^{-2 pi i m x} dx of a torus field
inline cplx torus_coefficient(const SpectralField& g, long m) {
    const auto& grid = g.grid();
    if (grid.dim() != 1 || grid.half_length() != 0.5) throw contract_violation("not a torus field");
    auto F = as_frequency(g);
    const auto n = static_cast<long>(grid.points());
    if (m < -n / 2 || m >= n / 2) throw out_of_range_error("torus mode beyond Nyquist");
    const std::size_t k = static_cast<std::size_t>((m + n) % n);
    const double sign = (m % 2 == 0) ? 1.0 : -1.0;
    return sign * F[k] / std::sqrt(static_cast<double>(n));
}

// g(x) = 100 + sum_{m in M, |m| >= 2} (ln|m|)^{-2} e^{-2 pi i m x}
inline SpectralField lacunary_x_factor(int J, double eps, const BoxGrid& xg) {
    if (xg.dim() != 1 || xg.half_length() != 0.5) throw contract_violation("x-factor needs a torus grid");
    XModeSet M(J, eps);
    if (J > 0 && M.mode(J) >= static_cast<long>(xg.points() / 2))
        throw out_of_range_error("x-mode " + std::to_string(M.mode(J)) + " at or beyond x-grid Nyquist " +
                                 std::to_string(xg.points() / 2));
    std::vector<cplx> s(xg.size());
    for (std::size_t i = 0; i < xg.size(); ++i) {
        const double x = xg.coordinate(i);
        double v = 100.0;
        for (long m : M.modes) v += 2.0 * XModeSet::coefficient(m) * std::cos(2.0 * std::numbers::pi * m * x);
        s[i] = v;
    }
    return SpectralField(xg, std::move(s), representation::physical, true);
}

// partial sums S_1..S_J of sum_j sum_{a j < l <= K} 2^{(2 l a + eps) j} e[j][l]
inline std::vector<double> divergence_from_blocks(const BlockSpectrum& b, double ell, double eps, double a,
                                                  int J, int K) {
    if (J > b.j_max || K > b.k_max) throw out_of_range_error("functional range exceeds block matrix");
    std::vector<double> S;
    double acc = 0.0;
    for (int j = 1; j <= J; ++j) {
        const double w = std::exp2((2.0 * ell * a + eps) * j);
        for (int l = -1; l <= K; ++l)
            if (l > a * j) acc += w * b.at(j, l);
        S.push_back(acc);
    }
    return S;
}

inline std::vector<double> rsd_divergence_functional(const SpectralField& f, double ell, double eps, double a,
                                                     int J, int K = -2,
                                                     const DyadicProfile& p = DyadicProfile()) {
    if (K < -1) K = max_phase_block(f.grid());
    auto b = block_energy_matrix(f, J, K, block_order::freq_after_phase, p);
    return divergence_from_blocks(b, ell, eps, a, J, K);
}

// f_j(v) = 2^{l j} 2^{j d/2} f(2^j v) cut away from the origin by (1 - psi)
template <class F>
SpectralField scaled_family_member(F&& f, int j, double ell, const BoxGrid& g,
                                   const DyadicProfile& p = DyadicProfile()) {
    const double s = std::ldexp(1.0, j);
    const double pre = std::pow(s, ell + 0.5 * g.dim());
    return sample(g, [&](const point& v) {
        const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        return pre * f(point{s * v[0], s * v[1], s * v[2]}) * (1.0 - p.psi(r));
    });
}

} // namespace kolmo
