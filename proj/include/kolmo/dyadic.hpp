#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "field.hpp"
#include "field_io.hpp"

namespace kolmo {

// C-infinity step: 0 for t <= 0, 1 for t >= 1
inline double smooth_step(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / t);
    const double b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

// Psi = indicator of the ball of radius 7/8 mollified at scale `smoothing`;
// equal to 1 on |xi| <= 3/4 and 0 on |xi| >= 4/3 as long as smoothing <= 1/8.
// psi = Psi, phi(xi) = Psi(xi/2) - Psi(xi), so the partition telescopes.
class DyadicProfile {
public:
    static constexpr double plateau_radius = 0.875;

    DyadicProfile() : DyadicProfile(0.1) {}
    explicit DyadicProfile(double smoothing) : delta_(smoothing) {
        if (!(smoothing > 0.0) || !(smoothing < 0.125))
            throw config_error("profile smoothing must lie in (0, 1/8); got " +
                               format_double(smoothing) +
                               " which would push the bump outside its annulus");
    }

    double smoothing() const { return delta_; }

    double Psi(double r) const {
        return 1.0 - smooth_step((r - (plateau_radius - delta_)) / (2.0 * delta_));
    }
    double psi(double r) const { return Psi(r); }
    double phi(double r) const { return Psi(0.5 * r) - Psi(r); }

    // multiplier of block j >= -1 at radius r
    double block(int j, double r) const {
        if (j < -1) throw out_of_range_error("block index below -1");
        if (j == -1) return psi(r);
        return phi(std::ldexp(r, -j));
    }

    // edges of the transition zones of phi: support [lo, hi], flat on [a, b]
    double phi_support_lo() const { return plateau_radius - delta_; }
    double phi_flat_lo() const { return plateau_radius + delta_; }
    double phi_flat_hi() const { return 2.0 * (plateau_radius - delta_); }
    double phi_support_hi() const { return 2.0 * (plateau_radius + delta_); }
    double psi_support_hi() const { return plateau_radius + delta_; }

private:
    double delta_;
};

inline DyadicProfile build_profile(double smoothing) { return DyadicProfile(smoothing); }

// block scale; the low block uses scale 1
inline double block_scale(int j) { return j <= 0 ? 1.0 : std::ldexp(1.0, j); }

inline double block_outer_radius(int j) { return j < 0 ? 4.0 / 3.0 : std::ldexp(8.0 / 3.0, j); }

inline int max_freq_block(const BoxGrid& g) {
    int j = -1;
    while (block_outer_radius(j + 1) <= g.nyquist()) ++j;
    return j;
}

inline int max_phase_block(const BoxGrid& g) {
    int k = -1;
    while (block_outer_radius(k + 1) <= g.half_length()) ++k;
    return k;
}

inline void check_freq_block(const BoxGrid& g, int j) {
    if (j < -1) throw out_of_range_error("frequency block below -1");
    if (block_outer_radius(j) > g.nyquist())
        throw out_of_range_error("frequency block " + std::to_string(j) + " reaches " +
                                 format_double(block_outer_radius(j)) + " beyond Nyquist " +
                                 format_double(g.nyquist()));
}

inline void check_phase_block(const BoxGrid& g, int k) {
    if (k < -1) throw out_of_range_error("phase block below -1");
    if (block_outer_radius(k) > g.half_length())
        throw out_of_range_error("phase block " + std::to_string(k) + " reaches " +
                                 format_double(block_outer_radius(k)) + " beyond box half-length " +
                                 format_double(g.half_length()));
}

inline std::vector<double> block_multiplier(const DyadicProfile& p, int j,
                                            const std::vector<double>& radii) {
    std::vector<double> m(radii.size());
    for (std::size_t i = 0; i < radii.size(); ++i) m[i] = p.block(j, radii[i]);
    return m;
}

namespace detail {
inline SpectralField scale_samples(const SpectralField& f, const std::vector<double>& m) {
    std::vector<cplx> s(f.samples());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= m[i];
    return with_samples(f, std::move(s), f.real_valued());
}
} // namespace detail

// result has the same representation as the input
inline SpectralField freq_project(const SpectralField& f, int j,
                                  const DyadicProfile& p = DyadicProfile()) {
    check_freq_block(f.grid(), j);
    auto F = as_frequency(f);
    auto out = detail::scale_samples(F, block_multiplier(p, j, f.grid().frequency_radii()));
    return f.is_physical() ? to_physical(out) : out;
}

inline SpectralField phase_project(const SpectralField& f, int k,
                                   const DyadicProfile& p = DyadicProfile()) {
    check_phase_block(f.grid(), k);
    auto P = as_physical(f);
    auto out = detail::scale_samples(P, block_multiplier(p, k, f.grid().radii()));
    return f.is_physical() ? out : to_frequency(out);
}

enum class block_order {
    freq_after_phase, // F_j P_k f
    phase_after_freq  // P_k F_j f
};

struct BlockSpectrum {
    int j_max = -1;
    int k_max = -1;
    block_order order = block_order::freq_after_phase;
    std::vector<double> energies; // row-major (j+1)*(k_max+2) + (k+1)

    double at(int j, int k) const { return energies[index(j, k)]; }
    double& at(int j, int k) { return energies[index(j, k)]; }
    std::size_t index(int j, int k) const {
        return static_cast<std::size_t>(j + 1) * static_cast<std::size_t>(k_max + 2) +
               static_cast<std::size_t>(k + 1);
    }
    double total() const {
        double t = 0.0;
        for (double e : energies) t += e;
        return t;
    }
};

inline BlockSpectrum block_energy_matrix(const SpectralField& f, int j_max, int k_max,
                                         block_order order = block_order::freq_after_phase,
                                         const DyadicProfile& p = DyadicProfile()) {
    const auto& g = f.grid();
    check_freq_block(g, j_max);
    check_phase_block(g, k_max);
    BlockSpectrum b;
    b.j_max = j_max;
    b.k_max = k_max;
    b.order = order;
    b.energies.assign(static_cast<std::size_t>((j_max + 2) * (k_max + 2)), 0.0);
    const double h = g.cell_volume();
    auto P = as_physical(f);
    auto vr = g.radii();
    auto xr = g.frequency_radii();
    if (order == block_order::freq_after_phase) {
        std::vector<std::vector<double>> fm;
        for (int j = -1; j <= j_max; ++j) fm.push_back(block_multiplier(p, j, xr));
        for (int k = -1; k <= k_max; ++k) {
            auto Pk = to_frequency(detail::scale_samples(P, block_multiplier(p, k, vr)));
            for (int j = -1; j <= j_max; ++j) {
                const auto& m = fm[j + 1];
                double acc = 0.0;
                for (std::size_t i = 0; i < Pk.size(); ++i) acc += m[i] * m[i] * std::norm(Pk[i]);
                b.at(j, k) = h * acc;
            }
        }
    } else {
        std::vector<std::vector<double>> pm;
        for (int k = -1; k <= k_max; ++k) pm.push_back(block_multiplier(p, k, vr));
        auto F = to_frequency(P);
        for (int j = -1; j <= j_max; ++j) {
            auto Fj = to_physical(detail::scale_samples(F, block_multiplier(p, j, xr)));
            for (int k = -1; k <= k_max; ++k) {
                const auto& m = pm[k + 1];
                double acc = 0.0;
                for (std::size_t i = 0; i < Fj.size(); ++i) acc += m[i] * m[i] * std::norm(Fj[i]);
                b.at(j, k) = h * acc;
            }
        }
    }
    return b;
}

inline double dyadic_norm_from_blocks(const BlockSpectrum& b, double m, double l) {
    double acc = 0.0;
    for (int j = -1; j <= b.j_max; ++j)
        for (int k = -1; k <= b.k_max; ++k)
            acc += std::pow(block_scale(j), 2.0 * m) * std::pow(block_scale(k), 2.0 * l) * b.at(j, k);
    return std::sqrt(acc);
}

// ranges default to the largest blocks the grid resolves
inline double dyadic_sobolev_norm(const SpectralField& f, double m, double l, int j_max = -2,
                                  int k_max = -2, const DyadicProfile& p = DyadicProfile()) {
    if (j_max < -1) j_max = max_freq_block(f.grid());
    if (k_max < -1) k_max = max_phase_block(f.grid());
    return dyadic_norm_from_blocks(block_energy_matrix(f, j_max, k_max, block_order::freq_after_phase, p),
                                   m, l);
}

inline double commutator_probe(const SpectralField& f, int j, int k,
                               const DyadicProfile& p = DyadicProfile()) {
    auto P = as_physical(f);
    auto a = phase_project(freq_project(P, j, p), k, p);
    auto b = freq_project(phase_project(P, k, p), j, p);
    return l2_norm(a - b);
}

struct bernstein_ratios {
    double upper = 0.0; // |F_j f|_{H^m} / (2^{jm} |F_j f|)
    double lower = 0.0; // 2^{jm} |F_j f|_{H^{-m}} / |F_j f|
};

inline bernstein_ratios bernstein_check(const SpectralField& f, int j, double m,
                                        const DyadicProfile& p = DyadicProfile()) {
    auto Fj = freq_project(as_physical(f), j, p);
    const double base = l2_norm(Fj);
    if (!(base > 1e-300) || base <= 1e-14 * l2_norm(f))
        throw undefined_ratio("block " + std::to_string(j) + " of the field is empty");
    const double s = std::pow(block_scale(j), m);
    bernstein_ratios r;
    r.upper = sobolev_norm(Fj, {m, 0.0}) / (s * base);
    r.lower = s * sobolev_norm(Fj, {-m, 0.0}) / base;
    return r;
}

inline void write_blocks_csv(std::ostream& os, const BlockSpectrum& b) {
    os << "j,k,energy\n";
    for (int j = -1; j <= b.j_max; ++j)
        for (int k = -1; k <= b.k_max; ++k)
            os << j << ',' << k << ',' << format_double(b.at(j, k)) << '\n';
}

inline void write_blocks_json(std::ostream& os, const BlockSpectrum& b) {
    os << "{\"j_max\":" << b.j_max << ",\"k_max\":" << b.k_max << ",\"order\":\""
       << (b.order == block_order::freq_after_phase ? "freq_after_phase" : "phase_after_freq")
       << "\",\"energies\":[";
    for (int j = -1; j <= b.j_max; ++j) {
        os << (j > -1 ? "," : "") << '[';
        for (int k = -1; k <= b.k_max; ++k)
            os << (k > -1 ? "," : "") << format_double(b.at(j, k));
        os << ']';
    }
    os << "]}";
}

} // namespace kolmo
