#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "field.hpp"

// seeded random fields used by the audits and sweeps
namespace kolmo {

inline double window_bump(double t) { return std::abs(t) < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

// random spectrum on |xi| <= band with a random power-law tilt, windowed to |v| < radius
inline SpectralField random_compact_field(const BoxGrid& g, std::mt19937_64& rng, double band,
                                          double radius) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const double tilt = 2.0 * ud(rng);
    const double wtilt = 2.0 * ud(rng);
    std::vector<cplx> s(g.size());
    auto xr = g.frequency_radii();
    for (std::size_t i = 0; i < g.size(); ++i)
        if (xr[i] <= band) s[i] = cplx(nd(rng), nd(rng)) * std::pow(1.0 + xr[i], -tilt);
    auto f = to_physical(SpectralField(g, s, representation::frequency));
    return multiply_physical(f, [&](const point& v) {
        const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        return window_bump(r / radius) * std::pow(1.0 + r, -wtilt);
    });
}

// real white noise with scale-invariant colouring in both variables, so
// every dyadic octave in xi and in v carries comparable energy
inline SpectralField octave_noise(const BoxGrid& g, std::mt19937_64& rng, double floor = 0.5) {
    std::normal_distribution<double> nd;
    std::vector<cplx> s(g.size());
    for (auto& z : s) z = nd(rng);
    auto F = to_frequency(SpectralField(g, s, representation::physical, true));
    auto Fc = multiply_radial_symbol(F, [&](double r) { return std::pow(std::max(r, floor), -0.5); });
    return multiply_physical(to_physical(Fc), [&](const point& v) {
        const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        return std::pow(std::max(r, floor), -0.5);
    });
}

inline double unit_gaussian(const point& v) {
    return std::exp(-0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
}

} // namespace kolmo
