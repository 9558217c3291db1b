#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "fft.hpp"
#include "grid.hpp"

namespace kolmo {

enum class representation { physical, frequency };

inline const char* to_string(representation r) {
    return r == representation::physical ? "physical" : "frequency";
}

struct WeightedNormParams {
    double m = 0.0; // derivative order
    double l = 0.0; // weight exponent
};

using multi_index = std::array<int, 3>;

// Sampled field on a BoxGrid. Values are immutable once built; every
// operation below returns a new field.
class SpectralField {
public:
    SpectralField() = default;
    SpectralField(BoxGrid grid, std::vector<cplx> samples, representation rep,
                  bool real_valued = false)
        : grid_(std::move(grid)), samples_(std::move(samples)), rep_(rep), real_(real_valued) {
        if (samples_.size() != grid_.size())
            throw contract_violation("sample count " + std::to_string(samples_.size()) +
                                     " does not match grid size " + std::to_string(grid_.size()));
    }

    static SpectralField zeros(const BoxGrid& g, representation rep = representation::physical) {
        return SpectralField(g, std::vector<cplx>(g.size()), rep, true);
    }

    const BoxGrid& grid() const { return grid_; }
    const std::vector<cplx>& samples() const { return samples_; }
    representation rep() const { return rep_; }
    bool real_valued() const { return real_; }
    bool is_physical() const { return rep_ == representation::physical; }
    std::size_t size() const { return samples_.size(); }
    const cplx& operator[](std::size_t i) const { return samples_[i]; }

private:
    BoxGrid grid_;
    std::vector<cplx> samples_;
    representation rep_ = representation::physical;
    bool real_ = false;
};

inline void require(const SpectralField& f, representation rep, const char* op) {
    if (f.rep() != rep)
        throw contract_violation(std::string(op) + " expects a " + to_string(rep) +
                                 " field, got " + to_string(f.rep()));
}

inline void require_same_grid(const SpectralField& a, const SpectralField& b) {
    if (!(a.grid() == b.grid())) throw contract_violation("fields live on different grids");
    if (a.rep() != b.rep()) throw contract_violation("fields have different representations");
}

template <class F>
SpectralField sample(const BoxGrid& g, F&& fn) {
    std::vector<cplx> s(g.size());
    bool real = true;
    for (std::size_t i = 0; i < g.size(); ++i) {
        s[i] = cplx(fn(g.position(i)));
        if (s[i].imag() != 0.0) real = false;
    }
    return SpectralField(g, std::move(s), representation::physical, real);
}

inline SpectralField to_frequency(const SpectralField& f) {
    require(f, representation::physical, "to_frequency");
    return SpectralField(f.grid(), dft(f.grid(), f.samples(), true), representation::frequency,
                         f.real_valued());
}

inline SpectralField to_physical(const SpectralField& f) {
    require(f, representation::frequency, "to_physical");
    auto s = dft(f.grid(), f.samples(), false);
    if (f.real_valued())
        for (auto& z : s) z = cplx(z.real(), 0.0);
    return SpectralField(f.grid(), std::move(s), representation::physical, f.real_valued());
}

inline SpectralField as_physical(const SpectralField& f) {
    return f.is_physical() ? f : to_physical(f);
}
inline SpectralField as_frequency(const SpectralField& f) {
    return f.is_physical() ? to_frequency(f) : f;
}

inline SpectralField with_samples(const SpectralField& like, std::vector<cplx> s,
                                  bool real_valued) {
    return SpectralField(like.grid(), std::move(s), like.rep(), real_valued);
}

// pointwise multiply by m(v) in physical space
template <class F>
SpectralField multiply_physical(const SpectralField& f, F&& m) {
    require(f, representation::physical, "multiply_physical");
    std::vector<cplx> s(f.samples());
    const auto& g = f.grid();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= m(g.position(i));
    return with_samples(f, std::move(s), f.real_valued());
}

// multiply frequency data by a real radial symbol sigma(|xi|)
template <class F>
SpectralField multiply_radial_symbol(const SpectralField& f, F&& sigma) {
    require(f, representation::frequency, "multiply_radial_symbol");
    std::vector<cplx> s(f.samples());
    auto r = f.grid().frequency_radii();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= sigma(r[i]);
    return with_samples(f, std::move(s), f.real_valued());
}

inline SpectralField apply_weight(const SpectralField& f, double l) {
    require(f, representation::physical, "apply_weight");
    if (l == 0.0) return f;
    return multiply_physical(f, [l](const point& v) {
        return std::pow(1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2], 0.5 * l);
    });
}

// sqrt(h^d sum |f|^2); the transform is unitary so the same formula holds
// for both representations up to the cell factor
inline double l2_norm(const SpectralField& f) {
    double acc = 0.0;
    for (const auto& z : f.samples()) acc += std::norm(z);
    return std::sqrt(f.grid().cell_volume() * acc);
}

inline cplx inner(const SpectralField& a, const SpectralField& b) {
    require_same_grid(a, b);
    cplx acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
    return acc * a.grid().cell_volume();
}

inline SpectralField operator+(const SpectralField& a, const SpectralField& b) {
    require_same_grid(a, b);
    std::vector<cplx> s(a.samples());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += b[i];
    return with_samples(a, std::move(s), a.real_valued() && b.real_valued());
}

inline SpectralField operator-(const SpectralField& a, const SpectralField& b) {
    require_same_grid(a, b);
    std::vector<cplx> s(a.samples());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] -= b[i];
    return with_samples(a, std::move(s), a.real_valued() && b.real_valued());
}

inline SpectralField operator*(cplx c, const SpectralField& a) {
    std::vector<cplx> s(a.samples());
    for (auto& z : s) z *= c;
    return with_samples(a, std::move(s), a.real_valued() && c.imag() == 0.0);
}

inline SpectralField real_part(const SpectralField& f) {
    require(f, representation::physical, "real_part");
    std::vector<cplx> s(f.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = f[i].real();
    return with_samples(f, std::move(s), true);
}

inline double sobolev_norm(const SpectralField& f, const WeightedNormParams& p) {
    require(f, representation::physical, "sobolev_norm");
    auto w = to_frequency(apply_weight(f, p.l));
    if (p.m == 0.0) return l2_norm(w);
    auto r = f.grid().frequency_radii();
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        acc += std::pow(1.0 + r[i] * r[i], p.m) * std::norm(w[i]);
    return std::sqrt(f.grid().cell_volume() * acc);
}

inline SpectralField spectral_derivative(const SpectralField& f, const multi_index& alpha) {
    require(f, representation::physical, "spectral_derivative");
    const auto& g = f.grid();
    int order = 0;
    for (int a = 0; a < 3; ++a) {
        if (alpha[a] < 0) throw contract_violation("negative derivative order");
        if (a >= g.dim() && alpha[a] != 0)
            throw contract_violation("derivative along an axis the grid does not have");
        order += alpha[a];
    }
    if (order > 6) throw contract_violation("derivative order above 6");
    if (order == 0) return f;
    auto F = to_frequency(f);
    std::vector<cplx> s(F.samples());
    const std::size_t nyq = g.points() / 2;
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto idx = g.unflatten(i);
        cplx m = 1.0;
        for (int a = 0; a < g.dim(); ++a) {
            if (alpha[a] == 0) continue;
            // the Nyquist mode has no conjugate partner; odd orders drop it
            if ((alpha[a] % 2) == 1 && idx[a] == nyq) {
                m = 0.0;
                break;
            }
            m *= std::pow(cplx(0.0, g.frequency(idx[a])), alpha[a]);
        }
        s[i] *= m;
    }
    return to_physical(with_samples(F, std::move(s), f.real_valued()));
}

inline bool is_hermitian(const SpectralField& F, double tol) {
    require(F, representation::frequency, "is_hermitian");
    const auto& g = F.grid();
    const std::size_t n = g.points();
    double scale = 0.0;
    for (const auto& z : F.samples()) scale = std::max(scale, std::abs(z));
    for (std::size_t i = 0; i < F.size(); ++i) {
        auto idx = g.unflatten(i);
        std::array<std::size_t, 3> mirror{0, 0, 0};
        for (int a = 0; a < g.dim(); ++a) mirror[a] = (n - idx[a]) % n;
        if (std::abs(F[i] - std::conj(F[g.flat(mirror)])) > tol * std::max(scale, 1e-300))
            return false;
    }
    return true;
}

// per-axis phase table e^{i xi (v + L)} used by trigonometric interpolation;
// the Nyquist column uses cos so real fields stay real off-grid
inline std::vector<cplx> interpolation_row(const BoxGrid& g, double x) {
    const std::size_t n = g.points();
    std::vector<cplx> row(n);
    const double y = x + g.half_length();
    for (std::size_t k = 0; k < n; ++k) {
        const double xi = g.frequency(k);
        row[k] = k == n / 2 ? cplx(std::cos(xi * y), 0.0) : std::polar(1.0, xi * y);
    }
    return row;
}

// evaluate the trigonometric interpolant of a frequency field at point v
inline cplx evaluate(const SpectralField& F, const point& v) {
    require(F, representation::frequency, "evaluate");
    const auto& g = F.grid();
    const std::size_t n = g.points();
    const double norm = 1.0 / std::sqrt(static_cast<double>(g.size()));
    auto r0 = interpolation_row(g, v[0]);
    if (g.dim() == 1) {
        cplx acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += F[k] * r0[k];
        return acc * norm;
    }
    auto r1 = interpolation_row(g, v[1]);
    if (g.dim() == 2) {
        cplx acc = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            cplx inner_sum = 0.0;
            for (std::size_t b = 0; b < n; ++b) inner_sum += F[a * n + b] * r1[b];
            acc += inner_sum * r0[a];
        }
        return acc * norm;
    }
    auto r2 = interpolation_row(g, v[2]);
    cplx acc = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        cplx s1 = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            cplx s2 = 0.0;
            const cplx* row = &F.samples()[(a * n + b) * n];
            for (std::size_t c = 0; c < n; ++c) s2 += row[c] * r2[c];
            s1 += s2 * r1[b];
        }
        acc += s1 * r0[a];
    }
    return acc * norm;
}

// phase factors e^{-i xi . s} on the frequency lattice, separable per axis
inline std::vector<cplx> shift_phases(const BoxGrid& g, const point& s) {
    const std::size_t n = g.points();
    std::vector<std::vector<cplx>> axis(g.dim(), std::vector<cplx>(n));
    for (int a = 0; a < g.dim(); ++a)
        for (std::size_t k = 0; k < n; ++k) axis[a][k] = std::polar(1.0, -g.frequency(k) * s[a]);
    std::vector<cplx> ph(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto idx = g.unflatten(i);
        cplx z = axis[0][idx[0]];
        for (int a = 1; a < g.dim(); ++a) z *= axis[a][idx[a]];
        ph[i] = z;
    }
    return ph;
}

// physical samples of v -> f(v - s), computed through the interpolant
inline SpectralField shifted(const SpectralField& F, const point& s) {
    require(F, representation::frequency, "shifted");
    auto ph = shift_phases(F.grid(), s);
    std::vector<cplx> out(F.samples());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= ph[i];
    return to_physical(with_samples(F, std::move(out), false));
}

inline double max_abs(const SpectralField& f) {
    double m = 0.0;
    for (const auto& z : f.samples()) m = std::max(m, std::abs(z));
    return m;
}

// integral of f over the box (physical representation)
inline cplx integral(const SpectralField& f) {
    require(f, representation::physical, "integral");
    cplx acc = 0.0;
    for (const auto& z : f.samples()) acc += z;
    return acc * f.grid().cell_volume();
}

} // namespace kolmo
