#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "field.hpp"
#include "field_io.hpp"
#include "numerics.hpp"

namespace kolmo {

// d_t f + v d_x f = <D_v>^s g on T_x x [-V, V]_v
struct TransportProbeParams {
    double s = 1.0;    // source order
    double beta = 1.0; // velocity regularity
    double p = 2.0;
    double horizon = 1.0;
    double t_lo = 0.25; // interior time window [t_lo, t_hi]
    double t_hi = 0.75;
    std::size_t t_nodes = 8;
    double v_half = 8.0;
    std::size_t v_points = 32768;
    std::vector<std::size_t> x_points{128, 256, 512, 1024}; // refinement ladder
    double alpha_max = 1.0;
    double alpha_step = 0.02;
    double growth_threshold = 1.1;
    double cost_cap = 2e10; // complex operations

    double predicted_gain() const { return beta / (s + 1.0 + beta); }

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (!(s >= 0.0 && s <= 2.0)) v.push_back("s must lie in [0, 2]");
        if (!(beta >= 0.0 && beta <= 1.0)) v.push_back("beta must lie in [0, 1]");
        if (!(p > 1.0 && std::isfinite(p))) v.push_back("p must lie in (1, inf)");
        if (!(horizon > 0.0)) v.push_back("horizon must be positive");
        if (!(t_lo >= 0.0 && t_lo < t_hi && t_hi <= horizon)) v.push_back("need 0 <= t_lo < t_hi <= horizon");
        if (t_nodes < 1) v.push_back("t_nodes must be >= 1");
        if (!(v_half > 0.0)) v.push_back("v_half must be positive");
        if (v_points < 8 || (v_points & (v_points - 1))) v.push_back("v_points must be a power of two >= 8");
        if (x_points.size() < 2) v.push_back("x refinement needs at least two levels");
        for (std::size_t i = 0; i < x_points.size(); ++i) {
            const auto n = x_points[i];
            if (n < 8 || (n & (n - 1))) v.push_back("x_points must be powers of two >= 8");
            if (i && n != 2 * x_points[i - 1]) v.push_back("x_points must double at each level");
        }
        if (!(alpha_max > 0.0 && alpha_step > 0.0)) v.push_back("alpha sweep must be positive");
        if (!(growth_threshold > 1.0)) v.push_back("growth threshold must exceed 1");
        return v;
    }

    void validate() const {
        auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid transport probe parameters:";
        for (auto& e : v) msg += " " + e + ";";
        throw config_error(msg);
    }
};

// Separable manufactured data: f0 = sum_m a_m cos(2 pi m x) h(v),
// g = sum_m b_m cos(2 pi m x) q(v); the solver applies <D_v>^s to q itself.
struct TransportProblem {
    std::function<double(long)> init_coeff;   // a_m, m >= 0
    std::function<double(double)> init_v;     // h
    std::function<double(long)> source_coeff; // b_m, m >= 0
    std::function<double(double)> source_v;   // q
    double x_regularity = 0.0; // x-Sobolev index of the data, subtracted from the measured threshold
};

// (1 - e^{-i w t}) / (i w), stable at w = 0
inline cplx duhamel_factor(double w, double t) {
    const double th = 0.5 * w * t;
    const double sinc = std::abs(th) < 1e-8 ? 1.0 - th * th / 6.0 : std::sin(th) / th;
    return t * sinc * std::polar(1.0, -th);
}

// Fourier-x coefficient of the exact solution at mode m >= 0 (cosine normalisation)
inline cplx transport_mode(double a_m, cplx h, double b_m, cplx S, long m, double t, double v) {
    const double w = 2.0 * std::numbers::pi * double(m) * v;
    return a_m * h * std::polar(1.0, -w * t) + b_m * S * duhamel_factor(w, t);
}

// f0(x, v) on an (x torus) x (v box) grid, x-major; returns f(t) by exact free streaming
inline std::vector<cplx> free_transport(const BoxGrid& xg, const BoxGrid& vg, const std::vector<cplx>& f0,
                                        double t) {
    if (xg.dim() != 1 || vg.dim() != 1 || xg.half_length() != 0.5)
        throw contract_violation("free_transport needs a 1-D torus x-grid and a 1-D v-grid");
    const std::size_t nx = xg.points(), nv = vg.points();
    if (f0.size() != nx * nv) throw contract_violation("phase-space array has the wrong size");
    std::vector<cplx> out(f0.size());
    std::vector<cplx> col(nx);
    for (std::size_t iv = 0; iv < nv; ++iv) {
        const double v = vg.coordinate(iv);
        for (std::size_t ix = 0; ix < nx; ++ix) col[ix] = f0[ix * nv + iv];
        auto F = dft(xg, col, true);
        for (std::size_t k = 0; k < nx; ++k) F[k] *= std::polar(1.0, -xg.frequency(k) * v * t);
        auto back = dft(xg, F, false);
        for (std::size_t ix = 0; ix < nx; ++ix) out[ix * nv + iv] = back[ix];
    }
    return out;
}

struct transport_probe_result {
    std::vector<double> alphas;
    std::vector<std::vector<double>> norms; // norms[a][level]
    std::vector<double> final_ratio;        // last doubling ratio per alpha
    std::vector<bool> bounded;
    double max_bounded_alpha = 0.0;
    double data_regularity = 0.0;
    double gain = 0.0;
    double predicted = 0.0;
    bool capped = false;
    bool inconclusive = false;
    std::string note;
};

namespace detail {

inline std::vector<cplx> apply_bessel_v(const BoxGrid& vg, const std::function<double(double)>& q, double s) {
    std::vector<cplx> samples(vg.size());
    for (std::size_t i = 0; i < vg.size(); ++i) samples[i] = q(vg.coordinate(i));
    auto F = dft(vg, samples, true);
    for (std::size_t k = 0; k < vg.size(); ++k) F[k] *= std::pow(japanese(vg.frequency(k)), s);
    auto out = dft(vg, F, false);
    for (auto& z : out) z = z.real();
    return out;
}

} // namespace detail

// Largest alpha' with ||<D_x>^{alpha'} f||_{L^p([t_lo,t_hi] x T x R)} bounded under x-refinement.
// p = 2 uses Parseval per x-mode; other p evaluate f in physical x.
inline transport_probe_result transport_hypo_probe(const TransportProbeParams& prm, const TransportProblem& pb) {
    prm.validate();
    const BoxGrid vg(1, prm.v_half, prm.v_points);
    const std::size_t nv = vg.points();
    const long m_top = static_cast<long>(prm.x_points.back() / 2);
    const std::size_t n_alpha = static_cast<std::size_t>(std::floor(prm.alpha_max / prm.alpha_step + 1e-9)) + 1;
    const double levels = double(prm.x_points.size());
    const double cost = prm.p == 2.0 ? double(prm.t_nodes) * double(nv) * double(m_top)
                                     : double(prm.t_nodes) * double(nv) * double(n_alpha) * levels *
                                           double(prm.x_points.back()) * std::log2(double(prm.x_points.back()));
    if (cost > prm.cost_cap)
        throw cost_cap_exceeded("transport probe estimate " + format_double(cost) + " exceeds cap " +
                                    format_double(prm.cost_cap),
                                cost);

    std::vector<cplx> S = pb.source_v ? detail::apply_bessel_v(vg, pb.source_v, prm.s) : std::vector<cplx>(nv);
    std::vector<cplx> H(nv);
    if (pb.init_v)
        for (std::size_t i = 0; i < nv; ++i) H[i] = pb.init_v(vg.coordinate(i));
    auto a = [&](long m) { return pb.init_coeff ? pb.init_coeff(m) : 0.0; };
    auto b = [&](long m) { return pb.source_coeff ? pb.source_coeff(m) : 0.0; };
    auto tq = gauss_legendre(prm.t_nodes, prm.t_lo, prm.t_hi);
    const double hv = vg.spacing();

    transport_probe_result res;
    res.predicted = prm.predicted_gain();
    res.data_regularity = pb.x_regularity;
    for (std::size_t ia = 0; ia < n_alpha; ++ia) res.alphas.push_back(double(ia) * prm.alpha_step);
    res.norms.assign(n_alpha, std::vector<double>(prm.x_points.size(), 0.0));

    auto bessel_x = [](long m, double al) {
        return std::pow(japanese(2.0 * std::numbers::pi * double(m)), al);
    };

    if (prm.p == 2.0) {
        // E_m = int int |f_m|^2 dv dt, complex coefficient (a_m/2, b_m/2) at +-m for m >= 1
        std::vector<double> E(static_cast<std::size_t>(m_top));
        parallel_for(E.size(), [&](std::size_t mi) {
            const long m = static_cast<long>(mi);
            const double am = m ? 0.5 * a(m) : a(0), bm = m ? 0.5 * b(m) : b(0);
            double acc = 0.0;
            if (am != 0.0 || bm != 0.0)
                for (std::size_t it = 0; it < tq.size(); ++it) {
                    double sv = 0.0;
                    for (std::size_t iv = 0; iv < nv; ++iv)
                        sv += std::norm(transport_mode(am, H[iv], bm, S[iv], m, tq.nodes[it], vg.coordinate(iv)));
                    acc += tq.weights[it] * hv * sv;
                }
            E[mi] = (m ? 2.0 : 1.0) * acc;
        });
        for (std::size_t ia = 0; ia < n_alpha; ++ia)
            for (std::size_t l = 0; l < prm.x_points.size(); ++l) {
                const long mm = static_cast<long>(prm.x_points[l] / 2);
                double acc = 0.0;
                for (long m = 0; m < mm; ++m) acc += std::pow(bessel_x(m, res.alphas[ia]), 2.0) * E[m];
                res.norms[ia][l] = std::sqrt(acc);
            }
    } else {
        for (std::size_t l = 0; l < prm.x_points.size(); ++l) {
            const std::size_t nx = prm.x_points[l];
            const BoxGrid xg(1, 0.5, nx);
            const long mm = static_cast<long>(nx / 2);
            for (std::size_t ia = 0; ia < n_alpha; ++ia) {
                std::vector<double> per_v(nv, 0.0);
                parallel_for(nv, [&](std::size_t iv) {
                    const double v = vg.coordinate(iv);
                    std::vector<cplx> F(nx);
                    double acc = 0.0;
                    for (std::size_t it = 0; it < tq.size(); ++it) {
                        std::fill(F.begin(), F.end(), cplx(0.0));
                        for (long m = 0; m < mm; ++m) {
                            const double am = m ? 0.5 * a(m) : a(0), bm = m ? 0.5 * b(m) : b(0);
                            if (am == 0.0 && bm == 0.0) continue;
                            const cplx c = bessel_x(m, res.alphas[ia]) *
                                           transport_mode(am, H[iv], bm, S[iv], m, tq.nodes[it], v);
                            // grid mode k carries e^{2 pi i m x}; x starts at -1/2
                            const double sgn = (m % 2 == 0) ? 1.0 : -1.0;
                            F[static_cast<std::size_t>(m)] += sgn * c;
                            if (m) F[nx - static_cast<std::size_t>(m)] += sgn * std::conj(c);
                        }
                        // synthesis: f(x_i) = sum_k F_k e^{i xi_k (x_i + 1/2)} = sqrt(nx) * inverse unitary DFT
                        auto fx = dft(xg, F, false);
                        double sx = 0.0;
                        for (auto& z : fx) sx += std::pow(std::abs(z) * std::sqrt(double(nx)), prm.p);
                        acc += tq.weights[it] * sx / double(nx);
                    }
                    per_v[iv] = acc * hv;
                });
                double tot = 0.0;
                for (double x : per_v) tot += x;
                res.norms[ia][l] = std::pow(tot, 1.0 / prm.p);
            }
        }
    }

    // bounded iff the last doubling grows by at most the threshold
    bool seen_unbounded = false;
    res.max_bounded_alpha = -1.0;
    for (std::size_t ia = 0; ia < n_alpha; ++ia) {
        const auto& row = res.norms[ia];
        const double r = row[row.size() - 2] > 0.0 ? row.back() / row[row.size() - 2] : 1.0;
        res.final_ratio.push_back(r);
        const bool ok = r <= prm.growth_threshold;
        res.bounded.push_back(ok);
        if (ok && seen_unbounded) res.inconclusive = true;
        if (!ok) seen_unbounded = true;
        if (ok && !seen_unbounded) res.max_bounded_alpha = res.alphas[ia];
    }
    if (res.max_bounded_alpha < 0.0) {
        res.inconclusive = true;
        res.note = "no trial exponent is bounded under refinement";
        res.max_bounded_alpha = std::numeric_limits<double>::quiet_NaN();
    }
    res.capped = !seen_unbounded;
    if (res.capped) res.note = "every trial exponent bounded; gain capped at the sweep maximum";
    if (res.inconclusive && res.note.empty()) res.note = "boundedness is not monotone in alpha'";
    res.gain = res.max_bounded_alpha - res.data_regularity;
    return res;
}

// rough-in-v source: b_m = m^{-1/2-kappa}, q(v) = e^{-v^2/2} |v - 0.3|^{3/4}
inline TransportProblem rough_source_problem(double kappa = 0.02) {
    TransportProblem pb;
    pb.source_coeff = [kappa](long m) { return m >= 1 ? std::pow(double(m), -0.5 - kappa) : 0.0; };
    pb.source_v = [](double v) { return std::exp(-0.5 * v * v) * std::pow(std::abs(v - 0.3), 0.75); };
    pb.x_regularity = kappa;
    return pb;
}

// g = 0 and analytic-in-x initial datum
inline TransportProblem free_streaming_problem() {
    TransportProblem pb;
    pb.init_coeff = [](long m) { return std::exp(-double(m)); };
    pb.init_v = [](double v) { return std::exp(-0.5 * v * v); };
    return pb;
}

} // namespace kolmo
