#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "collision.hpp"
#include "data_factory.hpp"
#include "dyadic.hpp"
#include "evolution.hpp"
#include "lab_config.hpp"
#include "numerics.hpp"
#include "random_fields.hpp"
#include "transport.hpp"

namespace kolmo {

// ---- separable (x, v) energy functional ----

struct energy_scan_result {
    int J = 0, K = 0, M2 = 0;
    std::vector<long> modes;      // m_j, 0 where j > M2
    std::vector<double> x_weight; // |g^(m_j)|^2 + |g^(-m_j)|^2
    std::vector<double> v_energy; // sum_{a j < l <= K} |F_j P_l h|^2
    std::vector<double> S;        // S_1..S_J
    std::vector<double> ratio;    // S_J / S_{J-1}, NaN where S_{J-1} = 0
};

// S_J = sum_{j <= J} 2^{(2 l a + eps) j} sum_{m in M_j} |g^(m)|^2 sum_{a j < l <= K} |F_j P_l h|^2
// with M_j = {m_j, -m_j} for j <= M2 and empty beyond
inline energy_scan_result energy_functional_scan(const SpectralField& g, const SpectralField& h, double ell,
                                                 double eps, double a, int J, int K = -2, int M2 = -1,
                                                 const DyadicProfile& p = DyadicProfile()) {
    if (g.grid().dim() != 1 || g.grid().half_length() != 0.5)
        throw contract_violation("energy_functional_scan needs the x-factor on the 1-D torus");
    if (J < 1) throw config_error("energy functional needs J >= 1");
    if (K < -1) K = max_phase_block(h.grid());
    if (M2 < 0) M2 = J;
    energy_scan_result out;
    out.J = J;
    out.K = K;
    out.M2 = M2;
    const int jm = std::min(M2, J);
    XModeSet M(jm, eps);
    auto b = block_energy_matrix(h, J, K, block_order::freq_after_phase, p);
    double acc = 0.0;
    for (int j = 1; j <= J; ++j) {
        long m = 0;
        double w = 0.0;
        if (j <= jm) {
            m = M.mode(j);
            w = std::norm(torus_coefficient(g, m)) + std::norm(torus_coefficient(g, -m));
        }
        double e = 0.0;
        for (int l = -1; l <= K; ++l)
            if (l > a * j) e += b.at(j, l);
        const double prev = acc;
        acc += std::exp2((2.0 * ell * a + eps) * j) * w * e;
        out.modes.push_back(m);
        out.x_weight.push_back(w);
        out.v_energy.push_back(e);
        out.S.push_back(acc);
        out.ratio.push_back(prev > 0.0 ? acc / prev : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

// v-factor matched to the x-factor: packet j carries the rough-data coefficient
// times (ln m_j)^2, the inverse of the x-coefficient; packets with m_j < 2 are left out
inline SpectralField matched_v_factor(const RoughDataSpec& spec, const BoxGrid& g) {
    spec.validate();
    XModeSet M(spec.J, spec.eps);
    std::vector<cplx> acc(g.size());
    for (int j = 1; j <= spec.J; ++j) {
        const long m = M.mode(j);
        if (m < 2) continue;
        auto pk = wave_packet(j, spec, g);
        double c = spec.coefficient(j) * std::pow(std::log(double(m)), 2.0);
        if (spec.normalization == packet_normalization::l2) c *= spec.amplitude / l2_norm(pk);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * pk[i];
    }
    return SpectralField(g, std::move(acc), representation::physical, false);
}

} // namespace kolmo

namespace kolmo::lab {

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
    std::seed_seq q{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(tag), std::uint32_t(tag >> 32)};
    return std::mt19937_64(q);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }

class session {
public:
    session(const ExperimentConfig& c, RunReport& r, std::filesystem::path dir)
        : cfg(c), rep(r), dir_(std::move(dir)) {}

    const ExperimentConfig& cfg;
    RunReport& rep;

    // runtime errors become a failing check of the stage, later stages still run
    template <class F>
    void stage(const std::string& name, F&& body) {
        stage_ = name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body();
        } catch (const std::exception& e) {
            check_result c;
            c.name = name + ":error";
            c.stage = name;
            c.diagnostic = e.what();
            rep.checks.push_back(c);
            if (rep.error.empty()) rep.error = name + ": " + e.what();
        }
        rep.stages.emplace_back(name, seconds_since(t0));
    }

    check_result& check(const std::string& name, double measured, const std::string& rel, double tol,
                        json values = json::object(), std::string diagnostic = "") {
        check_result c;
        c.name = name;
        c.stage = stage_;
        c.measured = measured;
        c.relation = rel;
        c.tolerance = tol;
        c.pass = compare(measured, rel, tol);
        c.values = std::move(values);
        c.diagnostic = std::move(diagnostic);
        if (!std::isfinite(measured) && c.diagnostic.empty()) c.diagnostic = "measurement is not finite";
        rep.checks.push_back(std::move(c));
        return rep.checks.back();
    }

    template <class F>
    void csv(const std::string& file, const std::string& kind, F&& body, json meta = json::object()) {
        std::ostringstream os;
        os << "# kolmo-lab " << cfg.experiment << " seed=" << cfg.seed << "\n";
        body(os);
        std::ofstream out(dir_ / file, std::ios::binary);
        out << os.str();
        if (!out) throw std::runtime_error("cannot write " + (dir_ / file).string());
        rep.artifacts.push_back({file, kind, std::move(meta)});
    }

private:
    std::filesystem::path dir_;
    std::string stage_;
};

inline std::string fd(double x) { return format_double(x); }

inline double rel_l2(const SpectralField& a, const SpectralField& b) { return l2_norm(a - b) / l2_norm(b); }

inline double gaussian_d(const point& v) { return unit_gaussian(v); }

// field scales inside the region where the partitions sum to one
inline std::pair<double, double> compact_scales(const BoxGrid& g) {
    const double band = std::min(10.0, 0.75 * std::ldexp(1.0, max_freq_block(g) + 1));
    const double radius = std::min(20.0, 0.75 * std::ldexp(1.0, max_phase_block(g) + 1));
    return {band, radius};
}

inline void write_sj(std::ostream& os, const std::vector<double>& S) {
    os << "J,S_J,ratio\n";
    for (std::size_t i = 0; i < S.size(); ++i) {
        const double r = i > 0 && S[i - 1] > 0.0 ? S[i] / S[i - 1] : nan();
        os << i + 1 << ',' << format_double(S[i]) << ',' << format_double(r) << '\n';
    }
}

// ---- experiments ----

inline void partition_audit(session& S) {
    const auto& c = S.cfg;
    const auto g = c.grid.make();
    const DyadicProfile prof(c.number("smoothing"));

    S.stage("profile", [&] {
        auto rng = stream(c.seed, 1);
        std::uniform_real_distribution<double> ud(0.0, 1.0);
        const long n = c.integer("radial_samples");
        double worst = 0.0;
        for (long t = 0; t < n; ++t) {
            const double r = std::pow(2.0, 14.0 * ud(rng)) - 1.0;
            double s = prof.psi(r);
            for (int j = 0; j < 20; ++j) s += prof.block(j, r);
            worst = std::max(worst, std::abs(s - 1.0));
        }
        S.check("partition-profile-residual", worst, "<=", 1e-12, {{"samples", n}, {"max_radius", 16383}});
        double overlap = 0.0;
        for (int i = 0; i < 40000; ++i) {
            const double r = 1e-3 * i;
            for (int j = -1; j <= 5; ++j)
                for (int k = j + 2; k <= 7; ++k) overlap = std::max(overlap, std::abs(prof.block(j, r) * prof.block(k, r)));
        }
        S.check("partition-profile-disjointness", overlap, "<=", 1e-14, {{"radius_step", 1e-3}, {"max_radius", 40}});
    });

    S.stage("fields", [&] {
        auto rng = stream(c.seed, 2);
        const int J = max_freq_block(g), K = max_phase_block(g);
        const auto [band, radius] = compact_scales(g);
        const double cut = 0.75 * std::ldexp(1.0, J + 1);
        double rf = 0.0, rp = 0.0, df = 0.0, dp = 0.0;
        const long n = c.integer("fields");
        for (long t = 0; t < n; ++t) {
            auto f = random_compact_field(g, rng, band, radius);
            auto F = to_frequency(f);
            std::vector<cplx> s(F.samples());
            auto xr = g.frequency_radii();
            for (std::size_t i = 0; i < s.size(); ++i)
                if (xr[i] > cut) s[i] = 0.0;
            auto fb = to_physical(SpectralField(g, s, representation::frequency));
            auto sum = SpectralField::zeros(g);
            for (int j = -1; j <= J; ++j) sum = sum + freq_project(fb, j, prof);
            rf = std::max(rf, l2_norm(sum - fb) / l2_norm(fb));
            auto ps = SpectralField::zeros(g);
            for (int k = -1; k <= K; ++k) ps = ps + phase_project(f, k, prof);
            rp = std::max(rp, max_abs(ps - f) / max_abs(f));
            const double nf = l2_norm(f);
            for (int j = -1; j <= J; ++j)
                for (int k = j + 2; k <= J; ++k)
                    df = std::max(df, l2_norm(freq_project(freq_project(f, k, prof), j, prof)) / nf);
            for (int j = -1; j <= K; ++j)
                for (int k = j + 2; k <= K; ++k)
                    dp = std::max(dp, l2_norm(phase_project(phase_project(f, k, prof), j, prof)) / nf);
            if (t == 0) {
                auto b = block_energy_matrix(f, J, K, block_order::freq_after_phase, prof);
                S.csv("blocks.csv", "blocks", [&](std::ostream& os) { write_blocks_csv(os, b); });
            }
        }
        json v{{"fields", n}, {"J", J}, {"K", K}};
        S.check("partition-frequency-reconstruct", rf, "<=", 1e-12, v);
        S.check("partition-phase-reconstruct", rp, "<=", 1e-12, v);
        S.check("partition-frequency-disjointness", df, "<=", 1e-14, v);
        S.check("partition-phase-disjointness", dp, "<=", 1e-14, v);
    });
}

inline void norm_equivalence(session& S) {
    const auto& c = S.cfg;
    const DyadicProfile prof(c.number("smoothing"));

    S.stage("norm-equivalence", [&] {
        const auto g = c.grid.make();
        auto rng = stream(c.seed, 3);
        const int J = max_freq_block(g), K = max_phase_block(g);
        const auto [band, radius] = compact_scales(g);
        const long n = c.integer("fields");
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        std::ostringstream rows;
        for (long t = 0; t < n; ++t) {
            auto f = random_compact_field(g, rng, band, radius);
            auto b = block_energy_matrix(f, J, K, block_order::freq_after_phase, prof);
            for (int m = -2; m <= 2; ++m)
                for (int l = -2; l <= 2; ++l) {
                    const double dy = dyadic_norm_from_blocks(b, m, l);
                    const double di = sobolev_norm(f, {double(m), double(l)});
                    lo = std::min(lo, dy / di);
                    hi = std::max(hi, dy / di);
                    rows << t << ',' << m << ',' << l << ',' << fd(dy) << ',' << fd(di) << ',' << fd(dy / di) << '\n';
                }
            if (t == 0) S.csv("blocks.csv", "blocks", [&](std::ostream& os) { write_blocks_csv(os, b); });
        }
        S.csv("norm_ratios.csv", "table", [&](std::ostream& os) { os << "field,m,l,dyadic,direct,ratio\n" << rows.str(); });
        json v{{"fields", n}, {"pairs", 25}, {"ratio_min", lo}, {"ratio_max", hi}};
        S.check("norm-equivalence-min", lo, ">=", 1.0 / 8.0, v);
        S.check("norm-equivalence-max", hi, "<=", 8.0, v);
    });

    if (c.flag("bernstein"))
        S.stage("bernstein", [&] {
            const BoxGrid g(1, 32.0, 2048);
            auto rng = stream(c.seed, 4);
            double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
            std::ostringstream rows;
            for (int j = 1; j <= 5; ++j)
                for (long t = 0; t < c.integer("bernstein_fields"); ++t) {
                    auto f = random_compact_field(g, rng, 3.0 * std::ldexp(1.0, j), 8.0);
                    for (double m : {0.5, 1.0, 2.0}) {
                        auto r = bernstein_check(f, j, m, prof);
                        lo = std::min({lo, r.upper, r.lower});
                        hi = std::max({hi, r.upper, r.lower});
                        rows << j << ',' << t << ',' << fd(m) << ',' << fd(r.upper) << ',' << fd(r.lower) << '\n';
                    }
                }
            S.csv("bernstein.csv", "table", [&](std::ostream& os) { os << "j,field,m,upper,lower\n" << rows.str(); });
            json v{{"grid", "d=1 L=32 N=2048"}, {"j", "1..5"}, {"m", {0.5, 1.0, 2.0}}};
            S.check("bernstein-min", lo, ">=", 0.25, v);
            S.check("bernstein-max", hi, "<=", 4.0, v);
        });

    if (c.flag("commutator"))
        S.stage("commutator", [&] {
            // block j+1 <= 6 must be resolved for the neighbourhood energies
            const BoxGrid g(1, 256.0, 32768);
            auto rng = stream(c.seed, 5);
            std::vector<double> acc(25, 0.0);
            double nf2 = 0.0;
            for (long r = 0; r < c.integer("commutator_draws"); ++r) {
                auto f = octave_noise(g, rng);
                nf2 += std::pow(l2_norm(f), 2);
                std::vector<double> part(25);
                parallel_for(25, [&](std::size_t i) {
                    part[i] = std::pow(commutator_probe(f, int(i / 5) + 1, int(i % 5) + 1, prof), 2);
                });
                for (std::size_t i = 0; i < 25; ++i) acc[i] += part[i];
            }
            double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
            std::ostringstream rows;
            for (int j = 1; j <= 5; ++j)
                for (int k = 1; k <= 5; ++k) {
                    const double sc = std::sqrt(acc[(j - 1) * 5 + k - 1] / nf2) * std::ldexp(1.0, j + k);
                    lo = std::min(lo, sc);
                    hi = std::max(hi, sc);
                    rows << j << ',' << k << ',' << fd(sc) << '\n';
                }
            S.csv("commutator.csv", "table", [&](std::ostream& os) { os << "j,k,scaled\n" << rows.str(); });
            S.check("commutator-spread", hi / lo, "<=", 10.0,
                    {{"scaled_min", lo}, {"scaled_max", hi}, {"draws", c.integer("commutator_draws")}});
        });
}

inline void rough_data_scan(session& S) {
    const auto& c = S.cfg;
    const auto g = c.grid.make();
    const auto& rs = c.rough;
    const int K = c.option("K").is_null() ? max_phase_block(g) : int(c.integer("K"));
    const double thr = std::exp2(0.5 * rs.eps);

    S.stage("rough-increments", [&] {
        if (rs.J < 2) throw insufficient_data("weighted norm increments need J >= 2");
        std::vector<double> n2, scaled;
        double prev = 0.0;
        for (int J = 1; J <= rs.J; ++J) {
            auto spec = rs;
            spec.J = J;
            const double v = std::pow(sobolev_norm(rough_data(spec, g), {0.0, rs.ell}), 2);
            n2.push_back(v);
            scaled.push_back((v - prev) * J * J);
            prev = v;
        }
        double dev = 0.0;
        for (int J = 2; J <= rs.J; ++J) dev = std::max(dev, std::abs(scaled[J - 1] / scaled.back() - 1.0));
        S.csv("l2_increments.csv", "table", [&](std::ostream& os) {
            os << "J,norm_sq,increment,scaled\n";
            for (int J = 1; J <= rs.J; ++J)
                os << J << ',' << fd(n2[J - 1]) << ',' << fd(n2[J - 1] - (J > 1 ? n2[J - 2] : 0.0)) << ','
                   << fd(scaled[J - 1]) << '\n';
        });
        S.check("rough-l2-increments", dev, "<=", 0.1,
                {{"norm_sq", n2}, {"increment_times_J2", scaled}, {"bounded_by", n2.back()}});
    });

    S.stage("rough-divergence", [&] {
        auto f = rough_data(rs, g);
        auto b = block_energy_matrix(f, rs.J, K);
        auto Sv = divergence_from_blocks(b, rs.ell, rs.eps, rs.a, rs.J, K);
        S.csv("blocks.csv", "blocks", [&](std::ostream& os) { write_blocks_csv(os, b); });
        S.csv("sj.csv", "sj", [&](std::ostream& os) { write_sj(os, Sv); },
              {{"threshold", thr}, {"title", "rough data divergence functional"}});
        double mr = std::numeric_limits<double>::infinity(), cum = std::numeric_limits<double>::infinity();
        std::vector<double> ratios;
        for (int J = 2; J <= rs.J; ++J) {
            const double r = Sv[J - 2] > 0.0 ? Sv[J - 1] / Sv[J - 2] : nan();
            ratios.push_back(r);
            mr = std::min(mr, r);
            cum = std::min(cum, Sv[J - 1] / (Sv[0] * std::exp2(0.5 * rs.eps * (J - 1))));
        }
        std::string diag;
        for (int J = 2; J <= rs.J; ++J)
            if (!(ratios[J - 2] >= thr)) diag += (diag.empty() ? "ratio below 2^{eps/2} at J =" : ",") + std::string(" ") + std::to_string(J);
        S.check("rough-divergence-ratio", rs.J >= 2 ? mr : nan(), ">=", thr, {{"S", Sv}, {"ratios", ratios}, {"K", K}}, diag);
        S.check("rough-divergence-cumulative", rs.J >= 2 ? cum : nan(), ">=", 1.0,
                {{"min_S_J_over_S_1_2^(eps(J-1)/2)", cum}});
    });

    S.stage("gaussian-control", [&] {
        if (rs.J < 4) throw insufficient_data("the saturation check needs J >= 4");
        auto f = sample(g, gaussian_d);
        auto Sv = rsd_divergence_functional(f, rs.ell, rs.eps, rs.a, rs.J, K);
        double worst = 0.0;
        for (int J = 4; J <= rs.J; ++J) worst = std::max(worst, (Sv[J - 1] - Sv[J - 2]) / Sv[0]);
        S.csv("sj_gaussian.csv", "sj", [&](std::ostream& os) { write_sj(os, Sv); },
              {{"title", "Gaussian control"}});
        S.check("gaussian-saturation", Sv[0] > 0.0 ? worst : nan(), "<=", 1e-6, {{"S", Sv}});
    });

    if (c.flag("energy_scan"))
        S.stage("energy-scan", [&] {
            const int M2 = c.option("M2").is_null() ? rs.J : int(c.integer("M2"));
            const auto xg = torus_grid(static_cast<std::size_t>(c.integer("x_points")));
            auto gx = lacunary_x_factor(std::min(M2, rs.J), rs.eps, xg);
            auto spec = rs;
            spec.law = amplitude_law::geometric;
            auto write = [&](const energy_scan_result& e) {
                return [&e](std::ostream& os) {
                    os << "J,mode,x_weight,v_energy,S_J,ratio\n";
                    for (std::size_t i = 0; i < e.S.size(); ++i)
                        os << i + 1 << ',' << e.modes[i] << ',' << fd(e.x_weight[i]) << ',' << fd(e.v_energy[i])
                           << ',' << fd(e.S[i]) << ',' << fd(e.ratio[i]) << '\n';
                };
            };
            auto E = energy_functional_scan(gx, matched_v_factor(spec, g), rs.ell, rs.eps, rs.a, rs.J, K, M2);
            S.csv("energy_scan.csv", "sj", write(E), {{"threshold", thr}, {"title", "energy functional, matched v-factor"}});
            double mr = std::numeric_limits<double>::infinity();
            int counted = 0;
            for (std::size_t i = 1; i < E.S.size(); ++i)
                if (E.S[i - 1] > 0.0) {
                    mr = std::min(mr, E.ratio[i]);
                    ++counted;
                }
            S.check("energy-scan-growth", counted ? mr : nan(), ">=", thr, {{"S", E.S}, {"M2", M2}, {"K", K}});

            auto Es = energy_functional_scan(gx, sample(g, gaussian_d), rs.ell, rs.eps, rs.a, rs.J, K, M2);
            S.csv("energy_scan_smooth.csv", "sj", write(Es), {{"title", "energy functional, Gaussian v-factor"}});
            double base = 0.0, worst = 0.0;
            for (std::size_t i = 0; i < Es.S.size(); ++i) {
                if (base == 0.0) base = Es.S[i];
                if (i + 1 >= 4 && base > 0.0) worst = std::max(worst, (Es.S[i] - Es.S[i - 1]) / base);
            }
            S.check("energy-scan-smooth-saturates", base > 0.0 && rs.J >= 4 ? worst : nan(), "<=", 1e-6, {{"S", Es.S}});
        });
}

inline void toy_dichotomy(session& S) {
    const auto& c = S.cfg;
    const auto g = c.grid.make();
    std::vector<double> ns;
    const double step = c.number("n_step");
    for (int i = 0;; ++i) {
        const double n = c.number("n_min") + i * step;
        if (n > c.number("n_max") + 1e-12) break;
        ns.push_back(n);
    }
    const int J = int(c.integer("J")), J_lo = int(c.integer("J_lo"));
    int idx = 0;
    for (const auto& t : c.option("triples")) {
        const int i = idx++;
        S.stage("dichotomy-" + std::to_string(i), [&] {
            DichotomyDataSpec ds;
            ds.gamma = t[0].get<double>();
            ds.s = t[1].get<double>();
            ds.ell = t[2].get<double>();
            ds.delta = c.number("delta");
            ds.J = J;
            auto p = c.toy;
            p.gamma = ds.gamma;
            p.s = ds.s;
            auto ft = evolve(dichotomy_data(ds, g), p.horizon, p);
            auto sc = smoothing_norm_scan(ft, ds.ell, ds.gamma, ds.s, ns, J);
            auto cr = dichotomy_crossover(sc, J_lo);
            const std::string tag = std::to_string(i);
            S.csv("scan_" + tag + ".csv", "scan", [&](std::ostream& os) { write_scan_csv(os, sc); },
                  {{"threshold", sc.threshold()}, {"gamma", ds.gamma}, {"s", ds.s}, {"ell", ds.ell}, {"J_lo", J_lo}});
            S.csv("crossover_" + tag + ".csv", "table", [&](std::ostream& os) {
                os << "n,slope\n";
                for (std::size_t k = 0; k < cr.n.size(); ++k) os << fd(cr.n[k]) << ',' << fd(cr.slope[k]) << '\n';
            });
            S.check("dichotomy-crossover-" + tag, cr.found ? std::abs(cr.n_star - sc.threshold()) : nan(), "<=", 0.5,
                    {{"gamma", ds.gamma}, {"s", ds.s}, {"ell", ds.ell}, {"n_star", cr.found ? cr.n_star : nan()},
                     {"threshold", sc.threshold()}, {"t", p.horizon}, {"mode", to_string(p.mode)}},
                    cr.found ? "" : "no saturating-to-growing sign change in the increment slopes");
        });
    }
}

inline void growth_law(session& S) {
    const auto& c = S.cfg;
    const auto& p = c.toy;
    const auto& rs = c.rough;

    S.stage("growth-law", [&] {
        const auto g = c.grid.make();
        auto f0 = rough_data(rs, g);
        auto ft = evolve(f0, p.horizon, p);
        const int lo = int(c.integer("shell_lo")), hi = int(c.integer("shell_hi"));
        std::ostringstream shells, fits;
        std::vector<double> xs, qs;
        for (const auto& a : c.option("orders")) {
            const int o = a.get<int>();
            auto fit = growth_exponent_fit(ft, {o, 0, 0}, lo, hi);
            const double pred = predicted_growth_exponent(p.gamma, p.s, rs.ell, o);
            for (std::size_t k = 0; k < fit.shells.size(); ++k)
                shells << o << ',' << fit.shells[k] << ',' << fd(fit.amplitudes[k]) << '\n';
            fits << o << ',' << fd(fit.q) << ',' << fd(fit.intercept) << ',' << fd(fit.residual) << ',' << fd(pred) << '\n';
            if (o >= 1) {
                xs.push_back(o);
                qs.push_back(fit.q);
                S.check("growth-exponent-a" + std::to_string(o), std::abs(fit.q - pred), "<=",
                        0.1 * std::max(std::abs(pred), 1.0),
                        {{"q", fit.q}, {"predicted", pred}, {"shells", fit.shells}, {"fit_residual", fit.residual}});
            }
        }
        S.csv("growth_shells.csv", "growth_shells", [&](std::ostream& os) { os << "alpha,shell,amplitude\n" << shells.str(); });
        S.csv("growth_fits.csv", "growth_fits", [&](std::ostream& os) { os << "alpha,q,intercept,residual,predicted\n" << fits.str(); });
        const double want = -p.gamma / (2.0 * p.s);
        if (xs.size() >= 2) {
            const double slope = least_squares(xs, qs).slope;
            S.check("growth-affinity-slope", std::abs(slope - want), "<=", 0.1 * std::abs(want),
                    {{"slope", slope}, {"predicted", want}});
        }

        const long nt = c.integer("time_samples");
        std::vector<WeightedNormParams> extra{{0.0, rs.ell}, {1.0, rs.ell}};
        std::vector<time_sample> ts;
        for (long i = 0; i < nt; ++i) {
            const double t = p.horizon * double(i) / double(nt - 1);
            ts.push_back(measure(t, i == 0 ? f0 : evolve(f0, t, p), extra));
        }
        S.csv("time_series.csv", "time_series", [&](std::ostream& os) { write_time_series_csv(os, ts, extra); });
    });

    if (!c.flag("cross_validation")) return;
    S.stage("solver", [&] {
        auto q = p;
        // constant-coefficient limit against the exact diagonal flow
        const BoxGrid g0(1, 16.0, 256);
        auto f0 = sample(g0, [](const point& v) { return std::exp(-0.5 * v[0] * v[0]) * (1 + 0.3 * v[0]); });
        double diag = 0.0;
        for (double s : {0.3, 0.5, 0.9}) {
            q.gamma = 0.0;
            q.s = s;
            auto got = toy_evolve(f0, p.horizon, q);
            auto exact = to_physical(multiply_radial_symbol(to_frequency(f0), [&](double r) {
                return std::exp(-p.horizon * std::pow(r, 2 * s));
            }));
            diag = std::max(diag, rel_l2(got, exact));
        }
        S.check("solver-diagonal", diag, "<=", 1e-6, {{"s", {0.3, 0.5, 0.9}}, {"dt", p.dt}});

        const BoxGrid g1(1, 32.0, 512);
        auto rng = stream(c.seed, 6);
        auto f = real_part(random_compact_field(g1, rng, 10.0, 25.0));
        const double m0 = integral(f).real();
        q = p;
        const double m1 = integral(toy_evolve(f, p.horizon, q)).real();
        S.check("solver-mass", std::abs(m1 - m0) / std::max(1.0, std::abs(m0)), "<=", 1e-8, {{"mass_0", m0}, {"mass_T", m1}});

        const BoxGrid g2(1, 128.0, 8192);
        RoughDataSpec one;
        auto pk = wave_packet(3, one, g2);
        const double d = rel_l2(block_surrogate_evolve(pk, p.horizon, q), toy_evolve(pk, p.horizon, q));
        S.check("solver-surrogate-discrepancy", d, "<=", 0.15, {{"packet", 3}, {"discrepancy", d}});
        S.csv("solver.csv", "table", [&](std::ostream& os) {
            os << "check,value\n"
               << "diagonal_rel_error," << fd(diag) << "\nmass_drift," << fd(std::abs(m1 - m0)) << "\nsurrogate_discrepancy,"
               << fd(d) << '\n';
        });
    });
}

inline void transport_gain(session& S) {
    const auto& c = S.cfg;
    S.stage("transport-characteristics", [&] {
        const BoxGrid xg(1, 0.5, 64), vg(1, 4.0, 128);
        const long m = 5;
        const double t = 0.37, tau = 2.0 * std::numbers::pi;
        std::vector<cplx> f0(xg.points() * vg.points());
        for (std::size_t ix = 0; ix < xg.points(); ++ix)
            for (std::size_t iv = 0; iv < vg.points(); ++iv) {
                const double v = vg.coordinate(iv);
                f0[ix * vg.points() + iv] = std::polar(std::exp(-v * v), tau * m * xg.coordinate(ix));
            }
        auto ft = free_transport(xg, vg, f0, t);
        double err = 0.0;
        for (std::size_t ix = 0; ix < xg.points(); ++ix)
            for (std::size_t iv = 0; iv < vg.points(); ++iv) {
                const double x = xg.coordinate(ix), v = vg.coordinate(iv);
                err = std::max(err, std::abs(ft[ix * vg.points() + iv] - std::polar(std::exp(-v * v), tau * m * (x - v * t))));
            }
        S.check("transport-characteristics", err, "<=", 1e-10, {{"mode", m}, {"t", t}});
    });

    S.stage("transport-gain", [&] {
        const auto& prm = c.transport;
        auto r = transport_hypo_probe(prm, rough_source_problem(c.number("kappa")));
        S.csv("transport.csv", "table", [&](std::ostream& os) {
            os << "alpha,level,x_points,norm\n";
            for (std::size_t a = 0; a < r.alphas.size(); ++a)
                for (std::size_t l = 0; l < r.norms[a].size(); ++l)
                    os << fd(r.alphas[a]) << ',' << l << ',' << prm.x_points[l] << ',' << fd(r.norms[a][l]) << '\n';
        });
        S.csv("transport_ratios.csv", "table", [&](std::ostream& os) {
            os << "alpha,final_ratio,bounded\n";
            for (std::size_t a = 0; a < r.alphas.size(); ++a)
                os << fd(r.alphas[a]) << ',' << fd(r.final_ratio[a]) << ',' << (r.bounded[a] ? 1 : 0) << '\n';
        });
        std::string diag = r.inconclusive ? "inconclusive: " + r.note : (r.capped ? "bounded up to alpha_max" : "");
        S.check("transport-gain", r.inconclusive ? nan() : r.gain, ">=", 0.9 * r.predicted,
                {{"gain", r.gain}, {"predicted", r.predicted}, {"max_bounded_alpha", r.max_bounded_alpha},
                 {"data_regularity", r.data_regularity}, {"beta", prm.beta}, {"s", prm.s}, {"p", prm.p}},
                diag);
    });
}

inline void collision_identities(session& S) {
    const auto& c = S.cfg;
    const auto& p = c.collision;
    const int d = p.dim;
    auto maxdiff = [](const SpectralField& a, const SpectralField& b) {
        double m = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
        return m;
    };
    std::ostringstream rows;

    S.stage("bobylev", [&] {
        const BoxGrid g(d, c.number("oracle_half_length"), static_cast<std::size_t>(c.integer("oracle_points")));
        auto G = sample(g, gaussian_d);
        auto H = sample(g, [](const point& v) {
            return std::exp(-((v[0] - 0.5) * (v[0] - 0.5) + v[1] * v[1] + v[2] * v[2]) / 0.8);
        });
        for (int k : {-1, 1}) {
            auto kb = build_kernel_block(p, g, k);
            auto qb = bobylev_apply(G, H, kb, p);
            auto qd = direct_quadrature_apply(G, H, kb, p);
            const double ref = max_abs(qb);
            const double diff = maxdiff(qb, qd) / ref;
            const double mass = std::abs(integral(qb).real()) / ref;
            const std::string tag = k < 0 ? "m1" : std::to_string(k);
            rows << "bobylev-vs-direct-k" << tag << ',' << fd(diff) << '\n' << "mass-null-k" << tag << ',' << fd(mass) << '\n';
            S.check("bobylev-vs-direct-k" + tag, diff, "<=", 1e-6, {{"k", k}, {"max_abs_Q", ref}, {"N", g.points()}});
            S.check("mass-null-k" + tag, mass, "<=", 1e-8, {{"k", k}});
        }
    });

    S.stage("maxwellian", [&] {
        const BoxGrid g(d, 8.0, 32);
        auto mu = sample(g, gaussian_d);
        auto blocks = build_kernel_blocks(p, g);
        auto Q = collision_sum(mu, mu, blocks, p);
        auto loss = collision_sum(mu, mu, blocks, p, collision_terms::loss);
        const double r = l2_norm(Q) / l2_norm(loss);
        rows << "maxwellian-equilibrium," << fd(r) << '\n';
        S.check("maxwellian-equilibrium", r, "<=", 1e-6, {{"K", p.K}, {"blocks", blocks.size()}, {"loss_norm", l2_norm(loss)}});
    });

    S.stage("cancellation", [&] {
        const BoxGrid g(d, 8.0, 32);
        auto f = sample(g, gaussian_d);
        for (auto kind : {change_of_variables::regular, change_of_variables::singular}) {
            auto r = cancellation_check(f, p, kind, {0.3, -0.2, 0.0});
            const std::string name = kind == change_of_variables::regular ? "cancellation-regular" : "cancellation-singular";
            rows << name << ',' << fd(r.rel_diff()) << '\n';
            S.check(name, r.rel_diff(), "<=", 1e-8, {{"lhs", r.lhs}, {"rhs", r.rhs}});
        }
    });

    S.stage("angular-blowup", [&] {
        std::vector<double> eps;
        for (const auto& e : c.option("eps_list")) eps.push_back(e.get<double>());
        auto f = angular_blowup(p, eps);
        S.csv("angular.csv", "table", [&](std::ostream& os) {
            os << "eps_theta,mass\n";
            for (std::size_t i = 0; i < f.eps.size(); ++i) os << fd(f.eps[i]) << ',' << fd(f.mass[i]) << '\n';
        });
        rows << "angular-blowup-rate," << fd(f.rate) << '\n';
        S.check("angular-blowup-rate", f.rel_error(), "<=", 0.05,
                {{"rate", f.rate}, {"predicted", f.predicted}, {"constant", f.constant},
                 {"predicted_constant", f.predicted_constant}});
    });

    S.csv("collision.csv", "table", [&](std::ostream& os) { os << "check,value\n" << rows.str(); });
}

inline void coercivity(session& S) {
    const auto& c = S.cfg;
    const auto& p = c.collision;
    const int d = p.dim;
    std::ostringstream frows;

    S.stage("fourier-bound", [&] {
        auto b = fourier_lower_bound_check(sample(BoxGrid(d, 80.0, 128), gaussian_d), c.number("fit_radius"));
        frows << "gaussian," << fd(b.l1) << ',' << fd(b.G_min) << ',' << fd(b.c_small) << ',' << fd(b.c_plateau) << ','
              << fd(b.power) << ',' << fd(b.constant) << '\n';
        json v{{"l1", b.l1}, {"G_min", b.G_min}, {"c_small", b.c_small}, {"c_plateau", b.c_plateau},
               {"power", b.power}, {"constant", b.constant}, {"fit_points", b.fit_points}};
        S.check("fourier-gaussian-nonnegative", b.G_min, ">=", 0.0, v);
        S.check("fourier-gaussian-power", std::abs(b.power - 2.0), "<=", 0.02, v);
        S.check("fourier-gaussian-constant", std::abs(b.constant / (0.5 * b.l1) - 1.0), "<=", 0.02, v);

        auto r = fourier_lower_bound_check(rough_data(c.rough, BoxGrid(1, 512.0, 65536)), c.number("rough_fit_radius"));
        frows << "rough," << fd(r.l1) << ',' << fd(r.G_min) << ',' << fd(r.c_small) << ',' << fd(r.c_plateau) << ','
              << fd(r.power) << ',' << fd(r.constant) << '\n';
        json w{{"l1", r.l1}, {"G_min", r.G_min}, {"c_small", r.c_small}, {"c_plateau", r.c_plateau}};
        S.check("fourier-rough-nonnegative", r.G_min, ">=", 0.0, w);
        S.check("fourier-rough-plateau", r.c_plateau, ">", 0.0, w);
        S.csv("fourier.csv", "table", [&](std::ostream& os) {
            os << "case,l1,G_min,c_small,c_plateau,power,constant\n" << frows.str();
        });
    });

    S.stage("coercivity", [&] {
        std::ostringstream rows;
        auto row = [&](const std::string& label, const coercivity_terms& t) {
            rows << label << ',' << fd(t.dirichlet) << ',' << fd(t.l2sq) << ',' << fd(t.hs_sq) << ',' << fd(t.lhs) << ','
                 << fd(t.rhs) << ',' << fd(t.ratio) << ',' << fd(t.weighted_ratio) << '\n';
        };
        if (d == 2) {
            std::vector<double> ratios;
            coercivity_terms last;
            SpectralField f_last;
            for (std::size_t N : {16u, 32u}) {
                auto f = sample(BoxGrid(2, 10.0, N), gaussian_d);
                auto t = coercivity_check(f, p);
                row("N=" + std::to_string(N), t);
                ratios.push_back(t.ratio);
                last = t;
                f_last = f;
            }
            auto t2 = coercivity_check(cplx(2.0) * f_last, p);
            row("N=32,2f", t2);
            const double hom = std::max({std::abs(t2.dirichlet / (8.0 * last.dirichlet) - 1.0),
                                         std::abs(t2.l2sq / (4.0 * last.l2sq) - 1.0),
                                         std::abs(t2.rhs / (std::exp2(11) * 4.0 * last.rhs) - 1.0),
                                         std::abs(t2.weighted_dirichlet / (8.0 * last.weighted_dirichlet) - 1.0)});
            S.check("coercivity-positive", std::min(ratios[0], ratios[1]), ">", 0.0, {{"ratios", ratios}});
            S.check("coercivity-refinement", std::abs(ratios[1] / ratios[0] - 1.0), "<=", 0.2, {{"ratios", ratios}});
            S.check("coercivity-homogeneity", hom, "<=", 1e-8);
        } else {
            const BoxGrid g(d, 6.0, 16);
            const auto n = static_cast<std::size_t>(c.integer("mc_samples"));
            auto rep = coercivity_check_mc(gaussian_d, g, p, n, c.seed);
            auto rep2 = coercivity_check_mc([](const point& v) { return 2.0 * gaussian_d(v); }, g, p, n, c.seed);
            row("mc", rep.terms);
            row("mc,2f", rep2.terms);
            S.check("coercivity-positive", rep.ratio_lo, ">", 0.0,
                    {{"ratio_lo", rep.ratio_lo}, {"ratio_hi", rep.ratio_hi}, {"samples", n}, {"std_error", rep.dirichlet.std_error}});
            S.check("coercivity-homogeneity", std::abs(rep2.dirichlet.mean / (8.0 * rep.dirichlet.mean) - 1.0), "<=", 1e-8);
        }
        S.csv("coercivity.csv", "table", [&](std::ostream& os) {
            os << "case,dirichlet,l2sq,hs_sq,lhs,rhs,ratio,weighted_ratio\n" << rows.str();
        });
    });
}

// ---- plot scripts ----

inline std::string script_prelude(const RunReport& r) {
    std::ostringstream os;
    os << "# plot script written by kolmo-lab " << tool_version << " for " << r.experiment << ", seed " << r.seed << "\n"
       << "import pathlib\n\nimport numpy as np\nimport matplotlib\n\nmatplotlib.use(\"Agg\")\n"
       << "import matplotlib.pyplot as plt\n\nhere = pathlib.Path(__file__).resolve().parent\n\n\n"
       << "def table(name):\n"
       << "    return np.atleast_1d(np.genfromtxt(here / name, delimiter=\",\", names=True, skip_header=1))\n\n\n";
    return os.str();
}

inline std::string stem(const std::string& file) { return std::filesystem::path(file).stem().string(); }

inline std::string heatmap_script(const artifact& a) {
    std::ostringstream os;
    os << "t = table(\"" << a.file << "\")\n"
       << "js = np.unique(t[\"j\"]).astype(int)\nks = np.unique(t[\"k\"]).astype(int)\n"
       << "E = np.zeros((len(js), len(ks)))\n"
       << "for j, k, e in zip(t[\"j\"], t[\"k\"], t[\"energy\"]):\n"
       << "    E[int(j) - js[0], int(k) - ks[0]] = e\n"
       << "floor = E.max() * 1e-16 if E.max() > 0 else 1e-300\n"
       << "fig, ax = plt.subplots()\n"
       << "im = ax.imshow(np.log10(np.maximum(E, floor)), origin=\"lower\", aspect=\"auto\",\n"
       << "               extent=(ks[0] - 0.5, ks[-1] + 0.5, js[0] - 0.5, js[-1] + 0.5))\n"
       << "fig.colorbar(im, label=\"log10 block energy\")\n"
       << "ax.set_xlabel(\"phase block k\")\nax.set_ylabel(\"frequency block j\")\n"
       << "fig.savefig(here / \"" << stem(a.file) << ".png\", dpi=150)\n";
    return os.str();
}

inline std::string growth_script(const std::string& shells, const std::string& fits) {
    std::ostringstream os;
    os << "s = table(\"" << shells << "\")\nf = table(\"" << fits << "\")\n"
       << "for row in f:\n"
       << "    a = int(row[\"alpha\"])\n"
       << "    sel = s[\"alpha\"] == a\n"
       << "    k = s[\"shell\"][sel]\n"
       << "    fig, ax = plt.subplots()\n"
       << "    ax.plot(k, np.log2(s[\"amplitude\"][sel]), \"o\", label=\"shell maxima\")\n"
       << "    ax.plot(k, row[\"intercept\"] + row[\"q\"] * k, \"-\", label=f\"slope {row['q']:.3f}\")\n"
       << "    ax.set_title(f\"|alpha| = {a}: fitted q = {row['q']:.3f}, predicted {row['predicted']:.3f}\")\n"
       << "    ax.set_xlabel(\"shell k\")\n    ax.set_ylabel(\"log2 max |d^alpha f|\")\n    ax.legend()\n"
       << "    fig.savefig(here / f\"growth_alpha{a}.png\", dpi=150)\n"
       << "    plt.close(fig)\n";
    return os.str();
}

inline std::string scan_script(const artifact& a) {
    std::ostringstream os;
    os << "threshold = " << format_double(a.meta.value("threshold", 0.0)) << "\n"
       << "J_lo = " << a.meta.value("J_lo", 2) << "\n"
       << "t = table(\"" << a.file << "\")\n"
       << "ns = np.unique(t[\"n\"])\nslopes = []\n"
       << "fig, (ax, bx) = plt.subplots(1, 2, figsize=(11, 4))\n"
       << "for n in ns:\n"
       << "    sel = t[\"n\"] == n\n"
       << "    J, D = t[\"J\"][sel], t[\"DJ\"][sel]\n"
       << "    ax.semilogy(J, D, \"-\" if n < threshold else \"--\", label=f\"n = {n:g}\")\n"
       << "    inc, Jd = np.diff(D), J[1:]\n"
       << "    ok = (inc > 0) & (Jd >= J_lo)\n"
       << "    slopes.append(np.polyfit(Jd[ok], np.log2(inc[ok]), 1)[0] if ok.sum() >= 2 else np.nan)\n"
       << "ax.set_xlabel(\"J\")\nax.set_ylabel(\"D_J(n)\")\nax.legend(fontsize=6, ncol=2)\n"
       << "bx.plot(ns, slopes, \"o-\")\nbx.axhline(0.0, color=\"grey\", lw=0.5)\n"
       << "bx.axvline(threshold, color=\"k\", ls=\":\", label=f\"2 s l / (-gamma) = {threshold:g}\")\n"
       << "bx.set_xlabel(\"n\")\nbx.set_ylabel(\"slope of log2 increments\")\nbx.legend()\n"
       << "fig.tight_layout()\n"
       << "fig.savefig(here / \"" << stem(a.file) << ".png\", dpi=150)\n";
    return os.str();
}

inline std::string sj_script(const artifact& a) {
    std::ostringstream os;
    os << "t = table(\"" << a.file << "\")\n"
       << "fig, (ax, bx) = plt.subplots(1, 2, figsize=(10, 4))\n"
       << "pos = t[\"S_J\"] > 0\n"
       << "ax.semilogy(t[\"J\"][pos], t[\"S_J\"][pos], \"o-\")\n"
       << "ax.set_xlabel(\"J\")\nax.set_ylabel(\"S_J\")\n"
       << "ax.set_title(\"" << a.meta.value("title", std::string(a.file)) << "\")\n"
       << "bx.plot(t[\"J\"], t[\"ratio\"], \"o-\", label=\"S_J / S_(J-1)\")\n";
    if (a.meta.contains("threshold"))
        os << "bx.axhline(" << format_double(a.meta["threshold"].get<double>())
           << ", color=\"k\", ls=\":\", label=\"2^(eps/2)\")\n";
    os << "bx.set_xlabel(\"J\")\nbx.legend()\nfig.tight_layout()\n"
       << "fig.savefig(here / \"" << stem(a.file) << ".png\", dpi=150)\n";
    return os.str();
}

} // namespace detail

// writes one script per plottable artifact next to the CSVs; returns their paths
inline std::vector<std::string> emit_plots(RunReport& r) {
    namespace fs = std::filesystem;
    std::vector<std::string> out;
    if (r.artifacts.empty()) {
        r.notes.push_back("no tabular artifacts in the report; no plot scripts written");
        return out;
    }
    const fs::path dir = r.output_dir;
    auto present = [&](const std::string& file) {
        if (fs::exists(dir / file)) return true;
        r.notes.push_back("missing artifact: " + file);
        return false;
    };
    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream os(dir / name, std::ios::binary);
        os << detail::script_prelude(r) << body;
        if (!os) {
            r.notes.push_back("cannot write plot script " + name);
            return;
        }
        out.push_back((dir / name).string());
    };
    std::string shells, fits;
    for (const auto& a : r.artifacts) {
        if (!present(a.file)) continue;
        if (a.kind == "blocks") write("plot_" + detail::stem(a.file) + ".py", detail::heatmap_script(a));
        else if (a.kind == "scan") write("plot_" + detail::stem(a.file) + ".py", detail::scan_script(a));
        else if (a.kind == "sj") write("plot_" + detail::stem(a.file) + ".py", detail::sj_script(a));
        else if (a.kind == "growth_shells") shells = a.file;
        else if (a.kind == "growth_fits") fits = a.file;
    }
    if (!shells.empty() && !fits.empty()) write("plot_growth.py", detail::growth_script(shells, fits));
    if (out.empty()) r.notes.push_back("no plot template applies to the artifacts of " + r.experiment);
    r.plots = out;
    return out;
}

inline void write_report(const RunReport& r) {
    std::ofstream os(std::filesystem::path(r.output_dir) / "report.json", std::ios::binary);
    os << r.to_json().dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write report.json in " + r.output_dir);
}

// runs the named experiment, writes CSV artifacts, plot scripts and report.json
inline RunReport run(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    rep.experiment = cfg.experiment;
    rep.seed = cfg.seed;
    rep.output_dir = cfg.output_dir;
    rep.config = cfg.effective;
    if (!is_experiment(cfg.experiment)) throw config_errors({"unknown experiment '" + cfg.experiment + "'; valid names: " + experiment_names()});
    try {
        fs::create_directories(cfg.output_dir);
    } catch (const std::exception& e) {
        rep.error = std::string("cannot create output directory: ") + e.what();
        return rep;
    }
    detail::session S(cfg, rep, cfg.output_dir);
    const auto& n = cfg.experiment;
    if (n == "partition-audit") detail::partition_audit(S);
    else if (n == "norm-equivalence") detail::norm_equivalence(S);
    else if (n == "rough-data-scan") detail::rough_data_scan(S);
    else if (n == "toy-dichotomy") detail::toy_dichotomy(S);
    else if (n == "growth-law") detail::growth_law(S);
    else if (n == "transport-gain") detail::transport_gain(S);
    else if (n == "collision-identities") detail::collision_identities(S);
    else if (n == "coercivity") detail::coercivity(S);
    emit_plots(rep);
    rep.wall_clock = detail::seconds_since(t0);
    try {
        write_report(rep);
    } catch (const std::exception& e) {
        if (rep.error.empty()) rep.error = e.what();
    }
    return rep;
}

} // namespace kolmo::lab
