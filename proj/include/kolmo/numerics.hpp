#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <thread>
#include <vector>

#include "error.hpp"

namespace kolmo {

struct quadrature_rule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const { return nodes.size(); }

    void append(const quadrature_rule& o) {
        nodes.insert(nodes.end(), o.nodes.begin(), o.nodes.end());
        weights.insert(weights.end(), o.weights.begin(), o.weights.end());
    }
};

// Golub-Welsch for the Jacobi weight (1-x)^a (1+x)^b on [-1, 1].
inline quadrature_rule gauss_jacobi(std::size_t n, double a, double b) {
    if (n == 0) throw config_error("quadrature needs at least one node");
    if (!(a > -1.0) || !(b > -1.0)) throw config_error("Jacobi exponents must exceed -1");
    Eigen::VectorXd diag(n);
    Eigen::VectorXd off(n > 1 ? n - 1 : 1);
    const double ab = a + b;
    for (std::size_t k = 0; k < n; ++k) {
        const double kk = static_cast<double>(k);
        const double t = 2.0 * kk + ab;
        if (k == 0)
            diag(0) = (b - a) / (ab + 2.0);
        else
            diag(k) = (b * b - a * a) / (t * (t + 2.0));
    }
    for (std::size_t k = 1; k < n; ++k) {
        const double kk = static_cast<double>(k);
        const double t = 2.0 * kk + ab;
        double num = 4.0 * kk * (kk + a) * (kk + b) * (kk + ab);
        double den = t * t * (t + 1.0) * (t - 1.0);
        off(k - 1) = std::sqrt(num / den);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    if (n == 1) {
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = diag(0);
        es.compute(m);
    } else {
        es.computeFromTridiagonal(diag, off.head(n - 1));
    }
    const double mu0 = std::exp((ab + 1.0) * std::log(2.0) + std::lgamma(a + 1.0) +
                                std::lgamma(b + 1.0) - std::lgamma(ab + 2.0));
    quadrature_rule q;
    q.nodes.resize(n);
    q.weights.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        q.nodes[k] = es.eigenvalues()(k);
        const double v0 = es.eigenvectors()(0, k);
        q.weights[k] = mu0 * v0 * v0;
    }
    return q;
}

inline quadrature_rule gauss_legendre(std::size_t n, double lo, double hi) {
    auto q = gauss_jacobi(n, 0.0, 0.0);
    const double half = 0.5 * (hi - lo);
    for (std::size_t k = 0; k < n; ++k) {
        q.nodes[k] = lo + half * (q.nodes[k] + 1.0);
        q.weights[k] *= half;
    }
    return q;
}

// int_0^R r^beta F(r) dr; weights carry r^beta
inline quadrature_rule gauss_radial_power(std::size_t n, double beta, double R) {
    auto q = gauss_jacobi(n, 0.0, beta);
    // t = (1+x)/2 in [0,1], r = R t, r^beta dr = R^{beta+1} 2^{-beta-1} (1+x)^beta dx
    const double scale = std::pow(R, beta + 1.0) * std::pow(2.0, -beta - 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        q.nodes[k] = R * 0.5 * (1.0 + q.nodes[k]);
        q.weights[k] *= scale;
    }
    return q;
}

// composite Gauss-Legendre with weights multiplied by r^beta
inline quadrature_rule weighted_legendre(std::size_t n, double lo, double hi, double beta) {
    auto q = gauss_legendre(n, lo, hi);
    for (std::size_t k = 0; k < n; ++k) q.weights[k] *= std::pow(q.nodes[k], beta);
    return q;
}

inline quadrature_rule trapezoid_circle(std::size_t n) {
    quadrature_rule q;
    q.nodes.resize(n);
    q.weights.assign(n, 2.0 * M_PI / static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) q.nodes[k] = 2.0 * M_PI * static_cast<double>(k) / n;
    return q;
}

struct line_fit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0; // rms
};

inline line_fit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw insufficient_data("line fit needs two points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw insufficient_data("degenerate abscissae in line fit");
    line_fit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double rr = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double e = y[i] - f.intercept - f.slope * x[i];
        rr += e * e;
    }
    f.residual = std::sqrt(rr / n);
    return f;
}

inline std::size_t worker_count() {
    auto h = std::thread::hardware_concurrency();
    return h == 0 ? 1 : h;
}

// Static partition over [0, n); fn(i) must only write slot i, so results do
// not depend on the worker count.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace kolmo
