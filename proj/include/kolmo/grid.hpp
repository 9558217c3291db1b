#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"

namespace kolmo {

using point = std::array<double, 3>;

// Periodic box [-L, L)^d with N points per axis.
class BoxGrid {
public:
    BoxGrid() = default;

    BoxGrid(int dim, double half_length, std::size_t points)
        : dim_(dim), half_length_(half_length), points_(points) {
        if (dim < 1 || dim > 3)
            throw config_error("grid dimension must be 1, 2 or 3, got " + std::to_string(dim));
        if (!(half_length > 0.0) || !std::isfinite(half_length))
            throw config_error("grid half-length must be positive");
        if (points < 8 || (points & (points - 1)) != 0)
            throw config_error("points per axis must be a power of two >= 8, got " +
                               std::to_string(points));
        size_ = 1;
        for (int a = 0; a < dim; ++a) size_ *= points;
    }

    int dim() const { return dim_; }
    double half_length() const { return half_length_; }
    std::size_t points() const { return points_; }
    std::size_t size() const { return size_; }

    double spacing() const { return 2.0 * half_length_ / static_cast<double>(points_); }
    double cell_volume() const { return std::pow(spacing(), dim_); }
    double mode_spacing() const { return std::numbers::pi / half_length_; }
    double nyquist() const { return mode_spacing() * static_cast<double>(points_ / 2); }

    double coordinate(std::size_t i) const {
        return -half_length_ + spacing() * static_cast<double>(i);
    }

    // signed index in {-N/2, ..., N/2-1}
    std::int64_t signed_mode(std::size_t k) const {
        auto n = static_cast<std::int64_t>(points_);
        auto kk = static_cast<std::int64_t>(k);
        return kk < n / 2 ? kk : kk - n;
    }
    double frequency(std::size_t k) const {
        return mode_spacing() * static_cast<double>(signed_mode(k));
    }

    std::size_t flat(const std::array<std::size_t, 3>& idx) const {
        std::size_t f = 0;
        for (int a = 0; a < dim_; ++a) f = f * points_ + idx[a];
        return f;
    }

    std::array<std::size_t, 3> unflatten(std::size_t f) const {
        std::array<std::size_t, 3> idx{0, 0, 0};
        for (int a = dim_ - 1; a >= 0; --a) {
            idx[a] = f % points_;
            f /= points_;
        }
        return idx;
    }

    point position(std::size_t f) const {
        auto idx = unflatten(f);
        point p{0, 0, 0};
        for (int a = 0; a < dim_; ++a) p[a] = coordinate(idx[a]);
        return p;
    }

    point wavevector(std::size_t f) const {
        auto idx = unflatten(f);
        point p{0, 0, 0};
        for (int a = 0; a < dim_; ++a) p[a] = frequency(idx[a]);
        return p;
    }

    std::vector<double> radii() const {
        std::vector<double> r(size_);
        for (std::size_t f = 0; f < size_; ++f) {
            auto p = position(f);
            r[f] = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        }
        return r;
    }

    std::vector<double> frequency_radii() const {
        std::vector<double> r(size_);
        for (std::size_t f = 0; f < size_; ++f) {
            auto p = wavevector(f);
            r[f] = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        }
        return r;
    }

    bool operator==(const BoxGrid& o) const {
        return dim_ == o.dim_ && half_length_ == o.half_length_ && points_ == o.points_;
    }

private:
    int dim_ = 1;
    double half_length_ = 1.0;
    std::size_t points_ = 8;
    std::size_t size_ = 8;
};

inline double japanese(double r) { return std::sqrt(1.0 + r * r); }

} // namespace kolmo
