#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "grid.hpp"

namespace kolmo {

using cplx = std::complex<double>;

namespace detail {

// Plans are created once per (dim, n, sign) and only ever executed through
// the new-array interface, so concurrent callers share them read-only.
class plan_cache {
public:
    static plan_cache& instance() {
        static plan_cache c;
        return c;
    }

    fftw_plan get(int dim, int n, int sign) {
        std::lock_guard<std::mutex> lock(mu_);
        auto key = std::make_tuple(dim, n, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::size_t total = 1;
        int dims[3];
        for (int a = 0; a < dim; ++a) {
            dims[a] = n;
            total *= static_cast<std::size_t>(n);
        }
        auto* in = fftw_alloc_complex(total);
        auto* out = fftw_alloc_complex(total);
        fftw_plan p = fftw_plan_dft(dim, dims, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        fftw_free(out);
        plans_.emplace(key, p);
        return p;
    }

    ~plan_cache() {
        for (auto& [k, p] : plans_) fftw_destroy_plan(p);
    }

private:
    std::mutex mu_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

} // namespace detail

// Unitary DFT: both directions scaled by N^{-d/2}.
inline std::vector<cplx> dft(const BoxGrid& g, const std::vector<cplx>& in, bool forward) {
    std::vector<cplx> out(in.size());
    auto plan = detail::plan_cache::instance().get(g.dim(), static_cast<int>(g.points()),
                                                   forward ? FFTW_FORWARD : FFTW_BACKWARD);
    std::vector<cplx> src(in);
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(src.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    const double scale = 1.0 / std::sqrt(static_cast<double>(g.size()));
    for (auto& z : out) z *= scale;
    return out;
}

} // namespace kolmo
