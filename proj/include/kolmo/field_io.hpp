#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>

#include "field.hpp"

namespace kolmo {

// Flat binary container:
//   "KOLMOFLD" | u32 version | u32 dim | u64 N | f64 L | u8 rep | u8 real | 6 pad
//   then N^d complex64 values (float32 re, float32 im), little endian.
namespace io {

inline constexpr char magic[8] = {'K', 'O', 'L', 'M', 'O', 'F', 'L', 'D'};
inline constexpr std::uint32_t version = 1;

template <class T>
void put_le(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw contract_violation("truncated field container");
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

} // namespace io

inline void write_field(std::ostream& os, const SpectralField& f) {
    const auto& g = f.grid();
    os.write(io::magic, 8);
    io::put_le<std::uint32_t>(os, io::version);
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
    io::put_le<std::uint64_t>(os, g.points());
    io::put_le<double>(os, g.half_length());
    io::put_le<std::uint8_t>(os, f.is_physical() ? 0 : 1);
    io::put_le<std::uint8_t>(os, f.real_valued() ? 1 : 0);
    for (int i = 0; i < 6; ++i) io::put_le<std::uint8_t>(os, 0);
    for (const auto& z : f.samples()) {
        io::put_le<float>(os, static_cast<float>(z.real()));
        io::put_le<float>(os, static_cast<float>(z.imag()));
    }
}

inline SpectralField read_field(std::istream& is) {
    char m[8];
    is.read(m, 8);
    if (!is || std::memcmp(m, io::magic, 8) != 0) throw contract_violation("not a field container");
    auto ver = io::get_le<std::uint32_t>(is);
    if (ver != io::version) throw contract_violation("unsupported container version");
    auto dim = io::get_le<std::uint32_t>(is);
    auto n = io::get_le<std::uint64_t>(is);
    auto L = io::get_le<double>(is);
    auto rep = io::get_le<std::uint8_t>(is);
    auto real = io::get_le<std::uint8_t>(is);
    for (int i = 0; i < 6; ++i) io::get_le<std::uint8_t>(is);
    BoxGrid g(static_cast<int>(dim), L, static_cast<std::size_t>(n));
    std::vector<cplx> s(g.size());
    for (auto& z : s) {
        float re = io::get_le<float>(is);
        float im = io::get_le<float>(is);
        z = cplx(re, im);
    }
    return SpectralField(g, std::move(s), rep == 0 ? representation::physical : representation::frequency,
                         real != 0);
}

inline void save_field(const std::string& path, const SpectralField& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw error("cannot open " + path);
    write_field(os, f);
}

inline SpectralField load_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw error("cannot open " + path);
    return read_field(is);
}

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// |f| along one axis through the grid centre (other coordinates at v = 0)
inline void write_slice_csv(std::ostream& os, const SpectralField& f, int axis = 0) {
    const auto& g = f.grid();
    if (axis < 0 || axis >= g.dim()) throw contract_violation("slice axis out of range");
    os << (f.is_physical() ? "v" : "xi") << ",abs\n";
    std::array<std::size_t, 3> idx{g.points() / 2, g.points() / 2, g.points() / 2};
    for (std::size_t i = 0; i < g.points(); ++i) {
        idx[axis] = i;
        double x = f.is_physical() ? g.coordinate(i) : g.frequency(i);
        os << format_double(x) << ',' << format_double(std::abs(f[g.flat(idx)])) << '\n';
    }
}

// |f| on the plane spanned by the first two axes (d >= 2)
inline void write_plane_csv(std::ostream& os, const SpectralField& f) {
    const auto& g = f.grid();
    if (g.dim() < 2) throw contract_violation("plane export needs d >= 2");
    os << "x0,x1,abs\n";
    std::array<std::size_t, 3> idx{0, 0, g.points() / 2};
    for (std::size_t a = 0; a < g.points(); ++a)
        for (std::size_t b = 0; b < g.points(); ++b) {
            idx[0] = a;
            idx[1] = b;
            double x0 = f.is_physical() ? g.coordinate(a) : g.frequency(a);
            double x1 = f.is_physical() ? g.coordinate(b) : g.frequency(b);
            os << format_double(x0) << ',' << format_double(x1) << ','
               << format_double(std::abs(f[g.flat(idx)])) << '\n';
        }
}

} // namespace kolmo
