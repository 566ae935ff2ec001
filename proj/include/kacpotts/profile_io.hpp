#ifndef KACPOTTS_PROFILE_IO_HPP
#define KACPOTTS_PROFILE_IO_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "error.hpp"
#include "potts.hpp"
#include "profiles.hpp"

namespace kacpotts {

// Binary layout (all integers and doubles little-endian):
//   magic[4]  "KPDP" (density profile) or "KPCF" (configuration)
//   u32 version = 1, u32 d, u32 n, u32 q
//   profile:        n^d * q doubles, cell-major in lexicographic site order
//   configuration:  n^d u8 domain mask, then one i32 color per site (-1 inactive)

constexpr std::uint32_t profile_format_version = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(b.begin(), b.end());
    }
    os.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> b;
    if (!is.read(reinterpret_cast<char*>(b.data()), sizeof(T))) {
        throw InvalidArgument("binary profile: truncated input");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(b.begin(), b.end());
    }
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}

inline void put_header(std::ostream& os, const char* magic, const TorusGrid& g, int q) {
    os.write(magic, 4);
    put_le<std::uint32_t>(os, profile_format_version);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.n()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(q));
}

inline std::pair<TorusGrid, int> get_header(std::istream& is, const char* magic) {
    char m[4];
    if (!is.read(m, 4) || std::memcmp(m, magic, 4) != 0) {
        throw InvalidArgument("binary profile: bad magic bytes");
    }
    if (get_le<std::uint32_t>(is) != profile_format_version) {
        throw InvalidArgument("binary profile: unsupported version");
    }
    auto d = static_cast<int>(get_le<std::uint32_t>(is));
    auto n = static_cast<int>(get_le<std::uint32_t>(is));
    auto q = static_cast<int>(get_le<std::uint32_t>(is));
    return {TorusGrid(d, n), q};
}

}

inline void write_profile_binary(std::ostream& os, const DensityProfile& p) {
    detail::put_header(os, "KPDP", p.mesh(), p.q());
    for (double v : p.values()) {
        detail::put_le<double>(os, v);
    }
}

inline DensityProfile read_profile_binary(std::istream& is) {
    auto [mesh, q] = detail::get_header(is, "KPDP");
    std::vector<double> v(mesh.size() * static_cast<std::size_t>(q));
    for (auto& x : v) {
        x = detail::get_le<double>(is);
    }
    return DensityProfile(mesh, q, std::move(v));
}

inline void write_configuration_binary(std::ostream& os, const ColorConfiguration& cfg) {
    const TorusGrid& g = cfg.grid();
    detail::put_header(os, "KPCF", g, cfg.num_colors());
    std::vector<std::int32_t> color(g.size(), -1);
    auto sites = cfg.domain().sites();
    for (std::size_t i = 0; i < sites.size(); ++i) {
        color[sites[i]] = cfg.colors()[i];
    }
    for (auto c : color) {
        detail::put_le<std::uint8_t>(os, c >= 0 ? 1 : 0);
    }
    for (auto c : color) {
        detail::put_le<std::int32_t>(os, c);
    }
}

inline ColorConfiguration read_configuration_binary(std::istream& is) {
    auto [g, q] = detail::get_header(is, "KPCF");
    std::vector<std::uint8_t> mask(g.size());
    for (auto& m : mask) {
        m = detail::get_le<std::uint8_t>(is);
    }
    std::vector<std::size_t> sites;
    std::vector<Color> colors;
    for (std::size_t x = 0; x < g.size(); ++x) {
        auto c = detail::get_le<std::int32_t>(is);
        if (mask[x]) {
            sites.push_back(x);
            colors.push_back(c);
        }
    }
    return ColorConfiguration(Subvolume(g, std::move(sites)), std::move(colors), q);
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// CSV with header cell,color,value; the mesh comes from the caller.
inline void write_profile_csv(std::ostream& os, const DensityProfile& p) {
    os << "cell,color,value\r\n";
    for (std::size_t c = 0; c < p.cells(); ++c) {
        for (int a = 0; a < p.q(); ++a) {
            os << c << ',' << a << ',' << format_double(p.at(c, a)) << "\r\n";
        }
    }
}

inline DensityProfile read_profile_csv(std::istream& is, const TorusGrid& mesh, int q) {
    std::string line;
    if (!std::getline(is, line)) {
        throw InvalidArgument("profile csv: empty input");
    }
    std::vector<double> v(mesh.size() * static_cast<std::size_t>(q), 0.0);
    std::vector<bool> seen(v.size(), false);
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        std::size_t cell = 0;
        int color = 0;
        double value = 0.0;
        char c1 = 0;
        char c2 = 0;
        if (!(ls >> cell >> c1 >> color >> c2 >> value) || c1 != ',' || c2 != ',') {
            throw InvalidArgument("profile csv: malformed row '" + line + "'");
        }
        require(cell < mesh.size() && color >= 0 && color < q, "profile csv: index out of range");
        std::size_t k = cell * static_cast<std::size_t>(q) + static_cast<std::size_t>(color);
        v[k] = value;
        seen[k] = true;
    }
    for (bool s : seen) {
        require(s, "profile csv: missing entries");
    }
    return DensityProfile(mesh, q, std::move(v));
}

}

#endif
