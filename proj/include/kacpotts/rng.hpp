#ifndef KACPOTTS_RNG_HPP
#define KACPOTTS_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace kacpotts {

// Counter-based randomness: every draw is a pure function of a key built from
// (master seed, named substream indices) and a counter. Any schedule that
// evaluates the same keys gets the same numbers.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (auto p : parts) {
        h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    }
    return h;
}

/// Uniform double in the open interval (0,1).
constexpr double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double gumbel(std::uint64_t bits) {
    return -std::log(-std::log(to_open_unit(bits)));
}

/// Satisfies UniformRandomBitGenerator so it plugs into <random> distributions.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng() = default;
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return splitmix64(key_ ^ splitmix64(counter_++)); }

    double uniform() { return to_open_unit((*this)()); }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}

#endif
