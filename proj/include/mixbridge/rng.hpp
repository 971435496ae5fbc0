#pragma once

#include <cstdint>

// Deterministic RNG, fixed across platforms so seeded runs are reproducible
// bit-for-bit. The exact algorithms, for anyone re-implementing the streams:
//
//   state init : four rounds of splitmix64 over the seed -> s[0..3]
//   next_u64() : xoshiro256** (Blackman & Vigna)
//   uniform()  : (next_u64() >> 11) * 2^-53            in [0, 1)
//   normal()   : Box-Muller, z = sqrt(-2 ln u1) * cos(2 pi u2),
//                u1 = ((next_u64() >> 11) + 1) * 2^-53 in (0, 1], u2 = uniform();
//                two u64 draws per call, no caching of the sine branch
//   uniform_index(n): rejection-free bounded draw via 128-bit multiply
//                (Lemire), biased by < 2^-64 — acceptable for n << 2^64
//   derive_seed(seed, salt): splitmix64(splitmix64 state = seed ^ salt),
//                used to fork independent streams per purpose
namespace mixbridge {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t s = seed ^ (0x6a09e667f3bcc909ULL + salt * 0x9e3779b97f4a7c15ULL);
    splitmix64_next(s);
    return splitmix64_next(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64_next(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // standard normal
    double normal();

    // uniform in {0, 1, ..., n-1}; n >= 1
    std::uint64_t uniform_index(std::uint64_t n) {
        const unsigned __int128 m =
            static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
        return static_cast<std::uint64_t>(m >> 64);
    }

    Rng fork(std::uint64_t salt) const { return Rng(derive_seed(s_[0] ^ s_[3], salt)); }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
};

}  // namespace mixbridge
