#pragma once

// Counter-based random numbers (Philox4x32-10).  A sample's noise is a pure
// function of (seed, stream, sample index), so estimates do not depend on how
// samples are scheduled across threads.

#include <array>
#include <cmath>
#include <cstdint>

#include "isdiff/linalg.hpp"

namespace isdiff {

namespace detail {

constexpr uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

inline uint32_t mulhi32(uint32_t a, uint32_t b) {
    return static_cast<uint32_t>((static_cast<uint64_t>(a) * b) >> 32);
}

inline std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 2> key,
                                          std::array<uint32_t, 4> ctr) {
    for (int round = 0; round < 10; ++round) {
        uint32_t lo0 = kPhiloxM4x32A * ctr[0];
        uint32_t hi0 = mulhi32(kPhiloxM4x32A, ctr[0]);
        uint32_t lo1 = kPhiloxM4x32B * ctr[2];
        uint32_t hi1 = mulhi32(kPhiloxM4x32B, ctr[2]);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW32A;
        key[1] += kPhiloxW32B;
    }
    return ctr;
}

// uniform in (0,1), never exactly 0 or 1
inline double u64_to_unit(uint64_t x) {
    // 52 bits so the +0.5 is exact; the result lies strictly inside (0, 1)
    return (static_cast<double>(x >> 12) + 0.5) * 0x1.0p-52;
}

}  // namespace detail

// Stream of standard normals identified by (seed, stream, sample).  Values
// come from Philox blocks indexed by an internal 64-bit counter, turned into
// normals with Box-Muller.  sample and stream must fit in 32 bits.
class NormalStream {
  public:
    NormalStream(uint64_t seed, uint64_t stream, uint64_t sample)
        : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
          sample_(static_cast<uint32_t>(sample)),
          stream_(static_cast<uint32_t>(stream)) {}

    double next() {
        if (have_) {
            have_ = false;
            return spare_;
        }
        auto block = detail::philox4x32(
            key_, {static_cast<uint32_t>(block_), static_cast<uint32_t>(block_ >> 32),
                   sample_, stream_});
        ++block_;
        uint64_t a = (static_cast<uint64_t>(block[0]) << 32) | block[1];
        uint64_t b = (static_cast<uint64_t>(block[2]) << 32) | block[3];
        double u1 = detail::u64_to_unit(a);
        double u2 = detail::u64_to_unit(b);
        double r = std::sqrt(-2.0 * std::log(u1));
        double phi = 2.0 * M_PI * u2;
        spare_ = r * std::sin(phi);
        have_ = true;
        return r * std::cos(phi);
    }

    void fill(Vec& out) {
        for (double& v : out) v = next();
    }

  private:
    std::array<uint32_t, 2> key_;
    uint32_t sample_;
    uint32_t stream_;
    uint64_t block_ = 0;
    double spare_ = 0.0;
    bool have_ = false;
};

}  // namespace isdiff
