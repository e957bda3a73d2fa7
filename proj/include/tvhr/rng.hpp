#ifndef TVHR_RNG_HPP
#define TVHR_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>

namespace tvhr {

// Counter-based stream RNG (Philox 4x32-10). Each (seed, stream) pair owns a
// disjoint 2^64 counter space, so chains drawing from their own stream give
// identical results no matter how they are scheduled.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream) {
        const std::uint64_t k = splitmix64(splitmix64(seed) + 0x9E3779B97F4A7C15ULL);
        key_[0] = static_cast<std::uint32_t>(k);
        key_[1] = static_cast<std::uint32_t>(k >> 32);
        stream_[0] = static_cast<std::uint32_t>(stream);
        stream_[1] = static_cast<std::uint32_t>(stream >> 32);
    }

    std::uint64_t next_u64() {
        if (buf_pos_ >= 2) refill();
        return buf_[buf_pos_++];
    }

    // uniform on the open interval (0,1), 52-bit resolution
    double runif() {
        const std::uint64_t u = next_u64();
        return (static_cast<double>(u >> 12) + 0.5) * 0x1.0p-52;
    }

    double runif(double a, double b) { return a + (b - a) * runif(); }

    // standard normal via Box-Muller (two uniforms per draw)
    double rnorm() {
        const double u1 = runif();
        const double u2 = runif();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double rnorm(double mu, double sd) { return mu + sd * rnorm(); }

    // exponential with rate 1
    double rexp() { return -std::log(runif()); }

    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return next_u64(); }

  private:
    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    static void philox_round(std::uint32_t c[4], const std::uint32_t k[2]) {
        const std::uint64_t m0 = 0xD2511F53ULL * c[0];
        const std::uint64_t m1 = 0xCD9E8D57ULL * c[2];
        const std::uint32_t n0 = static_cast<std::uint32_t>(m1 >> 32) ^ c[1] ^ k[0];
        const std::uint32_t n1 = static_cast<std::uint32_t>(m1);
        const std::uint32_t n2 = static_cast<std::uint32_t>(m0 >> 32) ^ c[3] ^ k[1];
        const std::uint32_t n3 = static_cast<std::uint32_t>(m0);
        c[0] = n0;
        c[1] = n1;
        c[2] = n2;
        c[3] = n3;
    }

    void refill() {
        std::uint32_t c[4] = {static_cast<std::uint32_t>(counter_),
                              static_cast<std::uint32_t>(counter_ >> 32),
                              stream_[0], stream_[1]};
        std::uint32_t k[2] = {key_[0], key_[1]};
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                k[0] += 0x9E3779B9u;
                k[1] += 0xBB67AE85u;
            }
            philox_round(c, k);
        }
        buf_[0] = (static_cast<std::uint64_t>(c[1]) << 32) | c[0];
        buf_[1] = (static_cast<std::uint64_t>(c[3]) << 32) | c[2];
        buf_pos_ = 0;
        ++counter_;
    }

    std::uint32_t key_[2];
    std::uint32_t stream_[2];
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> buf_{};
    int buf_pos_ = 2;
};

}  // namespace tvhr

#endif
