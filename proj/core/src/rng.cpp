#include "kobt/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kobt {

namespace {

// 64-bit avalanche finalizer (splitmix64 / murmur3 style).
inline std::uint64_t avalanche(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace

std::uint64_t RngStream::mix_key(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::uint64_t a = avalanche(master_seed + kGolden);
    std::uint64_t b = avalanche(stream_id ^ 0xda3e39cb94b95bdbULL);
    return avalanche(a ^ (b + kGolden + (a << 6) + (a >> 2)));
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_seed_(master_seed),
      stream_id_(stream_id),
      state_(mix_key(master_seed, stream_id)) {}

std::uint64_t RngStream::next_u64() {
    state_ += kGolden;
    return avalanche(state_);
}

double RngStream::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    // u1 in (0,1] so log() is finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::next_below: n must be > 0");
    // Rejection sampling to avoid modulo bias.
    std::uint64_t threshold = (0ULL - n) % n;
    for (;;) {
        std::uint64_t x = next_u64();
        if (x >= threshold) return x % n;
    }
}

RngStream RngStream::derive(std::uint64_t substream) const {
    return RngStream(mix_key(master_seed_, stream_id_), substream);
}

std::vector<int> RngStream::sample_without_replacement(int n, int count) {
    if (count > n) throw std::invalid_argument("sample_without_replacement: count > n");
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < count; ++i) {
        std::size_t j = static_cast<std::size_t>(i) +
                        static_cast<std::size_t>(next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    idx.resize(static_cast<std::size_t>(count));
    return idx;
}

}  // namespace kobt
