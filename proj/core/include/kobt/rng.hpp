#pragma once

#include <cstdint>
#include <vector>

namespace kobt {

/// Counter-based random stream keyed by (master_seed, stream_id).
///
/// The draw sequence is a pure function of the key: identical keys give
/// identical sequences on every platform and thread schedule, and distinct
/// stream ids give statistically independent streams. Parallel work derives
/// one stream per unit of work instead of sharing a generator.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Next raw 64-bit word (splitmix64 over the keyed counter).
    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double();

    /// Standard normal deviate (Box-Muller; second value cached).
    double next_normal();

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n);

    /// Independent child stream; a pure function of this stream's key and
    /// `substream`, not of how many values were drawn.
    RngStream derive(std::uint64_t substream) const;

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// First `count` elements of a shuffled [0, n) index range
    /// (partial Fisher-Yates), in draw order.
    std::vector<int> sample_without_replacement(int n, int count);

    /// Key mixing used for stream construction; exposed so configs can
    /// carry derived 64-bit seeds.
    static std::uint64_t mix_key(std::uint64_t master_seed, std::uint64_t stream_id);

private:
    std::uint64_t master_seed_;
    std::uint64_t stream_id_;
    std::uint64_t state_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace kobt
