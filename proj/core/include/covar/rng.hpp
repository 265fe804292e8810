#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace covar {

// Counter-based random number generation. Every stream is identified by a
// 64-bit key derived from the root seed through `fold` chains; the block
// counter only tracks the position inside a stream. A sample is therefore a
// pure function of (root seed, lineage, position), independent of thread
// scheduling and of how much any other stream consumed.

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

// Derives a child stream key. Not commutative: fold(fold(s,a),b) != fold(fold(s,b),a).
constexpr std::uint64_t fold(std::uint64_t key, std::uint64_t tag) {
    return mix64(key + kGoldenGamma * (tag + 1));
}

// Stream purpose tags. Each consumer folds its tag before any index so that
// distinct phases of one estimate never share a stream.
namespace stream_tag {
inline constexpr std::uint64_t kOuterScenario = 0x01;
inline constexpr std::uint64_t kInnerPath = 0x02;
inline constexpr std::uint64_t kStageOne = 0x03;
inline constexpr std::uint64_t kStageTwo = 0x04;
inline constexpr std::uint64_t kToyPair = 0x05;
inline constexpr std::uint64_t kCvFolds = 0x06;
inline constexpr std::uint64_t kMlpInit = 0x07;
inline constexpr std::uint64_t kMlpShuffle = 0x08;
inline constexpr std::uint64_t kProbe = 0x09;
inline constexpr std::uint64_t kModelGen = 0x0A;
inline constexpr std::uint64_t kReference = 0x0B;
inline constexpr std::uint64_t kReplication = 0x0C;
inline constexpr std::uint64_t kTraining = 0x0D;
inline constexpr std::uint64_t kRow = 0x0E;
}  // namespace stream_tag

// Philox-4x32-10 block function. Key selects the stream, counter the block.
inline std::array<std::uint32_t, 4> philox4x32(std::uint64_t key, std::uint64_t counter) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kBump0 = 0x9E3779B9u;
    constexpr std::uint32_t kBump1 = 0xBB67AE85u;

    std::uint32_t c0 = static_cast<std::uint32_t>(counter);
    std::uint32_t c1 = static_cast<std::uint32_t>(counter >> 32);
    std::uint32_t c2 = 0;
    std::uint32_t c3 = 0;
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);

    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c0;
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c2;
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        c0 = hi1 ^ c1 ^ k0;
        c1 = lo1;
        c2 = hi0 ^ c3 ^ k1;
        c3 = lo0;
        k0 += kBump0;
        k1 += kBump1;
    }
    return {c0, c1, c2, c3};
}

// Sequential view over one Philox stream. Cheap to construct; no shared state.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t key) : key_(key) {}

    std::uint64_t key() const { return key_; }

    std::uint32_t next_u32() {
        if (pos_ == 4) {
            block_ = philox4x32(key_, counter_++);
            pos_ = 0;
        }
        return block_[pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on the open interval (0,1); never returns an exact endpoint.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; pairs are cached so draw order is fixed.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n) by rejection-free Lemire reduction on 64 bits.
    std::uint64_t below(std::uint64_t n) {
        // Bias is ~2^-64 relative; acceptable for fold/shuffle use.
        const std::uint64_t x = next_u64();
        unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// FNV-1a over raw bytes; used for content keys (row hashing, scenario tags).
inline std::uint64_t hash_bytes(const void* data, std::size_t n,
                                std::uint64_t h = 0xCBF29CE484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace covar
