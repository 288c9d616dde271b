#pragma once

// Named random streams derived from one master seed. Every consumer (data
// generation, client sampling per round, batching per client and round) owns
// its own generator, so results do not depend on execution order.

#include <cstdint>
#include <random>
#include <string_view>

namespace aaggff {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class StreamFactory {
public:
    explicit StreamFactory(std::uint64_t master_seed) : master_(master_seed) {}

    std::uint64_t key(std::string_view name, std::uint64_t a = 0, std::uint64_t b = 0) const {
        std::uint64_t h = splitmix64(master_ ^ fnv1a(name));
        h = splitmix64(h ^ splitmix64(a + 0x632be59bd9b4e019ULL));
        h = splitmix64(h ^ splitmix64(b + 0x85157af5ULL));
        return h;
    }

    Rng stream(std::string_view name, std::uint64_t a = 0, std::uint64_t b = 0) const {
        return Rng(key(name, a, b));
    }

    std::uint64_t master() const noexcept { return master_; }

private:
    std::uint64_t master_;
};

}  // namespace aaggff
