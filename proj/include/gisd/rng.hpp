#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gisd {

/// Seeded random stream. Every consumer derives its own stream from the run's
/// root seed plus a name and up to two indices, so components (env, skills,
/// policy-init, batch-sampling) can be varied and parallelized independently.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng stream(std::uint64_t root, std::string_view name,
                      std::uint64_t a = 0, std::uint64_t b = 0);

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    int uniform_int(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

inline Rng Rng::stream(std::uint64_t root, std::string_view name,
                       std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(root), hi(root), lo(h), hi(h), lo(a), hi(a), lo(b), hi(b)};
    std::mt19937_64 eng(seq);
    return Rng(eng());
}

}  // namespace gisd
