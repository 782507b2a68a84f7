#pragma once

#include <cstddef>
#include <cstdint>

namespace mfsmp {

/// Counter-based standard normal generator: the value depends only on
/// (seed, particle, step, component), never on evaluation order.
///
/// With antithetic sampling, odd particles reuse the draw of the preceding
/// even particle with the sign flipped.
class NoiseSource {
public:
    NoiseSource(std::uint64_t seed, bool antithetic) : seed_(seed), antithetic_(antithetic) {}

    double normal(std::size_t particle, std::size_t step, std::size_t component) const;

    std::uint64_t seed() const { return seed_; }
    bool antithetic() const { return antithetic_; }

private:
    std::uint64_t seed_;
    bool antithetic_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent stream seed from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t label);

}  // namespace mfsmp
