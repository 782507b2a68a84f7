#include "mfsmp/noise.hpp"

#include "mfsmp/core.hpp"

#include <cmath>
#include <numbers>
#include <omp.h>

namespace mfsmp {

namespace {
int g_default_threads = 0;
}

void set_thread_count(int threads) {
    if (threads <= 0) {
        if (g_default_threads > 0) omp_set_num_threads(g_default_threads);
        return;
    }
    if (g_default_threads == 0) g_default_threads = omp_get_max_threads();
    omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t label) {
    return splitmix64(splitmix64(base) ^ (label * 0xd1342543de82ef95ULL));
}

double NoiseSource::normal(std::size_t particle, std::size_t step, std::size_t component) const {
    double sign = 1.0;
    if (antithetic_ && (particle & 1U)) {
        particle -= 1;
        sign = -1.0;
    }
    std::uint64_t h = splitmix64(seed_);
    h = splitmix64(h ^ static_cast<std::uint64_t>(particle));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(step) * 0x632be59bd9b4e019ULL));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(component) * 0x85157af5ULL));
    const std::uint64_t g = splitmix64(h);
    // 53-bit uniforms; u1 in (0, 1] keeps the log finite.
    const double u1 = (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(g >> 11) * 0x1.0p-53;
    return sign * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace mfsmp
