#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace mfsmp {

using ConstVec = std::span<const double>;
using MutVec = std::span<double>;

/// Raised when grids, dimensions or seeds of two objects that must agree do not.
class MismatchError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine cannot produce a meaningful result
/// (non-finite state, rank-deficient regression).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when coefficient functions return non-finite values on probes.
class IllPosedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caps the number of worker threads used by particle loops (0 restores the
/// runtime default). Results never depend on this value.
void set_thread_count(int threads);
int thread_count();

}  // namespace mfsmp
