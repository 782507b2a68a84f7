#pragma once

#include "mfsmp/core.hpp"

#include <memory>
#include <vector>

namespace mfsmp {

/// Least-squares projection onto monomials (total degree <= degree) of the
/// standardized sample coordinates. Coordinates with zero spread are dropped,
/// so a degenerate sample reduces to the constant basis.
class Regression {
public:
    /// `samples` holds `count` points of dimension `dim`, point-major.
    Regression(ConstVec samples, std::size_t count, std::size_t dim, std::size_t degree);
    ~Regression();
    Regression(Regression&&) noexcept;
    Regression& operator=(Regression&&) noexcept;

    std::size_t basis_size() const;

    /// Fitted values of the projection of `target` (one value per sample).
    void project(ConstVec target, MutVec fitted) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mfsmp
