#include "mfsmp/regression.hpp"

#include <Eigen/Dense>

#include <cmath>

#include <fmt/format.h>

namespace mfsmp {

struct Regression::Impl {
    Eigen::MatrixXd design;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
};

namespace {

// All exponent vectors over `dim` coordinates with total degree <= degree.
void exponents(std::size_t dim, std::size_t degree, std::vector<unsigned>& current, std::size_t pos,
               std::vector<std::vector<unsigned>>& out) {
    if (pos == dim) {
        out.push_back(current);
        return;
    }
    unsigned used = 0;
    for (std::size_t k = 0; k < pos; ++k) used += current[k];
    for (unsigned e = 0; used + e <= degree; ++e) {
        current[pos] = e;
        exponents(dim, degree, current, pos + 1, out);
    }
    current[pos] = 0;
}

}  // namespace

Regression::Regression(ConstVec samples, std::size_t count, std::size_t dim, std::size_t degree)
    : impl_(std::make_unique<Impl>()) {
    if (degree < 1) throw std::invalid_argument("regression basis degree must be >= 1");
    if (samples.size() != count * dim) throw MismatchError("regression sample array has wrong size");

    std::vector<std::size_t> kept;
    std::vector<double> centre, scale;
    for (std::size_t c = 0; c < dim; ++c) {
        double mu = 0.0;
        for (std::size_t i = 0; i < count; ++i) mu += samples[i * dim + c];
        mu /= static_cast<double>(count);
        double ss = 0.0;
        for (std::size_t i = 0; i < count; ++i) ss += (samples[i * dim + c] - mu) * (samples[i * dim + c] - mu);
        const double sd = std::sqrt(ss / static_cast<double>(count));
        if (sd > 1e-12 * (1.0 + std::abs(mu))) {
            kept.push_back(c);
            centre.push_back(mu);
            scale.push_back(sd);
        }
    }

    std::vector<std::vector<unsigned>> exps;
    std::vector<unsigned> current(kept.size(), 0);
    exponents(kept.size(), degree, current, 0, exps);
    const auto p = static_cast<Eigen::Index>(exps.size());
    if (static_cast<std::size_t>(p) > count)
        throw SolverError(fmt::format("regression needs at least {} particles for a degree-{} basis, got {}; lower "
                                      "the basis degree or add particles",
                                      p, degree, count));

    auto& A = impl_->design;
    A.resize(static_cast<Eigen::Index>(count), p);
    std::vector<double> z(kept.size());
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t k = 0; k < kept.size(); ++k) z[k] = (samples[i * dim + kept[k]] - centre[k]) / scale[k];
        for (Eigen::Index b = 0; b < p; ++b) {
            double v = 1.0;
            for (std::size_t k = 0; k < kept.size(); ++k)
                for (unsigned e = 0; e < exps[static_cast<std::size_t>(b)][k]; ++e) v *= z[k];
            A(static_cast<Eigen::Index>(i), b) = v;
        }
    }
    impl_->qr.compute(A);
    impl_->qr.setThreshold(1e-10);
    if (impl_->qr.rank() < p)
        throw SolverError(fmt::format("singular regression matrix (rank {} of {}); lower the basis degree or add "
                                      "particles",
                                      impl_->qr.rank(), p));
}

Regression::~Regression() = default;
Regression::Regression(Regression&&) noexcept = default;
Regression& Regression::operator=(Regression&&) noexcept = default;

std::size_t Regression::basis_size() const { return static_cast<std::size_t>(impl_->design.cols()); }

void Regression::project(ConstVec target, MutVec fitted) const {
    const auto count = impl_->design.rows();
    if (static_cast<Eigen::Index>(target.size()) != count || static_cast<Eigen::Index>(fitted.size()) != count)
        throw MismatchError("regression target has wrong size");
    Eigen::Map<const Eigen::VectorXd> y(target.data(), count);
    const Eigen::VectorXd coef = impl_->qr.solve(y);
    Eigen::Map<Eigen::VectorXd>(fitted.data(), count) = impl_->design * coef;
}

}  // namespace mfsmp
