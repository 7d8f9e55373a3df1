#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "fpscore/stencil.hpp"

namespace fpscore {

struct SingularMatrixError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Banded LU factors with partial pivoting. Row interchanges keep the
/// fill-in inside the band envelope: with lower and upper bandwidth kl,
/// the factored U has at most 2*kl superdiagonals. Immutable after
/// construction, so one factorization serves any number of solves.
class BandedFactorization {
public:
    /// Solves A x = b using the stored factors.
    std::vector<double> solve(std::span<const double> b) const;

    int size() const { return n_; }

private:
    friend BandedFactorization lu_factor(const BandedSystem& system);

    int n_ = 0;
    int kl_ = 0;  // lower bandwidth (= upper bandwidth of the input)
    int ldab_ = 0;
    std::vector<double> ab_;  // column-major band storage, ldab_ x n_
    std::vector<int> piv_;
};

/// Factors a BandedSystem. A pivot smaller than 1e-14 times the largest
/// input band entry raises SingularMatrixError.
BandedFactorization lu_factor(const BandedSystem& system);

std::vector<double> lu_solve(const BandedFactorization& fact, std::span<const double> b);

}  // namespace fpscore
