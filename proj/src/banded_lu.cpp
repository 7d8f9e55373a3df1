#include "fpscore/banded_lu.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fpscore {

namespace {

double max_band_magnitude(const BandedSystem& s) {
    double m = 0.0;
    for (const auto* band : {&s.main_diag, &s.sup1, &s.sub1, &s.supb, &s.subb})
        for (double v : *band) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

BandedFactorization lu_factor(const BandedSystem& system) {
    const int n = system.n;
    const int kl = system.block;
    if (n <= 0 || kl < 2)
        throw std::invalid_argument("lu_factor: need n > 0 and block >= 2");
    if (system.main_diag.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("lu_factor: band lengths do not match n");

    const double scale = max_band_magnitude(system);
    const double pivot_floor = 1e-14 * scale;

    BandedFactorization f;
    f.n_ = n;
    f.kl_ = kl;
    f.ldab_ = 3 * kl + 1;  // kl multipliers + (kl + ku) superdiagonals + diagonal
    f.ab_.assign(static_cast<std::size_t>(f.ldab_) * n, 0.0);
    f.piv_.resize(n);

    const int kv = 2 * kl;  // working upper bandwidth after fill-in
    auto AB = [&](int r, int c) -> double& { return f.ab_[static_cast<std::size_t>(c) * f.ldab_ + r]; };
    // A(i, j) lives at AB(kv + i - j, j)
    for (int k = 0; k < n; ++k) {
        AB(kv, k) = system.main_diag[k];
        if (k + 1 < n) AB(kv - 1, k + 1) = system.sup1[k];
        if (k >= 1) AB(kv + 1, k - 1) = system.sub1[k];
        if (k + kl < n) AB(kv - kl, k + kl) = system.supb[k];
        if (k >= kl) AB(kv + kl, k - kl) = system.subb[k];
    }

    int ju = 0;  // last column updated by previous stages
    for (int j = 0; j < n; ++j) {
        const int km = std::min(kl, n - 1 - j);
        int jp = 0;
        double amax = std::abs(AB(kv, j));
        for (int t = 1; t <= km; ++t) {
            const double v = std::abs(AB(kv + t, j));
            if (v > amax) {
                amax = v;
                jp = t;
            }
        }
        f.piv_[j] = j + jp;
        if (scale == 0.0 || amax < pivot_floor)
            throw SingularMatrixError("lu_factor: pivot " + std::to_string(amax) +
                                      " below threshold at column " + std::to_string(j));

        ju = std::max(ju, std::min(j + kl + jp, n - 1));
        if (jp != 0)
            for (int c = j; c <= ju; ++c) std::swap(AB(kv + j - c, c), AB(kv + j + jp - c, c));

        if (km > 0) {
            const double pivinv = 1.0 / AB(kv, j);
            for (int t = 1; t <= km; ++t) AB(kv + t, j) *= pivinv;
            for (int c = j + 1; c <= ju; ++c) {
                const double ajc = AB(kv + j - c, c);
                if (ajc != 0.0)
                    for (int t = 1; t <= km; ++t) AB(kv + j + t - c, c) -= AB(kv + t, j) * ajc;
            }
        }
    }
    return f;
}

std::vector<double> BandedFactorization::solve(std::span<const double> b) const {
    if (b.size() != static_cast<std::size_t>(n_))
        throw std::invalid_argument("BandedFactorization::solve: rhs length " +
                                    std::to_string(b.size()) + " does not match system size " +
                                    std::to_string(n_));
    const int kv = 2 * kl_;
    auto AB = [&](int r, int c) -> double { return ab_[static_cast<std::size_t>(c) * ldab_ + r]; };

    std::vector<double> x(b.begin(), b.end());
    for (int j = 0; j < n_ - 1; ++j) {
        if (piv_[j] != j) std::swap(x[j], x[piv_[j]]);
        const int km = std::min(kl_, n_ - 1 - j);
        for (int t = 1; t <= km; ++t) x[j + t] -= AB(kv + t, j) * x[j];
    }
    for (int j = n_ - 1; j >= 0; --j) {
        x[j] /= AB(kv, j);
        const int lo = std::max(0, j - kv);
        for (int i = lo; i < j; ++i) x[i] -= AB(kv + i - j, j) * x[j];
    }
    return x;
}

std::vector<double> lu_solve(const BandedFactorization& fact, std::span<const double> b) {
    return fact.solve(b);
}

}  // namespace fpscore
