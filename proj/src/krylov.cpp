#include "fpscore/krylov.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "fpscore/vec.hpp"

namespace fpscore {

namespace {

constexpr double kDependentTol = 1e-12;

// Dense partial-pivot elimination for the a x a reduced system. Returns
// false when a pivot falls below 1e-14 of the largest matrix entry.
bool dense_solve_inplace(std::vector<double>& A, std::vector<double>& rhs, int a) {
    double amax = 0.0;
    for (double v : A) amax = std::max(amax, std::abs(v));
    if (amax == 0.0) return false;
    const double floor = 1e-14 * amax;

    for (int col = 0; col < a; ++col) {
        int piv = col;
        double best = std::abs(A[static_cast<std::size_t>(col) * a + col]);
        for (int row = col + 1; row < a; ++row) {
            const double v = std::abs(A[static_cast<std::size_t>(row) * a + col]);
            if (v > best) {
                best = v;
                piv = row;
            }
        }
        if (best < floor) return false;
        if (piv != col) {
            for (int c = col; c < a; ++c)
                std::swap(A[static_cast<std::size_t>(col) * a + c],
                          A[static_cast<std::size_t>(piv) * a + c]);
            std::swap(rhs[col], rhs[piv]);
        }
        const double inv = 1.0 / A[static_cast<std::size_t>(col) * a + col];
        for (int row = col + 1; row < a; ++row) {
            const double mult = A[static_cast<std::size_t>(row) * a + col] * inv;
            if (mult == 0.0) continue;
            A[static_cast<std::size_t>(row) * a + col] = 0.0;
            for (int c = col + 1; c < a; ++c)
                A[static_cast<std::size_t>(row) * a + c] -=
                    mult * A[static_cast<std::size_t>(col) * a + c];
            rhs[row] -= mult * rhs[col];
        }
    }
    for (int row = a - 1; row >= 0; --row) {
        double acc = rhs[row];
        for (int c = row + 1; c < a; ++c) acc -= A[static_cast<std::size_t>(row) * a + c] * rhs[c];
        rhs[row] = acc / A[static_cast<std::size_t>(row) * a + row];
    }
    return true;
}

}  // namespace

double KrylovBasis::orthonormality_defect() const {
    double defect = 0.0;
    for (int c1 = 0; c1 < a; ++c1) {
        for (int c2 = c1; c2 < a; ++c2) {
            const double d = dot(column(c1), column(c2)) - (c1 == c2 ? 1.0 : 0.0);
            defect = std::max(defect, std::abs(d));
        }
    }
    return defect;
}

void validate(const RecycleConfig& config) {
    if (config.a_max < 1) throw std::invalid_argument("RecycleConfig: a_max must be >= 1");
    if (config.seed_cycle < 2) throw std::invalid_argument("RecycleConfig: seed_cycle must be >= 2");
    if (!(config.target_tol > 0.0 && config.target_tol < 1.0))
        throw std::invalid_argument("RecycleConfig: target_tol must lie in (0, 1)");
    if (config.target_max_iter < 1)
        throw std::invalid_argument("RecycleConfig: target_max_iter must be >= 1");
}

KrylovBasis harvest_basis(const std::vector<std::vector<double>>& trace, int a_max) {
    if (trace.empty()) throw EmptyBasisError("harvest_basis: empty trace");
    if (a_max < 1) throw std::invalid_argument("harvest_basis: a_max must be >= 1");
    const std::size_t dim = trace.front().size();
    if (dim == 0) throw EmptyBasisError("harvest_basis: zero-length trace vectors");

    KrylovBasis basis;
    basis.dim = static_cast<int>(dim);
    std::vector<double> w(dim);

    for (const auto& vec : trace) {
        if (vec.size() != dim)
            throw std::invalid_argument("harvest_basis: trace vectors differ in length");
        const double orig = norm2(vec);
        if (orig == 0.0) continue;

        w.assign(vec.begin(), vec.end());
        for (int c = 0; c < basis.a; ++c) {
            const auto q = basis.column(c);
            axpy(-dot(q, w), q, w);
        }
        if (norm2(w) < kDependentTol * orig) continue;
        // second pass keeps the defect near machine precision
        for (int c = 0; c < basis.a; ++c) {
            const auto q = basis.column(c);
            axpy(-dot(q, w), q, w);
        }
        const double nw = norm2(w);
        if (nw < kDependentTol * orig) continue;

        const double inv = 1.0 / nw;
        for (double& wv : w) wv *= inv;
        basis.columns.insert(basis.columns.end(), w.begin(), w.end());
        basis.a += 1;
        if (basis.a == a_max) break;
    }

    if (basis.a == 0) throw EmptyBasisError("harvest_basis: all trace vectors degenerate");
    return basis;
}

KrylovBasis cache_reduced_operator(KrylovBasis basis, const StencilCoefficients& seed_coeffs) {
    if (basis.dim != seed_coeffs.size())
        throw std::invalid_argument("cache_reduced_operator: basis/operator dimension mismatch");
    if (basis.timestep != seed_coeffs.timestep)
        throw std::invalid_argument("cache_reduced_operator: basis/operator timestep mismatch");

    const int a = basis.a;
    basis.reduced.assign(static_cast<std::size_t>(a) * a, 0.0);
    for (int c = 0; c < a; ++c) {
        const auto av = apply_operator(seed_coeffs, basis.column(c));
        for (int r = 0; r < a; ++r)
            basis.reduced[static_cast<std::size_t>(r) * a + c] = dot(basis.column(r), av);
    }
    return basis;
}

ProjectionGuess project_and_guess(const KrylovBasis& basis, std::span<const double> b_target) {
    if (b_target.size() != static_cast<std::size_t>(basis.dim))
        throw std::invalid_argument("project_and_guess: rhs length does not match basis");

    ProjectionGuess out;
    out.x0.assign(basis.dim, 0.0);
    if (basis.a == 0) {
        out.fallback = true;
        return out;
    }
    if (!basis.has_reduced())
        throw std::logic_error("project_and_guess: reduced operator not cached");

    const int a = basis.a;
    std::vector<double> reduced = basis.reduced;
    std::vector<double> alpha(a);
    for (int c = 0; c < a; ++c) alpha[c] = dot(basis.column(c), b_target);

    if (!dense_solve_inplace(reduced, alpha, a)) {
        out.fallback = true;  // degenerate basis must not abort a batch run
        return out;
    }
    for (int c = 0; c < a; ++c) axpy(alpha[c], basis.column(c), out.x0);
    return out;
}

TargetSolveResult solve_target(const StencilCoefficients& coeffs_target,
                               std::span<const double> b_target, const KrylovBasis& basis,
                               const RecycleConfig& config) {
    validate(config);
    auto guess = project_and_guess(basis, b_target);
    auto solved = bicgstab(make_operator(coeffs_target), b_target, guess.x0, config.target_tol,
                           config.target_max_iter, false);
    TargetSolveResult out;
    out.x = std::move(solved.x);
    out.stats = std::move(solved.stats);
    out.warm_start_used = !guess.fallback;
    return out;
}

namespace {

constexpr char kBasisMagic[4] = {'K', 'R', 'Y', 'B'};
constexpr std::uint32_t kBasisVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
}

}  // namespace

void save_basis(const KrylovBasis& basis, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_basis: cannot open " + path.string());
    out.write(kBasisMagic, 4);
    write_raw(out, kBasisVersion);
    write_raw(out, static_cast<std::uint64_t>(basis.dim));
    write_raw(out, static_cast<std::uint32_t>(basis.a));
    out.write(reinterpret_cast<const char*>(basis.columns.data()),
              static_cast<std::streamsize>(basis.columns.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(basis.reduced.data()),
              static_cast<std::streamsize>(basis.reduced.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_basis: write failed for " + path.string());
}

KrylovBasis load_basis(const std::filesystem::path& path, int timestep) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_basis: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kBasisMagic, 4) != 0)
        throw std::runtime_error("load_basis: bad magic in " + path.string());
    const auto version = read_raw<std::uint32_t>(in);
    if (version != kBasisVersion)
        throw std::runtime_error("load_basis: unsupported version " + std::to_string(version));
    const auto dim = read_raw<std::uint64_t>(in);
    const auto a = read_raw<std::uint32_t>(in);

    KrylovBasis basis;
    basis.timestep = timestep;
    basis.dim = static_cast<int>(dim);
    basis.a = static_cast<int>(a);
    basis.columns.resize(static_cast<std::size_t>(dim) * a);
    basis.reduced.resize(static_cast<std::size_t>(a) * a);
    in.read(reinterpret_cast<char*>(basis.columns.data()),
            static_cast<std::streamsize>(basis.columns.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(basis.reduced.data()),
            static_cast<std::streamsize>(basis.reduced.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_basis: truncated file " + path.string());

    if (basis.orthonormality_defect() >= 1e-10)
        throw std::runtime_error("load_basis: stored basis lost orthonormality: " + path.string());
    return basis;
}

}  // namespace fpscore
