#include "fpscore/bicgstab.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "fpscore/vec.hpp"

namespace fpscore {

namespace {

constexpr double kBreakdownEps = 1e-30;

}  // namespace

BicgstabResult bicgstab(const LinearOperator& op, std::span<const double> b,
                        std::span<const double> x0, double tol, int max_iter,
                        bool collect_trace) {
    if (x0.size() != b.size())
        throw std::invalid_argument("bicgstab: x0 length does not match b");
    if (!(tol > 0.0)) throw std::invalid_argument("bicgstab: tol must be positive");
    if (max_iter < 0) throw std::invalid_argument("bicgstab: max_iter must be nonnegative");

    const auto t_start = std::chrono::steady_clock::now();
    const std::size_t n = b.size();
    BicgstabResult out;
    SolveStats& st = out.stats;

    auto finish = [&](std::vector<double> x, bool converged, double rel_res, int iters) {
        st.converged = converged;
        st.final_residual = rel_res;
        st.iterations = iters;
        st.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        out.x = std::move(x);
        return std::move(out);
    };

    const double norm_b = norm2(b);
    if (norm_b == 0.0) return finish(zeros(n), true, 0.0, 0);
    const double target = tol * norm_b;

    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> r(n), work(n);
    op(x, work);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - work[i];
    if (collect_trace) st.trace.push_back(r);

    double res_norm = norm2(r);
    std::vector<double> best_x = x;
    double best_res = res_norm;

    if (res_norm <= target) return finish(std::move(x), true, res_norm / norm_b, 0);

    std::vector<double> rhat = r;  // shadow residual, reset only on restart
    std::vector<double> p(n, 0.0), v(n, 0.0), s(n), t(n);
    double rho_prev = 1.0, alpha = 1.0, omega = 1.0;
    bool fresh = true;  // next iteration takes p = r (start or restart)

    auto breakdown = [&](const char* what) -> BreakdownError {
        return BreakdownError(std::string("bicgstab: ") + what + " breakdown after " +
                                  std::to_string(st.iterations) + " iterations",
                              best_x, best_res / norm_b);
    };
    auto note_best = [&]() {
        if (res_norm < best_res) {
            best_res = res_norm;
            best_x = x;
        }
    };
    // The recurrence residual drifts from the true one, so convergence is
    // confirmed with an explicit matvec. A failed confirmation replaces r
    // by the true residual and restarts the recurrence from x.
    auto verified = [&]() {
        if (res_norm > target) return false;
        op(x, work);
        for (std::size_t i = 0; i < n; ++i) work[i] = b[i] - work[i];
        const double true_norm = norm2(work);
        res_norm = true_norm;
        note_best();
        if (true_norm <= target) return true;
        r = work;
        rhat = work;
        rho_prev = alpha = omega = 1.0;
        fresh = true;
        return false;
    };

    for (int iter = 1; iter <= max_iter; ++iter) {
        st.iterations = iter;
        const double rho = dot(rhat, r);
        if (std::abs(rho) < kBreakdownEps) throw breakdown("rho");

        if (fresh) {
            p = r;
            fresh = false;
        } else {
            const double beta = (rho / rho_prev) * (alpha / omega);
            for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        if (collect_trace) st.trace.push_back(p);

        op(p, v);
        const double rhat_v = dot(rhat, v);
        if (std::abs(rhat_v) < kBreakdownEps) throw breakdown("rho (alpha denominator)");
        alpha = rho / rhat_v;

        for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
        const double s_norm = norm2(s);
        if (s_norm <= target) {
            axpy(alpha, p, x);
            r = s;
            res_norm = s_norm;
            if (collect_trace) st.trace.push_back(r);
            note_best();
            if (verified()) return finish(std::move(x), true, res_norm / norm_b, iter);
            rho_prev = rho;
            continue;
        }

        op(s, t);
        const double tt = dot(t, t);
        if (tt == 0.0) throw breakdown("omega (t vanished)");
        omega = dot(t, s) / tt;
        if (std::abs(omega) < kBreakdownEps) throw breakdown("omega");

        for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i] + omega * s[i];
        for (std::size_t i = 0; i < n; ++i) r[i] = s[i] - omega * t[i];
        res_norm = norm2(r);
        if (collect_trace) st.trace.push_back(r);
        note_best();

        if (verified()) return finish(std::move(x), true, res_norm / norm_b, iter);
        rho_prev = rho;
    }

    // out of iterations: hand back the best iterate, flagged unconverged
    op(best_x, work);
    double s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = b[i] - work[i];
        s2 += d * d;
    }
    return finish(std::move(best_x), false, std::sqrt(s2) / norm_b, st.iterations);
}

}  // namespace fpscore
