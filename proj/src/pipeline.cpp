#include "fpscore/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "fpscore/banded_lu.hpp"
#include "fpscore/vec.hpp"

namespace fpscore {

namespace {

void check_grid_field(const LogDensityField& f, const GridSpec& spec, const char* who) {
    if (f.rows != spec.rows || f.cols != spec.cols ||
        f.values.size() != static_cast<std::size_t>(spec.cells()))
        throw std::invalid_argument(std::string(who) + ": field does not match grid");
}

double relative_change(std::span<const double> next, std::span<const double> prev) {
    double dn = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
        const double d = next[i] - prev[i];
        dn += d * d;
    }
    return std::sqrt(dn) / std::max(norm2(next), 1e-30);
}

}  // namespace

TimestepResult solve_timestep(const LogDensityField& m_prev, const DiffusionParams& params,
                              const GridSpec& spec, int n, const SolveMode& mode,
                              const KrylovBasis* basis, TraceMode trace_mode) {
    check_grid_field(m_prev, spec, "solve_timestep");
    if (m_prev.timestep != n - 1)
        throw std::invalid_argument("solve_timestep: m_prev carries timestep " +
                                    std::to_string(m_prev.timestep) + ", expected " +
                                    std::to_string(n - 1));
    validate(params);
    const bool collect = trace_mode != TraceMode::None;
    const auto t_start = std::chrono::steady_clock::now();

    TimestepResult out;
    StepStats& st = out.stats;
    st.timestep = n;

    const std::vector<double> b = assemble_rhs(m_prev, params, spec, n);
    LogDensityField current = m_prev;  // m^(k-1); starts as m^(0) = m_prev
    current.timestep = n;

    for (int k = 1; k <= params.nl_max_iter; ++k) {
        StencilCoefficients coeffs = compute_coefficients(current, params, spec, n, k);
        std::vector<double> x;

        switch (mode.kind) {
            case SolverKind::Direct: {
                const BandedSystem sys = to_banded(coeffs, b);
                x = lu_solve(lu_factor(sys), b);
                const auto ax = apply_operator(coeffs, x);
                double rn = 0.0;
                for (std::size_t i = 0; i < ax.size(); ++i) {
                    const double d = b[i] - ax[i];
                    rn += d * d;
                }
                const double bn = norm2(b);
                st.final_residual = bn > 0.0 ? std::sqrt(rn) / bn : 0.0;
                break;
            }
            case SolverKind::Iterative: {
                const std::vector<double> x0 =
                    mode.cold_start ? zeros(current.values.size()) : current.values;
                auto res = bicgstab(make_operator(coeffs), b, x0, params.lin_tol,
                                    params.lin_max_iter, collect);
                x = std::move(res.x);
                st.linear_iterations += res.stats.iterations;
                st.inner_iterations.push_back(res.stats.iterations);
                st.final_residual = res.stats.final_residual;
                st.linear_all_converged &= res.stats.converged;
                if (collect) {
                    if (trace_mode == TraceMode::FinalOuter) {
                        out.harvest_trace = std::move(res.stats.trace);
                    } else {
                        for (auto& v : res.stats.trace) out.harvest_trace.push_back(std::move(v));
                    }
                }
                break;
            }
            case SolverKind::Recycled: {
                if (k == 1) {
                    if (basis != nullptr && basis->a > 0 && basis->has_reduced()) {
                        auto res = solve_target(coeffs, b, *basis, mode.recycle);
                        x = std::move(res.x);
                        st.warm_start_used = res.warm_start_used;
                        st.basis_fallback = !res.warm_start_used;
                        st.linear_iterations += res.stats.iterations;
                        st.inner_iterations.push_back(res.stats.iterations);
                        st.final_residual = res.stats.final_residual;
                        st.linear_all_converged &= res.stats.converged;
                    } else {
                        st.basis_fallback = true;
                        auto res = bicgstab(make_operator(coeffs), b, zeros(b.size()),
                                            mode.recycle.target_tol, mode.recycle.target_max_iter,
                                            false);
                        x = std::move(res.x);
                        st.linear_iterations += res.stats.iterations;
                        st.inner_iterations.push_back(res.stats.iterations);
                        st.final_residual = res.stats.final_residual;
                        st.linear_all_converged &= res.stats.converged;
                    }
                } else {
                    auto res = bicgstab(make_operator(coeffs), b, current.values,
                                        mode.recycle.target_tol, mode.recycle.target_max_iter,
                                        false);
                    x = std::move(res.x);
                    st.linear_iterations += res.stats.iterations;
                    st.inner_iterations.push_back(res.stats.iterations);
                    st.final_residual = res.stats.final_residual;
                    st.linear_all_converged &= res.stats.converged;
                }
                break;
            }
        }

        st.outer_iterations = k;
        const double change = relative_change(x, current.values);
        current.values = std::move(x);
        if (collect) out.final_coeffs = std::move(coeffs);
        if (change < params.nl_tol) {
            st.outer_converged = true;
            break;
        }
    }

    st.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    out.field = std::move(current);
    return out;
}

std::vector<double> central_difference_score(const LogDensityField& field, bool divide_by_h,
                                             double h) {
    const int H = field.rows;
    const int W = field.cols;
    const double scale = divide_by_h ? 1.0 / (2.0 * h) : 0.5;

    std::vector<double> out(static_cast<std::size_t>(H) * W * 2);
    auto val = [&](int i, int j) -> double {
        if (i < 1 || i > W || j < 1 || j > H) return 0.0;
        return field.at(i, j);
    };
    std::size_t idx = 0;
    for (int i = 1; i <= W; ++i) {
        for (int j = 1; j <= H; ++j) {
            out[idx++] = (val(i + 1, j) - val(i - 1, j)) * scale;
            out[idx++] = (val(i, j + 1) - val(i, j - 1)) * scale;
        }
    }
    return out;
}

namespace {

// Shared marching loop. When harvest != nullptr the run collects traces
// and harvests one basis per timestep; the solve arithmetic is identical
// either way.
struct HarvestRequest {
    const RecycleConfig* recycle = nullptr;
    const SeedPolicy* policy = nullptr;
    std::string image_id;
    std::vector<std::optional<KrylovBasis>>* bases = nullptr;
};

PipelineRun march(const LogDensityField& m0, const DiffusionParams& params, const GridSpec& spec,
                  const SolveMode& mode, const std::vector<std::optional<KrylovBasis>>* bases,
                  const ScoreOptions& options, const HarvestRequest* harvest) {
    check_grid_field(m0, spec, "precompute");
    if (m0.timestep != 0)
        throw std::invalid_argument("precompute: initial field must carry timestep 0");
    if (mode.kind == SolverKind::Recycled) {
        if (bases == nullptr || bases->size() != static_cast<std::size_t>(spec.timesteps))
            throw std::invalid_argument("precompute: recycled mode needs one basis slot per timestep");
    }

    const int T = spec.timesteps;
    PipelineRun run;
    run.scores.timesteps = T;
    run.scores.rows = spec.rows;
    run.scores.cols = spec.cols;
    run.scores.data.resize(static_cast<std::size_t>(T) * spec.cells() * 2);
    run.steps.reserve(T);

    const std::size_t slice = static_cast<std::size_t>(spec.cells()) * 2;
    auto write_slice = [&](int t, const LogDensityField& f) {
        const auto s = central_difference_score(f, options.divide_by_h, spec.h);
        std::copy(s.begin(), s.end(), run.scores.data.begin() + t * slice);
    };

    LogDensityField m = m0;
    write_slice(0, m);
    const TraceMode trace_mode =
        harvest ? (harvest->policy->harvest_all_outer ? TraceMode::AllOuter : TraceMode::FinalOuter)
                : TraceMode::None;

    for (int n = 1; n <= T; ++n) {
        const KrylovBasis* basis = nullptr;
        if (mode.kind == SolverKind::Recycled && (*bases)[n - 1].has_value())
            basis = &(*bases)[n - 1].value();

        auto res = solve_timestep(m, params, spec, n, mode, basis, trace_mode);
        if (harvest) {
            try {
                KrylovBasis kb = harvest_basis(res.harvest_trace, harvest->recycle->a_max);
                kb.timestep = n;
                kb.source_image_id = harvest->image_id;
                (*harvest->bases)[n - 1] =
                    cache_reduced_operator(std::move(kb), *res.final_coeffs);
            } catch (const EmptyBasisError&) {
                (*harvest->bases)[n - 1] = std::nullopt;  // targets fall back to cold starts
            }
        }
        m = std::move(res.field);
        if (n <= T - 1) write_slice(n, m);
        run.steps.push_back(std::move(res.stats));
    }
    run.final_field = std::move(m);
    return run;
}

}  // namespace

PipelineRun precompute_from_field(const LogDensityField& m0, const DiffusionParams& params,
                                  const GridSpec& spec, const SolveMode& mode,
                                  const std::vector<std::optional<KrylovBasis>>* bases,
                                  const ScoreOptions& options) {
    return march(m0, params, spec, mode, bases, options, nullptr);
}

PipelineRun precompute_scores(const ImagePlane& image, const DiffusionParams& params,
                              const GridSpec& spec, const SolveMode& mode,
                              const std::vector<std::optional<KrylovBasis>>* bases,
                              const ScoreOptions& options) {
    return march(init_log_density(image, spec, options.log_floor), params, spec, mode, bases,
                 options, nullptr);
}

SeedRun seed_solve_from_field(const LogDensityField& m0, const DiffusionParams& params,
                              const GridSpec& spec, const RecycleConfig& recycle,
                              const ScoreOptions& options, const SeedPolicy& policy,
                              const std::string& image_id) {
    validate(recycle);
    SeedRun out;
    out.bases.resize(static_cast<std::size_t>(spec.timesteps));
    HarvestRequest req{&recycle, &policy, image_id, &out.bases};
    out.run = march(m0, params, spec, SolveMode::iterative(), nullptr, options, &req);
    return out;
}

SeedRun seed_solve(const ImagePlane& image, const DiffusionParams& params, const GridSpec& spec,
                   const RecycleConfig& recycle, const ScoreOptions& options,
                   const SeedPolicy& policy, const std::string& image_id) {
    return seed_solve_from_field(init_log_density(image, spec, options.log_floor), params, spec,
                                 recycle, options, policy, image_id);
}

EmbeddedSequence embed_scores(const ImagePlane& image, const ScoreTensor& scores,
                              const DiffusionParams& params, const GridSpec& spec,
                              CombinationRule rule) {
    if (image.rows != spec.rows || image.cols != spec.cols)
        throw std::invalid_argument("embed_scores: image does not match grid");
    if (scores.timesteps != spec.timesteps || scores.rows != spec.rows ||
        scores.cols != spec.cols)
        throw std::invalid_argument("embed_scores: score tensor does not match grid");
    validate(params);

    const int T = spec.timesteps;
    const int H = spec.rows;
    const int W = spec.cols;
    auto combine = [rule](double sx, double sy) {
        switch (rule) {
            case CombinationRule::XOnly: return sx;
            case CombinationRule::YOnly: return sy;
            default: return sx + sy;
        }
    };

    EmbeddedSequence seq;
    seq.timesteps = T;
    seq.rows = H;
    seq.cols = W;
    seq.rule = rule;
    seq.values.resize(static_cast<std::size_t>(T + 1) * H * W);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) seq.at(0, r, c) = image.at_rc(r, c);

    for (int n = 1; n <= T; ++n) {
        const double g = params.g_schedule(n - 1);
        if (!(g >= 0.0)) throw std::invalid_argument("embed_scores: g_schedule must be nonnegative");
        const double half_g2 = 0.5 * g * g;
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                const int i = c + 1, j = r + 1;
                const double s = combine(scores.at(n - 1, i, j, 0), scores.at(n - 1, i, j, 1));
                double fsc = 0.0;
                if (params.has_drift()) {
                    const auto f = params.f_field(i, j, n - 1);
                    fsc = combine(f[0], f[1]);
                }
                seq.at(n, r, c) = seq.at(n - 1, r, c) + (fsc - half_g2 * s) * spec.dt;
            }
        }
    }
    return seq;
}

}  // namespace fpscore
