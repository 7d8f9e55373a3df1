#include "fpscore/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "fpscore/image_io.hpp"
#include "fpscore/synthetic.hpp"
#include "fpscore/vec.hpp"

namespace fpscore {

double l2_rel_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("l2_rel_error: shape mismatch");
    const double nb = norm2(b);
    if (nb == 0.0) throw std::invalid_argument("l2_rel_error: zero-norm baseline");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s) / nb;
}

namespace {

struct BatchImage {
    std::string id;
    std::vector<ImagePlane> channels;
};

// Load failures do not abort the batch: the image is dropped from the
// solving lineup and recorded as failed.
std::vector<BatchImage> collect_images(const BatchSpec& batch,
                                       std::vector<ImageRecord>& load_failures) {
    std::vector<BatchImage> images;
    if (!batch.input_dir.empty()) {
        std::vector<std::filesystem::path> paths;
        for (const auto& entry : std::filesystem::directory_iterator(batch.input_dir)) {
            const auto ext = entry.path().extension().string();
            if (ext == ".pgm" || ext == ".png") paths.push_back(entry.path());
        }
        std::sort(paths.begin(), paths.end());
        if (paths.empty())
            throw std::invalid_argument("run_benchmark: no .pgm/.png images in " +
                                        batch.input_dir.string());
        for (const auto& p : paths) {
            BatchImage bi;
            bi.id = p.stem().string();
            try {
                const Image img = load_image(p);
                if (img.rows != batch.grid.rows || img.cols != batch.grid.cols)
                    throw IoError(p.filename().string() + " is " + std::to_string(img.rows) + "x" +
                                  std::to_string(img.cols) + ", batch grid expects " +
                                  std::to_string(batch.grid.rows) + "x" +
                                  std::to_string(batch.grid.cols));
                for (int c = 0; c < img.channels; ++c) bi.channels.push_back(img.plane(c));
            } catch (const std::exception& e) {
                ImageRecord rec;
                rec.image_id = bi.id;
                rec.mode = "load";
                rec.role = "none";
                rec.failed = true;
                rec.error = e.what();
                load_failures.push_back(std::move(rec));
                continue;
            }
            images.push_back(std::move(bi));
        }
    } else {
        if (batch.synthetic_n < 1)
            throw std::invalid_argument("run_benchmark: synthetic batch needs N >= 1");
        auto planes = batch.synthetic_n == 1
                          ? std::vector<ImagePlane>{gen_base_image(batch.seed, batch.grid)}
                          : gen_correlated_batch(batch.seed, batch.synthetic_n, batch.grid,
                                                 batch.sigma_p);
        char buf[32];
        for (std::size_t k = 0; k < planes.size(); ++k) {
            std::snprintf(buf, sizeof(buf), "synthetic-%03zu", k);
            images.push_back({buf, {std::move(planes[k])}});
        }
    }
    return images;
}

long long total_iterations(const PipelineRun& run) {
    long long total = 0;
    for (const auto& st : run.steps) total += st.linear_iterations;
    return total;
}

std::vector<double> concat_final_fields(const std::vector<PipelineRun>& runs) {
    std::vector<double> all;
    for (const auto& r : runs)
        all.insert(all.end(), r.final_field.values.begin(), r.final_field.values.end());
    return all;
}

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

}  // namespace

BenchAggregates compute_aggregates(const std::vector<ImageRecord>& records) {
    BenchAggregates agg;
    for (const auto& rec : records) {
        if (rec.failed) continue;
        agg.total_time_per_mode[rec.mode] += rec.wall_time_s;
    }

    double err_sum = 0.0;
    int err_count = 0;
    for (const auto& rec : records) {
        if (rec.failed || rec.mode != "recycled") continue;
        if (std::isnan(rec.l2_rel_error_vs_direct)) continue;
        err_sum += rec.l2_rel_error_vs_direct;
        ++err_count;
    }
    if (err_count > 0) agg.avg_l2_error = err_sum / err_count;

    const bool has_targets = std::any_of(records.begin(), records.end(), [](const ImageRecord& r) {
        return r.mode == "recycled" && r.role == "target" && !r.failed;
    });
    const auto direct_it = agg.total_time_per_mode.find("direct");
    const auto rec_it = agg.total_time_per_mode.find("recycled");
    if (has_targets && direct_it != agg.total_time_per_mode.end() &&
        rec_it != agg.total_time_per_mode.end() && direct_it->second > 0.0)
        agg.time_reduction_pct = 100.0 * (direct_it->second - rec_it->second) / direct_it->second;

    long long cold_targets = 0, rec_targets = 0;
    bool any_cold = false, any_rec = false;
    for (const auto& rec : records) {
        if (rec.failed || rec.role != "target") continue;
        if (rec.mode == "iterative-cold") {
            cold_targets += rec.bicgstab_iterations;
            any_cold = true;
        } else if (rec.mode == "recycled") {
            rec_targets += rec.bicgstab_iterations;
            any_rec = true;
        }
    }
    if (any_cold && any_rec && cold_targets > 0)
        agg.iteration_reduction_pct =
            100.0 * static_cast<double>(cold_targets - rec_targets) / cold_targets;
    return agg;
}

BenchReport run_benchmark(const BatchSpec& batch) {
    validate(batch.params);
    validate(batch.recycle);
    if (batch.workers < 1) throw std::invalid_argument("run_benchmark: workers must be >= 1");

    std::vector<ImageRecord> load_failures;
    const auto images = collect_images(batch, load_failures);
    const int n_images = static_cast<int>(images.size());
    if (n_images == 0) throw std::runtime_error("run_benchmark: every image failed to load");

    BenchReport report;
    report.records = std::move(load_failures);
    auto& env = report.environment;
    env.grid_h = batch.grid.rows;
    env.grid_w = batch.grid.cols;
    env.timesteps = batch.grid.timesteps;
    env.g = batch.params.g_schedule ? batch.params.g_schedule(1) : 0.0;
    env.nl_tol = batch.params.nl_tol;
    env.nl_max_iter = batch.params.nl_max_iter;
    env.lin_tol = batch.params.lin_tol;
    env.lin_max_iter = batch.params.lin_max_iter;
    env.target_tol = batch.recycle.target_tol;
    env.target_max_iter = batch.recycle.target_max_iter;
    env.a_max = batch.recycle.a_max;
    env.seed_cycle = batch.recycle.seed_cycle;
    env.source = batch.input_dir.empty() ? "synthetic" : "directory";
    env.batch_n = n_images;
    env.sigma_p = batch.input_dir.empty() ? batch.sigma_p : 0.0;
    env.seed = batch.seed;
    env.workers = batch.workers;
    env.concurrency_enabled = batch.workers > 1;
    env.timestamp = now_iso8601();

    auto role_of = [&](int idx) {
        return idx % batch.recycle.seed_cycle == 0 ? std::string("seed") : std::string("target");
    };

    // Direct pass: reference fields and the timing baseline.
    std::vector<std::vector<PipelineRun>> direct_runs(n_images);  // per image, per channel
    std::vector<bool> direct_ok(n_images, false);
    if (batch.run_direct) {
        for (int idx = 0; idx < n_images; ++idx) {
            ImageRecord rec;
            rec.image_id = images[idx].id;
            rec.mode = "direct";
            rec.role = "baseline";
            try {
                const auto t0 = std::chrono::steady_clock::now();
                for (const auto& ch : images[idx].channels)
                    direct_runs[idx].push_back(precompute_scores(ch, batch.params, batch.grid,
                                                                 SolveMode::direct(), nullptr,
                                                                 batch.score_options));
                rec.wall_time_s =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                rec.l2_rel_error_vs_direct = 0.0;  // baseline identity
                direct_ok[idx] = true;
            } catch (const std::exception& e) {
                rec.failed = true;
                rec.error = e.what();
                direct_runs[idx].clear();
            }
            report.records.push_back(std::move(rec));
        }
    }

    // Cold-start iterative baseline at the target tolerances.
    if (batch.run_cold) {
        DiffusionParams cold_params = batch.params;
        cold_params.lin_tol = batch.recycle.target_tol;
        cold_params.lin_max_iter = batch.recycle.target_max_iter;
        for (int idx = 0; idx < n_images; ++idx) {
            ImageRecord rec;
            rec.image_id = images[idx].id;
            rec.mode = "iterative-cold";
            rec.role = role_of(idx);
            try {
                std::vector<PipelineRun> runs;
                const auto t0 = std::chrono::steady_clock::now();
                for (const auto& ch : images[idx].channels)
                    runs.push_back(precompute_scores(ch, cold_params, batch.grid,
                                                     SolveMode::iterative(true), nullptr,
                                                     batch.score_options));
                rec.wall_time_s =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                for (const auto& r : runs) rec.bicgstab_iterations += total_iterations(r);
                if (direct_ok[idx])
                    rec.l2_rel_error_vs_direct =
                        l2_rel_error(concat_final_fields(runs), concat_final_fields(direct_runs[idx]));
            } catch (const std::exception& e) {
                rec.failed = true;
                rec.error = e.what();
            }
            report.records.push_back(std::move(rec));
        }
    }

    // Recycled pass: the first image of each cycle is solved as the seed
    // and its bases serve every target of that cycle.
    if (batch.run_recycled) {
        std::vector<ImageRecord> recycled_records(n_images);
        for (int cycle_start = 0; cycle_start < n_images;
             cycle_start += batch.recycle.seed_cycle) {
            const int cycle_end =
                std::min(cycle_start + batch.recycle.seed_cycle, n_images);

            // seed
            std::vector<std::vector<std::optional<KrylovBasis>>> cycle_bases;  // per channel
            bool seed_ok = false;
            {
                ImageRecord rec;
                rec.image_id = images[cycle_start].id;
                rec.mode = "recycled";
                rec.role = "seed";
                try {
                    std::vector<PipelineRun> runs;
                    const auto t0 = std::chrono::steady_clock::now();
                    for (const auto& ch : images[cycle_start].channels) {
                        auto seeded = seed_solve(ch, batch.params, batch.grid, batch.recycle,
                                                 batch.score_options, batch.seed_policy,
                                                 images[cycle_start].id);
                        runs.push_back(std::move(seeded.run));
                        cycle_bases.push_back(std::move(seeded.bases));
                    }
                    rec.wall_time_s =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
                    for (const auto& r : runs) rec.bicgstab_iterations += total_iterations(r);
                    if (direct_ok[cycle_start])
                        rec.l2_rel_error_vs_direct = l2_rel_error(
                            concat_final_fields(runs), concat_final_fields(direct_runs[cycle_start]));
                    seed_ok = true;
                } catch (const std::exception& e) {
                    rec.failed = true;
                    rec.error = e.what();
                    cycle_bases.clear();
                }
                recycled_records[cycle_start] = std::move(rec);
            }

            auto solve_one_target = [&](int idx) {
                ImageRecord rec;
                rec.image_id = images[idx].id;
                rec.mode = "recycled";
                rec.role = "target";
                try {
                    const SolveMode mode = SolveMode::recycled(batch.recycle);
                    std::vector<PipelineRun> runs;
                    std::vector<std::optional<KrylovBasis>> empty_bases(
                        static_cast<std::size_t>(batch.grid.timesteps));
                    const auto t0 = std::chrono::steady_clock::now();
                    for (std::size_t c = 0; c < images[idx].channels.size(); ++c) {
                        // a failed seed leaves no bases; targets fall back per timestep
                        const auto* bases = (seed_ok && c < cycle_bases.size())
                                                ? &cycle_bases[c]
                                                : &empty_bases;
                        runs.push_back(precompute_scores(images[idx].channels[c], batch.params,
                                                         batch.grid, mode, bases,
                                                         batch.score_options));
                    }
                    rec.wall_time_s =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
                    for (const auto& r : runs) rec.bicgstab_iterations += total_iterations(r);
                    if (direct_ok[idx])
                        rec.l2_rel_error_vs_direct = l2_rel_error(
                            concat_final_fields(runs), concat_final_fields(direct_runs[idx]));
                } catch (const std::exception& e) {
                    rec.failed = true;
                    rec.error = e.what();
                }
                recycled_records[idx] = std::move(rec);
            };

            const int first_target = cycle_start + 1;
            if (batch.workers <= 1 || cycle_end - first_target <= 1) {
                for (int idx = first_target; idx < cycle_end; ++idx) solve_one_target(idx);
            } else {
                std::vector<std::thread> pool;
                std::atomic<int> next{first_target};
                const int n_workers =
                    std::min(batch.workers, cycle_end - first_target);
                for (int w = 0; w < n_workers; ++w)
                    pool.emplace_back([&]() {
                        for (int idx = next.fetch_add(1); idx < cycle_end;
                             idx = next.fetch_add(1))
                            solve_one_target(idx);
                    });
                for (auto& th : pool) th.join();
            }
        }
        for (auto& rec : recycled_records)
            if (!rec.image_id.empty()) report.records.push_back(std::move(rec));
    }

    const bool all_failed =
        !report.records.empty() &&
        std::all_of(report.records.begin(), report.records.end(),
                    [](const ImageRecord& r) { return r.failed; });
    if (all_failed) throw std::runtime_error("run_benchmark: every image failed");

    report.aggregates = compute_aggregates(report.records);
    if (!batch.report_json.empty()) write_report_json(report, batch.report_json);
    if (!batch.report_csv.empty()) write_report_csv(report, batch.report_csv);
    return report;
}

namespace {

nlohmann::json maybe_nan(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

double from_maybe_nan(const nlohmann::json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

}  // namespace

std::string report_to_json(const BenchReport& report) {
    nlohmann::json j;
    j["version"] = report.version;
    const auto& e = report.environment;
    j["environment"] = {{"grid", {{"H", e.grid_h}, {"W", e.grid_w}}},
                        {"timesteps", e.timesteps},
                        {"g", e.g},
                        {"nl_tol", e.nl_tol},
                        {"nl_max_iter", e.nl_max_iter},
                        {"lin_tol", e.lin_tol},
                        {"lin_max_iter", e.lin_max_iter},
                        {"target_tol", e.target_tol},
                        {"target_max_iter", e.target_max_iter},
                        {"a_max", e.a_max},
                        {"seed_cycle", e.seed_cycle},
                        {"source", e.source},
                        {"batch_n", e.batch_n},
                        {"sigma_p", e.sigma_p},
                        {"seed", e.seed},
                        {"workers", e.workers},
                        {"concurrency_enabled", e.concurrency_enabled},
                        {"timing_boundary", e.timing_boundary},
                        {"timestamp", e.timestamp}};
    j["records"] = nlohmann::json::array();
    for (const auto& r : report.records)
        j["records"].push_back({{"image_id", r.image_id},
                                {"mode", r.mode},
                                {"role", r.role},
                                {"wall_time_s", r.wall_time_s},
                                {"bicgstab_iterations", r.bicgstab_iterations},
                                {"l2_rel_error_vs_direct", maybe_nan(r.l2_rel_error_vs_direct)},
                                {"failed", r.failed},
                                {"error", r.error}});
    const auto& a = report.aggregates;
    j["aggregates"] = {{"total_time_per_mode", a.total_time_per_mode},
                       {"avg_l2_error", maybe_nan(a.avg_l2_error)},
                       {"time_reduction_pct", maybe_nan(a.time_reduction_pct)},
                       {"iteration_reduction_pct", maybe_nan(a.iteration_reduction_pct)}};
    return j.dump(2);
}

BenchReport report_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    BenchReport report;
    report.version = j.at("version").get<std::string>();
    const auto& je = j.at("environment");
    auto& e = report.environment;
    e.grid_h = je.at("grid").at("H").get<int>();
    e.grid_w = je.at("grid").at("W").get<int>();
    e.timesteps = je.at("timesteps").get<int>();
    e.g = je.at("g").get<double>();
    e.nl_tol = je.at("nl_tol").get<double>();
    e.nl_max_iter = je.at("nl_max_iter").get<int>();
    e.lin_tol = je.at("lin_tol").get<double>();
    e.lin_max_iter = je.at("lin_max_iter").get<int>();
    e.target_tol = je.at("target_tol").get<double>();
    e.target_max_iter = je.at("target_max_iter").get<int>();
    e.a_max = je.at("a_max").get<int>();
    e.seed_cycle = je.at("seed_cycle").get<int>();
    e.source = je.at("source").get<std::string>();
    e.batch_n = je.at("batch_n").get<int>();
    e.sigma_p = je.at("sigma_p").get<double>();
    e.seed = je.at("seed").get<std::uint64_t>();
    e.workers = je.at("workers").get<int>();
    e.concurrency_enabled = je.at("concurrency_enabled").get<bool>();
    e.timing_boundary = je.at("timing_boundary").get<std::string>();
    e.timestamp = je.at("timestamp").get<std::string>();
    for (const auto& jr : j.at("records")) {
        ImageRecord r;
        r.image_id = jr.at("image_id").get<std::string>();
        r.mode = jr.at("mode").get<std::string>();
        r.role = jr.at("role").get<std::string>();
        r.wall_time_s = jr.at("wall_time_s").get<double>();
        r.bicgstab_iterations = jr.at("bicgstab_iterations").get<long long>();
        r.l2_rel_error_vs_direct = from_maybe_nan(jr.at("l2_rel_error_vs_direct"));
        r.failed = jr.at("failed").get<bool>();
        r.error = jr.at("error").get<std::string>();
        report.records.push_back(std::move(r));
    }
    const auto& ja = j.at("aggregates");
    report.aggregates.total_time_per_mode =
        ja.at("total_time_per_mode").get<std::map<std::string, double>>();
    report.aggregates.avg_l2_error = from_maybe_nan(ja.at("avg_l2_error"));
    report.aggregates.time_reduction_pct = from_maybe_nan(ja.at("time_reduction_pct"));
    report.aggregates.iteration_reduction_pct = from_maybe_nan(ja.at("iteration_reduction_pct"));
    return report;
}

void write_report_json(const BenchReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report_json: cannot open " + path.string());
    out << report_to_json(report) << "\n";
}

void write_report_csv(const BenchReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report_csv: cannot open " + path.string());
    out << "image_id,mode,role,wall_time_s,bicgstab_iterations,l2_rel_error_vs_direct,failed,"
           "error\n";
    char buf[64];
    for (const auto& r : report.records) {
        out << r.image_id << ',' << r.mode << ',' << r.role << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", r.wall_time_s);
        out << buf << ',' << r.bicgstab_iterations << ',';
        if (std::isnan(r.l2_rel_error_vs_direct)) {
            out << "";
        } else {
            std::snprintf(buf, sizeof(buf), "%.17g", r.l2_rel_error_vs_direct);
            out << buf;
        }
        out << ',' << (r.failed ? "true" : "false") << ',' << r.error << '\n';
    }
}

}  // namespace fpscore
