#include "hse/meta.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hse/csv.hpp"
#include "hse/error.hpp"
#include "hse/io.hpp"
#include "hse/rng.hpp"

namespace hse {

namespace {

IterationTrace make_trace(int iteration, const std::string& action,
                          const ResultStore& store, const SurrogateModel& model) {
    const auto& targets = store.space().targets();
    IterationTrace t;
    t.iteration = iteration;
    t.n_samples = static_cast<int>(store.ok_records().size());
    t.action = action;
    t.loocv_rmse.resize(static_cast<Eigen::Index>(targets.size()));
    t.rmse_fraction.resize(static_cast<Eigen::Index>(targets.size()));
    for (std::size_t k = 0; k < targets.size(); ++k) {
        const double rmse = model.reports()[k].loocv_rmse;
        const auto [lo, hi] = store.target_range(static_cast<int>(k));
        const double range = hi - lo;
        double fraction;
        if (range > 0.0) {
            fraction = rmse / range;
        } else {
            fraction = rmse == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        }
        t.loocv_rmse[static_cast<Eigen::Index>(k)] = rmse;
        t.rmse_fraction[static_cast<Eigen::Index>(k)] = fraction;
    }
    t.metric = t.rmse_fraction.size() ? t.rmse_fraction.maxCoeff() : 0.0;
    return t;
}

ResultStore with_plan_hash(const ResultStore& store, const std::string& plan_hash) {
    ResultStore out(store.space(), plan_hash);
    for (const auto& [id, r] : store.records()) out.append(r);
    return out;
}

/// Maximum-prediction-variance infill from a seeded LHS pool; candidates
/// closer than 1e-9 to an already chosen or existing point are skipped.
ExperimentPlan variance_infill(const ExperimentPlan& plan, const HyperSpace& space,
                               const SurrogateModel& model, int n_new,
                               std::uint64_t seed) {
    const int pool_size = std::max(256, 64 * n_new);
    const ExperimentPlan pool = plan_lhs(space, pool_size, seed);

    std::vector<std::pair<double, int>> scored;  // (-total variance, index)
    for (int i = 0; i < pool.size(); ++i) {
        const auto& p = pool.points[static_cast<std::size_t>(i)];
        const auto pred = model.predict(p.d, p.u);
        double total = 0.0;
        for (double v : pred.variance) total += v;
        scored.push_back({-total, i});
    }
    std::sort(scored.begin(), scored.end());

    Eigen::MatrixXd existing = plan_distance_matrix(plan, space);
    ExperimentPlan out = plan;
    int next_id = plan.size();
    for (const auto& [neg_var, idx] : scored) {
        if (next_id - plan.size() >= static_cast<std::size_t>(n_new)) break;
        const auto& candidate = pool.points[static_cast<std::size_t>(idx)];
        const Eigen::VectorXd row = encode_for_distance(space, candidate.d, candidate.u);
        bool duplicate = false;
        for (int i = 0; i < existing.rows() && !duplicate; ++i)
            duplicate = (existing.row(i).transpose() - row).norm() < 1e-9;
        if (duplicate) continue;
        existing.conservativeResize(existing.rows() + 1, Eigen::NoChange);
        existing.row(existing.rows() - 1) = row.transpose();
        PlanPoint p = candidate;
        p.run_id = next_id++;
        out.points.push_back(std::move(p));
    }
    if (out.size() != plan.size() + n_new)
        throw Error(ErrorCategory::Runtime, "variance infill pool exhausted");
    if (!out.params.contains("augments")) out.params["augments"] = nlohmann::json::array();
    out.params["augments"].push_back(
        {{"n_new", n_new}, {"seed", seed}, {"strategy", "max_variance"}});
    return out;
}

HyperSpace shrink_design_bounds(const HyperSpace& space, const ParetoFront& front,
                                double padding) {
    std::vector<Variable> design;
    for (std::size_t i = 0; i < space.design().size(); ++i) {
        const Variable& v = space.design()[i];
        if (v.kind() != VarKind::Continuous) {
            design.push_back(v);
            continue;
        }
        double bb_lo = std::numeric_limits<double>::infinity();
        double bb_hi = -bb_lo;
        for (const auto& m : front.members) {
            const double value = std::get<double>(m.d.values[i]);
            bb_lo = std::min(bb_lo, value);
            bb_hi = std::max(bb_hi, value);
        }
        const double pad = padding * (v.upper() - v.lower());
        const double new_lo = std::max(v.lower(), bb_lo - pad);
        const double new_hi = std::min(v.upper(), bb_hi + pad);
        if (new_lo < new_hi) {
            Variable shrunk = Variable::continuous(v.name(), new_lo, new_hi, v.unit());
            if (v.active_when()) shrunk = shrunk.with_active_when(*v.active_when());
            design.push_back(shrunk);
        } else {
            design.push_back(v);
        }
    }
    return HyperSpace(design, space.use_case(), space.targets());
}

}  // namespace

RefineResult refine(const HyperSpace& space, const ExperimentPlan& plan,
                    const ResultStore& store, const SurrogateModel& model,
                    const RefinementPolicy& policy, Simulator& simulator,
                    const SurrogateConfig& config, std::uint64_t seed) {
    if (!(policy.accuracy_threshold > 0.0))
        throw Error(ErrorCategory::Usage, "accuracy threshold must be positive");
    if (policy.max_iterations < 1)
        throw Error(ErrorCategory::Usage, "max_iterations must be at least 1");

    RefineResult out;
    out.space = space;
    out.plan = plan;
    out.store = store;
    out.model = model;
    const int n0 = plan.size();

    out.trace.push_back(make_trace(0, "init", out.store, out.model));

    for (int iteration = 1; iteration <= policy.max_iterations; ++iteration) {
        if (out.trace.back().metric <= policy.accuracy_threshold) {
            out.converged = true;
            return out;
        }
        // Loop-back action order: resample first, then respace, alternating.
        const bool resample = iteration % 2 == 1;
        const std::uint64_t iter_seed = Rng::derive(seed, static_cast<std::uint64_t>(iteration));
        try {
            if (resample) {
                const int n_new = std::max(1, n0 / 2);
                ExperimentPlan augmented =
                    config.family == SurrogateFamily::Kriging
                        ? variance_infill(out.plan, out.space, out.model, n_new, iter_seed)
                        : augment_plan(out.plan, out.space, n_new, iter_seed);
                ResultStore next =
                    with_plan_hash(out.store, plan_content_hash(augmented, out.space));
                RunOptions options;
                options.resume = true;
                const RunSummary summary =
                    run_plan(augmented, out.space, simulator, next, options);
                if (summary.aborted)
                    throw Error(ErrorCategory::Runtime,
                                "campaign aborted by the failure guard");
                out.plan = std::move(augmented);
                out.store = std::move(next);
            } else {
                const ParetoFront front = pareto_front_observed(out.store);
                const HyperSpace shrunk =
                    shrink_design_bounds(out.space, front, policy.respace_padding);
                ExperimentPlan fresh = plan_lhs(shrunk, n0, iter_seed);
                ResultStore next(shrunk, plan_content_hash(fresh, shrunk));
                const RunSummary summary = run_plan(fresh, shrunk, simulator, next);
                if (summary.aborted)
                    throw Error(ErrorCategory::Runtime,
                                "campaign aborted by the failure guard");
                out.space = shrunk;
                out.plan = std::move(fresh);
                out.store = std::move(next);
            }
            out.model = fit_surrogate(out.store, config);
        } catch (const Error& e) {
            out.aborted = true;
            out.abort_reason = e.what();
            return out;
        }
        out.trace.push_back(
            make_trace(iteration, resample ? "resample" : "respace", out.store, out.model));
    }
    out.converged = out.trace.back().metric <= policy.accuracy_threshold;
    return out;
}

void save_trace_csv(const std::vector<IterationTrace>& trace, const HyperSpace& space,
                    const std::string& path) {
    std::vector<std::string> header{"iteration", "n_samples", "action"};
    for (const auto& t : space.targets())
        header.push_back(csv::encode_field("loocv_rmse_" + t.name));
    for (const auto& t : space.targets())
        header.push_back(csv::encode_field("rmse_fraction_" + t.name));
    std::string out = csv::encode_row(header);
    for (const auto& t : trace) {
        std::vector<std::string> row{std::to_string(t.iteration),
                                     std::to_string(t.n_samples),
                                     csv::encode_field(t.action, true)};
        for (Eigen::Index i = 0; i < t.loocv_rmse.size(); ++i)
            row.push_back(format_double(t.loocv_rmse[i]));
        for (Eigen::Index i = 0; i < t.rmse_fraction.size(); ++i)
            row.push_back(format_double(t.rmse_fraction[i]));
        out += csv::encode_row(row);
    }
    write_file_atomic(path, out);
}

std::vector<SurrogateConfig> default_meta_candidates() {
    std::vector<SurrogateConfig> out;
    for (int p = 1; p <= 4; ++p) {
        SurrogateConfig c;
        c.family = SurrogateFamily::Polynomial;
        c.degree = p;
        out.push_back(c);
    }
    for (double nugget : {1e-10, 1e-8, 1e-6}) {
        SurrogateConfig c;
        c.family = SurrogateFamily::Kriging;
        c.kriging.nugget = nugget;
        out.push_back(c);
    }
    return out;
}

MetaFrontResult optimize_surrogate(const ResultStore& store,
                                   const std::vector<SurrogateConfig>& candidates) {
    if (candidates.size() < 2)
        throw Error(ErrorCategory::Usage, "optimize_surrogate needs at least 2 candidates");

    MetaFrontResult out;
    std::vector<TargetVector> meta_points;
    std::vector<int> fitted_index;

    const auto& targets = store.space().targets();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        MetaCandidate entry;
        entry.config = candidates[c];
        try {
            const SurrogateModel model = fit_surrogate(store, candidates[c]);
            double metric = 0.0;
            for (std::size_t k = 0; k < targets.size(); ++k) {
                const double rmse = model.reports()[k].loocv_rmse;
                const auto [lo, hi] = store.target_range(static_cast<int>(k));
                const double range = hi - lo;
                metric += range > 0.0
                              ? rmse / range
                              : (rmse == 0.0 ? 0.0
                                             : std::numeric_limits<double>::infinity());
            }
            metric /= static_cast<double>(targets.size());
            if (metric < 1e-10) metric = 0.0;  // numerically exact fits tie as exact
            entry.loocv_metric = metric;
            entry.parameter_count = model.parameter_count();
            meta_points.push_back({metric, static_cast<double>(entry.parameter_count)});
            fitted_index.push_back(static_cast<int>(c));
        } catch (const Error& e) {
            entry.failed = true;
            entry.error = e.what();
        }
        out.candidates.push_back(std::move(entry));
    }
    if (meta_points.empty())
        throw Error(ErrorCategory::Fit, "every surrogate candidate failed to fit");

    const std::vector<TargetIndicator> meta_targets{
        {"loocv_metric", Orientation::Minimize, "-"},
        {"parameter_count", Orientation::Minimize, "-"},
    };
    for (int idx : non_dominated_indices(meta_points, meta_targets))
        out.front_indices.push_back(fitted_index[static_cast<std::size_t>(idx)]);
    return out;
}

void save_meta_front_csv(const MetaFrontResult& result, const std::string& path) {
    std::string out =
        csv::encode_row({"candidate", "config", "status", "loocv_metric",
                         "parameter_count", "on_front", "error"});
    for (std::size_t c = 0; c < result.candidates.size(); ++c) {
        const MetaCandidate& m = result.candidates[c];
        const bool on_front =
            std::find(result.front_indices.begin(), result.front_indices.end(),
                      static_cast<int>(c)) != result.front_indices.end();
        std::vector<std::string> row{
            std::to_string(c),
            csv::encode_field(m.config.describe(), true),
            m.failed ? "failed" : "ok",
            m.failed ? "" : format_double(m.loocv_metric),
            m.failed ? "" : std::to_string(m.parameter_count),
            on_front ? "1" : "0",
            csv::encode_field(m.error),
        };
        out += csv::encode_row(row);
    }
    write_file_atomic(path, out);
}

}  // namespace hse
