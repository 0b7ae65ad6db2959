#include "hse/dove.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hse/csv.hpp"
#include "hse/error.hpp"
#include "hse/hash.hpp"
#include "hse/io.hpp"
#include "hse/rng.hpp"

namespace hse {

using nlohmann::json;

const char* plan_method_name(PlanMethod m) {
    switch (m) {
        case PlanMethod::Lhs: return "lhs";
        case PlanMethod::MaximinLhs: return "maximin_lhs";
        case PlanMethod::FullFactorial: return "full_factorial";
        case PlanMethod::MonteCarlo: return "monte_carlo";
    }
    return "lhs";
}

PlanMethod plan_method_from_name(const std::string& name) {
    if (name == "lhs") return PlanMethod::Lhs;
    if (name == "maximin_lhs" || name == "maximin") return PlanMethod::MaximinLhs;
    if (name == "full_factorial" || name == "factorial") return PlanMethod::FullFactorial;
    if (name == "monte_carlo") return PlanMethod::MonteCarlo;
    throw Error(ErrorCategory::Schema, "unknown plan method '" + name + "'");
}

namespace {

std::vector<const Variable*> all_vars(const HyperSpace& space) {
    std::vector<const Variable*> vars;
    for (const auto& v : space.design()) vars.push_back(&v);
    for (const auto& v : space.use_case()) vars.push_back(&v);
    return vars;
}

// Keeps each sample strictly inside its stratum so stratum membership
// survives floating-point rounding for any realistic n.
double clamped_unit(double u) {
    return std::min(std::max(u, 1e-9), 1.0 - 1e-9);
}

/// One stratified column per variable: continuous values in (0,1), level
/// indices for discrete/categorical. Consumes the RNG in declaration order.
std::vector<std::vector<double>> lhs_columns(const std::vector<const Variable*>& vars,
                                             int n, Rng& rng) {
    std::vector<std::vector<double>> cols;
    cols.reserve(vars.size());
    for (const Variable* v : vars) {
        std::vector<double> col(static_cast<std::size_t>(n));
        if (v->kind() == VarKind::Continuous) {
            for (int i = 0; i < n; ++i)
                col[static_cast<std::size_t>(i)] =
                    (static_cast<double>(i) + clamped_unit(rng.uniform01())) / n;
        } else {
            // Balanced level assignment: counts differ by at most one.
            const int levels = v->kind() == VarKind::Discrete
                                   ? static_cast<int>(v->levels().size())
                                   : static_cast<int>(v->labels().size());
            for (int i = 0; i < n; ++i)
                col[static_cast<std::size_t>(i)] = static_cast<double>(i % levels);
        }
        rng.shuffle(col);
        cols.push_back(std::move(col));
    }
    return cols;
}

ExperimentPlan assemble_plan(const HyperSpace& space,
                             const std::vector<std::vector<double>>& cols, int n,
                             PlanMethod method, std::uint64_t seed, json params) {
    ExperimentPlan plan;
    plan.space_hash = space.content_hash();
    plan.method = method;
    plan.seed = seed;
    plan.params = std::move(params);
    plan.points.reserve(static_cast<std::size_t>(n));

    const auto vars = all_vars(space);
    const std::size_t n_design = space.design().size();
    for (int i = 0; i < n; ++i) {
        PlanPoint p;
        p.run_id = i;
        for (std::size_t j = 0; j < vars.size(); ++j) {
            const Variable& v = *vars[j];
            const double c = cols[j][static_cast<std::size_t>(i)];
            Value value;
            switch (v.kind()) {
                case VarKind::Continuous:
                    value = v.lower() + c * (v.upper() - v.lower());
                    break;
                case VarKind::Discrete:
                    value = v.levels()[static_cast<std::size_t>(c)];
                    break;
                case VarKind::Categorical:
                    value = v.labels()[static_cast<std::size_t>(c)];
                    break;
            }
            if (j < n_design)
                p.d.values.push_back(std::move(value));
            else
                p.u.values.push_back(std::move(value));
        }
        plan.points.push_back(std::move(p));
    }
    return plan;
}

}  // namespace

ExperimentPlan plan_lhs(const HyperSpace& space, int n, std::uint64_t seed) {
    space.require_valid();
    if (n < 1) throw Error(ErrorCategory::Usage, "plan_lhs: n must be at least 1");
    Rng rng(seed);
    const auto vars = all_vars(space);
    const auto cols = lhs_columns(vars, n, rng);
    return assemble_plan(space, cols, n, PlanMethod::Lhs, seed, {{"n", n}});
}

std::vector<std::vector<Value>> lhs_value_rows(const std::vector<Variable>& vars, int n,
                                               std::uint64_t seed) {
    if (vars.empty()) return {std::vector<Value>{}};
    if (n < 1) throw Error(ErrorCategory::Usage, "lhs_value_rows: n must be at least 1");
    Rng rng(seed);
    std::vector<const Variable*> ptrs;
    for (const auto& v : vars) ptrs.push_back(&v);
    const auto cols = lhs_columns(ptrs, n, rng);
    std::vector<std::vector<Value>> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& row = rows[static_cast<std::size_t>(i)];
        row.reserve(vars.size());
        for (std::size_t j = 0; j < vars.size(); ++j) {
            const Variable& v = vars[j];
            const double c = cols[j][static_cast<std::size_t>(i)];
            switch (v.kind()) {
                case VarKind::Continuous:
                    row.emplace_back(v.lower() + c * (v.upper() - v.lower()));
                    break;
                case VarKind::Discrete:
                    row.emplace_back(v.levels()[static_cast<std::size_t>(c)]);
                    break;
                case VarKind::Categorical:
                    row.emplace_back(v.labels()[static_cast<std::size_t>(c)]);
                    break;
            }
        }
    }
    return rows;
}

ExperimentPlan plan_monte_carlo(const HyperSpace& space, int n, std::uint64_t seed) {
    space.require_valid();
    if (n < 1) throw Error(ErrorCategory::Usage, "plan_monte_carlo: n must be at least 1");
    Rng rng(seed);
    const auto vars = all_vars(space);
    std::vector<std::vector<double>> cols;
    cols.reserve(vars.size());
    for (const Variable* v : vars) {
        std::vector<double> col(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            if (v->kind() == VarKind::Continuous) {
                col[static_cast<std::size_t>(i)] = clamped_unit(rng.uniform01());
            } else {
                const int levels = v->kind() == VarKind::Discrete
                                       ? static_cast<int>(v->levels().size())
                                       : static_cast<int>(v->labels().size());
                col[static_cast<std::size_t>(i)] = static_cast<double>(
                    rng.next_below(static_cast<std::uint64_t>(levels)));
            }
        }
        cols.push_back(std::move(col));
    }
    auto plan = assemble_plan(space, cols, n, PlanMethod::MonteCarlo, seed, {{"n", n}});
    return plan;
}

Eigen::VectorXd encode_for_distance(const HyperSpace& space, const DesignPoint& d,
                                    const UseCasePoint& u) {
    Eigen::VectorXd x = space.encode_joint(d, u);
    // Scale one-hot blocks so a category flip costs exactly 1.
    int at = 0;
    auto scale_blocks = [&](const std::vector<Variable>& vars) {
        for (const auto& v : vars) {
            if (v.kind() == VarKind::Categorical)
                x.segment(at, v.encoded_width()) *= 1.0 / std::sqrt(2.0);
            at += v.encoded_width();
        }
    };
    scale_blocks(space.design());
    scale_blocks(space.use_case());
    return x;
}

Eigen::MatrixXd plan_distance_matrix(const ExperimentPlan& plan, const HyperSpace& space) {
    const int n = plan.size();
    Eigen::MatrixXd rows(n, space.joint_encoded_dim());
    for (int i = 0; i < n; ++i)
        rows.row(i) = encode_for_distance(space, plan.points[static_cast<std::size_t>(i)].d,
                                          plan.points[static_cast<std::size_t>(i)].u);
    return rows;
}

double min_pairwise_distance(const ExperimentPlan& plan, const HyperSpace& space) {
    const Eigen::MatrixXd rows = plan_distance_matrix(plan, space);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < rows.rows(); ++i)
        for (int j = i + 1; j < rows.rows(); ++j)
            best = std::min(best, (rows.row(i) - rows.row(j)).norm());
    return best;
}

ExperimentPlan plan_maximin_lhs(const HyperSpace& space, int n, std::uint64_t seed,
                                int candidates) {
    if (n < 2) throw Error(ErrorCategory::Usage, "plan_maximin_lhs: n must be at least 2");
    if (candidates < 1)
        throw Error(ErrorCategory::Usage, "plan_maximin_lhs: candidates must be at least 1");

    ExperimentPlan best;
    double best_dist = -1.0;
    for (int c = 0; c < candidates; ++c) {
        // Candidate 0 uses the seed itself so candidates=1 == plan_lhs.
        const std::uint64_t sub_seed = c == 0 ? seed : Rng::derive(seed, static_cast<std::uint64_t>(c));
        ExperimentPlan candidate = plan_lhs(space, n, sub_seed);
        const double dist = min_pairwise_distance(candidate, space);
        if (dist > best_dist) {
            best_dist = dist;
            best = std::move(candidate);
        }
    }
    best.method = PlanMethod::MaximinLhs;
    best.seed = seed;
    best.params = {{"n", n}, {"candidates", candidates}};
    return best;
}

ExperimentPlan plan_full_factorial(const HyperSpace& space, int levels_per_continuous,
                                   std::int64_t cap) {
    space.require_valid();
    if (levels_per_continuous < 1)
        throw Error(ErrorCategory::Usage,
                    "plan_full_factorial: levels_per_continuous must be at least 1");

    const auto vars = all_vars(space);
    std::int64_t total = 1;
    std::vector<int> widths;
    for (const Variable* v : vars) {
        int w = 0;
        switch (v->kind()) {
            case VarKind::Continuous: w = levels_per_continuous; break;
            case VarKind::Discrete: w = static_cast<int>(v->levels().size()); break;
            case VarKind::Categorical: w = static_cast<int>(v->labels().size()); break;
        }
        widths.push_back(w);
        if (total > cap / w + 1) total = cap + 1;  // avoid overflow, already too big
        else total *= w;
        if (total > cap) {
            throw Error(ErrorCategory::PlanTooLarge,
                        "full factorial plan too large: " + std::to_string(total) +
                            " > " + std::to_string(cap));
        }
    }

    const int n = static_cast<int>(total);
    std::vector<std::vector<double>> cols(vars.size(),
                                          std::vector<double>(static_cast<std::size_t>(n)));
    // Row-major: the last declared variable cycles fastest.
    std::int64_t repeat = 1;
    for (int j = static_cast<int>(vars.size()) - 1; j >= 0; --j) {
        const int w = widths[static_cast<std::size_t>(j)];
        for (int i = 0; i < n; ++i) {
            const int idx = static_cast<int>((i / repeat) % w);
            double c;
            if (vars[static_cast<std::size_t>(j)]->kind() == VarKind::Continuous) {
                c = w == 1 ? 0.5 : static_cast<double>(idx) / (w - 1);
            } else {
                c = static_cast<double>(idx);
            }
            cols[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = c;
        }
        repeat *= w;
    }
    return assemble_plan(space, cols, n, PlanMethod::FullFactorial, 0,
                         {{"levels_per_continuous", levels_per_continuous}, {"cap", cap}});
}

std::vector<int> greedy_maximin_select(const Eigen::MatrixXd& existing,
                                       const Eigen::MatrixXd& pool, int n_new) {
    std::vector<int> selected;
    if (n_new <= 0 || pool.rows() == 0) return selected;

    // min distance from every pool row to the existing set, updated as we pick.
    Eigen::VectorXd min_dist(pool.rows());
    for (int i = 0; i < pool.rows(); ++i) {
        double d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < existing.rows(); ++j)
            d = std::min(d, (pool.row(i) - existing.row(j)).norm());
        min_dist[i] = d;
    }
    std::vector<bool> taken(static_cast<std::size_t>(pool.rows()), false);
    for (int pick = 0; pick < n_new; ++pick) {
        int best = -1;
        for (int i = 0; i < pool.rows(); ++i) {
            if (taken[static_cast<std::size_t>(i)] || min_dist[i] <= 0.0) continue;
            if (best < 0 || min_dist[i] > min_dist[best]) best = i;
        }
        if (best < 0) break;  // pool exhausted or only duplicates left
        taken[static_cast<std::size_t>(best)] = true;
        selected.push_back(best);
        for (int i = 0; i < pool.rows(); ++i) {
            if (!taken[static_cast<std::size_t>(i)])
                min_dist[i] = std::min(min_dist[i], (pool.row(i) - pool.row(best)).norm());
        }
    }
    return selected;
}

ExperimentPlan augment_plan(const ExperimentPlan& existing, const HyperSpace& space,
                            int n_new, std::uint64_t seed, int pool_size) {
    if (existing.points.empty())
        throw Error(ErrorCategory::Usage, "augment_plan: existing plan is empty");
    if (existing.space_hash != space.content_hash())
        throw Error(ErrorCategory::Mismatch, "augment_plan: plan does not match the space");
    if (n_new == 0) return existing;
    if (n_new < 0) throw Error(ErrorCategory::Usage, "augment_plan: n_new must be >= 0");

    if (pool_size <= 0) pool_size = std::max(256, 64 * n_new);
    const ExperimentPlan pool_plan = plan_lhs(space, pool_size, seed);

    const Eigen::MatrixXd existing_rows = plan_distance_matrix(existing, space);
    const Eigen::MatrixXd pool_rows = plan_distance_matrix(pool_plan, space);
    const std::vector<int> picks = greedy_maximin_select(existing_rows, pool_rows, n_new);
    if (static_cast<int>(picks.size()) < n_new)
        throw Error(ErrorCategory::Runtime,
                    "augment_plan: candidate pool exhausted before " +
                        std::to_string(n_new) + " distinct points were found");

    ExperimentPlan out = existing;
    int next_id = existing.size();
    for (int idx : picks) {
        PlanPoint p = pool_plan.points[static_cast<std::size_t>(idx)];
        p.run_id = next_id++;
        out.points.push_back(std::move(p));
    }
    json event = {{"n_new", n_new}, {"seed", seed}, {"pool_size", pool_size}};
    if (!out.params.contains("augments")) out.params["augments"] = json::array();
    out.params["augments"].push_back(event);
    return out;
}

// --------------------------------------------------------------------- IO

std::string plan_csv_bytes(const ExperimentPlan& plan, const HyperSpace& space) {
    std::string out;
    std::vector<std::string> header{"run_id"};
    for (const auto& v : space.design()) header.push_back(csv::encode_field(v.name()));
    for (const auto& v : space.use_case()) header.push_back(csv::encode_field(v.name()));
    out += csv::encode_row(header);

    auto field = [](const Value& value) {
        if (std::holds_alternative<double>(value))
            return csv::encode_field(format_double(std::get<double>(value)));
        return csv::encode_field(std::get<std::string>(value), /*force_quote=*/true);
    };
    for (const auto& p : plan.points) {
        std::vector<std::string> row{std::to_string(p.run_id)};
        for (const auto& value : p.d.values) row.push_back(field(value));
        for (const auto& value : p.u.values) row.push_back(field(value));
        out += csv::encode_row(row);
    }
    return out;
}

std::string plan_content_hash(const ExperimentPlan& plan, const HyperSpace& space) {
    std::string material = plan.space_hash;
    material += '\n';
    material += plan_method_name(plan.method);
    material += '\n';
    material += std::to_string(plan.seed);
    material += '\n';
    material += plan.params.dump();
    material += '\n';
    material += plan_csv_bytes(plan, space);
    return content_hash_hex(material);
}

void save_plan_csv(const ExperimentPlan& plan, const HyperSpace& space,
                   const std::string& path) {
    write_file_atomic(path, plan_csv_bytes(plan, space));
    json meta;
    meta["format"] = "hse-plan";
    meta["version"] = 1;
    meta["method"] = plan_method_name(plan.method);
    meta["seed"] = plan.seed;
    meta["params"] = plan.params;
    meta["n"] = plan.size();
    meta["space_hash"] = plan.space_hash;
    meta["plan_hash"] = plan_content_hash(plan, space);
    write_file_atomic(path + ".meta.json", meta.dump(2) + "\n");
}

ExperimentPlan load_plan_csv(const std::string& path, const HyperSpace& space) {
    const auto rows = csv::parse(read_file(path));
    if (rows.empty()) throw Error(ErrorCategory::Schema, "plan CSV has no header: " + path);

    json meta;
    try {
        meta = json::parse(read_file(path + ".meta.json"));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCategory::Schema,
                    "cannot parse plan sidecar " + path + ".meta.json: " + e.what());
    }
    if (meta.value("format", "") != "hse-plan")
        throw Error(ErrorCategory::Schema, "not a plan sidecar: " + path + ".meta.json");
    if (meta.value("space_hash", "") != space.content_hash())
        throw Error(ErrorCategory::Mismatch,
                    "plan was generated for a different space: " + path);

    const auto& header = rows.front();
    std::vector<std::string> expected{"run_id"};
    for (const auto& v : space.design()) expected.push_back(v.name());
    for (const auto& v : space.use_case()) expected.push_back(v.name());
    if (header != expected)
        throw Error(ErrorCategory::Schema, "plan CSV header does not match the space");

    ExperimentPlan plan;
    plan.space_hash = space.content_hash();
    plan.method = plan_method_from_name(meta.value("method", "lhs"));
    plan.seed = meta.value("seed", 0ULL);
    plan.params = meta.value("params", json::object());

    const std::size_t n_design = space.design().size();
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != expected.size())
            throw Error(ErrorCategory::Schema,
                        "plan CSV row " + std::to_string(r) + " has wrong field count");
        PlanPoint p;
        p.run_id = static_cast<int>(parse_long(row[0]));
        for (std::size_t j = 0; j < n_design + space.use_case().size(); ++j) {
            const Variable& v = j < n_design ? space.design()[j]
                                             : space.use_case()[j - n_design];
            Value value = v.kind() == VarKind::Categorical ? Value(row[j + 1])
                                                           : Value(parse_double(row[j + 1]));
            if (j < n_design)
                p.d.values.push_back(std::move(value));
            else
                p.u.values.push_back(std::move(value));
        }
        auto bad = space.validate_design_point(p.d);
        auto bad_u = space.validate_use_case_point(p.u);
        bad.insert(bad.end(), bad_u.begin(), bad_u.end());
        if (!bad.empty())
            throw Error(ErrorCategory::Validation,
                        "plan row " + std::to_string(r) + ": " + bad.front().message);
        plan.points.push_back(std::move(p));
    }
    for (int i = 0; i < plan.size(); ++i) {
        if (plan.points[static_cast<std::size_t>(i)].run_id != i)
            throw Error(ErrorCategory::Integrity,
                        "plan run_ids are not contiguous from 0");
    }
    return plan;
}

}  // namespace hse
