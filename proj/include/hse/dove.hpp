#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "hse/hyperspace.hpp"

namespace hse {

enum class PlanMethod { Lhs, MaximinLhs, FullFactorial, MonteCarlo };

const char* plan_method_name(PlanMethod m);
PlanMethod plan_method_from_name(const std::string& name);

struct PlanPoint {
    int run_id = 0;
    DesignPoint d;
    UseCasePoint u;
};

/// A space-filling experimental test plan over D x U. Exactly reproducible
/// from (space, method, params, seed); run_ids are contiguous from 0.
struct ExperimentPlan {
    std::string space_hash;
    PlanMethod method = PlanMethod::Lhs;
    std::uint64_t seed = 0;
    nlohmann::json params = nlohmann::json::object();
    std::vector<PlanPoint> points;

    int size() const { return static_cast<int>(points.size()); }
};

/// Latin hypercube sample of size n. Every continuous coordinate gets
/// exactly one point per 1/n stratum; discrete and categorical coordinates
/// are stratified over their levels (counts differ by at most one).
ExperimentPlan plan_lhs(const HyperSpace& space, int n, std::uint64_t seed);

/// Best of `candidates` LHS plans by maximum minimal pairwise distance in
/// encoded space (candidate 0 uses `seed` itself, so candidates=1 equals
/// plan_lhs). Ties break to the lowest candidate index.
ExperimentPlan plan_maximin_lhs(const HyperSpace& space, int n, std::uint64_t seed,
                                int candidates);

/// Cartesian grid: equi-spaced levels per continuous variable, all declared
/// levels/labels otherwise. Row-major over declaration order (last variable
/// fastest). Fails when the grid would exceed `cap` points.
ExperimentPlan plan_full_factorial(const HyperSpace& space, int levels_per_continuous,
                                   std::int64_t cap = 1000000);

/// Unstratified uniform sampling; baseline against LHS.
ExperimentPlan plan_monte_carlo(const HyperSpace& space, int n, std::uint64_t seed);

/// LHS sample over an arbitrary variable list, one value row per sample.
/// An empty variable list yields a single empty row.
std::vector<std::vector<Value>> lhs_value_rows(const std::vector<Variable>& vars, int n,
                                               std::uint64_t seed);

/// Greedy maximin infill: adds n_new points drawn from a seeded LHS
/// candidate pool (pool_size 0 = auto), each maximizing the minimal
/// distance to existing plus already-added points.
ExperimentPlan augment_plan(const ExperimentPlan& existing, const HyperSpace& space,
                            int n_new, std::uint64_t seed, int pool_size = 0);

/// Distance encoding: continuous/discrete as the normalized coordinate,
/// one-hot blocks scaled by 1/sqrt(2) so a category flip contributes
/// distance 1 (a full continuous-range traversal).
Eigen::VectorXd encode_for_distance(const HyperSpace& space, const DesignPoint& d,
                                    const UseCasePoint& u);

/// Rows of encode_for_distance for every plan point.
Eigen::MatrixXd plan_distance_matrix(const ExperimentPlan& plan, const HyperSpace& space);

/// Minimal pairwise Euclidean distance between plan points in encoded
/// space; +inf for plans with fewer than two points.
double min_pairwise_distance(const ExperimentPlan& plan, const HyperSpace& space);

/// Core of augment_plan, exposed for direct testing: selects n_new row
/// indices from `pool`, greedily maximizing distance to `existing` and the
/// already selected rows. Zero-distance candidates are never selected.
std::vector<int> greedy_maximin_select(const Eigen::MatrixXd& existing,
                                       const Eigen::MatrixXd& pool, int n_new);

/// Plan CSV: header `run_id,<design names...>,<use-case names...>`, labels
/// quoted, LF endings. A `<path>.meta.json` sidecar records method, seed,
/// parameters and the space hash.
void save_plan_csv(const ExperimentPlan& plan, const HyperSpace& space,
                   const std::string& path);
std::string plan_csv_bytes(const ExperimentPlan& plan, const HyperSpace& space);

/// Loads a plan saved by save_plan_csv; requires the sidecar and checks the
/// space hash.
ExperimentPlan load_plan_csv(const std::string& path, const HyperSpace& space);

/// Content hash over the canonical plan bytes plus planning metadata.
std::string plan_content_hash(const ExperimentPlan& plan, const HyperSpace& space);

}  // namespace hse
