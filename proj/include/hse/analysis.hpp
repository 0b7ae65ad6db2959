#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hse/hyperspace.hpp"
#include "hse/runner.hpp"
#include "hse/surrogate.hpp"

namespace hse {

/// Pareto dominance under the declared per-target orientations: a is no
/// worse than b everywhere and strictly better somewhere.
bool dominates(const TargetVector& a, const TargetVector& b,
               const std::vector<TargetIndicator>& targets);

/// Indices of the maximal non-dominated subset, ascending. Exact duplicates
/// keep only the lowest index. Archive-based cull; the O(n^2) brute-force
/// filter lives in the test suite as its oracle.
std::vector<int> non_dominated_indices(const std::vector<TargetVector>& points,
                                       const std::vector<TargetIndicator>& targets);

struct FrontMember {
    int id = 0;  // run_id (observed) or grid index (surrogate)
    DesignPoint d;
    TargetVector t;
};

/// Use-case-specific set of non-dominated design alternatives with their
/// observed or predicted targets.
struct ParetoFront {
    std::string source;  // "store" or "surrogate"
    std::optional<UseCasePoint> use_case;  // absent = pooled observed data
    std::vector<FrontMember> members;
    int evaluated = 0;
    int excluded_extrapolation = 0;
};

struct ObservedFrontOptions {
    /// Keep only records matching this use case: exact equality for
    /// discrete/categorical coordinates, +-tolerance on encoded values for
    /// continuous ones.
    std::optional<UseCasePoint> use_case;
    double tolerance = 1e-9;
    /// Exact design-variable filters (e.g. one topology alternative).
    std::vector<std::pair<std::string, Value>> design_equals;
};

ParetoFront pareto_front_observed(const ResultStore& store,
                                  const ObservedFrontOptions& options = {});

/// Evaluation grid over the design space at a fixed use case.
struct DesignGridSpec {
    int default_steps = 11;
    std::map<std::string, int> steps;  // per continuous design variable
    std::int64_t cap = 200000;
};

/// Predicts over the grid at fixed u and filters; extrapolation-flagged
/// grid points are excluded and counted.
ParetoFront pareto_front_surrogate(const SurrogateModel& model, const UseCasePoint& u,
                                   const DesignGridSpec& grid = {});

struct EnvelopeBand {
    std::string group;
    std::vector<double> lo;  // per grid value; NaN when no data
    std::vector<double> hi;
};

/// Best/worst band of one target versus a swept variable, per group
/// (typically one band per topological alternative). For a minimize target
/// "best" is lo, for a maximize target it is hi.
struct Envelope {
    std::string sweep;
    std::vector<double> grid;
    std::string target;
    Orientation orientation = Orientation::Minimize;
    std::vector<EnvelopeBand> bands;
    int samples = 0;
    std::uint64_t seed = 0;
};

/// Envelope from a surrogate: per grid value and group, min/max of the
/// prediction over one seeded LHS sample of all remaining dimensions.
Envelope potential_envelope_model(const SurrogateModel& model, const std::string& sweep,
                                  const std::vector<double>& grid,
                                  const std::string& target,
                                  const std::string& group_by = "", int samples = 256,
                                  std::uint64_t seed = 0);

/// Envelope from observed records: rows whose sweep value matches a grid
/// value within tolerance. An empty grid uses the distinct observed sweep
/// values.
Envelope potential_envelope_store(const ResultStore& store, const std::string& sweep,
                                  std::vector<double> grid, const std::string& target,
                                  const std::string& group_by = "",
                                  double tolerance = 1e-9);

struct TradeoffRow {
    FrontMember member;
    /// Exchange rates against the previous row: delta t_j / delta t_0 for
    /// j = 1..k-1. Empty on the first row.
    std::vector<double> exchange_rates;
};

/// Front sorted best-first by the first target, with per-step exchange
/// rates between adjacent members.
std::vector<TradeoffRow> tradeoff_table(const ParetoFront& front,
                                        const std::vector<TargetIndicator>& targets);

// ------------------------------------------------------------------ export

void save_front_csv(const ParetoFront& front, const HyperSpace& space,
                    const std::string& path);

/// Fig-5-style scatter: optional backdrop of all evaluated points plus one
/// polyline per front. Plots the first two targets.
void save_front_svg(const std::string& path, const HyperSpace& space,
                    const std::vector<ParetoFront>& fronts,
                    const std::vector<std::string>& labels,
                    const std::vector<TargetVector>& backdrop = {});

void save_envelope_csv(const Envelope& envelope, const std::string& path);

void save_envelope_svg(const Envelope& envelope, const std::string& path);

}  // namespace hse
