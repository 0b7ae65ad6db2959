#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hse/analysis.hpp"
#include "hse/dove.hpp"
#include "hse/hyperspace.hpp"
#include "hse/runner.hpp"
#include "hse/surrogate.hpp"

namespace hse {

/// Accuracy gate and loop-back rules for the iterative refinement loop.
struct RefinementPolicy {
    /// Stop once every target's LOOCV-RMSE falls below this fraction of its
    /// observed range.
    double accuracy_threshold = 0.05;
    int max_iterations = 5;
    /// Respace: shrink continuous design bounds to the front bounding box
    /// padded by this fraction of the current range.
    double respace_padding = 0.10;
};

struct IterationTrace {
    int iteration = 0;
    int n_samples = 0;
    std::string action;            // "init", "resample", "respace"
    Eigen::VectorXd loocv_rmse;    // per target
    Eigen::VectorXd rmse_fraction; // per target, relative to observed range
    double metric = 0.0;           // max fraction, gated against the threshold
};

struct RefineResult {
    std::vector<IterationTrace> trace;
    HyperSpace space;
    ExperimentPlan plan;
    ResultStore store;
    SurrogateModel model;
    bool converged = false;
    bool aborted = false;
    std::string abort_reason;
};

/// Iterative loop: check accuracy, stop under threshold, otherwise apply
/// the loop-back actions in resample-then-respace alternation, run the new
/// experiments and refit. Resampling uses greedy maximin infill of half the
/// original sample count, or maximum-prediction-variance infill when the
/// model family is kriging. Respacing re-plans inside the shrunken space.
RefineResult refine(const HyperSpace& space, const ExperimentPlan& plan,
                    const ResultStore& store, const SurrogateModel& model,
                    const RefinementPolicy& policy, Simulator& simulator,
                    const SurrogateConfig& config, std::uint64_t seed);

void save_trace_csv(const std::vector<IterationTrace>& trace, const HyperSpace& space,
                    const std::string& path);

struct MetaCandidate {
    SurrogateConfig config;
    bool failed = false;
    std::string error;
    /// Mean over targets of LOOCV-RMSE / observed range; values below 1e-10
    /// are clamped to zero so numerically-exact fits compare as exact.
    double loocv_metric = 0.0;
    int parameter_count = 0;
};

struct MetaFrontResult {
    std::vector<MetaCandidate> candidates;
    std::vector<int> front_indices;  // into candidates, ascending
};

/// Self-recursive step: each surrogate configuration becomes a design point
/// in a meta space with targets (accuracy metric, parameter count), both
/// minimized; the returned front reuses the analysis dominance filter.
MetaFrontResult optimize_surrogate(const ResultStore& store,
                                   const std::vector<SurrogateConfig>& candidates);

/// p in 1..4 plus kriging at nugget 1e-10/1e-8/1e-6.
std::vector<SurrogateConfig> default_meta_candidates();

void save_meta_front_csv(const MetaFrontResult& result, const std::string& path);

}  // namespace hse
