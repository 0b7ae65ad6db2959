#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hse/dove.hpp"
#include "hse/hyperspace.hpp"

namespace hse {

enum class RunStatus { Ok, Failed, Skipped };

const char* run_status_name(RunStatus s);

/// Result of one simulator evaluation.
struct SimOutcome {
    bool ok = false;
    TargetVector targets;
    std::string reason;

    static SimOutcome success(TargetVector t) { return {true, std::move(t), {}}; }
    static SimOutcome failure(std::string why) { return {false, {}, std::move(why)}; }
};

/// Behavioral contract of a Modeling and Simulation Environment adapter.
/// evaluate must be deterministic for fixed (d,u) and safe for concurrent
/// invocation unless max_parallelism() returns 1.
class Simulator {
public:
    virtual ~Simulator() = default;

    virtual SimOutcome evaluate(int run_id, const DesignPoint& d, const UseCasePoint& u) = 0;

    virtual int max_parallelism() const { return std::numeric_limits<int>::max(); }
};

/// Wraps a plain callable as a Simulator.
class FunctionSimulator : public Simulator {
public:
    using Fn = std::function<SimOutcome(const DesignPoint&, const UseCasePoint&)>;

    explicit FunctionSimulator(Fn fn) : fn_(std::move(fn)) {}

    SimOutcome evaluate(int, const DesignPoint& d, const UseCasePoint& u) override {
        return fn_(d, u);
    }

private:
    Fn fn_;
};

struct ExperimentRecord {
    int run_id = 0;
    DesignPoint d;
    UseCasePoint u;
    RunStatus status = RunStatus::Failed;
    TargetVector targets;  // empty unless status == Ok
    double duration_s = 0.0;
    std::string reason;
};

/// Append-only storage unit binding (d,u) experiments to their target
/// measures. One record per run_id; iteration is always by ascending
/// run_id regardless of completion order. Optionally bound to a CSV file
/// that receives each record as it is appended (crash-resumable).
class ResultStore {
public:
    ResultStore() = default;
    ResultStore(HyperSpace space, std::string plan_hash);

    const HyperSpace& space() const { return space_; }
    const std::string& plan_hash() const { return plan_hash_; }

    /// Throws Error(Integrity) on duplicate run_id.
    void append(ExperimentRecord record);

    const std::map<int, ExperimentRecord>& records() const { return records_; }
    std::vector<const ExperimentRecord*> ok_records() const;
    bool contains(int run_id) const { return records_.count(run_id) != 0; }
    int size() const { return static_cast<int>(records_.size()); }

    /// Observed [min,max] of one target over ok records.
    std::pair<double, double> target_range(int target_index) const;

    /// CSV bytes in canonical order. `mask_duration` zeroes the wall-time
    /// column, which is observational and excluded from content comparisons.
    std::string csv_bytes(bool mask_duration = false) const;

    /// Writes CSV + `<path>.meta.json` sidecar (space document, plan hash).
    void save(const std::string& path) const;
    static ResultStore load(const std::string& path);

    /// Streams appended records to `path` as they arrive. The file is
    /// rewritten canonically by finalize_bound_file().
    void bind_file(const std::string& path);
    void finalize_bound_file();

private:
    std::vector<std::string> record_row(const ExperimentRecord& r, bool mask_duration) const;
    std::vector<std::string> header_row() const;
    void write_sidecar(const std::string& path) const;

    HyperSpace space_;
    std::string plan_hash_;
    std::map<int, ExperimentRecord> records_;
    std::string bound_path_;
    bool bound_header_written_ = false;
};

/// Spec-facing alias.
inline ResultStore load_store(const std::string& path) { return ResultStore::load(path); }

struct RunOptions {
    int parallelism = 1;
    /// Abort the campaign once failed/total exceeds this fraction;
    /// remaining points are recorded as skipped.
    double max_failure_fraction = 0.5;
    bool resume = false;
};

struct RunSummary {
    int ok = 0;
    int failed = 0;
    int skipped = 0;
    double wall_s = 0.0;
    bool aborted = false;
};

/// Executes every plan point that is not already in the store. Failures are
/// recorded, never fatal (subject to the max-failure guard). The store must
/// be empty or a resumable partial store for the same plan hash.
RunSummary run_plan(const ExperimentPlan& plan, const HyperSpace& space, Simulator& simulator,
                    ResultStore& store, const RunOptions& options = {});

/// Adapter for an external Modeling and Simulation Environment: spawns
/// `command` through /bin/sh and speaks the line protocol over its
/// stdin/stdout. Requests and responses are single-line JSON objects
/// matched by run_id; out-of-order responses are fine.
class ExternalProcessSimulator : public Simulator {
public:
    ExternalProcessSimulator(std::string command, const HyperSpace& space,
                             double timeout_s = 300.0);
    ~ExternalProcessSimulator() override;

    SimOutcome evaluate(int run_id, const DesignPoint& d, const UseCasePoint& u) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Serves the line protocol over the given streams: reads one request per
/// line, evaluates, writes one response per line. Returns on EOF. Used by
/// the bundled exemplar executables.
void serve_line_protocol(std::istream& in, std::ostream& out, Simulator& simulator,
                         const HyperSpace& space);

}  // namespace hse
