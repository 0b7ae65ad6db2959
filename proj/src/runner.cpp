#include "hse/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "hse/csv.hpp"
#include "hse/error.hpp"
#include "hse/io.hpp"

namespace hse {

using nlohmann::json;

const char* run_status_name(RunStatus s) {
    switch (s) {
        case RunStatus::Ok: return "ok";
        case RunStatus::Failed: return "failed";
        case RunStatus::Skipped: return "skipped";
    }
    return "failed";
}

namespace {

RunStatus run_status_from_name(const std::string& name) {
    if (name == "ok") return RunStatus::Ok;
    if (name == "failed") return RunStatus::Failed;
    if (name == "skipped") return RunStatus::Skipped;
    throw Error(ErrorCategory::Schema, "unknown record status '" + name + "'");
}

}  // namespace

// -------------------------------------------------------------- ResultStore

ResultStore::ResultStore(HyperSpace space, std::string plan_hash)
    : space_(std::move(space)), plan_hash_(std::move(plan_hash)) {}

void ResultStore::append(ExperimentRecord record) {
    if (records_.count(record.run_id)) {
        throw Error(ErrorCategory::Integrity,
                    "duplicate record for run " + std::to_string(record.run_id));
    }
    const int k = static_cast<int>(space_.targets().size());
    if (record.status == RunStatus::Ok) {
        bool finite = static_cast<int>(record.targets.size()) == k;
        for (double t : record.targets) finite = finite && std::isfinite(t);
        if (!finite) {
            throw Error(ErrorCategory::Integrity,
                        "ok record " + std::to_string(record.run_id) +
                            " must carry " + std::to_string(k) + " finite targets");
        }
    } else {
        record.targets.clear();
    }
    const int run_id = record.run_id;
    records_.emplace(run_id, std::move(record));

    if (!bound_path_.empty()) {
        std::ofstream out(bound_path_, std::ios::binary | std::ios::app);
        if (!out) throw Error(ErrorCategory::Io, "cannot append to " + bound_path_);
        if (!bound_header_written_) {
            out << csv::encode_row(header_row());
            bound_header_written_ = true;
        }
        out << csv::encode_row(record_row(records_.at(run_id), false));
    }
}

std::vector<const ExperimentRecord*> ResultStore::ok_records() const {
    std::vector<const ExperimentRecord*> out;
    for (const auto& [id, r] : records_)
        if (r.status == RunStatus::Ok) out.push_back(&r);
    return out;
}

std::pair<double, double> ResultStore::target_range(int target_index) const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& [id, r] : records_) {
        if (r.status != RunStatus::Ok) continue;
        const double t = r.targets[static_cast<std::size_t>(target_index)];
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    return {lo, hi};
}

std::vector<std::string> ResultStore::header_row() const {
    std::vector<std::string> header{"run_id", "status", "duration_s"};
    for (const auto& v : space_.design()) header.push_back(csv::encode_field(v.name()));
    for (const auto& v : space_.use_case()) header.push_back(csv::encode_field(v.name()));
    for (const auto& t : space_.targets()) header.push_back(csv::encode_field(t.name));
    header.push_back("reason");
    return header;
}

std::vector<std::string> ResultStore::record_row(const ExperimentRecord& r,
                                                 bool mask_duration) const {
    std::vector<std::string> row;
    row.push_back(std::to_string(r.run_id));
    row.push_back(run_status_name(r.status));
    row.push_back(mask_duration ? "0" : format_double(r.duration_s));
    auto field = [](const Value& value) {
        if (std::holds_alternative<double>(value))
            return csv::encode_field(format_double(std::get<double>(value)));
        return csv::encode_field(std::get<std::string>(value), true);
    };
    for (const auto& value : r.d.values) row.push_back(field(value));
    for (const auto& value : r.u.values) row.push_back(field(value));
    for (std::size_t t = 0; t < space_.targets().size(); ++t) {
        row.push_back(r.status == RunStatus::Ok ? format_double(r.targets[t])
                                                : std::string());
    }
    row.push_back(csv::encode_field(r.reason));
    return row;
}

std::string ResultStore::csv_bytes(bool mask_duration) const {
    std::string out = csv::encode_row(header_row());
    for (const auto& [id, r] : records_) out += csv::encode_row(record_row(r, mask_duration));
    return out;
}

void ResultStore::write_sidecar(const std::string& path) const {
    json meta;
    meta["format"] = "hse-results";
    meta["version"] = 1;
    meta["space"] = space_.to_json();
    meta["space_hash"] = space_.content_hash();
    meta["plan_hash"] = plan_hash_;
    write_file_atomic(path + ".meta.json", meta.dump(2) + "\n");
}

void ResultStore::save(const std::string& path) const {
    write_file_atomic(path, csv_bytes());
    write_sidecar(path);
}

void ResultStore::bind_file(const std::string& path) {
    bound_path_ = path;
    write_sidecar(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCategory::Io, "cannot write " + path);
    out << csv::encode_row(header_row());
    bound_header_written_ = true;
    for (const auto& [id, r] : records_) out << csv::encode_row(record_row(r, false));
}

void ResultStore::finalize_bound_file() {
    if (bound_path_.empty()) return;
    write_file_atomic(bound_path_, csv_bytes());
}

ResultStore ResultStore::load(const std::string& path) {
    json meta;
    try {
        meta = json::parse(read_file(path + ".meta.json"));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCategory::Schema,
                    "cannot parse results sidecar " + path + ".meta.json: " + e.what());
    }
    if (meta.value("format", "") != "hse-results")
        throw Error(ErrorCategory::Schema, "not a results sidecar: " + path + ".meta.json");
    ResultStore store(HyperSpace::from_json(meta.at("space")), meta.value("plan_hash", ""));

    const auto rows = csv::parse(read_file(path));
    if (rows.empty()) throw Error(ErrorCategory::Schema, "results CSV has no header");
    if (rows.front() != store.header_row())
        throw Error(ErrorCategory::Schema, "results CSV header does not match its space");

    const auto& space = store.space_;
    const std::size_t n_design = space.design().size();
    const std::size_t n_use = space.use_case().size();
    const std::size_t n_targets = space.targets().size();
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != 3 + n_design + n_use + n_targets + 1)
            throw Error(ErrorCategory::Schema,
                        "results row " + std::to_string(i) + " has wrong field count");
        ExperimentRecord r;
        r.run_id = static_cast<int>(parse_long(row[0]));
        r.status = run_status_from_name(row[1]);
        r.duration_s = parse_double(row[2]);
        std::size_t at = 3;
        for (std::size_t j = 0; j < n_design; ++j, ++at) {
            r.d.values.push_back(space.design()[j].kind() == VarKind::Categorical
                                     ? Value(row[at])
                                     : Value(parse_double(row[at])));
        }
        for (std::size_t j = 0; j < n_use; ++j, ++at) {
            r.u.values.push_back(space.use_case()[j].kind() == VarKind::Categorical
                                     ? Value(row[at])
                                     : Value(parse_double(row[at])));
        }
        for (std::size_t j = 0; j < n_targets; ++j, ++at) {
            if (r.status == RunStatus::Ok) r.targets.push_back(parse_double(row[at]));
        }
        r.reason = row[at];
        store.append(std::move(r));  // integrity check on duplicates
    }
    return store;
}

// ----------------------------------------------------------------- run_plan

RunSummary run_plan(const ExperimentPlan& plan, const HyperSpace& space,
                    Simulator& simulator, ResultStore& store, const RunOptions& options) {
    const std::string plan_hash = plan_content_hash(plan, space);
    if (store.plan_hash() != plan_hash) {
        throw Error(ErrorCategory::Mismatch,
                    "store was created for a different plan (hash " + store.plan_hash() +
                        " vs " + plan_hash + ")");
    }
    if (store.size() != 0 && !options.resume) {
        throw Error(ErrorCategory::Integrity,
                    "store already holds records; pass resume to continue");
    }

    std::vector<const PlanPoint*> pending;
    for (const auto& p : plan.points)
        if (!store.contains(p.run_id)) pending.push_back(&p);

    const auto t0 = std::chrono::steady_clock::now();
    RunSummary summary;
    for (const auto& [id, r] : store.records()) {
        if (r.status == RunStatus::Ok) ++summary.ok;
        else if (r.status == RunStatus::Failed) ++summary.failed;
        else ++summary.skipped;
    }

    const int workers = std::max(1, std::min({options.parallelism,
                                              simulator.max_parallelism(),
                                              static_cast<int>(pending.size())}));
    const int total = plan.size();
    const int max_failures =
        static_cast<int>(std::floor(options.max_failure_fraction * total));

    std::mutex mutex;
    std::condition_variable done_cv;
    std::size_t next = 0;
    int in_flight = 0;
    bool abort = false;
    std::map<int, ExperimentRecord> completed;  // staged before store append
    std::exception_ptr failure;

    auto worker = [&] {
        for (;;) {
            const PlanPoint* point = nullptr;
            {
                std::unique_lock lock(mutex);
                if (abort || next >= pending.size()) return;
                point = pending[next++];
                ++in_flight;
            }
            ExperimentRecord record;
            record.run_id = point->run_id;
            record.d = point->d;
            record.u = point->u;
            const auto start = std::chrono::steady_clock::now();
            SimOutcome outcome;
            try {
                outcome = simulator.evaluate(point->run_id, point->d, point->u);
            } catch (const std::exception& e) {
                outcome = SimOutcome::failure(std::string("exception: ") + e.what());
            }
            record.duration_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                    .count();
            if (outcome.ok) {
                record.status = RunStatus::Ok;
                record.targets = std::move(outcome.targets);
            } else {
                record.status = RunStatus::Failed;
                record.reason = std::move(outcome.reason);
            }
            {
                std::unique_lock lock(mutex);
                --in_flight;
                if (record.status == RunStatus::Ok) ++summary.ok;
                else ++summary.failed;
                completed.emplace(record.run_id, std::move(record));
                if (summary.failed > max_failures) abort = true;
                done_cv.notify_all();
            }
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    // Single writer: append staged records in run_id order.
    for (auto& [id, record] : completed) store.append(std::move(record));

    if (abort) {
        for (const auto& p : plan.points) {
            if (store.contains(p.run_id)) continue;
            ExperimentRecord r;
            r.run_id = p.run_id;
            r.d = p.d;
            r.u = p.u;
            r.status = RunStatus::Skipped;
            r.reason = "max-failures";
            store.append(std::move(r));
            ++summary.skipped;
        }
        summary.aborted = true;
    }
    store.finalize_bound_file();
    summary.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return summary;
}

// ------------------------------------------------- ExternalProcessSimulator

namespace {

json value_to_protocol(const Value& v) {
    if (std::holds_alternative<double>(v)) return std::get<double>(v);
    return std::get<std::string>(v);
}

Value value_from_protocol(const json& j, const Variable& v) {
    if (v.kind() == VarKind::Categorical) {
        if (!j.is_string())
            throw Error(ErrorCategory::Protocol, v.name() + ": expected a label");
        return j.get<std::string>();
    }
    if (!j.is_number())
        throw Error(ErrorCategory::Protocol, v.name() + ": expected a number");
    return j.get<double>();
}

}  // namespace

struct ExternalProcessSimulator::Impl {
    std::vector<std::string> design_names;
    std::vector<std::string> use_case_names;
    std::vector<std::string> target_names;
    double timeout_s;
    std::mutex write_mutex;
    pid_t child = -1;
    int to_child = -1;
    int from_child = -1;

    std::mutex mutex;
    std::condition_variable cv;
    std::map<int, json> responses;
    bool closed = false;
    std::thread reader;

    void start(const std::string& command) {
        signal(SIGPIPE, SIG_IGN);  // broken pipe surfaces as a failed write
        int in_pipe[2];
        int out_pipe[2];
        if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
            throw Error(ErrorCategory::Runtime, "cannot create pipes");
        child = fork();
        if (child < 0) throw Error(ErrorCategory::Runtime, "fork failed");
        if (child == 0) {
            dup2(in_pipe[0], STDIN_FILENO);
            dup2(out_pipe[1], STDOUT_FILENO);
            close(in_pipe[0]);
            close(in_pipe[1]);
            close(out_pipe[0]);
            close(out_pipe[1]);
            execl("/bin/sh", "sh", "-c", command.c_str(), nullptr);
            _exit(127);
        }
        close(in_pipe[0]);
        close(out_pipe[1]);
        to_child = in_pipe[1];
        from_child = out_pipe[0];
        reader = std::thread([this] { read_loop(); });
    }

    void read_loop() {
        std::string buffer;
        char chunk[4096];
        for (;;) {
            const ssize_t n = read(from_child, chunk, sizeof chunk);
            if (n <= 0) break;
            buffer.append(chunk, static_cast<std::size_t>(n));
            std::size_t pos;
            while ((pos = buffer.find('\n')) != std::string::npos) {
                std::string line = buffer.substr(0, pos);
                buffer.erase(0, pos + 1);
                dispatch(line);
            }
        }
        std::lock_guard lock(mutex);
        closed = true;
        cv.notify_all();
    }

    void dispatch(const std::string& line) {
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object() || !doc.contains("run_id") ||
            !doc["run_id"].is_number_integer()) {
            return;  // unattributable line; the requesting run times out
        }
        std::lock_guard lock(mutex);
        responses[doc["run_id"].get<int>()] = std::move(doc);
        cv.notify_all();
    }

    SimOutcome wait_for(int run_id) {
        std::unique_lock lock(mutex);
        const auto deadline =
            std::chrono::steady_clock::now() +
            std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(timeout_s));
        for (;;) {
            auto it = responses.find(run_id);
            if (it != responses.end()) {
                json doc = std::move(it->second);
                responses.erase(it);
                return parse_response(doc);
            }
            if (closed) return SimOutcome::failure("process-exit");
            if (cv.wait_until(lock, deadline) == std::cv_status::timeout)
                return SimOutcome::failure("timeout");
        }
    }

    SimOutcome parse_response(const json& doc) const {
        const std::string status = doc.value("status", "");
        if (status == "failed")
            return SimOutcome::failure(doc.value("reason", "unspecified"));
        if (status != "ok" || !doc.contains("targets") || !doc["targets"].is_object())
            return SimOutcome::failure("protocol");
        TargetVector t;
        for (const auto& name : target_names) {
            if (!doc["targets"].contains(name) || !doc["targets"][name].is_number())
                return SimOutcome::failure("protocol");
            t.push_back(doc["targets"][name].get<double>());
        }
        return SimOutcome::success(std::move(t));
    }

    void stop() {
        if (to_child >= 0) {
            close(to_child);
            to_child = -1;
        }
        if (reader.joinable()) {
            // Give the child a grace period to exit on EOF.
            for (int i = 0; i < 200; ++i) {
                {
                    std::lock_guard lock(mutex);
                    if (closed) break;
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
            {
                std::lock_guard lock(mutex);
                if (!closed && child > 0) kill(child, SIGKILL);
            }
            reader.join();
        }
        if (from_child >= 0) {
            close(from_child);
            from_child = -1;
        }
        if (child > 0) {
            int status = 0;
            waitpid(child, &status, 0);
            child = -1;
        }
    }
};

ExternalProcessSimulator::ExternalProcessSimulator(std::string command,
                                                   const HyperSpace& space,
                                                   double timeout_s)
    : impl_(std::make_unique<Impl>()) {
    for (const auto& v : space.design()) impl_->design_names.push_back(v.name());
    for (const auto& v : space.use_case()) impl_->use_case_names.push_back(v.name());
    for (const auto& t : space.targets()) impl_->target_names.push_back(t.name);
    impl_->timeout_s = timeout_s;
    impl_->start(command);
}

ExternalProcessSimulator::~ExternalProcessSimulator() {
    impl_->stop();
}

SimOutcome ExternalProcessSimulator::evaluate(int run_id, const DesignPoint& d,
                                              const UseCasePoint& u) {
    if (d.values.size() != impl_->design_names.size() ||
        u.values.size() != impl_->use_case_names.size()) {
        return SimOutcome::failure("protocol: point arity does not match the space");
    }
    json request;
    request["run_id"] = run_id;
    json design = json::object();
    for (std::size_t i = 0; i < d.values.size(); ++i)
        design[impl_->design_names[i]] = value_to_protocol(d.values[i]);
    request["design"] = std::move(design);
    json use_case = json::object();
    for (std::size_t i = 0; i < u.values.size(); ++i)
        use_case[impl_->use_case_names[i]] = value_to_protocol(u.values[i]);
    request["use_case"] = std::move(use_case);

    const std::string line = request.dump() + "\n";
    {
        std::lock_guard lock(impl_->write_mutex);
        if (impl_->to_child < 0) return SimOutcome::failure("process-exit");
        std::size_t written = 0;
        while (written < line.size()) {
            const ssize_t n = write(impl_->to_child, line.data() + written,
                                    line.size() - written);
            if (n <= 0) return SimOutcome::failure("process-exit");
            written += static_cast<std::size_t>(n);
        }
    }
    return impl_->wait_for(run_id);
}

void serve_line_protocol(std::istream& in, std::ostream& out, Simulator& simulator,
                         const HyperSpace& space) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json response;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object() || !doc.contains("run_id")) {
            continue;  // cannot even attribute a failure
        }
        const int run_id = doc["run_id"].get<int>();
        response["run_id"] = run_id;
        try {
            DesignPoint d;
            UseCasePoint u;
            const json& design = doc.at("design");
            for (const auto& v : space.design())
                d.values.push_back(value_from_protocol(design.at(v.name()), v));
            if (!space.use_case().empty()) {
                const json& use_case = doc.at("use_case");
                for (const auto& v : space.use_case())
                    u.values.push_back(value_from_protocol(use_case.at(v.name()), v));
            }
            SimOutcome outcome = simulator.evaluate(run_id, d, u);
            if (outcome.ok) {
                response["status"] = "ok";
                json targets = json::object();
                for (std::size_t t = 0; t < space.targets().size(); ++t)
                    targets[space.targets()[t].name] = outcome.targets[t];
                response["targets"] = targets;
            } else {
                response["status"] = "failed";
                response["reason"] = outcome.reason;
            }
        } catch (const std::exception& e) {
            response["status"] = "failed";
            response["reason"] = std::string("protocol: ") + e.what();
        }
        out << response.dump() << "\n" << std::flush;
    }
}

}  // namespace hse
