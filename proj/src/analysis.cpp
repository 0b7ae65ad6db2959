#include "hse/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hse/csv.hpp"
#include "hse/dove.hpp"
#include "hse/error.hpp"
#include "hse/io.hpp"
#include "hse/svg.hpp"

namespace hse {

bool dominates(const TargetVector& a, const TargetVector& b,
               const std::vector<TargetIndicator>& targets) {
    if (a.size() != targets.size() || b.size() != targets.size())
        throw Error(ErrorCategory::Usage, "dominates: target arity mismatch");
    bool strictly_better = false;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const double sign = targets[t].orientation == Orientation::Minimize ? 1.0 : -1.0;
        const double da = sign * a[t];
        const double db = sign * b[t];
        if (da > db) return false;
        if (da < db) strictly_better = true;
    }
    return strictly_better;
}

std::vector<int> non_dominated_indices(const std::vector<TargetVector>& points,
                                       const std::vector<TargetIndicator>& targets) {
    std::vector<int> archive;  // indices of current non-dominated set
    for (int i = 0; i < static_cast<int>(points.size()); ++i) {
        const TargetVector& candidate = points[static_cast<std::size_t>(i)];
        bool rejected = false;
        for (int keep : archive) {
            const TargetVector& other = points[static_cast<std::size_t>(keep)];
            if (other == candidate || dominates(other, candidate, targets)) {
                rejected = true;  // duplicate keeps the lowest index
                break;
            }
        }
        if (rejected) continue;
        std::erase_if(archive, [&](int keep) {
            return dominates(candidate, points[static_cast<std::size_t>(keep)], targets);
        });
        archive.push_back(i);
    }
    std::sort(archive.begin(), archive.end());
    return archive;
}

namespace {

bool use_case_matches(const HyperSpace& space, const UseCasePoint& record,
                      const UseCasePoint& filter, double tolerance) {
    for (std::size_t i = 0; i < space.use_case().size(); ++i) {
        const Variable& v = space.use_case()[i];
        const Value& a = record.values[i];
        const Value& b = filter.values[i];
        if (v.kind() == VarKind::Continuous) {
            const double span = v.upper() - v.lower();
            const double ea = (std::get<double>(a) - v.lower()) / span;
            const double eb = (std::get<double>(b) - v.lower()) / span;
            if (std::abs(ea - eb) > tolerance) return false;
        } else if (!value_equal(a, b)) {
            return false;
        }
    }
    return true;
}

}  // namespace

ParetoFront pareto_front_observed(const ResultStore& store,
                                  const ObservedFrontOptions& options) {
    const HyperSpace& space = store.space();
    if (options.use_case) {
        auto bad = space.validate_use_case_point(*options.use_case);
        if (!bad.empty())
            throw Error(ErrorCategory::Validation,
                        "use-case filter: " + bad.front().message);
    }
    std::vector<std::pair<std::string, int>> design_filters;
    for (const auto& [name, value] : options.design_equals) {
        const int idx = space.design_index(name);
        if (idx < 0)
            throw Error(ErrorCategory::Usage, "unknown design variable '" + name + "'");
        design_filters.push_back({name, idx});
    }

    std::vector<const ExperimentRecord*> selected;
    for (const ExperimentRecord* r : store.ok_records()) {
        if (options.use_case &&
            !use_case_matches(space, r->u, *options.use_case, options.tolerance))
            continue;
        bool keep = true;
        for (std::size_t f = 0; f < design_filters.size(); ++f) {
            const auto& want = options.design_equals[f].second;
            if (!value_equal(r->d.values[static_cast<std::size_t>(design_filters[f].second)],
                             want)) {
                keep = false;
                break;
            }
        }
        if (keep) selected.push_back(r);
    }
    if (selected.empty())
        throw Error(ErrorCategory::Validation, "empty selection: no records match the filter");

    std::vector<TargetVector> points;
    points.reserve(selected.size());
    for (const ExperimentRecord* r : selected) points.push_back(r->targets);

    ParetoFront front;
    front.source = "store";
    front.use_case = options.use_case;
    front.evaluated = static_cast<int>(selected.size());
    for (int idx : non_dominated_indices(points, space.targets())) {
        const ExperimentRecord* r = selected[static_cast<std::size_t>(idx)];
        front.members.push_back({r->run_id, r->d, r->targets});
    }
    return front;
}

ParetoFront pareto_front_surrogate(const SurrogateModel& model, const UseCasePoint& u,
                                   const DesignGridSpec& grid) {
    const HyperSpace& space = model.space();
    auto bad = space.validate_use_case_point(u);
    if (!bad.empty())
        throw Error(ErrorCategory::Validation, "use case: " + bad.front().message);

    // Per-variable level lists.
    std::vector<std::vector<Value>> levels;
    std::int64_t total = 1;
    for (const auto& v : space.design()) {
        std::vector<Value> vals;
        switch (v.kind()) {
            case VarKind::Continuous: {
                auto it = grid.steps.find(v.name());
                const int steps = std::max(1, it == grid.steps.end() ? grid.default_steps
                                                                     : it->second);
                for (int s = 0; s < steps; ++s) {
                    const double f = steps == 1 ? 0.5
                                                : static_cast<double>(s) /
                                                      static_cast<double>(steps - 1);
                    vals.emplace_back(v.lower() + f * (v.upper() - v.lower()));
                }
                break;
            }
            case VarKind::Discrete:
                for (double lv : v.levels()) vals.emplace_back(lv);
                break;
            case VarKind::Categorical:
                for (const auto& l : v.labels()) vals.emplace_back(l);
                break;
        }
        total *= static_cast<std::int64_t>(vals.size());
        if (total > grid.cap)
            throw Error(ErrorCategory::PlanTooLarge,
                        "design grid exceeds cap: " + std::to_string(total) + " > " +
                            std::to_string(grid.cap));
        levels.push_back(std::move(vals));
    }

    ParetoFront front;
    front.source = "surrogate";
    front.use_case = u;

    std::vector<DesignPoint> designs;
    std::vector<TargetVector> predictions;
    std::vector<int> grid_ids;
    DesignPoint d;
    d.values.resize(levels.size());
    // Row-major enumeration, last variable fastest.
    const int n = static_cast<int>(total);
    for (int i = 0; i < n; ++i) {
        int rest = i;
        for (int j = static_cast<int>(levels.size()) - 1; j >= 0; --j) {
            const auto& vals = levels[static_cast<std::size_t>(j)];
            d.values[static_cast<std::size_t>(j)] =
                vals[static_cast<std::size_t>(rest % static_cast<int>(vals.size()))];
            rest /= static_cast<int>(vals.size());
        }
        const auto pred = model.predict(d, u);
        ++front.evaluated;
        if (pred.extrapolation) {
            ++front.excluded_extrapolation;
            continue;
        }
        designs.push_back(d);
        predictions.push_back(pred.targets);
        grid_ids.push_back(i);
    }
    for (int idx : non_dominated_indices(predictions, space.targets())) {
        front.members.push_back({grid_ids[static_cast<std::size_t>(idx)],
                                 designs[static_cast<std::size_t>(idx)],
                                 predictions[static_cast<std::size_t>(idx)]});
    }
    return front;
}

// ---------------------------------------------------------------- envelope

namespace {

struct SweepSetup {
    bool in_design = false;
    int index = -1;
    const Variable* variable = nullptr;
};

SweepSetup find_variable(const HyperSpace& space, const std::string& name) {
    SweepSetup s;
    int idx = space.design_index(name);
    if (idx >= 0) {
        s.in_design = true;
        s.index = idx;
        s.variable = &space.design()[static_cast<std::size_t>(idx)];
        return s;
    }
    idx = space.use_case_index(name);
    if (idx >= 0) {
        s.in_design = false;
        s.index = idx;
        s.variable = &space.use_case()[static_cast<std::size_t>(idx)];
        return s;
    }
    throw Error(ErrorCategory::Usage, "unknown variable '" + name + "'");
}

std::vector<std::string> group_labels(const HyperSpace& space, const std::string& group_by,
                                      SweepSetup* setup_out) {
    if (group_by.empty()) {
        if (setup_out) *setup_out = {};
        return {"(all)"};
    }
    SweepSetup s = find_variable(space, group_by);
    if (s.variable->kind() != VarKind::Categorical)
        throw Error(ErrorCategory::Usage,
                    "group_by variable '" + group_by + "' must be categorical");
    if (setup_out) *setup_out = s;
    return s.variable->labels();
}

double numeric_value(const Value& v) { return std::get<double>(v); }

}  // namespace

Envelope potential_envelope_model(const SurrogateModel& model, const std::string& sweep,
                                  const std::vector<double>& grid,
                                  const std::string& target, const std::string& group_by,
                                  int samples, std::uint64_t seed) {
    const HyperSpace& space = model.space();
    const SweepSetup sweep_var = find_variable(space, sweep);
    if (sweep_var.variable->kind() == VarKind::Categorical)
        throw Error(ErrorCategory::Usage, "sweep variable must be numeric");
    if (grid.empty()) throw Error(ErrorCategory::Usage, "sweep grid is empty");
    const int target_idx = space.target_index(target);
    if (target_idx < 0)
        throw Error(ErrorCategory::Usage, "unknown target '" + target + "'");
    SweepSetup group_var;
    const std::vector<std::string> groups = group_labels(space, group_by, &group_var);

    // Remaining dimensions, sampled once and reused for every grid/group cell.
    std::vector<Variable> remaining;
    std::vector<std::pair<bool, int>> remaining_slots;  // (in_design, index)
    auto gather = [&](const std::vector<Variable>& vars, bool in_design) {
        for (std::size_t i = 0; i < vars.size(); ++i) {
            const int idx = static_cast<int>(i);
            if (sweep_var.in_design == in_design && sweep_var.index == idx) continue;
            if (!group_by.empty() && group_var.in_design == in_design &&
                group_var.index == idx)
                continue;
            remaining.push_back(vars[i]);
            remaining_slots.push_back({in_design, idx});
        }
    };
    gather(space.design(), true);
    gather(space.use_case(), false);
    const auto sample_rows = lhs_value_rows(remaining, samples, seed);

    Envelope env;
    env.sweep = sweep;
    env.grid = grid;
    env.target = target;
    env.orientation = space.targets()[static_cast<std::size_t>(target_idx)].orientation;
    env.samples = samples;
    env.seed = seed;

    for (const auto& group : groups) {
        EnvelopeBand band;
        band.group = group;
        for (double g : grid) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (const auto& row : sample_rows) {
                DesignPoint d;
                UseCasePoint u;
                d.values.resize(space.design().size());
                u.values.resize(space.use_case().size());
                for (std::size_t s = 0; s < remaining_slots.size(); ++s) {
                    const auto& [in_design, idx] = remaining_slots[s];
                    (in_design ? d.values[static_cast<std::size_t>(idx)]
                               : u.values[static_cast<std::size_t>(idx)]) = row[s];
                }
                if (sweep_var.in_design)
                    d.values[static_cast<std::size_t>(sweep_var.index)] = g;
                else
                    u.values[static_cast<std::size_t>(sweep_var.index)] = g;
                if (!group_by.empty()) {
                    if (group_var.in_design)
                        d.values[static_cast<std::size_t>(group_var.index)] = group;
                    else
                        u.values[static_cast<std::size_t>(group_var.index)] = group;
                }
                const auto pred = model.predict(d, u);
                const double value = pred.targets[static_cast<std::size_t>(target_idx)];
                lo = std::min(lo, value);
                hi = std::max(hi, value);
            }
            band.lo.push_back(lo);
            band.hi.push_back(hi);
        }
        env.bands.push_back(std::move(band));
    }
    return env;
}

Envelope potential_envelope_store(const ResultStore& store, const std::string& sweep,
                                  std::vector<double> grid, const std::string& target,
                                  const std::string& group_by, double tolerance) {
    const HyperSpace& space = store.space();
    const SweepSetup sweep_var = find_variable(space, sweep);
    if (sweep_var.variable->kind() == VarKind::Categorical)
        throw Error(ErrorCategory::Usage, "sweep variable must be numeric");
    const int target_idx = space.target_index(target);
    if (target_idx < 0)
        throw Error(ErrorCategory::Usage, "unknown target '" + target + "'");
    SweepSetup group_var;
    const std::vector<std::string> groups = group_labels(space, group_by, &group_var);

    const auto records = store.ok_records();
    auto sweep_of = [&](const ExperimentRecord* r) {
        return numeric_value(sweep_var.in_design
                                 ? r->d.values[static_cast<std::size_t>(sweep_var.index)]
                                 : r->u.values[static_cast<std::size_t>(sweep_var.index)]);
    };

    if (grid.empty()) {
        for (const auto* r : records) {
            const double v = sweep_of(r);
            bool found = false;
            for (double g : grid)
                if (std::abs(g - v) <= tolerance) {
                    found = true;
                    break;
                }
            if (!found) grid.push_back(v);
        }
        std::sort(grid.begin(), grid.end());
    }

    Envelope env;
    env.sweep = sweep;
    env.grid = grid;
    env.target = target;
    env.orientation = space.targets()[static_cast<std::size_t>(target_idx)].orientation;

    for (const auto& group : groups) {
        EnvelopeBand band;
        band.group = group;
        for (double g : grid) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            bool any = false;
            for (const auto* r : records) {
                if (std::abs(sweep_of(r) - g) > tolerance) continue;
                if (!group_by.empty()) {
                    const Value& gv =
                        group_var.in_design
                            ? r->d.values[static_cast<std::size_t>(group_var.index)]
                            : r->u.values[static_cast<std::size_t>(group_var.index)];
                    if (std::get<std::string>(gv) != group) continue;
                }
                const double value = r->targets[static_cast<std::size_t>(target_idx)];
                lo = std::min(lo, value);
                hi = std::max(hi, value);
                any = true;
            }
            band.lo.push_back(any ? lo : std::numeric_limits<double>::quiet_NaN());
            band.hi.push_back(any ? hi : std::numeric_limits<double>::quiet_NaN());
        }
        env.bands.push_back(std::move(band));
    }
    return env;
}

std::vector<TradeoffRow> tradeoff_table(const ParetoFront& front,
                                        const std::vector<TargetIndicator>& targets) {
    if (front.members.empty())
        throw Error(ErrorCategory::Usage, "tradeoff_table: empty front");
    std::vector<TradeoffRow> rows;
    for (const auto& m : front.members) rows.push_back({m, {}});
    const double sign = targets.front().orientation == Orientation::Minimize ? 1.0 : -1.0;
    std::sort(rows.begin(), rows.end(), [&](const TradeoffRow& a, const TradeoffRow& b) {
        return sign * a.member.t[0] < sign * b.member.t[0];
    });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double dt0 = rows[i].member.t[0] - rows[i - 1].member.t[0];
        for (std::size_t j = 1; j < targets.size(); ++j) {
            const double dtj = rows[i].member.t[j] - rows[i - 1].member.t[j];
            rows[i].exchange_rates.push_back(dt0 != 0.0
                                                 ? dtj / dt0
                                                 : std::numeric_limits<double>::quiet_NaN());
        }
    }
    return rows;
}

// ------------------------------------------------------------------ export

void save_front_csv(const ParetoFront& front, const HyperSpace& space,
                    const std::string& path) {
    std::vector<std::string> header{"id"};
    for (const auto& v : space.design()) header.push_back(csv::encode_field(v.name()));
    for (const auto& t : space.targets()) header.push_back(csv::encode_field(t.name));
    std::string out = csv::encode_row(header);
    for (const auto& m : front.members) {
        std::vector<std::string> row{std::to_string(m.id)};
        for (const auto& value : m.d.values) {
            if (std::holds_alternative<double>(value))
                row.push_back(csv::encode_field(format_double(std::get<double>(value))));
            else
                row.push_back(csv::encode_field(std::get<std::string>(value), true));
        }
        for (double t : m.t) row.push_back(csv::encode_field(format_double(t)));
        out += csv::encode_row(row);
    }
    write_file_atomic(path, out);
}

void save_front_svg(const std::string& path, const HyperSpace& space,
                    const std::vector<ParetoFront>& fronts,
                    const std::vector<std::string>& labels,
                    const std::vector<TargetVector>& backdrop) {
    if (space.targets().size() < 2)
        throw Error(ErrorCategory::Usage, "front plot needs at least 2 targets");
    svgplot::Figure fig;
    fig.title = "Pareto fronts";
    fig.x_label = space.targets()[0].name +
                  (space.targets()[0].unit.empty() ? "" : " [" + space.targets()[0].unit + "]");
    fig.y_label = space.targets()[1].name +
                  (space.targets()[1].unit.empty() ? "" : " [" + space.targets()[1].unit + "]");

    if (!backdrop.empty()) {
        svgplot::Series all;
        all.label = "evaluated";
        all.color = "#b5b5b5";
        for (const auto& t : backdrop) all.points.push_back({t[0], t[1]});
        fig.series.push_back(std::move(all));
    }
    for (std::size_t f = 0; f < fronts.size(); ++f) {
        svgplot::Series s;
        s.label = f < labels.size() ? labels[f] : "front";
        s.color = svgplot::palette_color(f);
        s.draw_line = true;
        std::vector<std::pair<double, double>> pts;
        for (const auto& m : fronts[f].members) pts.push_back({m.t[0], m.t[1]});
        std::sort(pts.begin(), pts.end());
        s.points = std::move(pts);
        fig.series.push_back(std::move(s));
    }
    write_file_atomic(path, svgplot::render(fig));
}

void save_envelope_csv(const Envelope& envelope, const std::string& path) {
    std::string out = csv::encode_row({csv::encode_field(envelope.sweep), "group", "min", "max"});
    for (const auto& band : envelope.bands) {
        for (std::size_t i = 0; i < envelope.grid.size(); ++i) {
            std::vector<std::string> row;
            row.push_back(csv::encode_field(format_double(envelope.grid[i])));
            row.push_back(csv::encode_field(band.group, true));
            const bool has = std::isfinite(band.lo[i]) && std::isfinite(band.hi[i]);
            row.push_back(has ? format_double(band.lo[i]) : "");
            row.push_back(has ? format_double(band.hi[i]) : "");
            out += csv::encode_row(row);
        }
    }
    write_file_atomic(path, out);
}

void save_envelope_svg(const Envelope& envelope, const std::string& path) {
    svgplot::Figure fig;
    fig.title = envelope.target + " potential vs " + envelope.sweep;
    fig.x_label = envelope.sweep;
    fig.y_label = envelope.target;
    for (std::size_t b = 0; b < envelope.bands.size(); ++b) {
        svgplot::Band band;
        band.label = envelope.bands[b].group;
        band.color = svgplot::palette_color(b);
        band.x = envelope.grid;
        band.lo = envelope.bands[b].lo;
        band.hi = envelope.bands[b].hi;
        fig.bands.push_back(std::move(band));
    }
    write_file_atomic(path, svgplot::render(fig));
}

}  // namespace hse
