#include "hse/hyperspace.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "hse/error.hpp"
#include "hse/hash.hpp"
#include "hse/io.hpp"

namespace hse {

using nlohmann::json;

bool value_equal(const Value& a, const Value& b) {
    if (a.index() != b.index()) return false;
    if (std::holds_alternative<double>(a))
        return std::get<double>(a) == std::get<double>(b);
    return std::get<std::string>(a) == std::get<std::string>(b);
}

std::string value_to_string(const Value& v) {
    if (std::holds_alternative<double>(v)) return format_double(std::get<double>(v));
    return std::get<std::string>(v);
}

// ---------------------------------------------------------------- Variable

Variable Variable::continuous(std::string name, double lower, double upper,
                              std::string unit) {
    Variable v;
    v.name_ = std::move(name);
    v.kind_ = VarKind::Continuous;
    v.lower_ = lower;
    v.upper_ = upper;
    v.unit_ = std::move(unit);
    return v;
}

Variable Variable::discrete(std::string name, std::vector<double> levels,
                            std::string unit) {
    Variable v;
    v.name_ = std::move(name);
    v.kind_ = VarKind::Discrete;
    v.levels_ = std::move(levels);
    v.unit_ = std::move(unit);
    return v;
}

Variable Variable::categorical(std::string name, std::vector<std::string> labels,
                               std::string unit) {
    Variable v;
    v.name_ = std::move(name);
    v.kind_ = VarKind::Categorical;
    v.labels_ = std::move(labels);
    v.unit_ = std::move(unit);
    return v;
}

Variable Variable::with_active_when(ActiveWhen condition) const {
    Variable v = *this;
    v.active_when_ = std::move(condition);
    return v;
}

int Variable::encoded_width() const {
    return kind_ == VarKind::Categorical ? static_cast<int>(labels_.size()) : 1;
}

int Variable::label_index(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    return it == labels_.end() ? -1 : static_cast<int>(it - labels_.begin());
}

int Variable::level_index(double value) const {
    for (std::size_t i = 0; i < levels_.size(); ++i)
        if (levels_[i] == value) return static_cast<int>(i);
    return -1;
}

// --------------------------------------------------------------- HyperSpace

HyperSpace::HyperSpace(std::vector<Variable> design, std::vector<Variable> use_case,
                       std::vector<TargetIndicator> targets)
    : design_(std::move(design)),
      use_case_(std::move(use_case)),
      targets_(std::move(targets)) {}

namespace {

void validate_variable(const Variable& v, std::vector<Violation>& out) {
    switch (v.kind()) {
        case VarKind::Continuous:
            if (!std::isfinite(v.lower()) || !std::isfinite(v.upper())) {
                out.push_back({v.name(), "nonfinite-bounds",
                               v.name() + ": bounds must be finite"});
            } else if (!(v.lower() < v.upper())) {
                out.push_back({v.name(), "degenerate-bounds",
                               v.name() + ": lower must be strictly below upper"});
            }
            break;
        case VarKind::Discrete: {
            if (v.levels().size() < 2) {
                out.push_back({v.name(), "too-few-levels",
                               v.name() + ": needs at least 2 levels"});
                break;
            }
            for (std::size_t i = 0; i + 1 < v.levels().size(); ++i) {
                if (!(v.levels()[i] < v.levels()[i + 1])) {
                    out.push_back({v.name(), "levels-not-increasing",
                                   v.name() + ": levels must strictly increase"});
                    break;
                }
            }
            for (double lv : v.levels()) {
                if (!std::isfinite(lv)) {
                    out.push_back({v.name(), "nonfinite-level",
                                   v.name() + ": levels must be finite"});
                    break;
                }
            }
            break;
        }
        case VarKind::Categorical: {
            if (v.labels().size() < 2) {
                out.push_back({v.name(), "too-few-labels",
                               v.name() + ": needs at least 2 labels"});
                break;
            }
            std::set<std::string> seen;
            for (const auto& l : v.labels()) {
                if (!seen.insert(l).second) {
                    out.push_back({v.name(), "duplicate-label",
                                   v.name() + ": duplicate label '" + l + "'"});
                }
            }
            break;
        }
    }
}

const Variable* find_var(const std::vector<Variable>& vars, const std::string& name) {
    for (const auto& v : vars)
        if (v.name() == name) return &v;
    return nullptr;
}

}  // namespace

std::vector<Violation> HyperSpace::validate() const {
    std::vector<Violation> out;
    if (design_.empty())
        out.push_back({"", "empty-design", "design space needs at least one variable"});
    if (targets_.empty())
        out.push_back({"", "empty-targets", "at least one target indicator required"});

    for (const auto& v : design_) validate_variable(v, out);
    for (const auto& v : use_case_) validate_variable(v, out);

    // Name collisions across all three lists.
    std::set<std::string> seen;
    auto check_name = [&](const std::string& name) {
        if (!seen.insert(name).second)
            out.push_back({name, "name-collision", "duplicate name '" + name + "'"});
    };
    for (const auto& v : design_) check_name(v.name());
    for (const auto& v : use_case_) check_name(v.name());
    for (const auto& t : targets_) check_name(t.name);

    // active_when must reference a categorical variable and a known label.
    auto check_active = [&](const Variable& v) {
        if (!v.active_when()) return;
        const auto& cond = *v.active_when();
        const Variable* ref = find_var(design_, cond.variable);
        if (!ref) ref = find_var(use_case_, cond.variable);
        if (!ref) {
            out.push_back({v.name(), "bad-active-when",
                           v.name() + ": active_when references unknown variable '" +
                               cond.variable + "'"});
            return;
        }
        if (ref->kind() != VarKind::Categorical) {
            out.push_back({v.name(), "bad-active-when",
                           v.name() + ": active_when variable '" + cond.variable +
                               "' is not categorical"});
            return;
        }
        if (ref->label_index(cond.equals) < 0) {
            out.push_back({v.name(), "bad-active-when",
                           v.name() + ": active_when label '" + cond.equals +
                               "' not declared on '" + cond.variable + "'"});
        }
    };
    for (const auto& v : design_) check_active(v);
    for (const auto& v : use_case_) check_active(v);

    return out;
}

void HyperSpace::require_valid() const {
    auto violations = validate();
    if (violations.empty()) return;
    std::ostringstream msg;
    msg << "invalid hyperspace:";
    for (const auto& v : violations) msg << " [" << v.rule << "] " << v.message << ";";
    throw Error(ErrorCategory::Validation, msg.str());
}

namespace {

std::vector<Violation> validate_point(const std::vector<Variable>& vars,
                                      const std::vector<Value>& values,
                                      const char* which) {
    std::vector<Violation> out;
    if (values.size() != vars.size()) {
        out.push_back({"", "arity",
                       std::string(which) + " point has " + std::to_string(values.size()) +
                           " values, space has " + std::to_string(vars.size())});
        return out;
    }
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const Variable& v = vars[i];
        const Value& val = values[i];
        switch (v.kind()) {
            case VarKind::Continuous: {
                if (!std::holds_alternative<double>(val)) {
                    out.push_back({v.name(), "type", v.name() + ": expected a number"});
                    break;
                }
                const double x = std::get<double>(val);
                if (!std::isfinite(x) || x < v.lower() || x > v.upper()) {
                    out.push_back({v.name(), "out-of-bounds",
                                   v.name() + ": " + format_double(x) + " outside [" +
                                       format_double(v.lower()) + ", " +
                                       format_double(v.upper()) + "]"});
                }
                break;
            }
            case VarKind::Discrete: {
                if (!std::holds_alternative<double>(val)) {
                    out.push_back({v.name(), "type", v.name() + ": expected a number"});
                    break;
                }
                if (v.level_index(std::get<double>(val)) < 0) {
                    out.push_back({v.name(), "unknown-level",
                                   v.name() + ": " + format_double(std::get<double>(val)) +
                                       " is not a declared level"});
                }
                break;
            }
            case VarKind::Categorical: {
                if (!std::holds_alternative<std::string>(val)) {
                    out.push_back({v.name(), "type", v.name() + ": expected a label"});
                    break;
                }
                if (v.label_index(std::get<std::string>(val)) < 0) {
                    out.push_back({v.name(), "unknown-label",
                                   v.name() + ": label '" + std::get<std::string>(val) +
                                       "' not declared"});
                }
                break;
            }
        }
    }
    return out;
}

int section_dim(const std::vector<Variable>& vars) {
    int dim = 0;
    for (const auto& v : vars) dim += v.encoded_width();
    return dim;
}

Eigen::VectorXd encode_section(const std::vector<Variable>& vars,
                               const std::vector<Value>& values, const char* which) {
    auto violations = validate_point(vars, values, which);
    if (!violations.empty()) {
        throw Error(ErrorCategory::Encoding,
                    "cannot encode " + std::string(which) + " point: " +
                        violations.front().message);
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(section_dim(vars));
    int at = 0;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const Variable& v = vars[i];
        switch (v.kind()) {
            case VarKind::Continuous:
                x[at++] = (std::get<double>(values[i]) - v.lower()) /
                          (v.upper() - v.lower());
                break;
            case VarKind::Discrete: {
                const int idx = v.level_index(std::get<double>(values[i]));
                x[at++] = static_cast<double>(idx) /
                          static_cast<double>(v.levels().size() - 1);
                break;
            }
            case VarKind::Categorical: {
                const int idx = v.label_index(std::get<std::string>(values[i]));
                x[at + idx] = 1.0;
                at += v.encoded_width();
                break;
            }
        }
    }
    return x;
}

std::vector<Value> decode_section(const std::vector<Variable>& vars,
                                  const Eigen::VectorXd& x, const char* which) {
    if (x.size() != section_dim(vars)) {
        throw Error(ErrorCategory::Encoding,
                    std::string(which) + " vector has dimension " +
                        std::to_string(x.size()) + ", expected " +
                        std::to_string(section_dim(vars)));
    }
    std::vector<Value> values;
    values.reserve(vars.size());
    int at = 0;
    for (const auto& v : vars) {
        switch (v.kind()) {
            case VarKind::Continuous:
                values.emplace_back(v.lower() + x[at++] * (v.upper() - v.lower()));
                break;
            case VarKind::Discrete: {
                const double scaled = x[at++] * static_cast<double>(v.levels().size() - 1);
                const int idx = static_cast<int>(std::lround(scaled));
                if (idx < 0 || idx >= static_cast<int>(v.levels().size()) ||
                    std::abs(scaled - idx) > 1e-9) {
                    throw Error(ErrorCategory::Encoding,
                                v.name() + ": coordinate does not match a level index");
                }
                values.emplace_back(v.levels()[static_cast<std::size_t>(idx)]);
                break;
            }
            case VarKind::Categorical: {
                int hot = -1;
                for (int j = 0; j < v.encoded_width(); ++j) {
                    const double c = x[at + j];
                    if (std::abs(c - 1.0) <= 1e-9) {
                        if (hot >= 0) hot = -2;
                        else if (hot == -1) hot = j;
                    } else if (std::abs(c) > 1e-9) {
                        hot = -2;
                    }
                    if (hot == -2) break;
                }
                if (hot < 0) {
                    throw Error(ErrorCategory::Encoding,
                                v.name() + ": one-hot block is not a unit basis vector");
                }
                values.emplace_back(v.labels()[static_cast<std::size_t>(hot)]);
                at += v.encoded_width();
                break;
            }
        }
    }
    return values;
}

}  // namespace

std::vector<Violation> HyperSpace::validate_design_point(const DesignPoint& p) const {
    return validate_point(design_, p.values, "design");
}

std::vector<Violation> HyperSpace::validate_use_case_point(const UseCasePoint& p) const {
    return validate_point(use_case_, p.values, "use-case");
}

Eigen::VectorXd HyperSpace::encode_design(const DesignPoint& p) const {
    return encode_section(design_, p.values, "design");
}

Eigen::VectorXd HyperSpace::encode_use_case(const UseCasePoint& p) const {
    return encode_section(use_case_, p.values, "use-case");
}

Eigen::VectorXd HyperSpace::encode_joint(const DesignPoint& d, const UseCasePoint& u) const {
    Eigen::VectorXd out(joint_encoded_dim());
    out.head(design_encoded_dim()) = encode_design(d);
    out.tail(use_case_encoded_dim()) = encode_use_case(u);
    return out;
}

DesignPoint HyperSpace::decode_design(const Eigen::VectorXd& x) const {
    return DesignPoint{decode_section(design_, x, "design")};
}

UseCasePoint HyperSpace::decode_use_case(const Eigen::VectorXd& x) const {
    return UseCasePoint{decode_section(use_case_, x, "use-case")};
}

int HyperSpace::design_encoded_dim() const { return section_dim(design_); }
int HyperSpace::use_case_encoded_dim() const { return section_dim(use_case_); }

std::vector<std::string> HyperSpace::encoded_joint_names() const {
    std::vector<std::string> names;
    auto add = [&](const std::vector<Variable>& vars) {
        for (const auto& v : vars) {
            if (v.kind() == VarKind::Categorical) {
                for (const auto& l : v.labels()) names.push_back(v.name() + "=" + l);
            } else {
                names.push_back(v.name());
            }
        }
    };
    add(design_);
    add(use_case_);
    return names;
}

std::vector<bool> HyperSpace::active_design_mask(const DesignPoint& p) const {
    std::vector<bool> mask(design_.size(), true);
    for (std::size_t i = 0; i < design_.size(); ++i) {
        const auto& cond = design_[i].active_when();
        if (!cond) continue;
        const int ref = design_index(cond->variable);
        if (ref < 0 || static_cast<std::size_t>(ref) >= p.values.size()) continue;
        const Value& val = p.values[static_cast<std::size_t>(ref)];
        mask[i] = std::holds_alternative<std::string>(val) &&
                  std::get<std::string>(val) == cond->equals;
    }
    return mask;
}

int HyperSpace::design_index(const std::string& name) const {
    for (std::size_t i = 0; i < design_.size(); ++i)
        if (design_[i].name() == name) return static_cast<int>(i);
    return -1;
}

int HyperSpace::use_case_index(const std::string& name) const {
    for (std::size_t i = 0; i < use_case_.size(); ++i)
        if (use_case_[i].name() == name) return static_cast<int>(i);
    return -1;
}

int HyperSpace::target_index(const std::string& name) const {
    for (std::size_t i = 0; i < targets_.size(); ++i)
        if (targets_[i].name == name) return static_cast<int>(i);
    return -1;
}

// ------------------------------------------------------------------- JSON

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw Error(ErrorCategory::Schema,
                        where + ": unknown key '" + it.key() + "'");
        }
    }
}

Variable variable_from_json(const json& obj) {
    if (!obj.is_object())
        throw Error(ErrorCategory::Schema, "variable entry must be an object");
    if (!obj.contains("name") || !obj["name"].is_string())
        throw Error(ErrorCategory::Schema, "variable needs a string 'name'");
    if (!obj.contains("kind") || !obj["kind"].is_string())
        throw Error(ErrorCategory::Schema, "variable needs a string 'kind'");

    const std::string name = obj["name"].get<std::string>();
    const std::string kind = obj["kind"].get<std::string>();
    const std::string unit = obj.value("unit", std::string());

    Variable v = [&] {
        if (kind == "continuous") {
            reject_unknown_keys(obj, {"name", "kind", "unit", "lower", "upper", "active_when"},
                                "variable '" + name + "'");
            if (!obj.contains("lower") || !obj.contains("upper"))
                throw Error(ErrorCategory::Schema,
                            "continuous variable '" + name + "' needs lower/upper");
            return Variable::continuous(name, obj["lower"].get<double>(),
                                        obj["upper"].get<double>(), unit);
        }
        if (kind == "discrete") {
            reject_unknown_keys(obj, {"name", "kind", "unit", "levels", "active_when"},
                                "variable '" + name + "'");
            if (!obj.contains("levels") || !obj["levels"].is_array())
                throw Error(ErrorCategory::Schema,
                            "discrete variable '" + name + "' needs a 'levels' array");
            return Variable::discrete(name, obj["levels"].get<std::vector<double>>(), unit);
        }
        if (kind == "categorical") {
            reject_unknown_keys(obj, {"name", "kind", "unit", "labels", "active_when"},
                                "variable '" + name + "'");
            if (!obj.contains("labels") || !obj["labels"].is_array())
                throw Error(ErrorCategory::Schema,
                            "categorical variable '" + name + "' needs a 'labels' array");
            return Variable::categorical(name, obj["labels"].get<std::vector<std::string>>(),
                                         unit);
        }
        throw Error(ErrorCategory::Schema,
                    "variable '" + name + "': unknown kind '" + kind + "'");
    }();

    if (obj.contains("active_when")) {
        const json& aw = obj["active_when"];
        reject_unknown_keys(aw, {"variable", "equals"},
                            "active_when of '" + name + "'");
        if (!aw.contains("variable") || !aw.contains("equals"))
            throw Error(ErrorCategory::Schema,
                        "active_when of '" + name + "' needs 'variable' and 'equals'");
        v = v.with_active_when({aw["variable"].get<std::string>(),
                                aw["equals"].get<std::string>()});
    }
    return v;
}

json variable_to_json(const Variable& v) {
    json obj;
    obj["name"] = v.name();
    switch (v.kind()) {
        case VarKind::Continuous:
            obj["kind"] = "continuous";
            obj["lower"] = v.lower();
            obj["upper"] = v.upper();
            break;
        case VarKind::Discrete:
            obj["kind"] = "discrete";
            obj["levels"] = v.levels();
            break;
        case VarKind::Categorical:
            obj["kind"] = "categorical";
            obj["labels"] = v.labels();
            break;
    }
    if (!v.unit().empty()) obj["unit"] = v.unit();
    if (v.active_when()) {
        obj["active_when"] = {{"variable", v.active_when()->variable},
                              {"equals", v.active_when()->equals}};
    }
    return obj;
}

TargetIndicator target_from_json(const json& obj) {
    if (!obj.is_object())
        throw Error(ErrorCategory::Schema, "target entry must be an object");
    reject_unknown_keys(obj, {"name", "orientation", "unit"}, "target");
    if (!obj.contains("name") || !obj["name"].is_string())
        throw Error(ErrorCategory::Schema, "target needs a string 'name'");
    if (!obj.contains("orientation"))
        throw Error(ErrorCategory::Schema,
                    "target '" + obj["name"].get<std::string>() +
                        "' needs an explicit 'orientation'");
    const std::string o = obj["orientation"].get<std::string>();
    if (o != "minimize" && o != "maximize")
        throw Error(ErrorCategory::Schema,
                    "target orientation must be 'minimize' or 'maximize', got '" + o + "'");
    return TargetIndicator{obj["name"].get<std::string>(),
                           o == "minimize" ? Orientation::Minimize : Orientation::Maximize,
                           obj.value("unit", std::string())};
}

}  // namespace

HyperSpace HyperSpace::from_json(const json& doc) {
    if (!doc.is_object())
        throw Error(ErrorCategory::Schema, "space document must be a JSON object");
    reject_unknown_keys(doc, {"design", "use_case", "targets"}, "space document");
    if (!doc.contains("design") || !doc["design"].is_array())
        throw Error(ErrorCategory::Schema, "space document needs a 'design' array");
    if (!doc.contains("targets") || !doc["targets"].is_array())
        throw Error(ErrorCategory::Schema, "space document needs a 'targets' array");

    std::vector<Variable> design, use_case;
    std::vector<TargetIndicator> targets;
    for (const auto& entry : doc["design"]) design.push_back(variable_from_json(entry));
    if (doc.contains("use_case")) {
        if (!doc["use_case"].is_array())
            throw Error(ErrorCategory::Schema, "'use_case' must be an array");
        for (const auto& entry : doc["use_case"])
            use_case.push_back(variable_from_json(entry));
    }
    for (const auto& entry : doc["targets"]) targets.push_back(target_from_json(entry));
    return HyperSpace(std::move(design), std::move(use_case), std::move(targets));
}

json HyperSpace::to_json() const {
    json doc;
    doc["design"] = json::array();
    for (const auto& v : design_) doc["design"].push_back(variable_to_json(v));
    doc["use_case"] = json::array();
    for (const auto& v : use_case_) doc["use_case"].push_back(variable_to_json(v));
    doc["targets"] = json::array();
    for (const auto& t : targets_) {
        json obj;
        obj["name"] = t.name;
        obj["orientation"] = t.orientation == Orientation::Minimize ? "minimize" : "maximize";
        if (!t.unit.empty()) obj["unit"] = t.unit;
        doc["targets"].push_back(obj);
    }
    return doc;
}

HyperSpace HyperSpace::load(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCategory::Schema,
                    "cannot parse space document " + path + ": " + e.what());
    }
    return from_json(doc);
}

void HyperSpace::save(const std::string& path) const {
    write_file_atomic(path, to_json().dump(2) + "\n");
}

std::string HyperSpace::content_hash() const {
    return content_hash_hex(to_json().dump());
}

}  // namespace hse
