#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace hse {

enum class VarKind { Continuous, Discrete, Categorical };
enum class Orientation { Minimize, Maximize };

/// A point coordinate: a real for continuous/discrete variables, a label
/// for categorical ones.
using Value = std::variant<double, std::string>;

bool value_equal(const Value& a, const Value& b);
std::string value_to_string(const Value& v);

/// Conditional-structure marker: the owning variable only matters while
/// `variable == equals` holds. Inactive coordinates are still carried and
/// validated; consumers may ignore them.
struct ActiveWhen {
    std::string variable;
    std::string equals;

    bool operator==(const ActiveWhen&) const = default;
};

/// One axis of the design or use-case space. Continuous axes carry real
/// bounds, discrete axes an ordered level list, categorical axes a label
/// list (these hold the topological alternatives).
class Variable {
public:
    static Variable continuous(std::string name, double lower, double upper,
                               std::string unit = "");
    static Variable discrete(std::string name, std::vector<double> levels,
                             std::string unit = "");
    static Variable categorical(std::string name, std::vector<std::string> labels,
                                std::string unit = "");

    Variable with_active_when(ActiveWhen condition) const;

    const std::string& name() const { return name_; }
    VarKind kind() const { return kind_; }
    const std::string& unit() const { return unit_; }
    double lower() const { return lower_; }
    double upper() const { return upper_; }
    const std::vector<double>& levels() const { return levels_; }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::optional<ActiveWhen>& active_when() const { return active_when_; }

    /// Width of the encoded block: 1 for continuous/discrete, label count
    /// for categorical (one-hot).
    int encoded_width() const;

    int label_index(const std::string& label) const;  // -1 if unknown
    int level_index(double value) const;              // -1 if no exact level

    bool operator==(const Variable&) const = default;

private:
    Variable() = default;

    std::string name_;
    VarKind kind_ = VarKind::Continuous;
    std::string unit_;
    double lower_ = 0.0;
    double upper_ = 0.0;
    std::vector<double> levels_;
    std::vector<std::string> labels_;
    std::optional<ActiveWhen> active_when_;
};

struct TargetIndicator {
    std::string name;
    Orientation orientation = Orientation::Minimize;
    std::string unit;

    bool operator==(const TargetIndicator&) const = default;
};

/// One broken rule, reported as data rather than thrown.
struct Violation {
    std::string variable;  // empty for space-level rules
    std::string rule;
    std::string message;
};

struct DesignPoint {
    std::vector<Value> values;

    bool operator==(const DesignPoint&) const = default;
};

struct UseCasePoint {
    std::vector<Value> values;

    bool operator==(const UseCasePoint&) const = default;
};

using TargetVector = std::vector<double>;

/// The declared exploration space: design variables (D), use-case variables
/// (U) and target indicators (T). U may be empty for single-scenario
/// studies. Immutable after construction; free to share across threads.
class HyperSpace {
public:
    HyperSpace() = default;
    HyperSpace(std::vector<Variable> design, std::vector<Variable> use_case,
               std::vector<TargetIndicator> targets);

    const std::vector<Variable>& design() const { return design_; }
    const std::vector<Variable>& use_case() const { return use_case_; }
    const std::vector<TargetIndicator>& targets() const { return targets_; }

    /// All declared invariants checked; empty result means well-formed.
    std::vector<Violation> validate() const;

    /// Throws Error(Validation) listing the violations, if any.
    void require_valid() const;

    std::vector<Violation> validate_design_point(const DesignPoint& p) const;
    std::vector<Violation> validate_use_case_point(const UseCasePoint& p) const;

    /// Normalized encoding: continuous -> (v-lo)/(hi-lo), discrete ->
    /// level index / (count-1), categorical -> one-hot block.
    Eigen::VectorXd encode_design(const DesignPoint& p) const;
    Eigen::VectorXd encode_use_case(const UseCasePoint& p) const;
    Eigen::VectorXd encode_joint(const DesignPoint& d, const UseCasePoint& u) const;

    DesignPoint decode_design(const Eigen::VectorXd& x) const;
    UseCasePoint decode_use_case(const Eigen::VectorXd& x) const;

    int design_encoded_dim() const;
    int use_case_encoded_dim() const;
    int joint_encoded_dim() const { return design_encoded_dim() + use_case_encoded_dim(); }

    /// One name per encoded column, e.g. "gear_ratio" or "topology=A2".
    std::vector<std::string> encoded_joint_names() const;

    /// Per design variable: active under this point's categorical values?
    /// Variables without active_when are always active.
    std::vector<bool> active_design_mask(const DesignPoint& p) const;

    int design_index(const std::string& name) const;    // -1 if missing
    int use_case_index(const std::string& name) const;  // -1 if missing
    int target_index(const std::string& name) const;    // -1 if missing

    static HyperSpace from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    static HyperSpace load(const std::string& path);
    void save(const std::string& path) const;

    /// FNV-1a hash of the canonical document; identifies the space in plan,
    /// store and model files.
    std::string content_hash() const;

    bool operator==(const HyperSpace&) const = default;

private:
    std::vector<Variable> design_;
    std::vector<Variable> use_case_;
    std::vector<TargetIndicator> targets_;
};

/// Spec-facing alias for HyperSpace::validate.
inline std::vector<Violation> validate_space(const HyperSpace& space) {
    return space.validate();
}

}  // namespace hse
