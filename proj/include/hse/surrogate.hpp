#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "hse/hyperspace.hpp"
#include "hse/runner.hpp"

namespace hse {

enum class SurrogateFamily { Polynomial, Kriging };

/// Quantified model quality for one target. validation_area is the
/// bounding box of the training inputs in encoded coordinates - the region
/// within which the quoted errors were measured.
struct ValidationReport {
    double r_squared = 0.0;
    double adjusted_r_squared = 0.0;
    double loocv_rmse = 0.0;  // target units
    double f_statistic = 0.0;
    double p_value = 1.0;
    bool p_value_applicable = true;  // false for kriging
    int n_train = 0;
};

struct KrigingOptions {
    double theta_lo = 1e-2;
    double theta_hi = 1e2;
    double nugget = 1e-10;
    int grid_points = 25;
};

struct SurrogateConfig {
    SurrogateFamily family = SurrogateFamily::Polynomial;
    int degree = 2;  // polynomial only
    KrigingOptions kriging;

    std::string describe() const;
};

/// Polynomial feature construction over a hyperspace: continuous/discrete
/// coordinates affinely scaled to [-1,1] and expanded into monomials of
/// total degree <= p; categorical variables as treatment-coded indicator
/// columns (first label is the reference) plus indicator x monomial
/// interactions up to degree min(p,2).
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(const HyperSpace& space, int degree);

    int columns() const { return static_cast<int>(names_.size()); }
    int degree() const { return degree_; }
    const std::vector<std::string>& column_names() const { return names_; }

    Eigen::RowVectorXd row(const HyperSpace& space, const DesignPoint& d,
                           const UseCasePoint& u) const;

private:
    struct NumericVar {
        bool in_design = true;
        int index = 0;
        double lo = 0.0, hi = 1.0;
    };
    struct CategoricalVar {
        bool in_design = true;
        int index = 0;
        int n_labels = 0;
    };
    struct Term {
        std::vector<int> exponents;  // over numeric vars; empty = none
        int cat = -1;                // categorical var position, -1 = none
        int label = 0;               // indicator label index (>=1)
    };

    Eigen::VectorXd scaled_numeric(const DesignPoint& d, const UseCasePoint& u) const;

    int degree_ = 0;
    std::vector<NumericVar> numeric_;
    std::vector<CategoricalVar> categorical_;
    std::vector<Term> terms_;
    std::vector<std::string> names_;
};

/// Fitted surrogate mapping D x U to T: one scalar model per target
/// indicator, plus validation metrics. Immutable once fitted.
class SurrogateModel {
public:
    struct Prediction {
        TargetVector targets;
        std::vector<double> variance;  // kriging only, else empty
        bool extrapolation = false;
    };

    SurrogateFamily family() const { return family_; }
    const HyperSpace& space() const { return space_; }
    const std::string& space_hash() const { return space_hash_; }
    const std::vector<ValidationReport>& reports() const { return reports_; }
    const FeatureMap& feature_map() const { return features_; }
    int degree() const { return degree_; }
    const KrigingOptions& kriging_options() const { return kriging_; }

    /// Per-target parameter vector size summed is not what trade-offs
    /// need; this is the per-target count (columns for polynomials,
    /// theta + mean + variance for kriging).
    int parameter_count() const;

    Prediction predict(const DesignPoint& d, const UseCasePoint& u) const;

    /// Correlation lengthscales of one fitted kriging target.
    const Eigen::VectorXd& kriging_theta(int target) const {
        return kriging_targets_[static_cast<std::size_t>(target)].theta;
    }

    /// Polynomial coefficient vector of one fitted target.
    const Eigen::VectorXd& coefficients(int target) const {
        return poly_coeffs_[static_cast<std::size_t>(target)];
    }

    /// Encoded-space training bounding box.
    const Eigen::VectorXd& area_min() const { return area_min_; }
    const Eigen::VectorXd& area_max() const { return area_max_; }

    nlohmann::json to_json() const;
    static SurrogateModel from_json(const nlohmann::json& doc);
    void save(const std::string& path) const;
    static SurrogateModel load(const std::string& path);

    std::string content_hash() const;

private:
    friend SurrogateModel fit_polynomial(const ResultStore&, int);
    friend SurrogateModel fit_kriging(const ResultStore&, const KrigingOptions&);

    struct KrigingTarget {
        Eigen::VectorXd theta;
        double mu = 0.0;
        double sigma2 = 0.0;
        Eigen::VectorXd weights;  // R^-1 (y - mu 1)
        Eigen::MatrixXd r_inv;
    };

    SurrogateFamily family_ = SurrogateFamily::Polynomial;
    HyperSpace space_;
    std::string space_hash_;
    int degree_ = 0;
    FeatureMap features_;
    KrigingOptions kriging_;
    std::vector<Eigen::VectorXd> poly_coeffs_;     // per target
    std::vector<KrigingTarget> kriging_targets_;   // per target
    Eigen::MatrixXd train_inputs_;                 // kriging, deduplicated
    std::vector<ValidationReport> reports_;
    Eigen::VectorXd area_min_, area_max_;
};

/// Ordinary least squares on the polynomial feature expansion, solved by
/// QR decomposition. Requires at least as many ok records as columns and
/// 1 <= degree <= 4.
SurrogateModel fit_polynomial(const ResultStore& store, int degree);

/// Ordinary Kriging with squared-exponential correlation over encoded
/// inputs; theta by concentrated log-likelihood maximized with multi-start
/// coordinate search on a log grid plus golden-section refinement.
/// Duplicate inputs are averaged before fitting.
SurrogateModel fit_kriging(const ResultStore& store, const KrigingOptions& options = {});

SurrogateModel fit_surrogate(const ResultStore& store, const SurrogateConfig& config);

struct CvReport {
    Eigen::VectorXd rmse;  // per target, target units
    int folds = 0;
};

/// Seeded k-fold cross-validation: refits on each fold complement and
/// reports held-out RMSE per target; equals leave-one-out when folds is
/// the number of ok records. Kriging folds keep theta from the full fit
/// and re-estimate mean, variance and weights.
CvReport cross_validate(const ResultStore& store, const SurrogateConfig& config, int folds,
                        std::uint64_t seed = 0);

/// Regularized incomplete beta function I_x(a,b); the F-distribution tail
/// needed for the overall-regression significance test.
double regularized_incomplete_beta(double a, double b, double x);

/// Survival function of the F distribution with (d1,d2) degrees of freedom.
double f_distribution_sf(double f, double d1, double d2);

}  // namespace hse
