#include "hse/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "hse/error.hpp"
#include "hse/hash.hpp"
#include "hse/io.hpp"
#include "hse/rng.hpp"

namespace hse {

using nlohmann::json;

std::string SurrogateConfig::describe() const {
    std::ostringstream out;
    if (family == SurrogateFamily::Polynomial) {
        out << "poly(p=" << degree << ")";
    } else {
        out << "kriging(nugget=" << format_double(kriging.nugget) << ")";
    }
    return out.str();
}

// ------------------------------------------------------------- statistics

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;

    // Lentz continued fraction for the incomplete beta.
    auto betacf = [](double a_, double b_, double x_) {
        const double tiny = 1e-300;
        const double qab = a_ + b_;
        const double qap = a_ + 1.0;
        const double qam = a_ - 1.0;
        double c = 1.0;
        double d = 1.0 - qab * x_ / qap;
        if (std::abs(d) < tiny) d = tiny;
        d = 1.0 / d;
        double h = d;
        for (int m = 1; m <= 300; ++m) {
            const double m2 = 2.0 * m;
            double aa = m * (b_ - m) * x_ / ((qam + m2) * (a_ + m2));
            d = 1.0 + aa * d;
            if (std::abs(d) < tiny) d = tiny;
            c = 1.0 + aa / c;
            if (std::abs(c) < tiny) c = tiny;
            d = 1.0 / d;
            h *= d * c;
            aa = -(a_ + m) * (qab + m) * x_ / ((a_ + m2) * (qap + m2));
            d = 1.0 + aa * d;
            if (std::abs(d) < tiny) d = tiny;
            c = 1.0 + aa / c;
            if (std::abs(c) < tiny) c = tiny;
            d = 1.0 / d;
            const double del = d * c;
            h *= del;
            if (std::abs(del - 1.0) < 3e-15) break;
        }
        return h;
    };

    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double f_distribution_sf(double f, double d1, double d2) {
    if (!(f >= 0.0)) return 1.0;
    if (std::isinf(f)) return 0.0;
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

// -------------------------------------------------------------- FeatureMap

namespace {

void enumerate_monomials(int n_vars, int degree, std::vector<std::vector<int>>& out) {
    // Graded enumeration: total degree ascending, lexicographic within.
    std::vector<int> current(static_cast<std::size_t>(n_vars), 0);
    std::function<void(int, int)> rec = [&](int var, int remaining) {
        if (var == n_vars - 1) {
            current[static_cast<std::size_t>(var)] = remaining;
            out.push_back(current);
            return;
        }
        for (int e = remaining; e >= 0; --e) {
            current[static_cast<std::size_t>(var)] = e;
            rec(var + 1, remaining - e);
        }
    };
    for (int total = 1; total <= degree; ++total) {
        if (n_vars == 0) break;
        rec(0, total);
    }
}

}  // namespace

FeatureMap::FeatureMap(const HyperSpace& space, int degree) : degree_(degree) {
    std::vector<std::string> numeric_names;
    auto scan = [&](const std::vector<Variable>& vars, bool in_design) {
        for (std::size_t i = 0; i < vars.size(); ++i) {
            const Variable& v = vars[i];
            if (v.kind() == VarKind::Categorical) {
                categorical_.push_back({in_design, static_cast<int>(i),
                                        static_cast<int>(v.labels().size())});
            } else {
                const double lo = v.kind() == VarKind::Continuous ? v.lower()
                                                                  : v.levels().front();
                const double hi = v.kind() == VarKind::Continuous ? v.upper()
                                                                  : v.levels().back();
                numeric_.push_back({in_design, static_cast<int>(i), lo, hi});
                numeric_names.push_back(v.name());
            }
        }
    };
    scan(space.design(), true);
    scan(space.use_case(), false);

    auto monomial_name = [&](const std::vector<int>& exps) {
        std::string name;
        for (std::size_t j = 0; j < exps.size(); ++j) {
            if (exps[j] == 0) continue;
            if (!name.empty()) name += "*";
            name += numeric_names[j];
            if (exps[j] > 1) name += "^" + std::to_string(exps[j]);
        }
        return name;
    };
    auto label_name = [&](const CategoricalVar& cv, int label) {
        const Variable& v = cv.in_design ? space.design()[static_cast<std::size_t>(cv.index)]
                                         : space.use_case()[static_cast<std::size_t>(cv.index)];
        return v.name() + "=" + v.labels()[static_cast<std::size_t>(label)];
    };

    terms_.push_back({});  // intercept
    names_.push_back("1");

    std::vector<std::vector<int>> monomials;
    enumerate_monomials(static_cast<int>(numeric_.size()), degree, monomials);
    for (const auto& exps : monomials) {
        terms_.push_back({exps, -1, 0});
        names_.push_back(monomial_name(exps));
    }

    for (std::size_t c = 0; c < categorical_.size(); ++c) {
        for (int label = 1; label < categorical_[c].n_labels; ++label) {
            terms_.push_back({{}, static_cast<int>(c), label});
            names_.push_back(label_name(categorical_[c], label));
        }
    }

    // Category x monomial interactions, degree-limited.
    std::vector<std::vector<int>> low_monomials;
    enumerate_monomials(static_cast<int>(numeric_.size()), std::min(degree, 2),
                        low_monomials);
    for (std::size_t c = 0; c < categorical_.size(); ++c) {
        for (int label = 1; label < categorical_[c].n_labels; ++label) {
            for (const auto& exps : low_monomials) {
                terms_.push_back({exps, static_cast<int>(c), label});
                names_.push_back(label_name(categorical_[c], label) + "*" +
                                 monomial_name(exps));
            }
        }
    }
}

Eigen::VectorXd FeatureMap::scaled_numeric(const DesignPoint& d, const UseCasePoint& u) const {
    Eigen::VectorXd z(static_cast<Eigen::Index>(numeric_.size()));
    for (std::size_t j = 0; j < numeric_.size(); ++j) {
        const NumericVar& nv = numeric_[j];
        const Value& value = nv.in_design ? d.values[static_cast<std::size_t>(nv.index)]
                                          : u.values[static_cast<std::size_t>(nv.index)];
        const double raw = std::get<double>(value);
        z[static_cast<Eigen::Index>(j)] =
            nv.hi > nv.lo ? 2.0 * (raw - nv.lo) / (nv.hi - nv.lo) - 1.0 : 0.0;
    }
    return z;
}

Eigen::RowVectorXd FeatureMap::row(const HyperSpace& space, const DesignPoint& d,
                                   const UseCasePoint& u) const {
    const Eigen::VectorXd z = scaled_numeric(d, u);

    std::vector<int> active_label(categorical_.size(), 0);
    for (std::size_t c = 0; c < categorical_.size(); ++c) {
        const CategoricalVar& cv = categorical_[c];
        const Variable& v = cv.in_design
                                ? space.design()[static_cast<std::size_t>(cv.index)]
                                : space.use_case()[static_cast<std::size_t>(cv.index)];
        const Value& value = cv.in_design ? d.values[static_cast<std::size_t>(cv.index)]
                                          : u.values[static_cast<std::size_t>(cv.index)];
        active_label[c] = v.label_index(std::get<std::string>(value));
    }

    Eigen::RowVectorXd out(columns());
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        const Term& term = terms_[t];
        double value = 1.0;
        if (term.cat >= 0 &&
            active_label[static_cast<std::size_t>(term.cat)] != term.label)
            value = 0.0;
        if (value != 0.0) {
            for (std::size_t j = 0; j < term.exponents.size(); ++j)
                for (int e = 0; e < term.exponents[j]; ++e)
                    value *= z[static_cast<Eigen::Index>(j)];
        }
        out[static_cast<Eigen::Index>(t)] = value;
    }
    return out;
}

// ------------------------------------------------------------ shared bits

namespace {

std::vector<const ExperimentRecord*> ok_or_throw(const ResultStore& store) {
    auto records = store.ok_records();
    if (records.empty())
        throw Error(ErrorCategory::Fit, "no successful records to fit on");
    return records;
}

Eigen::MatrixXd encode_records(const HyperSpace& space,
                               const std::vector<const ExperimentRecord*>& records) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()),
                      space.joint_encoded_dim());
    for (std::size_t i = 0; i < records.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) =
            space.encode_joint(records[i]->d, records[i]->u);
    return x;
}

Eigen::MatrixXd target_matrix(const HyperSpace& space,
                              const std::vector<const ExperimentRecord*>& records) {
    const Eigen::Index k = static_cast<Eigen::Index>(space.targets().size());
    Eigen::MatrixXd y(static_cast<Eigen::Index>(records.size()), k);
    for (std::size_t i = 0; i < records.size(); ++i)
        for (Eigen::Index t = 0; t < k; ++t)
            y(static_cast<Eigen::Index>(i), t) =
                records[i]->targets[static_cast<std::size_t>(t)];
    return y;
}

void bounding_box(const Eigen::MatrixXd& x, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
    lo = x.colwise().minCoeff();
    hi = x.colwise().maxCoeff();
}

struct OlsResult {
    Eigen::VectorXd coeffs;
    ValidationReport report;
};

OlsResult ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                  const std::vector<std::string>& column_names) {
    const Eigen::Index n = x.rows();
    const Eigen::Index m = x.cols();
    if (n < m) {
        throw Error(ErrorCategory::Fit,
                    "insufficient rows: " + std::to_string(n) + " rows for " +
                        std::to_string(m) + " model terms (need at least " +
                        std::to_string(m) + ")");
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < m) {
        const auto perm = qr.colsPermutation().indices();
        std::string cols;
        for (Eigen::Index i = qr.rank(); i < m; ++i) {
            if (!cols.empty()) cols += ", ";
            cols += column_names[static_cast<std::size_t>(perm[i])];
        }
        throw Error(ErrorCategory::Fit, "design matrix is rank deficient; collinear columns: " + cols);
    }

    OlsResult out;
    out.coeffs = qr.solve(y);

    const Eigen::VectorXd residuals = y - x * out.coeffs;
    const double ss_res = residuals.squaredNorm();
    const double y_mean = y.mean();
    const double ss_tot = (y.array() - y_mean).matrix().squaredNorm();
    const double tiny = 1e-20 * static_cast<double>(n) * (1.0 + y_mean * y_mean);

    ValidationReport& rep = out.report;
    rep.n_train = static_cast<int>(n);
    rep.r_squared = ss_tot <= tiny ? (ss_res <= tiny ? 1.0 : 0.0)
                                   : 1.0 - ss_res / ss_tot;
    rep.adjusted_r_squared = n > m ? 1.0 - (1.0 - rep.r_squared) *
                                               static_cast<double>(n - 1) /
                                               static_cast<double>(n - m)
                                   : rep.r_squared;

    // Hat-matrix identity: leave-one-out residual e_i / (1 - h_ii).
    Eigen::HouseholderQR<Eigen::MatrixXd> plain_qr(x);
    const Eigen::MatrixXd q_thin =
        plain_qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
    double loocv_ss = 0.0;
    bool loocv_defined = n > m;
    for (Eigen::Index i = 0; i < n && loocv_defined; ++i) {
        const double h = q_thin.row(i).squaredNorm();
        if (1.0 - h < 1e-12) {
            loocv_defined = false;
            break;
        }
        const double e = residuals[i] / (1.0 - h);
        loocv_ss += e * e;
    }
    rep.loocv_rmse = loocv_defined
                         ? std::sqrt(loocv_ss / static_cast<double>(n))
                         : std::numeric_limits<double>::infinity();

    const double d1 = static_cast<double>(m - 1);
    const double d2 = static_cast<double>(n - m);
    if (d1 >= 1.0 && d2 >= 1.0 && ss_tot > tiny) {
        const double ss_reg = std::max(0.0, ss_tot - ss_res);
        rep.f_statistic = ss_res <= tiny
                              ? std::numeric_limits<double>::infinity()
                              : (ss_reg / d1) / (ss_res / d2);
        rep.p_value = f_distribution_sf(rep.f_statistic, d1, d2);
    } else {
        rep.f_statistic = std::numeric_limits<double>::quiet_NaN();
        rep.p_value = 1.0;
    }
    return out;
}

// ------------------------------------------------------------- kriging core

struct KrigingData {
    Eigen::MatrixXd x;  // deduplicated encoded inputs
    Eigen::MatrixXd y;  // averaged targets
};

KrigingData dedup_average(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    std::map<std::vector<double>, std::vector<Eigen::Index>> groups;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        std::vector<double> key(x.row(i).begin(), x.row(i).end());
        groups[std::move(key)].push_back(i);
    }
    // Deterministic order: first occurrence.
    std::vector<std::pair<Eigen::Index, std::vector<Eigen::Index>>> ordered;
    for (auto& [key, idxs] : groups) ordered.push_back({idxs.front(), idxs});
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    KrigingData out;
    out.x.resize(static_cast<Eigen::Index>(ordered.size()), x.cols());
    out.y.resize(static_cast<Eigen::Index>(ordered.size()), y.cols());
    for (std::size_t g = 0; g < ordered.size(); ++g) {
        const auto& idxs = ordered[g].second;
        out.x.row(static_cast<Eigen::Index>(g)) = x.row(idxs.front());
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(y.cols());
        for (Eigen::Index i : idxs) mean += y.row(i);
        out.y.row(static_cast<Eigen::Index>(g)) = mean / static_cast<double>(idxs.size());
    }
    return out;
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta,
                                   double nugget) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd r(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        r(i, i) = 1.0 + nugget;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Eigen::VectorXd diff = (x.row(i) - x.row(j)).transpose();
            const double value = std::exp(-(theta.array() * diff.array().square()).sum());
            r(i, j) = value;
            r(j, i) = value;
        }
    }
    return r;
}

struct KrigingSolve {
    bool ok = false;
    double mu = 0.0;
    double sigma2 = 0.0;
    double loglik = -std::numeric_limits<double>::infinity();
    Eigen::LLT<Eigen::MatrixXd> llt;
};

KrigingSolve kriging_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& theta, double nugget) {
    KrigingSolve out;
    const Eigen::Index n = x.rows();
    out.llt.compute(correlation_matrix(x, theta, nugget));
    if (out.llt.info() != Eigen::Success) return out;

    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd rinv_ones = out.llt.solve(ones);
    const Eigen::VectorXd rinv_y = out.llt.solve(y);
    const double denom = ones.dot(rinv_ones);
    if (!(denom > 0.0)) return out;
    out.mu = ones.dot(rinv_y) / denom;
    const Eigen::VectorXd resid = y - out.mu * ones;
    const Eigen::VectorXd rinv_resid = rinv_y - out.mu * rinv_ones;
    out.sigma2 = std::max(resid.dot(rinv_resid) / static_cast<double>(n), 0.0);

    double logdet = 0.0;
    const auto& l = out.llt.matrixLLT();
    for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(l(i, i));
    out.loglik = -0.5 * (static_cast<double>(n) * std::log(std::max(out.sigma2, 1e-300)) +
                         logdet);
    out.ok = true;
    return out;
}

/// Concentrated-likelihood theta search: multi-start coordinate descent on a
/// log grid, then one golden-section pass per dimension around the best cell.
Eigen::VectorXd search_theta(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             const KrigingOptions& opts) {
    const int dims = static_cast<int>(x.cols());
    const int g = opts.grid_points;
    std::vector<double> grid(static_cast<std::size_t>(g));
    for (int i = 0; i < g; ++i)
        grid[static_cast<std::size_t>(i)] =
            opts.theta_lo *
            std::pow(opts.theta_hi / opts.theta_lo,
                     static_cast<double>(i) / static_cast<double>(g - 1));

    auto loglik_at = [&](const Eigen::VectorXd& theta) {
        return kriging_solve(x, y, theta, opts.nugget).loglik;
    };

    Eigen::VectorXd best_theta;
    double best_ll = -std::numeric_limits<double>::infinity();
    std::vector<int> best_idx;

    for (const int start : {g / 4, g / 2, (3 * g) / 4}) {
        std::vector<int> idx(static_cast<std::size_t>(dims), start);
        Eigen::VectorXd theta(dims);
        for (int j = 0; j < dims; ++j) theta[j] = grid[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
        double ll = loglik_at(theta);
        for (int sweep = 0; sweep < 8; ++sweep) {
            bool changed = false;
            for (int j = 0; j < dims; ++j) {
                int best_cell = idx[static_cast<std::size_t>(j)];
                double cell_ll = ll;
                for (int c = 0; c < g; ++c) {
                    if (c == idx[static_cast<std::size_t>(j)]) continue;
                    theta[j] = grid[static_cast<std::size_t>(c)];
                    const double cand = loglik_at(theta);
                    if (cand > cell_ll) {
                        cell_ll = cand;
                        best_cell = c;
                    }
                }
                theta[j] = grid[static_cast<std::size_t>(best_cell)];
                if (best_cell != idx[static_cast<std::size_t>(j)]) {
                    idx[static_cast<std::size_t>(j)] = best_cell;
                    ll = cell_ll;
                    changed = true;
                }
            }
            if (!changed) break;
        }
        if (ll > best_ll) {
            best_ll = ll;
            best_theta = theta;
            best_idx = idx;
        }
    }
    if (!best_theta.size() || std::isinf(best_ll)) {
        throw Error(ErrorCategory::Conditioning,
                    "correlation matrix not positive definite anywhere on the theta "
                    "grid; increase the nugget");
    }

    // Golden-section refinement within the bracketing cells, one pass per dim.
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    Eigen::VectorXd theta = best_theta;
    for (int j = 0; j < dims; ++j) {
        const int i = best_idx[static_cast<std::size_t>(j)];
        double lo = std::log(grid[static_cast<std::size_t>(std::max(i - 1, 0))]);
        double hi = std::log(grid[static_cast<std::size_t>(std::min(i + 1, g - 1))]);
        if (hi - lo < 1e-12) continue;
        double x1 = hi - gr * (hi - lo);
        double x2 = lo + gr * (hi - lo);
        auto eval = [&](double logt) {
            Eigen::VectorXd t = theta;
            t[j] = std::exp(logt);
            return loglik_at(t);
        };
        double f1 = eval(x1);
        double f2 = eval(x2);
        for (int it = 0; it < 36; ++it) {
            if (f1 > f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - gr * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + gr * (hi - lo);
                f2 = eval(x2);
            }
        }
        const double refined = f1 > f2 ? x1 : x2;
        const double refined_ll = std::max(f1, f2);
        if (refined_ll > best_ll) {
            theta[j] = std::exp(refined);
            best_ll = refined_ll;
        }
    }
    return theta;
}

/// Leave-one-out refits with theta held fixed (mean/variance/weights are
/// re-estimated per fold).
double kriging_loocv_rmse(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& theta, double nugget) {
    const Eigen::Index n = x.rows();
    if (n < 3) return std::numeric_limits<double>::infinity();
    double ss = 0.0;
    for (Eigen::Index leave = 0; leave < n; ++leave) {
        Eigen::MatrixXd xs(n - 1, x.cols());
        Eigen::VectorXd ys(n - 1);
        Eigen::Index at = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i == leave) continue;
            xs.row(at) = x.row(i);
            ys[at] = y[i];
            ++at;
        }
        const KrigingSolve solve = kriging_solve(xs, ys, theta, nugget);
        if (!solve.ok) return std::numeric_limits<double>::infinity();
        const Eigen::VectorXd w =
            solve.llt.solve(ys - solve.mu * Eigen::VectorXd::Ones(n - 1));
        double pred = solve.mu;
        for (Eigen::Index i = 0; i < n - 1; ++i) {
            const Eigen::VectorXd diff = (x.row(leave) - xs.row(i)).transpose();
            pred += w[i] * std::exp(-(theta.array() * diff.array().square()).sum());
        }
        const double e = pred - y[leave];
        ss += e * e;
    }
    return std::sqrt(ss / static_cast<double>(n));
}

}  // namespace

// ---------------------------------------------------------------- fitting

SurrogateModel fit_polynomial(const ResultStore& store, int degree) {
    if (degree < 1 || degree > 4)
        throw Error(ErrorCategory::Usage, "polynomial degree must be in 1..4");
    const HyperSpace& space = store.space();
    space.require_valid();
    const auto records = ok_or_throw(store);

    SurrogateModel model;
    model.family_ = SurrogateFamily::Polynomial;
    model.space_ = space;
    model.space_hash_ = space.content_hash();
    model.degree_ = degree;
    model.features_ = FeatureMap(space, degree);

    const Eigen::Index n = static_cast<Eigen::Index>(records.size());
    Eigen::MatrixXd x(n, model.features_.columns());
    for (Eigen::Index i = 0; i < n; ++i)
        x.row(i) = model.features_.row(space, records[static_cast<std::size_t>(i)]->d,
                                       records[static_cast<std::size_t>(i)]->u);
    const Eigen::MatrixXd y = target_matrix(space, records);

    for (Eigen::Index t = 0; t < y.cols(); ++t) {
        OlsResult fit = ols_fit(x, y.col(t), model.features_.column_names());
        model.poly_coeffs_.push_back(std::move(fit.coeffs));
        model.reports_.push_back(fit.report);
    }
    bounding_box(encode_records(space, records), model.area_min_, model.area_max_);
    return model;
}

SurrogateModel fit_kriging(const ResultStore& store, const KrigingOptions& options) {
    if (!(options.nugget > 0.0))
        throw Error(ErrorCategory::Usage, "kriging nugget must be positive");
    if (!(options.theta_lo > 0.0) || !(options.theta_hi > options.theta_lo))
        throw Error(ErrorCategory::Usage, "kriging theta bounds must satisfy 0 < lo < hi");
    const HyperSpace& space = store.space();
    space.require_valid();
    const auto records = ok_or_throw(store);
    if (records.size() < 4)
        throw Error(ErrorCategory::Fit, "kriging needs at least 4 successful records");

    const KrigingData data =
        dedup_average(encode_records(space, records), target_matrix(space, records));

    SurrogateModel model;
    model.family_ = SurrogateFamily::Kriging;
    model.space_ = space;
    model.space_hash_ = space.content_hash();
    model.kriging_ = options;
    model.train_inputs_ = data.x;

    const Eigen::Index n = data.x.rows();
    for (Eigen::Index t = 0; t < data.y.cols(); ++t) {
        const Eigen::VectorXd y = data.y.col(t);
        SurrogateModel::KrigingTarget target;
        target.theta = search_theta(data.x, y, options);
        const KrigingSolve solve = kriging_solve(data.x, y, target.theta, options.nugget);
        if (!solve.ok) {
            throw Error(ErrorCategory::Conditioning,
                        "correlation matrix not positive definite at the selected "
                        "theta; increase the nugget");
        }
        target.mu = solve.mu;
        target.sigma2 = solve.sigma2;
        target.weights = solve.llt.solve(y - solve.mu * Eigen::VectorXd::Ones(n));
        target.r_inv = solve.llt.solve(Eigen::MatrixXd::Identity(n, n));

        ValidationReport rep;
        rep.n_train = static_cast<int>(n);
        rep.loocv_rmse = kriging_loocv_rmse(data.x, y, target.theta, options.nugget);
        const double y_mean = y.mean();
        const double ss_tot = (y.array() - y_mean).matrix().squaredNorm();
        const double loocv_ss =
            rep.loocv_rmse * rep.loocv_rmse * static_cast<double>(n);
        rep.r_squared = ss_tot > 0.0 ? 1.0 - loocv_ss / ss_tot
                                     : (loocv_ss == 0.0 ? 1.0 : 0.0);
        rep.adjusted_r_squared = rep.r_squared;
        rep.f_statistic = std::numeric_limits<double>::quiet_NaN();
        rep.p_value = std::numeric_limits<double>::quiet_NaN();
        rep.p_value_applicable = false;

        model.kriging_targets_.push_back(std::move(target));
        model.reports_.push_back(rep);
    }
    bounding_box(data.x, model.area_min_, model.area_max_);
    return model;
}

SurrogateModel fit_surrogate(const ResultStore& store, const SurrogateConfig& config) {
    if (config.family == SurrogateFamily::Polynomial)
        return fit_polynomial(store, config.degree);
    return fit_kriging(store, config.kriging);
}

// -------------------------------------------------------------- prediction

int SurrogateModel::parameter_count() const {
    if (family_ == SurrogateFamily::Polynomial) return features_.columns();
    return static_cast<int>(space_.joint_encoded_dim()) + 2;  // theta + mu + sigma2
}

SurrogateModel::Prediction SurrogateModel::predict(const DesignPoint& d,
                                                   const UseCasePoint& u) const {
    Prediction out;
    const Eigen::VectorXd x = space_.encode_joint(d, u);  // validates the point
    out.extrapolation = false;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (x[j] < area_min_[j] - 1e-12 || x[j] > area_max_[j] + 1e-12) {
            out.extrapolation = true;
            break;
        }
    }

    if (family_ == SurrogateFamily::Polynomial) {
        const Eigen::RowVectorXd row = features_.row(space_, d, u);
        for (const auto& coeffs : poly_coeffs_) out.targets.push_back(row.dot(coeffs));
        return out;
    }

    const Eigen::Index n = train_inputs_.rows();
    for (const auto& target : kriging_targets_) {
        Eigen::VectorXd r(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd diff = (x.transpose() - train_inputs_.row(i)).transpose();
            r[i] = std::exp(-(target.theta.array() * diff.array().square()).sum());
        }
        out.targets.push_back(target.mu + r.dot(target.weights));

        const Eigen::VectorXd rinv_r = target.r_inv * r;
        const Eigen::VectorXd rinv_ones = target.r_inv * Eigen::VectorXd::Ones(n);
        const double denom = rinv_ones.sum();
        const double excess = 1.0 - rinv_ones.dot(r);
        double var = target.sigma2 *
                     (1.0 - r.dot(rinv_r) + (denom > 0.0 ? excess * excess / denom : 0.0));
        out.variance.push_back(std::max(var, 0.0));
    }
    return out;
}

// --------------------------------------------------------- cross-validation

CvReport cross_validate(const ResultStore& store, const SurrogateConfig& config, int folds,
                        std::uint64_t seed) {
    const HyperSpace& space = store.space();
    const auto records = ok_or_throw(store);
    const int n = static_cast<int>(records.size());
    if (folds < 2 || folds > n)
        throw Error(ErrorCategory::Usage,
                    "folds must be in [2, " + std::to_string(n) + "]");

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<int> fold_of(static_cast<std::size_t>(n));
    {
        int at = 0;
        for (int f = 0; f < folds; ++f) {
            const int size = n / folds + (f < n % folds ? 1 : 0);
            for (int i = 0; i < size; ++i) fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(at++)])] = f;
        }
    }

    const Eigen::Index k = static_cast<Eigen::Index>(space.targets().size());
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(k);

    if (config.family == SurrogateFamily::Polynomial) {
        const FeatureMap fm(space, config.degree);
        Eigen::MatrixXd x(n, fm.columns());
        for (int i = 0; i < n; ++i)
            x.row(i) = fm.row(space, records[static_cast<std::size_t>(i)]->d,
                              records[static_cast<std::size_t>(i)]->u);
        const Eigen::MatrixXd y = target_matrix(space, records);
        for (int f = 0; f < folds; ++f) {
            std::vector<Eigen::Index> train, test;
            for (int i = 0; i < n; ++i)
                (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
            Eigen::MatrixXd xt(static_cast<Eigen::Index>(train.size()), x.cols());
            Eigen::MatrixXd yt(static_cast<Eigen::Index>(train.size()), k);
            for (std::size_t i = 0; i < train.size(); ++i) {
                xt.row(static_cast<Eigen::Index>(i)) = x.row(train[i]);
                yt.row(static_cast<Eigen::Index>(i)) = y.row(train[i]);
            }
            for (Eigen::Index t = 0; t < k; ++t) {
                const OlsResult fit = ols_fit(xt, yt.col(t), fm.column_names());
                for (Eigen::Index i : test) {
                    const double e = x.row(i).dot(fit.coeffs) - y(i, t);
                    ss[t] += e * e;
                }
            }
        }
    } else {
        // Theta from the full fit; folds re-estimate mean and weights.
        const SurrogateModel full = fit_kriging(store, config.kriging);
        const Eigen::MatrixXd x = encode_records(space, records);
        const Eigen::MatrixXd y = target_matrix(space, records);
        for (int f = 0; f < folds; ++f) {
            std::vector<Eigen::Index> train, test;
            for (int i = 0; i < n; ++i)
                (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
            Eigen::MatrixXd xt(static_cast<Eigen::Index>(train.size()), x.cols());
            Eigen::MatrixXd yt(static_cast<Eigen::Index>(train.size()), k);
            for (std::size_t i = 0; i < train.size(); ++i) {
                xt.row(static_cast<Eigen::Index>(i)) = x.row(train[i]);
                yt.row(static_cast<Eigen::Index>(i)) = y.row(train[i]);
            }
            const KrigingData sub = dedup_average(xt, yt);
            for (Eigen::Index t = 0; t < k; ++t) {
                const Eigen::VectorXd theta = full.kriging_theta(static_cast<int>(t));
                const KrigingSolve solve =
                    kriging_solve(sub.x, sub.y.col(t), theta, config.kriging.nugget);
                if (!solve.ok)
                    throw Error(ErrorCategory::Conditioning,
                                "fold correlation matrix not positive definite");
                const Eigen::VectorXd w = solve.llt.solve(
                    sub.y.col(t) - solve.mu * Eigen::VectorXd::Ones(sub.x.rows()));
                for (Eigen::Index i : test) {
                    double pred = solve.mu;
                    for (Eigen::Index j = 0; j < sub.x.rows(); ++j) {
                        const Eigen::VectorXd diff = (x.row(i) - sub.x.row(j)).transpose();
                        pred += w[j] *
                                std::exp(-(theta.array() * diff.array().square()).sum());
                    }
                    const double e = pred - y(i, t);
                    ss[t] += e * e;
                }
            }
        }
    }

    CvReport out;
    out.folds = folds;
    out.rmse = (ss / static_cast<double>(n)).array().sqrt();
    return out;
}

// ------------------------------------------------------------ serialization

namespace {

json encode_double(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

double decode_double(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    throw Error(ErrorCategory::Schema, "expected a number in model document");
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    Eigen::Index at = 0;
    for (const auto& e : j) v[at++] = e.get<double>();
    return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        out.push_back(vector_to_json(m.row(i).transpose()));
    return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return {};
    const Eigen::Index cols = static_cast<Eigen::Index>(j.front().size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        m.row(i) = vector_from_json(j[static_cast<std::size_t>(i)]).transpose();
    return m;
}

json report_to_json(const ValidationReport& r) {
    json out;
    out["r_squared"] = encode_double(r.r_squared);
    out["adjusted_r_squared"] = encode_double(r.adjusted_r_squared);
    out["loocv_rmse"] = encode_double(r.loocv_rmse);
    out["f_statistic"] = encode_double(r.f_statistic);
    out["p_value"] = encode_double(r.p_value);
    out["p_value_applicable"] = r.p_value_applicable;
    out["n_train"] = r.n_train;
    return out;
}

ValidationReport report_from_json(const json& j) {
    ValidationReport r;
    r.r_squared = decode_double(j.at("r_squared"));
    r.adjusted_r_squared = decode_double(j.at("adjusted_r_squared"));
    r.loocv_rmse = decode_double(j.at("loocv_rmse"));
    r.f_statistic = decode_double(j.at("f_statistic"));
    r.p_value = decode_double(j.at("p_value"));
    r.p_value_applicable = j.value("p_value_applicable", true);
    r.n_train = j.at("n_train").get<int>();
    return r;
}

}  // namespace

json SurrogateModel::to_json() const {
    json doc;
    doc["format"] = "hse-model";
    doc["version"] = 1;
    doc["family"] = family_ == SurrogateFamily::Polynomial ? "polynomial" : "kriging";
    doc["space"] = space_.to_json();
    doc["space_hash"] = space_hash_;
    doc["validation_area"] = {{"min", vector_to_json(area_min_)},
                              {"max", vector_to_json(area_max_)}};
    json reports = json::array();
    for (const auto& r : reports_) reports.push_back(report_to_json(r));
    doc["reports"] = reports;

    json targets = json::array();
    if (family_ == SurrogateFamily::Polynomial) {
        doc["degree"] = degree_;
        doc["feature_columns"] = features_.column_names();
        for (std::size_t t = 0; t < poly_coeffs_.size(); ++t) {
            json entry;
            entry["name"] = space_.targets()[t].name;
            entry["coefficients"] = vector_to_json(poly_coeffs_[t]);
            targets.push_back(entry);
        }
    } else {
        doc["kriging"] = {{"theta_lo", kriging_.theta_lo},
                          {"theta_hi", kriging_.theta_hi},
                          {"nugget", kriging_.nugget},
                          {"grid_points", kriging_.grid_points}};
        doc["train_inputs"] = matrix_to_json(train_inputs_);
        for (std::size_t t = 0; t < kriging_targets_.size(); ++t) {
            const auto& kt = kriging_targets_[t];
            json entry;
            entry["name"] = space_.targets()[t].name;
            entry["theta"] = vector_to_json(kt.theta);
            entry["mu"] = kt.mu;
            entry["sigma2"] = kt.sigma2;
            entry["weights"] = vector_to_json(kt.weights);
            entry["r_inv"] = matrix_to_json(kt.r_inv);
            targets.push_back(entry);
        }
    }
    doc["targets"] = targets;
    return doc;
}

SurrogateModel SurrogateModel::from_json(const json& doc) {
    if (doc.value("format", "") != "hse-model")
        throw Error(ErrorCategory::Schema, "not a model document");
    SurrogateModel model;
    model.space_ = HyperSpace::from_json(doc.at("space"));
    model.space_hash_ = doc.at("space_hash").get<std::string>();
    if (model.space_hash_ != model.space_.content_hash())
        throw Error(ErrorCategory::Integrity, "model space hash does not match its space");
    model.area_min_ = vector_from_json(doc.at("validation_area").at("min"));
    model.area_max_ = vector_from_json(doc.at("validation_area").at("max"));
    for (const auto& r : doc.at("reports")) model.reports_.push_back(report_from_json(r));

    const std::string family = doc.at("family").get<std::string>();
    if (family == "polynomial") {
        model.family_ = SurrogateFamily::Polynomial;
        model.degree_ = doc.at("degree").get<int>();
        model.features_ = FeatureMap(model.space_, model.degree_);
        for (const auto& entry : doc.at("targets")) {
            Eigen::VectorXd coeffs = vector_from_json(entry.at("coefficients"));
            if (coeffs.size() != model.features_.columns())
                throw Error(ErrorCategory::Schema,
                            "model coefficients do not match the feature map");
            model.poly_coeffs_.push_back(std::move(coeffs));
        }
    } else if (family == "kriging") {
        model.family_ = SurrogateFamily::Kriging;
        const json& k = doc.at("kriging");
        model.kriging_ = {k.at("theta_lo").get<double>(), k.at("theta_hi").get<double>(),
                          k.at("nugget").get<double>(), k.at("grid_points").get<int>()};
        model.train_inputs_ = matrix_from_json(doc.at("train_inputs"));
        for (const auto& entry : doc.at("targets")) {
            KrigingTarget kt;
            kt.theta = vector_from_json(entry.at("theta"));
            kt.mu = entry.at("mu").get<double>();
            kt.sigma2 = entry.at("sigma2").get<double>();
            kt.weights = vector_from_json(entry.at("weights"));
            kt.r_inv = matrix_from_json(entry.at("r_inv"));
            model.kriging_targets_.push_back(std::move(kt));
        }
    } else {
        throw Error(ErrorCategory::Schema, "unknown model family '" + family + "'");
    }
    const std::size_t k = model.space_.targets().size();
    const std::size_t have = model.family_ == SurrogateFamily::Polynomial
                                 ? model.poly_coeffs_.size()
                                 : model.kriging_targets_.size();
    if (have != k || model.reports_.size() != k)
        throw Error(ErrorCategory::Schema, "model target count does not match the space");
    return model;
}

void SurrogateModel::save(const std::string& path) const {
    write_file_atomic(path, to_json().dump(2) + "\n");
}

SurrogateModel SurrogateModel::load(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCategory::Schema,
                    "cannot parse model document " + path + ": " + e.what());
    }
    return from_json(doc);
}

std::string SurrogateModel::content_hash() const {
    return content_hash_hex(to_json().dump());
}

}  // namespace hse
