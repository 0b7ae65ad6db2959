#include "hse/exemplars.hpp"

#include <algorithm>
#include <cmath>

#include "hse/csv.hpp"
#include "hse/error.hpp"
#include "hse/io.hpp"

namespace hse {

// ---------------------------------------------------------------- DriveCycle

DriveCycle DriveCycle::from_points(std::vector<double> time_s, std::vector<double> v_mps) {
    if (time_s.size() < 2 || time_s.size() != v_mps.size())
        throw Error(ErrorCategory::Validation, "cycle needs at least two (t,v) points");
    for (std::size_t i = 0; i + 1 < time_s.size(); ++i)
        if (!(time_s[i] < time_s[i + 1]))
            throw Error(ErrorCategory::Validation, "cycle times must strictly increase");
    for (double v : v_mps)
        if (!(v >= 0.0))
            throw Error(ErrorCategory::Validation, "cycle velocities must be >= 0");
    DriveCycle c;
    c.time_ = std::move(time_s);
    c.v_ = std::move(v_mps);
    return c;
}

DriveCycle DriveCycle::synthetic_urban() {
    // Accelerate / cruise / brake / idle phases, peaks 30-50 km/h, ~200 s.
    return from_points(
        {0, 5, 17, 45, 52, 57, 72, 110, 120, 135, 150, 175, 185, 200},
        {0, 0, 8.333333333333334, 8.333333333333334, 0, 0, 13.88888888888889,
         13.88888888888889, 5.555555555555555, 5.555555555555555, 11.11111111111111,
         11.11111111111111, 0, 0});
}

DriveCycle DriveCycle::load_csv(const std::string& path) {
    const auto rows = csv::parse(read_file(path));
    if (rows.empty() || rows.front() != std::vector<std::string>{"time_s", "velocity_mps"})
        throw Error(ErrorCategory::Schema,
                    "cycle CSV needs header 'time_s,velocity_mps': " + path);
    std::vector<double> t, v;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 2)
            throw Error(ErrorCategory::Schema, "cycle CSV row has wrong field count");
        t.push_back(parse_double(rows[i][0]));
        v.push_back(parse_double(rows[i][1]));
    }
    return from_points(std::move(t), std::move(v));
}

void DriveCycle::save_csv(const std::string& path) const {
    std::string out = "time_s,velocity_mps\n";
    for (std::size_t i = 0; i < time_.size(); ++i)
        out += format_double(time_[i]) + "," + format_double(v_[i]) + "\n";
    write_file_atomic(path, out);
}

double DriveCycle::distance_m() const {
    double d = 0.0;
    for (std::size_t i = 0; i + 1 < time_.size(); ++i)
        d += 0.5 * (v_[i] + v_[i + 1]) * (time_[i + 1] - time_[i]);
    return d;
}

double DriveCycle::velocity(double t) const {
    if (t <= time_.front()) return v_.front();
    if (t >= time_.back()) return v_.back();
    const auto it = std::upper_bound(time_.begin(), time_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - time_.begin()) - 1;
    const double f = (t - time_[i]) / (time_[i + 1] - time_[i]);
    return v_[i] + f * (v_[i + 1] - v_[i]);
}

double DriveCycle::acceleration(double t) const {
    if (t < time_.front() || t >= time_.back()) return 0.0;
    const auto it = std::upper_bound(time_.begin(), time_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - time_.begin()) - 1;
    return (v_[i + 1] - v_[i]) / (time_[i + 1] - time_[i]);
}

// -------------------------------------------------------------- FevSimulator

FevSimulator::FevSimulator(FevConstants constants, DriveCycle cycle)
    : k_(constants), cycle_(std::move(cycle)) {}

HyperSpace FevSimulator::default_space() {
    std::vector<Variable> design{
        Variable::continuous("T_max", 150.0, 400.0, "N*m"),
        Variable::continuous("base_speed", 400.0, 900.0, "rad/s"),
        Variable::continuous("g1", 6.0, 12.0, "-"),
        Variable::categorical("topology", {"A1", "A2"}),
        Variable::continuous("g2", 2.0, 5.5, "-")
            .with_active_when({"topology", "A2"}),
        Variable::continuous("shift_speed", 5.0, 20.0, "m/s")
            .with_active_when({"topology", "A2"}),
    };
    std::vector<TargetIndicator> targets{
        {"t_a50", Orientation::Minimize, "s"},
        {"E_c", Orientation::Minimize, "kWh/100km"},
    };
    return HyperSpace(std::move(design), {}, std::move(targets));
}

FevDesign FevSimulator::parse_design(const DesignPoint& d) const {
    if (d.values.size() != 6)
        throw Error(ErrorCategory::Mismatch, "fev design point needs 6 values");
    FevDesign out;
    out.t_max_nm = std::get<double>(d.values[0]);
    out.base_speed_rad_s = std::get<double>(d.values[1]);
    out.g1 = std::get<double>(d.values[2]);
    out.two_shift = std::get<std::string>(d.values[3]) == "A2";
    out.g2 = std::get<double>(d.values[4]);
    out.shift_speed_mps = std::get<double>(d.values[5]);
    return out;
}

double FevSimulator::active_ratio(const FevDesign& design, double v) const {
    if (!design.two_shift) return design.g1;
    return v < design.shift_speed_mps ? design.g1 : design.g2;
}

double FevSimulator::resist_force(double v) const {
    double f = k_.aero_coeff * v * v;
    if (v > 1e-9) f += k_.rolling_coeff * k_.mass_kg * k_.gravity;
    return f;
}

double FevSimulator::available_wheel_force(const FevDesign& design, double v) const {
    const double g = active_ratio(design, v);
    const double omega = g * v / k_.wheel_radius_m;
    const double torque = omega <= design.base_speed_rad_s
                              ? design.t_max_nm
                              : design.t_max_nm * design.base_speed_rad_s / omega;
    const double force = k_.gear_efficiency * g * torque / k_.wheel_radius_m;
    return std::min(force, k_.grip_mu * k_.mass_kg * k_.gravity);
}

double FevSimulator::accel_rhs(const FevDesign& design, double v) const {
    return (available_wheel_force(design, v) - resist_force(v)) / k_.mass_kg;
}

double FevSimulator::cycle_power(const FevDesign& design, double t) const {
    const double v = cycle_.velocity(t);
    const double a = cycle_.acceleration(t);
    if (v <= 1e-9 && a <= 0.0) return k_.aux_power_w;  // standstill

    const double g = active_ratio(design, v);
    const double omega = g * v / k_.wheel_radius_m;
    const double iron = k_.iron_loss_w_per_nm * design.t_max_nm *
                        (omega / k_.iron_loss_ref_speed) * (omega / k_.iron_loss_ref_speed);
    const double required = k_.mass_kg * a + resist_force(v);
    if (required <= 0.0) return iron + k_.aux_power_w;  // coasting/braking, no regen

    const double motor_torque =
        required * k_.wheel_radius_m / (g * k_.gear_efficiency);
    const double available = omega <= design.base_speed_rad_s
                                 ? design.t_max_nm
                                 : design.t_max_nm * design.base_speed_rad_s / omega;
    if (motor_torque > available * (1.0 + 1e-9))
        throw Error(ErrorCategory::Runtime, "cycle-infeasible");
    const double copper =
        k_.copper_loss_w_per_nm * motor_torque * motor_torque / design.t_max_nm;
    return required * v / k_.gear_efficiency + copper + iron + k_.aux_power_w;
}

std::pair<double, double> FevSimulator::simulate(const FevDesign& design) const {
    if (design.two_shift && !(design.g2 < design.g1) )
        throw Error(ErrorCategory::Runtime, "invalid-gearing");
    if (design.two_shift && !(design.g2 > 0.0))
        throw Error(ErrorCategory::Runtime, "invalid-gearing");

    // 0 -> 50 km/h at full torque, RK4 on dv/dt.
    const double dt = k_.rk4_dt_s;
    double v = 0.0;
    double t = 0.0;
    double t_a50 = -1.0;
    while (t < k_.accel_time_cap_s) {
        const double k1 = accel_rhs(design, v);
        if (k1 <= 1e-6 && v < k_.target_speed_mps)
            throw Error(ErrorCategory::Runtime, "unreachable-target-speed");
        const double k2 = accel_rhs(design, v + 0.5 * dt * k1);
        const double k3 = accel_rhs(design, v + 0.5 * dt * k2);
        const double k4 = accel_rhs(design, v + dt * k3);
        const double v_next = v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (v_next >= k_.target_speed_mps) {
            t_a50 = t + dt * (k_.target_speed_mps - v) / (v_next - v);
            break;
        }
        v = v_next;
        t += dt;
    }
    if (t_a50 < 0.0) throw Error(ErrorCategory::Runtime, "unreachable-target-speed");

    // Cycle energy, RK4 quadrature of the power draw.
    double energy_j = 0.0;
    const double end = cycle_.duration_s();
    for (double tc = 0.0; tc + dt <= end + 1e-9; tc += dt) {
        const double p1 = cycle_power(design, tc);
        const double pm = cycle_power(design, tc + 0.5 * dt);
        const double p2 = cycle_power(design, tc + dt);
        energy_j += dt / 6.0 * (p1 + 4.0 * pm + p2);
    }
    const double e_c = energy_j / 3.6e6 * (1e5 / cycle_.distance_m());
    return {t_a50, e_c};
}

SimOutcome FevSimulator::evaluate(int, const DesignPoint& d, const UseCasePoint&) {
    try {
        const auto [t_a50, e_c] = simulate(parse_design(d));
        return SimOutcome::success({t_a50, e_c});
    } catch (const Error& e) {
        return SimOutcome::failure(e.what());
    } catch (const std::bad_variant_access&) {
        return SimOutcome::failure("protocol: design values do not match the fev space");
    }
}

// -------------------------------------------------------------- YawSimulator

YawSimulator::YawSimulator(YawConstants constants) : k_(constants) {}

HyperSpace YawSimulator::default_space() {
    std::vector<Variable> design{
        Variable::continuous("K", 0.0, 60000.0, "N*m*s/rad"),
        Variable::categorical("topology", {"2WD", "4WD"}),
        Variable::continuous("M_max", 0.0, 2500.0, "N*m"),
    };
    std::vector<Variable> use_case{
        Variable::continuous("r", 40.0, 300.0, "m"),
        Variable::continuous("a_x", 0.5, 3.0, "m/s^2"),
    };
    std::vector<TargetIndicator> targets{{"gain_stab", Orientation::Maximize, "-"}};
    return HyperSpace(std::move(design), std::move(use_case), std::move(targets));
}

YawDesign YawSimulator::parse_design(const DesignPoint& d) const {
    if (d.values.size() != 3)
        throw Error(ErrorCategory::Mismatch, "yaw design point needs 3 values");
    YawDesign out;
    out.gain_k = std::get<double>(d.values[0]);
    out.four_wheel = std::get<std::string>(d.values[1]) == "4WD";
    out.m_max_nm = std::get<double>(d.values[2]);
    return out;
}

YawUseCase YawSimulator::parse_use_case(const UseCasePoint& u) const {
    if (u.values.size() != 2)
        throw Error(ErrorCategory::Mismatch, "yaw use case needs 2 values");
    return {std::get<double>(u.values[0]), std::get<double>(u.values[1])};
}

double YawSimulator::effective_authority(const YawDesign& design) const {
    return std::min(design.m_max_nm,
                    design.four_wheel ? k_.moment_cap_4wd_nm : k_.moment_cap_2wd_nm);
}

double YawSimulator::steering_angle(double a_y, double moment, const YawUseCase& uc,
                                    bool four_wheel) const {
    const double wheelbase = k_.l_f_m + k_.l_r_m;
    const double weight = k_.mass_kg * k_.gravity;

    // Axle loads with longitudinal transfer.
    const double f_zf = weight * k_.l_r_m / wheelbase -
                        k_.mass_kg * uc.a_x * k_.h_cg_m / wheelbase;
    const double f_zr = weight * k_.l_f_m / wheelbase +
                        k_.mass_kg * uc.a_x * k_.h_cg_m / wheelbase;
    const double f_zf_static = weight * k_.l_r_m / wheelbase;
    const double f_zr_static = weight * k_.l_f_m / wheelbase;

    // Traction demand couples into the lateral capacity (friction ellipse).
    const double f_x_total = k_.mass_kg * uc.a_x;
    const double f_x_front = four_wheel ? 0.5 * f_x_total : 0.0;
    const double f_x_rear = four_wheel ? 0.5 * f_x_total : f_x_total;

    auto lateral_cap = [&](double f_z, double f_x) {
        const double limit = k_.grip_mu * f_z;
        const double ratio = f_x / limit;
        if (ratio >= 1.0) return 0.0;
        return limit * std::sqrt(1.0 - ratio * ratio);
    };
    const double cap_f = lateral_cap(f_zf, f_x_front);
    const double cap_r = lateral_cap(f_zr, f_x_rear);

    const double ay_g = a_y / k_.gravity;
    const double c_f = k_.c_front_n_per_rad * (f_zf / f_zf_static) *
                       std::max(0.05, 1.0 - k_.stiffness_degradation_front * ay_g * ay_g);
    const double c_r = k_.c_rear_n_per_rad * (f_zr / f_zr_static) *
                       std::max(0.05, 1.0 - k_.stiffness_degradation_rear * ay_g * ay_g);

    const double f_yf = (k_.mass_kg * a_y * k_.l_r_m - moment) / wheelbase;
    const double f_yr = (k_.mass_kg * a_y * k_.l_f_m + moment) / wheelbase;

    auto slip_angle = [&](double f_y, double c, double cap) {
        if (std::abs(f_y) >= cap) return std::numeric_limits<double>::quiet_NaN();
        const double saturation = 1.0 - (f_y / cap) * (f_y / cap);
        return f_y / (c * saturation);
    };
    const double alpha_f = slip_angle(f_yf, c_f, cap_f);
    const double alpha_r = slip_angle(f_yr, c_r, cap_r);
    return wheelbase / uc.radius_m + alpha_f - alpha_r;
}

YawSimulator::SweepPoint YawSimulator::sweep_step(double a_y, double prev_delta,
                                                  double gain_k, double m_eff,
                                                  const YawUseCase& uc,
                                                  bool four_wheel) const {
    const double wheelbase = k_.l_f_m + k_.l_r_m;
    const double v = std::sqrt(a_y * uc.radius_m);
    const double ackermann = wheelbase / uc.radius_m;

    auto moment_for = [&](double delta) {
        const double yaw_rate_error = v / wheelbase * (delta - ackermann);
        return std::clamp(gain_k * yaw_rate_error, -m_eff, m_eff);
    };

    double delta = prev_delta;
    for (int it = 0; it < k_.fixed_point_max_iter; ++it) {
        const double target = steering_angle(a_y, moment_for(delta), uc, four_wheel);
        if (std::isnan(target)) return {a_y, delta, false};
        const double next =
            delta + k_.fixed_point_damping * (target - delta);
        if (std::abs(next - delta) < k_.fixed_point_tol) return {a_y, next, true};
        delta = next;
    }
    // No quasi-static equilibrium: the saturated controller oscillates
    // between its clamped branches; report the worse branch.
    const double hi = steering_angle(a_y, m_eff, uc, four_wheel);
    const double lo = steering_angle(a_y, -m_eff, uc, four_wheel);
    if (std::isnan(hi) || std::isnan(lo)) return {a_y, delta, false};
    const double worse =
        std::abs(hi - prev_delta) > std::abs(lo - prev_delta) ? hi : lo;
    return {a_y, worse, true};
}

std::vector<std::pair<double, double>> YawSimulator::steer_curve(
    const YawDesign& design, const YawUseCase& uc) const {
    std::vector<std::pair<double, double>> curve;
    const double m_eff = effective_authority(design);
    const double wheelbase = k_.l_f_m + k_.l_r_m;
    double prev = wheelbase / uc.radius_m;
    for (double a_y = k_.ay_start; a_y <= k_.ay_cap + 1e-12; a_y += k_.ay_step) {
        const SweepPoint p =
            sweep_step(a_y, prev, design.gain_k, m_eff, uc, design.four_wheel);
        if (!p.stable) break;
        curve.push_back({p.a_y, p.delta});
        prev = p.delta;
    }
    return curve;
}

double YawSimulator::ay_max(const YawDesign& design, const YawUseCase& uc) const {
    const auto curve = steer_curve(design, uc);
    if (curve.size() < 2) return k_.ay_start;

    // Linear reference: tangent through the first two sweep points.
    const double slope =
        (curve[1].second - curve[0].second) / (curve[1].first - curve[0].first);
    auto linear = [&](double a_y) {
        return curve[0].second + slope * (a_y - curve[0].first);
    };
    double last_stable = curve[0].first;
    for (const auto& [a_y, delta] : curve) {
        if (std::abs(delta - linear(a_y)) > k_.stability_band_rad) break;
        last_stable = a_y;
    }
    return last_stable;
}

double YawSimulator::stability_gain(const YawDesign& design, const YawUseCase& uc) const {
    YawDesign reference = design;
    reference.gain_k = 0.0;
    const double ref = ay_max(reference, uc);
    const double ayc = ay_max(design, uc);
    return ayc / ref - 1.0;
}

SimOutcome YawSimulator::evaluate(int, const DesignPoint& d, const UseCasePoint& u) {
    try {
        const double gain = stability_gain(parse_design(d), parse_use_case(u));
        return SimOutcome::success({gain});
    } catch (const Error& e) {
        return SimOutcome::failure(e.what());
    } catch (const std::bad_variant_access&) {
        return SimOutcome::failure("protocol: point values do not match the yaw space");
    }
}

// ----------------------------------------------------------- BraninSimulator

HyperSpace BraninSimulator::default_space() {
    std::vector<Variable> design{
        Variable::continuous("x1", 0.0, 1.0),
        Variable::continuous("x2", 0.0, 1.0),
    };
    std::vector<TargetIndicator> targets{{"y", Orientation::Minimize, ""}};
    return HyperSpace(std::move(design), {}, std::move(targets));
}

double BraninSimulator::value(double x1, double x2) {
    const double pi = 3.14159265358979323846;
    const double a = 1.0;
    const double b = 5.1 / (4.0 * pi * pi);
    const double c = 5.0 / pi;
    const double r = 6.0;
    const double s = 10.0;
    const double t = 1.0 / (8.0 * pi);
    const double u = 15.0 * x1 - 5.0;
    const double w = 15.0 * x2;
    const double inner = w - b * u * u + c * u - r;
    return a * inner * inner + s * (1.0 - t) * std::cos(u) + s;
}

SimOutcome BraninSimulator::evaluate(int, const DesignPoint& d, const UseCasePoint&) {
    try {
        return SimOutcome::success(
            {value(std::get<double>(d.values.at(0)), std::get<double>(d.values.at(1)))});
    } catch (const std::exception&) {
        return SimOutcome::failure("protocol: design values do not match the branin space");
    }
}

// ------------------------------------------------------------------ builtins

std::unique_ptr<Simulator> make_builtin_simulator(const std::string& name) {
    if (name == "fev") return std::make_unique<FevSimulator>();
    if (name == "yaw") return std::make_unique<YawSimulator>();
    if (name == "branin") return std::make_unique<BraninSimulator>();
    throw Error(ErrorCategory::Usage, "unknown builtin simulator '" + name + "'");
}

HyperSpace builtin_space(const std::string& name) {
    if (name == "fev") return FevSimulator::default_space();
    if (name == "yaw") return YawSimulator::default_space();
    if (name == "branin") return BraninSimulator::default_space();
    throw Error(ErrorCategory::Usage, "unknown builtin space '" + name + "'");
}

bool is_builtin_simulator(const std::string& name) {
    return name == "fev" || name == "yaw" || name == "branin";
}

}  // namespace hse
