#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hse/hyperspace.hpp"
#include "hse/runner.hpp"

namespace hse {

/// Piecewise-linear velocity profile v(t). Bundled synthetic urban cycle
/// (~200 s of accelerate/cruise/brake/idle phases); a measured trace can be
/// dropped in as CSV `time_s,velocity_mps`.
class DriveCycle {
public:
    static DriveCycle synthetic_urban();
    static DriveCycle from_points(std::vector<double> time_s, std::vector<double> v_mps);
    static DriveCycle load_csv(const std::string& path);
    void save_csv(const std::string& path) const;

    double duration_s() const { return time_.back(); }
    double distance_m() const;
    double velocity(double t) const;      // clamped to the profile ends
    double acceleration(double t) const;  // piecewise constant

    const std::vector<double>& times() const { return time_; }
    const std::vector<double>& velocities() const { return v_; }

private:
    std::vector<double> time_;
    std::vector<double> v_;
};

/// Fixed physical constants of the electric-drivetrain exemplar. These are
/// documented stand-ins, not measured vehicle data.
struct FevConstants {
    double mass_kg = 1500.0;
    double wheel_radius_m = 0.30;
    double aero_coeff = 0.396;       // N per (m/s)^2, lumped 0.5*rho*cd*A
    double rolling_coeff = 0.012;
    double gravity = 9.81;
    double gear_efficiency = 0.97;
    double grip_mu = 0.9;
    double copper_loss_w_per_nm = 6.0;   // P_cu = c * tau^2 / T_max
    double iron_loss_w_per_nm = 1.2;     // P_fe = c * T_max * (omega/omega_ref)^2
    double iron_loss_ref_speed = 600.0;  // rad/s
    double aux_power_w = 250.0;
    double rk4_dt_s = 0.01;
    double accel_time_cap_s = 120.0;
    double target_speed_mps = 50.0 / 3.6;
};

/// One drivetrain layout: motor sizing, gearing and the topology
/// alternative (A1 fixed gear, A2 two-speed with a shift point).
struct FevDesign {
    double t_max_nm = 250.0;
    double base_speed_rad_s = 600.0;
    double g1 = 9.0;
    bool two_shift = false;  // topology A2
    double g2 = 4.0;         // active for A2 only
    double shift_speed_mps = 12.0;
};

/// Longitudinal drivetrain exemplar: full-torque launch for the 0-50 km/h
/// time and electrical energy over the drive cycle, normalized to 100 km.
/// Torque is constant up to base speed, constant power above; fixed-step
/// RK4 at 0.01 s; no regeneration.
class FevSimulator : public Simulator {
public:
    explicit FevSimulator(FevConstants constants = {},
                          DriveCycle cycle = DriveCycle::synthetic_urban());

    static HyperSpace default_space();

    SimOutcome evaluate(int run_id, const DesignPoint& d, const UseCasePoint& u) override;

    FevDesign parse_design(const DesignPoint& d) const;

    /// dv/dt at speed v under full torque (traction minus resistances).
    double accel_rhs(const FevDesign& design, double v) const;
    /// Electrical power draw while tracking the cycle at time t.
    double cycle_power(const FevDesign& design, double t) const;

    /// (t_a50 [s], E_c [kWh/100km]); throws Error(Runtime) with the failure
    /// reason on unreachable target speed or an untrackable cycle.
    std::pair<double, double> simulate(const FevDesign& design) const;

    const FevConstants& constants() const { return k_; }
    const DriveCycle& cycle() const { return cycle_; }

private:
    double available_wheel_force(const FevDesign& design, double v) const;
    double resist_force(double v) const;
    double active_ratio(const FevDesign& design, double v) const;

    FevConstants k_;
    DriveCycle cycle_;
};

/// Fixed constants of the lateral-stability exemplar (single-track model
/// with load transfer, friction-ellipse traction coupling and lateral-accel
/// dependent stiffness degradation).
struct YawConstants {
    double mass_kg = 1600.0;
    double l_f_m = 1.15;
    double l_r_m = 1.45;
    double h_cg_m = 0.55;
    double gravity = 9.81;
    double c_front_n_per_rad = 95000.0;
    double c_rear_n_per_rad = 115000.0;
    double stiffness_degradation_front = 0.12;  // * (a_y/g)^2
    double stiffness_degradation_rear = 0.30;
    double grip_mu = 0.95;
    double stability_band_rad = 0.6 * 3.14159265358979323846 / 180.0;
    double ay_start = 0.1;
    double ay_step = 0.02;
    double ay_cap = 11.0;
    double moment_cap_2wd_nm = 800.0;
    double moment_cap_4wd_nm = 2500.0;
    double fixed_point_damping = 0.5;
    double fixed_point_tol = 1e-12;
    int fixed_point_max_iter = 400;
};

struct YawDesign {
    double gain_k = 0.0;  // N*m*s/rad on the yaw-rate error
    bool four_wheel = false;
    double m_max_nm = 0.0;  // requested authority, capped by the topology
};

struct YawUseCase {
    double radius_m = 100.0;
    double a_x = 1.0;
};

/// Quasi-static steering sweep on a constant-radius circle: steering angle
/// versus lateral acceleration, with an active yaw moment
/// M = clamp(K * (v*delta/L - v/r), +-M_eff). Stability ends where the
/// steering angle leaves a constant-width band around its own low-a_y
/// linearization; the stability gain compares that limit against the K=0
/// reference of the same topology.
class YawSimulator : public Simulator {
public:
    explicit YawSimulator(YawConstants constants = {});

    static HyperSpace default_space();

    SimOutcome evaluate(int run_id, const DesignPoint& d, const UseCasePoint& u) override;

    YawDesign parse_design(const DesignPoint& d) const;
    YawUseCase parse_use_case(const UseCasePoint& u) const;

    /// Steering angle from force balance at one sweep point; NaN past the
    /// grip limit. Exposed for cross-checks against closed-form values.
    double steering_angle(double a_y, double moment, const YawUseCase& uc,
                          bool four_wheel) const;

    /// The swept (a_y, delta_s) curve up to the stability/grip limit.
    std::vector<std::pair<double, double>> steer_curve(const YawDesign& design,
                                                       const YawUseCase& uc) const;

    /// Maximum stable lateral acceleration for this layout.
    double ay_max(const YawDesign& design, const YawUseCase& uc) const;

    /// Stability gain against the same-topology zero-gain reference.
    double stability_gain(const YawDesign& design, const YawUseCase& uc) const;

    double effective_authority(const YawDesign& design) const;

    const YawConstants& constants() const { return k_; }

private:
    struct SweepPoint {
        double a_y = 0.0;
        double delta = 0.0;
        bool stable = false;
    };
    SweepPoint sweep_step(double a_y, double prev_delta, double gain_k, double m_eff,
                          const YawUseCase& uc, bool four_wheel) const;

    YawConstants k_;
};

/// Branin test function scaled to the unit square, minimized; the standard
/// smooth benchmark used by the surrogate convergence checks.
class BraninSimulator : public Simulator {
public:
    static HyperSpace default_space();
    static double value(double x1, double x2);  // on [0,1]^2

    SimOutcome evaluate(int run_id, const DesignPoint& d, const UseCasePoint& u) override;
};

/// Builtin simulators reachable from the CLI: "fev", "yaw", "branin".
std::unique_ptr<Simulator> make_builtin_simulator(const std::string& name);
HyperSpace builtin_space(const std::string& name);
bool is_builtin_simulator(const std::string& name);

}  // namespace hse
