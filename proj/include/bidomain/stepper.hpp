#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bidomain/energy.hpp"
#include "bidomain/fem.hpp"

namespace bidomain {

/// Where the cubic G'(u) is evaluated: at the old step or at the new one.
enum class Nonlinearity { Explicit, Newton };
enum class FluxIteration { None, Picard };
/// Auto picks CG for symmetric step systems and BiCGStab otherwise.
enum class LinearSolverKind { Auto, CG, BiCGStab };

struct StepConfig {
  double dt = 0.1;
  double epsilon = 1e-6;
  Nonlinearity nonlinearity = Nonlinearity::Explicit;
  std::size_t newton_max_iter = 20;
  double newton_tol = 1e-10;  // on the tau-norm of the increment
  FluxIteration flux_iteration = FluxIteration::None;
  std::size_t picard_max_iter = 50;
  double picard_tol = 1e-10;  // on the relative change of lagged coefficients
  LinearSolverKind solver = LinearSolverKind::Auto;
  SolverOptions linear;

  void check() const;
  friend bool operator==(const StepConfig& a, const StepConfig& b);
};

/// 1e-6 times the largest conductivity scale of the laws.
double default_epsilon(const Conductivities& laws);

/// Applied current on the tissue part of a disk, active for steps whose new
/// time lies in (start, end]. `amplitude` is the total current; it is spread
/// uniformly over the covered area.
struct StimulusSpec {
  double amplitude = 0.4;
  Point center{0.0, 0.0};
  double radius = 0.1;
  double start = 0.0;
  double end = 1.0;

  void check() const;
  bool active(double t) const;
  friend bool operator==(const StimulusSpec&, const StimulusSpec&) = default;
};

/// (amplitude / |tissue ∩ disk|) * integral over tissue ∩ disk of phi_j, by
/// sub-triangle centroid quadrature on triangles meeting the disk.
Vector stimulus_load(const TriMesh& mesh, const StimulusSpec& stim);

struct StepStats {
  std::size_t nonlinear_iterations = 0;
  std::size_t linear_iterations = 0;
  bool dense_fallback = false;
  double relative_residual = 0.0;  // full nonlinear residual
  double elliptic_residual = 0.0;  // sum of the two potential rows
  std::vector<double> increments;  // tau-norm of each nonlinear increment
  std::vector<double> coefficient_changes;  // Picard only
};

/// Newton or Picard did not converge; carries the iteration history.
class StepError : public SolverError {
public:
  StepError(const std::string& what, StepStats stats) : SolverError(what), stats_(std::move(stats)) {}
  const StepStats& stats() const { return stats_; }

private:
  StepStats stats_;
};

struct StepResult {
  State state;
  StepStats stats;
};

struct ResidualNorms {
  double relative = 0.0;
  double elliptic = 0.0;
};

/// One implicit Euler step of the regularized bidomain system, as a monolithic
/// solve over (ui, ue, w) on all enclosure vertices. The coupling sign of the
/// recovery row comes from the ionic model's mode.
class BidomainStepper {
public:
  BidomainStepper(const TriMesh& mesh, Conductivities laws, IonicModel model, StepConfig cfg,
                  std::optional<StimulusSpec> stimulus = std::nullopt);

  /// Step system with nonlinear terms frozen at `linearization` (the cubic
  /// only when Newton is selected). Its solution is the next iterate.
  BlockSystem build_step_system(const State& state_k, const State& linearization, double t_new) const;
  BlockSystem build_step_system(const State& state_k, double t_new) const {
    return build_step_system(state_k, state_k, t_new);
  }

  /// Nonlinear residual of the step equations at `candidate`, concatenated
  /// (ui row, ue row, w row). With state_k == candidate, Newton mode, and no
  /// stimulus this is the gradient of the regularized energy.
  Vector residual(const State& candidate, const State& state_k, double t_new) const;
  ResidualNorms residual_norms(const State& candidate, const State& state_k, double t_new) const;

  StepResult step(const State& state_k) const;

  bool symmetric() const;
  bool constant_matrix() const { return constant_.has_value(); }

  const TriMesh& mesh() const { return *mesh_; }
  const Conductivities& laws() const { return laws_; }
  const IonicModel& model() const { return model_; }
  const StepConfig& config() const { return cfg_; }
  const std::optional<StimulusSpec>& stimulus() const { return stimulus_; }
  const SparseMatrix& tissue_mass() const { return mass_tissue_; }
  const SparseMatrix& shell_mass() const { return mass_shell_; }
  const TauInnerProduct& inner_product() const { return ip_; }

private:
  Vector cubic_point(const State& state_k, const State& linearization) const;
  Vector known_data(const State& state_k, const Vector& cubic_at, double t_new) const;
  void set_matrix_blocks(BlockSystem& sys, const State& linearization, const SparseMatrix* jac) const;
  Vector solve(const SparseMatrix& a, const Vector& b, const SolverOptions& opts, StepStats& stats) const;
  double coefficient_change(const State& before, const State& after) const;

  const TriMesh* mesh_;
  Conductivities laws_;
  IonicModel model_;
  StepConfig cfg_;
  std::optional<StimulusSpec> stimulus_;
  bool nonlinear_flux_ = false;
  SparseMatrix mass_tissue_;
  SparseMatrix mass_shell_;
  Vector stim_load_;
  Vector mass_ones_;  // M_T 1
  TauInnerProduct ip_;
  std::optional<SparseMatrix> constant_;
};

/// ui = u0 and w = w0 on tissue nodes, everything else zero.
State initial_state(const TriMesh& mesh, std::span<const double> u0, std::span<const double> w0);

/// P1 interpolant of a nodal field at a located point.
double probe_value(const TriMesh& mesh, const Location& loc, std::span<const double> nodal);

struct RunOptions {
  std::size_t steps = 0;
  std::vector<Point> probes;
  std::size_t probe_every = 1;
  bool record_energy = true;
  /// Called with the step index (0 for the initial state) after every step.
  std::function<void(std::size_t, const State&)> observer;
};

struct Trajectory {
  std::vector<double> probe_times;
  std::vector<std::vector<double>> probe_u;   // [record][probe]
  std::vector<std::vector<double>> probe_ue;  // [record][probe]
  std::vector<double> times;                  // every step, initial included
  std::vector<EnergyReport> energies;         // aligned with times when recorded
  std::vector<double> tissue_mean_ue;         // integral of ue over the tissue
  std::vector<StepStats> stats;               // one per accepted step
  State final_state;
  std::optional<std::string> error;

  bool completed() const { return !error.has_value(); }
};

/// Steps from `initial`. A solver failure stops the run and is reported in
/// `error`; everything recorded up to that point is kept.
Trajectory run(const BidomainStepper& stepper, const State& initial, const RunOptions& options);

}  // namespace bidomain
