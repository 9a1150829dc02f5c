#include "bidomain/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bidomain/errors.hpp"

namespace bidomain {

namespace {

constexpr std::size_t kMaxHalvings = 8;
constexpr int kStimulusSubdivisions = 16;

Vector concat(const Vector& a, const Vector& b, const Vector& c) {
  Vector out;
  out.reserve(a.size() + b.size() + c.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

State split(const Vector& x, std::size_t n, double time) {
  State s;
  s.ui.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
  s.ue.assign(x.begin() + static_cast<std::ptrdiff_t>(n), x.begin() + static_cast<std::ptrdiff_t>(2 * n));
  s.w.assign(x.begin() + static_cast<std::ptrdiff_t>(2 * n), x.end());
  s.time = time;
  return s;
}

Vector flatten(const State& s) { return concat(s.ui, s.ue, s.w); }

bool has_p_power(const Conductivities& laws) {
  if (laws.intra.as_p_power() || laws.extra_tissue.as_p_power()) return true;
  return laws.extra_shell && laws.extra_shell->as_p_power();
}

double relative_coefficient_change(const std::vector<double>& before, const std::vector<double>& after) {
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    diff = std::max(diff, std::abs(after[i] - before[i]));
    ref = std::max(ref, std::abs(before[i]));
  }
  return ref > 0.0 ? diff / ref : diff;
}

}  // namespace

void StepConfig::check() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ValidationError("epsilon must be positive");
  if (!(newton_tol > 0.0) || !(picard_tol > 0.0) || !(linear.tol > 0.0)) {
    throw ValidationError("solver tolerances must be positive");
  }
  if (newton_max_iter == 0 || picard_max_iter == 0 || linear.max_iterations == 0) {
    throw ValidationError("iteration limits must be positive");
  }
}

bool operator==(const StepConfig& a, const StepConfig& b) {
  return a.dt == b.dt && a.epsilon == b.epsilon && a.nonlinearity == b.nonlinearity &&
         a.newton_max_iter == b.newton_max_iter && a.newton_tol == b.newton_tol &&
         a.flux_iteration == b.flux_iteration && a.picard_max_iter == b.picard_max_iter &&
         a.picard_tol == b.picard_tol && a.solver == b.solver && a.linear.tol == b.linear.tol &&
         a.linear.max_iterations == b.linear.max_iterations && a.linear.jacobi == b.linear.jacobi &&
         a.linear.check_symmetry == b.linear.check_symmetry && a.linear.absolute_floor == b.linear.absolute_floor;
}

double default_epsilon(const Conductivities& laws) { return 1e-6 * laws.max_scale(); }

void StimulusSpec::check() const {
  if (!(radius > 0.0)) throw ValidationError("stimulus radius must be positive");
  if (!(start <= end)) throw ValidationError("stimulus window start must not exceed its end");
  if (!std::isfinite(amplitude)) throw ValidationError("stimulus amplitude must be finite");
}

bool StimulusSpec::active(double t) const {
  const double slack = 1e-9 * std::max(1.0, std::abs(end));
  return t > start + slack && t <= end + slack;
}

Vector stimulus_load(const TriMesh& mesh, const StimulusSpec& stim) {
  stim.check();
  Vector f(mesh.num_vertices(), 0.0);
  const int n = kStimulusSubdivisions;
  const double r2 = stim.radius * stim.radius;
  double covered = 0.0;
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    if (tri.region != Region::Tissue) continue;
    const Point& p0 = mesh.vertices()[tri.v[0]];
    const Point& p1 = mesh.vertices()[tri.v[1]];
    const Point& p2 = mesh.vertices()[tri.v[2]];
    const double cx = std::clamp(stim.center.x, std::min({p0.x, p1.x, p2.x}), std::max({p0.x, p1.x, p2.x}));
    const double cy = std::clamp(stim.center.y, std::min({p0.y, p1.y, p2.y}), std::max({p0.y, p1.y, p2.y}));
    if ((cx - stim.center.x) * (cx - stim.center.x) + (cy - stim.center.y) * (cy - stim.center.y) > r2) continue;

    const double weight = mesh.signed_area(e) / (n * n);
    auto add_point = [&](double s, double t) {
      const double x = p0.x + s * (p1.x - p0.x) + t * (p2.x - p0.x);
      const double y = p0.y + s * (p1.y - p0.y) + t * (p2.y - p0.y);
      const double dx = x - stim.center.x;
      const double dy = y - stim.center.y;
      if (dx * dx + dy * dy > r2) return;
      covered += weight;
      f[tri.v[0]] += weight * (1.0 - s - t);
      f[tri.v[1]] += weight * s;
      f[tri.v[2]] += weight * t;
    };
    for (int i = 0; i < n; ++i) {
      for (int j = 0; i + j < n; ++j) {
        add_point((i + 1.0 / 3.0) / n, (j + 1.0 / 3.0) / n);
        if (i + j < n - 1) add_point((i + 2.0 / 3.0) / n, (j + 2.0 / 3.0) / n);
      }
    }
  }
  if (!(covered > 0.0)) throw ValidationError("stimulus disk does not meet the tissue");
  for (double& v : f) v *= stim.amplitude / covered;
  return f;
}

BidomainStepper::BidomainStepper(const TriMesh& mesh, Conductivities laws, IonicModel model, StepConfig cfg,
                                 std::optional<StimulusSpec> stimulus)
    : mesh_(&mesh),
      laws_(std::move(laws)),
      model_(model),
      cfg_(cfg),
      stimulus_(std::move(stimulus)),
      nonlinear_flux_(has_p_power(laws_)),
      mass_tissue_(assemble_mass(mesh, RegionFilter::Tissue)),
      mass_shell_(assemble_mass(mesh, RegionFilter::Shell)),
      ip_(mass_tissue_, model.tau) {
  cfg_.check();
  model_.check();
  if (mesh.has_shell() && !laws_.extra_shell) {
    throw ValidationError("mesh has a shell region but no shell conductivity was given");
  }
  if (nonlinear_flux_ && cfg_.flux_iteration != FluxIteration::Picard) {
    throw ValidationError("p-power conductivities require Picard flux iteration");
  }
  const std::size_t n = mesh.num_vertices();
  stim_load_ = stimulus_ ? stimulus_load(mesh, *stimulus_) : Vector(n, 0.0);
  mass_ones_ = spmv(mass_tissue_, Vector(n, 1.0));
  if (cfg_.nonlinearity == Nonlinearity::Explicit && !nonlinear_flux_) {
    BlockSystem sys({n, n, n});
    set_matrix_blocks(sys, State::zeros(n), nullptr);
    constant_ = sys.monolithic();
  }
}

bool BidomainStepper::symmetric() const {
  return !model_.has_coupling() || model_.mode == CouplingMode::PureGradient;
}

Vector BidomainStepper::cubic_point(const State& state_k, const State& linearization) const {
  return cfg_.nonlinearity == Nonlinearity::Newton ? linearization.transmembrane() : state_k.transmembrane();
}

void BidomainStepper::set_matrix_blocks(BlockSystem& sys, const State& linearization,
                                        const SparseMatrix* jac) const {
  const double dt = cfg_.dt;
  const double eps = cfg_.epsilon;
  SparseMatrix d = mass_tissue_.scaled(1.0 / dt);
  if (jac != nullptr) d = add(d, *jac);
  const SparseMatrix ki = assemble_field_operator(*mesh_, laws_, Field::Intra, linearization.ui);
  const SparseMatrix ke = assemble_field_operator(*mesh_, laws_, Field::Extra, linearization.ue);

  sys.set_block(0, 0, add(add(d, ki), mass_shell_, 1.0, eps));
  sys.set_block(0, 1, d.scaled(-1.0));
  sys.set_block(1, 0, d.scaled(-1.0));
  sys.set_block(1, 1, add(add(d, ke), mass_tissue_, 1.0, eps));
  if (model_.has_coupling()) {
    const double c = model_.coupling();
    const double s = model_.coupling_sign() * c;
    sys.set_block(0, 2, mass_tissue_.scaled(c));
    sys.set_block(1, 2, mass_tissue_.scaled(-c));
    sys.set_block(2, 0, mass_tissue_.scaled(s));
    sys.set_block(2, 1, mass_tissue_.scaled(-s));
  }
  sys.set_block(2, 2, add(mass_tissue_, mass_shell_, model_.tau / dt + model_.effective_mu(), eps));
}

// Right-hand side with every nonlinear term evaluated at `cubic_at` moved
// across; used as the scale for relative residuals.
Vector BidomainStepper::known_data(const State& state_k, const Vector& cubic_at, double t_new) const {
  const std::size_t n = mesh_->num_vertices();
  Vector phi = spmv(mass_tissue_, state_k.transmembrane());
  for (double& v : phi) v /= cfg_.dt;
  if (stimulus_ && stimulus_->active(t_new)) axpy(1.0, stim_load_, phi);
  axpy(-1.0, assemble_cubic_residual(*mesh_, model_, cubic_at), phi);
  Vector psi(n);
  for (std::size_t i = 0; i < n; ++i) psi[i] = -phi[i];
  Vector chi = spmv(mass_tissue_, state_k.w);
  const double lambda = model_.effective_lambda();
  for (std::size_t i = 0; i < n; ++i) chi[i] = model_.tau / cfg_.dt * chi[i] - lambda * mass_ones_[i];
  return concat(phi, psi, chi);
}

BlockSystem BidomainStepper::build_step_system(const State& state_k, const State& linearization,
                                               double t_new) const {
  const std::size_t n = mesh_->num_vertices();
  if (state_k.size() != n || linearization.size() != n || state_k.ue.size() != n || state_k.w.size() != n) {
    throw DimensionError("build_step_system: state does not match the mesh");
  }
  const Vector cubic_at = cubic_point(state_k, linearization);
  std::optional<SparseMatrix> jac;
  if (cfg_.nonlinearity == Nonlinearity::Newton) jac = assemble_cubic_jacobian(*mesh_, model_, cubic_at);

  BlockSystem sys({n, n, n});
  set_matrix_blocks(sys, linearization, jac ? &*jac : nullptr);

  Vector data = known_data(state_k, cubic_at, t_new);
  if (jac) {
    const Vector ju = spmv(*jac, cubic_at);
    for (std::size_t i = 0; i < n; ++i) {
      data[i] += ju[i];
      data[n + i] -= ju[i];
    }
  }
  for (std::size_t f = 0; f < 3; ++f) {
    sys.rhs(f).assign(data.begin() + static_cast<std::ptrdiff_t>(f * n),
                      data.begin() + static_cast<std::ptrdiff_t>((f + 1) * n));
  }
  return sys;
}

Vector BidomainStepper::residual(const State& x, const State& state_k, double t_new) const {
  const std::size_t n = mesh_->num_vertices();
  if (x.size() != n || x.ue.size() != n || x.w.size() != n || state_k.size() != n) {
    throw DimensionError("residual: state does not match the mesh");
  }
  const double dt = cfg_.dt;
  const double eps = cfg_.epsilon;
  const Vector u = x.transmembrane();
  const Vector uk = state_k.transmembrane();
  Vector du(n);
  for (std::size_t i = 0; i < n; ++i) du[i] = u[i] - uk[i];
  const Vector m_du = spmv(mass_tissue_, du);
  const Vector cubic = assemble_cubic_residual(*mesh_, model_, cfg_.nonlinearity == Nonlinearity::Newton ? u : uk);
  const Vector flux_i = assemble_field_residual(*mesh_, laws_, Field::Intra, x.ui);
  const Vector flux_e = assemble_field_residual(*mesh_, laws_, Field::Extra, x.ue);
  const Vector shell_ui = spmv(mass_shell_, x.ui);
  const Vector tissue_ue = spmv(mass_tissue_, x.ue);
  const Vector shell_w = spmv(mass_shell_, x.w);
  const Vector m_w = spmv(mass_tissue_, x.w);
  const Vector m_u = spmv(mass_tissue_, u);
  const Vector m_wk = spmv(mass_tissue_, state_k.w);
  const bool stim = stimulus_ && stimulus_->active(t_new);
  const double c = model_.coupling();
  const double s = model_.coupling_sign() * c;
  const double lambda = model_.effective_lambda();
  const double mu = model_.effective_mu();

  Vector r(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ionic = cubic[i] + c * m_w[i];
    const double load = stim ? stim_load_[i] : 0.0;
    r[i] = m_du[i] / dt + flux_i[i] + ionic + eps * shell_ui[i] - load;
    r[n + i] = -m_du[i] / dt + flux_e[i] - ionic + eps * tissue_ue[i] + load;
    r[2 * n + i] = model_.tau / dt * (m_w[i] - m_wk[i]) + s * m_u[i] + lambda * mass_ones_[i] +
                   mu * m_w[i] + eps * shell_w[i];
  }
  return r;
}

ResidualNorms BidomainStepper::residual_norms(const State& x, const State& state_k, double t_new) const {
  const std::size_t n = mesh_->num_vertices();
  const Vector r = residual(x, state_k, t_new);
  const Vector data = known_data(state_k, cubic_point(state_k, x), t_new);
  const double scale = std::max(norm2(data), cfg_.linear.absolute_floor);
  Vector elliptic(n);
  for (std::size_t i = 0; i < n; ++i) elliptic[i] = r[i] + r[n + i];
  return {norm2(r) / scale, norm2(elliptic) / scale};
}

Vector BidomainStepper::solve(const SparseMatrix& a, const Vector& b, const SolverOptions& opts,
                              StepStats& stats) const {
  const bool use_cg = cfg_.solver == LinearSolverKind::CG || (cfg_.solver == LinearSolverKind::Auto && symmetric());
  try {
    SolveResult res = use_cg ? cg_solve(a, b, opts) : bicgstab_solve(a, b, opts);
    stats.linear_iterations += res.iterations;
    return std::move(res.x);
  } catch (const SolverError& err) {
    if (a.rows() > kDenseFallbackLimit) throw;
    if (const auto* conv = dynamic_cast<const ConvergenceError*>(&err)) {
      stats.linear_iterations += conv->best().iterations;
    }
    stats.dense_fallback = true;
    return lu_solve(DenseMatrix(a), b);
  }
}

double BidomainStepper::coefficient_change(const State& before, const State& after) const {
  double change = 0.0;
  for (Field f : {Field::Intra, Field::Extra}) {
    const auto& b = f == Field::Intra ? before.ui : before.ue;
    const auto& a = f == Field::Intra ? after.ui : after.ue;
    change = std::max(change, relative_coefficient_change(lagged_coefficients(*mesh_, laws_, f, b),
                                                          lagged_coefficients(*mesh_, laws_, f, a)));
  }
  return change;
}

StepResult BidomainStepper::step(const State& state_k) const {
  const std::size_t n = mesh_->num_vertices();
  const double t_new = state_k.time + cfg_.dt;
  const bool newton = cfg_.nonlinearity == Nonlinearity::Newton;
  const bool picard = cfg_.flux_iteration == FluxIteration::Picard && nonlinear_flux_;
  const bool iterate = newton || picard;
  const std::size_t max_iter = std::max(newton ? cfg_.newton_max_iter : std::size_t{1},
                                        picard ? cfg_.picard_max_iter : std::size_t{1});
  StepStats stats;
  State x = state_k;
  x.time = t_new;
  // Aitken relaxation of the lagged-diffusivity fixed point; it converges
  // only linearly on its own.
  Vector prev_delta;
  double theta = 1.0;

  for (std::size_t it = 0; it < max_iter; ++it) {
    SparseMatrix a;
    Vector b;
    if (constant_) {
      a = *constant_;
      b = known_data(state_k, state_k.transmembrane(), t_new);
    } else {
      BlockSystem sys = build_step_system(state_k, x, t_new);
      a = sys.monolithic();
      b = sys.monolithic_rhs();
    }
    // Solve for the increment so the linear tolerance is relative to the
    // current nonlinear residual; below 1e-3 of the certificate level there
    // is nothing left to gain.
    const Vector xv = flatten(x);
    Vector r = spmv(a, xv);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    SolverOptions opts = cfg_.linear;
    opts.absolute_floor = std::max(opts.absolute_floor, 1e-3 * cfg_.linear.tol * norm2(b));
    const Vector delta = solve(a, r, opts, stats);

    if (picard && !prev_delta.empty()) {
      Vector change = delta;
      axpy(-1.0, prev_delta, change);
      const double denom = dot(change, change);
      theta = denom > 0.0 ? std::clamp(-theta * dot(prev_delta, change) / denom, 0.1, 2.0) : 1.0;
    }
    if (picard) prev_delta = delta;

    State trial = split(xv, n, t_new);
    double step_scale = theta;
    auto apply = [&](double factor) {
      for (std::size_t i = 0; i < n; ++i) {
        trial.ui[i] = x.ui[i] + factor * delta[i];
        trial.ue[i] = x.ue[i] + factor * delta[n + i];
        trial.w[i] = x.w[i] + factor * delta[2 * n + i];
      }
    };
    apply(step_scale);
    if (newton) {
      const double r0 = norm2(residual(x, state_k, t_new));
      for (std::size_t h = 0; h < kMaxHalvings && norm2(residual(trial, state_k, t_new)) > r0; ++h) {
        step_scale *= 0.5;
        apply(step_scale);
      }
    }

    // Convergence is judged on the full update, not on the relaxed or damped one.
    Vector du(n);
    Vector dw(n);
    for (std::size_t i = 0; i < n; ++i) {
      du[i] = delta[i] - delta[n + i];
      dw[i] = delta[2 * n + i];
    }
    const double inc = ip_.norm(du, dw);
    stats.increments.push_back(inc);
    double coef = 0.0;
    if (picard) {
      coef = coefficient_change(x, trial);
      stats.coefficient_changes.push_back(coef);
    }
    x = std::move(trial);
    stats.nonlinear_iterations = it + 1;

    if (!std::isfinite(inc)) throw StepError("non-finite iterate at t = " + std::to_string(t_new), stats);
    const bool small_step = !iterate || (inc <= cfg_.newton_tol && (!picard || coef <= cfg_.picard_tol));
    if (small_step) {
      const ResidualNorms norms = residual_norms(x, state_k, t_new);
      stats.relative_residual = norms.relative;
      stats.elliptic_residual = norms.elliptic;
      // Small increments alone can stop short of what the linear tolerance
      // promises; keep iterating until the residual agrees.
      const double certificate = 10.0 * cfg_.linear.tol;
      if (!iterate || (norms.relative <= certificate && norms.elliptic <= certificate)) {
        return {std::move(x), std::move(stats)};
      }
    }
  }
  throw StepError(std::string(newton ? "Newton" : "Picard") + " iteration did not converge in " +
                      std::to_string(max_iter) + " iterations at t = " + std::to_string(t_new),
                  stats);
}

State initial_state(const TriMesh& mesh, std::span<const double> u0, std::span<const double> w0) {
  const std::size_t n = mesh.num_vertices();
  if (u0.size() != n || w0.size() != n) throw DimensionError("initial data must have one value per vertex");
  State s = State::zeros(n);
  for (Index v : mesh.tissue_nodes()) {
    s.ui[v] = u0[v];
    s.w[v] = w0[v];
  }
  return s;
}

double probe_value(const TriMesh& mesh, const Location& loc, std::span<const double> nodal) {
  const auto& tri = mesh.triangles()[loc.triangle];
  double v = 0.0;
  for (int a = 0; a < 3; ++a) v += loc.weights[a] * nodal[tri.v[a]];
  return v;
}

Trajectory run(const BidomainStepper& stepper, const State& initial, const RunOptions& options) {
  const TriMesh& mesh = stepper.mesh();
  const std::size_t n = mesh.num_vertices();
  if (initial.size() != n || initial.ue.size() != n || initial.w.size() != n) {
    throw DimensionError("run: initial state does not match the mesh");
  }
  if (options.probe_every == 0) throw ValidationError("probe cadence must be positive");
  std::vector<Location> locations;
  for (const Point& p : options.probes) {
    auto loc = mesh.locate(p);
    if (!loc) {
      throw ValidationError("probe (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") lies outside the mesh");
    }
    locations.push_back(*loc);
  }

  Trajectory traj;
  const Vector mass_ones = spmv(stepper.tissue_mass(), Vector(n, 1.0));
  const double t0 = initial.time;
  const double dt = stepper.config().dt;

  auto record = [&](std::size_t k, const State& s) {
    traj.times.push_back(s.time);
    traj.tissue_mean_ue.push_back(dot(mass_ones, s.ue));
    if (options.record_energy) {
      traj.energies.push_back(
          energy_eval(s, mesh, stepper.laws(), stepper.model(), stepper.config().epsilon));
    }
    if (k % options.probe_every == 0 && !locations.empty()) {
      Vector u(n, 0.0);
      for (Index v : mesh.tissue_nodes()) u[v] = s.ui[v] - s.ue[v];
      std::vector<double> pu;
      std::vector<double> pe;
      for (const auto& loc : locations) {
        pu.push_back(probe_value(mesh, loc, u));
        pe.push_back(probe_value(mesh, loc, s.ue));
      }
      traj.probe_times.push_back(s.time);
      traj.probe_u.push_back(std::move(pu));
      traj.probe_ue.push_back(std::move(pe));
    }
    if (options.observer) options.observer(k, s);
  };

  State state = initial;
  record(0, state);
  for (std::size_t k = 1; k <= options.steps; ++k) {
    try {
      StepResult res = stepper.step(state);
      state = std::move(res.state);
      state.time = t0 + static_cast<double>(k) * dt;
      traj.stats.push_back(std::move(res.stats));
    } catch (const SolverError& err) {
      traj.error = err.what();
      break;
    }
    record(k, state);
  }
  traj.final_state = std::move(state);
  return traj;
}

}  // namespace bidomain
