// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Exit status is nonzero if any criterion fails. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "bidomain/cli_io.hpp"
#include "bidomain/stepper.hpp"

using namespace bidomain;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = BIDOMAIN_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Worst elliptic residual over every accepted step, relative to 10x the
// linear tolerance of its run.
struct EllipticLedger {
  double worst_ratio = 0.0;
  std::size_t steps = 0;

  void add(const StepStats& s, double tol) {
    worst_ratio = std::max(worst_ratio, s.elliptic_residual / (10.0 * tol));
    ++steps;
  }
  void add(const Trajectory& t, double tol) {
    for (const auto& s : t.stats) add(s, tol);
  }
};

EllipticLedger g_elliptic;

double tau_distance(const TauInnerProduct& ip, const State& a, const State& b) {
  const std::size_t n = a.size();
  Vector du(n), dw(n);
  for (std::size_t i = 0; i < n; ++i) {
    du[i] = (a.ui[i] - a.ue[i]) - (b.ui[i] - b.ue[i]);
    dw[i] = a.w[i] - b.w[i];
  }
  return tau_norm(du, dw, ip);
}

State bump(const TriMesh& mesh, double amplitude, Point c, double r) {
  Vector u0(mesh.num_vertices()), w0(mesh.num_vertices(), 0.0);
  for (Index v = 0; v < mesh.num_vertices(); ++v) {
    const double d = std::hypot(mesh.vertices()[v].x - c.x, mesh.vertices()[v].y - c.y);
    u0[v] = amplitude * std::exp(-(d * d) / (r * r));
  }
  return initial_state(mesh, u0, w0);
}

// The reproduction ionic parameters, switched to the gradient coupling.
IonicModel gradient_model() {
  IonicModel m = load_config(kSource / "configs" / "disk_fhn.cfg").ionic;
  m.mode = CouplingMode::PureGradient;
  return m;
}

const Conductivities kDisk{FluxLaw::isotropic(0.638), FluxLaw::isotropic(1.538), std::nullopt};

// ---------------------------------------------------------------------------

Outcome fem_oracles() {
  double worst_local = 0.0;
  const LocalMatrix mass = local_mass(0.5);
  const TriMesh tri({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}, Region::Tissue}});
  const LocalMatrix stiff = local_stiffness(element_geometry(tri, 0), SymTensor2::isotropic(1.0));
  const LocalMatrix stiff_expected{{{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}}};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      worst_local = std::max(worst_local, std::abs(mass[i][j] - (i == j ? 2.0 : 1.0) / 24.0));
      worst_local = std::max(worst_local, std::abs(stiff[i][j] - stiff_expected[i][j]));
    }
  }
  double worst_row = 0.0;
  const TriMesh disk = generate_disk(1.0, 0.1);
  const TriMesh nested = generate_nested_disk(0.8, 1.0, 0.08);
  const Conductivities brain{FluxLaw::diagonal(0.41, 0.47), FluxLaw::diagonal(0.29, 0.61), FluxLaw::isotropic(1.2)};
  for (const auto& [mesh, laws] : {std::pair{&disk, &kDisk}, std::pair{&nested, &brain}}) {
    const Vector zero(mesh->num_vertices(), 0.0);
    for (Field f : {Field::Intra, Field::Extra}) {
      worst_row = std::max(worst_row, norm_inf(assemble_field_operator(*mesh, *laws, f, zero).row_sums()));
    }
  }
  return {worst_local <= 1e-12 && worst_row <= 1e-12,
          "local " + fmt("%.2e", worst_local) + ", row sums " + fmt("%.2e", worst_row)};
}

Outcome gradient_consistency() {
  const IonicModel fhn = gradient_model();
  const TriMesh disk = generate_disk(1.0, 0.2);
  const TriMesh nested = generate_nested_disk(0.6, 1.0, 0.25);
  struct Case {
    const TriMesh* mesh;
    Conductivities laws;
    const char* name;
  };
  const std::vector<Case> cases{
      {&disk, kDisk, "linear"},
      {&nested, {FluxLaw::diagonal(0.41, 0.47), FluxLaw::diagonal(0.29, 0.61), FluxLaw::isotropic(1.2)}, "nested"},
      {&disk, {FluxLaw::p_power(0.6, 1.5), FluxLaw::p_power(1.0, 1.5), std::nullopt}, "p=1.5"},
      {&disk, {FluxLaw::p_power(0.6, 2.0), FluxLaw::p_power(1.0, 2.0), std::nullopt}, "p=2"},
      {&disk, {FluxLaw::p_power(0.6, 4.0), FluxLaw::p_power(1.0, 4.0), std::nullopt}, "p=4"},
  };
  double worst = 0.0;
  std::size_t states = 0;
  std::size_t max_nodes = 0;
  std::uint64_t seed = 100;
  for (const auto& c : cases) {
    max_nodes = std::max(max_nodes, c.mesh->num_vertices());
    worst = std::max(worst, energy_gradient_audit(*c.mesh, c.laws, fhn, 1e-3, 5, seed++));
    states += 5;
  }
  return {worst <= 1e-6 && states >= 20 && max_nodes <= 200,
          fmt("max rel err %.2e", worst) + " over " + std::to_string(states) + " states, <= " +
              std::to_string(max_nodes) + " nodes"};
}

struct GradientRun {
  TriMesh mesh;
  StepConfig cfg;
  IonicModel model;
  double omega = 0.0;
};

GradientRun decay_setup() {
  GradientRun r{generate_disk(1.0, 0.1), StepConfig{}, gradient_model(), 0.0};
  r.omega = semiconvexity_omega(r.model);
  r.cfg.nonlinearity = Nonlinearity::Newton;
  r.cfg.dt = 0.4 / r.omega;
  r.cfg.epsilon = default_epsilon(kDisk);
  r.cfg.linear.tol = 1e-12;
  return r;
}

Outcome energy_decay() {
  const GradientRun r = decay_setup();
  const BidomainStepper stepper(r.mesh, kDisk, r.model, r.cfg);
  RunOptions opts;
  opts.steps = 200;
  const Trajectory t = run(stepper, bump(r.mesh, 1.0, {0.2, 0.1}, 0.35), opts);
  g_elliptic.add(t, r.cfg.linear.tol);
  if (!t.completed()) return {false, "run failed: " + *t.error};
  const DecayResult d = decay_monitor(t.energies);
  return {d.is_monotone && t.stats.size() >= 200,
          std::to_string(t.stats.size()) + " steps, dt*omega " + fmt("%.2f", r.cfg.dt * r.omega) + ", E " +
              fmt("%.4g", t.energies.front().regularized_total()) + " -> " +
              fmt("%.4g", t.energies.back().regularized_total()) + ", max uptick " + fmt("%.2e", d.max_uptick)};
}

Outcome lipschitz() {
  const GradientRun r = decay_setup();
  const BidomainStepper stepper(r.mesh, kDisk, r.model, r.cfg);
  State a = bump(r.mesh, 1.0, {0.2, 0.1}, 0.35);
  State b = a;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Index v : r.mesh.tissue_nodes()) {
    b.ui[v] += g(rng);
    b.w[v] += g(rng);
  }
  const double d0 = tau_distance(stepper.inner_product(), a, b);
  for (Index v : r.mesh.tissue_nodes()) {
    b.ui[v] = a.ui[v] + (b.ui[v] - a.ui[v]) * 1e-3 / d0;
    b.w[v] = a.w[v] + (b.w[v] - a.w[v]) * 1e-3 / d0;
  }
  const double start = tau_distance(stepper.inner_product(), a, b);
  double worst = 0.0;  // largest distance / bound
  for (int k = 1; k <= 200; ++k) {
    const StepResult ra = stepper.step(a);
    const StepResult rb = stepper.step(b);
    g_elliptic.add(ra.stats, r.cfg.linear.tol);
    g_elliptic.add(rb.stats, r.cfg.linear.tol);
    a = ra.state;
    b = rb.state;
    const double bound = std::pow(1.0 - r.cfg.dt * r.omega, -k) * 1e-3 * (1.0 + 1e-6);
    worst = std::max(worst, tau_distance(stepper.inner_product(), a, b) / bound);
  }
  return {worst <= 1.0 && std::abs(start - 1e-3) <= 1e-12,
          "max distance/bound " + fmt("%.3g", worst) + " over 200 steps, final distance " +
              fmt("%.3g", tau_distance(stepper.inner_product(), a, b))};
}

Outcome closed_form_rate() {
  const TriMesh mesh = generate_nested_rect({0, 0, 1, 1}, {0, 0, 1, 1}, 1.0 / 32.0);
  const Conductivities eq{FluxLaw::isotropic(1.0), FluxLaw::isotropic(1.0), std::nullopt};
  IonicModel zero;
  zero.kind = IonicKind::Zero;
  StepConfig cfg;
  cfg.dt = 1e-3;
  cfg.epsilon = default_epsilon(eq);
  const BidomainStepper stepper(mesh, eq, zero, cfg);
  Vector u0(mesh.num_vertices()), w0(mesh.num_vertices(), 0.0);
  for (Index v = 0; v < mesh.num_vertices(); ++v) u0[v] = std::cos(std::numbers::pi * mesh.vertices()[v].x);

  std::vector<double> ts, logs;
  RunOptions opts;
  opts.steps = 500;
  opts.record_energy = false;
  opts.observer = [&](std::size_t, const State& s) {
    const Vector u = s.transmembrane();
    ts.push_back(s.time);
    logs.push_back(std::log(std::sqrt(dot(u, spmv(stepper.tissue_mass(), u)))));
  };
  const Trajectory t = run(stepper, initial_state(mesh, u0, w0), opts);
  g_elliptic.add(t, cfg.linear.tol);
  if (!t.completed()) return {false, "run failed: " + *t.error};
  // Least-squares slope of log ||u|| against t.
  const double n = static_cast<double>(ts.size());
  double st = 0, sl = 0, stt = 0, stl = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sl += logs[i];
    stt += ts[i] * ts[i];
    stl += ts[i] * logs[i];
  }
  const double rate = -(n * stl - st * sl) / (n * stt - st * st);
  const double exact = std::numbers::pi * std::numbers::pi / 2.0;
  const double rel = std::abs(rate - exact) / exact;
  return {rel <= 0.05, "rate " + fmt("%.5f", rate) + " vs " + fmt("%.5f", exact) + " (" + fmt("%.2f%%", 100 * rel) + ")"};
}

Outcome mean_constraint() {
  RunConfig base = load_config(kSource / "configs" / "disk_fhn.cfg");
  base.t_end = 5.0;
  const TriMesh mesh = build_mesh(base);
  const std::vector<double> eps{1e-2, 1e-4, 1e-6};
  std::vector<double> means;
  for (double e : eps) {
    StepConfig cfg = base.step;
    cfg.epsilon = e;
    const BidomainStepper stepper(mesh, base.laws, base.ionic, cfg, base.stimulus);
    RunOptions opts;
    opts.steps = base.steps();
    opts.record_energy = false;
    const Trajectory t = run(stepper, build_initial_state(base, mesh), opts);
    g_elliptic.add(t, cfg.linear.tol);
    if (!t.completed()) return {false, "run failed: " + *t.error};
    double worst = 0.0;
    for (double m : t.tissue_mean_ue) worst = std::max(worst, std::abs(m));
    means.push_back(worst);
  }
  // Log-log regression slope of the recorded means against epsilon.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double x = std::log(eps[i]), y = std::log(std::max(means[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(eps.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const bool slope_ok = std::abs(slope - 1.0) <= 0.2;
  const bool small = means.back() <= 1e-4;
  return {slope_ok && small, "max |mean ue| " + fmt("%.2e", means[0]) + ", " + fmt("%.2e", means[1]) + ", " +
                                 fmt("%.2e", means[2]) + "; slope " + fmt("%.2f", slope) +
                                 (slope_ok ? "" : " (needs 1 +- 0.2)") + (small ? "" : "; bound 1e-4 exceeded")};
}

// Space-clamped point dynamics with the same ionic model and no current.
double isolated_peak(const IonicModel& m, double horizon) {
  double u = 0.5, w = 0.0, peak = u;
  const double h = 1e-4;
  auto f = [&](double uu, double ww) {
    return std::pair{-(m.rate * m.dG(uu) + m.coupling() * ww),
                     (-m.coupling_sign() * m.coupling() * uu - m.effective_lambda() - m.effective_mu() * ww) / m.tau};
  };
  for (double t = 0.0; t < horizon; t += h) {
    const auto [k1u, k1w] = f(u, w);
    const auto [k2u, k2w] = f(u + 0.5 * h * k1u, w + 0.5 * h * k1w);
    const auto [k3u, k3w] = f(u + 0.5 * h * k2u, w + 0.5 * h * k2w);
    const auto [k4u, k4w] = f(u + h * k3u, w + h * k3w);
    u += h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
    w += h / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w);
    peak = std::max(peak, u);
  }
  return peak;
}

Outcome propagation() {
  const RunConfig cfg = load_config(kSource / "configs" / "disk_fhn.cfg");
  const TriMesh mesh = build_mesh(cfg);
  const BidomainStepper stepper(mesh, cfg.laws, cfg.ionic, cfg.step, cfg.stimulus);
  RunOptions opts;
  opts.steps = cfg.steps();
  opts.probes = cfg.probes;
  opts.record_energy = false;
  const Trajectory t = run(stepper, build_initial_state(cfg, mesh), opts);
  g_elliptic.add(t, cfg.step.linear.tol);
  if (!t.completed()) return {false, "run failed: " + *t.error};

  const double iso = isolated_peak(cfg.ionic, cfg.t_end);
  const double threshold = 0.5 * iso;
  const std::size_t np = cfg.probes.size();
  std::vector<std::size_t> order(np);
  std::iota(order.begin(), order.end(), 0);
  const Point c = cfg.stimulus->center;
  auto dist = [&](std::size_t p) { return std::hypot(cfg.probes[p].x - c.x, cfg.probes[p].y - c.y); };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });

  std::vector<double> peak(np, -1e300), activation(np, NAN);
  for (std::size_t k = 0; k < t.probe_times.size(); ++k) {
    for (std::size_t p = 0; p < np; ++p) {
      const double u = t.probe_u[k][p];
      peak[p] = std::max(peak[p], u);
      if (std::isnan(activation[p]) && k > 0 && u >= threshold) {
        const double prev = t.probe_u[k - 1][p];
        activation[p] = t.probe_times[k - 1] + (threshold - prev) / (u - prev) * (t.probe_times[k] - t.probe_times[k - 1]);
      }
    }
  }
  const std::size_t nearest = order.front();
  const double end_value = t.probe_u.back()[nearest];
  const bool upstroke = peak[nearest] >= 0.8 * iso;
  const bool recovers = std::abs(end_value) <= 0.1 * iso;
  bool ordered = true;
  for (std::size_t i = 0; i + 1 < np; ++i) {
    const double a = activation[order[i]], b = activation[order[i + 1]];
    ordered = ordered && !std::isnan(a) && !std::isnan(b) && a < b;
  }
  std::string times;
  for (std::size_t p : order) times += (times.empty() ? "" : " < ") + fmt("%.3f", activation[p]);
  return {upstroke && recovers && ordered, "isolated peak " + fmt("%.3f", iso) + ", nearest probe peak " +
                                               fmt("%.3f", peak[nearest]) + ", end " + fmt("%.1e", end_value) +
                                               ", activation " + times};
}

Outcome p_power_path() {
  const TriMesh mesh = generate_disk(1.0, 0.13);
  const IonicModel model = gradient_model();
  const double omega = semiconvexity_omega(model);
  StepConfig cfg;
  cfg.nonlinearity = Nonlinearity::Newton;
  cfg.flux_iteration = FluxIteration::Picard;
  cfg.dt = 0.4 / omega;
  cfg.linear.tol = 1e-12;
  const State x0 = bump(mesh, 1.0, {0.2, 0.1}, 0.35);

  const Conductivities id{FluxLaw::isotropic(1.0), FluxLaw::isotropic(1.0), std::nullopt};
  const Conductivities p2{FluxLaw::p_power(0.5, 2.0), FluxLaw::p_power(0.5, 2.0), std::nullopt};
  const BidomainStepper lin(mesh, id, model, cfg);
  const BidomainStepper quad(mesh, p2, model, cfg);
  State a = x0, b = x0;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const StepResult ra = lin.step(a), rb = quad.step(b);
    g_elliptic.add(ra.stats, cfg.linear.tol);
    g_elliptic.add(rb.stats, cfg.linear.tol);
    a = ra.state;
    b = rb.state;
    worst = std::max(worst, tau_distance(lin.inner_product(), a, b));
  }

  const Conductivities p4{FluxLaw::p_power(0.5, 4.0), FluxLaw::p_power(1.0, 4.0), std::nullopt};
  const BidomainStepper quartic(mesh, p4, model, cfg);
  RunOptions opts;
  opts.steps = 50;
  const Trajectory t = run(quartic, x0, opts);
  g_elliptic.add(t, cfg.linear.tol);
  std::size_t max_iter = 0;
  for (const auto& s : t.stats) max_iter = std::max(max_iter, s.nonlinear_iterations);
  const bool decays = t.completed() && decay_monitor(t.energies).is_monotone;
  return {worst <= 1e-8 && t.completed() && max_iter <= 25 && decays,
          "p=2 vs Id " + fmt("%.2e", worst) + "; p=4 on " + std::to_string(mesh.num_vertices()) +
              " nodes: max Picard iterations " + std::to_string(max_iter) + (decays ? ", energy decays" : ", energy does not decay") +
              (t.completed() ? "" : ", run failed: " + *t.error)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "bidomain_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = load_config(kSource / "configs" / "disk_fhn.cfg");
  cfg.t_end = 2.0;
  cfg.snapshot_every = 100;
  {
    std::ofstream out(dir / "short.cfg", std::ios::binary);
    out << render_config(cfg);
  }
  std::ostringstream sink;
  bool same = true;
  for (const char* run_dir : {"a", "b"}) {
    if (cli_main({"run", (dir / "short.cfg").string(), "-o", (dir / run_dir).string()}, sink, sink) != kExitOk) {
      return {false, "run failed: " + sink.str()};
    }
  }
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    same = same && slurp(entry.path()) == slurp(dir / "b" / entry.path().filename());
    ++files;
  }
  const TriMesh square({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{{0, 1, 2}, Region::Tissue}, {{0, 2, 3}, Region::Tissue}});
  const bool golden = snapshot_write(State::zeros(4), square) == slurp(kSource / "tests" / "data" / "square_zero.vtk");
  fs::remove_all(dir);
  return {same && golden && files >= 3, std::to_string(files) + " output files " + (same ? "identical" : "DIFFER") +
                                            ", golden snapshot " + (golden ? "matches" : "DIFFERS")};
}

Outcome elliptic_compatibility() {
  return {g_elliptic.steps > 0 && g_elliptic.worst_ratio <= 1.0,
          std::to_string(g_elliptic.steps) + " steps, worst residual / (10 tol) " + fmt("%.2e", g_elliptic.worst_ratio)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const std::vector<Criterion> criteria{
      {1, "FEM oracle suite", 1.0, fem_oracles},
      {2, "gradient consistency", 30.0, gradient_consistency},
      {3, "energy decay", 60.0, energy_decay},
      {4, "Lipschitz bound", 60.0, lipschitz},
      {5, "closed-form decay rate", 60.0, closed_form_rate},
      {6, "mean-zero constraint surrogate", 120.0, mean_constraint},
      {8, "propagation on the disk", 300.0, propagation},
      {9, "p-power flux path", 120.0, p_power_path},
      {10, "determinism and format", 1e300, determinism},
      // Aggregates the runs above, so it goes last.
      {7, "elliptic compatibility", 1e300, elliptic_compatibility},
  };
  std::map<int, std::string> lines;
  bool all = true;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    all = all && pass;
    std::string line = std::string(pass ? "PASS" : "FAIL") + " criterion " + std::to_string(c.id) + " (" + c.name +
                       "): " + o.detail + "; " + fmt("%.2f s", secs);
    if (!in_time) line += " over budget " + fmt("%.0f s", c.budget_seconds);
    lines[c.id] = line;
  }
  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  return all ? 0 : 1;
}
