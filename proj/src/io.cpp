#include <random>
#include <sstream>

#include "bidomain/cli_io.hpp"
#include "bidomain/errors.hpp"
#include "text_util.hpp"

namespace bidomain {

using text::format_double;

std::string probe_series_write(const Trajectory& traj, std::size_t num_probes) {
  std::string out = "t";
  for (std::size_t p = 1; p <= num_probes; ++p) out += ",u@p" + std::to_string(p);
  for (std::size_t p = 1; p <= num_probes; ++p) out += ",ue@p" + std::to_string(p);
  out += "\n";
  for (std::size_t k = 0; k < traj.probe_times.size(); ++k) {
    if (traj.probe_u[k].size() != num_probes || traj.probe_ue[k].size() != num_probes) {
      throw DimensionError("probe record " + std::to_string(k) + " does not have " + std::to_string(num_probes) +
                           " probes");
    }
    out += format_double(traj.probe_times[k]);
    for (double v : traj.probe_u[k]) out += "," + format_double(v);
    for (double v : traj.probe_ue[k]) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

std::string energy_series_write(const Trajectory& traj) {
  std::string out = "t,intra_flux,extra_flux,ionic,total,penalty\n";
  for (std::size_t k = 0; k < traj.energies.size(); ++k) {
    const auto& e = traj.energies[k];
    out += format_double(traj.times[k]) + "," + format_double(e.intra_flux) + "," + format_double(e.extra_flux) +
           "," + format_double(e.ionic) + "," + format_double(e.total) + "," + format_double(e.penalty) + "\n";
  }
  return out;
}

std::string snapshot_write(const State& state, const TriMesh& mesh) {
  const std::size_t n = mesh.num_vertices();
  const std::size_t t = mesh.num_triangles();
  if (state.ui.size() != n || state.ue.size() != n || state.w.size() != n) {
    throw DimensionError("snapshot: state does not match the mesh");
  }
  std::ostringstream os;
  os << "# vtk DataFile Version 3.0\n";
  os << "bidomain state t=" << format_double(state.time) << "\n";
  os << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << n << " double\n";
  for (const Point& p : mesh.vertices()) os << format_double(p.x) << " " << format_double(p.y) << " 0\n";
  os << "CELLS " << t << " " << 4 * t << "\n";
  for (const auto& tri : mesh.triangles()) os << "3 " << tri.v[0] << " " << tri.v[1] << " " << tri.v[2] << "\n";
  os << "CELL_TYPES " << t << "\n";
  for (std::size_t e = 0; e < t; ++e) os << "5\n";

  os << "POINT_DATA " << n << "\n";
  auto scalars = [&](const char* name, auto value) {
    os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (Index v = 0; v < n; ++v) os << format_double(value(v)) << "\n";
  };
  scalars("ui", [&](Index v) { return state.ui[v]; });
  scalars("ue", [&](Index v) { return state.ue[v]; });
  scalars("w", [&](Index v) { return state.w[v]; });
  scalars("u", [&](Index v) { return mesh.is_tissue_node(v) ? state.ui[v] - state.ue[v] : 0.0; });

  os << "CELL_DATA " << t << "\n";
  os << "SCALARS region int 1\nLOOKUP_TABLE default\n";
  for (const auto& tri : mesh.triangles()) os << static_cast<int>(tri.region) << "\n";
  return os.str();
}

double energy_gradient_audit(const TriMesh& mesh, const Conductivities& laws, const IonicModel& model,
                             double epsilon, std::size_t samples, std::uint64_t seed) {
  IonicModel gradient_model = model;
  gradient_model.mode = CouplingMode::PureGradient;
  StepConfig cfg;
  cfg.dt = 1.0;
  cfg.epsilon = epsilon;
  cfg.nonlinearity = Nonlinearity::Newton;
  cfg.flux_iteration = FluxIteration::Picard;
  const BidomainStepper stepper(mesh, laws, gradient_model, cfg);
  const SparseMatrix& shell = stepper.shell_mass();
  const SparseMatrix& tissue = stepper.tissue_mass();
  auto energy = [&](const State& s) {
    const double penalty =
        0.5 * epsilon * (dot(s.ui, spmv(shell, s.ui)) + dot(s.ue, spmv(tissue, s.ue)) + dot(s.w, spmv(shell, s.w)));
    return energy_eval(s, mesh, laws, gradient_model).total + penalty;
  };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  const std::size_t n = mesh.num_vertices();
  double worst = 0.0;
  for (std::size_t sample = 0; sample < samples; ++sample) {
    State s = State::zeros(n);
    for (auto* field : {&s.ui, &s.ue, &s.w}) {
      for (double& v : *field) v = uniform(rng);
    }
    const Vector analytic = stepper.residual(s, s, 0.0);
    Vector fd(3 * n);
    for (std::size_t i = 0; i < 3 * n; ++i) {
      Vector& field = i < n ? s.ui : (i < 2 * n ? s.ue : s.w);
      double& x = field[i % n];
      const double x0 = x;
      const double h = 1e-6 * (1.0 + std::abs(x0));
      x = x0 + h;
      const double ep = energy(s);
      x = x0 - h;
      const double em = energy(s);
      x = x0;
      fd[i] = (ep - em) / (2.0 * h);
    }
    Vector diff(3 * n);
    for (std::size_t i = 0; i < 3 * n; ++i) diff[i] = fd[i] - analytic[i];
    worst = std::max(worst, norm2(diff) / std::max(norm2(analytic), 1e-300));
  }
  return worst;
}

}  // namespace bidomain
