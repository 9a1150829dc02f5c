#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "bidomain/cli_io.hpp"
#include "bidomain/errors.hpp"
#include "text_util.hpp"

namespace bidomain {

namespace {

namespace fs = std::filesystem;
using text::format_double;

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

int mesh_command(const std::string& input, bool check, const std::string& output, std::ostream& out) {
  TriMesh mesh;
  if (check) {
    std::ifstream in(input, std::ios::binary);
    if (!in) throw IoError("mesh file not found: " + input);
    std::ostringstream ss;
    ss << in.rdbuf();
    auto loaded = load_mesh(ss.str());
    for (const auto& w : loaded.warnings) out << "warning: " << w << "\n";
    mesh = std::move(loaded.mesh);
  } else {
    mesh = build_mesh(load_config(input));
    const auto violations = validate(mesh);
    if (!violations.empty()) {
      for (const auto& v : violations) out << "violation: " << v.describe() << "\n";
      return kExitValidation;
    }
    if (output.empty()) {
      out << write_mesh(mesh);
      return kExitOk;
    }
    write_file(output, write_mesh(mesh));
  }
  out << "mesh: " << mesh.num_vertices() << " vertices, " << mesh.num_triangles() << " triangles, "
      << mesh.tissue_nodes().size() << " tissue nodes, tissue area " << format_double(mesh.region_area(Region::Tissue))
      << ", shell area " << format_double(mesh.region_area(Region::Shell)) << "\n";
  return kExitOk;
}

std::string snapshot_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "snap_%06zu.vtk", step);
  return buf;
}

int run_command(const std::string& config_path, const std::string& output_override, std::ostream& out,
                std::ostream& err) {
  const RunConfig cfg = load_config(config_path);
  const TriMesh mesh = build_mesh(cfg);
  const BidomainStepper stepper(mesh, cfg.laws, cfg.ionic, cfg.step, cfg.stimulus);
  const fs::path dir = output_override.empty() ? fs::path(cfg.output_dir) : fs::path(output_override);
  fs::create_directories(dir);

  const std::size_t steps = cfg.steps();
  RunOptions options;
  options.steps = steps;
  options.probes = cfg.probes;
  options.probe_every = cfg.probe_every;
  options.observer = [&](std::size_t k, const State& s) {
    const bool due = cfg.snapshot_every == 0 ? k == steps : k % cfg.snapshot_every == 0;
    if (due) write_file(dir / snapshot_name(k), snapshot_write(s, mesh));
  };
  const Trajectory traj = run(stepper, build_initial_state(cfg, mesh), options);
  write_file(dir / "probes.csv", probe_series_write(traj, cfg.probes.size()));
  write_file(dir / "energy.csv", energy_series_write(traj));

  double worst_elliptic = 0.0;
  for (const auto& s : traj.stats) worst_elliptic = std::max(worst_elliptic, s.elliptic_residual);
  out << "steps: " << traj.stats.size() << " of " << steps << "\n";
  out << "max elliptic residual: " << format_double(worst_elliptic) << "\n";
  out << "output: " << dir.string() << "\n";
  if (traj.error) {
    // Snapshots for the steps taken are already on disk.
    err << "solver failure: " << *traj.error << "\n";
    return kExitSolver;
  }
  return kExitOk;
}

struct Check {
  std::string name;
  bool ok = true;
  std::string detail;
};

int validate_command(const std::string& config_path, std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  const TriMesh mesh = build_mesh(cfg);
  std::vector<Check> checks;
  checks.push_back({"config parses and round-trips", parse_config(render_config(cfg), cfg.base_dir) == cfg, ""});

  const auto violations = validate(mesh);
  checks.push_back({"mesh invariants", violations.empty(),
                    violations.empty() ? "" : violations.front().describe()});
  checks.push_back({"tissue is non-empty", !mesh.tissue_nodes().empty(), ""});

  const BidomainStepper stepper(mesh, cfg.laws, cfg.ionic, cfg.step, cfg.stimulus);
  const double tissue_area = mesh.region_area(Region::Tissue);
  double mass_total = 0.0;
  for (double v : stepper.tissue_mass().values()) mass_total += v;
  checks.push_back({"tissue mass sums to tissue area", std::abs(mass_total - tissue_area) <= 1e-12 * tissue_area,
                    format_double(mass_total) + " vs " + format_double(tissue_area)});

  const State zero = State::zeros(mesh.num_vertices());
  for (Field f : {Field::Intra, Field::Extra}) {
    const SparseMatrix k = assemble_field_operator(mesh, cfg.laws, f, f == Field::Intra ? zero.ui : zero.ue);
    const double worst = norm_inf(k.row_sums());
    const double scale = std::max(norm_inf(k.values()), 1e-300);
    checks.push_back({std::string(f == Field::Intra ? "intra" : "extra") + " operator annihilates constants",
                      worst <= 1e-12 * scale, "max row sum " + format_double(worst)});
  }

  const State initial = build_initial_state(cfg, mesh);
  const SparseMatrix a = stepper.build_step_system(initial, cfg.step.dt).monolithic();
  if (stepper.symmetric()) {
    const double asym = a.max_asymmetry();
    checks.push_back({"step matrix symmetric", asym <= 1e-12 * std::max(norm_inf(a.values()), 1e-300),
                      "max asymmetry " + format_double(asym)});
  }
  const EnergyReport e0 = energy_eval(initial, mesh, cfg.laws, cfg.ionic, cfg.step.epsilon);
  checks.push_back({"initial energy finite", std::isfinite(e0.regularized_total()), format_double(e0.total)});

  bool all_ok = true;
  for (const auto& c : checks) {
    out << (c.ok ? "ok   " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << " (" << c.detail << ")";
    out << "\n";
    all_ok = all_ok && c.ok;
  }
  const double omega = semiconvexity_omega(cfg.ionic);
  out << "note dt*omega = " << format_double(cfg.step.dt * omega)
      << (cfg.step.dt * omega < 1.0 ? "" : " (>= 1: implicit steps may be non-unique)") << "\n";
  return all_ok ? kExitOk : kExitValidation;
}

int energy_check_command(const std::string& config_path, std::size_t samples, std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  const TriMesh mesh = build_mesh(cfg);
  const double rel = energy_gradient_audit(mesh, cfg.laws, cfg.ionic, cfg.step.epsilon, samples, cfg.seed);
  out << "max relative gradient error: " << format_double(rel) << "\n";
  return rel <= 1e-6 ? kExitOk : kExitValidation;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bidomain simulator"};
  app.name("bidomain");
  app.require_subcommand(1);

  std::string mesh_input;
  std::string mesh_output;
  bool mesh_check = false;
  auto* mesh_cmd = app.add_subcommand("mesh", "Generate the mesh of a config, or check a mesh file");
  mesh_cmd->add_option("input", mesh_input, "Config file (or mesh file with --check)")->required();
  mesh_cmd->add_option("-o,--output", mesh_output, "Write the mesh here instead of stdout");
  mesh_cmd->add_flag("--check", mesh_check, "Treat input as a mesh file and validate it");

  std::string run_config;
  std::string run_output;
  auto* run_cmd = app.add_subcommand("run", "Time-step a config and write probes, energy and snapshots");
  run_cmd->add_option("config", run_config, "Config file")->required();
  run_cmd->add_option("-o,--output", run_output, "Output directory (overrides the config)");

  std::string validate_config;
  auto* validate_cmd = app.add_subcommand("validate", "Check a config and its discrete operators");
  validate_cmd->add_option("config", validate_config, "Config file")->required();

  std::string check_config;
  std::size_t samples = 1;
  auto* energy_cmd =
      app.add_subcommand("energy-check", "Compare the assembled residual with finite differences of the energy");
  energy_cmd->add_option("config", check_config, "Config file")->required();
  energy_cmd->add_option("--samples", samples, "Number of random states")->check(CLI::PositiveNumber);

  std::vector<std::string> argv_store{"bidomain"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*mesh_cmd) return mesh_command(mesh_input, mesh_check, mesh_output, out);
    if (*run_cmd) return run_command(run_config, run_output, out, err);
    if (*validate_cmd) return validate_command(validate_config, out);
    if (*energy_cmd) return energy_check_command(check_config, samples, out);
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace bidomain
