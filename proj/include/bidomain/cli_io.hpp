#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bidomain/stepper.hpp"

namespace bidomain {

struct MeshSource {
  enum class Kind { Disk, NestedDisk, NestedRect, File };
  Kind kind = Kind::Disk;
  double radius = 1.0;        // disk, nested_disk (outer)
  double inner_radius = 0.5;  // nested_disk
  double h = 0.1;
  AxisRect inner{0.25, 0.25, 0.75, 0.75};  // nested_rect
  AxisRect outer{0.0, 0.0, 1.0, 1.0};
  std::string path;  // file; relative paths resolve against the config directory

  friend bool operator==(const MeshSource&, const MeshSource&) = default;
};

/// Initial u (and w) set to a constant on the tissue nodes inside a region,
/// zero elsewhere.
struct InitialSpec {
  enum class Shape { All, Disk, Annulus };
  double u = 0.0;
  double w = 0.0;
  Shape shape = Shape::All;
  Point center{0.0, 0.0};
  double r0 = 0.0;  // annulus inner radius
  double r1 = 0.0;  // disk radius / annulus outer radius

  bool contains(const Point& p) const;
  friend bool operator==(const InitialSpec&, const InitialSpec&) = default;
};

struct RunConfig {
  MeshSource mesh;
  Conductivities laws;
  IonicModel ionic;
  StepConfig step;
  double t_end = 1.0;
  std::optional<StimulusSpec> stimulus;
  std::vector<Point> probes;
  std::size_t probe_every = 1;
  std::size_t snapshot_every = 0;  // 0: final state only
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  InitialSpec initial;
  std::filesystem::path base_dir = ".";  // not rendered

  std::size_t steps() const;
  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

/// Parses and validates, including the mesh-dependent invariants (probes
/// inside the mesh, shell law present when the mesh has a shell).
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& file);
std::string render_config(const RunConfig& cfg);

TriMesh build_mesh(const RunConfig& cfg);
State build_initial_state(const RunConfig& cfg, const TriMesh& mesh);

/// `t,u@p1,...,ue@p1,...` with one row per recorded probe time.
std::string probe_series_write(const Trajectory& traj, std::size_t num_probes);
/// `t,intra_flux,extra_flux,ionic,total,penalty` per recorded step.
std::string energy_series_write(const Trajectory& traj);
/// Legacy ASCII unstructured grid; `u` is zero on nodes outside the tissue.
std::string snapshot_write(const State& state, const TriMesh& mesh);

/// Largest relative (2-norm) deviation between the assembled residual and
/// central differences of the regularized energy over `samples` random states.
double energy_gradient_audit(const TriMesh& mesh, const Conductivities& laws, const IonicModel& model,
                             double epsilon, std::size_t samples, std::uint64_t seed);

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitSolver = 2;
inline constexpr int kExitUsage = 64;

/// Entry point of the `bidomain` tool; `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bidomain
