#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bidomain {

using Index = std::size_t;

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

// Tissue triangles discretize the active medium; shell triangles the passive
// conductor surrounding it (may be empty).
enum class Region : std::uint8_t { Tissue = 0, Shell = 1 };

enum class BoundaryTag : std::uint8_t { TissueBoundary = 0, OuterBoundary = 1 };

struct Triangle {
  std::array<Index, 3> v{};
  Region region = Region::Tissue;
};

struct BoundaryEdge {
  Index a = 0;
  Index b = 0;
  BoundaryTag tag = BoundaryTag::OuterBoundary;
};

struct AxisRect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 1.0;
  double y1 = 1.0;

  bool contains(const AxisRect& other) const {
    return x0 <= other.x0 && y0 <= other.y0 && other.x1 <= x1 && other.y1 <= y1;
  }
  double area() const { return (x1 - x0) * (y1 - y0); }

  friend bool operator==(const AxisRect&, const AxisRect&) = default;
};

/// Location of a point inside the mesh: containing triangle and barycentric
/// weights with respect to its three vertices.
struct Location {
  Index triangle = 0;
  std::array<double, 3> weights{};
};

struct MeshViolation {
  std::string invariant;
  Index entity = 0;

  std::string describe() const;
};

/// Conforming triangulation of the enclosure with region tags on triangles.
///
/// The boundary edge list and the tissue node set are derived from the
/// connectivity at construction; the object is immutable afterwards.
/// Construction does not validate: call validate() (or use the generators /
/// load_mesh, which do) before handing a mesh to the assembly routines.
class TriMesh {
public:
  TriMesh() = default;
  TriMesh(std::vector<Point> vertices, std::vector<Triangle> triangles);

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }
  const std::vector<Index>& tissue_nodes() const { return tissue_nodes_; }

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }

  bool is_tissue_node(Index v) const { return tissue_mask_[v] != 0; }
  bool has_shell() const;

  double signed_area(Index t) const;
  double region_area(Region r) const;
  double total_area() const;

  std::optional<Location> locate(Point p, double tol = 1e-12) const;

private:
  std::vector<Point> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<BoundaryEdge> boundary_edges_;
  std::vector<Index> tissue_nodes_;
  std::vector<std::uint8_t> tissue_mask_;
};

double signed_area(const Point& a, const Point& b, const Point& c);

/// Structured polar-ring triangulation of the disk of given radius centered at
/// the origin. All triangles are tissue.
TriMesh generate_disk(double radius, double h);

/// Concentric disks: tissue for r <= inner_radius, shell up to outer_radius.
/// A ring of vertices lies exactly on the interface circle.
TriMesh generate_nested_disk(double inner_radius, double outer_radius, double h);

/// Axis-aligned tensor grid whose lines include the inner rectangle's edges;
/// each cell is split along its diagonal. Cells inside `inner` are tissue.
TriMesh generate_nested_rect(const AxisRect& inner, const AxisRect& outer, double h);

/// Empty iff every TriMesh invariant holds.
std::vector<MeshViolation> validate(const TriMesh& mesh);

struct MeshLoadResult {
  TriMesh mesh;
  std::vector<std::string> warnings;
};

/// Parses the `bdmesh 1` ASCII format. Clockwise triangles are repaired by a
/// vertex swap and reported in `warnings`. Throws ParseError (with line) on
/// malformed input and ValidationError on invariant violations.
MeshLoadResult load_mesh(std::string_view text);

/// Writes the `bdmesh 1` format including the derived boundary section.
std::string write_mesh(const TriMesh& mesh);

}  // namespace bidomain
