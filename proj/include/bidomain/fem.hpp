#pragma once

#include <array>
#include <span>
#include <vector>

#include "bidomain/linalg.hpp"
#include "bidomain/mesh.hpp"
#include "bidomain/physics.hpp"

namespace bidomain {

/// Nodal fields over all enclosure vertices at one time level.
struct State {
  Vector ui;
  Vector ue;
  Vector w;
  double time = 0.0;

  static State zeros(std::size_t n) { return {Vector(n, 0.0), Vector(n, 0.0), Vector(n, 0.0), 0.0}; }

  std::size_t size() const { return ui.size(); }
  /// u = ui - ue, nodewise over all vertices.
  Vector transmembrane() const;
};

enum class RegionFilter { Tissue, Shell, All };

bool accepts(RegionFilter filter, Region region);

/// Area and the (constant) gradients of the three P1 basis functions.
struct ElementGeometry {
  double area = 0.0;
  std::array<Vec2, 3> grad{};
};

ElementGeometry element_geometry(const TriMesh& mesh, Index t);

/// Gradient of the P1 interpolant of `nodal` on triangle t.
Vec2 element_gradient(const TriMesh& mesh, const ElementGeometry& geo, Index t, std::span<const double> nodal);

using LocalMatrix = std::array<std::array<double, 3>, 3>;

LocalMatrix local_mass(double area);
LocalMatrix local_stiffness(const ElementGeometry& geo, const SymTensor2& m);

/// Consistent P1 mass matrix over the filtered triangles.
SparseMatrix assemble_mass(const TriMesh& mesh, RegionFilter filter);

/// Stiffness of a linear tensor law over the filtered triangles. The zero law
/// yields the zero matrix; a p-power law is rejected.
SparseMatrix assemble_stiffness(const TriMesh& mesh, const FluxLaw& law, RegionFilter filter);

/// r_i = integral of q(grad v_h) . grad phi_i over the filtered triangles.
Vector assemble_flux_residual(const TriMesh& mesh, const FluxLaw& law, std::span<const double> nodal,
                              RegionFilter filter);

/// Stiffness with elementwise scalar coefficient frozen at `nodal_previous`.
/// Linear tensor laws fall through to assemble_stiffness.
SparseMatrix assemble_lagged_diffusivity(const TriMesh& mesh, const FluxLaw& law,
                                         std::span<const double> nodal_previous, RegionFilter filter);

/// Per-element lagged coefficients for the given field (0 on triangles whose
/// law is linear or zero); used to monitor Picard convergence.
std::vector<double> lagged_coefficients(const TriMesh& mesh, const Conductivities& laws, Field field,
                                        std::span<const double> nodal);

/// Operator of one potential over the whole enclosure: region-wise stiffness
/// for linear laws, lagged diffusivity at `linearization` for p-power laws.
SparseMatrix assemble_field_operator(const TriMesh& mesh, const Conductivities& laws, Field field,
                                     std::span<const double> linearization);

Vector assemble_field_residual(const TriMesh& mesh, const Conductivities& laws, Field field,
                               std::span<const double> nodal);

/// Tissue nodes in increasing order.
std::vector<Index> tissue_restriction(const TriMesh& mesh);
Vector restrict_to_tissue(const TriMesh& mesh, std::span<const double> full);
Vector extend_by_zero(const TriMesh& mesh, std::span<const double> tissue_values);

/// Mass over the shell triangles; the stepper scales it by epsilon.
SparseMatrix shell_penalty_mass(const TriMesh& mesh);

// Ionic terms over the tissue use the three edge-midpoint rule, which is exact
// for P1 products and makes the vectors below the exact gradients of the
// discrete ionic energy.

struct IonicGradient {
  Vector du;  // integral dF/du(u_h, w_h) phi_j
  Vector dw;  // integral dF/dw(u_h, w_h) phi_j
};

double integrate_ionic_energy(const TriMesh& mesh, const IonicModel& model, std::span<const double> u,
                              std::span<const double> w);

IonicGradient assemble_ionic_gradient(const TriMesh& mesh, const IonicModel& model, std::span<const double> u,
                                      std::span<const double> w);

/// integral G'(u_h) phi_j over the tissue.
Vector assemble_cubic_residual(const TriMesh& mesh, const IonicModel& model, std::span<const double> u);

/// integral G''(u_h) phi_i phi_j over the tissue (Newton Jacobian of the above).
SparseMatrix assemble_cubic_jacobian(const TriMesh& mesh, const IonicModel& model, std::span<const double> u);

}  // namespace bidomain
