#include "bidomain/fem.hpp"

#include <cmath>
#include <string>

#include "bidomain/errors.hpp"

namespace bidomain {

namespace {

void check_nodal(const TriMesh& mesh, std::span<const double> v, const char* what) {
  if (v.size() != mesh.num_vertices()) {
    throw DimensionError(std::string(what) + ": nodal vector has length " + std::to_string(v.size()) +
                         ", mesh has " + std::to_string(mesh.num_vertices()) + " vertices");
  }
}

void scatter(std::vector<Triplet>& out, const Triangle& tri, const LocalMatrix& local) {
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) out.push_back({tri.v[a], tri.v[b], local[a][b]});
  }
}

// Edge midpoints as (a, b) vertex-slot pairs; the third basis function
// vanishes there and the other two equal 1/2.
constexpr std::array<std::array<int, 2>, 3> kMidpoints{{{0, 1}, {1, 2}, {2, 0}}};

}  // namespace

Vector State::transmembrane() const {
  Vector u(ui.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = ui[i] - ue[i];
  return u;
}

bool accepts(RegionFilter filter, Region region) {
  switch (filter) {
    case RegionFilter::Tissue:
      return region == Region::Tissue;
    case RegionFilter::Shell:
      return region == Region::Shell;
    case RegionFilter::All:
      return true;
  }
  return false;
}

ElementGeometry element_geometry(const TriMesh& mesh, Index t) {
  const auto& tri = mesh.triangles()[t];
  const Point& p0 = mesh.vertices()[tri.v[0]];
  const Point& p1 = mesh.vertices()[tri.v[1]];
  const Point& p2 = mesh.vertices()[tri.v[2]];
  const double two_area = (p1.x - p0.x) * (p2.y - p0.y) - (p1.y - p0.y) * (p2.x - p0.x);
  ElementGeometry g;
  g.area = 0.5 * two_area;
  g.grad[0] = {(p1.y - p2.y) / two_area, (p2.x - p1.x) / two_area};
  g.grad[1] = {(p2.y - p0.y) / two_area, (p0.x - p2.x) / two_area};
  g.grad[2] = {(p0.y - p1.y) / two_area, (p1.x - p0.x) / two_area};
  return g;
}

Vec2 element_gradient(const TriMesh& mesh, const ElementGeometry& geo, Index t, std::span<const double> nodal) {
  const auto& tri = mesh.triangles()[t];
  Vec2 g;
  for (int a = 0; a < 3; ++a) {
    g.x += nodal[tri.v[a]] * geo.grad[a].x;
    g.y += nodal[tri.v[a]] * geo.grad[a].y;
  }
  return g;
}

LocalMatrix local_mass(double area) {
  const double d = area / 6.0;
  const double o = area / 12.0;
  return {{{d, o, o}, {o, d, o}, {o, o, d}}};
}

LocalMatrix local_stiffness(const ElementGeometry& geo, const SymTensor2& m) {
  LocalMatrix k{};
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      const Vec2& ga = geo.grad[a];
      const Vec2& gb = geo.grad[b];
      const double v = geo.area * (m.xx * ga.x * gb.x + m.xy * (ga.x * gb.y + ga.y * gb.x) + m.yy * ga.y * gb.y);
      k[a][b] = v;
      k[b][a] = v;
    }
  }
  return k;
}

SparseMatrix assemble_mass(const TriMesh& mesh, RegionFilter filter) {
  std::vector<Triplet> t;
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    if (!accepts(filter, tri.region)) continue;
    scatter(t, tri, local_mass(mesh.signed_area(e)));
  }
  const std::size_t n = mesh.num_vertices();
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

SparseMatrix assemble_stiffness(const TriMesh& mesh, const FluxLaw& law, RegionFilter filter) {
  if (law.as_p_power() != nullptr) {
    throw ValidationError("stiffness assembly needs a linear tensor law, got " + law.describe());
  }
  const std::size_t n = mesh.num_vertices();
  const auto* lin = law.as_linear();
  if (lin == nullptr) return SparseMatrix(n, n);
  std::vector<Triplet> t;
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    if (!accepts(filter, tri.region)) continue;
    scatter(t, tri, local_stiffness(element_geometry(mesh, e), lin->m));
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

Vector assemble_flux_residual(const TriMesh& mesh, const FluxLaw& law, std::span<const double> nodal,
                              RegionFilter filter) {
  check_nodal(mesh, nodal, "assemble_flux_residual");
  Vector r(mesh.num_vertices(), 0.0);
  if (law.is_zero()) return r;
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    if (!accepts(filter, tri.region)) continue;
    const auto geo = element_geometry(mesh, e);
    const Vec2 q = law.eval(element_gradient(mesh, geo, e, nodal)).q;
    for (int a = 0; a < 3; ++a) r[tri.v[a]] += geo.area * dot(q, geo.grad[a]);
  }
  return r;
}

SparseMatrix assemble_lagged_diffusivity(const TriMesh& mesh, const FluxLaw& law,
                                         std::span<const double> nodal_previous, RegionFilter filter) {
  if (law.as_p_power() == nullptr) return assemble_stiffness(mesh, law, filter);
  check_nodal(mesh, nodal_previous, "assemble_lagged_diffusivity");
  std::vector<Triplet> t;
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    if (!accepts(filter, tri.region)) continue;
    const auto geo = element_geometry(mesh, e);
    const double c = law.diffusivity(element_gradient(mesh, geo, e, nodal_previous));
    if (!std::isfinite(c)) {
      throw SolverError("lagged diffusivity is unbounded on triangle " + std::to_string(e) +
                        " (zero gradient with p < 2 and delta = 0)");
    }
    scatter(t, tri, local_stiffness(geo, SymTensor2::isotropic(c)));
  }
  const std::size_t n = mesh.num_vertices();
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

std::vector<double> lagged_coefficients(const TriMesh& mesh, const Conductivities& laws, Field field,
                                        std::span<const double> nodal) {
  check_nodal(mesh, nodal, "lagged_coefficients");
  std::vector<double> c(mesh.num_triangles(), 0.0);
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const FluxLaw& law = laws.law(field, mesh.triangles()[e].region);
    if (law.as_p_power() == nullptr) continue;
    const auto geo = element_geometry(mesh, e);
    c[e] = law.diffusivity(element_gradient(mesh, geo, e, nodal));
  }
  return c;
}

SparseMatrix assemble_field_operator(const TriMesh& mesh, const Conductivities& laws, Field field,
                                     std::span<const double> linearization) {
  check_nodal(mesh, linearization, "assemble_field_operator");
  std::vector<Triplet> t;
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    const FluxLaw& law = laws.law(field, tri.region);
    if (law.is_zero()) continue;
    const auto geo = element_geometry(mesh, e);
    if (const auto* lin = law.as_linear()) {
      scatter(t, tri, local_stiffness(geo, lin->m));
    } else {
      const double c = law.diffusivity(element_gradient(mesh, geo, e, linearization));
      if (!std::isfinite(c)) throw SolverError("lagged diffusivity is unbounded on triangle " + std::to_string(e));
      scatter(t, tri, local_stiffness(geo, SymTensor2::isotropic(c)));
    }
  }
  const std::size_t n = mesh.num_vertices();
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

Vector assemble_field_residual(const TriMesh& mesh, const Conductivities& laws, Field field,
                               std::span<const double> nodal) {
  check_nodal(mesh, nodal, "assemble_field_residual");
  Vector r(mesh.num_vertices(), 0.0);
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    const FluxLaw& law = laws.law(field, tri.region);
    if (law.is_zero()) continue;
    const auto geo = element_geometry(mesh, e);
    const Vec2 q = law.eval(element_gradient(mesh, geo, e, nodal)).q;
    for (int a = 0; a < 3; ++a) r[tri.v[a]] += geo.area * dot(q, geo.grad[a]);
  }
  return r;
}

std::vector<Index> tissue_restriction(const TriMesh& mesh) { return mesh.tissue_nodes(); }

Vector restrict_to_tissue(const TriMesh& mesh, std::span<const double> full) {
  check_nodal(mesh, full, "restrict_to_tissue");
  Vector out;
  out.reserve(mesh.tissue_nodes().size());
  for (Index v : mesh.tissue_nodes()) out.push_back(full[v]);
  return out;
}

Vector extend_by_zero(const TriMesh& mesh, std::span<const double> tissue_values) {
  const auto& nodes = mesh.tissue_nodes();
  if (tissue_values.size() != nodes.size()) {
    throw DimensionError("extend_by_zero: expected " + std::to_string(nodes.size()) + " tissue values");
  }
  Vector out(mesh.num_vertices(), 0.0);
  for (std::size_t k = 0; k < nodes.size(); ++k) out[nodes[k]] = tissue_values[k];
  return out;
}

SparseMatrix shell_penalty_mass(const TriMesh& mesh) { return assemble_mass(mesh, RegionFilter::Shell); }

double integrate_ionic_energy(const TriMesh& mesh, const IonicModel& model, std::span<const double> u,
                              std::span<const double> w) {
  check_nodal(mesh, u, "integrate_ionic_energy");
  check_nodal(mesh, w, "integrate_ionic_energy");
  double total = 0.0;
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    if (tri.region != Region::Tissue) continue;
    const double weight = mesh.signed_area(e) / 3.0;
    for (const auto& [a, b] : kMidpoints) {
      const double um = 0.5 * (u[tri.v[a]] + u[tri.v[b]]);
      const double wm = 0.5 * (w[tri.v[a]] + w[tri.v[b]]);
      total += weight * model.eval(um, wm).F;
    }
  }
  return total;
}

IonicGradient assemble_ionic_gradient(const TriMesh& mesh, const IonicModel& model, std::span<const double> u,
                                      std::span<const double> w) {
  check_nodal(mesh, u, "assemble_ionic_gradient");
  check_nodal(mesh, w, "assemble_ionic_gradient");
  IonicGradient g{Vector(mesh.num_vertices(), 0.0), Vector(mesh.num_vertices(), 0.0)};
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    if (tri.region != Region::Tissue) continue;
    const double weight = mesh.signed_area(e) / 3.0;
    for (const auto& [a, b] : kMidpoints) {
      const double um = 0.5 * (u[tri.v[a]] + u[tri.v[b]]);
      const double wm = 0.5 * (w[tri.v[a]] + w[tri.v[b]]);
      const IonicEval f = model.eval(um, wm);
      for (int k : {a, b}) {
        g.du[tri.v[k]] += 0.5 * weight * f.dF_du;
        g.dw[tri.v[k]] += 0.5 * weight * f.dF_dw;
      }
    }
  }
  return g;
}

Vector assemble_cubic_residual(const TriMesh& mesh, const IonicModel& model, std::span<const double> u) {
  check_nodal(mesh, u, "assemble_cubic_residual");
  Vector r(mesh.num_vertices(), 0.0);
  if (model.kind != IonicKind::FitzHughNagumo) return r;
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    if (tri.region != Region::Tissue) continue;
    const double weight = mesh.signed_area(e) / 3.0;
    for (const auto& [a, b] : kMidpoints) {
      const double g = model.dG(0.5 * (u[tri.v[a]] + u[tri.v[b]]));
      r[tri.v[a]] += 0.5 * weight * g;
      r[tri.v[b]] += 0.5 * weight * g;
    }
  }
  return r;
}

SparseMatrix assemble_cubic_jacobian(const TriMesh& mesh, const IonicModel& model, std::span<const double> u) {
  check_nodal(mesh, u, "assemble_cubic_jacobian");
  const std::size_t n = mesh.num_vertices();
  if (model.kind != IonicKind::FitzHughNagumo) return SparseMatrix(n, n);
  std::vector<Triplet> t;
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles()[e];
    if (tri.region != Region::Tissue) continue;
    const double weight = mesh.signed_area(e) / 3.0;
    for (const auto& [a, b] : kMidpoints) {
      const double c = 0.25 * weight * model.d2G(0.5 * (u[tri.v[a]] + u[tri.v[b]]));
      t.push_back({tri.v[a], tri.v[a], c});
      t.push_back({tri.v[a], tri.v[b], c});
      t.push_back({tri.v[b], tri.v[a], c});
      t.push_back({tri.v[b], tri.v[b], c});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

}  // namespace bidomain
