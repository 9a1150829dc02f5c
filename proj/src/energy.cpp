#include "bidomain/energy.hpp"

#include <cmath>
#include <stdexcept>

#include "bidomain/errors.hpp"

namespace bidomain {

namespace {

double quadratic_form(const SparseMatrix& m, std::span<const double> a, std::span<const double> b) {
  return dot(a, spmv(m, b));
}

}  // namespace

EnergyReport energy_eval(const State& state, const TriMesh& mesh, const Conductivities& laws,
                         const IonicModel& model, double epsilon) {
  const std::size_t n = mesh.num_vertices();
  if (state.ui.size() != n || state.ue.size() != n || state.w.size() != n) {
    throw DimensionError("energy_eval: state does not match the mesh");
  }
  EnergyReport r;
  for (Index e = 0; e < mesh.num_triangles(); ++e) {
    const Region region = mesh.triangles()[e].region;
    const auto geo = element_geometry(mesh, e);
    if (region == Region::Tissue) {
      r.intra_flux += geo.area * laws.law(Field::Intra, region).eval(element_gradient(mesh, geo, e, state.ui)).Q;
    }
    r.extra_flux += geo.area * laws.law(Field::Extra, region).eval(element_gradient(mesh, geo, e, state.ue)).Q;
  }
  r.ionic = integrate_ionic_energy(mesh, model, state.transmembrane(), state.w);
  r.total = r.intra_flux + r.extra_flux + r.ionic;

  if (epsilon > 0.0) {
    const SparseMatrix shell = assemble_mass(mesh, RegionFilter::Shell);
    const SparseMatrix tissue = assemble_mass(mesh, RegionFilter::Tissue);
    r.penalty = 0.5 * epsilon *
                (quadratic_form(shell, state.ui, state.ui) + quadratic_form(tissue, state.ue, state.ue) +
                 quadratic_form(shell, state.w, state.w));
  }
  return r;
}

TauInnerProduct::TauInnerProduct(SparseMatrix tissue_mass, double tau) : mass_(std::move(tissue_mass)), tau_(tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("TauInnerProduct: tau must be positive");
}

TauInnerProduct::TauInnerProduct(const TriMesh& mesh, double tau)
    : TauInnerProduct(assemble_mass(mesh, RegionFilter::Tissue), tau) {}

double TauInnerProduct::inner(std::span<const double> u, std::span<const double> w, std::span<const double> u2,
                              std::span<const double> w2) const {
  const std::size_t n = mass_.rows();
  if (u.size() != n || w.size() != n || u2.size() != n || w2.size() != n) {
    throw DimensionError("tau inner product: field length does not match the mass matrix");
  }
  return quadratic_form(mass_, u, u2) + tau_ * quadratic_form(mass_, w, w2);
}

double TauInnerProduct::norm(std::span<const double> u, std::span<const double> w) const {
  return std::sqrt(std::max(0.0, inner(u, w, u, w)));
}

double tau_norm(std::span<const double> delta_u, std::span<const double> delta_w, const TauInnerProduct& ip) {
  return ip.norm(delta_u, delta_w);
}

DecayResult decay_monitor(std::span<const double> energies, std::optional<double> tolerance) {
  if (energies.size() < 2) throw std::invalid_argument("decay_monitor: need at least two energies");
  const double tol = tolerance.value_or(1e-10 * (1.0 + std::abs(energies.front())));
  DecayResult r;
  r.max_uptick = energies[1] - energies[0];
  for (std::size_t k = 1; k < energies.size(); ++k) {
    r.max_uptick = std::max(r.max_uptick, energies[k] - energies[k - 1]);
  }
  r.max_uptick = std::max(r.max_uptick, 0.0);
  r.is_monotone = r.max_uptick <= tol;
  return r;
}

DecayResult decay_monitor(std::span<const EnergyReport> reports, std::optional<double> tolerance) {
  std::vector<double> e;
  e.reserve(reports.size());
  for (const auto& r : reports) e.push_back(r.regularized_total());
  return decay_monitor(std::span<const double>(e), tolerance);
}

}  // namespace bidomain
