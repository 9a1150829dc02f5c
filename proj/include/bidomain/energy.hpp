#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bidomain/fem.hpp"

namespace bidomain {

/// The three integrals of the bidomain energy. `penalty` holds the
/// epsilon-regularization energy when requested; it is not part of `total`.
struct EnergyReport {
  double intra_flux = 0.0;
  double extra_flux = 0.0;
  double ionic = 0.0;
  double total = 0.0;
  double penalty = 0.0;

  /// Energy of the regularized discrete problem the stepper minimizes.
  double regularized_total() const { return total + penalty; }
};

/// Flux integrals use the elementwise-constant gradients; the ionic integral
/// uses the edge-midpoint rule. With epsilon > 0 the report also carries
/// eps/2 (|ui|^2_shell + |ue|^2_tissue + |w|^2_shell).
EnergyReport energy_eval(const State& state, const TriMesh& mesh, const Conductivities& laws,
                         const IonicModel& model, double epsilon = 0.0);

/// <(u, w), (u', w')>_tau = u' M u + tau w' M w with the tissue mass matrix M.
class TauInnerProduct {
public:
  TauInnerProduct(SparseMatrix tissue_mass, double tau);
  TauInnerProduct(const TriMesh& mesh, double tau);

  double inner(std::span<const double> u, std::span<const double> w, std::span<const double> u2,
               std::span<const double> w2) const;
  double norm(std::span<const double> u, std::span<const double> w) const;

  const SparseMatrix& mass() const { return mass_; }
  double tau() const { return tau_; }

private:
  SparseMatrix mass_;
  double tau_;
};

double tau_norm(std::span<const double> delta_u, std::span<const double> delta_w, const TauInnerProduct& ip);

struct DecayResult {
  bool is_monotone = true;
  double max_uptick = 0.0;
};

/// Largest consecutive increase of the sequence. Monotone iff that increase
/// is at most `tolerance`, which defaults to 1e-10 (1 + |E_0|).
DecayResult decay_monitor(std::span<const double> energies, std::optional<double> tolerance = std::nullopt);

/// Applies decay_monitor to the regularized totals.
DecayResult decay_monitor(std::span<const EnergyReport> reports, std::optional<double> tolerance = std::nullopt);

}  // namespace bidomain
