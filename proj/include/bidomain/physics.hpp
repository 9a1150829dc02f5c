#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>

#include "bidomain/mesh.hpp"

namespace bidomain {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }

/// Symmetric 2x2 tensor [[xx, xy], [xy, yy]].
struct SymTensor2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  static SymTensor2 isotropic(double c) { return {c, 0.0, c}; }
  static SymTensor2 diagonal(double a, double b) { return {a, 0.0, b}; }

  Vec2 apply(const Vec2& v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }
  std::array<double, 2> eigenvalues() const;  // ascending

  friend bool operator==(const SymTensor2&, const SymTensor2&) = default;
};

/// Q(y) = 1/2 y.M y, q(y) = M y.
struct LinearTensor {
  SymTensor2 m;
  friend bool operator==(const LinearTensor&, const LinearTensor&) = default;
};

/// Q(y) = alpha (|y|^2 + delta)^(p/2) - alpha delta^(p/2).
struct PPower {
  double alpha = 1.0;
  double p = 2.0;
  double delta = 0.0;
  friend bool operator==(const PPower&, const PPower&) = default;
};

/// Zero extension of the intracellular law outside the tissue.
struct ZeroFlux {
  friend bool operator==(const ZeroFlux&, const ZeroFlux&) = default;
};

struct FluxEval {
  double Q = 0.0;
  Vec2 q;
};

/// Gradient flux pair (Q, q = grad_y Q) with Q(0) = 0.
class FluxLaw {
public:
  using Variant = std::variant<LinearTensor, PPower, ZeroFlux>;

  FluxLaw() : law_(ZeroFlux{}) {}

  /// Throws ValidationError unless the tensor is symmetric positive definite.
  static FluxLaw linear(const SymTensor2& m);
  static FluxLaw isotropic(double c) { return linear(SymTensor2::isotropic(c)); }
  static FluxLaw diagonal(double a, double b) { return linear(SymTensor2::diagonal(a, b)); }
  /// delta defaults to 1e-8 for p < 2 and 0 otherwise.
  static FluxLaw p_power(double alpha, double p, std::optional<double> delta = std::nullopt);
  static FluxLaw zero() { return FluxLaw(); }

  const Variant& variant() const { return law_; }
  bool is_linear() const { return !std::holds_alternative<PPower>(law_); }
  bool is_zero() const { return std::holds_alternative<ZeroFlux>(law_); }
  const LinearTensor* as_linear() const { return std::get_if<LinearTensor>(&law_); }
  const PPower* as_p_power() const { return std::get_if<PPower>(&law_); }

  FluxEval eval(const Vec2& y) const;

  /// Scalar s with q(y) = s(y) * y for PPower laws (the lagged diffusivity).
  double diffusivity(const Vec2& y) const;

  /// Largest conductivity eigenvalue (LinearTensor), alpha*p (PPower), 0 (zero).
  double scale() const;

  std::string describe() const;

  friend bool operator==(const FluxLaw&, const FluxLaw&) = default;

private:
  explicit FluxLaw(Variant v) : law_(std::move(v)) {}
  Variant law_;
};

/// Which potential a flux law acts on.
enum class Field { Intra, Extra };

/// Intracellular law (tissue only) and extracellular laws per region.
struct Conductivities {
  FluxLaw intra;
  FluxLaw extra_tissue;
  std::optional<FluxLaw> extra_shell;

  /// The law acting on `field` in `region`. The intracellular law is
  /// zero-extended to the shell. Throws ValidationError when the
  /// extracellular shell law is required but unset.
  const FluxLaw& law(Field field, Region region) const;

  double max_scale() const;

  friend bool operator==(const Conductivities&, const Conductivities&) = default;
};

FluxEval flux_eval(const Conductivities& laws, Field field, Region region, const Vec2& y);

enum class IonicKind {
  FitzHughNagumo,  // F = G(u) + u w + lambda w + mu/2 w^2
  NoCubic,         // G dropped: convex test model
  Zero,            // F = 0
};

/// Sign of u in the recovery equation: +1 keeps the gradient structure,
/// -1 reproduces the FitzHugh-Nagumo recovery law.
enum class CouplingMode { PureGradient, FitzHughNagumo };

struct IonicEval {
  double F = 0.0;
  double dF_du = 0.0;
  double dF_dw = 0.0;
};

struct IonicModel {
  double a = 0.1;
  double lambda = 0.0;
  double mu = 0.5;
  double tau = 1.0;
  double rate = 1.0;  // multiplies the whole ionic function
  IonicKind kind = IonicKind::FitzHughNagumo;
  CouplingMode mode = CouplingMode::PureGradient;

  /// Throws ValidationError for a outside [0, 1], tau <= 0 or rate <= 0.
  void check() const;

  double G(double u) const;
  double dG(double u) const;
  double d2G(double u) const;

  IonicEval eval(double u, double w) const;

  bool has_coupling() const { return kind != IonicKind::Zero; }
  double coupling_sign() const { return mode == CouplingMode::PureGradient ? 1.0 : -1.0; }
  // Coefficients of u w, w and w^2/2 in F, rate included.
  double coupling() const { return has_coupling() ? rate : 0.0; }
  double effective_lambda() const { return has_coupling() ? rate * lambda : 0.0; }
  double effective_mu() const { return has_coupling() ? rate * mu : 0.0; }

  friend bool operator==(const IonicModel&, const IonicModel&) = default;
};

inline IonicEval ionic_eval(const IonicModel& m, double u, double w) { return m.eval(u, w); }

/// Smallest omega >= 0 with Hess F + omega Id positive semidefinite everywhere.
double semiconvexity_omega(const IonicModel& model);

}  // namespace bidomain
