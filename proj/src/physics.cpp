#include "bidomain/physics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bidomain/errors.hpp"

namespace bidomain {

std::array<double, 2> SymTensor2::eigenvalues() const {
  const double mean = 0.5 * (xx + yy);
  const double r = std::hypot(0.5 * (xx - yy), xy);
  return {mean - r, mean + r};
}

FluxLaw FluxLaw::linear(const SymTensor2& m) {
  const auto ev = m.eigenvalues();
  if (!(ev[0] > 0.0) || !std::isfinite(ev[1])) {
    throw ValidationError("conductivity tensor must be symmetric positive definite (smallest eigenvalue " +
                          std::to_string(ev[0]) + ")");
  }
  return FluxLaw(LinearTensor{m});
}

FluxLaw FluxLaw::p_power(double alpha, double p, std::optional<double> delta) {
  if (!(alpha > 0.0)) throw ValidationError("p-power law: alpha must be positive");
  if (!(p > 1.0) || !std::isfinite(p)) throw ValidationError("p-power law: exponent must lie in (1, inf)");
  const double d = delta.value_or(p < 2.0 ? 1e-8 : 0.0);
  if (!(d >= 0.0)) throw ValidationError("p-power law: delta must be non-negative");
  return FluxLaw(PPower{alpha, p, d});
}

FluxEval FluxLaw::eval(const Vec2& y) const {
  if (const auto* lin = as_linear()) {
    const Vec2 q = lin->m.apply(y);
    return {0.5 * dot(y, q), q};
  }
  if (const auto* pp = as_p_power()) {
    const double s = dot(y, y) + pp->delta;
    const double Q = pp->alpha * std::pow(s, 0.5 * pp->p) - pp->alpha * std::pow(pp->delta, 0.5 * pp->p);
    const double c = diffusivity(y);
    return {Q, {c * y.x, c * y.y}};
  }
  return {};
}

double FluxLaw::diffusivity(const Vec2& y) const {
  const auto* pp = as_p_power();
  if (pp == nullptr) return 0.0;
  const double s = dot(y, y) + pp->delta;
  if (s == 0.0) return pp->p > 2.0 ? 0.0 : (pp->p == 2.0 ? 2.0 * pp->alpha : HUGE_VAL);
  return pp->alpha * pp->p * std::pow(s, 0.5 * (pp->p - 2.0));
}

double FluxLaw::scale() const {
  if (const auto* lin = as_linear()) return lin->m.eigenvalues()[1];
  if (const auto* pp = as_p_power()) return pp->alpha * pp->p;
  return 0.0;
}

std::string FluxLaw::describe() const {
  std::ostringstream os;
  if (const auto* lin = as_linear()) {
    os << "tensor(" << lin->m.xx << ", " << lin->m.xy << ", " << lin->m.yy << ")";
  } else if (const auto* pp = as_p_power()) {
    os << "ppower(" << pp->alpha << ", " << pp->p << ", " << pp->delta << ")";
  } else {
    os << "zero";
  }
  return os.str();
}

const FluxLaw& Conductivities::law(Field field, Region region) const {
  static const FluxLaw kZero;
  if (field == Field::Intra) return region == Region::Tissue ? intra : kZero;
  if (region == Region::Tissue) return extra_tissue;
  if (!extra_shell) throw ValidationError("no extracellular conductivity assigned to the shell region");
  return *extra_shell;
}

double Conductivities::max_scale() const {
  double m = std::max(intra.scale(), extra_tissue.scale());
  if (extra_shell) m = std::max(m, extra_shell->scale());
  return m;
}

FluxEval flux_eval(const Conductivities& laws, Field field, Region region, const Vec2& y) {
  return laws.law(field, region).eval(y);
}

void IonicModel::check() const {
  if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("ionic parameter a must lie in [0, 1]");
  if (!(tau > 0.0)) throw ValidationError("ionic parameter tau must be positive");
  if (!(rate > 0.0) || !std::isfinite(rate)) throw ValidationError("ionic rate must be positive");
  if (!std::isfinite(lambda) || !std::isfinite(mu)) throw ValidationError("ionic parameters must be finite");
}

double IonicModel::G(double u) const {
  if (kind != IonicKind::FitzHughNagumo) return 0.0;
  return rate * u * u * (0.25 * u * u - (1.0 + a) * u / 3.0 + 0.5 * a);
}

double IonicModel::dG(double u) const {
  if (kind != IonicKind::FitzHughNagumo) return 0.0;
  return rate * u * (u - a) * (u - 1.0);
}

double IonicModel::d2G(double u) const {
  if (kind != IonicKind::FitzHughNagumo) return 0.0;
  return rate * (3.0 * u * u - 2.0 * (1.0 + a) * u + a);
}

IonicEval IonicModel::eval(double u, double w) const {
  if (kind == IonicKind::Zero) return {};
  return {G(u) + rate * (u * w + lambda * w + 0.5 * mu * w * w), dG(u) + rate * w, rate * (u + lambda + mu * w)};
}

double semiconvexity_omega(const IonicModel& model) {
  if (model.kind == IonicKind::Zero) return 0.0;
  // Hessian [[F_uu(u), 1], [1, mu]] with F_uu bounded below by c.
  const double c = model.kind == IonicKind::FitzHughNagumo
                       ? model.a - (1.0 + model.a) * (1.0 + model.a) / 3.0
                       : 0.0;
  const double mu = model.mu;
  const double lambda_min = 0.5 * (c + mu) - std::hypot(0.5 * (c - mu), 1.0);
  return model.rate * std::max(0.0, -lambda_min);
}

}  // namespace bidomain
