#pragma once

#include <optional>
#include <vector>

#include "npde/grid.hpp"
#include "npde/stencil.hpp"

namespace npde {

// One (A_i, D_i) pair: a diagonal coefficient field attached to a stencil.
struct PdeTerm {
  Stencil stencil;
  Field coeff;
};

// Explicit logistic reaction r(u) = rho * u * (1 - u); treated IMEX-style,
// i.e. evaluated at u_t and folded into the per-step constant.
struct LogisticSource {
  Field rho;
};

inline Eigen::ArrayXd logistic_term(const Eigen::ArrayXd& rho, const Eigen::ArrayXd& u) {
  return (rho * u) * (1.0 - u);
}

// The full discrete problem for one time step family.
struct PdeProblem {
  GridSpec grid;
  std::vector<PdeTerm> terms;
  double theta = 1.0;  // (0, 1]
  double dt = 1.0;
  BoundaryMask mask;
  Field boundary;  // b_{t+dt}, clamped on mask==0 nodes
  std::optional<LogisticSource> source;
  std::optional<Field> const_source;  // time-independent extra source
};

inline void validate(const PdeProblem& p) {
  check(p.grid.ndim >= 1, "problem: grid not set");
  check(p.theta > 0.0 && p.theta <= 1.0, "problem: theta must be in (0, 1]");
  check(p.dt > 0.0 && std::isfinite(p.dt), "problem: dt must be positive");
  check(p.mask.grid == p.grid, "problem: mask grid mismatch");
  check(p.boundary.grid == p.grid, "problem: boundary grid mismatch");
  for (size_t i = 0; i < p.terms.size(); ++i) {
    const auto& t = p.terms[i];
    check(t.coeff.grid == p.grid, "problem: coefficient grid mismatch");
    check(t.coeff.finite(), "problem: non-finite coefficient field");
    check(t.stencil.ndim == p.grid.ndim, "problem: stencil ndim mismatch");
  }
  if (p.source) check(p.source->rho.grid == p.grid, "problem: rho grid mismatch");
  if (p.const_source) check(p.const_source->grid == p.grid, "problem: source grid mismatch");
}

}  // namespace npde
