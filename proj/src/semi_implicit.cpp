#include "npde/semi_implicit.hpp"

#include <cmath>
#include <sstream>

#include "npde/spectral.hpp"

namespace npde {

IteratorAssembly assemble(const PdeProblem& p, const Field& u_t) {
  validate(p);
  check(u_t.grid == p.grid, "assemble: u_t grid mismatch");
  const Eigen::Index n = p.grid.total();

  Eigen::ArrayXd denom = Eigen::ArrayXd::Ones(n);
  std::vector<CenterSplit<double>> splits;
  std::vector<double> dxp(p.terms.size());
  splits.reserve(p.terms.size());
  for (size_t i = 0; i < p.terms.size(); ++i) {
    const auto& t = p.terms[i];
    splits.push_back(split_center(t.stencil));
    dxp[i] = std::pow(p.grid.spacing[t.stencil.axis], t.stencil.order);
    if (splits[i].d != 0.0)
      denom -= (p.theta * p.dt * splits[i].d / dxp[i]) * t.coeff.data;
  }

  Eigen::Index worst;
  const double dmin = denom.abs().minCoeff(&worst);
  if (dmin < 1e-12) {
    std::ostringstream os;
    os << "assemble: singular assembly, |denom| = " << dmin << " at node " << worst;
    throw Error(os.str());
  }

  IteratorAssembly a;
  a.grid = p.grid;
  a.mask = p.mask;
  a.boundary = p.boundary;
  a.denom_inv = Field(p.grid, denom.inverse().eval());

  a.lambdas.reserve(p.terms.size());
  a.offcenters.reserve(p.terms.size());
  for (size_t i = 0; i < p.terms.size(); ++i) {
    a.lambdas.emplace_back(
        p.grid, ((p.theta * p.dt / dxp[i]) * p.terms[i].coeff.data * a.denom_inv.data).eval());
    a.offcenters.push_back(splits[i].offcenter);
  }

  // ctilde accumulation order mirrors the adjoint tape op-for-op so taped and
  // untaped forwards agree bitwise.
  Eigen::ArrayXd inner = u_t.data;
  if (p.theta < 1.0) {
    for (size_t i = 0; i < p.terms.size(); ++i) {
      Field full = apply(p.terms[i].stencil, u_t);
      Eigen::ArrayXd w = ((1.0 - p.theta) * p.dt / dxp[i]) * p.terms[i].coeff.data;
      inner += (w * full.data).eval();
    }
  }
  if (p.source) inner += (p.dt * logistic_term(p.source->rho.data, u_t.data)).eval();
  if (p.const_source) inner += (p.dt * p.const_source->data).eval();
  a.ctilde = Field(p.grid, (a.denom_inv.data * inner).eval());

  check(a.ctilde.finite(), "assemble: non-finite ctilde");
  return a;
}

Field psi_step(const IteratorAssembly& a, const Field& u) {
  check(u.grid == a.grid, "psi_step: grid mismatch");
  Eigen::ArrayXd acc;
  if (a.lambdas.empty()) {
    acc = a.ctilde.data;
  } else {
    for (size_t i = 0; i < a.lambdas.size(); ++i) {
      Field t = apply(a.offcenters[i], u);
      Eigen::ArrayXd s = (a.lambdas[i].data * t.data).eval();
      if (i == 0)
        acc = std::move(s);
      else
        acc += s;
    }
    acc += a.ctilde.data;
  }
  return Field(u.grid,
               (a.mask.data * acc + (1.0 - a.mask.data) * a.boundary.data).eval());
}

SolveResult solve_step(const PdeProblem& p, const Field& u_t, const StopRule& stop,
                       StartMode start) {
  IteratorAssembly a = assemble(p, u_t);
  Field u = start == StartMode::Warm ? project(p.mask, u_t, p.boundary)
                                     : project(p.mask, Field(p.grid), p.boundary);
  SolveResult r;
  r.residual = std::numeric_limits<double>::infinity();
  const int cap = stop.iters ? *stop.iters : kMaxFixedPointIters;
  for (int k = 0; k < cap; ++k) {
    Field un = psi_step(a, u);
    r.residual = linf_norm(Field(p.grid, (un.data - u.data).eval()));
    ++r.iters_used;
    if (linf_norm(un) > kDivergenceGuard)
      throw Error("solve_step: divergence, |u| exceeded 1e12 (invalid iterator)");
    u = std::move(un);
    if (stop.tol && r.residual <= *stop.tol) break;
  }
  r.u = std::move(u);
  return r;
}

Field reference_solve(const PdeProblem& p, const Field& u_t, double tol,
                      ReferenceMode mode) {
  PdeProblem q = p;
  if (mode == ReferenceMode::ImplicitTheta1) q.theta = 1.0;
  StopRule stop;
  stop.iters = kMaxFixedPointIters;
  stop.tol = tol;
  SolveResult r = solve_step(q, u_t, stop);
  if (r.residual > tol) {
    std::ostringstream os;
    os << "reference_solve: no convergence after " << r.iters_used
       << " iterations (residual " << r.residual << ")";
    throw Error(os.str());
  }
  return r.u;
}

double reference_update_tol(const PdeProblem& p, double target_residual, double cap) {
  IteratorAssembly a = assemble(p, Field(p.grid));
  const double denom_max = a.denom_inv.data.abs().inverse().maxCoeff();
  return std::min(cap, 0.4 * target_residual * p.dt / denom_max);
}

std::vector<Field> rollout(const PdeProblem& p, const Field& u0, int steps,
                           const StopRule& per_step) {
  check(steps >= 1, "rollout: steps must be >= 1");
  std::vector<Field> out;
  out.reserve(steps);
  Field u = u0;
  for (int t = 0; t < steps; ++t) {
    u = solve_step(p, u, per_step).u;
    out.push_back(u);
  }
  return out;
}

Theorem1Report theorem1_check(const PdeProblem& p, bool estimate_rho, uint64_t seed) {
  IteratorAssembly a = assemble(p, Field(p.grid));
  Theorem1Report rep;
  double l1sum = 0.0;
  for (const auto& oc : a.offcenters) l1sum += l1_offcenter_norm(oc);
  rep.bound = l1sum > 0.0 ? 1.0 / l1sum : std::numeric_limits<double>::infinity();
  rep.pass = true;
  for (const auto& lam : a.lambdas) {
    TermMargin m;
    m.lambda_norm = linf_norm(lam);
    m.margin = rep.bound - m.lambda_norm;
    if (!(m.margin > 0.0)) rep.pass = false;
    rep.terms.push_back(m);
  }
  if (estimate_rho) {
    Field k0 = psi_step(a, Field(p.grid));
    auto lin = [&](const Field& u) {
      Field pu = psi_step(a, u);
      return Field(p.grid, (pu.data - k0.data).eval());
    };
    SpectralReport sr = power_iteration(lin, p.grid, 500, 1e-10, seed);
    rep.rho_estimated = true;
    rep.rho_L = sr.rho_estimate;
    rep.rho_converged = sr.converged;
  }
  return rep;
}

}  // namespace npde
