#pragma once

#include <optional>
#include <vector>

#include "npde/problem.hpp"

namespace npde {

// Precomputed iterator data for one time step:
//   denom = I - theta dt sum_j a_j d_j / dx_j^{p_j}      (pointwise)
//   lambda_i = theta dt a_i / (dx_i^{p_i} denom)
//   ctilde = denom^{-1} (u_t + (1-theta) dt sum_i a_i D_i u_t / dx^{p_i}
//                        + dt (r(u_t) + const_source))
// The iterator is u' = G (sum_i lambda_i (D_i - d_i I) u + ctilde) + (I-G) b.
struct IteratorAssembly {
  GridSpec grid;
  std::vector<Field> lambdas;
  std::vector<Stencil> offcenters;
  Field ctilde;
  BoundaryMask mask;
  Field boundary;
  Field denom_inv;
};

IteratorAssembly assemble(const PdeProblem& p, const Field& u_t);

// One masked fixed-point update; affine in u.
Field psi_step(const IteratorAssembly& a, const Field& u);

struct StopRule {
  std::optional<int> iters;
  std::optional<double> tol;  // on the infinity norm of the update
};

enum class StartMode { Warm, Zero };

struct SolveResult {
  Field u;
  int iters_used = 0;
  double residual = 0.0;
};

constexpr double kDivergenceGuard = 1e12;
constexpr int kMaxFixedPointIters = 100000;

SolveResult solve_step(const PdeProblem& p, const Field& u_t, const StopRule& stop,
                       StartMode start = StartMode::Warm);

enum class ReferenceMode { OwnTheta, ImplicitTheta1 };

// Converged fixed point used as training/benchmark target. ImplicitTheta1
// re-assembles the step with theta = 1 (the 3D pipeline does exactly that);
// OwnTheta keeps the problem's theta so the target is the iterator's own
// fixed point.
Field reference_solve(const PdeProblem& p, const Field& u_t, double tol = 1e-10,
                      ReferenceMode mode = ReferenceMode::OwnTheta);

// Update tolerance that guarantees a theta-scheme residual below `target`:
// at a converged iterate the equation residual is denom * update / dt.
double reference_update_tol(const PdeProblem& p, double target_residual = 1e-9,
                            double cap = 1e-10);

// Chained time stepping; re-assembles per step (ctilde depends on u_t).
std::vector<Field> rollout(const PdeProblem& p, const Field& u0, int steps,
                           const StopRule& per_step);

struct TermMargin {
  double lambda_norm = 0.0;  // max_x |lambda_i(x)|
  double margin = 0.0;       // bound - lambda_norm
};

struct Theorem1Report {
  std::vector<TermMargin> terms;
  double bound = 0.0;  // 1 / sum_j ||D_j - d_j I||_1
  bool pass = false;
  bool rho_estimated = false;
  double rho_L = 0.0;
  bool rho_converged = false;
};

// Sufficient validity condition max_x |lambda_i| < 1 / sum_j ||off_j||_1 per
// term, plus an optional power-iteration estimate of rho(L).
Theorem1Report theorem1_check(const PdeProblem& p, bool estimate_rho = false,
                              uint64_t seed = 0);

}  // namespace npde
