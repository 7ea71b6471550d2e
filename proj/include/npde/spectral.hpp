#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "npde/grid.hpp"
#include "npde/neural.hpp"

namespace npde {

struct SpectralReport {
  double rho_estimate = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string method;
};

using FieldMap = std::function<Field(const Field&)>;

// Normalized power iteration with a sliding geometric-mean estimator; the
// window rides out the sign/phase oscillation of +-paired or complex dominant
// eigenvalues (central-difference spectra come in such pairs). Unstabilized
// runs are flagged, never silently reported.
SpectralReport power_iteration(const FieldMap& linear_map, const GridSpec& grid,
                               int iters = 500, double tol = 1e-10, uint64_t seed = 0);

struct DenseOracle {
  Eigen::MatrixXd matrix;  // linear part, column-extracted with basis vectors
  Eigen::VectorXd offset;  // iterator(0)
};

// Materializes an affine iterator on grids up to 4096 nodes.
DenseOracle dense_oracle(const FieldMap& iterator, const GridSpec& grid);

double dense_spectral_radius(const Eigen::MatrixXd& m);
double dense_spectral_norm(const Eigen::MatrixXd& m);

// Dense matrix of a stencil's zero-extended action (library route; tests
// assemble their own from taps).
Eigen::MatrixXd stencil_matrix(const Stencil& s, const GridSpec& grid);

// Dense matrix of one H stack's composite linear map.
Eigen::MatrixXd hstack_matrix(const HStack& h, const GridSpec& grid);

struct ConvexityReport {
  std::vector<double> alphas;
  std::vector<double> norms;       // s(alpha) = ||L'(alpha H1 + (1-alpha) H2)||_2
  double max_violation = 0.0;      // max over alpha of s(a) - (a s(1) + (1-a) s(0))
  bool pass = false;
};

// Probes convexity of the spectral norm along the operator-space segment
// between two H stacks (the combination is taken on the operators, not on
// the stacked weights). Grid capped as in dense_oracle.
ConvexityReport convexity_probe(const PdeProblem& p, const std::vector<HStack>& h1,
                                const std::vector<HStack>& h2,
                                std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0},
                                double tolerance = 1e-9, uint64_t seed = 0);

struct ValidityRow {
  double theta = 0.0, dt = 0.0, dx = 0.0;
  uint64_t draw_seed = 0;
  double margin_min = 0.0;
  double rho_L = 0.0;
  double rho_Lprime = 0.0;
  bool rho_L_converged = false;
  bool rho_Lprime_converged = false;
  bool pass = false;  // rho(L') < 1
};

struct ValidityReport {
  std::vector<ValidityRow> rows;
  // every grid point satisfying the Lambda-condition has rho(L') < 1
  bool condition_implies_valid = true;
};

struct ValidityGrid {
  std::vector<double> thetas;
  std::vector<double> dts;
  std::vector<double> dxs;
  int coefficient_draws = 2;
  uint64_t seed = 0;
  int power_iters = 500;
};

using ProblemFactory =
    std::function<PdeProblem(double theta, double dt, double dx, uint64_t draw_seed)>;

// Sweeps the parameter grid with the trained stacks: Theorem 1 margin,
// power-iteration rho(L) and rho(L'), pass/fail per point.
ValidityReport validity_report(const std::vector<HStack>& stacks,
                               const ProblemFactory& factory, const ValidityGrid& grid,
                               int threads = 1);

}  // namespace npde
