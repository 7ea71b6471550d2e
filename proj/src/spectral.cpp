#include "npde/spectral.hpp"

#include <cmath>
#include <deque>
#include <thread>

#include "npde/rng.hpp"

namespace npde {

SpectralReport power_iteration(const FieldMap& linear_map, const GridSpec& grid,
                               int iters, double tol, uint64_t seed) {
  SpectralReport rep;
  rep.method = "power-iteration";
  Rng rng(mix_seed(seed, 0x9e1));
  Field v(grid);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal(0.0, 1.0);
  double nv = std::sqrt(v.data.square().sum());
  check(nv > 0.0, "power_iteration: degenerate start vector");
  v.data /= nv;

  // Geometric mean of the normalized growth ratios over the trailing half of
  // the history. The per-step ratios telescope, so oscillation from +- pairs
  // or complex conjugate pairs cancels at a rate of 1/window.
  std::vector<double> prefix{0.0};  // prefix sums of log ||A v_k||
  std::vector<double> est_hist;
  auto window_estimate = [&](int k) {
    const int lo = k / 2;
    return std::exp((prefix[k] - prefix[lo]) / double(k - lo));
  };

  for (int k = 1; k <= iters; ++k) {
    Field w = linear_map(v);
    check(w.grid == grid, "power_iteration: map changed the grid");
    double nw = std::sqrt(w.data.square().sum());
    rep.iterations = k;
    if (!(nw > 1e-300)) {  // annihilated: spectral radius 0 within precision
      rep.rho_estimate = 0.0;
      rep.converged = true;
      return rep;
    }
    prefix.push_back(prefix.back() + std::log(nw));
    v.data = w.data / nw;

    rep.rho_estimate = window_estimate(k);
    est_hist.push_back(rep.rho_estimate);
    const int lag = std::max(24, k / 4);
    if (k > 48 && k - lag - 1 >= 0) {
      const double prev = est_hist[k - lag - 1];
      if (std::abs(rep.rho_estimate - prev) <=
          tol * std::max(rep.rho_estimate, 1e-30)) {
        rep.converged = true;
        return rep;
      }
    }
  }
  return rep;  // converged stays false: estimate did not stabilize
}

DenseOracle dense_oracle(const FieldMap& iterator, const GridSpec& grid) {
  const Eigen::Index n = grid.total();
  check(n <= 4096, "dense_oracle: grid exceeds 4096 nodes");
  DenseOracle d;
  Field zero(grid);
  d.offset = iterator(zero).data.matrix();
  d.matrix.resize(n, n);
  Field e(grid);
  for (Eigen::Index j = 0; j < n; ++j) {
    e.data.setZero();
    e[j] = 1.0;
    d.matrix.col(j) = iterator(e).data.matrix() - d.offset;
  }
  return d;
}

double dense_spectral_radius(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double dense_spectral_norm(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

Eigen::MatrixXd stencil_matrix(const Stencil& s, const GridSpec& grid) {
  auto map = [&](const Field& u) { return apply(s, u); };
  return dense_oracle(map, grid).matrix;
}

Eigen::MatrixXd hstack_matrix(const HStack& h, const GridSpec& grid) {
  auto map = [&](const Field& u) { return h_apply(h, u); };
  return dense_oracle(map, grid).matrix;
}

namespace {

// Linear part of Phi with the correction interpolated in operator space:
// u -> Lu + G sum_i lambda_i (alpha h1_i + (1-alpha) h2_i)(Lu - u).
Field interpolated_linear(const IteratorAssembly& a, const std::vector<HStack>& h1,
                          const std::vector<HStack>& h2, double alpha, const Field& u,
                          const Field& psi0) {
  Field psi = psi_step(a, u);
  Field lu(u.grid, (psi.data - psi0.data).eval());
  if (h1.empty()) return lu;
  Field w(u.grid, (lu.data - u.data).eval());
  Eigen::ArrayXd corr;
  for (size_t i = 0; i < h1.size(); ++i) {
    Field a1 = h_apply(h1[i], w);
    Field a2 = h_apply(h2[i], w);
    Eigen::ArrayXd ci =
        (a.lambdas[i].data * (alpha * a1.data + (1.0 - alpha) * a2.data)).eval();
    if (i == 0)
      corr = std::move(ci);
    else
      corr += ci;
  }
  return Field(u.grid, (lu.data + a.mask.data * corr).eval());
}

}  // namespace

ConvexityReport convexity_probe(const PdeProblem& p, const std::vector<HStack>& h1,
                                const std::vector<HStack>& h2,
                                std::vector<double> alphas, double tolerance,
                                uint64_t seed) {
  check(h1.size() == p.terms.size() && h2.size() == p.terms.size(),
        "convexity_probe: stack count mismatch");
  IteratorAssembly a = assemble(p, Field(p.grid));
  Field psi0 = psi_step(a, Field(p.grid));

  // seeded linearity spot check of the interpolated map
  {
    Rng rng(mix_seed(seed, 0xc0));
    Field x(p.grid), y(p.grid);
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = rng.normal(0.0, 1.0);
    Field lx = interpolated_linear(a, h1, h2, 0.5, x, psi0);
    Field ly = interpolated_linear(a, h1, h2, 0.5, y, psi0);
    Field s(p.grid, (x.data + y.data).eval());
    Field ls = interpolated_linear(a, h1, h2, 0.5, s, psi0);
    double err = (ls.data - lx.data - ly.data).abs().maxCoeff();
    double scale = 1.0 + ls.data.abs().maxCoeff();
    check(err <= 1e-9 * scale, "convexity_probe: interpolated map is not linear");
  }

  ConvexityReport rep;
  rep.alphas = std::move(alphas);
  for (double al : rep.alphas) {
    auto map = [&](const Field& u) { return interpolated_linear(a, h1, h2, al, u, psi0); };
    rep.norms.push_back(dense_spectral_norm(dense_oracle(map, p.grid).matrix));
  }
  double s0 = 0.0, s1 = 0.0;
  bool have0 = false, have1 = false;
  for (size_t i = 0; i < rep.alphas.size(); ++i) {
    if (rep.alphas[i] == 0.0) { s0 = rep.norms[i]; have0 = true; }
    if (rep.alphas[i] == 1.0) { s1 = rep.norms[i]; have1 = true; }
  }
  check(have0 && have1, "convexity_probe: alphas must include 0 and 1");
  rep.max_violation = 0.0;
  for (size_t i = 0; i < rep.alphas.size(); ++i) {
    double chord = rep.alphas[i] * s1 + (1.0 - rep.alphas[i]) * s0;
    rep.max_violation = std::max(rep.max_violation, rep.norms[i] - chord);
  }
  rep.pass = rep.max_violation <= tolerance;
  return rep;
}

ValidityReport validity_report(const std::vector<HStack>& stacks,
                               const ProblemFactory& factory, const ValidityGrid& grid,
                               int threads) {
  std::vector<std::array<double, 3>> points;
  for (double th : grid.thetas)
    for (double dt : grid.dts)
      for (double dx : grid.dxs) points.push_back({th, dt, dx});

  ValidityReport rep;
  rep.rows.resize(points.size() * grid.coefficient_draws);

  auto eval_row = [&](size_t pi, int draw) {
    const auto& pt = points[pi];
    uint64_t dseed = mix_seed(grid.seed, pi * 131 + draw);
    PdeProblem p = factory(pt[0], pt[1], pt[2], dseed);
    ValidityRow row;
    row.theta = pt[0];
    row.dt = pt[1];
    row.dx = pt[2];
    row.draw_seed = dseed;

    Theorem1Report t1 = theorem1_check(p);
    row.margin_min = std::numeric_limits<double>::infinity();
    for (const auto& tm : t1.terms) row.margin_min = std::min(row.margin_min, tm.margin);
    if (t1.terms.empty()) row.margin_min = t1.bound;

    IteratorAssembly a = assemble(p, Field(p.grid));
    Field psi0 = psi_step(a, Field(p.grid));
    auto lin_L = [&](const Field& u) {
      Field pu = psi_step(a, u);
      return Field(p.grid, (pu.data - psi0.data).eval());
    };
    SpectralReport rl = power_iteration(lin_L, p.grid, grid.power_iters, 1e-8, dseed);
    row.rho_L = rl.rho_estimate;
    row.rho_L_converged = rl.converged;

    NeuralIterator it{a, stacks};
    Field phi0 = phi_step(it, Field(p.grid));
    auto lin_Lp = [&](const Field& u) {
      Field pu = phi_step(it, u);
      return Field(p.grid, (pu.data - phi0.data).eval());
    };
    SpectralReport rp = power_iteration(lin_Lp, p.grid, grid.power_iters, 1e-8, dseed + 1);
    row.rho_Lprime = rp.rho_estimate;
    row.rho_Lprime_converged = rp.converged;
    row.pass = row.rho_Lprime < 1.0;
    rep.rows[pi * grid.coefficient_draws + draw] = row;
  };

  const size_t jobs = rep.rows.size();
  if (threads <= 1) {
    for (size_t pi = 0; pi < points.size(); ++pi)
      for (int d = 0; d < grid.coefficient_draws; ++d) eval_row(pi, d);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t]() {
        for (size_t j = t; j < jobs; j += threads)
          eval_row(j / grid.coefficient_draws, int(j % grid.coefficient_draws));
      });
    }
    for (auto& th : pool) th.join();
  }

  for (const auto& row : rep.rows)
    if (row.margin_min > 0.0 && !(row.rho_Lprime < 1.0))
      rep.condition_implies_valid = false;
  return rep;
}

}  // namespace npde
