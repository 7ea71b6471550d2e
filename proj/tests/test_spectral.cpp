#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "npde/spectral.hpp"
#include "oracles.hpp"

using namespace npde;

namespace {

PdeProblem p1_problem() {
  GridSpec g = grid1d(5, 1.0);
  PdeProblem p;
  p.grid = g;
  p.theta = 0.5;
  p.dt = 0.1;
  p.mask = edge_mask(g);
  p.boundary = Field(g);
  PdeTerm t;
  t.stencil = make_central(StencilKind::SecondDerivative, 0, 1);
  t.coeff = Field(g, 1.0);
  p.terms.push_back(std::move(t));
  return p;
}

FieldMap psi_linear_map(const IteratorAssembly& a) {
  Field k0 = psi_step(a, Field(a.grid));
  return [a, k0](const Field& u) {
    Field pu = psi_step(a, u);
    return Field(u.grid, (pu.data - k0.data).eval());
  };
}

}  // namespace

TEST_CASE("power iteration on a diagonal map") {
  GridSpec g = grid1d(3, 1.0);
  Eigen::ArrayXd diag(3);
  diag << 0.5, 0.2, 0.1;
  auto map = [&](const Field& u) { return Field(g, (diag * u.data).eval()); };
  SpectralReport r = power_iteration(map, g, 500, 1e-10, 1);
  CHECK(r.converged);
  CHECK(r.rho_estimate == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("power iteration on the zero map") {
  GridSpec g = grid1d(4, 1.0);
  auto map = [&](const Field& u) { (void)u; return Field(g); };
  SpectralReport r = power_iteration(map, g, 500, 1e-10, 2);
  CHECK(r.converged);
  CHECK(r.rho_estimate == 0.0);
}

TEST_CASE("power iteration on the P1 iteration matrix") {
  PdeProblem p = p1_problem();
  IteratorAssembly a = assemble(p, Field(p.grid));
  SpectralReport r = power_iteration(psi_linear_map(a), p.grid, 500, 1e-12, 3);
  const double want = 2.0 * (1.0 / 22.0) * std::cos(M_PI / 4.0);
  CHECK(std::abs(r.rho_estimate - want) <= 1e-6);
  CHECK(std::abs(r.rho_estimate - 0.0642824) <= 1e-6);

  // dense eigen oracle cross-check
  Eigen::MatrixXd L = oracles::dense_psi(p, Field(p.grid)).L;
  CHECK(std::abs(dense_spectral_radius(L) - want) <= 1e-12);
}

TEST_CASE("dense_oracle on P1: interior block and offset") {
  PdeProblem p = p1_problem();
  Field u_t(p.grid);
  Eigen::ArrayXd ut(5);
  ut << 0, 0, 1, 0, 0;
  u_t.data = ut;
  IteratorAssembly a = assemble(p, u_t);
  auto it_map = [&](const Field& u) { return psi_step(a, u); };
  DenseOracle d = dense_oracle(it_map, p.grid);

  const double lam = 1.0 / 22.0;
  for (Eigen::Index i = 1; i <= 3; ++i)
    for (Eigen::Index j = 1; j <= 3; ++j) {
      const double want = (std::abs(i - j) == 1) ? lam : 0.0;
      CHECK(d.matrix(i, j) == doctest::Approx(want).epsilon(1e-13));
    }
  // boundary rows are zero
  CHECK(d.matrix.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(d.matrix.row(4).cwiseAbs().maxCoeff() == 0.0);

  // offset = G ctilde + (I - G) b
  Eigen::VectorXd want_off =
      (a.mask.data * a.ctilde.data + (1.0 - a.mask.data) * a.boundary.data).matrix();
  CHECK((d.offset - want_off).cwiseAbs().maxCoeff() <= 1e-15);

  // column extraction equals the hand-assembled dense map
  oracles::DenseAffine psi = oracles::dense_psi(p, u_t);
  CHECK((d.matrix - psi.L).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("dense_oracle on a degenerate no-term problem") {
  GridSpec g = grid1d(4, 1.0);
  PdeProblem p;
  p.grid = g;
  p.theta = 1.0;
  p.dt = 0.5;
  p.mask = all_interior_mask(g);
  p.boundary = Field(g);
  Field u_t(g, 2.0);
  IteratorAssembly a = assemble(p, u_t);
  auto it_map = [&](const Field& u) { return psi_step(a, u); };
  DenseOracle d = dense_oracle(it_map, g);
  CHECK(d.matrix.cwiseAbs().maxCoeff() == 0.0);  // no terms: L = 0
  CHECK((d.offset.array() == 2.0).all());        // offset = ctilde = u_t (denom = 1)
}

TEST_CASE("dense_oracle grid cap") {
  GridSpec g = grid2d(65, 65, 1.0);
  auto id_map = [](const Field& u) { return u; };
  CHECK_THROWS_AS(dense_oracle(id_map, g), Error);
}

TEST_CASE("power iteration vs dense oracle across random problems") {
  Rng rng(101);
  int compared = 0;
  for (int trial = 0; trial < 14 && compared < 8; ++trial) {
    oracles::RandomProblemOptions opt;
    opt.max_nodes = 9;
    PdeProblem p = oracles::random_problem(rng, opt);
    IteratorAssembly a = assemble(p, Field(p.grid));
    Eigen::MatrixXd L = oracles::dense_psi(p, Field(p.grid)).L;
    Eigen::EigenSolver<Eigen::MatrixXd> es(L, false);
    Eigen::ArrayXd mods = es.eigenvalues().cwiseAbs().array();
    const double rho = mods.maxCoeff();
    double second = 0.0;
    for (Eigen::Index i = 0; i < mods.size(); ++i)
      if (mods[i] < rho * (1.0 - 1e-9)) second = std::max(second, mods[i]);
    if (rho < 1e-8 || (rho - second) / rho < 0.02) continue;  // needs a modulus gap

    SpectralReport r = power_iteration(psi_linear_map(a), p.grid, 20000, 1e-10,
                                       uint64_t(trial));
    CHECK(std::abs(r.rho_estimate - rho) <= 1e-3 * rho);
    ++compared;
  }
  CHECK(compared >= 8);
}

TEST_CASE("convexity probe: degenerate segment is tight") {
  Rng rng(103);
  PdeProblem p = p1_problem();
  std::vector<HStack> h = oracles::random_stacks(rng, 1, 1, 3);
  ConvexityReport rep = convexity_probe(p, h, h, {0.0, 0.25, 0.5, 0.75, 1.0}, 1e-9, 1);
  CHECK(rep.pass);
  for (double s : rep.norms) CHECK(s == doctest::Approx(rep.norms[0]).epsilon(1e-10));
}

TEST_CASE("convexity probe: interpolation toward H = 0 reaches ||L||") {
  Rng rng(107);
  PdeProblem p = p1_problem();
  std::vector<HStack> h1 = oracles::random_stacks(rng, 1, 1, 3);
  std::vector<HStack> h0 = init_params(1, 1, {3, 4});  // zero correction
  ConvexityReport rep = convexity_probe(p, h1, h0, {0.0, 0.5, 1.0}, 1e-9, 2);
  CHECK(rep.pass);
  Eigen::MatrixXd L = oracles::dense_psi(p, Field(p.grid)).L;
  CHECK(rep.norms[0] == doctest::Approx(dense_spectral_norm(L)).epsilon(1e-10));
}

TEST_CASE("convexity probe: random seeded segments have no violations") {
  Rng rng(109);
  int done = 0;
  for (int trial = 0; trial < 6; ++trial) {
    oracles::RandomProblemOptions opt;
    opt.max_nodes = 8;
    PdeProblem p = oracles::random_problem(rng, opt);
    std::vector<HStack> h1 =
        oracles::random_stacks(rng, p.grid.ndim, int(p.terms.size()), 3);
    std::vector<HStack> h2 =
        oracles::random_stacks(rng, p.grid.ndim, int(p.terms.size()), 3);
    ConvexityReport rep = convexity_probe(p, h1, h2, {0.0, 0.25, 0.5, 0.75, 1.0},
                                          1e-9, uint64_t(trial));
    CHECK(rep.pass);
    CHECK(rep.max_violation <= 1e-9);
    ++done;
  }
  CHECK(done == 6);
}

TEST_CASE("lemma-4 style bound holds under the margin condition") {
  Rng rng(113);
  int tested = 0;
  for (int trial = 0; trial < 20 && tested < 6; ++trial) {
    oracles::RandomProblemOptions opt;
    opt.max_nodes = 8;
    opt.force_margin_pass = true;
    PdeProblem p = oracles::random_problem(rng, opt);
    Field zero(p.grid);
    oracles::DenseAssembly da = oracles::dense_assembly(p, zero);

    // dense norms per term
    std::vector<HStack> stacks =
        oracles::random_stacks(rng, p.grid.ndim, int(p.terms.size()), 3, 0.15);
    double lambda_cond = 0.0, off_norm_sum = 0.0;
    std::vector<double> lam_norm(p.terms.size());
    for (size_t i = 0; i < p.terms.size(); ++i) {
      lam_norm[i] = dense_spectral_norm(da.Lambda[i]);
      off_norm_sum += dense_spectral_norm(da.offcenter[i]);
    }
    for (size_t i = 0; i < p.terms.size(); ++i)
      lambda_cond = std::max(lambda_cond, lam_norm[i] * off_norm_sum);
    if (lambda_cond >= 1.0) continue;  // Lambda condition (dense norms) not met

    oracles::DenseAffine phi = oracles::dense_phi(p, zero, stacks);
    double bound = 0.0;
    for (size_t i = 0; i < p.terms.size(); ++i) {
      Eigen::MatrixXd H = oracles::dense_hstack(stacks[i], p.grid);
      bound += lam_norm[i] *
               (dense_spectral_norm(da.offcenter[i] - H) + dense_spectral_norm(H));
    }
    const double measured = dense_spectral_norm(phi.L);
    CHECK(measured <= bound + 1e-12);
    // and contraction follows whenever the bound itself is below one
    if (bound < 1.0) CHECK(measured < 1.0);
    ++tested;
  }
  CHECK(tested >= 6);
}

TEST_CASE("validity report: zero stacks give rho(L') == rho(L)") {
  ValidityGrid grid;
  grid.thetas = {0.5, 0.9};
  grid.dts = {0.1};
  grid.dxs = {1.0};
  grid.coefficient_draws = 1;
  grid.seed = 5;
  auto factory = [&](double theta, double dt, double dx, uint64_t seed) {
    (void)dx;
    Rng rng(seed);
    PdeProblem p = p1_problem();
    p.theta = theta;
    p.dt = dt;
    p.terms[0].coeff = Field(p.grid, rng.uniform(0.5, 1.0));
    return p;
  };
  std::vector<HStack> zero = init_params(1, 1, {3, 6});
  ValidityReport rep = validity_report(zero, factory, grid);
  REQUIRE(rep.rows.size() == 2);
  for (const auto& row : rep.rows) {
    CHECK(std::abs(row.rho_L - row.rho_Lprime) <= 1e-12);
    CHECK(row.pass);
    CHECK(row.margin_min > 0.0);
  }
  CHECK(rep.condition_implies_valid);
}
