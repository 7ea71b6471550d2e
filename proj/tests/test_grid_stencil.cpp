#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "npde/grid.hpp"
#include "npde/stencil.hpp"
#include "oracles.hpp"

using namespace npde;

namespace {

Field make_field(const GridSpec& g, std::initializer_list<double> vals) {
  Eigen::ArrayXd d(g.total());
  Eigen::Index i = 0;
  for (double v : vals) d[i++] = v;
  REQUIRE(i == g.total());
  return Field(g, std::move(d));
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(GridSpec({2}, {1.0}), Error);          // dim < 3
  CHECK_THROWS_AS(GridSpec({5, 5}, {1.0}), Error);       // length mismatch
  CHECK_THROWS_AS(GridSpec({5}, {0.0}), Error);          // non-positive spacing
  GridSpec g({4, 3}, {0.5, 0.25});
  CHECK(g.total() == 12);
  CHECK(g.index(1, 2, 0) == 5);
  auto c = g.coords(5);
  CHECK(c[0] == 1);
  CHECK(c[1] == 2);
}

TEST_CASE("project examples and idempotence") {
  GridSpec g = grid1d(3, 1.0);
  Field u = make_field(g, {1, 2, 3});
  Field b = make_field(g, {9, 9, 9});

  BoundaryMask ones = all_interior_mask(g);
  CHECK((project(ones, u, b).data == u.data).all());

  BoundaryMask zeros(g, Eigen::ArrayXd::Zero(3));
  CHECK((project(zeros, u, b).data == b.data).all());

  GridSpec g5 = grid1d(5, 1.0);
  BoundaryMask edge = edge_mask(g5);
  Field u5 = make_field(g5, {5, 1, 2, 3, 5});
  Field b5(g5);
  Field got = project(edge, u5, b5);
  Field want = make_field(g5, {0, 1, 2, 3, 0});
  CHECK((got.data - want.data).abs().maxCoeff() == 0.0);

  // idempotence, bit for bit
  Field twice = project(edge, got, b5);
  CHECK((twice.data == got.data).all());

  Field mismatched(grid1d(4, 1.0));
  CHECK_THROWS_AS(project(edge, mismatched, b5), Error);
}

TEST_CASE("project exactness on random fields") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    GridSpec g = grid2d(5, 6, 0.7);
    Field u = oracles::random_field(rng, g);
    Field b = oracles::random_field(rng, g);
    BoundaryMask m = edge_mask(g);
    Field out = project(m, u, b);
    for (Eigen::Index i = 0; i < g.total(); ++i)
      CHECK(out[i] == (m.data[i] == 1.0 ? u[i] : b[i]));
  }
}

TEST_CASE("metrics examples") {
  GridSpec g = grid1d(3, 1.0);
  Field u = make_field(g, {1, 2, 3});
  Metrics same = metrics(u, u);
  CHECK(same.mse == 0.0);
  CHECK(same.linf == 0.0);

  // constant offset of 0.1 on a 4-node field: mse = 0.01, linf = 0.1
  GridSpec gl({4}, {1.0});
  Field a = make_field(gl, {0.1, 0.1, 0.1, 0.1});
  Field z(gl);
  Metrics off = metrics(a, z);
  CHECK(off.mse == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(off.linf == doctest::Approx(0.1).epsilon(1e-14));

  GridSpec g2 = grid1d(3, 1.0);
  Field p = make_field(g2, {0, 1, 0});
  Field q(g2);
  Metrics m = metrics(p, q);
  CHECK(m.mse == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(m.linf == 1.0);
}

TEST_CASE("make_central examples") {
  Stencil d2 = make_central(StencilKind::SecondDerivative, 0, 1);
  CHECK(d2.order == 2);
  REQUIRE(d2.taps.size() == 3);
  CHECK(d2.taps[0].off[0] == -1);
  CHECK(d2.taps[0].c == 1.0);
  CHECK(d2.taps[1].c == -2.0);
  CHECK(d2.taps[2].c == 1.0);

  Stencil d1 = make_central(StencilKind::FirstDerivative, 0, 1);
  CHECK(d1.order == 1);
  REQUIRE(d1.taps.size() == 2);  // no center tap: d = 0
  CHECK(d1.taps[0].c == -0.5);
  CHECK(d1.taps[1].c == 0.5);

  Stencil d2y = make_central(StencilKind::SecondDerivative, 1, 2);
  REQUIRE(d2y.taps.size() == 3);
  CHECK(d2y.taps[0].off == std::array<int, 3>{0, -1, 0});
  CHECK(d2y.taps[1].off == std::array<int, 3>{0, 0, 0});
  CHECK(d2y.taps[2].off == std::array<int, 3>{0, 1, 0});

  CHECK_THROWS_AS(make_central(StencilKind::Custom, 0, 1), Error);
  CHECK_THROWS_AS(make_central(StencilKind::FirstDerivative, 2, 2), Error);
}

TEST_CASE("apply examples") {
  GridSpec g = grid1d(3, 1.0);
  Field spike = make_field(g, {0, 1, 0});

  Field lap = apply(make_central(StencilKind::SecondDerivative, 0, 1), spike);
  CHECK(lap[0] == 1.0);
  CHECK(lap[1] == -2.0);
  CHECK(lap[2] == 1.0);

  Field grad = apply(make_central(StencilKind::FirstDerivative, 0, 1), spike);
  CHECK(grad[0] == 0.5);
  CHECK(grad[1] == 0.0);
  CHECK(grad[2] == -0.5);

  Field zero(g);
  Field z2 = apply(make_central(StencilKind::SecondDerivative, 0, 1), zero);
  CHECK(z2.data.abs().maxCoeff() == 0.0);
}

TEST_CASE("split_center examples and reconstruction") {
  auto sd = split_center(make_central(StencilKind::SecondDerivative, 0, 1));
  CHECK(sd.d == -2.0);
  REQUIRE(sd.offcenter.taps.size() == 2);
  CHECK(sd.offcenter.taps[0].c == 1.0);
  CHECK(sd.offcenter.taps[1].c == 1.0);

  auto fd = split_center(make_central(StencilKind::FirstDerivative, 0, 1));
  CHECK(fd.d == 0.0);
  CHECK(fd.offcenter.taps.size() == 2);

  Stencil pure_center = Stencil::custom(1, 0, 0, {{{0, 0, 0}, 3.5}});
  auto pc = split_center(pure_center);
  CHECK(pc.d == 3.5);
  CHECK(pc.offcenter.taps.empty());

  // reconstruction apply(s, u) == d u + apply(offcenter, u), 1e-14 relative
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    GridSpec g = grid2d(7, 6, 0.9);
    Field u = oracles::random_field(rng, g);
    for (auto kind : {StencilKind::FirstDerivative, StencilKind::SecondDerivative}) {
      Stencil s = make_central(kind, trial % 2, 2);
      auto split = split_center(s);
      Field whole = apply(s, u);
      Field rebuilt(g, (split.d * u.data + apply(split.offcenter, u).data).eval());
      const double scale = std::max(1.0, whole.data.abs().maxCoeff());
      CHECK((whole.data - rebuilt.data).abs().maxCoeff() <= 1e-14 * scale);
    }
  }
}

TEST_CASE("l1_offcenter_norm examples") {
  CHECK(l1_offcenter_norm(make_central(StencilKind::SecondDerivative, 0, 1)) == 2.0);
  CHECK(l1_offcenter_norm(make_central(StencilKind::FirstDerivative, 0, 1)) == 1.0);
  Stencil empty = Stencil::custom(1, 0, 0, {{{0, 0, 0}, 4.0}});
  CHECK(l1_offcenter_norm(empty) == 0.0);
}

TEST_CASE("adjoint symmetry and inner-product identity") {
  Rng rng(13);
  GridSpec g = grid1d(7, 1.0);
  Field v = oracles::random_field(rng, g);
  Field w = oracles::random_field(rng, g);

  // even kernel: adjoint == apply
  Stencil d2 = make_central(StencilKind::SecondDerivative, 0, 1);
  CHECK((adjoint_apply(d2, v).data == apply(d2, v).data).all());

  // odd kernel: adjoint == -apply
  Stencil d1 = make_central(StencilKind::FirstDerivative, 0, 1);
  CHECK((adjoint_apply(d1, v).data == (-apply(d1, v).data)).all());

  // <D v, w> == <v, D^T w> on random 7-node fields
  for (const auto& s : {d1, d2}) {
    const double lhs = (apply(s, v).data * w.data).sum();
    const double rhs = (v.data * adjoint_apply(s, w).data).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("dense-matrix agreement on small grids") {
  Rng rng(17);
  for (int trial = 0; trial < 12; ++trial) {
    const int ndim = 1 + trial % 2;
    GridSpec g = ndim == 1 ? grid1d(5 + trial, 1.0) : grid2d(5, 4 + trial % 5, 1.0);
    for (auto kind : {StencilKind::FirstDerivative, StencilKind::SecondDerivative}) {
      Stencil s = make_central(kind, trial % ndim, ndim);
      Eigen::MatrixXd D = oracles::dense_stencil(s, g);
      Field u = oracles::random_field(rng, g);
      Eigen::VectorXd want = D * u.data.matrix();
      Field got = apply(s, u);
      CHECK((got.data.matrix() - want).cwiseAbs().maxCoeff() == 0.0);

      // adjoint equals transpose action (summation order differs)
      Eigen::VectorXd wantT = D.transpose() * u.data.matrix();
      Field gotT = adjoint_apply(s, u);
      CHECK((gotT.data.matrix() - wantT).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("operator norm bounded by kernel l1 norm") {
  for (int ndim = 1; ndim <= 2; ++ndim) {
    GridSpec g = ndim == 1 ? grid1d(12, 1.0) : grid2d(9, 12, 1.0);
    for (auto kind : {StencilKind::FirstDerivative, StencilKind::SecondDerivative}) {
      for (int axis = 0; axis < ndim; ++axis) {
        Stencil s = make_central(kind, axis, ndim);
        auto split = split_center(s);
        Eigen::MatrixXd off = oracles::dense_stencil(split.offcenter, g);
        Eigen::BDCSVD<Eigen::MatrixXd> svd(off);
        CHECK(svd.singularValues()(0) <= l1_offcenter_norm(s) + 1e-12);
      }
    }
  }
}

TEST_CASE("boundary mask invariants") {
  GridSpec g = grid2d(4, 5, 1.0);
  CHECK_THROWS_AS(BoundaryMask(g, Eigen::ArrayXd::Constant(20, 0.5)), Error);
  BoundaryMask m = edge_mask(g);
  // G(I - G) = 0 and ||G|| = 1 with a nonempty interior
  CHECK((m.data * (1.0 - m.data)).abs().maxCoeff() == 0.0);
  CHECK(m.interior_count() == (4 - 2) * (5 - 2));
  CHECK(m.data.maxCoeff() == 1.0);
}
