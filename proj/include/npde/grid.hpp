#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "npde/common.hpp"

namespace npde {

// Rectangular node grid, up to 3 axes. dims include the boundary nodes.
// Internally every grid is stored as 3 axes with trailing dims of 1, so the
// kernel loops are written once. Layout is row-major with the last axis
// fastest; this ordering is normative for file payloads and dense oracles.
struct GridSpec {
  int ndim = 0;
  std::array<int, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  GridSpec() = default;
  GridSpec(std::vector<int> d, std::vector<double> h) {
    check(!d.empty() && d.size() <= 3, "GridSpec: ndim must be 1, 2 or 3");
    check(d.size() == h.size(), "GridSpec: dims/spacing length mismatch");
    ndim = static_cast<int>(d.size());
    for (int a = 0; a < ndim; ++a) {
      check(d[a] >= 3, "GridSpec: every dim must be >= 3");
      check(h[a] > 0.0 && std::isfinite(h[a]), "GridSpec: spacing must be positive");
      dims[a] = d[a];
      spacing[a] = h[a];
    }
  }

  Eigen::Index total() const {
    return Eigen::Index(dims[0]) * dims[1] * dims[2];
  }
  Eigen::Index stride(int axis) const {
    switch (axis) {
      case 0: return Eigen::Index(dims[1]) * dims[2];
      case 1: return dims[2];
      default: return 1;
    }
  }
  Eigen::Index index(int i0, int i1, int i2) const {
    return (Eigen::Index(i0) * dims[1] + i1) * dims[2] + i2;
  }
  std::array<int, 3> coords(Eigen::Index flat) const {
    std::array<int, 3> c{};
    c[2] = static_cast<int>(flat % dims[2]);
    flat /= dims[2];
    c[1] = static_cast<int>(flat % dims[1]);
    c[0] = static_cast<int>(flat / dims[1]);
    return c;
  }

  bool operator==(const GridSpec& o) const {
    return ndim == o.ndim && dims == o.dims && spacing == o.spacing;
  }
  bool operator!=(const GridSpec& o) const { return !(*this == o); }
};

inline GridSpec grid1d(int n, double dx) { return GridSpec({n}, {dx}); }
inline GridSpec grid2d(int n0, int n1, double dx) { return GridSpec({n0, n1}, {dx, dx}); }
inline GridSpec grid3d(int n0, int n1, int n2, std::array<double, 3> h) {
  return GridSpec({n0, n1, n2}, {h[0], h[1], h[2]});
}

// Dense scalar field on a grid. The flat array is exposed directly; free
// functions below and in the solver layers operate on it Eigen-style.
template <typename Scalar>
struct FieldT {
  GridSpec grid;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> data;

  FieldT() = default;
  explicit FieldT(const GridSpec& g)
      : grid(g), data(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(g.total())) {}
  FieldT(const GridSpec& g, Eigen::Array<Scalar, Eigen::Dynamic, 1> values)
      : grid(g), data(std::move(values)) {
    check(data.size() == grid.total(), "Field: data length != product(dims)");
  }
  FieldT(const GridSpec& g, Scalar fill)
      : grid(g), data(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Constant(g.total(), fill)) {}

  Eigen::Index size() const { return data.size(); }
  Scalar& operator[](Eigen::Index i) { return data[i]; }
  Scalar operator[](Eigen::Index i) const { return data[i]; }
  bool finite() const { return data.isFinite().all(); }
};

using Field = FieldT<double>;

template <typename Scalar>
Scalar linf_norm(const FieldT<Scalar>& f) {
  return f.data.size() == 0 ? Scalar(0) : f.data.abs().maxCoeff();
}

// Binary interior/boundary selector: 1 = iterated node, 0 = clamped node.
template <typename Scalar>
struct BoundaryMaskT {
  GridSpec grid;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> data;

  BoundaryMaskT() = default;
  BoundaryMaskT(const GridSpec& g, Eigen::Array<Scalar, Eigen::Dynamic, 1> values)
      : grid(g), data(std::move(values)) {
    check(data.size() == grid.total(), "BoundaryMask: length != product(dims)");
    check(((data == Scalar(0)) || (data == Scalar(1))).all(),
          "BoundaryMask: values must be strictly 0 or 1");
  }

  Eigen::Index interior_count() const {
    return (data == Scalar(1)).count();
  }
};

using BoundaryMask = BoundaryMaskT<double>;

// Mask with value 0 on the outermost node layer of every axis.
template <typename Scalar = double>
BoundaryMaskT<Scalar> edge_mask(const GridSpec& g) {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> m =
      Eigen::Array<Scalar, Eigen::Dynamic, 1>::Ones(g.total());
  for (Eigen::Index i = 0; i < g.total(); ++i) {
    auto c = g.coords(i);
    for (int a = 0; a < g.ndim; ++a) {
      if (c[a] == 0 || c[a] == g.dims[a] - 1) {
        m[i] = Scalar(0);
        break;
      }
    }
  }
  return BoundaryMaskT<Scalar>(g, std::move(m));
}

template <typename Scalar = double>
BoundaryMaskT<Scalar> all_interior_mask(const GridSpec& g) {
  return BoundaryMaskT<Scalar>(g, Eigen::Array<Scalar, Eigen::Dynamic, 1>::Ones(g.total()));
}

// G u + (I - G) b. Pointwise, idempotent for fixed b.
template <typename Scalar>
FieldT<Scalar> project(const BoundaryMaskT<Scalar>& mask, const FieldT<Scalar>& u,
                       const FieldT<Scalar>& b) {
  check(mask.grid == u.grid && u.grid == b.grid, "project: dimension mismatch");
  return FieldT<Scalar>(u.grid,
                        (mask.data * u.data + (Scalar(1) - mask.data) * b.data).eval());
}

struct Metrics {
  double mse = 0.0;
  double linf = 0.0;
};

template <typename Scalar>
Metrics metrics(const FieldT<Scalar>& u, const FieldT<Scalar>& v) {
  check(u.grid == v.grid, "metrics: dimension mismatch");
  auto diff = (u.data - v.data).eval();
  Metrics m;
  m.mse = static_cast<double>(diff.square().sum()) / static_cast<double>(diff.size());
  m.linf = static_cast<double>(diff.abs().maxCoeff());
  return m;
}

}  // namespace npde
