#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "npde/grid.hpp"

namespace npde {

namespace detail {

// dst[x] += f * src[x + off] for every x with x + off inside the grid.
// Zero extension outside the array is implicit: out-of-range taps contribute
// nothing. The innermost loop always runs along the last active (stride-1)
// axis so it vectorizes for 1D and 2D grids too, where trailing dims are 1.
template <typename Scalar>
void shifted_axpy(const GridSpec& g, const Scalar* src, Scalar* dst,
                  const std::array<int, 3>& off, Scalar f) {
  std::array<Eigen::Index, 3> lo, hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max<Eigen::Index>(0, -off[a]);
    hi[a] = std::min<Eigen::Index>(g.dims[a], g.dims[a] - off[a]);
    if (hi[a] <= lo[a]) return;
  }
  const Eigen::Index s0 = g.stride(0), s1 = g.stride(1);
  const Eigen::Index shift = off[0] * s0 + off[1] * s1 + off[2];
  if (g.dims[1] == 1 && g.dims[2] == 1) {  // 1D: axis 0 has stride 1
    const Scalar* sp = src + lo[0] + shift;
    Scalar* dp = dst + lo[0];
    const Eigen::Index len = hi[0] - lo[0];
    for (Eigen::Index t = 0; t < len; ++t) dp[t] += f * sp[t];
    return;
  }
  if (g.dims[2] == 1) {  // 2D: axis 1 has stride 1
    const Eigen::Index len = hi[1] - lo[1];
    for (Eigen::Index i0 = lo[0]; i0 < hi[0]; ++i0) {
      const Eigen::Index base = i0 * s0 + lo[1];
      const Scalar* sp = src + base + shift;
      Scalar* dp = dst + base;
      for (Eigen::Index t = 0; t < len; ++t) dp[t] += f * sp[t];
    }
    return;
  }
  const Eigen::Index len = hi[2] - lo[2];
  for (Eigen::Index i0 = lo[0]; i0 < hi[0]; ++i0) {
    for (Eigen::Index i1 = lo[1]; i1 < hi[1]; ++i1) {
      const Eigen::Index base = i0 * s0 + i1 * s1 + lo[2];
      const Scalar* sp = src + base + shift;
      Scalar* dp = dst + base;
      for (Eigen::Index t = 0; t < len; ++t) dp[t] += f * sp[t];
    }
  }
}

// sum over valid x of a[x] * b[x + off]; same domain as shifted_axpy.
template <typename Scalar>
Scalar shifted_dot(const GridSpec& g, const Scalar* a, const Scalar* b,
                   const std::array<int, 3>& off) {
  std::array<Eigen::Index, 3> lo, hi;
  for (int ax = 0; ax < 3; ++ax) {
    lo[ax] = std::max<Eigen::Index>(0, -off[ax]);
    hi[ax] = std::min<Eigen::Index>(g.dims[ax], g.dims[ax] - off[ax]);
    if (hi[ax] <= lo[ax]) return Scalar(0);
  }
  const Eigen::Index s0 = g.stride(0), s1 = g.stride(1);
  const Eigen::Index shift = off[0] * s0 + off[1] * s1 + off[2];
  Scalar acc = 0;
  if (g.dims[1] == 1 && g.dims[2] == 1) {
    const Scalar* ap = a + lo[0];
    const Scalar* bp = b + lo[0] + shift;
    const Eigen::Index len = hi[0] - lo[0];
    for (Eigen::Index t = 0; t < len; ++t) acc += ap[t] * bp[t];
    return acc;
  }
  if (g.dims[2] == 1) {
    const Eigen::Index len = hi[1] - lo[1];
    for (Eigen::Index i0 = lo[0]; i0 < hi[0]; ++i0) {
      const Eigen::Index base = i0 * s0 + lo[1];
      const Scalar* ap = a + base;
      const Scalar* bp = b + base + shift;
      for (Eigen::Index t = 0; t < len; ++t) acc += ap[t] * bp[t];
    }
    return acc;
  }
  const Eigen::Index len = hi[2] - lo[2];
  for (Eigen::Index i0 = lo[0]; i0 < hi[0]; ++i0) {
    for (Eigen::Index i1 = lo[1]; i1 < hi[1]; ++i1) {
      const Eigen::Index base = i0 * s0 + i1 * s1 + lo[2];
      const Scalar* ap = a + base;
      const Scalar* bp = b + base + shift;
      for (Eigen::Index t = 0; t < len; ++t) acc += ap[t] * bp[t];
    }
  }
  return acc;
}

}  // namespace detail

enum class StencilKind { FirstDerivative, SecondDerivative, Custom };

// One discrete differential operator D as a small convolution kernel.
// Coefficients are unscaled: the 1/dx^order factor is applied at assembly so
// a single stencil serves every resolution. Taps are kept sorted by offset
// (lexicographic) so application order is deterministic.
template <typename Scalar>
struct StencilT {
  struct Tap {
    std::array<int, 3> off{0, 0, 0};
    Scalar c = 0;
  };

  int ndim = 1;
  int axis = 0;  // axis whose spacing power divides the term at assembly
  int order = 0; // p: exponent of the spacing
  StencilKind kind = StencilKind::Custom;
  std::vector<Tap> taps;

  static StencilT custom(int ndim, int axis, int order, std::vector<Tap> taps) {
    StencilT s;
    s.ndim = ndim;
    s.axis = axis;
    s.order = order;
    s.kind = StencilKind::Custom;
    s.taps = std::move(taps);
    s.normalize();
    return s;
  }

  void normalize() {
    check(ndim >= 1 && ndim <= 3, "Stencil: ndim must be 1..3");
    check(axis >= 0 && axis < ndim, "Stencil: axis out of range");
    for (auto& t : taps) {
      for (int a = ndim; a < 3; ++a)
        check(t.off[a] == 0, "Stencil: tap offset beyond ndim");
      check(std::isfinite(double(t.c)), "Stencil: non-finite coefficient");
    }
    std::sort(taps.begin(), taps.end(),
              [](const Tap& a, const Tap& b) { return a.off < b.off; });
    for (size_t i = 1; i < taps.size(); ++i)
      check(taps[i - 1].off != taps[i].off, "Stencil: duplicate tap offset");
  }
};

using Stencil = StencilT<double>;

// Standard 3-point central kernels, pure coefficients (no spacing).
template <typename Scalar = double>
StencilT<Scalar> make_central(StencilKind kind, int axis, int ndim) {
  check(axis >= 0 && axis < ndim, "make_central: axis out of range");
  StencilT<Scalar> s;
  s.ndim = ndim;
  s.axis = axis;
  s.kind = kind;
  auto at = [&](int o, Scalar c) {
    typename StencilT<Scalar>::Tap t;
    t.off[axis] = o;
    t.c = c;
    return t;
  };
  if (kind == StencilKind::FirstDerivative) {
    s.order = 1;
    s.taps = {at(-1, Scalar(-0.5)), at(+1, Scalar(0.5))};
  } else if (kind == StencilKind::SecondDerivative) {
    s.order = 2;
    s.taps = {at(-1, Scalar(1)), at(0, Scalar(-2)), at(+1, Scalar(1))};
  } else {
    throw Error("make_central: unsupported kind");
  }
  s.normalize();
  return s;
}

// out[x] = sum_taps c * u[x + off], zero extension at the array edge. This is
// multiplication by the Toeplitz matrix of the kernel with Dirichlet-style
// truncation; boundary values enter only through the projection step.
template <typename Scalar>
FieldT<Scalar> apply(const StencilT<Scalar>& s, const FieldT<Scalar>& u) {
  check(s.ndim == u.grid.ndim, "stencil apply: dimension mismatch");
  FieldT<Scalar> out(u.grid);
  for (const auto& t : s.taps)
    detail::shifted_axpy(u.grid, u.data.data(), out.data.data(), t.off, t.c);
  return out;
}

// Adjoint of apply under the Euclidean inner product: all offsets negated.
template <typename Scalar>
FieldT<Scalar> adjoint_apply(const StencilT<Scalar>& s, const FieldT<Scalar>& u) {
  check(s.ndim == u.grid.ndim, "stencil adjoint: dimension mismatch");
  FieldT<Scalar> out(u.grid);
  for (const auto& t : s.taps) {
    std::array<int, 3> neg{-t.off[0], -t.off[1], -t.off[2]};
    detail::shifted_axpy(u.grid, u.data.data(), out.data.data(), neg, t.c);
  }
  return out;
}

template <typename Scalar>
struct CenterSplit {
  Scalar d = 0;              // coefficient at the zero offset (0 if absent)
  StencilT<Scalar> offcenter;
};

// D = d I + (D - d I): peel the zero-offset tap off.
template <typename Scalar>
CenterSplit<Scalar> split_center(const StencilT<Scalar>& s) {
  CenterSplit<Scalar> r;
  r.offcenter = s;
  r.offcenter.taps.clear();
  for (const auto& t : s.taps) {
    if (t.off == std::array<int, 3>{0, 0, 0})
      r.d = t.c;
    else
      r.offcenter.taps.push_back(t);
  }
  return r;
}

// Kernel L1 bound sum_{k != 0} |c_k|; dominates the 2-norm of the
// zero-extended off-center Toeplitz operator.
template <typename Scalar>
Scalar l1_offcenter_norm(const StencilT<Scalar>& s) {
  Scalar acc = 0;
  for (const auto& t : s.taps)
    if (t.off != std::array<int, 3>{0, 0, 0}) acc += std::abs(t.c);
  return acc;
}

}  // namespace npde
