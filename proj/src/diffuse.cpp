#include "npde/diffuse.hpp"

#include <cmath>

#include "npde/rng.hpp"

namespace npde {

PhaseField build_phase_field(const TissueMap& tissue, double eps_phi) {
  check(tissue.p_w.grid == tissue.p_g.grid, "phase field: tissue grid mismatch");
  check((tissue.p_w.data >= 0.0).all() && (tissue.p_g.data >= 0.0).all() &&
            (tissue.p_w.data <= 1.0).all() && (tissue.p_g.data <= 1.0).all(),
        "phase field: tissue fractions out of [0, 1]");
  PhaseField pf;
  pf.eps_phi = eps_phi;
  pf.phi = Field(tissue.p_w.grid,
                 (tissue.p_w.data + tissue.p_g.data).cwiseMin(1.0).cwiseMax(0.0).eval());
  return pf;
}

PhaseField build_phase_field(const Field& binary_mask, int smoothing_passes,
                             double eps_phi) {
  check((binary_mask.data >= 0.0).all() && (binary_mask.data <= 1.0).all(),
        "phase field: mask values out of [0, 1]");
  check(smoothing_passes >= 0, "phase field: negative smoothing width");
  Field phi = binary_mask;
  for (int pass = 0; pass < smoothing_passes; ++pass) {
    for (int axis = 0; axis < phi.grid.ndim; ++axis) {
      Field next(phi.grid);
      std::array<int, 3> off{0, 0, 0};
      detail::shifted_axpy(phi.grid, phi.data.data(), next.data.data(), off, 0.5);
      off[axis] = -1;
      detail::shifted_axpy(phi.grid, phi.data.data(), next.data.data(), off, 0.25);
      off[axis] = +1;
      detail::shifted_axpy(phi.grid, phi.data.data(), next.data.data(), off, 0.25);
      phi = std::move(next);
    }
  }
  phi.data = phi.data.cwiseMin(1.0).cwiseMax(0.0);
  PhaseField pf;
  pf.phi = std::move(phi);
  pf.eps_phi = eps_phi;
  return pf;
}

BoundaryMask mask_of(const PhaseField& phase) {
  Eigen::ArrayXd m = (phase.phi.data > phase.eps_phi).cast<double>();
  return BoundaryMask(phase.phi.grid, std::move(m));
}

DiffuseTerms diffuse_terms(const PhaseField& phase, const Field& kappa,
                           const std::optional<Field>& b, const DiffuseOptions& opt) {
  const GridSpec& g = phase.phi.grid;
  check(kappa.grid == g, "diffuse_terms: kappa grid mismatch");
  if (b) check(b->grid == g, "diffuse_terms: boundary data grid mismatch");

  DiffuseTerms out;
  out.mask = mask_of(phase);
  check(out.mask.interior_count() > 0, "diffuse_terms: empty interior");

  const Eigen::ArrayXd interior = out.mask.data;
  const Eigen::ArrayXd safe_phi = phase.phi.data.cwiseMax(phase.eps_phi);

  std::vector<Eigen::ArrayXd> dphi(g.ndim), dkappa(g.ndim);
  for (int a = 0; a < g.ndim; ++a) {
    Stencil d1 = make_central(StencilKind::FirstDerivative, a, g.ndim);
    dphi[a] = apply(d1, phase.phi).data / g.spacing[a];
    dkappa[a] = apply(d1, kappa).data / g.spacing[a];
  }

  for (int a = 0; a < g.ndim; ++a) {
    PdeTerm diff;
    diff.stencil = make_central(StencilKind::SecondDerivative, a, g.ndim);
    diff.coeff = Field(g, (interior * kappa.data).eval());
    out.terms.push_back(std::move(diff));
  }
  for (int a = 0; a < g.ndim; ++a) {
    PdeTerm adv;
    adv.stencil = make_central(StencilKind::FirstDerivative, a, g.ndim);
    Eigen::ArrayXd flux = opt.literal_flux ? (dphi[a] / safe_phi).eval()
                                           : (kappa.data * dphi[a] / safe_phi).eval();
    adv.coeff = Field(g, (interior * (dkappa[a] + flux)).eval());
    out.terms.push_back(std::move(adv));
  }

  if (b) {
    Eigen::ArrayXd grad_norm_sq = Eigen::ArrayXd::Zero(g.total());
    for (int a = 0; a < g.ndim; ++a) grad_norm_sq += dphi[a].square();
    out.extra_source =
        Field(g, (interior * b->data * grad_norm_sq.sqrt() / safe_phi).eval());
  } else {
    out.extra_source = Field(g);
  }
  return out;
}

Field imex_source(const Field& u_t, double rho) {
  check(u_t.finite(), "imex_source: non-finite state");
  return Field(u_t.grid, logistic_term(Eigen::ArrayXd::Constant(u_t.size(), rho),
                                       u_t.data));
}

Field imex_source(const Field& u_t, const Field& rho) {
  check(u_t.grid == rho.grid, "imex_source: rho grid mismatch");
  check(u_t.finite(), "imex_source: non-finite state");
  return Field(u_t.grid, logistic_term(rho.data, u_t.data));
}

namespace {

struct Bump {
  std::array<double, 3> center;    // node coordinates
  std::array<double, 3> semiaxis;  // node units
  double amplitude;
};

// Plateau core (q <= 1) with exponential shoulder; |grad log| is bounded by
// 1/decay so the diffuse-domain advection coefficients stay iterable.
double bump_value(const Bump& b, const std::array<int, 3>& c, int ndim,
                  double decay_q) {
  double q2 = 0.0;
  for (int a = 0; a < ndim; ++a) {
    const double r = (double(c[a]) - b.center[a]) / b.semiaxis[a];
    q2 += r * r;
  }
  const double q = std::sqrt(q2);
  if (q <= 1.0) return b.amplitude;
  return b.amplitude * std::exp(-(q - 1.0) / decay_q);
}

}  // namespace

TissueMap phantom3d(uint64_t seed, const GridSpec& grid, const PhantomOptions& opt) {
  check(grid.ndim == 3, "phantom3d: grid must be 3-dimensional");
  for (int a = 0; a < 3; ++a)
    check(grid.dims[a] >= 17, "phantom3d: dims must be >= 17 per axis");

  Rng rng(mix_seed(seed, 0x3d));
  const int n_w = rng.uniform_int(2, 4);
  const int n_g = rng.uniform_int(1, 2);

  auto draw_bumps = [&](int count, double amp_lo, double amp_hi) {
    std::vector<Bump> bumps;
    for (int i = 0; i < count; ++i) {
      Bump b;
      for (int a = 0; a < 3; ++a) {
        const double margin = 0.3 * grid.dims[a];
        b.center[a] = rng.uniform(margin, grid.dims[a] - 1 - margin);
        b.semiaxis[a] = rng.uniform(0.08, 0.15) * grid.dims[a];
      }
      b.amplitude = rng.uniform(amp_lo, amp_hi);
      bumps.push_back(b);
    }
    return bumps;
  };
  const std::vector<Bump> bumps_w = draw_bumps(n_w, 0.55, 0.9);
  const std::vector<Bump> bumps_g = draw_bumps(n_g, 0.3, 0.6);

  TissueMap tm;
  tm.p_w = Field(grid);
  tm.p_g = Field(grid);

  for (Eigen::Index i = 0; i < grid.total(); ++i) {
    const auto c = grid.coords(i);
    bool face = false;
    for (int a = 0; a < 3; ++a)
      face |= (c[a] < 2 || c[a] > grid.dims[a] - 3);
    if (face) continue;
    double pw = 0.0, pg = 0.0;
    for (const auto& b : bumps_w) {
      const double decay_q = opt.decay_cells / ((b.semiaxis[0] + b.semiaxis[1] + b.semiaxis[2]) / 3.0);
      pw += bump_value(b, c, 3, decay_q);
    }
    for (const auto& b : bumps_g) {
      const double decay_q = opt.decay_cells / ((b.semiaxis[0] + b.semiaxis[1] + b.semiaxis[2]) / 3.0);
      pg += bump_value(b, c, 3, decay_q);
    }
    const double tot = pw + pg;
    if (tot > opt.cap) {
      pw *= opt.cap / tot;
      pg *= opt.cap / tot;
    }
    if (pw + pg < opt.tau) continue;  // truncate the far shoulder to exact 0
    tm.p_w[i] = pw;
    tm.p_g[i] = pg;
  }
  return tm;
}

}  // namespace npde
