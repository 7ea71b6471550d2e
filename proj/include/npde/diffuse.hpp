#pragma once

#include <optional>

#include "npde/problem.hpp"

namespace npde {

// Phase field: 1 inside the physical domain, 0 outside, smooth in between.
// Nodes with phi <= eps_phi are excluded from the iteration (Dirichlet 0).
struct PhaseField {
  Field phi;
  double eps_phi = 1e-3;
};

// White/gray matter fractions with per-tissue infiltration rates.
struct TissueMap {
  Field p_w;
  Field p_g;
};

// phi = p_w + p_g, clipped to [0, 1].
PhaseField build_phase_field(const TissueMap& tissue, double eps_phi = 1e-3);

// Binary-mask path: k passes of the separable (1/4, 1/2, 1/4) neighbor
// average per axis, zero-extended, then clipped.
PhaseField build_phase_field(const Field& binary_mask, int smoothing_passes,
                             double eps_phi = 1e-3);

BoundaryMask mask_of(const PhaseField& phase);

struct DiffuseOptions {
  // Flux correction term: the literal form uses (d phi / d axis) / phi as the
  // first-derivative coefficient; the standard diffuse-domain expansion of
  // div(phi kappa grad u) uses kappa (d phi / d axis) / phi instead.
  bool literal_flux = true;
};

struct DiffuseTerms {
  std::vector<PdeTerm> terms;  // per axis: second-derivative, then first-derivative
  Field extra_source;          // b |grad phi| / phi (zero when b absent)
  BoundaryMask mask;
};

// Converts the phase-field problem to canonical sum_i a_i D_i form by
// dividing the right side by max(phi, eps) on interior nodes. Where phi == 1
// in a full stencil neighborhood the original coefficients come back exactly.
DiffuseTerms diffuse_terms(const PhaseField& phase, const Field& kappa,
                           const std::optional<Field>& b,
                           const DiffuseOptions& opt = {});

// Explicit IMEX reaction r(u) = rho u (1 - u), evaluated at u_t and folded
// into the iterator constant by assemble().
Field imex_source(const Field& u_t, double rho);
Field imex_source(const Field& u_t, const Field& rho);

struct PhantomOptions {
  double tau = 0.2;         // tissue fraction below this is truncated to 0
  double decay_cells = 2.0; // e-folding length of the bump shoulder, in cells
  double cap = 0.97;        // pointwise ceiling for p_w + p_g
};

// Deterministic synthetic stand-in for tissue maps: 3-6 ellipsoidal bumps
// with plateau cores and exponential shoulders, truncated at tau and zeroed
// on the two outermost layers. The exponential shoulder keeps |grad phi|/phi
// bounded, which the semi-implicit iterator needs at large dt.
TissueMap phantom3d(uint64_t seed, const GridSpec& grid, const PhantomOptions& opt = {});

}  // namespace npde
