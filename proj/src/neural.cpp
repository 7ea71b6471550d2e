#include "npde/neural.hpp"

#include "npde/rng.hpp"

namespace npde {

Eigen::ArrayXXd conv_layer_apply(const GridSpec& grid, const ConvLayer& layer,
                                 const Eigen::ArrayXXd& in) {
  const Eigen::Index n = grid.total();
  const Eigen::Index K = layer.taps(grid.ndim);
  check(in.rows() == n && in.cols() == layer.in_ch, "conv: shape mismatch");
  check(layer.w.size() == Eigen::Index(layer.out_ch) * layer.in_ch * K,
        "conv: weight count mismatch");
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(n, layer.out_ch);
  for (int o = 0; o < layer.out_ch; ++o) {
    double* dst = out.col(o).data();
    for (int i = 0; i < layer.in_ch; ++i) {
      const double* src = in.col(i).data();
      const Eigen::Index base = (Eigen::Index(o) * layer.in_ch + i) * K;
      for (Eigen::Index k = 0; k < K; ++k) {
        const double wk = layer.w[base + k];
        if (wk == 0.0) continue;
        detail::shifted_axpy(grid, src, dst, kernel_offset(int(k), grid.ndim), wk);
      }
    }
  }
  return out;
}

Field h_apply(const HStack& h, const Field& w) {
  check(h.ndim == w.grid.ndim, "h_apply: dimension mismatch");
  Eigen::ArrayXXd x(w.data.size(), 1);
  x.col(0) = w.data;
  for (int l = 0; l < 3; ++l) x = conv_layer_apply(w.grid, h.layers[l], x);
  return Field(w.grid, x.col(0).eval());
}

NeuralIterator make_neural_iterator(const PdeProblem& p, const Field& u_t,
                                    std::vector<HStack> stacks) {
  check_stacks_against(stacks, p);
  NeuralIterator it;
  it.assembly = assemble(p, u_t);
  it.stacks = std::move(stacks);
  return it;
}

void check_stacks_against(const std::vector<HStack>& stacks, const PdeProblem& p) {
  check(stacks.size() == p.terms.size(),
        "neural iterator: one H stack per term required");
  for (const auto& h : stacks)
    check(h.ndim == p.grid.ndim, "neural iterator: stack ndim mismatch");
}

Field phi_step(const NeuralIterator& it, const Field& u) {
  const auto& a = it.assembly;
  check(u.grid == a.grid, "phi_step: grid mismatch");
  Field psi = psi_step(a, u);
  if (it.stacks.empty()) return psi;
  Field w(u.grid, (psi.data - u.data).eval());
  Eigen::ArrayXd corr;
  for (size_t i = 0; i < it.stacks.size(); ++i) {
    Field hi = h_apply(it.stacks[i], w);
    Eigen::ArrayXd ci = (a.lambdas[i].data * hi.data).eval();
    if (i == 0)
      corr = std::move(ci);
    else
      corr += ci;
  }
  return Field(u.grid, (psi.data + a.mask.data * corr).eval());
}

Field linear_part(const NeuralIterator& it, const Field& u) {
  Field phi0 = phi_step(it, Field(it.assembly.grid));
  Field phiu = phi_step(it, u);
  return Field(u.grid, (phiu.data - phi0.data).eval());
}

std::vector<HStack> init_params(int ndim, int n_stacks, const InitConfig& cfg) {
  check(cfg.channels >= 1, "init_params: channels must be >= 1");
  Rng rng(cfg.seed);
  Eigen::Index K = 1;
  for (int a = 0; a < ndim; ++a) K *= 3;
  std::vector<HStack> stacks(n_stacks);
  for (auto& h : stacks) {
    h.ndim = ndim;
    h.channels = cfg.channels;
    const int C = cfg.channels;
    h.layers[0] = {1, C, Eigen::ArrayXd::Zero(Eigen::Index(C) * 1 * K)};
    h.layers[1] = {C, C, Eigen::ArrayXd::Zero(Eigen::Index(C) * C * K)};
    h.layers[2] = {C, 1, Eigen::ArrayXd::Zero(Eigen::Index(1) * C * K)};
    for (int l = 0; l < 2; ++l)
      for (Eigen::Index j = 0; j < h.layers[l].w.size(); ++j)
        h.layers[l].w[j] = rng.uniform(-0.05, 0.05);
    // layer 3 stays zero: the fresh Phi_H is exactly Psi
  }
  return stacks;
}

HStack offcenter_as_h(const Stencil& s, int channels) {
  check(channels >= 1, "offcenter_as_h: channels must be >= 1");
  auto split = split_center(s);
  Eigen::Index K = 1;
  for (int a = 0; a < s.ndim; ++a) K *= 3;
  HStack h;
  h.ndim = s.ndim;
  h.channels = channels;
  const int C = channels;
  h.layers[0] = {1, C, Eigen::ArrayXd::Zero(Eigen::Index(C) * 1 * K)};
  h.layers[1] = {C, C, Eigen::ArrayXd::Zero(Eigen::Index(C) * C * K)};
  h.layers[2] = {C, 1, Eigen::ArrayXd::Zero(Eigen::Index(1) * C * K)};
  for (const auto& t : split.offcenter.taps) {
    int k = 0;
    for (int a = 0; a < s.ndim; ++a) {
      check(t.off[a] >= -1 && t.off[a] <= 1, "offcenter_as_h: taps outside the 3-kernel");
      k = k * 3 + (t.off[a] + 1);
    }
    h.layers[0].w[k] = t.c;  // out channel 0, in channel 0
  }
  const int kc = kernel_center(s.ndim);
  for (int c = 0; c < C; ++c)
    h.layers[1].w[(Eigen::Index(c) * C + c) * K + kc] = 1.0;
  h.layers[2].w[Eigen::Index(0) * C * K + 0 * K + kc] = 1.0;  // pass channel 0
  return h;
}

std::vector<Field> rollout_phi(const PdeProblem& p, const std::vector<HStack>& stacks,
                               const Field& u0, int steps, int m_iters) {
  check(steps >= 1 && m_iters >= 1, "rollout_phi: steps and iterations must be >= 1");
  std::vector<Field> out;
  out.reserve(steps);
  Field u_t = u0;
  for (int t = 0; t < steps; ++t) {
    NeuralIterator it = make_neural_iterator(p, u_t, stacks);
    Field u = project(p.mask, u_t, p.boundary);
    for (int k = 0; k < m_iters; ++k) {
      u = phi_step(it, u);
      if (linf_norm(u) > kDivergenceGuard)
        throw Error("rollout_phi: divergence, |u| exceeded 1e12");
    }
    u_t = u;
    out.push_back(u_t);
  }
  return out;
}

}  // namespace npde
