#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "npde/semi_implicit.hpp"

namespace npde {

// One bias-free convolution layer, kernel side 3 per axis. Weights are flat
// in (out_channel, in_channel, tap) order with taps enumerated row-major over
// the ndim kernel axes, last axis fastest (offsets -1, 0, +1 per axis).
struct ConvLayer {
  int in_ch = 1;
  int out_ch = 1;
  Eigen::ArrayXd w;  // size out_ch * in_ch * 3^ndim

  Eigen::Index taps(int ndim) const {
    Eigen::Index k = 1;
    for (int a = 0; a < ndim; ++a) k *= 3;
    return k;
  }
};

// Three chained bias-free, activation-free convolutions (1 -> C -> C -> 1):
// a linear operator by construction, so H 0 = 0 holds exactly.
struct HStack {
  int ndim = 1;
  int channels = 1;
  std::array<ConvLayer, 3> layers;
};

inline std::array<int, 3> kernel_offset(int k, int ndim) {
  std::array<int, 3> off{0, 0, 0};
  for (int a = ndim - 1; a >= 0; --a) {
    off[a] = k % 3 - 1;
    k /= 3;
  }
  return off;
}

inline int kernel_center(int ndim) {
  int k = 1;
  for (int a = 0; a < ndim; ++a) k *= 3;
  return (k - 1) / 2;
}

// Multi-channel zero-padded convolution; columns are channels.
Eigen::ArrayXXd conv_layer_apply(const GridSpec& grid, const ConvLayer& layer,
                                 const Eigen::ArrayXXd& in);

Field h_apply(const HStack& h, const Field& w);

// The learnable iterator: shares the assembly with psi and adds one H stack
// per term.
struct NeuralIterator {
  IteratorAssembly assembly;
  std::vector<HStack> stacks;
};

NeuralIterator make_neural_iterator(const PdeProblem& p, const Field& u_t,
                                    std::vector<HStack> stacks);

// One stack per term with matching dimensionality.
void check_stacks_against(const std::vector<HStack>& stacks, const PdeProblem& p);

// Phi_H(u) = Psi(u) + G sum_i lambda_i (H_i w), w = Psi(u) - u. Affine in u,
// same fixed point as Psi for any linear H.
Field phi_step(const NeuralIterator& it, const Field& u);

// L' u extracted as Phi(u) - Phi(0).
Field linear_part(const NeuralIterator& it, const Field& u);

struct InitConfig {
  int channels = 8;
  uint64_t seed = 0;
};

// Layers 1-2 small uniform in [-0.05, 0.05], layer 3 all zeros, so the fresh
// iterator starts exactly equal to Psi.
std::vector<HStack> init_params(int ndim, int n_stacks, const InitConfig& cfg);

// Embeds an off-center kernel as an H stack (layer 1 carries the kernel into
// channel 0, layers 2-3 are delta kernels); with one per term, Phi equals two
// iterations of Psi.
HStack offcenter_as_h(const Stencil& s, int channels);

// Chained neural time stepping with m iterations per step (inference path).
std::vector<Field> rollout_phi(const PdeProblem& p, const std::vector<HStack>& stacks,
                               const Field& u0, int steps, int m_iters);

}  // namespace npde
