#pragma once

#include <cstdint>
#include <vector>

#include "npde/neural.hpp"

namespace npde {

// Reverse-mode tape over the solver's op vocabulary. The rollout recorder
// emits a flat op list; values are retained only at window boundaries
// (iteration inputs, the per-step constant, leaves and trajectory outputs)
// and each window is re-executed forward during the backward sweep. That
// keeps memory at a few fields per iteration instead of every conv
// intermediate, at the cost of one extra forward pass.
//
// Ops only ever read slots defined in the same window or at a boundary, so
// window-local recomputation is self-contained.

enum class OpKind : uint8_t {
  StencilApply,      // out = kernel * in, zero extension; fixed kernel
  PointwiseMul,      // out = field .* in; fixed field
  LearnableConv,     // out = conv layer (stack, layer id); weights learnable
  Add,               // out = a + b
  Scale,             // out = factor * a
  MaskProject,       // out = mask .* in + (1 - mask) .* boundary
  LogisticReaction,  // out = rho .* in .* (1 - in)
};

struct OpRecord {
  OpKind kind;
  int32_t a = -1;
  int32_t b = -1;
  int32_t out = -1;
  int32_t param = -1;
  double factor = 0.0;
};

struct ConvBinding {
  int32_t stack = 0;
  int32_t layer = 0;
};

struct Window {
  int32_t lo = 0, hi = 0;  // op index range [lo, hi)
};

struct StepRecord {
  Window assembly;                // ctilde ops (may be empty when lo == hi)
  std::vector<Window> iterations; // one window per Phi iteration
  int32_t input_slot = -1;        // u_t entering the step
  int32_t output_slot = -1;       // u after the step's m iterations
};

struct AdjointTape {
  GridSpec grid;
  std::vector<OpRecord> ops;
  std::vector<int32_t> slot_channels;
  std::vector<Eigen::ArrayXXd> saved;  // boundary/leaf/trajectory slot values

  std::vector<Stencil> kernels;
  std::vector<Eigen::ArrayXd> fields;  // PointwiseMul fields and reaction rho
  struct Projection {
    Eigen::ArrayXd mask, boundary;
  };
  std::vector<Projection> projections;
  std::vector<ConvBinding> conv_bindings;

  std::vector<StepRecord> steps;
  std::vector<int32_t> trajectory_slots;
  int32_t u0_slot = 0;
  bool truncate_bptt = false;

  int32_t n_slots() const { return int32_t(slot_channels.size()); }
};

struct RolloutRecord {
  std::vector<Field> trajectory;
  AdjointTape tape;
};

// Runs `steps` time steps of `m_iters` phi iterations each, recording every
// op. Forward values match the untaped rollout_phi path exactly.
RolloutRecord record_rollout(const PdeProblem& p, const std::vector<HStack>& stacks,
                             const Field& u0, int steps, int m_iters,
                             bool truncate_bptt = false);

// Re-executes the tape from its leaves; reproduces the recorded trajectory
// bit for bit.
std::vector<Field> replay(const AdjointTape& tape, const std::vector<HStack>& stacks);

// (1/T) sum_t mean squared error between trajectory and reference.
double rollout_loss(const std::vector<Field>& traj, const std::vector<Field>& ref);

using StackGrads = std::vector<HStack>;

StackGrads zero_grads(const std::vector<HStack>& stacks);

// dLoss/dWeights through the full unrolled rollout, including ctilde's
// dependence on u_t across time steps. `stacks` must be the weights the tape
// was recorded with.
StackGrads backward(const AdjointTape& tape, const std::vector<HStack>& stacks,
                    const std::vector<Field>& traj, const std::vector<Field>& ref);

// Runs one recorded op forward at the given inputs and pulls a cotangent
// back through it; exposes the production adjoint rules for the per-op
// inner-product identity tests.
struct OpProbe {
  Eigen::ArrayXXd output;
  Eigen::ArrayXXd a_cotangent;
  Eigen::ArrayXXd b_cotangent;
  StackGrads weight_grads;
};
OpProbe probe_op(const AdjointTape& tape, const std::vector<HStack>& stacks,
                 int32_t op_index, const Eigen::ArrayXXd& a_value,
                 const Eigen::ArrayXXd& b_value, const Eigen::ArrayXXd& out_cotangent);

}  // namespace npde
