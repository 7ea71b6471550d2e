#pragma once

#include <string>
#include <vector>

#include "npde/tape.hpp"

namespace npde {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  int m_min = 5;   // iteration count drawn per (sample, epoch)
  int m_max = 10;
  int steps = 10;  // time steps per rollout
  int epochs = 20;
  uint64_t seed = 0;
  int channels = 8;
  bool truncate_bptt = false;
};

struct AdamState {
  std::vector<HStack> m, v;
  long step = 0;
};

AdamState make_adam_state(const std::vector<HStack>& params);

// Standard bias-corrected Adam update, elementwise over every layer.
void adam_step(AdamState& state, std::vector<HStack>& params, const StackGrads& grads,
               const TrainConfig& cfg);

struct TrainSample {
  int id = 0;
  PdeProblem problem;
  Field u0;
  std::vector<Field> refs;  // u*_1 .. u*_T, chained converged references
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_grad_norm = 0.0;
  int samples_skipped = 0;
};

struct TrainResult {
  std::vector<HStack> stacks;
  std::vector<EpochStats> history;
};

// Per-sample updates (batch size 1) over shuffled, seeded epochs. Samples
// whose rollout diverges are skipped and logged; more than 10% skips in an
// epoch aborts the run.
TrainResult train(const std::vector<TrainSample>& samples, const TrainConfig& cfg);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

struct GradcheckReport {
  double max_rel_err = 0.0;
  int coords_checked = 0;
  double loss = 0.0;
  bool pass = false;  // max_rel_err <= 1e-6
};

// Central finite differences (h = 1e-6 max(1, |w|)) against backward() over
// a seeded set of weight coordinates; relative error is measured against
// max(1, |g_analytic|, |g_fd|).
GradcheckReport gradcheck(const PdeProblem& p, const Field& u0,
                          const std::vector<Field>& refs, std::vector<HStack> stacks,
                          int steps, int m_iters, int n_coords, uint64_t seed);

}  // namespace npde
