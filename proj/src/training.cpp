#include "npde/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "npde/rng.hpp"

namespace npde {

AdamState make_adam_state(const std::vector<HStack>& params) {
  AdamState s;
  s.m = zero_grads(params);
  s.v = zero_grads(params);
  s.step = 0;
  return s;
}

void adam_step(AdamState& state, std::vector<HStack>& params, const StackGrads& grads,
               const TrainConfig& cfg) {
  check(params.size() == grads.size(), "adam_step: shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (size_t s = 0; s < params.size(); ++s) {
    for (int l = 0; l < 3; ++l) {
      auto& w = params[s].layers[l].w;
      auto& m = state.m[s].layers[l].w;
      auto& v = state.v[s].layers[l].w;
      const auto& g = grads[s].layers[l].w;
      check(w.size() == g.size(), "adam_step: gradient shape mismatch");
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
      w -= cfg.lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
    }
  }
}

namespace {

double grad_norm(const StackGrads& g) {
  double acc = 0.0;
  for (const auto& h : g)
    for (const auto& l : h.layers) acc += l.w.square().sum();
  return std::sqrt(acc);
}

}  // namespace

TrainResult train(const std::vector<TrainSample>& samples, const TrainConfig& cfg) {
  check(!samples.empty(), "train: no samples");
  check(cfg.m_min >= 1 && cfg.m_min <= cfg.m_max, "train: need 1 <= M1 <= M2");
  check(cfg.steps >= 1, "train: steps must be >= 1");
  for (const auto& s : samples)
    check(int(s.refs.size()) >= cfg.steps, "train: sample has fewer refs than steps");

  const int ndim = samples.front().problem.grid.ndim;
  const int n_stacks = int(samples.front().problem.terms.size());
  TrainResult result;
  result.stacks = init_params(ndim, n_stacks, {cfg.channels, cfg.seed});
  AdamState adam = make_adam_state(result.stacks);
  Rng rng(mix_seed(cfg.seed, 0x7e57));

  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), size_t(0));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    EpochStats stats;
    stats.epoch = epoch;
    int used = 0;
    for (size_t idx : order) {
      const TrainSample& sample = samples[idx];
      const int m = rng.uniform_int(cfg.m_min, cfg.m_max);
      try {
        RolloutRecord rec = record_rollout(sample.problem, result.stacks, sample.u0,
                                           cfg.steps, m, cfg.truncate_bptt);
        std::vector<Field> ref(sample.refs.begin(), sample.refs.begin() + cfg.steps);
        const double l = rollout_loss(rec.trajectory, ref);
        StackGrads g = backward(rec.tape, result.stacks, rec.trajectory, ref);
        stats.mean_loss += l;
        stats.mean_grad_norm += grad_norm(g);
        ++used;
        adam_step(adam, result.stacks, g, cfg);
      } catch (const Error&) {
        ++stats.samples_skipped;
      }
    }
    if (used > 0) {
      stats.mean_loss /= used;
      stats.mean_grad_norm /= used;
    }
    result.history.push_back(stats);
    if (stats.samples_skipped * 10 > int(samples.size())) {
      std::ostringstream os;
      os << "train: " << stats.samples_skipped << "/" << samples.size()
         << " samples diverged in epoch " << epoch;
      throw Error(os.str());
    }
  }
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream f(path);
  check(f.good(), "write_history_csv: cannot open " + path);
  f << "epoch,mean_loss,mean_grad_norm,samples_skipped\n";
  f.precision(17);
  for (const auto& e : history)
    f << e.epoch << "," << e.mean_loss << "," << e.mean_grad_norm << ","
      << e.samples_skipped << "\n";
  check(f.good(), "write_history_csv: write failed");
}

GradcheckReport gradcheck(const PdeProblem& p, const Field& u0,
                          const std::vector<Field>& refs, std::vector<HStack> stacks,
                          int steps, int m_iters, int n_coords, uint64_t seed) {
  check(int(refs.size()) >= steps, "gradcheck: refs shorter than steps");
  std::vector<Field> ref(refs.begin(), refs.begin() + steps);

  RolloutRecord rec = record_rollout(p, stacks, u0, steps, m_iters);
  GradcheckReport rep;
  rep.loss = rollout_loss(rec.trajectory, ref);
  StackGrads analytic = backward(rec.tape, stacks, rec.trajectory, ref);

  struct Coord {
    int stack, layer;
    Eigen::Index idx;
  };
  Rng rng(mix_seed(seed, 0x6d));
  std::vector<Coord> coords;
  for (int c = 0; c < n_coords; ++c) {
    Coord co;
    co.stack = rng.uniform_int(0, int(stacks.size()) - 1);
    co.layer = rng.uniform_int(0, 2);
    co.idx = rng.uniform_int(0, int(stacks[co.stack].layers[co.layer].w.size()) - 1);
    coords.push_back(co);
  }

  auto loss_at = [&]() {
    RolloutRecord r = record_rollout(p, stacks, u0, steps, m_iters);
    return rollout_loss(r.trajectory, ref);
  };

  for (const auto& co : coords) {
    double& w = stacks[co.stack].layers[co.layer].w[co.idx];
    const double w0 = w;
    const double h = 1e-6 * std::max(1.0, std::abs(w0));
    w = w0 + h;
    const double lp = loss_at();
    w = w0 - h;
    const double lm = loss_at();
    w = w0;
    const double gfd = (lp - lm) / (2.0 * h);
    const double ga = analytic[co.stack].layers[co.layer].w[co.idx];
    const double rel = std::abs(ga - gfd) / std::max({1.0, std::abs(ga), std::abs(gfd)});
    rep.max_rel_err = std::max(rep.max_rel_err, rel);
  }
  rep.coords_checked = n_coords;
  rep.pass = rep.max_rel_err <= 1e-6;
  return rep;
}

}  // namespace npde
