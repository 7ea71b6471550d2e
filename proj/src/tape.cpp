#include "npde/tape.hpp"

#include <cmath>

namespace npde {

namespace {

Eigen::ArrayXXd exec_op(const AdjointTape& t, const std::vector<HStack>& stacks,
                        const OpRecord& op, const std::vector<Eigen::ArrayXXd>& vals) {
  const auto& in = vals[op.a];
  switch (op.kind) {
    case OpKind::StencilApply: {
      const Stencil& s = t.kernels[op.param];
      Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(in.rows(), in.cols());
      for (Eigen::Index c = 0; c < in.cols(); ++c)
        for (const auto& tap : s.taps)
          detail::shifted_axpy(t.grid, in.col(c).data(), out.col(c).data(), tap.off,
                               tap.c);
      return out;
    }
    case OpKind::PointwiseMul:
      return (in.colwise() * t.fields[op.param]).eval();
    case OpKind::LearnableConv: {
      const auto& bind = t.conv_bindings[op.param];
      return conv_layer_apply(t.grid, stacks[bind.stack].layers[bind.layer], in);
    }
    case OpKind::Add:
      return (in + vals[op.b]).eval();
    case OpKind::Scale:
      return (op.factor * in).eval();
    case OpKind::MaskProject: {
      const auto& pr = t.projections[op.param];
      Eigen::ArrayXXd out(in.rows(), in.cols());
      for (Eigen::Index c = 0; c < in.cols(); ++c)
        out.col(c) = pr.mask * in.col(c) + (1.0 - pr.mask) * pr.boundary;
      return out;
    }
    case OpKind::LogisticReaction: {
      const Eigen::ArrayXd& rho = t.fields[op.param];
      Eigen::ArrayXXd out(in.rows(), in.cols());
      for (Eigen::Index c = 0; c < in.cols(); ++c)
        out.col(c) = logistic_term(rho, in.col(c));
      return out;
    }
  }
  throw Error("tape: unknown op kind");
}

class TapeBuilder {
 public:
  TapeBuilder(const GridSpec& g, bool truncate) {
    tape_.grid = g;
    tape_.truncate_bptt = truncate;
  }

  int32_t leaf(const Eigen::ArrayXXd& value) {
    int32_t s = new_slot(int(value.cols()));
    live_[s] = value;
    save(s);
    return s;
  }

  int32_t emit(OpKind kind, int32_t a, int32_t b, int32_t param, double factor,
               int out_channels, const std::vector<HStack>& stacks) {
    OpRecord op;
    op.kind = kind;
    op.a = a;
    op.b = b;
    op.param = param;
    op.factor = factor;
    op.out = new_slot(out_channels);
    tape_.ops.push_back(op);
    live_[op.out] = exec_op(tape_, stacks, op, live_);
    return op.out;
  }

  void save(int32_t slot) {
    if (tape_.saved.size() < live_.size()) tape_.saved.resize(live_.size());
    tape_.saved[slot] = live_[slot];
  }

  int32_t window_begin() {
    window_first_slot_ = tape_.n_slots();
    return int32_t(tape_.ops.size());
  }

  // Drops window temporaries; `keep` slots stay live for the next window.
  int32_t window_end(std::initializer_list<int32_t> keep) {
    for (int32_t s = window_first_slot_; s < tape_.n_slots(); ++s) {
      bool kept = false;
      for (int32_t k : keep) kept |= (k == s);
      bool saved = size_t(s) < tape_.saved.size() && tape_.saved[s].size() > 0;
      if (!kept && !saved) live_[s].resize(0, 0);
    }
    return int32_t(tape_.ops.size());
  }

  const Eigen::ArrayXXd& value(int32_t slot) const { return live_[slot]; }

  int32_t add_kernel(const Stencil& s) {
    tape_.kernels.push_back(s);
    return int32_t(tape_.kernels.size() - 1);
  }
  int32_t add_field(const Eigen::ArrayXd& f) {
    tape_.fields.push_back(f);
    return int32_t(tape_.fields.size() - 1);
  }
  int32_t add_projection(const Eigen::ArrayXd& mask, const Eigen::ArrayXd& boundary) {
    tape_.projections.push_back({mask, boundary});
    return int32_t(tape_.projections.size() - 1);
  }
  int32_t add_conv(int stack, int layer) {
    tape_.conv_bindings.push_back({int32_t(stack), int32_t(layer)});
    return int32_t(tape_.conv_bindings.size() - 1);
  }

  AdjointTape take() {
    tape_.saved.resize(tape_.slot_channels.size());
    return std::move(tape_);
  }

 private:
  int32_t new_slot(int channels) {
    tape_.slot_channels.push_back(channels);
    live_.emplace_back();
    return int32_t(tape_.slot_channels.size() - 1);
  }

  AdjointTape tape_;
  std::vector<Eigen::ArrayXXd> live_;
  int32_t window_first_slot_ = 0;
};

}  // namespace

RolloutRecord record_rollout(const PdeProblem& p, const std::vector<HStack>& stacks,
                             const Field& u0, int steps, int m_iters,
                             bool truncate_bptt) {
  validate(p);
  check(u0.grid == p.grid, "record_rollout: u0 grid mismatch");
  check(steps >= 1 && m_iters >= 1, "record_rollout: steps and m must be >= 1");
  check(stacks.size() == p.terms.size(), "record_rollout: one H stack per term");

  IteratorAssembly core = assemble(p, u0);  // lambdas/denom do not depend on u_t
  const size_t N = p.terms.size();

  TapeBuilder b(p.grid, truncate_bptt);

  // Per-term parameter ids.
  std::vector<int32_t> k_off(N), k_full(N), f_lambda(N), f_explicit(N);
  std::vector<std::array<int32_t, 3>> conv_ids(N);
  for (size_t i = 0; i < N; ++i) {
    k_off[i] = b.add_kernel(core.offcenters[i]);
    f_lambda[i] = b.add_field(core.lambdas[i].data);
    if (p.theta < 1.0) {
      k_full[i] = b.add_kernel(p.terms[i].stencil);
      double dxp = std::pow(p.grid.spacing[p.terms[i].stencil.axis],
                            p.terms[i].stencil.order);
      f_explicit[i] =
          b.add_field(((1.0 - p.theta) * p.dt / dxp) * p.terms[i].coeff.data);
    }
    for (int l = 0; l < 3; ++l) conv_ids[i][l] = b.add_conv(int(i), l);
  }
  const int32_t f_denom_inv = b.add_field(core.denom_inv.data);
  const int32_t f_mask = b.add_field(core.mask.data);
  const int32_t f_rho = p.source ? b.add_field(p.source->rho.data) : -1;
  const int32_t proj = b.add_projection(core.mask.data, core.boundary.data);

  const int32_t u0_slot = b.leaf(Eigen::ArrayXXd(u0.data));
  int32_t const_slot = -1;
  if (p.const_source)
    const_slot = b.leaf(Eigen::ArrayXXd((p.dt * p.const_source->data).eval()));

  std::vector<StepRecord> step_records;
  std::vector<int32_t> trajectory_slots;
  std::vector<Field> trajectory;

  int32_t u_prev = u0_slot;
  for (int t = 0; t < steps; ++t) {
    StepRecord sr;
    sr.input_slot = u_prev;

    // assembly window: ctilde from u_prev
    sr.assembly.lo = b.window_begin();
    int32_t acc = u_prev;
    if (p.theta < 1.0) {
      for (size_t i = 0; i < N; ++i) {
        int32_t e = b.emit(OpKind::StencilApply, u_prev, -1, k_full[i], 0.0, 1, stacks);
        int32_t f = b.emit(OpKind::PointwiseMul, e, -1, f_explicit[i], 0.0, 1, stacks);
        acc = b.emit(OpKind::Add, acc, f, -1, 0.0, 1, stacks);
      }
    }
    if (p.source) {
      int32_t r = b.emit(OpKind::LogisticReaction, u_prev, -1, f_rho, 0.0, 1, stacks);
      int32_t r2 = b.emit(OpKind::Scale, r, -1, -1, p.dt, 1, stacks);
      acc = b.emit(OpKind::Add, acc, r2, -1, 0.0, 1, stacks);
    }
    if (const_slot >= 0) acc = b.emit(OpKind::Add, acc, const_slot, -1, 0.0, 1, stacks);
    int32_t ct = b.emit(OpKind::PointwiseMul, acc, -1, f_denom_inv, 0.0, 1, stacks);
    b.save(ct);
    sr.assembly.hi = b.window_end({ct});

    int32_t u_cur = u_prev;
    for (int k = 0; k < m_iters; ++k) {
      Window w;
      w.lo = b.window_begin();
      if (k == 0) u_cur = b.emit(OpKind::MaskProject, u_cur, -1, proj, 0.0, 1, stacks);

      // psi part
      int32_t acc2 = -1;
      for (size_t i = 0; i < N; ++i) {
        int32_t ap = b.emit(OpKind::StencilApply, u_cur, -1, k_off[i], 0.0, 1, stacks);
        int32_t sm = b.emit(OpKind::PointwiseMul, ap, -1, f_lambda[i], 0.0, 1, stacks);
        acc2 = (i == 0) ? sm : b.emit(OpKind::Add, acc2, sm, -1, 0.0, 1, stacks);
      }
      acc2 = (acc2 < 0) ? ct : b.emit(OpKind::Add, acc2, ct, -1, 0.0, 1, stacks);
      int32_t psi = b.emit(OpKind::MaskProject, acc2, -1, proj, 0.0, 1, stacks);

      int32_t u_next = psi;
      if (N > 0) {
        int32_t nu = b.emit(OpKind::Scale, u_cur, -1, -1, -1.0, 1, stacks);
        int32_t wslot = b.emit(OpKind::Add, psi, nu, -1, 0.0, 1, stacks);
        int32_t corr = -1;
        for (size_t i = 0; i < N; ++i) {
          const int C = stacks[i].channels;
          int32_t c1 = b.emit(OpKind::LearnableConv, wslot, -1, conv_ids[i][0], 0.0, C, stacks);
          int32_t c2 = b.emit(OpKind::LearnableConv, c1, -1, conv_ids[i][1], 0.0, C, stacks);
          int32_t c3 = b.emit(OpKind::LearnableConv, c2, -1, conv_ids[i][2], 0.0, 1, stacks);
          int32_t cm = b.emit(OpKind::PointwiseMul, c3, -1, f_lambda[i], 0.0, 1, stacks);
          corr = (i == 0) ? cm : b.emit(OpKind::Add, corr, cm, -1, 0.0, 1, stacks);
        }
        int32_t mc = b.emit(OpKind::PointwiseMul, corr, -1, f_mask, 0.0, 1, stacks);
        u_next = b.emit(OpKind::Add, psi, mc, -1, 0.0, 1, stacks);
      }

      if (b.value(u_next).abs().maxCoeff() > kDivergenceGuard)
        throw Error("record_rollout: divergence, |u| exceeded 1e12");

      b.save(u_next);
      w.hi = b.window_end({u_next});
      sr.iterations.push_back(w);
      u_cur = u_next;
    }
    sr.output_slot = u_cur;
    step_records.push_back(sr);
    trajectory_slots.push_back(u_cur);
    trajectory.emplace_back(p.grid, b.value(u_cur).col(0).eval());
    u_prev = u_cur;
  }

  RolloutRecord rec;
  rec.trajectory = std::move(trajectory);
  rec.tape = b.take();
  rec.tape.steps = std::move(step_records);
  rec.tape.trajectory_slots = std::move(trajectory_slots);
  rec.tape.u0_slot = u0_slot;
  return rec;
}

namespace {

// Forward-executes ops [lo, hi) into vals, reading saved boundary values.
void run_window(const AdjointTape& t, const std::vector<HStack>& stacks, int32_t lo,
                int32_t hi, std::vector<Eigen::ArrayXXd>& vals) {
  for (int32_t j = lo; j < hi; ++j) {
    const OpRecord& op = t.ops[j];
    if (vals[op.a].size() == 0 && t.saved[op.a].size() > 0) vals[op.a] = t.saved[op.a];
    if (op.b >= 0 && vals[op.b].size() == 0 && t.saved[op.b].size() > 0)
      vals[op.b] = t.saved[op.b];
    check(vals[op.a].size() > 0 && (op.b < 0 || vals[op.b].size() > 0),
          "tape: missing value during window execution");
    vals[op.out] = exec_op(t, stacks, op, vals);
  }
}

void clear_window_values(const AdjointTape& t, int32_t lo, int32_t hi,
                         std::vector<Eigen::ArrayXXd>& vals,
                         std::vector<Eigen::ArrayXXd>* cots) {
  for (int32_t j = lo; j < hi; ++j) {
    const OpRecord& op = t.ops[j];
    vals[op.out].resize(0, 0);
    if (cots) (*cots)[op.out].resize(0, 0);
  }
}

void add_cot(std::vector<Eigen::ArrayXXd>& cots, int32_t slot,
             const Eigen::ArrayXXd& g) {
  if (cots[slot].size() == 0)
    cots[slot] = g;
  else
    cots[slot] += g;
}

void backward_op(const AdjointTape& t, const std::vector<HStack>& stacks,
                 const OpRecord& op, std::vector<Eigen::ArrayXXd>& vals,
                 std::vector<Eigen::ArrayXXd>& cots, StackGrads& grads) {
  const GridSpec& g = t.grid;
  const Eigen::ArrayXXd& gout = cots[op.out];
  if (gout.size() == 0) return;
  switch (op.kind) {
    case OpKind::StencilApply: {
      const Stencil& s = t.kernels[op.param];
      Eigen::ArrayXXd gi = Eigen::ArrayXXd::Zero(gout.rows(), gout.cols());
      for (Eigen::Index c = 0; c < gout.cols(); ++c)
        for (const auto& tap : s.taps) {
          std::array<int, 3> neg{-tap.off[0], -tap.off[1], -tap.off[2]};
          detail::shifted_axpy(g, gout.col(c).data(), gi.col(c).data(), neg, tap.c);
        }
      add_cot(cots, op.a, gi);
      break;
    }
    case OpKind::PointwiseMul:
      add_cot(cots, op.a, (gout.colwise() * t.fields[op.param]).eval());
      break;
    case OpKind::LearnableConv: {
      const auto& bind = t.conv_bindings[op.param];
      const ConvLayer& layer = stacks[bind.stack].layers[bind.layer];
      ConvLayer& glayer = grads[bind.stack].layers[bind.layer];
      const Eigen::ArrayXXd& in = vals[op.a];
      const Eigen::Index K = layer.taps(g.ndim);
      Eigen::ArrayXXd gi = Eigen::ArrayXXd::Zero(in.rows(), in.cols());
      for (int o = 0; o < layer.out_ch; ++o) {
        const double* gp = gout.col(o).data();
        for (int i = 0; i < layer.in_ch; ++i) {
          const Eigen::Index base = (Eigen::Index(o) * layer.in_ch + i) * K;
          double* gip = gi.col(i).data();
          const double* ip = in.col(i).data();
          for (Eigen::Index k = 0; k < K; ++k) {
            const auto off = kernel_offset(int(k), g.ndim);
            const double wk = layer.w[base + k];
            if (wk != 0.0) {
              std::array<int, 3> neg{-off[0], -off[1], -off[2]};
              detail::shifted_axpy(g, gp, gip, neg, wk);
            }
            glayer.w[base + k] += detail::shifted_dot(g, gp, ip, off);
          }
        }
      }
      add_cot(cots, op.a, gi);
      break;
    }
    case OpKind::Add:
      add_cot(cots, op.a, gout);
      add_cot(cots, op.b, gout);
      break;
    case OpKind::Scale:
      add_cot(cots, op.a, (op.factor * gout).eval());
      break;
    case OpKind::MaskProject: {
      const auto& pr = t.projections[op.param];
      add_cot(cots, op.a, (gout.colwise() * pr.mask).eval());
      break;
    }
    case OpKind::LogisticReaction: {
      if (vals[op.a].size() == 0 && t.saved[op.a].size() > 0)
        vals[op.a] = t.saved[op.a];
      const Eigen::ArrayXd& rho = t.fields[op.param];
      Eigen::ArrayXXd gi(gout.rows(), gout.cols());
      for (Eigen::Index c = 0; c < gout.cols(); ++c)
        gi.col(c) = rho * (1.0 - 2.0 * vals[op.a].col(c)) * gout.col(c);
      add_cot(cots, op.a, gi);
      break;
    }
  }
}

void backward_window(const AdjointTape& t, const std::vector<HStack>& stacks,
                     int32_t lo, int32_t hi, std::vector<Eigen::ArrayXXd>& vals,
                     std::vector<Eigen::ArrayXXd>& cots, StackGrads& grads) {
  run_window(t, stacks, lo, hi, vals);
  for (int32_t j = hi - 1; j >= lo; --j)
    backward_op(t, stacks, t.ops[j], vals, cots, grads);
  clear_window_values(t, lo, hi, vals, &cots);
}

}  // namespace

OpProbe probe_op(const AdjointTape& t, const std::vector<HStack>& stacks,
                 int32_t op_index, const Eigen::ArrayXXd& a_value,
                 const Eigen::ArrayXXd& b_value, const Eigen::ArrayXXd& out_cotangent) {
  check(op_index >= 0 && op_index < int32_t(t.ops.size()), "probe_op: bad op index");
  const OpRecord& op = t.ops[op_index];
  std::vector<Eigen::ArrayXXd> vals(t.n_slots());
  std::vector<Eigen::ArrayXXd> cots(t.n_slots());
  vals[op.a] = a_value;
  if (op.b >= 0) vals[op.b] = b_value;
  OpProbe probe;
  probe.weight_grads = zero_grads(stacks);
  vals[op.out] = exec_op(t, stacks, op, vals);
  probe.output = vals[op.out];
  cots[op.out] = out_cotangent;
  backward_op(t, stacks, op, vals, cots, probe.weight_grads);
  probe.a_cotangent = cots[op.a].size() > 0
                          ? cots[op.a]
                          : Eigen::ArrayXXd::Zero(a_value.rows(), a_value.cols());
  if (op.b >= 0)
    probe.b_cotangent = cots[op.b].size() > 0
                            ? cots[op.b]
                            : Eigen::ArrayXXd::Zero(b_value.rows(), b_value.cols());
  return probe;
}

std::vector<Field> replay(const AdjointTape& t, const std::vector<HStack>& stacks) {
  std::vector<Eigen::ArrayXXd> vals(t.n_slots());
  // start from the leaves; everything else is re-derived
  vals[t.u0_slot] = t.saved[t.u0_slot];
  std::vector<Field> out;
  for (const auto& st : t.steps) {
    run_window(t, stacks, st.assembly.lo, st.assembly.hi, vals);
    for (const auto& w : st.iterations) run_window(t, stacks, w.lo, w.hi, vals);
    out.emplace_back(t.grid, vals[st.output_slot].col(0).eval());
    // drop everything but the step output to bound memory
    clear_window_values(t, st.assembly.lo, st.assembly.hi, vals, nullptr);
    for (const auto& w : st.iterations)
      for (int32_t j = w.lo; j < w.hi; ++j)
        if (t.ops[j].out != st.output_slot) vals[t.ops[j].out].resize(0, 0);
  }
  return out;
}

double rollout_loss(const std::vector<Field>& traj, const std::vector<Field>& ref) {
  check(traj.size() == ref.size() && !traj.empty(), "loss: length mismatch");
  double acc = 0.0;
  for (size_t t = 0; t < traj.size(); ++t) acc += metrics(traj[t], ref[t]).mse;
  return acc / double(traj.size());
}

StackGrads zero_grads(const std::vector<HStack>& stacks) {
  StackGrads g = stacks;
  for (auto& h : g)
    for (auto& l : h.layers) l.w.setZero();
  return g;
}

StackGrads backward(const AdjointTape& t, const std::vector<HStack>& stacks,
                    const std::vector<Field>& traj, const std::vector<Field>& ref) {
  check(traj.size() == t.steps.size() && ref.size() == traj.size(),
        "backward: trajectory length mismatch");
  StackGrads grads = zero_grads(stacks);
  std::vector<Eigen::ArrayXXd> vals(t.n_slots());
  std::vector<Eigen::ArrayXXd> cots(t.n_slots());

  const double T = double(traj.size());
  const double n = double(t.grid.total());
  auto seed_cot = [&](size_t step) {
    Eigen::ArrayXXd s(t.grid.total(), 1);
    s.col(0) = (2.0 / (T * n)) * (traj[step].data - ref[step].data);
    return s;
  };
  for (size_t st = 0; st < t.steps.size(); ++st)
    add_cot(cots, t.steps[st].output_slot, seed_cot(st));

  for (size_t si = t.steps.size(); si-- > 0;) {
    const StepRecord& sr = t.steps[si];
    for (size_t wi = sr.iterations.size(); wi-- > 0;)
      backward_window(t, stacks, sr.iterations[wi].lo, sr.iterations[wi].hi, vals, cots,
                      grads);
    backward_window(t, stacks, sr.assembly.lo, sr.assembly.hi, vals, cots, grads);
    if (t.truncate_bptt && si > 0) {
      // detach: the previous step's output keeps only its own loss seed
      cots[sr.input_slot] = seed_cot(si - 1);
    }
  }
  return grads;
}

}  // namespace npde
