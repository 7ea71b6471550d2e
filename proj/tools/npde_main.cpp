#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "npde/experiments.hpp"
#include "npde/rng.hpp"
#include "npde/spectral.hpp"

namespace fs = std::filesystem;
using namespace npde;

namespace {

struct Args {
  std::string config;
  std::string data;
  std::string out;
  std::string weights;
  std::string mode = "equal-cost";
  uint64_t seed = 0;
  int iters = 0;
  int steps = 0;
  double tol = 1e-10;
  bool timing = false;
};

json maybe_config(const Args& a) {
  return a.config.empty() ? json::object() : load_json(a.config);
}

Checkpoint checkpoint_from(const std::vector<HStack>& stacks, const PdeProblem& p,
                           int channels) {
  Checkpoint c;
  c.ndim = p.grid.ndim;
  c.channels = channels;
  for (const auto& t : p.terms)
    c.terms.push_back({term_kind_name(t.stencil), t.stencil.axis});
  c.stacks = stacks;
  return c;
}

int cmd_gen2d(const Args& a) {
  check(!a.out.empty(), "gen2d requires --out <dir>");
  Exp2DConfig cfg = exp2d_config_from_json(maybe_config(a));
  Dataset ds = gen2d(cfg, a.seed, a.out, env_thread_count());
  std::cout << "gen2d: wrote " << ds.samples.size() << " samples ("
            << ds.steps << " steps each) to " << a.out << ", content_hash="
            << ds.content_hash << "\n";
  return 0;
}

int cmd_gen3d(const Args& a) {
  check(!a.out.empty(), "gen3d requires --out <dir>");
  Exp3DConfig cfg = exp3d_config_from_json(maybe_config(a));
  Dataset ds = gen3d(cfg, a.seed, a.out, env_thread_count());
  std::cout << "gen3d: wrote " << ds.samples.size() << " samples ("
            << ds.steps << " steps each) to " << a.out << ", content_hash="
            << ds.content_hash << "\n";
  return 0;
}

int cmd_train(const Args& a) {
  check(!a.data.empty(), "train requires --data <dir>");
  check(!a.out.empty(), "train requires --out <checkpoint>");
  Dataset ds = load_dataset(a.data);
  json cj = maybe_config(a);
  TrainConfig cfg;
  cfg.lr = cj.value("lr", cfg.lr);
  cfg.beta1 = cj.value("beta1", cfg.beta1);
  cfg.beta2 = cj.value("beta2", cfg.beta2);
  cfg.eps = cj.value("eps", cfg.eps);
  cfg.m_min = cj.value("m_min", cfg.m_min);
  cfg.m_max = cj.value("m_max", cfg.m_max);
  cfg.steps = cj.value("steps", ds.steps);
  cfg.epochs = cj.value("epochs", cfg.epochs);
  cfg.channels = cj.value("channels", ds.kind == "exp3d" ? 4 : 8);
  cfg.truncate_bptt = cj.value("truncate_bptt", cfg.truncate_bptt);
  cfg.seed = a.seed;
  if (a.steps > 0) cfg.steps = a.steps;

  std::vector<TrainSample> samples = train_samples(ds, "train");
  check(!samples.empty(), "train: dataset has no training samples");
  TrainResult res = train(samples, cfg);
  write_checkpoint(a.out,
                   checkpoint_from(res.stacks, samples.front().problem, cfg.channels));
  write_history_csv(res.history, a.out + ".history.csv");
  std::cout << "train: " << cfg.epochs << " epochs over " << samples.size()
            << " samples; first-epoch loss " << res.history.front().mean_loss
            << ", last-epoch loss " << res.history.back().mean_loss << "; wrote "
            << a.out << "\n";
  return 0;
}

int cmd_solve(const Args& a) {
  check(!a.config.empty(), "solve requires --config <problem.json>");
  check(!a.out.empty(), "solve requires --out <field.npde>");
  ProblemConfig pc = read_problem_json(a.config);
  const int steps = a.steps > 0 ? a.steps : 1;
  StopRule stop;
  if (a.iters > 0) stop.iters = a.iters;
  if (a.iters <= 0) stop.tol = a.tol;
  Field u = pc.u0;
  if (!a.weights.empty()) {
    Checkpoint c = read_checkpoint(a.weights);
    check_compatible(c, pc.problem);
    const int m = a.iters > 0 ? a.iters : 10;
    std::vector<Field> traj = rollout_phi(pc.problem, c.stacks, u, steps, m);
    u = traj.back();
  } else {
    std::vector<Field> traj = rollout(pc.problem, u, steps, stop);
    u = traj.back();
  }
  write_field(a.out, u, "u", steps);
  std::cout << "solve: " << steps << " step(s) done, wrote " << a.out << "\n";
  return 0;
}

int cmd_validate(const Args& a) {
  check(!a.config.empty(), "validate requires --config <problem.json>");
  ProblemConfig pc = read_problem_json(a.config);
  Theorem1Report rep = theorem1_check(pc.problem, /*estimate_rho=*/true, a.seed);
  json out;
  out["bound"] = rep.bound;
  out["pass"] = rep.pass;
  json terms = json::array();
  for (const auto& t : rep.terms)
    terms.push_back({{"lambda_norm", t.lambda_norm}, {"margin", t.margin}});
  out["terms"] = terms;
  out["rho_L"] = rep.rho_L;
  out["rho_converged"] = rep.rho_converged;
  if (!a.out.empty()) {
    save_json(a.out, out);
    std::cout << "validate: wrote " << a.out << "\n";
  } else {
    std::cout << out.dump(2) << "\n";
  }
  return 0;
}

int cmd_bench(const Args& a) {
  check(!a.data.empty(), "bench requires --data <dir>");
  check(!a.weights.empty(), "bench requires --weights <checkpoint>");
  check(!a.out.empty(), "bench requires --out <metrics.csv>");
  Dataset ds = load_dataset(a.data);
  Checkpoint c = read_checkpoint(a.weights);
  for (const auto& s : ds.samples)
    if (s.role == "test") {
      check_compatible(c, s.problem);
      break;
    }
  const BenchMode mode =
      a.mode == "equal-error" ? BenchMode::EqualError : BenchMode::EqualCost;
  const int m_phi = a.iters > 0 ? a.iters : (ds.kind == "exp3d" ? 6 : 10);
  BenchResult res = benchmark(ds, c.stacks, mode, m_phi, a.timing, env_thread_count());
  write_metrics_csv(a.out, res.rows);
  const auto& s = res.summary;
  std::cout << "bench[" << a.mode << "]: samples=" << s.samples
            << " mean_mse_neural=" << s.mean_mse_neural
            << " mean_mse_semi=" << s.mean_mse_semi
            << " ratio_of_means=" << s.ratio_of_means
            << " mean_of_ratios=" << s.mean_of_ratios;
  if (mode == BenchMode::EqualError)
    std::cout << " mean_cost_ratio=" << s.mean_cost_ratio
              << " mean_runtime_ratio=" << s.mean_runtime_ratio;
  std::cout << "\n";
  return 0;
}

int cmd_shift_eval(const Args& a) {
  check(!a.weights.empty(), "shift-eval requires --weights <checkpoint>");
  check(!a.out.empty(), "shift-eval requires --out <csv>");
  Exp2DConfig cfg = exp2d_config_from_json(maybe_config(a));
  Checkpoint c = read_checkpoint(a.weights);
  const int m_phi = a.iters > 0 ? a.iters : 10;
  ShiftResult res =
      shift_eval(cfg, c.stacks, {"theta=0.75", "dt=0.12", "dx=0.049"}, a.seed, m_phi,
                 env_thread_count());
  write_shift_csv(a.out, res.rows);
  std::cout << "shift-eval: wrote " << res.rows.size() << " rows to " << a.out << "\n";
  return 0;
}

int cmd_gradcheck(const Args& a) {
  // standard harness: 16x16, T=2, m=3, random weights, 20 coordinates
  PdeProblem p = build_advection_diffusion_2d(16, 2.0 * M_PI, 0.9, 0.2, 1.0, -0.5,
                                              0.4, 0.6);
  Field u0 = initial_condition_2d(p.grid, p.mask, 0.02, 0.01, 3.0, 2.0);
  const int T = a.steps > 0 ? a.steps : 2;
  const int m = a.iters > 0 ? a.iters : 3;
  std::vector<Field> refs;
  Field u = u0;
  for (int t = 0; t < T; ++t) {
    u = reference_solve(p, u, 1e-10);
    refs.push_back(u);
  }
  std::vector<HStack> stacks = init_params(2, int(p.terms.size()), {4, a.seed});
  Rng rng(mix_seed(a.seed, 0xfeed));
  for (auto& h : stacks)
    for (Eigen::Index i = 0; i < h.layers[2].w.size(); ++i)
      h.layers[2].w[i] = rng.uniform(-0.05, 0.05);
  GradcheckReport rep = gradcheck(p, u0, refs, stacks, T, m, 20, a.seed);
  json out{{"max_rel_err", rep.max_rel_err},
           {"coords_checked", rep.coords_checked},
           {"loss", rep.loss},
           {"pass", rep.pass}};
  if (!a.out.empty())
    save_json(a.out, out);
  else
    std::cout << out.dump(2) << "\n";
  return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"npde: semi-implicit neural PDE solver toolkit"};
  app.require_subcommand(1);

  Args a;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", a.config, "JSON configuration file");
    cmd->add_option("--data", a.data, "dataset directory");
    cmd->add_option("--out", a.out, "output path");
    cmd->add_option("--weights", a.weights, "checkpoint file");
    cmd->add_option("--seed", a.seed, "random seed (all randomness flows from it)");
    cmd->add_option("--iters", a.iters, "iterations per time step");
    cmd->add_option("--steps", a.steps, "number of time steps");
    cmd->add_option("--mode", a.mode, "bench mode: equal-cost | equal-error");
    cmd->add_option("--tol", a.tol, "residual tolerance");
    cmd->add_flag("--timing", a.timing, "record wall-clock columns (non-deterministic)");
  };

  std::map<std::string, std::function<int(const Args&)>> handlers{
      {"gen2d", cmd_gen2d},         {"gen3d", cmd_gen3d},
      {"train", cmd_train},         {"solve", cmd_solve},
      {"validate", cmd_validate},   {"bench", cmd_bench},
      {"shift-eval", cmd_shift_eval}, {"gradcheck", cmd_gradcheck}};

  add_common(app.add_subcommand("gen2d", "generate the 2D advection-diffusion dataset"));
  add_common(app.add_subcommand("gen3d", "generate the 3D reaction-diffusion dataset"));
  add_common(app.add_subcommand("train", "train the neural iterator on a dataset"));
  add_common(app.add_subcommand("solve", "run the solver on a problem descriptor"));
  add_common(app.add_subcommand("validate", "Theorem-1 margins and rho(L) estimate"));
  add_common(app.add_subcommand("bench", "equal-cost / equal-error comparison"));
  add_common(app.add_subcommand("shift-eval", "parameter-shift generalization study"));
  add_common(app.add_subcommand("gradcheck", "finite-difference gradient check"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    for (auto* sub : app.get_subcommands())
      return handlers.at(sub->get_name())(a);
    std::cerr << "error: usage: no subcommand given\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}
