#include "npde/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "npde/rng.hpp"
#include "npde/spectral.hpp"

namespace npde {

namespace fs = std::filesystem;

Exp2DConfig exp2d_config_from_json(const json& j) {
  Exp2DConfig c;
  c.mesh = j.value("mesh", c.mesh);
  c.extent = j.value("extent", c.extent);
  c.theta = j.value("theta", c.theta);
  c.dt = j.value("dt", c.dt);
  c.v_lo = j.value("v_lo", c.v_lo);
  c.v_hi = j.value("v_hi", c.v_hi);
  c.kappa_lo = j.value("kappa_lo", c.kappa_lo);
  c.kappa_hi = j.value("kappa_hi", c.kappa_hi);
  c.amp_sigma = j.value("amp_sigma", c.amp_sigma);
  c.wave_lo = j.value("wave_lo", c.wave_lo);
  c.wave_hi = j.value("wave_hi", c.wave_hi);
  c.train_sims = j.value("train_sims", c.train_sims);
  c.test_sims = j.value("test_sims", c.test_sims);
  c.steps = j.value("steps", c.steps);
  c.ref_tol = j.value("ref_tol", c.ref_tol);
  return c;
}

Exp3DConfig exp3d_config_from_json(const json& j) {
  Exp3DConfig c;
  if (j.contains("dims")) {
    auto d = j.at("dims").get<std::vector<int>>();
    check(d.size() == 3, "exp3d config: dims must have 3 entries");
    std::copy(d.begin(), d.end(), c.dims.begin());
  }
  if (j.contains("spacing")) {
    auto s = j.at("spacing").get<std::vector<double>>();
    check(s.size() == 3, "exp3d config: spacing must have 3 entries");
    std::copy(s.begin(), s.end(), c.spacing.begin());
  }
  c.theta = j.value("theta", c.theta);
  c.dt = j.value("dt", c.dt);
  c.steps = j.value("steps", c.steps);
  c.train_sims = j.value("train_sims", c.train_sims);
  c.test_sims = j.value("test_sims", c.test_sims);
  c.kappa_w_lo = j.value("kappa_w_lo", c.kappa_w_lo);
  c.kappa_w_hi = j.value("kappa_w_hi", c.kappa_w_hi);
  c.rho_lo = j.value("rho_lo", c.rho_lo);
  c.rho_hi = j.value("rho_hi", c.rho_hi);
  c.bump_peak = j.value("bump_peak", c.bump_peak);
  c.bump_sigma_cells = j.value("bump_sigma_cells", c.bump_sigma_cells);
  c.ref_tol = j.value("ref_tol", c.ref_tol);
  c.rho_gate = j.value("rho_gate", c.rho_gate);
  c.literal_flux = j.value("literal_flux", c.literal_flux);
  c.phantom.tau = j.value("phantom_tau", c.phantom.tau);
  c.phantom.decay_cells = j.value("phantom_decay_cells", c.phantom.decay_cells);
  c.phantom.cap = j.value("phantom_cap", c.phantom.cap);
  return c;
}

json to_json(const Exp2DConfig& c) {
  return json{{"mesh", c.mesh},       {"extent", c.extent},
              {"theta", c.theta},     {"dt", c.dt},
              {"v_lo", c.v_lo},       {"v_hi", c.v_hi},
              {"kappa_lo", c.kappa_lo}, {"kappa_hi", c.kappa_hi},
              {"amp_sigma", c.amp_sigma}, {"wave_lo", c.wave_lo},
              {"wave_hi", c.wave_hi}, {"train_sims", c.train_sims},
              {"test_sims", c.test_sims}, {"steps", c.steps},
              {"ref_tol", c.ref_tol}};
}

json to_json(const Exp3DConfig& c) {
  return json{{"dims", std::vector<int>(c.dims.begin(), c.dims.end())},
              {"spacing", std::vector<double>(c.spacing.begin(), c.spacing.end())},
              {"theta", c.theta},
              {"dt", c.dt},
              {"steps", c.steps},
              {"train_sims", c.train_sims},
              {"test_sims", c.test_sims},
              {"kappa_w_lo", c.kappa_w_lo},
              {"kappa_w_hi", c.kappa_w_hi},
              {"rho_lo", c.rho_lo},
              {"rho_hi", c.rho_hi},
              {"bump_peak", c.bump_peak},
              {"bump_sigma_cells", c.bump_sigma_cells},
              {"ref_tol", c.ref_tol},
              {"rho_gate", c.rho_gate},
              {"literal_flux", c.literal_flux},
              {"phantom_tau", c.phantom.tau},
              {"phantom_decay_cells", c.phantom.decay_cells},
              {"phantom_cap", c.phantom.cap}};
}

PdeProblem build_advection_diffusion_2d(int mesh, double extent, double theta,
                                        double dt, double vx, double vy, double kxx,
                                        double kyy) {
  const double dx = extent / mesh;
  GridSpec grid({mesh, mesh}, {dx, dx});
  PdeProblem p;
  p.grid = grid;
  p.theta = theta;
  p.dt = dt;
  p.mask = edge_mask(grid);
  p.boundary = Field(grid);
  auto add = [&](StencilKind kind, int axis, double a) {
    PdeTerm t;
    t.stencil = make_central(kind, axis, 2);
    t.coeff = Field(grid, a);
    p.terms.push_back(std::move(t));
  };
  add(StencilKind::FirstDerivative, 0, vx);
  add(StencilKind::FirstDerivative, 1, vy);
  add(StencilKind::SecondDerivative, 0, kxx);
  add(StencilKind::SecondDerivative, 1, kyy);
  return p;
}

Field initial_condition_2d(const GridSpec& grid, const BoundaryMask& mask,
                           double lambda, double gamma, double k, double l) {
  Field u0(grid);
  for (int i = 0; i < grid.dims[0]; ++i) {
    for (int j = 0; j < grid.dims[1]; ++j) {
      const double x = i * grid.spacing[0];
      const double y = j * grid.spacing[1];
      const double phase = k * x + l * y;
      u0[grid.index(i, j, 0)] = lambda * std::cos(phase) + gamma * std::sin(phase);
    }
  }
  return project(mask, u0, Field(grid));
}

PdeProblem build_problem3d(const TissueMap& tissue, double kappa_w, double rho,
                           const Exp3DConfig& cfg) {
  const GridSpec& grid = tissue.p_w.grid;
  const double kappa_g = kappa_w / 10.0;
  Field kappa(grid, (tissue.p_w.data * kappa_w + tissue.p_g.data * kappa_g).eval());
  PhaseField phase = build_phase_field(tissue);
  DiffuseOptions opt;
  opt.literal_flux = cfg.literal_flux;
  DiffuseTerms dt_terms = diffuse_terms(phase, kappa, std::nullopt, opt);

  PdeProblem p;
  p.grid = grid;
  p.theta = cfg.theta;
  p.dt = cfg.dt;
  p.terms = std::move(dt_terms.terms);
  p.mask = std::move(dt_terms.mask);
  p.boundary = Field(grid);
  p.source = LogisticSource{Field(grid, (p.mask.data * rho).eval())};
  return p;
}

namespace {

void run_parallel(int jobs, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1) {
    for (int j = 0; j < jobs; ++j) fn(j);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t]() {
      for (int j = t; j < jobs; j += threads) fn(j);
    });
  for (auto& th : pool) th.join();
}

void hash_field(const Field& f, uint64_t& h) {
  h = fnv1a(reinterpret_cast<const unsigned char*>(f.data.data()),
            size_t(f.data.size()) * 8, h);
}

void write_dataset(Dataset& ds, const std::string& outdir) {
  fs::create_directories(outdir);
  uint64_t h = 0xcbf29ce484222325ULL;
  json samples = json::array();
  for (auto& s : ds.samples) {
    char dirname[32];
    std::snprintf(dirname, sizeof dirname, "sample_%03d", s.id);
    fs::create_directories(fs::path(outdir) / dirname);
    json files;
    auto rel = [&](const std::string& leaf) { return std::string(dirname) + "/" + leaf; };
    write_field((fs::path(outdir) / rel("u0.npde")).string(), s.u0, "u0", 0);
    hash_field(s.u0, h);
    files["u0"] = rel("u0.npde");
    json refs = json::array();
    for (size_t t = 0; t < s.refs.size(); ++t) {
      char leaf[32];
      std::snprintf(leaf, sizeof leaf, "ref_%03d.npde", int(t + 1));
      write_field((fs::path(outdir) / rel(leaf)).string(), s.refs[t], "ref", int(t + 1));
      hash_field(s.refs[t], h);
      refs.push_back(rel(leaf));
    }
    files["refs"] = refs;
    samples.push_back(json{{"id", s.id},
                           {"role", s.role},
                           {"seed", s.seed},
                           {"params", s.params},
                           {"files", files}});
  }
  ds.content_hash = hash_hex(h);
  json manifest{{"version", 1},
                {"kind", ds.kind},
                {"seed", ds.seed},
                {"steps", ds.steps},
                {"config", ds.config},
                {"samples", samples},
                {"content_hash", ds.content_hash}};
  save_json((fs::path(outdir) / "manifest.json").string(), manifest);
}

}  // namespace

Dataset gen2d(const Exp2DConfig& cfg, uint64_t seed, const std::string& outdir,
              int threads) {
  check(cfg.train_sims >= 0 && cfg.test_sims >= 0 &&
            cfg.train_sims + cfg.test_sims > 0,
        "gen2d: no samples requested");
  const int total = cfg.train_sims + cfg.test_sims;
  Dataset ds;
  ds.kind = "exp2d";
  ds.seed = seed;
  ds.config = to_json(cfg);
  ds.steps = cfg.steps;
  ds.samples.resize(total);

  run_parallel(total, threads, [&](int id) {
    Rng rng(mix_seed(seed, uint64_t(id)));
    const double vx = rng.uniform(cfg.v_lo, cfg.v_hi);
    const double vy = rng.uniform(cfg.v_lo, cfg.v_hi);
    const double kxx = rng.uniform(cfg.kappa_lo, cfg.kappa_hi);
    const double kyy = rng.uniform(cfg.kappa_lo, cfg.kappa_hi);
    const double lambda = rng.normal(0.0, cfg.amp_sigma);
    const double gamma = rng.normal(0.0, cfg.amp_sigma);
    const double k = rng.uniform(cfg.wave_lo, cfg.wave_hi);
    const double l = rng.uniform(cfg.wave_lo, cfg.wave_hi);

    Sample s;
    s.id = id;
    s.role = id < cfg.train_sims ? "train" : "test";
    s.seed = mix_seed(seed, uint64_t(id));
    s.problem = build_advection_diffusion_2d(cfg.mesh, cfg.extent, cfg.theta, cfg.dt,
                                             vx, vy, kxx, kyy);
    s.u0 = initial_condition_2d(s.problem.grid, s.problem.mask, lambda, gamma, k, l);
    s.params = json{{"vx", vx},     {"vy", vy},       {"kxx", kxx}, {"kyy", kyy},
                    {"lambda", lambda}, {"gamma", gamma}, {"k", k},    {"l", l}};
    const double tol = reference_update_tol(s.problem, 1e-9, cfg.ref_tol);
    Field u = s.u0;
    for (int t = 0; t < cfg.steps; ++t) {
      u = reference_solve(s.problem, u, tol, ReferenceMode::OwnTheta);
      s.refs.push_back(u);
    }
    ds.samples[id] = std::move(s);
  });

  if (!outdir.empty()) write_dataset(ds, outdir);
  return ds;
}

namespace {

Field gaussian_bump(const GridSpec& grid, const std::array<int, 3>& center, double peak,
                    double sigma_cells) {
  Field u(grid);
  for (Eigen::Index i = 0; i < grid.total(); ++i) {
    const auto c = grid.coords(i);
    double r2 = 0.0;
    for (int a = 0; a < grid.ndim; ++a) {
      const double d = double(c[a] - center[a]);
      r2 += d * d;
    }
    u[i] = peak * std::exp(-r2 / (2.0 * sigma_cells * sigma_cells));
  }
  return u;
}

}  // namespace

Dataset gen3d(const Exp3DConfig& cfg, uint64_t seed, const std::string& outdir,
              int threads) {
  check(cfg.train_sims >= 0 && cfg.test_sims >= 0 &&
            cfg.train_sims + cfg.test_sims > 0,
        "gen3d: no samples requested");
  check(cfg.rho_hi * cfg.dt < 1.0,
        "gen3d: rho_hi * dt must stay below 1 (explicit logistic stability)");
  const int total = cfg.train_sims + cfg.test_sims;
  GridSpec grid({cfg.dims[0], cfg.dims[1], cfg.dims[2]},
                {cfg.spacing[0], cfg.spacing[1], cfg.spacing[2]});

  Dataset ds;
  ds.kind = "exp3d";
  ds.seed = seed;
  ds.config = to_json(cfg);
  ds.steps = cfg.steps;
  ds.samples.resize(total);

  run_parallel(total, threads, [&](int id) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const uint64_t sample_seed = mix_seed(seed, uint64_t(id) * 1024 + attempt);
      TissueMap tissue = phantom3d(sample_seed, grid, cfg.phantom);
      Rng rng(mix_seed(sample_seed, 0xa11));
      const double kw = rng.uniform(cfg.kappa_w_lo, cfg.kappa_w_hi);
      const double rho = rng.uniform(cfg.rho_lo, cfg.rho_hi);
      PdeProblem p = build_problem3d(tissue, kw, rho, cfg);

      PhaseField phase = build_phase_field(tissue);
      std::array<int, 3> center{};
      bool placed = false;
      for (int tries = 0; tries < 100 && !placed; ++tries) {
        for (int a = 0; a < 3; ++a) center[a] = rng.uniform_int(2, grid.dims[a] - 3);
        placed = phase.phi[grid.index(center[0], center[1], center[2])] > phase.eps_phi;
      }
      if (!placed) continue;  // degenerate phantom; next attempt

      // generation-time validity gate on the iterator's spectral radius
      IteratorAssembly a = assemble(p, Field(grid));
      Field psi0 = psi_step(a, Field(grid));
      auto lin = [&](const Field& u) {
        Field pu = psi_step(a, u);
        return Field(grid, (pu.data - psi0.data).eval());
      };
      SpectralReport sr = power_iteration(lin, grid, 160, 1e-4, sample_seed);
      if (sr.rho_estimate >= cfg.rho_gate) continue;

      Sample s;
      s.id = id;
      s.role = id < cfg.train_sims ? "train" : "test";
      s.seed = sample_seed;
      s.problem = std::move(p);
      s.u0 = Field(grid, (gaussian_bump(grid, center, cfg.bump_peak,
                                        cfg.bump_sigma_cells)
                              .data *
                          s.problem.mask.data)
                             .eval());
      s.params = json{{"kappa_w", kw},
                      {"kappa_g", kw / 10.0},
                      {"rho", rho},
                      {"phantom_seed", sample_seed},
                      {"attempt", attempt},
                      {"bump_center", std::vector<int>(center.begin(), center.end())}};
      try {
        const double tol = reference_update_tol(s.problem, 1e-9, cfg.ref_tol);
        Field u = s.u0;
        for (int t = 0; t < cfg.steps; ++t) {
          u = reference_solve(s.problem, u, tol, ReferenceMode::ImplicitTheta1);
          s.refs.push_back(u);
        }
      } catch (const Error&) {
        continue;  // reference did not converge; next attempt
      }
      ds.samples[id] = std::move(s);
      return;
    }
    throw Error("gen3d: no valid sample found after 20 attempts");
  });

  if (!outdir.empty()) write_dataset(ds, outdir);
  return ds;
}

Dataset load_dataset(const std::string& dir) {
  json manifest = load_json((fs::path(dir) / "manifest.json").string());
  Dataset ds;
  ds.kind = manifest.at("kind").get<std::string>();
  ds.seed = manifest.at("seed").get<uint64_t>();
  ds.config = manifest.at("config");
  ds.steps = manifest.at("steps").get<int>();
  ds.content_hash = manifest.value("content_hash", "");

  const bool is2d = ds.kind == "exp2d";
  Exp2DConfig c2;
  Exp3DConfig c3;
  if (is2d)
    c2 = exp2d_config_from_json(ds.config);
  else
    c3 = exp3d_config_from_json(ds.config);

  GridSpec grid3 = is2d ? GridSpec() : GridSpec({c3.dims[0], c3.dims[1], c3.dims[2]},
                                                {c3.spacing[0], c3.spacing[1],
                                                 c3.spacing[2]});
  for (const auto& sj : manifest.at("samples")) {
    Sample s;
    s.id = sj.at("id").get<int>();
    s.role = sj.at("role").get<std::string>();
    s.seed = sj.at("seed").get<uint64_t>();
    s.params = sj.at("params");
    if (is2d) {
      s.problem = build_advection_diffusion_2d(
          c2.mesh, c2.extent, c2.theta, c2.dt, s.params.at("vx").get<double>(),
          s.params.at("vy").get<double>(), s.params.at("kxx").get<double>(),
          s.params.at("kyy").get<double>());
    } else {
      TissueMap tissue = phantom3d(s.params.at("phantom_seed").get<uint64_t>(), grid3,
                                   c3.phantom);
      s.problem = build_problem3d(tissue, s.params.at("kappa_w").get<double>(),
                                  s.params.at("rho").get<double>(), c3);
    }
    const auto& files = sj.at("files");
    auto full = [&](const std::string& rel) { return (fs::path(dir) / rel).string(); };
    LoadedField u0 = read_field(full(files.at("u0").get<std::string>()));
    check(u0.finite, "dataset: non-finite u0 field");
    check(u0.field.grid == s.problem.grid, "dataset: u0 grid mismatch");
    s.u0 = std::move(u0.field);
    for (const auto& rj : files.at("refs")) {
      LoadedField rf = read_field(full(rj.get<std::string>()));
      check(rf.finite, "dataset: non-finite reference field");
      s.refs.push_back(std::move(rf.field));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<TrainSample> train_samples(const Dataset& ds, const std::string& role,
                                       int limit) {
  std::vector<TrainSample> out;
  for (const auto& s : ds.samples) {
    if (s.role != role) continue;
    if (limit >= 0 && int(out.size()) >= limit) break;
    out.push_back({s.id, s.problem, s.u0, s.refs});
  }
  return out;
}

namespace {

struct MethodRun {
  std::vector<Metrics> per_step;
  double runtime_ms = 0.0;
  double mean_mse = 0.0;
};

MethodRun run_psi(const PdeProblem& p, const Field& u0, const std::vector<Field>& refs,
                  int steps, int m, bool timing) {
  MethodRun r;
  const auto t0 = std::chrono::steady_clock::now();
  StopRule stop;
  stop.iters = m;
  std::vector<Field> traj = rollout(p, u0, steps, stop);
  if (timing)
    r.runtime_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  for (int t = 0; t < steps; ++t) {
    r.per_step.push_back(metrics(traj[t], refs[t]));
    r.mean_mse += r.per_step.back().mse;
  }
  r.mean_mse /= steps;
  return r;
}

MethodRun run_phi(const PdeProblem& p, const std::vector<HStack>& stacks,
                  const Field& u0, const std::vector<Field>& refs, int steps, int m,
                  bool timing) {
  MethodRun r;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Field> traj = rollout_phi(p, stacks, u0, steps, m);
  if (timing)
    r.runtime_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  for (int t = 0; t < steps; ++t) {
    r.per_step.push_back(metrics(traj[t], refs[t]));
    r.mean_mse += r.per_step.back().mse;
  }
  r.mean_mse /= steps;
  return r;
}

void emit_rows(std::vector<BenchRow>& rows, const Sample& s, const MethodRun& run,
               const std::string& method, int m, double cost_per_iter, int steps) {
  for (int t = 0; t < steps; ++t) {
    BenchRow row;
    row.sample_id = s.id;
    row.time_index = t + 1;
    row.method = method;
    row.iterations = m;
    row.cost_units = cost_per_iter * m;
    row.mse = run.per_step[t].mse;
    row.linf = run.per_step[t].linf;
    row.runtime_ms = run.runtime_ms / steps;
    rows.push_back(row);
  }
}

}  // namespace

BenchResult benchmark(const Dataset& ds, const std::vector<HStack>& stacks,
                      BenchMode mode, int m_phi, bool timing, int threads) {
  check(m_phi >= 1, "benchmark: m_phi must be >= 1");
  std::vector<const Sample*> tests;
  for (const auto& s : ds.samples)
    if (s.role == "test") tests.push_back(&s);
  check(!tests.empty(), "benchmark: dataset has no test samples");
  for (const auto* s : tests) check_stacks_against(stacks, s->problem);

  const int steps = ds.steps;
  struct PerSample {
    std::vector<BenchRow> rows;
    double mse_phi = 0.0, mse_psi = 0.0;
    double cost_ratio = 0.0, runtime_ratio = 0.0;
  };
  std::vector<PerSample> per(tests.size());

  run_parallel(int(tests.size()), threads, [&](int j) {
    const Sample& s = *tests[j];
    PerSample ps;
    MethodRun phi = run_phi(s.problem, stacks, s.u0, s.refs, steps, m_phi, timing);
    emit_rows(ps.rows, s, phi, "neural", m_phi, 2.0, steps);
    ps.mse_phi = phi.mean_mse;

    if (mode == BenchMode::EqualCost) {
      MethodRun psi = run_psi(s.problem, s.u0, s.refs, steps, 2 * m_phi, timing);
      emit_rows(ps.rows, s, psi, "semi-implicit", 2 * m_phi, 1.0, steps);
      ps.mse_psi = psi.mean_mse;
      if (ds.kind == "exp2d") {
        MethodRun psi25 = run_psi(s.problem, s.u0, s.refs, steps, 25, timing);
        emit_rows(ps.rows, s, psi25, "semi-implicit-25", 25, 1.0, steps);
      }
      ps.cost_ratio = 1.0;
      ps.runtime_ratio = psi.runtime_ms > 0.0 ? phi.runtime_ms / psi.runtime_ms : 0.0;
    } else {
      // smallest psi iteration count whose trajectory-mean mse is within 5%
      const double target = 1.05 * phi.mean_mse;
      int lo = 1, hi = 1;
      MethodRun cand = run_psi(s.problem, s.u0, s.refs, steps, hi, timing);
      while (cand.mean_mse > target && hi < 4096) {
        lo = hi;
        hi *= 2;
        cand = run_psi(s.problem, s.u0, s.refs, steps, hi, timing);
      }
      check(cand.mean_mse <= target, "benchmark: equal-error search did not close");
      MethodRun best = cand;
      int best_m = hi;
      while (lo + 1 < hi) {
        const int mid = (lo + hi) / 2;
        MethodRun mrun = run_psi(s.problem, s.u0, s.refs, steps, mid, timing);
        if (mrun.mean_mse <= target) {
          hi = mid;
          best = mrun;
          best_m = mid;
        } else {
          lo = mid;
        }
      }
      emit_rows(ps.rows, s, best, "semi-implicit", best_m, 1.0, steps);
      ps.mse_psi = best.mean_mse;
      ps.cost_ratio = (2.0 * m_phi) / double(best_m);
      ps.runtime_ratio = best.runtime_ms > 0.0 ? phi.runtime_ms / best.runtime_ms : 0.0;
    }
    per[j] = std::move(ps);
  });

  BenchResult out;
  double sum_phi = 0.0, sum_psi = 0.0, sum_ratio = 0.0, sum_cost = 0.0, sum_rt = 0.0;
  for (auto& ps : per) {
    for (auto& r : ps.rows) out.rows.push_back(std::move(r));
    sum_phi += ps.mse_phi;
    sum_psi += ps.mse_psi;
    sum_ratio += ps.mse_psi > 0.0 ? ps.mse_phi / ps.mse_psi : 1.0;
    sum_cost += ps.cost_ratio;
    sum_rt += ps.runtime_ratio;
  }
  const double n = double(per.size());
  out.summary.samples = int(per.size());
  out.summary.mean_mse_neural = sum_phi / n;
  out.summary.mean_mse_semi = sum_psi / n;
  out.summary.ratio_of_means = sum_psi > 0.0 ? sum_phi / sum_psi : 1.0;
  out.summary.mean_of_ratios = sum_ratio / n;
  out.summary.mean_cost_ratio = sum_cost / n;
  out.summary.mean_runtime_ratio = sum_rt / n;
  return out;
}

void write_metrics_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream f(path);
  check(f.good(), "write_metrics_csv: cannot open " + path);
  f << "sample_id,time_index,method,iterations,cost_units,mse,linf,runtime_ms\n";
  f.precision(17);
  for (const auto& r : rows)
    f << r.sample_id << "," << r.time_index << "," << r.method << "," << r.iterations
      << "," << r.cost_units << "," << r.mse << "," << r.linf << "," << r.runtime_ms
      << "\n";
  check(f.good(), "write_metrics_csv: write failed");
}

namespace {

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * double(v.size() - 1);
  const size_t i = size_t(pos);
  if (i + 1 >= v.size()) return v.back();
  const double frac = pos - double(i);
  return v[i] * (1.0 - frac) + v[i + 1] * frac;
}

}  // namespace

ShiftResult shift_eval(const Exp2DConfig& base, const std::vector<HStack>& stacks,
                       const std::vector<std::string>& shifts, uint64_t seed,
                       int m_phi, int threads, const Dataset* reuse_for_none,
                       int shift_samples) {
  ShiftResult out;
  const int n_samples = shift_samples > 0 ? shift_samples : base.test_sims;
  for (size_t si = 0; si < shifts.size(); ++si) {
    const std::string& shift = shifts[si];
    Exp2DConfig cfg = base;
    if (shift == "none") {
    } else if (shift == "theta=0.75") {
      cfg.theta = 0.75;
    } else if (shift == "dt=0.12") {
      cfg.dt = 0.12;
    } else if (shift == "dx=0.049") {
      cfg.mesh = base.mesh * 2;  // halves dx on the same extent
    } else {
      throw Error("shift_eval: unknown shift '" + shift + "'");
    }

    std::vector<const Sample*> samples;
    Dataset local;
    if (shift == "none" && reuse_for_none) {
      for (const auto& s : reuse_for_none->samples)
        if (s.role == "test") samples.push_back(&s);
    } else {
      cfg.train_sims = 0;
      cfg.test_sims = n_samples;
      local = gen2d(cfg, mix_seed(seed, 0x5157 + si), "", threads);
      for (const auto& s : local.samples) samples.push_back(&s);
    }
    check(!samples.empty(), "shift_eval: no samples for shift " + shift);

    const int steps = base.steps;
    std::vector<std::vector<double>> phi_mse(steps), psi_mse(steps);
    std::vector<std::vector<Metrics>> phis(samples.size()), psis(samples.size());
    run_parallel(int(samples.size()), threads, [&](int j) {
      const Sample& s = *samples[j];
      check_stacks_against(stacks, s.problem);
      phis[j] = run_phi(s.problem, stacks, s.u0, s.refs, steps, m_phi, false).per_step;
      psis[j] = run_psi(s.problem, s.u0, s.refs, steps, 2 * m_phi, false).per_step;
    });
    for (size_t j = 0; j < samples.size(); ++j)
      for (int t = 0; t < steps; ++t) {
        phi_mse[t].push_back(phis[j][t].mse);
        psi_mse[t].push_back(psis[j][t].mse);
      }

    auto emit = [&](const std::string& method, std::vector<std::vector<double>>& per_t) {
      for (int t = 0; t < steps; ++t) {
        ShiftRow row;
        row.shift = shift;
        row.time_index = t + 1;
        row.method = method;
        double sum = 0.0;
        for (double v : per_t[t]) sum += v;
        row.mean_mse = sum / double(per_t[t].size());
        row.p25 = percentile(per_t[t], 0.25);
        row.p75 = percentile(per_t[t], 0.75);
        out.rows.push_back(row);
      }
    };
    emit("neural", phi_mse);
    emit("semi-implicit", psi_mse);
  }
  return out;
}

void write_shift_csv(const std::string& path, const std::vector<ShiftRow>& rows) {
  std::ofstream f(path);
  check(f.good(), "write_shift_csv: cannot open " + path);
  f << "shift,time_index,method,mean_mse,p25_mse,p75_mse\n";
  f.precision(17);
  for (const auto& r : rows)
    f << r.shift << "," << r.time_index << "," << r.method << "," << r.mean_mse << ","
      << r.p25 << "," << r.p75 << "\n";
  check(f.good(), "write_shift_csv: write failed");
}

}  // namespace npde
