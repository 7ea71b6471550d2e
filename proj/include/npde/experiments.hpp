#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "npde/diffuse.hpp"
#include "npde/io.hpp"
#include "npde/training.hpp"

namespace npde {

// 2D advection-diffusion study on [0, extent]^2 with zero Dirichlet edges.
// Coefficient and initial-condition draw ranges follow the study setup; the
// desk-scale defaults shrink counts, never ranges.
struct Exp2DConfig {
  int mesh = 64;
  double extent = 2.0 * M_PI;
  double theta = 0.9;
  double dt = 0.2;
  double v_lo = -2.0, v_hi = 2.0;        // advection velocity draws
  double kappa_lo = 0.2, kappa_hi = 0.8; // diffusivity draws
  double amp_sigma = 0.02;               // lambda, gamma ~ N(0, amp_sigma)
  double wave_lo = 1.0, wave_hi = 9.0;   // k, l ~ U[wave_lo, wave_hi]
  int train_sims = 40;
  int test_sims = 8;
  int steps = 10;
  double ref_tol = 1e-10;

  double dx() const { return extent / mesh; }
};

// 3D reaction-diffusion study on synthetic phantoms; implicit mode
// (theta = 1) as in the reference pipeline. kappa_g = kappa_w / 10.
struct Exp3DConfig {
  std::array<int, 3> dims{33, 33, 33};
  std::array<double, 3> spacing{0.15, 0.18, 0.15};
  double theta = 1.0;
  double dt = 50.0;
  int steps = 19;
  int train_sims = 12;
  int test_sims = 4;
  double kappa_w_lo = 0.02, kappa_w_hi = 0.2;
  // rho dt must stay below 1 so the explicit logistic update is monotone on
  // [0, 1]; with dt = 50 that caps rho at 0.02.
  double rho_lo = 0.002, rho_hi = 0.016;
  double bump_peak = 0.1;
  double bump_sigma_cells = 1.5;
  double ref_tol = 1e-10;
  double rho_gate = 0.998;  // generation-time spectral-radius acceptance gate
  bool literal_flux = false;
  PhantomOptions phantom;
};

Exp2DConfig exp2d_config_from_json(const json& j);
Exp3DConfig exp3d_config_from_json(const json& j);
json to_json(const Exp2DConfig& c);
json to_json(const Exp3DConfig& c);

PdeProblem build_advection_diffusion_2d(int mesh, double extent, double theta,
                                        double dt, double vx, double vy, double kxx,
                                        double kyy);
Field initial_condition_2d(const GridSpec& grid, const BoundaryMask& mask,
                           double lambda, double gamma, double k, double l);

PdeProblem build_problem3d(const TissueMap& tissue, double kappa_w, double rho,
                           const Exp3DConfig& cfg);

struct Sample {
  int id = 0;
  std::string role;  // "train" | "test"
  uint64_t seed = 0;
  json params;
  PdeProblem problem;
  Field u0;
  std::vector<Field> refs;
};

struct Dataset {
  std::string kind;  // "exp2d" | "exp3d"
  uint64_t seed = 0;
  json config;
  int steps = 0;
  std::vector<Sample> samples;
  std::string content_hash;
};

Dataset gen2d(const Exp2DConfig& cfg, uint64_t seed, const std::string& outdir,
              int threads = 1);
Dataset gen3d(const Exp3DConfig& cfg, uint64_t seed, const std::string& outdir,
              int threads = 1);
Dataset load_dataset(const std::string& dir);

std::vector<TrainSample> train_samples(const Dataset& ds, const std::string& role,
                                       int limit = -1);

enum class BenchMode { EqualCost, EqualError };

struct BenchRow {
  int sample_id = 0;
  int time_index = 0;
  std::string method;  // "neural" | "semi-implicit" | "semi-implicit-25"
  int iterations = 0;
  double cost_units = 0.0;  // psi iteration = 1 unit, phi iteration = 2
  double mse = 0.0;
  double linf = 0.0;
  double runtime_ms = 0.0;  // 0 unless timing was requested
};

struct BenchSummary {
  double mean_mse_neural = 0.0;
  double mean_mse_semi = 0.0;
  double ratio_of_means = 0.0;
  double mean_of_ratios = 0.0;
  // equal-error mode
  double mean_cost_ratio = 0.0;
  double mean_runtime_ratio = 0.0;
  int samples = 0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  BenchSummary summary;
};

// Equal-cost: phi at m_phi iterations/step vs psi at 2 m_phi (plus the
// 25-iteration psi row set for 2D datasets). Equal-error: searches psi's
// iteration count until its trajectory-mean mse matches phi's within 5%.
BenchResult benchmark(const Dataset& ds, const std::vector<HStack>& stacks,
                      BenchMode mode, int m_phi, bool timing = false,
                      int threads = 1);

void write_metrics_csv(const std::string& path, const std::vector<BenchRow>& rows);

struct ShiftRow {
  std::string shift;  // "none" | "theta=0.75" | "dt=0.12" | "dx=0.049"
  int time_index = 0;
  std::string method;
  double mean_mse = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
};

struct ShiftResult {
  std::vector<ShiftRow> rows;
};

// Builds shifted test sets (one parameter at a time, coefficients redrawn
// from the training ranges) and runs the equal-cost comparison per time
// step. When a dataset is supplied, shift "none" reuses its test samples.
ShiftResult shift_eval(const Exp2DConfig& base, const std::vector<HStack>& stacks,
                       const std::vector<std::string>& shifts, uint64_t seed,
                       int m_phi, int threads = 1,
                       const Dataset* reuse_for_none = nullptr,
                       int shift_samples = -1);

void write_shift_csv(const std::string& path, const std::vector<ShiftRow>& rows);

}  // namespace npde
