#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "npde/neural.hpp"

namespace npde {

using json = nlohmann::json;

// Field container: "NPDE" | u32 LE version=1 | u32 LE header length |
// UTF-8 JSON header {"dims","spacing","dtype":"f64","name","time_index"} |
// payload of product(dims) f64 LE values, row-major, last axis fastest.
struct LoadedField {
  Field field;
  std::string name;
  std::optional<int> time_index;
  bool finite = true;  // loads with NaN/Inf succeed but are flagged
};

void write_field(const std::string& path, const Field& f, const std::string& name = "",
                 std::optional<int> time_index = std::nullopt);
LoadedField read_field(const std::string& path);

// Checkpoint container: "NPDW" | version | JSON header {ndim, n_operators,
// channels, layer shapes, term descriptors, canonical weight order} |
// concatenated f64 LE weights (stack-major; per layer out, in, tap).
struct TermDescriptor {
  std::string kind;  // "first-derivative" | "second-derivative" | "custom"
  int axis = 0;
};

struct Checkpoint {
  int ndim = 0;
  int channels = 0;
  std::vector<TermDescriptor> terms;
  std::vector<HStack> stacks;
};

void write_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::string& path);

std::string term_kind_name(const Stencil& s);

// Throws a compatibility error naming the first mismatched term.
void check_compatible(const Checkpoint& c, const PdeProblem& p);

// Problem descriptor JSON consumed by the CLI:
// {"theta","dt","spacing":[..],"dims":[..],
//  "terms":[{"kind","axis","coeff":const|{"file":..}}],
//  "boundary":const|{"file":..},"mask":"auto-edge"|{"file":..},
//  "source":null|{"type":"logistic","rho":..},"u0":const|{"file":..}}
// Paths are resolved relative to the descriptor's directory.
struct ProblemConfig {
  PdeProblem problem;
  Field u0;
};

ProblemConfig read_problem_json(const std::string& path);
ProblemConfig problem_from_json(const json& j, const std::string& base_dir);

json load_json(const std::string& path);
void save_json(const std::string& path, const json& j);

// FNV-1a over payload bytes; manifests store it so regeneration can be
// verified cheaply.
uint64_t fnv1a(const unsigned char* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL);
std::string hash_hex(uint64_t h);

int env_thread_count();  // NPDE_THREADS, default 1

}  // namespace npde
