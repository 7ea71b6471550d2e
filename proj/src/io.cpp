#include "npde/io.hpp"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace npde {

namespace fs = std::filesystem;

namespace {

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is, const std::string& path, size_t offset) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) {
    std::ostringstream os;
    os << "format error in " << path << ": truncated at byte offset " << offset;
    throw Error(os.str());
  }
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void write_payload(std::ostream& os, const Eigen::ArrayXd& data) {
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(data.data()),
           std::streamsize(data.size()) * 8);
}

Eigen::ArrayXd read_payload(std::istream& is, Eigen::Index count,
                            const std::string& path, size_t offset) {
  Eigen::ArrayXd data(count);
  is.read(reinterpret_cast<char*>(data.data()), std::streamsize(count) * 8);
  if (!is) {
    std::ostringstream os;
    os << "format error in " << path << ": payload truncated at byte offset "
       << offset + size_t(is.gcount());
    throw Error(os.str());
  }
  return data;
}

void check_magic(std::istream& is, const char* magic, const std::string& path) {
  char m[4];
  is.read(m, 4);
  if (!is || std::memcmp(m, magic, 4) != 0) {
    std::ostringstream os;
    os << "format error in " << path << ": bad magic at byte offset 0 (expected "
       << magic << ")";
    throw Error(os.str());
  }
}

json read_header(std::istream& is, const std::string& path) {
  const uint32_t version = read_u32(is, path, 4);
  if (version != 1) {
    std::ostringstream os;
    os << "format error in " << path << ": unsupported version " << version
       << " at byte offset 4";
    throw Error(os.str());
  }
  const uint32_t hlen = read_u32(is, path, 8);
  std::string header(hlen, '\0');
  is.read(header.data(), hlen);
  if (!is) {
    std::ostringstream os;
    os << "format error in " << path << ": header truncated at byte offset "
       << 12 + size_t(is.gcount());
    throw Error(os.str());
  }
  try {
    return json::parse(header);
  } catch (const json::exception& e) {
    throw Error("format error in " + path + ": header is not valid JSON (" + e.what() +
                ")");
  }
}

void write_container(const std::string& path, const char* magic, const json& header,
                     const std::vector<const Eigen::ArrayXd*>& payloads) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "cannot open for writing: " + path);
  os.write(magic, 4);
  write_u32(os, 1);
  const std::string h = header.dump();
  write_u32(os, uint32_t(h.size()));
  os.write(h.data(), std::streamsize(h.size()));
  for (const auto* p : payloads) write_payload(os, *p);
  os.flush();
  check(os.good(), "write failed: " + path);
}

}  // namespace

void write_field(const std::string& path, const Field& f, const std::string& name,
                 std::optional<int> time_index) {
  json header;
  header["dims"] = std::vector<int>(f.grid.dims.begin(), f.grid.dims.begin() + f.grid.ndim);
  header["spacing"] =
      std::vector<double>(f.grid.spacing.begin(), f.grid.spacing.begin() + f.grid.ndim);
  header["dtype"] = "f64";
  header["name"] = name;
  if (time_index)
    header["time_index"] = *time_index;
  else
    header["time_index"] = nullptr;
  write_container(path, "NPDE", header, {&f.data});
}

LoadedField read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open: " + path);
  check_magic(is, "NPDE", path);
  const json header = read_header(is, path);
  check(header.value("dtype", "") == "f64", "format error in " + path + ": dtype");
  std::vector<int> dims = header.at("dims").get<std::vector<int>>();
  std::vector<double> spacing = header.at("spacing").get<std::vector<double>>();
  GridSpec grid(dims, spacing);
  const size_t payload_off = 12 + header.dump().size();
  LoadedField lf;
  lf.field = Field(grid, read_payload(is, grid.total(), path, payload_off));
  lf.name = header.value("name", "");
  if (header.contains("time_index") && !header.at("time_index").is_null())
    lf.time_index = header.at("time_index").get<int>();
  lf.finite = lf.field.finite();
  return lf;
}

std::string term_kind_name(const Stencil& s) {
  switch (s.kind) {
    case StencilKind::FirstDerivative: return "first-derivative";
    case StencilKind::SecondDerivative: return "second-derivative";
    default: return "custom";
  }
}

void write_checkpoint(const std::string& path, const Checkpoint& c) {
  check(c.stacks.size() == c.terms.size(), "checkpoint: stack/term count mismatch");
  json header;
  header["ndim"] = c.ndim;
  header["n_operators"] = c.stacks.size();
  header["channels"] = c.channels;
  header["weight_order"] = "stack-major; per stack layers 1-3; per layer (out, in, tap), taps row-major, last axis fastest";
  json terms = json::array();
  for (const auto& t : c.terms) terms.push_back({{"kind", t.kind}, {"axis", t.axis}});
  header["terms"] = terms;
  json layers = json::array();
  std::vector<const Eigen::ArrayXd*> payloads;
  for (const auto& s : c.stacks) {
    json stack_layers = json::array();
    for (const auto& l : s.layers) {
      stack_layers.push_back(
          {{"out", l.out_ch}, {"in", l.in_ch}, {"weights", l.w.size()}});
      payloads.push_back(&l.w);
    }
    layers.push_back(stack_layers);
  }
  header["layers"] = layers;
  write_container(path, "NPDW", header, payloads);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open: " + path);
  check_magic(is, "NPDW", path);
  const json header = read_header(is, path);
  Checkpoint c;
  c.ndim = header.at("ndim").get<int>();
  c.channels = header.at("channels").get<int>();
  for (const auto& t : header.at("terms"))
    c.terms.push_back({t.at("kind").get<std::string>(), t.at("axis").get<int>()});
  const size_t n_ops = header.at("n_operators").get<size_t>();
  check(n_ops == c.terms.size(), "format error in " + path + ": term count");
  size_t offset = 12 + header.dump().size();
  const json& layers = header.at("layers");
  check(layers.size() == n_ops, "format error in " + path + ": layer table");
  for (size_t s = 0; s < n_ops; ++s) {
    HStack h;
    h.ndim = c.ndim;
    h.channels = c.channels;
    for (int l = 0; l < 3; ++l) {
      const json& lj = layers[s][l];
      ConvLayer layer;
      layer.out_ch = lj.at("out").get<int>();
      layer.in_ch = lj.at("in").get<int>();
      const Eigen::Index count = lj.at("weights").get<Eigen::Index>();
      check(count == Eigen::Index(layer.out_ch) * layer.in_ch * layer.taps(c.ndim),
            "format error in " + path + ": weight count");
      layer.w = read_payload(is, count, path, offset);
      offset += size_t(count) * 8;
      h.layers[l] = layer;
    }
    c.stacks.push_back(std::move(h));
  }
  for (const auto& h : c.stacks)
    for (const auto& l : h.layers)
      check(l.w.isFinite().all(), "checkpoint " + path + ": non-finite weights");
  return c;
}

void check_compatible(const Checkpoint& c, const PdeProblem& p) {
  check(c.ndim == p.grid.ndim, "checkpoint incompatible: ndim mismatch");
  if (c.terms.size() != p.terms.size()) {
    std::ostringstream os;
    os << "checkpoint incompatible: " << c.terms.size() << " operators vs "
       << p.terms.size() << " problem terms";
    throw Error(os.str());
  }
  for (size_t i = 0; i < c.terms.size(); ++i) {
    const auto& want = p.terms[i].stencil;
    if (c.terms[i].kind != term_kind_name(want) || c.terms[i].axis != want.axis) {
      std::ostringstream os;
      os << "checkpoint incompatible at term " << i << ": checkpoint ("
         << c.terms[i].kind << ", axis " << c.terms[i].axis << ") vs problem ("
         << term_kind_name(want) << ", axis " << want.axis << ")";
      throw Error(os.str());
    }
  }
}

namespace {

Field field_from_entry(const json& j, const GridSpec& grid, const std::string& base_dir,
                       const char* what) {
  if (j.is_number()) return Field(grid, j.get<double>());
  if (j.is_object() && j.contains("file")) {
    fs::path p = fs::path(base_dir) / j.at("file").get<std::string>();
    LoadedField lf = read_field(p.string());
    check(lf.field.grid == grid, std::string(what) + ": field file grid mismatch");
    check(lf.finite, std::string(what) + ": field file has non-finite values");
    return lf.field;
  }
  throw Error(std::string("problem config: ") + what +
              " must be a number or {\"file\": ...}");
}

}  // namespace

ProblemConfig problem_from_json(const json& j, const std::string& base_dir) {
  check(j.contains("theta") && j.contains("dt") && j.contains("dims") &&
            j.contains("spacing") && j.contains("terms"),
        "problem config: required keys: theta, dt, dims, spacing, terms");
  GridSpec grid(j.at("dims").get<std::vector<int>>(),
                j.at("spacing").get<std::vector<double>>());
  ProblemConfig pc;
  pc.problem.grid = grid;
  pc.problem.theta = j.at("theta").get<double>();
  pc.problem.dt = j.at("dt").get<double>();

  for (const auto& tj : j.at("terms")) {
    const std::string kind = tj.at("kind").get<std::string>();
    const int axis = tj.value("axis", 0);
    PdeTerm term;
    if (kind == "first-derivative")
      term.stencil = make_central(StencilKind::FirstDerivative, axis, grid.ndim);
    else if (kind == "second-derivative")
      term.stencil = make_central(StencilKind::SecondDerivative, axis, grid.ndim);
    else
      throw Error("problem config: unknown term kind '" + kind + "'");
    term.coeff = field_from_entry(tj.at("coeff"), grid, base_dir, "coeff");
    pc.problem.terms.push_back(std::move(term));
  }

  json bj = j.contains("boundary") ? j.at("boundary") : json(0.0);
  pc.problem.boundary = field_from_entry(bj, grid, base_dir, "boundary");

  if (!j.contains("mask") || (j.at("mask").is_string() &&
                              j.at("mask").get<std::string>() == "auto-edge")) {
    pc.problem.mask = edge_mask(grid);
  } else if (j.at("mask").is_object()) {
    Field mf = field_from_entry(j.at("mask"), grid, base_dir, "mask");
    pc.problem.mask = BoundaryMask(grid, std::move(mf.data));
  } else {
    throw Error("problem config: mask must be \"auto-edge\" or {\"file\": ...}");
  }

  if (j.contains("source") && !j.at("source").is_null()) {
    const json& sj = j.at("source");
    check(sj.value("type", "") == "logistic",
          "problem config: only source type 'logistic' is supported");
    pc.problem.source =
        LogisticSource{field_from_entry(sj.at("rho"), grid, base_dir, "rho")};
  }

  json uj = j.contains("u0") ? j.at("u0") : json(0.0);
  pc.u0 = field_from_entry(uj, grid, base_dir, "u0");

  validate(pc.problem);
  return pc;
}

ProblemConfig read_problem_json(const std::string& path) {
  return problem_from_json(load_json(path), fs::path(path).parent_path().string());
}

json load_json(const std::string& path) {
  std::ifstream is(path);
  check(is.good(), "cannot open: " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error("invalid JSON in " + path + ": " + e.what());
  }
}

void save_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  check(os.good(), "cannot open for writing: " + path);
  os << j.dump(2) << "\n";
  check(os.good(), "write failed: " + path);
}

uint64_t fnv1a(const unsigned char* data, size_t len, uint64_t h) {
  for (size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

int env_thread_count() {
  const char* v = std::getenv("NPDE_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n < 1 ? 1 : (n > 64 ? 64 : n);
}

}  // namespace npde
