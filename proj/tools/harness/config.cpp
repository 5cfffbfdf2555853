#include "harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "harness/csv.hpp"

namespace harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

long parse_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end)
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end)
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(out))
    throw ConfigError("config key '" + key + "': expected a finite number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

/// "n" sets all three modes, "a,b,c" sets them individually.
Dims3 parse_triple(const std::string& key, const std::string& v) {
  const auto parts = split(v, ',');
  if (parts.size() == 1) {
    const auto n = parse_long(key, parts[0]);
    return {n, n, n};
  }
  if (parts.size() != 3) throw ConfigError("config key '" + key + "': expected 1 or 3 values");
  return {parse_long(key, parts[0]), parse_long(key, parts[1]), parse_long(key, parts[2])};
}

std::array<long, 3> parse_index(const std::string& v) {
  const auto parts = split(v, ',');
  if (parts.size() != 3) throw ConfigError("form index '" + v + "' needs three components");
  return {parse_long("form", parts[0]), parse_long("form", parts[1]), parse_long("form", parts[2])};
}

std::string triple_string(const std::array<long, 3>& a) {
  return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]);
}

}  // namespace

const char* kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::estimation: return "estimate";
    case ExperimentKind::normality: return "normality";
    case ExperimentKind::coverage: return "coverage";
    case ExperimentKind::inference: return "infer";
    case ExperimentKind::record: return "record";
  }
  return "unknown";
}

FormSpec parse_form(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw ConfigError("form '" + text + "': expected entry:i,j,k or contrast:i,j,k;a,b,c");
  const auto head = trim(text.substr(0, colon));
  const auto body = trim(text.substr(colon + 1));
  FormSpec f;
  if (head == "entry") {
    f.kind = FormSpec::Kind::entry;
    f.a = parse_index(body);
  } else if (head == "contrast") {
    const auto parts = split(body, ';');
    if (parts.size() != 2) throw ConfigError("contrast form needs two indices separated by ';'");
    f.kind = FormSpec::Kind::contrast;
    f.a = parse_index(parts[0]);
    f.b = parse_index(parts[1]);
  } else {
    throw ConfigError("unknown form kind '" + head + "'");
  }
  return f;
}

std::string FormSpec::to_string() const {
  if (kind == Kind::entry) return "entry:" + triple_string(a);
  return "contrast:" + triple_string(a) + ";" + triple_string(b);
}

tensorstream::LinearFormd FormSpec::build(const Dims3& dims) const {
  if (kind == Kind::entry) return tensorstream::LinearFormd::entry(dims, a);
  return tensorstream::LinearFormd::contrast(dims, a, b);
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto v = trim(value);
  auto& pr = cfg.problem;
  if (key == "p") {
    pr.dims = parse_triple(key, v);
  } else if (key == "p1" || key == "p2" || key == "p3") {
    pr.dims[static_cast<std::size_t>(key[1] - '1')] = parse_long(key, v);
  } else if (key == "r") {
    pr.ranks = parse_triple(key, v);
  } else if (key == "r1" || key == "r2" || key == "r3") {
    pr.ranks[static_cast<std::size_t>(key[1] - '1')] = parse_long(key, v);
  } else if (key == "lambda") {
    pr.lambda = parse_double(key, v);
  } else if (key == "sigma") {
    pr.sigma = parse_double(key, v);
  } else if (key == "seed") {
    pr.seed = parse_u64(key, v);
  } else if (key == "eta0") {
    cfg.eta0 = parse_double(key, v);
  } else if (key == "alpha") {
    cfg.alpha = parse_double(key, v);
  } else if (key == "horizon") {
    cfg.horizon = parse_long(key, v);
  } else if (key == "replicates") {
    cfg.replicates = static_cast<int>(parse_long(key, v));
  } else if (key == "cadence") {
    cfg.cadence = parse_long(key, v);
  } else if (key == "form") {
    cfg.form = parse_form(v);
  } else if (key == "significance") {
    cfg.significance = parse_double(key, v);
  } else if (key == "warmup") {
    if (v == "auto") cfg.warmup.reset();
    else cfg.warmup = parse_long(key, v);
  } else if (key == "init_samples") {
    if (v == "auto") cfg.init_samples.reset();
    else cfg.init_samples = parse_long(key, v);
  } else if (key == "grid") {
    cfg.grid.clear();
    if (v != "auto")
      for (const auto& part : split(v, ',')) cfg.grid.push_back(parse_long(key, part));
  } else if (key == "vanilla") {
    cfg.vanilla = parse_bool(key, v);
  } else if (key == "log_scale") {
    cfg.log_scale = parse_bool(key, v);
  } else if (key == "known_truth") {
    cfg.known_truth = parse_bool(key, v);
  } else if (key == "hooi_sweeps") {
    cfg.hooi_sweeps = static_cast<int>(parse_long(key, v));
  } else if (key == "hooi_tol") {
    cfg.hooi_tol = parse_double(key, v);
  } else if (key == "out") {
    cfg.out_dir = v;
  } else if (key == "stream") {
    cfg.stream_path = v;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(cfg, buf.str(), path);
}

void apply_paper_scale(ExperimentConfig& cfg) {
  auto& pr = cfg.problem;
  pr.lambda = 2;
  pr.sigma = 1;
  cfg.eta0 = 5e-4;
  cfg.alpha = 0.501;
  cfg.replicates = 100;
  if (cfg.kind == ExperimentKind::estimation) {
    pr.dims = {20, 20, 20};
    pr.ranks = {3, 3, 3};
    cfg.horizon = 20000;
  } else {
    pr.dims = {30, 30, 30};
    pr.ranks = {1, 1, 1};
    cfg.horizon = 10000;
    cfg.form = FormSpec{};
    cfg.grid = {2000, 5000, 10000};
  }
}

void ExperimentConfig::validate() const {
  try {
    problem.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (cadence < 1) throw ConfigError("cadence must be >= 1");
  if (!(significance > 0 && significance < 1)) throw ConfigError("significance must lie in (0, 1)");
  if (!(eta0 > 0)) throw ConfigError("eta0 must be positive");
  if (!(alpha > 0.5 && alpha < 1)) throw ConfigError("alpha must lie in (0.5, 1)");
  if (warmup && *warmup < 1) throw ConfigError("warmup must be >= 1");
  if (init_samples && *init_samples < 1) throw ConfigError("init_samples must be >= 1");
  if (hooi_sweeps < 0) throw ConfigError("hooi_sweeps must be >= 0");
  for (std::size_t k = 0; k < 3; ++k) {
    if (form.a[k] < 0 || form.a[k] >= problem.dims[k] || form.b[k] < 0 ||
        form.b[k] >= problem.dims[k])
      throw ConfigError("form index out of range for dims " + tensorstream::dims_string(problem.dims));
  }
  if (form.kind == FormSpec::Kind::contrast && form.a == form.b)
    throw ConfigError("contrast form needs two distinct indices");
  if (kind == ExperimentKind::normality || kind == ExperimentKind::coverage) {
    const auto g = effective_grid();
    const long t0 = effective_warmup();
    for (auto t : g)
      if (t <= t0 || t > horizon)
        throw ConfigError("grid point " + std::to_string(t) + " must lie in (warmup, horizon] = (" +
                          std::to_string(t0) + ", " + std::to_string(horizon) + "]");
  }
}

tensorstream::StepSchedule ExperimentConfig::schedule() const {
  return tensorstream::StepSchedule::for_df(eta0, alpha, problem.df());
}

long ExperimentConfig::n0() const {
  if (init_samples) return *init_samples;
  return tensorstream::default_init_samples(problem.lambda, problem.sigma, problem.df());
}

std::vector<long> ExperimentConfig::effective_grid() const {
  if (kind == ExperimentKind::normality) return {horizon};
  std::vector<long> g = grid;
  if (g.empty()) g = {std::max(1L, horizon / 5), std::max(1L, horizon / 2), horizon};
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

long ExperimentConfig::effective_warmup() const {
  if (warmup) return *warmup;
  return std::min(tensorstream::default_warmup(schedule()), std::max(1L, horizon / 10));
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  const auto& pr = problem;
  o << "kind=" << kind_name(kind) << "\n";
  o << "p=" << pr.dims[0] << "," << pr.dims[1] << "," << pr.dims[2] << "\n";
  o << "r=" << pr.ranks[0] << "," << pr.ranks[1] << "," << pr.ranks[2] << "\n";
  o << "lambda=" << format_number(pr.lambda) << "\n";
  o << "sigma=" << format_number(pr.sigma) << "\n";
  o << "seed=" << pr.seed << "\n";
  o << "eta0=" << format_number(eta0) << "\n";
  o << "alpha=" << format_number(alpha) << "\n";
  o << "horizon=" << horizon << "\n";
  o << "replicates=" << replicates << "\n";
  o << "cadence=" << cadence << "\n";
  o << "form=" << form.to_string() << "\n";
  o << "significance=" << format_number(significance) << "\n";
  o << "warmup=" << effective_warmup() << "\n";
  o << "init_samples=" << n0() << "\n";
  o << "grid=";
  const auto g = effective_grid();
  for (std::size_t i = 0; i < g.size(); ++i) o << (i ? "," : "") << g[i];
  o << "\n";
  o << "vanilla=" << (vanilla ? "true" : "false") << "\n";
  o << "known_truth=" << (known_truth ? "true" : "false") << "\n";
  o << "hooi_sweeps=" << hooi_sweeps << "\n";
  o << "hooi_tol=" << format_number(hooi_tol) << "\n";
  return o.str();
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ExperimentConfig::hash_hex() const {
  char buf[17];
  const auto r = std::to_chars(buf, buf + sizeof buf, hash(), 16);
  std::string s(buf, r.ptr);
  return std::string(16 - s.size(), '0') + s;
}

int worker_threads(int replicates) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TENSORSTREAM_THREADS")) {
    const std::string v = env;
    int parsed = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || parsed < 1)
      throw ConfigError("TENSORSTREAM_THREADS must be a positive integer");
    n = parsed;
  }
  return std::clamp(n, 1, std::max(1, replicates));
}

}  // namespace harness
