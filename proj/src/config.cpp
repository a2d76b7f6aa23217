#include "promptforge/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pf {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("config: " + msg);
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::int64_t x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects a real number, got '" + v + "'");
  }
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ModelConfig::validate() const {
  require(d >= 1, "d must be >= 1");
  require(d_v >= 1, "d_v must be >= 1");
  require(d_l >= 1, "d_l must be >= 1");
  require(L >= 1, "L must be >= 1");
  require(heads >= 1, "heads must be >= 1");
  require(d_v % heads == 0, "d_v must be divisible by heads");
  require(d_l % heads == 0, "d_l must be divisible by heads");
  require(M_a >= 1, "M_a must be >= 1");
  require(vocab >= 1, "vocab must be >= 1");
  require(K >= 1, "K must be >= 1");
  require(a >= 1 && a <= K, "a must satisfy 1 <= a <= K");
  require(b >= 1 && b < M_b, "b must satisfy 1 <= b < M_b");
  require(vocab >= b, "vocab must cover the b template token ids");
  require(J >= 1 && J <= L, "J must satisfy 1 <= J <= L");
  require(N >= 0, "N must be >= 0");
  require(tau > 0.0, "tau must be positive");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(mlp_ratio >= 1, "mlp_ratio must be >= 1");
}

void TrainConfig::validate() const {
  require(lr > 0.0, "lr must be positive");
  require(epochs >= 0, "epochs must be >= 0");
  require(batch >= 1, "batch must be >= 1");
  require(shots >= 1, "shots must be >= 1");
  require(noise >= 0.0, "noise must be >= 0");
  require(base_fraction > 0.0 && base_fraction < 1.0, "base_fraction must be in (0, 1)");
  require(test_per_class >= 1, "test_per_class must be >= 1");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty() && !value.empty(), "line " + std::to_string(lineno) + " is not 'key = value'");

    ModelConfig& m = cfg.model;
    TrainConfig& t = cfg.train;
    if (key == "d") m.d = parse_int(key, value);
    else if (key == "d_v") m.d_v = parse_int(key, value);
    else if (key == "d_l") m.d_l = parse_int(key, value);
    else if (key == "L") m.L = parse_int(key, value);
    else if (key == "heads") m.heads = parse_int(key, value);
    else if (key == "M_a") m.M_a = parse_int(key, value);
    else if (key == "M_b") m.M_b = parse_int(key, value);
    else if (key == "vocab") m.vocab = parse_int(key, value);
    else if (key == "K") m.K = parse_int(key, value);
    else if (key == "a") m.a = parse_int(key, value);
    else if (key == "b") m.b = parse_int(key, value);
    else if (key == "J") m.J = parse_int(key, value);
    else if (key == "N") m.N = parse_int(key, value);
    else if (key == "lambda") m.lambda = parse_real(key, value);
    else if (key == "tau") m.tau = parse_real(key, value);
    else if (key == "seed") m.seed = parse_uint(key, value);
    else if (key == "mlp_ratio" || key == "mlp-ratio") m.mlp_ratio = parse_int(key, value);
    else if (key == "static_text_prompt") {
      const std::int64_t v = parse_int(key, value);
      require(v == 0 || v == 1, "static_text_prompt must be 0 or 1");
      m.static_text_prompt = v != 0;
    }
    else if (key == "lr") t.lr = parse_real(key, value);
    else if (key == "epochs") t.epochs = parse_int(key, value);
    else if (key == "batch") t.batch = parse_int(key, value);
    else if (key == "shots") t.shots = parse_int(key, value);
    else if (key == "noise") t.noise = parse_real(key, value);
    else if (key == "base_fraction") t.base_fraction = parse_real(key, value);
    else if (key == "test_per_class") t.test_per_class = parse_int(key, value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_to_text(const RunConfig& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  std::ostringstream os;
  os << "d = " << m.d << "\n";
  os << "d_v = " << m.d_v << "\n";
  os << "d_l = " << m.d_l << "\n";
  os << "L = " << m.L << "\n";
  os << "heads = " << m.heads << "\n";
  os << "M_a = " << m.M_a << "\n";
  os << "M_b = " << m.M_b << "\n";
  os << "vocab = " << m.vocab << "\n";
  os << "K = " << m.K << "\n";
  os << "a = " << m.a << "\n";
  os << "b = " << m.b << "\n";
  os << "J = " << m.J << "\n";
  os << "N = " << m.N << "\n";
  os << "lambda = " << fmt_real(m.lambda) << "\n";
  os << "tau = " << fmt_real(m.tau) << "\n";
  os << "seed = " << m.seed << "\n";
  os << "mlp_ratio = " << m.mlp_ratio << "\n";
  os << "static_text_prompt = " << (m.static_text_prompt ? 1 : 0) << "\n";
  os << "lr = " << fmt_real(t.lr) << "\n";
  os << "epochs = " << t.epochs << "\n";
  os << "batch = " << t.batch << "\n";
  os << "shots = " << t.shots << "\n";
  os << "noise = " << fmt_real(t.noise) << "\n";
  os << "base_fraction = " << fmt_real(t.base_fraction) << "\n";
  os << "test_per_class = " << t.test_per_class << "\n";
  return os.str();
}

}  // namespace pf
