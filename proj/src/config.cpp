#include "bnhp/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <vector>

#include "bnhp/error.hpp"

namespace bnhp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  require(!text.empty() && ec == std::errc() && ptr == text.data() + text.size(), ErrorKind::ParseError,
          "bad value for " + key + ": '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  fail(ErrorKind::ParseError, "bad value for " + key + ": '" + text + "' (expected true or false)");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  require(!out.empty(), ErrorKind::ParseError, "empty list for " + key);
  return out;
}

std::string list_text(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

struct Field {
  const char* name;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field real(const char* name, double& ref) {
  return {name, [name, &ref](const std::string& v) { ref = parse_number<double>(name, v); },
          [&ref] { return format_double(ref); }};
}

template <class T>
Field count(const char* name, T& ref) {
  return {name, [name, &ref](const std::string& v) { ref = parse_number<T>(name, v); },
          [&ref] { return std::to_string(ref); }};
}

Field flag(const char* name, bool& ref) {
  return {name, [name, &ref](const std::string& v) { ref = parse_bool(name, v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

Field list(const char* name, std::vector<double>& ref) {
  return {name, [name, &ref](const std::string& v) { ref = parse_list(name, v); }, [&ref] { return list_text(ref); }};
}

std::vector<Field> fields(RunConfig& c) {
  return {
      real("lr", c.train.lr),
      real("beta1", c.train.beta1),
      real("beta2", c.train.beta2),
      real("eps", c.train.eps),
      real("l2_lambda", c.train.l2_lambda),
      count("batch_size", c.train.batch_size),
      count("epochs", c.train.epochs),
      count("seed", c.train.seed),
      real("clip_norm", c.train.clip_norm),
      count("threads", c.train.threads),
      real("max_clamped_fraction", c.train.max_clamped_fraction),
      real("p_fnn", c.dropout.p_fnn),
      real("p_rnn_input", c.dropout.p_rnn_input),
      real("p_rnn_recurrent", c.dropout.p_rnn_recurrent),
      real("sigma_r", c.dropout.sigma_r),
      count("samples", c.predict.samples),
      list("k_levels", c.predict.k_levels),
      real("bisect_tol", c.predict.bisect_tol),
      count("bisect_max_iter", c.predict.bisect_max_iter),
      flag("persist_masks", c.predict.persist_masks),
      count("hidden", c.arch.hidden),
      count("layers", c.arch.layers),
      count("units", c.arch.units),
      count("truncation", c.arch.truncation),
      count("spatial_units", c.spatial_units),
      real("train_frac", c.split.train_frac),
      real("valid_frac", c.split.valid_frac),
      real("test_frac", c.split.test_frac),
      real("time_scale", c.time_scale),
      flag("rebase", c.rebase),
      list("decays", c.ensemble.decays),
      count("max_iter", c.shp.max_iter),
      real("grad_tol", c.shp.grad_tol),
  };
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  dropout.validate();
  predict.validate();
  split.validate();
  ensemble.validate();
  require(arch.hidden >= 1 && arch.layers >= 1 && arch.units >= 1 && arch.truncation >= 1, ErrorKind::InvalidParam,
          "hidden, layers, units and truncation must be >= 1");
  require(spatial_units >= 1, ErrorKind::InvalidParam, "spatial_units must be >= 1");
  require(std::isfinite(time_scale) && time_scale > 0.0, ErrorKind::InvalidParam, "time_scale must be > 0");
}

bool set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (auto& f : fields(cfg)) {
    if (key == f.name) {
      f.set(value);
      return true;
    }
  }
  return false;
}

void read_config(std::istream& in, RunConfig& cfg) {
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    raw = trim(raw);
    if (raw.empty()) continue;
    const auto eq = raw.find('=');
    const std::string where = "config line " + std::to_string(line);
    require(eq != std::string::npos, ErrorKind::ParseError, where + ": expected key = value");
    const std::string key = trim(raw.substr(0, eq));
    bool known = false;
    try {
      known = set_config_value(cfg, key, trim(raw.substr(eq + 1)));
    } catch (const Error& e) {
      fail(e.kind(), where + ": " + e.message());
    }
    require(known, ErrorKind::SchemaError, where + ": unknown key '" + key + "'");
  }
}

void read_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open config " + path);
  read_config(in, cfg);
}

std::string config_text(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  for (auto& f : fields(copy)) out += std::string(f.name) + " = " + f.get() + "\n";
  return out;
}

}  // namespace bnhp
