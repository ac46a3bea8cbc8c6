#include "bnhp/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bnhp/error.hpp"

namespace bnhp {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "bnhp-checkpoint";

constexpr std::pair<ModelKind, std::string_view> kKindNames[] = {
    {ModelKind::Bnhp, "bnhp"}, {ModelKind::StBnhp, "st-bnhp"}, {ModelKind::Shp, "shp"},
    {ModelKind::Eh, "eh"},     {ModelKind::StNhp, "st-nhp"},   {ModelKind::StHomog, "st-homog"},
};

json num(double v) {
  require(std::isfinite(v), ErrorKind::NonFinite, "checkpoint value is not finite");
  return v;
}

const json& at(const json& j, const char* key) {
  require(j.is_object() && j.contains(key), ErrorKind::SchemaError, std::string("checkpoint is missing key '") + key + "'");
  return j.at(key);
}

double get_double(const json& j, const char* key) {
  const json& v = at(j, key);
  require(v.is_number(), ErrorKind::SchemaError, std::string("checkpoint key '") + key + "' must be a number");
  return v.get<double>();
}

std::size_t get_size(const json& j, const char* key) {
  const json& v = at(j, key);
  require(v.is_number_unsigned(), ErrorKind::SchemaError, std::string("checkpoint key '") + key + "' must be a count");
  return v.get<std::size_t>();
}

json tensor_json(const Tensor& t) {
  json data = json::array();
  for (double v : t.data) data.push_back(num(v));
  return {{"rows", t.rows}, {"cols", t.cols}, {"data", std::move(data)}};
}

Tensor tensor_from(const json& j) {
  Tensor t(get_size(j, "rows"), get_size(j, "cols"));
  const json& data = at(j, "data");
  require(data.is_array() && data.size() == t.size(), ErrorKind::ShapeMismatch,
          "tensor data length does not match rows x cols");
  for (std::size_t i = 0; i < t.size(); ++i) {
    require(data[i].is_number(), ErrorKind::SchemaError, "tensor entries must be numbers");
    t.data[i] = data[i].get<double>();
  }
  return t;
}

json nhp_json(const NhpModel& m) {
  json layers = json::array();
  for (const auto& l : m.hazard_net.layers) {
    layers.push_back({{"raw_weights", tensor_json(l.raw_weights)}, {"bias", tensor_json(l.bias)}});
  }
  return {{"truncation", m.truncation},
          {"init_seed", m.seed},
          {"scaling", {{"tau_scaler", num(m.scaling.tau_scaler)}, {"time_scaler", num(m.scaling.time_scaler)}}},
          {"encoder",
           {{"input_weights", tensor_json(m.encoder.input_weights)},
            {"recurrent_weights", tensor_json(m.encoder.recurrent_weights)},
            {"bias", tensor_json(m.encoder.bias)}}},
          {"hazard_layers", std::move(layers)}};
}

NhpModel nhp_from(const json& j) {
  NhpModel m;
  m.truncation = get_size(j, "truncation");
  const json& seed = at(j, "init_seed");
  require(seed.is_number_unsigned(), ErrorKind::SchemaError, "init_seed must be an unsigned integer");
  m.seed = seed.get<std::uint64_t>();
  const json& s = at(j, "scaling");
  m.scaling = {get_double(s, "tau_scaler"), get_double(s, "time_scaler")};
  const json& e = at(j, "encoder");
  m.encoder.input_weights = tensor_from(at(e, "input_weights"));
  m.encoder.recurrent_weights = tensor_from(at(e, "recurrent_weights"));
  m.encoder.bias = tensor_from(at(e, "bias"));
  const json& layers = at(j, "hazard_layers");
  require(layers.is_array() && !layers.empty(), ErrorKind::SchemaError, "hazard_layers must be a nonempty array");
  for (const auto& l : layers) m.hazard_net.layers.push_back({tensor_from(at(l, "raw_weights")), tensor_from(at(l, "bias"))});

  const std::size_t H = m.encoder.hidden();
  require(m.encoder.input_weights.rows == 1 && m.encoder.input_weights.cols == H &&
              m.encoder.recurrent_weights.rows == H && m.encoder.recurrent_weights.cols == H &&
              m.encoder.bias.rows == 1,
          ErrorKind::ShapeMismatch, "encoder shapes are inconsistent");
  const auto& L = m.hazard_net.layers;
  require(L.front().raw_weights.rows == H + 2, ErrorKind::ShapeMismatch, "hazard input width must be hidden + 2");
  for (std::size_t i = 0; i < L.size(); ++i) {
    require(L[i].bias.rows == 1 && L[i].bias.cols == L[i].raw_weights.cols, ErrorKind::ShapeMismatch,
            "hazard layer bias shape is inconsistent");
    require(i == 0 || L[i].raw_weights.rows == L[i - 1].raw_weights.cols, ErrorKind::ShapeMismatch,
            "hazard layer widths do not chain");
  }
  require(L.back().raw_weights.cols == 1, ErrorKind::ShapeMismatch, "hazard output must be scalar");
  return m;
}

json st_json(const StModel& m) {
  const SpatialHead& h = m.spatial;
  return {{"temporal", nhp_json(m.temporal)},
          {"spatial",
           {{"w1", tensor_json(h.w1)},
            {"b1", tensor_json(h.b1)},
            {"w2", tensor_json(h.w2)},
            {"b2", tensor_json(h.b2)},
            {"sigma_floor", num(h.sigma_floor)},
            {"scaling",
             {{"mean_lat", num(h.scaling.mean_lat)},
              {"mean_lon", num(h.scaling.mean_lon)},
              {"std_lat", num(h.scaling.std_lat)},
              {"std_lon", num(h.scaling.std_lon)}}}}}};
}

StModel st_from(const json& j) {
  StModel m;
  m.temporal = nhp_from(at(j, "temporal"));
  const json& s = at(j, "spatial");
  SpatialHead& h = m.spatial;
  h.w1 = tensor_from(at(s, "w1"));
  h.b1 = tensor_from(at(s, "b1"));
  h.w2 = tensor_from(at(s, "w2"));
  h.b2 = tensor_from(at(s, "b2"));
  h.sigma_floor = get_double(s, "sigma_floor");
  const json& sc = at(s, "scaling");
  h.scaling = {get_double(sc, "mean_lat"), get_double(sc, "mean_lon"), get_double(sc, "std_lat"),
               get_double(sc, "std_lon")};
  const std::size_t in = m.temporal.encoder.hidden() + 2 * m.temporal.truncation;
  require(h.w1.rows == in && h.b1.rows == 1 && h.b1.cols == h.w1.cols && h.w2.rows == h.w1.cols &&
              h.w2.cols == 4 && h.b2.rows == 1 && h.b2.cols == 4,
          ErrorKind::ShapeMismatch, "spatial head shapes are inconsistent");
  return m;
}

json hawkes_json(const HawkesFits& f) {
  json members = json::array();
  for (const auto& m : f.members) {
    members.push_back({{"mu", num(m.params.mu)},
                       {"alpha", num(m.params.alpha)},
                       {"beta", num(m.params.beta)},
                       {"converged", m.converged},
                       {"nll", num(m.nll)},
                       {"iterations", m.iterations}});
  }
  return {{"bracket_start", num(f.bracket_start)}, {"members", std::move(members)}};
}

HawkesFits hawkes_from(const json& j) {
  HawkesFits f;
  f.bracket_start = get_double(j, "bracket_start");
  const json& members = at(j, "members");
  require(members.is_array() && !members.empty(), ErrorKind::SchemaError, "members must be a nonempty array");
  for (const auto& m : members) {
    HawkesExpFit fit;
    fit.params = {get_double(m, "mu"), get_double(m, "alpha"), get_double(m, "beta")};
    const json& c = at(m, "converged");
    require(c.is_boolean(), ErrorKind::SchemaError, "converged must be a boolean");
    fit.converged = c.get<bool>();
    fit.nll = get_double(m, "nll");
    fit.iterations = get_size(m, "iterations");
    f.members.push_back(fit);
  }
  return f;
}

json homog_json(const StHomogPoisson& m) {
  return {{"rate", num(m.rate)},       {"lat_min", num(m.lat_min)}, {"lat_max", num(m.lat_max)},
          {"lon_min", num(m.lon_min)}, {"lon_max", num(m.lon_max)}};
}

StHomogPoisson homog_from(const json& j) {
  StHomogPoisson m;
  m.rate = get_double(j, "rate");
  m.lat_min = get_double(j, "lat_min");
  m.lat_max = get_double(j, "lat_max");
  m.lon_min = get_double(j, "lon_min");
  m.lon_max = get_double(j, "lon_max");
  return m;
}

}  // namespace

std::string_view to_string(ModelKind kind) noexcept {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  fail(ErrorKind::Usage, "unknown model '" + std::string(text) + "' (expected bnhp, st-bnhp, shp, eh, st-nhp or st-homog)");
}

bool is_spatial(ModelKind kind) noexcept {
  return kind == ModelKind::StBnhp || kind == ModelKind::StNhp || kind == ModelKind::StHomog;
}

void Checkpoint::validate() const {
  bool ok = false;
  switch (kind) {
    case ModelKind::Bnhp: ok = std::holds_alternative<NhpModel>(model); break;
    case ModelKind::StBnhp:
    case ModelKind::StNhp: ok = std::holds_alternative<StModel>(model); break;
    case ModelKind::Shp:
    case ModelKind::Eh: ok = std::holds_alternative<HawkesFits>(model); break;
    case ModelKind::StHomog: ok = std::holds_alternative<StHomogPoisson>(model); break;
  }
  require(ok, ErrorKind::SchemaError, "checkpoint payload does not match model kind " + std::string(to_string(kind)));
  dropout.validate();
}

std::string to_json(const Checkpoint& c) {
  c.validate();
  json payload = std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NhpModel>) return nhp_json(m);
        else if constexpr (std::is_same_v<T, StModel>) return st_json(m);
        else if constexpr (std::is_same_v<T, HawkesFits>) return hawkes_json(m);
        else return homog_json(m);
      },
      c.model);
  json doc = {{"format", kFormat},
              {"version", kCheckpointVersion},
              {"kind", std::string(to_string(c.kind))},
              {"train_seed", c.train_seed},
              {"time_scale", num(c.time_scale)},
              {"rebase", c.rebase},
              {"dropout",
               {{"p_fnn", num(c.dropout.p_fnn)},
                {"p_rnn_input", num(c.dropout.p_rnn_input)},
                {"p_rnn_recurrent", num(c.dropout.p_rnn_recurrent)},
                {"sigma_r", num(c.dropout.sigma_r)}}},
              {"model", std::move(payload)}};
  return doc.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ParseError, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  require(doc.is_object() && doc.value("format", "") == kFormat, ErrorKind::SchemaError, "not a bnhp checkpoint");
  const json& v = at(doc, "version");
  require(v.is_number_integer(), ErrorKind::SchemaError, "version must be an integer");
  require(v.get<int>() == kCheckpointVersion, ErrorKind::VersionMismatch,
          "checkpoint format version " + v.dump() + ", this build reads version " + std::to_string(kCheckpointVersion));
  const json& kind = at(doc, "kind");
  require(kind.is_string(), ErrorKind::SchemaError, "kind must be a string");
  Checkpoint c;
  try {
    c.kind = parse_model_kind(kind.get<std::string>());
  } catch (const Error& e) {
    fail(ErrorKind::SchemaError, e.message());
  }
  const json& seed = at(doc, "train_seed");
  require(seed.is_number_unsigned(), ErrorKind::SchemaError, "train_seed must be an unsigned integer");
  c.train_seed = seed.get<std::uint64_t>();
  c.time_scale = get_double(doc, "time_scale");
  const json& rebase = at(doc, "rebase");
  require(rebase.is_boolean(), ErrorKind::SchemaError, "rebase must be a boolean");
  c.rebase = rebase.get<bool>();
  const json& d = at(doc, "dropout");
  c.dropout = {get_double(d, "p_fnn"), get_double(d, "p_rnn_input"), get_double(d, "p_rnn_recurrent"),
               get_double(d, "sigma_r")};
  const json& m = at(doc, "model");
  switch (c.kind) {
    case ModelKind::Bnhp: c.model = nhp_from(m); break;
    case ModelKind::StBnhp:
    case ModelKind::StNhp: c.model = st_from(m); break;
    case ModelKind::Shp:
    case ModelKind::Eh: c.model = hawkes_from(m); break;
    case ModelKind::StHomog: c.model = homog_from(m); break;
  }
  c.validate();
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string text = to_json(c);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path + " for writing");
  out << text;
  require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace bnhp
