#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "bnhp/baselines.hpp"
#include "bnhp/checkpoint.hpp"
#include "bnhp/config.hpp"
#include "bnhp/error.hpp"
#include "bnhp/metrics.hpp"
#include "bnhp/rng.hpp"
#include "bnhp/simulate.hpp"
#include "bnhp/spatial.hpp"
#include "manifest.hpp"

using namespace bnhp;
namespace fs = std::filesystem;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::InvalidParam:
    case ErrorKind::NonStationary:
    case ErrorKind::UnsupportedPrimitive:
      return 2;
    case ErrorKind::EmptySequence:
    case ErrorKind::NonIncreasing:
    case ErrorKind::TooShort:
    case ErrorKind::ParseError:
    case ErrorKind::SchemaError:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::EmptyData:
    case ErrorKind::LengthMismatch:
    case ErrorKind::MissingLevel:
    case ErrorKind::VersionMismatch:
      return 3;
    case ErrorKind::NonFinite:
    case ErrorKind::NoBracket:
    case ErrorKind::MaxIter:
    case ErrorKind::Diverged:
    case ErrorKind::NotConverged:
    case ErrorKind::DegenerateDesign:
    case ErrorKind::ZeroVariance:
      return 4;
    case ErrorKind::Io:
      return 5;
  }
  return 1;
}

std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

void refuse_overwrite(const std::vector<std::string>& paths, bool force) {
  for (const auto& p : paths) {
    require(force || !fs::exists(p), ErrorKind::Io, "refusing to overwrite " + p + " (pass --force)");
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path + " for writing");
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// "a/b.csv" + ".density.csv" -> "a/b.density.csv"
std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

/// "a/b.csv" -> "a/b.csv.manifest.json"; keyed on the full name so outputs sharing a stem never collide.
std::string manifest_for(const std::string& path) { return path + ".manifest.json"; }

std::vector<double> parse_doubles(const std::string& text) {
  RunConfig scratch;
  set_config_value(scratch, "k_levels", text);
  return scratch.predict.k_levels;
}

/// Options shared by the commands that read a run configuration.
struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::size_t threads = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "override one config key, key=value (repeatable)");
    cmd->add_option("--threads", threads, "worker threads (default: all cores; 1 is bit-reproducible)");
  }

  /// Defaults, then the config file, then --set, then dedicated flags (applied by the caller).
  RunConfig load() const {
    RunConfig cfg;
    cfg.train.threads = default_threads();
    if (!config_path.empty()) read_config_file(config_path, cfg);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      require(eq != std::string::npos, ErrorKind::Usage, "--set expects key=value, got '" + s + "'");
      require(set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1)), ErrorKind::Usage,
              "unknown config key '" + s.substr(0, eq) + "'");
    }
    if (threads > 0) cfg.train.threads = threads;
    return cfg;
  }
};

// ---- simulate -------------------------------------------------------------------

struct SimulateArgs {
  std::string process = "poisson";
  double rate = 1.0;
  double mu = HawkesParams{}.mu;
  std::string alphas = "0.4,0.4";
  std::string betas = "1,20";
  double horizon = 0.0;
  std::uint64_t seed = 1;
  std::string id;
  std::string out;
  double walk_step = 0.0;
  double start_lat = 40.7;
  double start_lon = -74.0;
  bool force = false;
};

int cmd_simulate(const SimulateArgs& a, int argc, char** argv) {
  const std::string manifest = manifest_for(a.out);
  refuse_overwrite({a.out, manifest}, a.force);
  RunManifest m("simulate", argc, argv);
  m.set_seed(a.seed);
  EventSequence seq = [&] {
    if (a.process == "poisson") return simulate_poisson(a.rate, a.horizon, a.seed, a.id.empty() ? "poisson" : a.id);
    HawkesParams p;
    p.mu = a.mu;
    p.alphas = parse_doubles(a.alphas);
    p.betas = parse_doubles(a.betas);
    return simulate_hawkes(p, a.horizon, a.seed, a.id.empty() ? "hawkes" : a.id);
  }();
  if (a.walk_step > 0.0) seq = with_random_walk(seq, {a.start_lat, a.start_lon}, a.walk_step, derive_seed(a.seed, 1));
  write_csv(a.out, {seq});
  m.add_output(a.out);
  m.write(manifest);
  std::cerr << "simulate: " << seq.size() << " events -> " << a.out << '\n';
  return 0;
}

// ---- shared data handling -------------------------------------------------------

struct Dataset {
  std::vector<EventSequence> sequences;
  std::vector<SplitCounts> counts;  ///< per sequence; train = 0 marks a skipped sequence
};

Dataset load_dataset(const std::string& path, const RunConfig& cfg, bool need_locations) {
  Dataset d;
  d.sequences = load_csv(path, {cfg.time_scale, cfg.rebase});
  require(!d.sequences.empty(), ErrorKind::EmptyData, path + " holds no events");
  std::size_t skipped = 0;
  for (const auto& s : d.sequences) {
    require(!need_locations || s.has_locations(), ErrorKind::SchemaError,
            path + " has no lat/lon columns, which this model requires");
    try {
      d.counts.push_back(split_counts(s.size(), cfg.split));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::TooShort) throw;
      d.counts.push_back({});
      ++skipped;
    }
  }
  if (skipped > 0) std::cerr << "note: skipped " << skipped << " sequence(s) with fewer than 10 events\n";
  return d;
}

struct WindowSets {
  std::vector<Window> train, valid;
};

WindowSets training_windows(const Dataset& d, std::size_t M) {
  WindowSets w;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < d.sequences.size(); ++i) {
    const auto& c = d.counts[i];
    if (c.train == 0) continue;
    try {
      auto t = make_windows(d.sequences[i], M, 0, c.train);
      w.train.insert(w.train.end(), t.begin(), t.end());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::TooShort) throw;
      ++skipped;
      continue;
    }
    try {
      auto v = make_windows(d.sequences[i], M, c.train, c.train + c.valid);
      w.valid.insert(w.valid.end(), v.begin(), v.end());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::TooShort) throw;
    }
  }
  if (skipped > 0) std::cerr << "note: " << skipped << " sequence(s) too short for truncation depth " << M << '\n';
  require(!w.train.empty(), ErrorKind::EmptyData, "no training windows; sequences are shorter than the truncation depth");
  return w;
}

/// Training parts of every usable sequence.
std::vector<EventSequence> training_parts(const Dataset& d) {
  std::vector<EventSequence> out;
  for (std::size_t i = 0; i < d.sequences.size(); ++i) {
    if (d.counts[i].train > 0) out.push_back(d.sequences[i].slice(0, d.counts[i].train));
  }
  require(!out.empty(), ErrorKind::EmptyData, "no sequence is long enough to split");
  return out;
}

double mean_inter_arrival(std::span<const EventSequence> parts) {
  double sum = 0.0, n = 0.0;
  for (const auto& s : parts) {
    sum += s.times().back();
    n += static_cast<double>(s.size());
  }
  return sum / n;
}

void print_trace_summary(const LossTrace& trace) {
  if (trace.rows.empty()) return;
  const auto& last = trace.rows.back();
  std::cerr << "train: " << trace.rows.size() << " epochs, final train loss " << format_double(last.train_elbo)
            << ", kept epoch " << trace.best_epoch << '\n';
}

// ---- train ----------------------------------------------------------------------

struct TrainArgs {
  ConfigOptions config;
  std::string model;
  std::string data;
  std::string out;
  std::string trace;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool force = false;
};

int cmd_train(TrainArgs a, int argc, char** argv) {
  const ModelKind kind = parse_model_kind(a.model);
  RunConfig cfg = a.config.load();
  if (a.epochs > 0) cfg.train.epochs = a.epochs;
  if (a.seed_given) cfg.train.seed = a.seed;
  cfg.predict.threads = cfg.train.threads;
  cfg.validate();

  const bool neural = kind == ModelKind::Bnhp || kind == ModelKind::StBnhp || kind == ModelKind::StNhp;
  if (neural && a.trace.empty()) a.trace = sibling(a.out, ".loss.csv");
  const std::string manifest = manifest_for(a.out);
  std::vector<std::string> outputs{a.out, manifest};
  if (neural) outputs.push_back(a.trace);
  refuse_overwrite(outputs, a.force);

  RunManifest m("train", argc, argv);
  m.set_seed(cfg.train.seed);
  m.set_model_kind(std::string(to_string(kind)));
  m.set_config(config_text(cfg));
  m.add_input(a.data);
  if (!a.config.config_path.empty()) m.add_input(a.config.config_path);

  const Dataset data = load_dataset(a.data, cfg, is_spatial(kind));
  Checkpoint ck;
  ck.kind = kind;
  ck.train_seed = cfg.train.seed;
  ck.time_scale = cfg.time_scale;
  ck.rebase = cfg.rebase;
  LossTrace trace;

  switch (kind) {
    case ModelKind::Bnhp: {
      const auto w = training_windows(data, cfg.arch.truncation);
      NhpArchitecture arch = cfg.arch;
      arch.fnn_keep = 1.0 - cfg.dropout.p_fnn;
      auto r = train(NhpModel::initialize(arch, fit_scaling(w.train), cfg.train.seed), w.train, w.valid,
                     cfg.dropout, cfg.train);
      ck.model = std::move(r.model);
      ck.dropout = cfg.dropout;
      trace = std::move(r.trace);
      break;
    }
    case ModelKind::StBnhp:
    case ModelKind::StNhp: {
      const auto w = training_windows(data, cfg.arch.truncation);
      const DropoutSpec spec = kind == ModelKind::StNhp ? DropoutSpec::none() : cfg.dropout;
      NhpArchitecture arch = cfg.arch;
      arch.fnn_keep = 1.0 - spec.p_fnn;
      const StModel init = StModel::initialize(arch, fit_scaling(w.train), fit_spatial_scaling(w.train),
                                               cfg.train.seed, cfg.spatial_units);
      auto r = kind == ModelKind::StNhp ? st_nhp_train(init, w.train, w.valid, cfg.train)
                                        : st_train(init, w.train, w.valid, spec, cfg.train);
      ck.model = std::move(r.model);
      ck.dropout = spec;
      trace = std::move(r.trace);
      break;
    }
    case ModelKind::Shp:
    case ModelKind::Eh: {
      const auto parts = training_parts(data);
      std::vector<Observation> obs;
      for (const auto& s : parts) obs.push_back({s.times(), s.times().back()});
      HawkesFits fits;
      fits.bracket_start = mean_inter_arrival(parts);
      if (kind == ModelKind::Shp) {
        fits.members.push_back(shp_fit(obs, cfg.shp));
        const auto& f = fits.members.front();
        if (!f.converged) std::cerr << "warning: SHP fit did not reach grad_tol; keeping the best point found\n";
        std::cerr << "shp: mu " << format_double(f.params.mu) << " alpha " << format_double(f.params.alpha)
                  << " beta " << format_double(f.params.beta) << '\n';
      } else {
        fits.members = eh_fit(obs, cfg.ensemble);
        std::cerr << "eh: " << fits.members.size() << " members\n";
      }
      ck.model = std::move(fits);
      break;
    }
    case ModelKind::StHomog: {
      ck.model = st_homog_poisson_fit(training_parts(data));
      break;
    }
  }

  save_checkpoint(a.out, ck);
  m.add_output(a.out);
  if (neural) {
    auto out = open_out(a.trace);
    trace.write_csv(out);
    out.close();
    m.add_output(a.trace);
    print_trace_summary(trace);
  }
  m.write(manifest);
  std::cerr << "train: checkpoint -> " << a.out << '\n';
  return 0;
}

// ---- predict --------------------------------------------------------------------

struct PredictArgs {
  ConfigOptions config;
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string density;
  std::string range = "test";
  std::size_t mc_samples = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool persist_masks = false;
  bool force = false;
};

int cmd_predict(PredictArgs a, int argc, char** argv) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  RunConfig cfg = a.config.load();
  cfg.time_scale = ck.time_scale;
  cfg.rebase = ck.rebase;
  if (a.mc_samples > 0) cfg.predict.samples = a.mc_samples;
  if (a.persist_masks) cfg.predict.persist_masks = true;
  cfg.predict.threads = cfg.train.threads;
  cfg.validate();
  const std::uint64_t seed = a.seed_given ? a.seed : ck.train_seed;

  if (a.density.empty()) a.density = sibling(a.out, ".density.csv");
  const std::string manifest = manifest_for(a.out);
  refuse_overwrite({a.out, a.density, manifest}, a.force);
  RunManifest m("predict", argc, argv);
  m.set_seed(seed);
  m.set_model_kind(std::string(to_string(ck.kind)));
  m.set_config(config_text(cfg));
  m.add_input(a.checkpoint);
  m.add_input(a.data);

  const bool spatial = is_spatial(ck.kind);
  const Dataset data = load_dataset(a.data, cfg, spatial);
  std::vector<PredictionRecord> recs;
  std::vector<StRecord> st_recs;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    const auto& seq = data.sequences[i];
    const auto& c = data.counts[i];
    if (c.train == 0) continue;
    const std::size_t begin = a.range == "all" ? 0 : c.train + c.valid;
    const std::uint64_t seq_seed = derive_seed(seed, i);
    try {
      std::visit(
          [&](const auto& model) {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, NhpModel>) {
              auto r = rolling_predict(model, seq, begin, seq.size(), ck.dropout, cfg.predict, seq_seed);
              recs.insert(recs.end(), r.begin(), r.end());
            } else if constexpr (std::is_same_v<T, StModel>) {
              auto r = ck.kind == ModelKind::StNhp
                           ? st_nhp_predict(model, seq, begin, seq.size(), cfg.predict, seq_seed)
                           : rolling_predict_st(model, seq, begin, seq.size(), ck.dropout, cfg.predict, seq_seed);
              st_recs.insert(st_recs.end(), r.begin(), r.end());
            } else if constexpr (std::is_same_v<T, HawkesFits>) {
              auto r = hawkes_rolling_predict(model.members, seq, begin, seq.size(), model.bracket_start, cfg.predict);
              recs.insert(recs.end(), r.begin(), r.end());
            } else {
              auto r = st_homog_poisson_predict(model, seq, begin, seq.size(), cfg.predict.k_levels);
              st_recs.insert(st_recs.end(), r.begin(), r.end());
            }
          },
          ck.model);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::TooShort) throw;
      ++skipped;
    }
  }
  if (skipped > 0) std::cerr << "note: " << skipped << " sequence(s) had no predictable events\n";
  require(!recs.empty() || !st_recs.empty(), ErrorKind::EmptyData, "the " + a.range + " split holds no predictable events");

  std::size_t unbracketed = 0;
  {
    auto out = open_out(a.out);
    auto dens = open_out(a.density);
    if (spatial) {
      write_st_predictions_csv(out, st_recs);
      write_st_density_csv(dens, st_recs);
      for (const auto& r : st_recs) unbracketed += r.prediction.time.unbracketed;
    } else {
      write_predictions_csv(out, recs);
      write_density_csv(dens, recs);
      for (const auto& r : recs) unbracketed += r.prediction.unbracketed;
    }
  }
  if (unbracketed > 0) {
    std::cerr << "note: " << unbracketed << " MC sample(s) never reached log 2 and were left out of the time aggregates\n";
  }
  m.add_output(a.out);
  m.add_output(a.density);
  m.write(manifest);
  std::cerr << "predict: " << (spatial ? st_recs.size() : recs.size()) << " events -> " << a.out << '\n';
  return 0;
}

// ---- evaluate -------------------------------------------------------------------

bool is_st_predictions(const std::string& text) {
  return text.substr(0, text.find('\n')).find("pred_lat") != std::string::npos;
}

struct EvaluateArgs {
  std::string predictions;
  std::string density;
  std::string model = "model";
  std::string out;
  std::vector<std::string> include;
  bool force = false;
};

MetricsReport evaluate_file(const std::string& pred_path, std::string dens_path, const std::string& name) {
  if (dens_path.empty()) dens_path = sibling(pred_path, ".density.csv");
  const std::string text = read_file(pred_path);
  std::istringstream in(text);
  const bool have_density = fs::exists(dens_path);
  if (!have_density) std::cerr << "note: " << dens_path << " not found; MNLL left empty\n";
  MetricsReport r;
  if (is_st_predictions(text)) {
    auto recs = read_st_predictions_csv(in);
    if (have_density) {
      std::ifstream d(dens_path);
      read_st_density_csv(d, recs);
    }
    require(!recs.empty(), ErrorKind::EmptyData, pred_path + " holds no predictions");
    r = evaluate_st(recs, name);
  } else {
    auto recs = read_predictions_csv(in);
    if (have_density) {
      std::ifstream d(dens_path);
      read_density_csv(d, recs);
    }
    require(!recs.empty(), ErrorKind::EmptyData, pred_path + " holds no predictions");
    r = evaluate_time(recs, name);
  }
  // Least-squares ensemble densities are not likelihood-trained.
  if (name == "eh") r.mnll_comparable = false;
  return r;
}

int cmd_evaluate(const EvaluateArgs& a, int argc, char** argv) {
  const std::string manifest = a.out.empty() ? "" : manifest_for(a.out);
  if (!a.out.empty()) refuse_overwrite({a.out, manifest}, a.force);
  RunManifest m("evaluate", argc, argv);
  m.add_input(a.predictions);
  std::vector<MetricsReport> table;
  for (const auto& path : a.include) {
    table.push_back(MetricsReport::from_json(read_file(path)));
    m.add_input(path);
  }
  const MetricsReport r = evaluate_file(a.predictions, a.density, a.model);
  table.push_back(r);
  print_table(std::cout, table);
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    out << r.to_json() << '\n';
    out.close();
    m.add_output(a.out);
    m.write(manifest);
  }
  return 0;
}

// ---- analyze --------------------------------------------------------------------

struct AnalyzeArgs {
  std::string predictions;
  std::string out_dir;
  std::string quantiles;
  bool force = false;
};

int cmd_analyze(const AnalyzeArgs& a, int argc, char** argv) {
  const fs::path dir(a.out_dir);
  const std::string q_csv = (dir / "quantile_table.csv").string();
  const std::string c_csv = (dir / "correlation.csv").string();
  const std::string c_json = (dir / "correlation.json").string();
  const std::string manifest = (dir / "analyze.manifest.json").string();
  refuse_overwrite({q_csv, c_csv, c_json, manifest}, a.force);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::Io, "cannot create " + a.out_dir);
  RunManifest m("analyze", argc, argv);
  m.add_input(a.predictions);

  const std::string text = read_file(a.predictions);
  std::istringstream in(text);
  std::vector<PredictionRecord> recs;
  if (is_st_predictions(text)) {
    for (auto& r : read_st_predictions_csv(in)) {
      recs.push_back({r.sequence_id, r.event_index, r.actual_time, std::move(r.prediction.time)});
    }
  } else {
    recs = read_predictions_csv(in);
  }
  require(!recs.empty(), ErrorKind::EmptyData, a.predictions + " holds no predictions");
  std::vector<double> ad, sig, pil;
  for (const auto& r : recs) {
    ad.push_back(std::abs(r.prediction.mean - r.actual_time));
    sig.push_back(r.prediction.sigma);
    pil.push_back(2.0 * r.prediction.sigma);
  }
  const std::vector<double> qs = a.quantiles.empty() ? default_quantiles() : parse_doubles(a.quantiles);
  const auto table = avg_pil_quantile(ad, sig, qs);

  double rho = kNaN;
  std::string note;
  try {
    rho = spearman(ad, pil);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ZeroVariance && e.kind() != ErrorKind::LengthMismatch) throw;
    note = e.message();
  }
  {
    auto out = open_out(q_csv);
    out << "q,avg_pil,count\n";
    for (const auto& row : table) out << format_double(row.q) << ',' << format_double(row.avg_pil) << ',' << row.count << '\n';
  }
  {
    auto out = open_out(c_csv);
    out << "sequence_id,event_index,abs_dev,pil\n";
    for (std::size_t i = 0; i < recs.size(); ++i) {
      out << recs[i].sequence_id << ',' << recs[i].event_index << ',' << format_double(ad[i]) << ','
          << format_double(pil[i]) << '\n';
    }
  }
  {
    nlohmann::json j = {{"n_events", recs.size()}, {"spearman_ad_pil", nullptr}};
    if (std::isfinite(rho)) j["spearman_ad_pil"] = rho;
    if (!note.empty()) j["note"] = note;
    auto out = open_out(c_json);
    out << j.dump(2) << '\n';
  }
  for (const auto& p : {q_csv, c_csv, c_json}) m.add_output(p);
  m.write(manifest);
  std::cout << "spearman(AD, PIL) = " << (std::isfinite(rho) ? format_double(rho) : "undefined (" + note + ")") << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian neural Hawkes process toolkit"};
  app.set_version_flag("--version", std::string("bnhp ") + kToolVersion + " (checkpoint format " +
                                        std::to_string(kCheckpointVersion) + ")");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "generate a synthetic event sequence");
  c_sim->add_option("--process", sim.process, "poisson or hawkes")->check(CLI::IsMember({"poisson", "hawkes"}));
  c_sim->add_option("--rate", sim.rate, "Poisson rate");
  c_sim->add_option("--mu", sim.mu, "Hawkes baseline");
  c_sim->add_option("--alphas", sim.alphas, "Hawkes branching ratios, comma separated");
  c_sim->add_option("--betas", sim.betas, "Hawkes decays, comma separated");
  c_sim->add_option("--horizon", sim.horizon, "observation window length")->required();
  c_sim->add_option("--seed", sim.seed, "random seed");
  c_sim->add_option("--id", sim.id, "sequence id");
  c_sim->add_option("--walk-step", sim.walk_step, "add random-walk locations with this step (degrees)");
  c_sim->add_option("--start-lat", sim.start_lat, "random walk start latitude");
  c_sim->add_option("--start-lon", sim.start_lon, "random walk start longitude");
  c_sim->add_option("--out", sim.out, "events CSV")->required();
  c_sim->add_flag("--force", sim.force, "overwrite existing outputs");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "fit a model and write a checkpoint");
  tr.config.add(c_train);
  c_train->add_option("--model", tr.model, "bnhp, st-bnhp, shp, eh, st-nhp or st-homog")->required();
  c_train->add_option("--data", tr.data, "events CSV")->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", tr.out, "checkpoint path")->required();
  c_train->add_option("--trace", tr.trace, "loss trace CSV (default: next to the checkpoint)");
  c_train->add_option("--epochs", tr.epochs, "training epochs");
  auto* o_train_seed = c_train->add_option("--seed", tr.seed, "training seed");
  c_train->add_flag("--force", tr.force, "overwrite existing outputs");

  PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "one-step-ahead predictions with uncertainty");
  pr.config.add(c_pred);
  c_pred->add_option("--checkpoint", pr.checkpoint, "checkpoint from train")->required()->check(CLI::ExistingFile);
  c_pred->add_option("--data", pr.data, "events CSV")->required()->check(CLI::ExistingFile);
  c_pred->add_option("--out", pr.out, "predictions CSV")->required();
  c_pred->add_option("--density", pr.density, "per-event log density CSV (default: next to --out)");
  c_pred->add_option("--range", pr.range, "test (default) or all")->check(CLI::IsMember({"test", "all"}));
  c_pred->add_option("--mc-samples", pr.mc_samples, "MC dropout passes per event (default 50)");
  auto* o_pred_seed = c_pred->add_option("--seed", pr.seed, "prediction seed (default: the training seed)");
  c_pred->add_flag("--persist-masks", pr.persist_masks, "reuse the same sampled networks at every step");
  c_pred->add_flag("--force", pr.force, "overwrite existing outputs");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "metrics report for a predictions file");
  c_eval->add_option("--predictions", ev.predictions, "predictions CSV")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--density", ev.density, "log density CSV (default: next to the predictions)");
  c_eval->add_option("--model", ev.model, "row label; 'eh' marks MNLL as not comparable");
  c_eval->add_option("--out", ev.out, "report JSON");
  c_eval->add_option("--include", ev.include, "earlier report JSON to show in the same table (repeatable)")
      ->check(CLI::ExistingFile);
  c_eval->add_flag("--force", ev.force, "overwrite existing outputs");

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "Avg-PIL quantile table and AD/PIL correlation");
  c_an->add_option("--predictions", an.predictions, "predictions CSV")->required()->check(CLI::ExistingFile);
  c_an->add_option("--out-dir", an.out_dir, "output directory")->required();
  c_an->add_option("--quantiles", an.quantiles, "comma separated quantile levels (default 0.1..1.0)");
  c_an->add_flag("--force", an.force, "overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(sim, argc, argv);
    if (c_train->parsed()) {
      tr.seed_given = o_train_seed->count() > 0;
      return cmd_train(tr, argc, argv);
    }
    if (c_pred->parsed()) {
      pr.seed_given = o_pred_seed->count() > 0;
      return cmd_predict(pr, argc, argv);
    }
    if (c_eval->parsed()) return cmd_evaluate(ev, argc, argv);
    if (c_an->parsed()) return cmd_analyze(an, argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
