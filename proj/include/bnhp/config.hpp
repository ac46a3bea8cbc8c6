#pragma once

#include <iosfwd>
#include <string>

#include "bnhp/baselines.hpp"
#include "bnhp/bayes.hpp"
#include "bnhp/events.hpp"
#include "bnhp/nhp.hpp"
#include "bnhp/predict.hpp"

namespace bnhp {

/// Everything a run can be configured with. Config keys are the field names
/// below, unqualified (e.g. `lr`, `p_fnn`, `samples`, `hidden`, `train_frac`).
struct RunConfig {
  TrainConfig train;
  DropoutSpec dropout;
  PredictConfig predict;
  NhpArchitecture arch;
  SplitSpec split;
  std::size_t spatial_units = 32;
  double time_scale = 1.0;
  bool rebase = false;
  EnsembleConfig ensemble = EnsembleConfig::log_spaced();
  ShpFitOptions shp;

  void validate() const;
};

/// Applies one key; false if the key is unknown. ParseError on a bad value.
bool set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// `key = value` lines, '#' starts a comment, lists are comma separated.
/// Unknown keys are a SchemaError.
void read_config(std::istream& in, RunConfig& cfg);
void read_config_file(const std::string& path, RunConfig& cfg);

/// The same lines with every key at its current value.
std::string config_text(const RunConfig& cfg);

}  // namespace bnhp
