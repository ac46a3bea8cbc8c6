#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bnhp/baselines.hpp"
#include "bnhp/bayes.hpp"
#include "bnhp/nhp.hpp"
#include "bnhp/spatial.hpp"

namespace bnhp {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kCheckpointVersion = 1;

enum class ModelKind { Bnhp, StBnhp, Shp, Eh, StNhp, StHomog };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view text);  ///< Usage on unknown names
bool is_spatial(ModelKind kind) noexcept;

struct HawkesFits {
  std::vector<HawkesExpFit> members;
  double bracket_start = 1.0;  ///< initial bisection bracket, mean training inter-arrival

  friend bool operator==(const HawkesFits&, const HawkesFits&) = default;
};

/// Bnhp -> NhpModel, StBnhp/StNhp -> StModel, Shp/Eh -> HawkesFits, StHomog -> StHomogPoisson.
using ModelPayload = std::variant<NhpModel, StModel, HawkesFits, StHomogPoisson>;

struct Checkpoint {
  ModelKind kind = ModelKind::Bnhp;
  ModelPayload model;
  DropoutSpec dropout = DropoutSpec::none();
  std::uint64_t train_seed = 0;  ///< seed of the training run; the model records its init seed
  double time_scale = 1.0;       ///< ingestion settings the model was trained under
  bool rebase = false;

  void validate() const;  ///< payload type must match kind
};

/// JSON text; doubles are written in shortest round-trip form so load(save(c)) is bitwise equal.
std::string to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const Checkpoint& c);
/// Io if unreadable, ParseError on bad JSON, SchemaError on missing keys,
/// VersionMismatch on another format version.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bnhp
