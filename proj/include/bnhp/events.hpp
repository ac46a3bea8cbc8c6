#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace bnhp {

struct Location {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
};

/// Event timestamps of one sequence, strictly increasing and non-negative,
/// with optional per-event locations. Immutable once constructed.
class EventSequence {
 public:
  EventSequence(std::string id, std::vector<double> times,
                std::optional<std::vector<Location>> locations = std::nullopt,
                double offset = 0.0);

  const std::string& id() const noexcept { return id_; }
  const std::vector<double>& times() const noexcept { return times_; }
  const std::optional<std::vector<Location>>& locations() const noexcept { return locations_; }
  bool has_locations() const noexcept { return locations_.has_value(); }
  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }
  /// Amount subtracted from the raw timestamps at ingestion.
  double offset() const noexcept { return offset_; }

  /// Events [begin, end) as a new sequence with the same id and offset.
  EventSequence slice(std::size_t begin, std::size_t end) const;

 private:
  std::string id_;
  std::vector<double> times_;
  std::optional<std::vector<Location>> locations_;
  double offset_ = 0.0;
};

struct InterArrivals {
  std::vector<double> taus;
  double origin = 0.0;
};

/// taus[0] = times[0] - 0 (observation starts at 0), taus[j] = times[j] - times[j-1].
InterArrivals inter_arrivals(const EventSequence& seq);

struct SplitSpec {
  double train_frac = 0.7;
  double valid_frac = 0.1;
  double test_frac = 0.2;

  void validate() const;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};

SplitCounts split_counts(std::size_t n, const SplitSpec& spec);

struct Split {
  EventSequence train;
  EventSequence valid;
  EventSequence test;
};

/// Per-sequence chronological split: first floor(N*train), next floor(N*valid), rest.
Split chronological_split(const EventSequence& seq, const SplitSpec& spec = {});

/// Encoder input plus label for predicting one event.
struct Window {
  std::vector<double> taus;     ///< exactly M inter-arrivals, oldest first
  double anchor_time = 0.0;     ///< time of the most recent event
  double target_tau = 0.0;      ///< next inter-arrival
  std::size_t target_index = 0; ///< index of the predicted event in its sequence
  std::vector<Location> prev_locations;  ///< M locations (empty when no spatial data)
  std::optional<Location> target_location;

  bool has_locations() const noexcept { return target_location.has_value(); }
};

/// One window per predictable event, in chronological order.
std::vector<Window> make_windows(const EventSequence& seq, std::size_t M);

/// Windows whose target event index lies in [begin, end). The context for each
/// window comes from the actual preceding events of `seq`.
std::vector<Window> make_windows(const EventSequence& seq, std::size_t M, std::size_t begin,
                                 std::size_t end);

struct LoadOptions {
  /// Raw timestamps are divided by this on load and multiplied back on write.
  double time_scale = 1.0;
  /// Treat each sequence's first event as the observation start: its timestamp
  /// becomes the recorded offset and it is consumed rather than kept.
  bool rebase = false;
};

/// Reads `sequence_id,timestamp[,lat,lon]`. Sequences keep first-appearance order,
/// rows within a sequence are sorted by timestamp.
std::vector<EventSequence> load_csv(const std::string& path, const LoadOptions& options = {});
std::vector<EventSequence> parse_csv(const std::string& text, const LoadOptions& options = {});

std::string to_csv(const std::vector<EventSequence>& sequences, const LoadOptions& options = {});
void write_csv(const std::string& path, const std::vector<EventSequence>& sequences,
               const LoadOptions& options = {});

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace bnhp
