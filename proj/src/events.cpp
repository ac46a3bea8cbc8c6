#include "bnhp/events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "bnhp/error.hpp"

namespace bnhp {

EventSequence::EventSequence(std::string id, std::vector<double> times,
                             std::optional<std::vector<Location>> locations, double offset)
    : id_(std::move(id)), times_(std::move(times)), locations_(std::move(locations)), offset_(offset) {
  for (std::size_t j = 0; j < times_.size(); ++j) {
    require(std::isfinite(times_[j]), ErrorKind::InvalidParam,
            "sequence '" + id_ + "': non-finite timestamp at index " + std::to_string(j));
    if (j == 0) {
      require(times_[0] >= 0.0, ErrorKind::InvalidParam,
              "sequence '" + id_ + "': negative first timestamp");
    } else if (!(times_[j] > times_[j - 1])) {
      fail(ErrorKind::NonIncreasing, "sequence '" + id_ + "': timestamp at index " +
                                         std::to_string(j) + " does not exceed its predecessor");
    }
  }
  if (locations_) {
    require(locations_->size() == times_.size(), ErrorKind::ShapeMismatch,
            "sequence '" + id_ + "': locations and times differ in length");
  }
}

EventSequence EventSequence::slice(std::size_t begin, std::size_t end) const {
  require(begin <= end && end <= times_.size(), ErrorKind::InvalidParam, "slice out of range");
  std::vector<double> t(times_.begin() + static_cast<std::ptrdiff_t>(begin),
                        times_.begin() + static_cast<std::ptrdiff_t>(end));
  std::optional<std::vector<Location>> locs;
  if (locations_) {
    locs.emplace(locations_->begin() + static_cast<std::ptrdiff_t>(begin),
                 locations_->begin() + static_cast<std::ptrdiff_t>(end));
  }
  return EventSequence(id_, std::move(t), std::move(locs), offset_);
}

InterArrivals inter_arrivals(const EventSequence& seq) {
  require(!seq.empty(), ErrorKind::EmptySequence, "sequence '" + seq.id() + "' has no events");
  const auto& t = seq.times();
  InterArrivals out;
  out.taus.resize(t.size());
  out.taus[0] = t[0];
  for (std::size_t j = 1; j < t.size(); ++j) out.taus[j] = t[j] - t[j - 1];
  // A first event exactly at the origin has no positive inter-arrival.
  require(out.taus[0] > 0.0, ErrorKind::NonIncreasing,
          "sequence '" + seq.id() + "': first event at the observation origin");
  return out;
}

void SplitSpec::validate() const {
  for (double f : {train_frac, valid_frac, test_frac}) {
    require(f > 0.0 && f < 1.0, ErrorKind::InvalidParam, "split fractions must lie in (0, 1)");
  }
  require(std::abs(train_frac + valid_frac + test_frac - 1.0) <= 1e-9, ErrorKind::InvalidParam,
          "split fractions must sum to 1");
}

SplitCounts split_counts(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  require(n >= 10, ErrorKind::TooShort, "need at least 10 events to split, got " + std::to_string(n));
  SplitCounts c;
  // Guard against 0.7 * 10 evaluating to 6.999...; fractions are exact to 1e-9.
  c.train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.train_frac + 1e-9));
  c.valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.valid_frac + 1e-9));
  c.test = n - c.train - c.valid;
  return c;
}

Split chronological_split(const EventSequence& seq, const SplitSpec& spec) {
  const SplitCounts c = split_counts(seq.size(), spec);
  return Split{seq.slice(0, c.train), seq.slice(c.train, c.train + c.valid),
               seq.slice(c.train + c.valid, seq.size())};
}

std::vector<Window> make_windows(const EventSequence& seq, std::size_t M) {
  return make_windows(seq, M, M, seq.size());
}

std::vector<Window> make_windows(const EventSequence& seq, std::size_t M, std::size_t begin,
                                 std::size_t end) {
  require(M >= 1, ErrorKind::InvalidParam, "truncation depth must be positive");
  const InterArrivals ia = inter_arrivals(seq);
  const std::size_t n = ia.taus.size();
  require(n >= M + 1, ErrorKind::TooShort,
          "sequence '" + seq.id() + "' has " + std::to_string(n) +
              " inter-arrivals; need at least " + std::to_string(M + 1));
  begin = std::max(begin, M);
  end = std::min(end, n);
  require(begin < end, ErrorKind::TooShort,
          "sequence '" + seq.id() + "': no predictable events in the requested range");
  const auto& t = seq.times();
  const auto& locs = seq.locations();
  std::vector<Window> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    Window w;
    w.taus.assign(ia.taus.begin() + static_cast<std::ptrdiff_t>(i - M),
                  ia.taus.begin() + static_cast<std::ptrdiff_t>(i));
    w.anchor_time = t[i - 1];
    w.target_tau = ia.taus[i];
    w.target_index = i;
    if (locs) {
      w.prev_locations.assign(locs->begin() + static_cast<std::ptrdiff_t>(i - M),
                              locs->begin() + static_cast<std::ptrdiff_t>(i));
      w.target_location = (*locs)[i];
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view field, std::size_t line_no, std::string_view column) {
  field = trim(field);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad " + std::string(column) +
                                    " value '" + std::string(field) + "'");
  }
  return v;
}

struct RawRow {
  double time;
  Location loc;
};

}  // namespace

std::vector<EventSequence> parse_csv(const std::string& text, const LoadOptions& options) {
  require(options.time_scale > 0.0, ErrorKind::InvalidParam, "time_scale must be positive");
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) fail(ErrorKind::SchemaError, "empty file: missing header");
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split_fields(line);
  std::map<std::string, std::size_t, std::less<>> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[std::string(trim(header[i]))] = i;
  for (const char* required : {"sequence_id", "timestamp"}) {
    if (!col.contains(required)) {
      fail(ErrorKind::SchemaError, std::string("missing column '") + required + "'");
    }
  }
  const bool has_lat = col.contains("lat");
  const bool has_lon = col.contains("lon");
  if (has_lat != has_lon) {
    fail(ErrorKind::SchemaError, std::string("missing column '") + (has_lat ? "lon" : "lat") + "'");
  }
  const std::size_t id_col = col["sequence_id"];
  const std::size_t t_col = col["timestamp"];
  const std::size_t lat_col = has_lat ? col["lat"] : 0;
  const std::size_t lon_col = has_lon ? col["lon"] : 0;

  std::vector<std::string> order;
  std::map<std::string, std::vector<RawRow>, std::less<>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                      std::to_string(header.size()) + " fields, got " +
                                      std::to_string(fields.size()));
    }
    const std::string id(trim(fields[id_col]));
    if (id.empty()) fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": empty sequence_id");
    RawRow r{parse_number(fields[t_col], line_no, "timestamp") / options.time_scale, {}};
    if (has_lat) {
      r.loc.lat = parse_number(fields[lat_col], line_no, "lat");
      r.loc.lon = parse_number(fields[lon_col], line_no, "lon");
    }
    auto it = rows.find(id);
    if (it == rows.end()) {
      order.push_back(id);
      it = rows.emplace(id, std::vector<RawRow>{}).first;
    }
    it->second.push_back(r);
  }

  std::vector<EventSequence> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    auto& r = rows[id];
    std::stable_sort(r.begin(), r.end(), [](const RawRow& a, const RawRow& b) { return a.time < b.time; });
    double offset = 0.0;
    std::size_t first = 0;
    if (options.rebase) {
      offset = r.front().time;
      first = 1;
    }
    std::vector<double> times;
    std::vector<Location> locs;
    for (std::size_t i = first; i < r.size(); ++i) {
      times.push_back(r[i].time - offset);
      if (has_lat) locs.push_back(r[i].loc);
    }
    std::optional<std::vector<Location>> maybe_locs;
    if (has_lat) maybe_locs = std::move(locs);
    out.emplace_back(id, std::move(times), std::move(maybe_locs), offset);
  }
  return out;
}

std::vector<EventSequence> load_csv(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), options);
}

std::string to_csv(const std::vector<EventSequence>& sequences, const LoadOptions& options) {
  const bool spatial = std::any_of(sequences.begin(), sequences.end(),
                                   [](const EventSequence& s) { return s.has_locations(); });
  if (spatial) {
    for (const auto& s : sequences) {
      require(s.has_locations(), ErrorKind::SchemaError,
              "sequence '" + s.id() + "' lacks locations while others have them");
    }
  }
  std::string out = spatial ? "sequence_id,timestamp,lat,lon\n" : "sequence_id,timestamp\n";
  for (const auto& s : sequences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      out += s.id();
      out += ',';
      out += format_double((s.times()[i] + s.offset()) * options.time_scale);
      if (spatial) {
        out += ',';
        out += format_double((*s.locations())[i].lat);
        out += ',';
        out += format_double((*s.locations())[i].lon);
      }
      out += '\n';
    }
  }
  return out;
}

void write_csv(const std::string& path, const std::vector<EventSequence>& sequences,
               const LoadOptions& options) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << to_csv(sequences, options);
  if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace bnhp
