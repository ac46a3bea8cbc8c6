#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

/// Hex SHA-256 of a file's bytes. Io error if unreadable.
std::string sha256_file(const std::string& path);

/// Record of one CLI invocation, written next to its primary output.
class RunManifest {
 public:
  RunManifest(std::string command, int argc, char** argv);

  void set_config(std::string text) { config_ = std::move(text); }
  void set_seed(std::uint64_t seed) { seed_ = seed; has_seed_ = true; }
  void set_model_kind(std::string kind) { kind_ = std::move(kind); }
  void add_input(const std::string& path) { inputs_.push_back(path); }
  void add_output(const std::string& path) { outputs_.push_back(path); }

  /// Hashes every listed file and writes the JSON document.
  void write(const std::string& path) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::string config_;
  std::uint64_t seed_ = 0;
  bool has_seed_ = false;
  std::string kind_;
  std::vector<std::string> inputs_, outputs_;
  std::chrono::system_clock::time_point started_wall_;
  std::chrono::steady_clock::time_point started_;
};
