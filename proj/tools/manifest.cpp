#include "manifest.hpp"

#include <ctime>
#include <fstream>
#include <memory>

#include <json.hpp>
#include <openssl/evp.h>

#include "bnhp/checkpoint.hpp"
#include "bnhp/error.hpp"

using bnhp::ErrorKind;
using bnhp::require;

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  require(ctx && EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) == 1, ErrorKind::Io, "SHA-256 unavailable");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

RunManifest::RunManifest(std::string command, int argc, char** argv)
    : command_(std::move(command)),
      argv_(argv, argv + argc),
      started_wall_(std::chrono::system_clock::now()),
      started_(std::chrono::steady_clock::now()) {}

void RunManifest::write(const std::string& path) const {
  using nlohmann::json;
  auto files = [](const std::vector<std::string>& paths) {
    json arr = json::array();
    for (const auto& p : paths) arr.push_back({{"path", p}, {"sha256", sha256_file(p)}});
    return arr;
  };
  const std::time_t t = std::chrono::system_clock::to_time_t(started_wall_);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  json doc = {{"command", command_},
              {"argv", argv_},
              {"tool_version", bnhp::kToolVersion},
              {"checkpoint_format_version", bnhp::kCheckpointVersion},
              {"started_utc", stamp},
              {"wall_clock_seconds",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count()},
              {"inputs", files(inputs_)},
              {"outputs", files(outputs_)}};
  if (has_seed_) doc["seed"] = seed_;
  if (!kind_.empty()) doc["model_kind"] = kind_;
  if (!config_.empty()) doc["config"] = config_;
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write manifest " + path);
  out << doc.dump(2) << '\n';
}
