#include "emomsase/checkpoint.hpp"

#include <bit>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "emomsase/error.hpp"

namespace emomsase::graph {

namespace fs = std::filesystem;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::InvalidArgument, "SHA-256 failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

void save_checkpoint(const fs::path& prefix, std::span<Param* const> params, std::uint64_t seed,
                     std::string_view config_hash) {
  static_assert(std::endian::native == std::endian::little);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["config_hash"] = std::string(config_hash);
  manifest["params"] = nlohmann::json::array();

  std::ofstream blob(fs::path(prefix).concat(".bin"), std::ios::binary);
  if (!blob) throw Error(ErrorKind::MissingFile, fmt::format("cannot write {}.bin", prefix.string()));
  for (const auto* p : params) {
    manifest["params"].push_back({{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}});
    const RowMajor rm = p->value;
    blob.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
  }
  std::ofstream json(fs::path(prefix).concat(".json"));
  json << manifest.dump(2) << '\n';
}

void load_checkpoint(const fs::path& prefix, std::span<Param* const> params, std::string_view expected_config_hash) {
  std::ifstream json(fs::path(prefix).concat(".json"));
  if (!json) throw Error(ErrorKind::MissingFile, fmt::format("{}.json", prefix.string()));
  const auto manifest = nlohmann::json::parse(json);
  if (!expected_config_hash.empty() && manifest.at("config_hash").get<std::string>() != expected_config_hash) {
    throw Error(ErrorKind::InvalidArgument, "checkpoint was written for a different configuration");
  }
  const auto& entries = manifest.at("params");
  if (entries.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, fmt::format("checkpoint has {} params, model {}", entries.size(), params.size()));
  }
  std::ifstream blob(fs::path(prefix).concat(".bin"), std::ios::binary);
  if (!blob) throw Error(ErrorKind::MissingFile, fmt::format("{}.bin", prefix.string()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    const auto& e = entries[i];
    const auto rows = e.at("shape")[0].get<Eigen::Index>();
    const auto cols = e.at("shape")[1].get<Eigen::Index>();
    if (e.at("name").get<std::string>() != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw Error(ErrorKind::ShapeMismatch, fmt::format("checkpoint entry {} does not match param {}", i, p->name));
    }
    RowMajor rm(rows, cols);
    blob.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
    if (!blob) throw Error(ErrorKind::ParseError, "checkpoint blob is truncated");
    p->value = rm;
  }
}

}  // namespace emomsase::graph
