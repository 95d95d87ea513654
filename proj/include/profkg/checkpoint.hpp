#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "profkg/error.hpp"
#include "profkg/matrix_io.hpp"
#include "profkg/model.hpp"

namespace profkg {

struct TensorEntry {
  std::string name;
  std::string file;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct CheckpointManifest {
  std::vector<TensorEntry> tensors;
  std::string config_hash;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const CheckpointManifest& m) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const TensorEntry& t : m.tensors)
    tensors.push_back({{"name", t.name}, {"file", t.file}, {"shape", {t.rows, t.cols}}});
  return {{"format", "SPKE"}, {"config_hash", m.config_hash}, {"seed", m.seed}, {"tensors", tensors}};
}

// One matrix file per tensor plus manifest.json in `dir`.
inline CheckpointManifest save_checkpoint(const std::string& dir, const ModelParams<float>& params,
                                          const std::string& config_hash, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  CheckpointManifest manifest;
  manifest.config_hash = config_hash;
  manifest.seed = seed;
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    TensorEntry e{ModelParams<float>::names[i], std::string(ModelParams<float>::names[i]) + ".spke",
                  static_cast<std::size_t>(tensors[i]->rows()), static_cast<std::size_t>(tensors[i]->cols())};
    write_matrix((std::filesystem::path(dir) / e.file).string(), *tensors[i]);
    manifest.tensors.push_back(std::move(e));
  }
  std::ofstream out(std::filesystem::path(dir) / "manifest.json", std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write manifest in " + dir);
  out << to_json(manifest).dump(2) << '\n';
  return manifest;
}

inline CheckpointManifest read_manifest(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / "manifest.json").string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
  CheckpointManifest m;
  m.config_hash = j.value("config_hash", "");
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& t : j.at("tensors"))
    m.tensors.push_back({t.at("name").get<std::string>(), t.at("file").get<std::string>(),
                         t.at("shape").at(0).get<std::size_t>(), t.at("shape").at(1).get<std::size_t>()});
  return m;
}

inline ModelParams<float> load_checkpoint(const std::string& dir, CheckpointManifest* manifest_out = nullptr) {
  const CheckpointManifest manifest = read_manifest(dir);
  ModelParams<float> params;
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string name = ModelParams<float>::names[i];
    auto it = std::find_if(manifest.tensors.begin(), manifest.tensors.end(),
                           [&](const TensorEntry& e) { return e.name == name; });
    if (it == manifest.tensors.end()) throw Error(ErrorCode::header_mismatch, "checkpoint lacks tensor " + name);
    *tensors[i] = read_matrix((std::filesystem::path(dir) / it->file).string());
    if (static_cast<std::size_t>(tensors[i]->rows()) != it->rows ||
        static_cast<std::size_t>(tensors[i]->cols()) != it->cols)
      throw Error(ErrorCode::header_mismatch, "tensor " + name + " disagrees with its manifest shape");
  }
  if (manifest_out) *manifest_out = manifest;
  return params;
}

}  // namespace profkg
