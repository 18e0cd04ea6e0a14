#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "refsr/errors.hpp"
#include "refsr/losses.hpp"
#include "refsr/model.hpp"
#include "refsr/nn.hpp"

// Named-tensor archive, version 1:
//
//   offset 0   8 bytes   magic "REFSRARC"
//   offset 8   u32 LE    format version (1)
//   offset 12  u32 LE    header length N
//   offset 16  N bytes   UTF-8 JSON header:
//                          {"version":1, "dtype":"f32"|"f64", "meta":{...},
//                           "tensors":[{"name":..., "shape":[...]}, ...]}
//   then       raw little-endian tensor payloads in header order
//
// Headers are written with ordered keys and no timestamps, so equal contents
// give byte-identical files.

namespace refsr {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

inline constexpr char kArchiveMagic[8] = {'R', 'E', 'F', 'S', 'R', 'A', 'R', 'C'};
inline constexpr std::uint32_t kArchiveVersion = 1;

template <class T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

template <class T>
void write_archive(const std::filesystem::path& path, const nlohmann::ordered_json& meta,
                   const nn::ParamSet<T>& params) {
  nlohmann::ordered_json header;
  header["version"] = kArchiveVersion;
  header["dtype"] = dtype_name<T>();
  header["meta"] = meta;
  header["tensors"] = nlohmann::ordered_json::array();
  for (const auto& t : params) header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("archive: cannot write " + path.string());
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(kArchiveMagic, 8);
  out.write(reinterpret_cast<const char*>(&kArchiveVersion), 4);
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : params)
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(T)));
}

template <class T>
struct Archive {
  nlohmann::ordered_json meta;
  nn::ParamSet<T> params;
};

namespace detail {
template <class Stored, class Dst>
void read_payload(std::ifstream& in, Dst& dst, const std::string& path) {
  std::vector<Stored> buf(dst.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(Stored)));
  if (!in) throw DataError("archive: truncated payload in " + path);
  for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = static_cast<typename Dst::value_type>(buf[i]);
}
}  // namespace detail

/// Reads an archive, converting the stored dtype to T.
template <class T>
Archive<T> read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("archive: cannot open " + path.string());
  char magic[8];
  std::uint32_t version = 0, len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&len), 4);
  if (!in || std::memcmp(magic, kArchiveMagic, 8) != 0) throw DataError("archive: bad magic in " + path.string());
  if (version != kArchiveVersion)
    throw DataError("archive: unsupported version " + std::to_string(version) + " in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw DataError("archive: truncated header in " + path.string());

  Archive<T> a;
  try {
    const auto header = nlohmann::ordered_json::parse(text);
    a.meta = header.at("meta");
    const std::string dtype = header.at("dtype").get<std::string>();
    if (dtype != "f32" && dtype != "f64") throw DataError("archive: unknown dtype " + dtype);
    for (const auto& t : header.at("tensors")) {
      const std::size_t i = a.params.add(t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>());
      if (dtype == "f32") detail::read_payload<float>(in, a.params[i].data, path.string());
      else detail::read_payload<double>(in, a.params[i].data, path.string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("archive: malformed header in " + path.string() + ": " + e.what());
  }
  return a;
}

// ---------------------------------------------------------------------------
// Model and extractor archives

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  return {{"base_channels", c.base_channels},       {"patch_size_match", c.patch_size_match},
          {"num_res_blocks", c.num_res_blocks},     {"scale", c.scale},
          {"coord_frequencies", c.coord_frequencies}, {"attention_reduction", c.attention_reduction}};
}

inline ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  c.base_channels = j.at("base_channels").get<int>();
  c.patch_size_match = j.at("patch_size_match").get<int>();
  c.num_res_blocks = j.at("num_res_blocks").get<int>();
  c.scale = j.at("scale").get<int>();
  c.coord_frequencies = j.at("coord_frequencies").get<int>();
  c.attention_reduction = j.at("attention_reduction").get<int>();
  c.validate();
  return c;
}

inline nlohmann::ordered_json extractor_config_to_json(const ExtractorConfig& c) {
  return {{"channels", c.channels}, {"tap", c.tap}, {"seed", c.seed}};
}

inline ExtractorConfig extractor_config_from_json(const nlohmann::ordered_json& j) {
  ExtractorConfig c{j.at("channels").get<std::vector<int>>(), j.at("tap").get<int>(),
                    j.at("seed").get<std::uint64_t>()};
  c.validate();
  return c;
}

/// Provenance stored next to the weights.
struct CheckpointInfo {
  std::uint64_t seed = 0;
  long long step = 0;
  std::string attack = "none";  // trigger kind of the poisoned training records, or "none"
};

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<T>& model, CheckpointInfo info) {
  nlohmann::ordered_json meta{{"kind", "refsr-model"},
                              {"config", model_config_to_json(model.config)},
                              {"seed", info.seed},
                              {"step", info.step},
                              {"attack", info.attack}};
  write_archive(path, meta, model.tensors);
}

template <class T = float>
ModelParams<T> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr) {
  auto a = read_archive<T>(path);
  try {
    if (a.meta.at("kind").template get<std::string>() != "refsr-model")
      throw DataError("checkpoint: " + path.string() + " is not a model archive");
    ModelParams<T> mp{model_config_from_json(a.meta.at("config")), {}};
    nn::ParamSet<T> expected;
    detail::declare_params(mp.config, expected);
    if (!expected.same_layout(a.params)) throw DataError("checkpoint: tensor layout does not match config");
    mp.tensors = std::move(a.params);
    if (info)
      *info = {a.meta.at("seed").template get<std::uint64_t>(), a.meta.at("step").template get<long long>(),
               a.meta.at("attack").template get<std::string>()};
    return mp;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: " + path.string() + ": " + e.what());
  }
}

template <class T>
void save_extractor(const std::filesystem::path& path, const FeatureExtractor<T>& fx) {
  write_archive(path, {{"kind", "feature-extractor"}, {"config", extractor_config_to_json(fx.config())}},
                fx.params());
}

template <class T = float>
FeatureExtractor<T> load_extractor(const std::filesystem::path& path) {
  auto a = read_archive<T>(path);
  try {
    if (a.meta.at("kind").template get<std::string>() != "feature-extractor")
      throw DataError("extractor: " + path.string() + " is not an extractor archive");
    return FeatureExtractor<T>::from_params(extractor_config_from_json(a.meta.at("config")), std::move(a.params));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("extractor: " + path.string() + ": " + e.what());
  }
}

}  // namespace refsr
