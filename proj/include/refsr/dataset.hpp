#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "refsr/errors.hpp"
#include "refsr/imaging.hpp"
#include "refsr/png_io.hpp"
#include "refsr/procedural.hpp"
#include "refsr/rng.hpp"
#include "refsr/tensor.hpp"

namespace refsr {

inline constexpr int kScaleFactor = 4;

/// One training or test unit: LR input, reference image and ground truth.
struct SamplePair {
  std::string id;
  ImageTensor lr;
  ImageTensor ref;
  ImageTensor gt;

  void validate() const {
    const int h = kScaleFactor * lr.height(), w = kScaleFactor * lr.width();
    if (lr.empty() || ref.height() != h || ref.width() != w || gt.height() != h || gt.width() != w) {
      throw DataError("sample '" + id + "': ref and gt must be exactly 4x the LR size (lr " +
                      shape_string(lr) + ", ref " + shape_string(ref) + ", gt " + shape_string(gt) + ")");
    }
  }
};

using Dataset = std::vector<SamplePair>;

inline std::vector<std::string> dataset_ids(const Dataset& ds) {
  std::vector<std::string> ids;
  ids.reserve(ds.size());
  for (const auto& s : ds) ids.push_back(s.id);
  return ids;
}

/// Reads `<root>/{lr,ref,hr}/<id>.png`. Ids come from `hr/`, sorted.
inline Dataset load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path hr_dir = root / "hr";
  if (!fs::is_directory(hr_dir)) throw DataError("dataset: missing directory " + hr_dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(hr_dir)) {
    if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError("dataset: no images under " + hr_dir.string());
  Dataset ds;
  ds.reserve(ids.size());
  for (const auto& id : ids) {
    const std::string file = id + ".png";
    for (const char* sub : {"lr", "ref"}) {
      if (!fs::exists(root / sub / file)) {
        throw DataError("dataset: id '" + id + "' missing from " + (root / sub).string());
      }
    }
    SamplePair s{id, load_image_tensor(root / "lr" / file), load_image_tensor(root / "ref" / file),
                 load_image_tensor(root / "hr" / file)};
    s.validate();
    ds.push_back(std::move(s));
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& root) {
  for (const auto& s : ds) {
    const std::string file = s.id + ".png";
    save_image(s.lr, root / "lr" / file);
    save_image(s.ref, root / "ref" / file);
    save_image(s.gt, root / "hr" / file);
  }
}

/// Rounds through 8-bit codes so in-memory data equals what a PNG round trip
/// would produce.
inline ImageTensor quantized(const ImageTensor& img) { return dequantize(quantize(img)); }

/// Reference derived from the HR image by an integer translation (edge
/// replicated) and a global brightness change, mimicking the photometric and
/// geometric gap between an input and its reference.
inline ImageTensor make_reference(const ImageTensor& hr, std::uint64_t seed, int max_shift = 6) {
  SplitMix64 rng(derive_seed(seed, 0x2EF));
  const int dx = static_cast<int>(rng.below(2 * max_shift + 1)) - max_shift;
  const int dy = static_cast<int>(rng.below(2 * max_shift + 1)) - max_shift;
  const float gain = static_cast<float>(rng.uniform(0.9, 1.1));
  ImageTensor ref(hr.height(), hr.width());
  for (int y = 0; y < hr.height(); ++y)
    for (int x = 0; x < hr.width(); ++x) {
      const int sy = std::clamp(y + dy, 0, hr.height() - 1), sx = std::clamp(x + dx, 0, hr.width() - 1);
      for (int c = 0; c < 3; ++c) ref(y, x, c) = gain * hr(sy, sx, c);
    }
  clamp_unit(ref);
  return ref;
}

/// Procedurally generated desk-scale dataset with ids `<prefix>NNNN`.
inline Dataset synth_dataset(int count, std::uint64_t seed, int hr_size = 160,
                             const std::string& prefix = "s") {
  if (hr_size % kScaleFactor != 0) throw ConfigError("synth: hr_size must be divisible by 4");
  Dataset ds;
  ds.reserve(count);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i) + 1);
    SamplePair p;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d", i);
    p.id = prefix + buf;
    p.gt = quantized(procedural::scene(hr_size, hr_size, s));
    p.lr = quantized(bicubic_resize(p.gt, Scale::down(kScaleFactor)));
    p.ref = quantized(make_reference(p.gt, s));
    ds.push_back(std::move(p));
  }
  return ds;
}

}  // namespace refsr
