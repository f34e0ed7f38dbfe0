#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairhyp/param_store.hpp"
#include "fairhyp/tensor.hpp"

namespace fairhyp {

inline constexpr const char* kToolkitVersion = "0.1.0";

namespace fs = std::filesystem;

/// Writes `bytes` to a temporary sibling and renames it over `path`.
void write_file_atomic(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);
/// Pretty-printed JSON (sorted keys, trailing newline), written atomically.
void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

/// Header of the two-file cube container: `<name>.json` describes
/// `<name>.raw`, which holds little-endian f32 samples band after band.
struct HsiHeader {
  std::size_t bands = 0, height = 0, width = 0;
  double value_min = 0.0, value_max = 1.0;
  std::vector<double> wavelengths;
  nlohmann::json provenance = nlohmann::json::object();
  /// Payload file name relative to the header's directory.
  std::string payload;

  Shape shape() const { return Shape{bands, height, width}; }
  nlohmann::json to_json() const;
  static HsiHeader from_json(const nlohmann::json& j, const std::string& where);
};

struct HsiFile {
  HsiHeader header;
  Tensor<float> cube;
};

/// Writes header and payload; `header` dims are taken from `cube`.
void write_hsi(const fs::path& json_path, const Tensor<float>& cube, HsiHeader header = {});
HsiFile read_hsi(const fs::path& json_path);
/// ENVI adapter: BSQ interleave, data type 4 (f32), little-endian only.
HsiFile read_envi(const fs::path& hdr_path);

std::string encode_f32_le(std::span<const float> values);
std::vector<float> decode_f32_le(std::string_view bytes, const std::string& where);

/// Named f32 arrays in `<name>.raw` plus a manifest with shapes, offsets and
/// caller metadata (network config, seed).
template <typename T>
void save_checkpoint(const fs::path& json_path, const ParamStore<T>& store,
                     const nlohmann::json& meta = nlohmann::json::object());
/// Overwrites the values of `store`; names and shapes must match exactly.
template <typename T>
void load_checkpoint(const fs::path& json_path, ParamStore<T>& store);
nlohmann::json read_checkpoint_meta(const fs::path& json_path);

/// Minimal PNG encoder: 8-bit gray (channels 1) or RGB (channels 3).
void write_png(const fs::path& path, std::size_t width, std::size_t height, int channels,
               const std::vector<std::uint8_t>& pixels);
/// Maps values in [lo, hi] onto a blue-white-red ramp; returns RGB bytes.
std::vector<std::uint8_t> diverging_rgb(const std::vector<double>& values, double lo, double hi);
/// Maps values in [lo, hi] onto 0..255.
std::vector<std::uint8_t> grayscale(const std::vector<double>& values, double lo, double hi);

/// Everything needed to replay one CLI invocation.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  std::uint64_t seed = 0;
  std::string task;
  nlohmann::json network = nullptr;
  nlohmann::json degradation = nullptr;
  nlohmann::json train = nullptr;
  /// Input description (file paths or a synthetic recipe).
  nlohmann::json data = nullptr;
  std::string output_dir;
  std::map<std::string, std::string> artifacts;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

}  // namespace fairhyp
