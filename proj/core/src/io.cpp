#include "fairhyp/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "fairhyp/errors.hpp"

namespace fairhyp {

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move temporary file into place at '" + path.string() + "'");
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "': file missing or unreadable");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

std::string encode_f32_le(std::span<const float> values) {
  std::string out(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int k = 0; k < 4; ++k) out[i * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xffu);
  }
  return out;
}

std::vector<float> decode_f32_le(std::string_view bytes, const std::string& where) {
  if (bytes.size() % 4 != 0) {
    throw IoError("payload '" + where + "' length " + std::to_string(bytes.size()) +
                  " is not a multiple of 4");
  }
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + k])) << (8 * k);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

nlohmann::json HsiHeader::to_json() const {
  nlohmann::json j = {{"schema", 1},
                      {"dims", {bands, height, width}},
                      {"dtype", "f32"},
                      {"layout", "BSQ"},
                      {"value_range", {value_min, value_max}},
                      {"provenance", provenance},
                      {"payload", payload}};
  if (!wavelengths.empty()) j["wavelengths"] = wavelengths;
  return j;
}

HsiHeader HsiHeader::from_json(const nlohmann::json& j, const std::string& where) {
  auto fail = [&](const std::string& what) -> IoError {
    return IoError("malformed header '" + where + "': " + what);
  };
  if (!j.is_object()) throw fail("expected a JSON object");
  if (j.value("schema", 0) != 1) throw fail("missing or unsupported \"schema\" (expected 1)");
  if (j.value("dtype", std::string()) != "f32") throw fail("\"dtype\" must be \"f32\"");
  if (j.value("layout", std::string()) != "BSQ") throw fail("\"layout\" must be \"BSQ\"");
  HsiHeader h;
  try {
    const auto dims = j.at("dims").get<std::vector<long long>>();
    if (dims.size() != 3 || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
      throw fail("\"dims\" must be three positive integers [B, H, W]");
    }
    h.bands = static_cast<std::size_t>(dims[0]);
    h.height = static_cast<std::size_t>(dims[1]);
    h.width = static_cast<std::size_t>(dims[2]);
    const auto range = j.at("value_range").get<std::vector<double>>();
    if (range.size() != 2) throw fail("\"value_range\" must be [min, max]");
    h.value_min = range[0];
    h.value_max = range[1];
    if (j.contains("wavelengths")) h.wavelengths = j.at("wavelengths").get<std::vector<double>>();
    if (h.wavelengths.size() != 0 && h.wavelengths.size() != h.bands) {
      throw fail("\"wavelengths\" has " + std::to_string(h.wavelengths.size()) +
                 " entries for " + std::to_string(h.bands) + " bands");
    }
    h.provenance = j.value("provenance", nlohmann::json::object());
    h.payload = j.at("payload").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }
  if (h.payload.empty()) throw fail("\"payload\" is empty");
  return h;
}

void write_hsi(const fs::path& json_path, const Tensor<float>& cube, HsiHeader header) {
  if (cube.shape().rank() != 3) {
    throw ConfigError("write_hsi: expected a (B,H,W) cube, got " + cube.shape().to_string());
  }
  header.bands = cube.shape()[0];
  header.height = cube.shape()[1];
  header.width = cube.shape()[2];
  fs::path raw = json_path;
  raw.replace_extension(".raw");
  header.payload = raw.filename().string();
  write_file_atomic(raw, encode_f32_le(cube.data()));
  write_json(json_path, header.to_json());
}

HsiFile read_hsi(const fs::path& json_path) {
  HsiFile f;
  f.header = HsiHeader::from_json(read_json(json_path), json_path.string());
  const fs::path raw = json_path.parent_path() / f.header.payload;
  const std::string bytes = read_file(raw);
  const std::size_t expect = 4 * f.header.bands * f.header.height * f.header.width;
  if (bytes.size() != expect) {
    throw IoError("payload '" + raw.string() + "' holds " + std::to_string(bytes.size()) +
                  " bytes but the header dims " + f.header.shape().to_string() + " need " +
                  std::to_string(expect));
  }
  f.cube = Tensor<float>(f.header.shape(), decode_f32_le(bytes, raw.string()));
  return f;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

HsiFile read_envi(const fs::path& hdr_path) {
  const std::string text = read_file(hdr_path);
  const std::string where = hdr_path.string();
  if (text.rfind("ENVI", 0) != 0) throw IoError("'" + where + "' is not an ENVI header");
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = lower(trim(line.substr(0, eq)));
    std::string value = trim(line.substr(eq + 1));
    if (!value.empty() && value.front() == '{') {
      while (value.find('}') == std::string::npos && std::getline(in, line)) value += " " + trim(line);
    }
    kv[key] = value;
  }
  auto integer = [&](const std::string& key, long long fallback, bool required) {
    const auto it = kv.find(key);
    if (it == kv.end()) {
      if (required) throw IoError("ENVI header '" + where + "' lacks '" + key + "'");
      return fallback;
    }
    try {
      return std::stoll(it->second);
    } catch (const std::exception&) {
      throw IoError("ENVI header '" + where + "': '" + key + "' is not an integer");
    }
  };
  const long long samples = integer("samples", 0, true);
  const long long lines = integer("lines", 0, true);
  const long long bands = integer("bands", 0, true);
  if (samples <= 0 || lines <= 0 || bands <= 0) {
    throw IoError("ENVI header '" + where + "': dimensions must be positive");
  }
  if (integer("data type", 0, true) != 4) {
    throw IoError("ENVI header '" + where + "': only data type 4 (f32) is supported");
  }
  if (integer("byte order", 0, false) != 0) {
    throw IoError("ENVI header '" + where + "': only little-endian (byte order 0) is supported");
  }
  if (lower(kv.count("interleave") ? kv["interleave"] : "bsq") != "bsq") {
    throw IoError("ENVI header '" + where + "': only BSQ interleave is supported");
  }
  const long long offset = integer("header offset", 0, false);

  fs::path data;
  for (const char* ext : {"", ".img", ".raw", ".dat", ".bsq"}) {
    fs::path candidate = hdr_path;
    candidate.replace_extension(ext);
    if (candidate != hdr_path && fs::exists(candidate)) {
      data = candidate;
      break;
    }
  }
  if (data.empty()) throw IoError("no data file found next to ENVI header '" + where + "'");
  const std::string bytes = read_file(data);
  const std::size_t count = static_cast<std::size_t>(samples * lines * bands);
  if (bytes.size() < static_cast<std::size_t>(offset) + 4 * count) {
    throw IoError("ENVI data '" + data.string() + "' is shorter than the header dims imply");
  }
  HsiFile f;
  f.header.bands = static_cast<std::size_t>(bands);
  f.header.height = static_cast<std::size_t>(lines);
  f.header.width = static_cast<std::size_t>(samples);
  f.header.provenance = {{"source", "envi"}, {"file", data.filename().string()}};
  f.cube = Tensor<float>(f.header.shape(),
                         decode_f32_le(std::string_view(bytes).substr(offset, 4 * count), where));
  auto [lo, hi] = std::minmax_element(f.cube.data().begin(), f.cube.data().end());
  f.header.value_min = *lo;
  f.header.value_max = *hi;
  if (kv.count("wavelength")) {
    std::string w = kv["wavelength"];
    std::replace(w.begin(), w.end(), '{', ' ');
    std::replace(w.begin(), w.end(), '}', ' ');
    std::replace(w.begin(), w.end(), ',', ' ');
    std::istringstream ws(w);
    double v;
    while (ws >> v) f.header.wavelengths.push_back(v);
    if (f.header.wavelengths.size() != f.header.bands) f.header.wavelengths.clear();
  }
  return f;
}

template <typename T>
void save_checkpoint(const fs::path& json_path, const ParamStore<T>& store,
                     const nlohmann::json& meta) {
  fs::path raw = json_path;
  raw.replace_extension(".raw");
  std::vector<float> flat;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& [name, e] : store.entries()) {
    const auto ext = e.value.shape().extents();
    arrays.push_back({{"name", name},
                      {"shape", std::vector<std::size_t>(ext.begin(), ext.end())},
                      {"offset", flat.size()},
                      {"count", e.value.size()}});
    for (T v : e.value.data()) flat.push_back(static_cast<float>(v));
  }
  write_file_atomic(raw, encode_f32_le(flat));
  write_json(json_path, {{"schema", 1},
                         {"dtype", "f32"},
                         {"seed", store.seed()},
                         {"payload", raw.filename().string()},
                         {"arrays", arrays},
                         {"meta", meta}});
}

template <typename T>
void load_checkpoint(const fs::path& json_path, ParamStore<T>& store) {
  const nlohmann::json m = read_json(json_path);
  const std::string where = json_path.string();
  if (m.value("schema", 0) != 1 || m.value("dtype", std::string()) != "f32") {
    throw IoError("malformed checkpoint '" + where + "': expected schema 1 with dtype f32");
  }
  std::vector<float> flat;
  try {
    flat = decode_f32_le(read_file(json_path.parent_path() / m.at("payload").get<std::string>()),
                         where);
    std::size_t seen = 0;
    for (const auto& a : m.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto shape = a.at("shape").get<std::vector<std::size_t>>();
      const auto offset = a.at("offset").get<std::size_t>();
      if (!store.contains(name)) {
        throw IoError("checkpoint '" + where + "' has unknown parameter '" + name + "'");
      }
      auto& value = store.value(name);
      if (!(Shape(std::span<const std::size_t>(shape)) == value.shape())) {
        throw IoError("checkpoint '" + where + "': parameter '" + name + "' has shape " +
                      Shape(std::span<const std::size_t>(shape)).to_string() +
                      ", network expects " + value.shape().to_string());
      }
      if (offset + value.size() > flat.size()) {
        throw IoError("checkpoint '" + where + "': payload too short for '" + name + "'");
      }
      for (std::size_t i = 0; i < value.size(); ++i) value[i] = static_cast<T>(flat[offset + i]);
      ++seen;
    }
    if (seen != store.size()) {
      throw IoError("checkpoint '" + where + "' holds " + std::to_string(seen) +
                    " parameters, network has " + std::to_string(store.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint '" + where + "': " + e.what());
  }
}

nlohmann::json read_checkpoint_meta(const fs::path& json_path) {
  const nlohmann::json m = read_json(json_path);
  return m.value("meta", nlohmann::json::object());
}

namespace {

void put_u32(std::string& s, std::uint32_t v) {
  for (int k = 3; k >= 0; --k) s.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

void put_chunk(std::string& png, const char* type, const std::string& data) {
  put_u32(png, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  png += body;
  put_u32(png, static_cast<std::uint32_t>(
                   crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace

void write_png(const fs::path& path, std::size_t width, std::size_t height, int channels,
               const std::vector<std::uint8_t>& pixels) {
  if (channels != 1 && channels != 3) throw ConfigError("write_png: channels must be 1 or 3");
  const std::size_t stride = width * static_cast<std::size_t>(channels);
  if (width == 0 || height == 0 || pixels.size() != stride * height) {
    throw ConfigError("write_png: pixel buffer does not match " + std::to_string(width) + "x" +
                      std::to_string(height));
  }
  std::string raw;
  raw.reserve((stride + 1) * height);
  for (std::size_t r = 0; r < height; ++r) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(pixels.data() + r * stride), stride);
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_size, '\0');
  if (compress(reinterpret_cast<Bytef*>(packed.data()), &packed_size,
               reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size())) != Z_OK) {
    throw IoError("write_png: compression failed for '" + path.string() + "'");
  }
  packed.resize(packed_size);

  std::string png("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);
  ihdr.push_back(channels == 1 ? 0 : 2);
  ihdr.append(3, '\0');
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", packed);
  put_chunk(png, "IEND", "");
  write_file_atomic(path, png);
}

std::vector<std::uint8_t> diverging_rgb(const std::vector<double>& values, double lo, double hi) {
  const double cold[3] = {59, 76, 192}, mid[3] = {245, 245, 245}, hot[3] = {180, 4, 38};
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 3);
  for (double v : values) {
    double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    t = std::clamp(t, 0.0, 1.0);
    const double* a = t < 0.5 ? cold : mid;
    const double* b = t < 0.5 ? mid : hot;
    const double s = t < 0.5 ? t * 2.0 : (t - 0.5) * 2.0;
    for (int c = 0; c < 3; ++c) out.push_back(static_cast<std::uint8_t>(std::lround(a[c] + s * (b[c] - a[c]))));
  }
  return out;
}

std::vector<std::uint8_t> grayscale(const std::vector<double>& values, double lo, double hi) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size());
  for (double v : values) {
    const double t = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    out.push_back(static_cast<std::uint8_t>(std::lround(t * 255.0)));
  }
  return out;
}

nlohmann::json RunManifest::to_json() const {
  return {{"schema", 1},          {"toolkit_version", kToolkitVersion},
          {"command", command},   {"args", args},
          {"seed", seed},         {"task", task},
          {"network", network},   {"degradation", degradation},
          {"train", train},       {"data", data},
          {"output_dir", output_dir}, {"artifacts", artifacts}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema", 0) != 1) {
    throw ConfigError("run manifest: expected a JSON object with \"schema\": 1");
  }
  RunManifest m;
  try {
    m.command = j.value("command", std::string());
    m.args = j.value("args", std::vector<std::string>{});
    m.seed = j.value("seed", std::uint64_t{0});
    m.task = j.value("task", std::string());
    m.network = j.value("network", nlohmann::json());
    m.degradation = j.value("degradation", nlohmann::json());
    m.train = j.value("train", nlohmann::json());
    m.data = j.value("data", nlohmann::json());
    m.output_dir = j.value("output_dir", std::string());
    m.artifacts = j.value("artifacts", std::map<std::string, std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run manifest: ") + e.what());
  }
  return m;
}

template void save_checkpoint<float>(const fs::path&, const ParamStore<float>&, const nlohmann::json&);
template void save_checkpoint<double>(const fs::path&, const ParamStore<double>&, const nlohmann::json&);
template void load_checkpoint<float>(const fs::path&, ParamStore<float>&);
template void load_checkpoint<double>(const fs::path&, ParamStore<double>&);

}  // namespace fairhyp
