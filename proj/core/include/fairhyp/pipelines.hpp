#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairhyp/rk4sva.hpp"
#include "fairhyp/s2fairconv.hpp"
#include "fairhyp/scss.hpp"

namespace fairhyp {

enum class Task { kRestoration, kClassification };

/// What a disabled module turns into: a plain conv of matching width, or
/// nothing at all.
enum class AblationMode { kSubstitute, kDelete };

struct ModuleToggles {
  bool rk4sva = true;
  bool s2fairconv = true;
  bool scss = true;
};

struct NetworkConfig {
  Task task = Task::kRestoration;
  std::size_t bands = 31;
  std::size_t channels = 8;
  std::size_t depth = 3;
  ModuleToggles modules;
  AblationMode ablation = AblationMode::kSubstitute;
  std::size_t patch_size = 13;
  std::size_t num_classes = 16;
  std::size_t state_dim = 16;
  std::size_t ref_channels = 16;
  bool tied_scans = false;
  FinalInput final_input = FinalInput::kFusion;
  double leaky_slope = 0.01;

  void validate() const;
  /// Smallest spatial extent that survives depth-1 stride-2 stages.
  std::size_t min_spatial() const { return std::size_t{1} << (depth - 1); }

  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
};

/// Analytic cost; `modules` is keyed by the parameter-name prefix of each part
/// (rk4sva, stem, s2fairconv, trunk, scss, substitute, head).
struct CostReport {
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
  std::map<std::string, nn::Cost> modules;

  void add(const std::string& module, const nn::Cost& c);
  nlohmann::json to_json() const;
};

/// Restoration: (B,H,W) -> (B,H,W).
///
///   x -> RK4-SVA -> lift (1 -> C, 3x3x3) -> encoder stages, each a stride-2
///   spatial conv (except the first) followed by an S2FairConv block -> SCSS
///   -> decoder stages (nearest upsample, skip add, S2FairConv block)
///   -> project (C -> 1, 3x3x3) + x
///
/// Classification: (B,P,P) patch -> same encoder and SCSS -> global spatial
/// average -> linear head over the C*B features -> num_classes logits.
class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }

  template <typename T>
  void init(ParamStore<T>& store) const;
  template <typename T>
  ParamStore<T> make_params(std::uint64_t seed) const {
    ParamStore<T> store(seed);
    init(store);
    return store;
  }
  /// Every module becomes an exact identity and the output projection is
  /// zeroed, so a restoration network returns its input unchanged.
  template <typename T>
  void set_identity(ParamStore<T>& store) const;

  template <typename T>
  Var forward(Tape<T>& tape, Var cube) const;
  /// Tape-free evaluation (inference tape, gradients disabled).
  template <typename T>
  Tensor<T> infer(const ParamStore<T>& store, const Tensor<T>& cube) const;

  /// Throws ConfigError unless `cube` is (B,H,W) with usable spatial extents.
  void check_input(const Shape& cube) const;
  Shape output_shape(const Shape& cube) const;

  std::size_t param_count() const;
  CostReport count_cost(const Shape& cube) const;

 private:
  /// One feature-extraction slot: the enabled module, its plain-conv
  /// substitute, or nothing.
  struct Block {
    enum class Kind { kNone, kS2Fair, kScss, kConv } kind = Kind::kNone;
    S2FairConv s2fair;
    Scss scss;
    nn::Conv conv;
  };

  template <typename T>
  Var block(Tape<T>& tape, const Block& b, Var x) const;
  nn::Cost block_cost(const Block& b, const Dims4& in, std::string* module) const;

  NetworkConfig config_;
  std::optional<Rk4Sva> rk4sva_;
  nn::Conv lift_;
  std::vector<nn::Conv> down_;
  std::vector<Block> encoder_, decoder_;
  Block bottleneck_;
  nn::Conv project_, classify_;
};

/// Convenience: network plus freshly initialized parameters.
template <typename T>
struct Built {
  Network network;
  ParamStore<T> params;
};

template <typename T>
Built<T> build(const NetworkConfig& config, std::uint64_t seed) {
  Network net(config);
  ParamStore<T> params = net.template make_params<T>(seed);
  return {std::move(net), std::move(params)};
}

std::string to_string(Task task);
std::string to_string(AblationMode mode);

}  // namespace fairhyp
