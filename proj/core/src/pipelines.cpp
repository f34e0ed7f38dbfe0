#include "fairhyp/pipelines.hpp"

#include <set>

#include "fairhyp/errors.hpp"
#include "fairhyp/ops.hpp"

namespace fairhyp {

namespace {

const char* kKeys[] = {"schema",     "task",        "bands",        "channels",
                       "depth",      "modules",     "ablation",     "patch_size",
                       "num_classes", "state_dim",  "ref_channels", "tied_scans",
                       "final_input", "leaky_slope"};

template <typename V>
void read_field(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("network config: field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string to_string(Task task) {
  return task == Task::kRestoration ? "restoration" : "classification";
}

std::string to_string(AblationMode mode) {
  return mode == AblationMode::kSubstitute ? "substitute" : "delete";
}

void NetworkConfig::validate() const {
  if (bands == 0) throw ConfigError("network config: bands must be >= 1");
  if (channels == 0) throw ConfigError("network config: channels must be >= 1");
  if (depth == 0 || depth > 8) throw ConfigError("network config: depth must be in [1, 8]");
  if (state_dim == 0) throw ConfigError("network config: state_dim must be >= 1");
  if (modules.s2fairconv && channels % 4 != 0) {
    throw ConfigError("network config: channels (" + std::to_string(channels) +
                      ") must be divisible by 4 when s2fairconv is enabled");
  }
  if (task == Task::kClassification) {
    if (num_classes < 2) throw ConfigError("network config: num_classes must be >= 2");
    if (patch_size < min_spatial()) {
      throw ConfigError("network config: patch_size " + std::to_string(patch_size) +
                        " is smaller than " + std::to_string(min_spatial()) +
                        ", the minimum for depth " + std::to_string(depth));
    }
  }
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"schema", 1},
          {"task", to_string(task)},
          {"bands", bands},
          {"channels", channels},
          {"depth", depth},
          {"modules",
           {{"rk4sva", modules.rk4sva},
            {"s2fairconv", modules.s2fairconv},
            {"scss", modules.scss}}},
          {"ablation", to_string(ablation)},
          {"patch_size", patch_size},
          {"num_classes", num_classes},
          {"state_dim", state_dim},
          {"ref_channels", ref_channels},
          {"tied_scans", tied_scans},
          {"final_input", final_input == FinalInput::kFusion ? "fusion" : "merge"},
          {"leaky_slope", leaky_slope}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("network config: expected a JSON object");
  const std::set<std::string> known(std::begin(kKeys), std::end(kKeys));
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("network config: unknown field '" + key + "'");
  }
  int schema = 1;
  read_field(j, "schema", schema);
  if (schema != 1) throw ConfigError("network config: unsupported schema " + std::to_string(schema));

  NetworkConfig c;
  std::string task = to_string(c.task), ablation = to_string(c.ablation), final_input = "fusion";
  read_field(j, "task", task);
  read_field(j, "bands", c.bands);
  read_field(j, "channels", c.channels);
  read_field(j, "depth", c.depth);
  read_field(j, "ablation", ablation);
  read_field(j, "patch_size", c.patch_size);
  read_field(j, "num_classes", c.num_classes);
  read_field(j, "state_dim", c.state_dim);
  read_field(j, "ref_channels", c.ref_channels);
  read_field(j, "tied_scans", c.tied_scans);
  read_field(j, "final_input", final_input);
  read_field(j, "leaky_slope", c.leaky_slope);
  if (j.contains("modules")) {
    const auto& m = j.at("modules");
    if (!m.is_object()) throw ConfigError("network config: 'modules' must be an object");
    for (const auto& [key, value] : m.items()) {
      if (key != "rk4sva" && key != "s2fairconv" && key != "scss") {
        throw ConfigError("network config: unknown module '" + key + "'");
      }
    }
    read_field(m, "rk4sva", c.modules.rk4sva);
    read_field(m, "s2fairconv", c.modules.s2fairconv);
    read_field(m, "scss", c.modules.scss);
  }

  if (task == "restoration") {
    c.task = Task::kRestoration;
  } else if (task == "classification") {
    c.task = Task::kClassification;
  } else {
    throw ConfigError("network config: task must be 'restoration' or 'classification', got '" +
                      task + "'");
  }
  if (ablation == "substitute") {
    c.ablation = AblationMode::kSubstitute;
  } else if (ablation == "delete") {
    c.ablation = AblationMode::kDelete;
  } else {
    throw ConfigError("network config: ablation must be 'substitute' or 'delete'");
  }
  if (final_input == "fusion") {
    c.final_input = FinalInput::kFusion;
  } else if (final_input == "merge") {
    c.final_input = FinalInput::kMerge;
  } else {
    throw ConfigError("network config: final_input must be 'fusion' or 'merge'");
  }
  c.validate();
  return c;
}

void CostReport::add(const std::string& module, const nn::Cost& c) {
  modules[module] += c;
  flops += c.flops;
  params += c.params;
}

nlohmann::json CostReport::to_json() const {
  nlohmann::json parts = nlohmann::json::object();
  for (const auto& [name, c] : modules) parts[name] = {{"flops", c.flops}, {"params", c.params}};
  return {{"flops", flops}, {"params", params}, {"modules", parts}};
}

Network::Network(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t B = config_.bands, C = config_.channels;
  const bool substitute = config_.ablation == AblationMode::kSubstitute;

  if (config_.modules.rk4sva) {
    Rk4SvaConfig rc;
    rc.bands = B;
    rc.ref_channels = config_.ref_channels;
    rc.leaky_slope = config_.leaky_slope;
    rk4sva_.emplace("rk4sva", rc);
  }
  lift_ = nn::Conv("stem.lift", 1, C, nn::cube_kernel(3));

  auto make_block = [&](const std::string& tag) {
    Block b;
    if (config_.modules.s2fairconv) {
      S2FairConfig sc;
      sc.channels = C;
      sc.bands = B;
      b.kind = Block::Kind::kS2Fair;
      b.s2fair = S2FairConv("s2fairconv." + tag, sc);
    } else if (substitute) {
      b.kind = Block::Kind::kConv;
      b.conv = nn::Conv("substitute." + tag, C, C, nn::cube_kernel(3));
    }
    return b;
  };
  for (std::size_t s = 0; s < config_.depth; ++s) {
    if (s > 0) {
      ConvSpec down = nn::spatial_kernel(3, 3);
      down.stride_h = down.stride_w = 2;
      down_.emplace_back("trunk.down" + std::to_string(s), C, C, down);
    }
    encoder_.push_back(make_block("enc" + std::to_string(s)));
  }
  if (config_.modules.scss) {
    ScssConfig sc;
    sc.channels = C;
    sc.state_dim = config_.state_dim;
    sc.tied_scans = config_.tied_scans;
    sc.final_input = config_.final_input;
    sc.leaky_slope = config_.leaky_slope;
    bottleneck_.kind = Block::Kind::kScss;
    bottleneck_.scss = Scss("scss", sc);
  } else if (substitute) {
    bottleneck_.kind = Block::Kind::kConv;
    bottleneck_.conv = nn::Conv("substitute.bottleneck", C, C, nn::cube_kernel(3));
  }
  if (config_.task == Task::kRestoration) {
    for (std::size_t s = 0; s + 1 < config_.depth; ++s) {
      decoder_.push_back(make_block("dec" + std::to_string(s)));
    }
    project_ = nn::Conv("head.project", C, 1, nn::cube_kernel(3));
  } else {
    classify_ = nn::Conv("head.classify", C * B, config_.num_classes, nn::pointwise());
  }
}

template <typename T>
void Network::init(ParamStore<T>& store) const {
  if (rk4sva_) rk4sva_->init(store);
  lift_.init(store);
  for (const auto& d : down_) d.init(store);
  auto init_block = [&](const Block& b) {
    switch (b.kind) {
      case Block::Kind::kS2Fair: b.s2fair.init(store); break;
      case Block::Kind::kScss: b.scss.init(store); break;
      case Block::Kind::kConv: b.conv.init(store); break;
      case Block::Kind::kNone: break;
    }
  };
  for (const auto& b : encoder_) init_block(b);
  init_block(bottleneck_);
  for (const auto& b : decoder_) init_block(b);
  if (config_.task == Task::kRestoration) {
    // Zero output projection: training starts from the identity map.
    project_.init(store);
    project_.zero(store);
  } else {
    classify_.init(store);
  }
}

template <typename T>
void Network::set_identity(ParamStore<T>& store) const {
  if (rk4sva_) rk4sva_->set_identity(store);
  lift_.zero(store);
  for (const auto& d : down_) d.zero(store);
  auto reset = [&](const Block& b) {
    switch (b.kind) {
      case Block::Kind::kS2Fair: b.s2fair.set_identity(store); break;
      case Block::Kind::kScss: b.scss.set_identity(store); break;
      case Block::Kind::kConv: b.conv.zero(store); break;
      case Block::Kind::kNone: break;
    }
  };
  for (const auto& b : encoder_) reset(b);
  reset(bottleneck_);
  for (const auto& b : decoder_) reset(b);
  if (config_.task == Task::kRestoration) {
    project_.zero(store);
  } else {
    classify_.zero(store);
  }
}

void Network::check_input(const Shape& cube) const {
  if (cube.rank() != 3) {
    throw ConfigError("network: expected a (B,H,W) cube, got " + cube.to_string());
  }
  if (cube[0] != config_.bands) {
    throw ConfigError("network: configured for " + std::to_string(config_.bands) +
                      " bands, input has " + std::to_string(cube[0]));
  }
  if (cube[1] < config_.min_spatial() || cube[2] < config_.min_spatial()) {
    throw ConfigError("network: spatial size " + std::to_string(cube[1]) + "x" +
                      std::to_string(cube[2]) + " is below the minimum " +
                      std::to_string(config_.min_spatial()) + " for depth " +
                      std::to_string(config_.depth));
  }
}

Shape Network::output_shape(const Shape& cube) const {
  check_input(cube);
  if (config_.task == Task::kRestoration) return cube;
  return Shape{config_.num_classes};
}

template <typename T>
Var Network::block(Tape<T>& tape, const Block& b, Var x) const {
  switch (b.kind) {
    case Block::Kind::kS2Fair: {
      TapeScope<T> scope(tape, "s2fairconv");
      return b.s2fair.forward(tape, x);
    }
    case Block::Kind::kScss: {
      TapeScope<T> scope(tape, "scss");
      return b.scss.forward(tape, x);
    }
    case Block::Kind::kConv: {
      TapeScope<T> scope(tape, "substitute");
      return leaky_relu(tape, b.conv.forward(tape, x), static_cast<T>(config_.leaky_slope));
    }
    case Block::Kind::kNone: break;
  }
  return x;
}

nn::Cost Network::block_cost(const Block& b, const Dims4& in, std::string* module) const {
  switch (b.kind) {
    case Block::Kind::kS2Fair: *module = "s2fairconv"; return b.s2fair.cost(in);
    case Block::Kind::kScss: *module = "scss"; return b.scss.cost(in);
    case Block::Kind::kConv: {
      *module = "substitute";
      nn::Cost c = b.conv.cost(in);
      c.flops += in.numel();
      return c;
    }
    case Block::Kind::kNone: break;
  }
  *module = "trunk";
  return {};
}

template <typename T>
Var Network::forward(Tape<T>& tape, Var cube) const {
  const Shape in_shape = tape.value(cube).shape();
  check_input(in_shape);
  const std::size_t B = in_shape[0], H = in_shape[1], W = in_shape[2];
  const T slope = static_cast<T>(config_.leaky_slope);

  Var v;
  {
    TapeScope<T> scope(tape, "stem");
    v = reshape(tape, cube, Shape{B, 1, H, W});
  }
  if (rk4sva_) {
    TapeScope<T> scope(tape, "rk4sva");
    v = rk4sva_->forward(tape, v);
  }
  {
    TapeScope<T> scope(tape, "stem");
    v = reshape(tape, v, Shape{1, B, H, W});
    v = leaky_relu(tape, lift_.forward(tape, v), slope);
  }
  std::vector<Var> skips;
  for (std::size_t s = 0; s < config_.depth; ++s) {
    if (s > 0) {
      TapeScope<T> scope(tape, "trunk");
      v = leaky_relu(tape, down_[s - 1].forward(tape, v), slope);
    }
    v = block(tape, encoder_[s], v);
    skips.push_back(v);
  }
  v = block(tape, bottleneck_, v);

  if (config_.task == Task::kRestoration) {
    for (std::size_t s = config_.depth - 1; s-- > 0;) {
      {
        TapeScope<T> scope(tape, "trunk");
        const Dims4 d = dims4(tape.value(skips[s]).shape());
        v = add(tape, upsample_nearest(tape, v, d.h, d.w), skips[s]);
      }
      v = block(tape, decoder_[s], v);
    }
    TapeScope<T> scope(tape, "head");
    v = reshape(tape, project_.forward(tape, v), Shape{B, H, W});
    return add(tape, v, cube);
  }
  TapeScope<T> scope(tape, "head");
  v = spatial_mean(tape, v);
  v = reshape(tape, v, Shape{config_.channels * B, 1, 1, 1});
  v = classify_.forward(tape, v);
  return reshape(tape, v, Shape{config_.num_classes});
}

template <typename T>
Tensor<T> Network::infer(const ParamStore<T>& store, const Tensor<T>& cube) const {
  Tape<T> tape(&store);
  const Var out = forward(tape, tape.input(cube));
  return tape.value(out);
}

std::size_t Network::param_count() const {
  std::size_t n = lift_.param_count();
  if (rk4sva_) n += rk4sva_->param_count();
  for (const auto& d : down_) n += d.param_count();
  auto count = [](const Block& b) -> std::size_t {
    switch (b.kind) {
      case Block::Kind::kS2Fair: return b.s2fair.param_count();
      case Block::Kind::kScss: return b.scss.param_count();
      case Block::Kind::kConv: return b.conv.param_count();
      case Block::Kind::kNone: break;
    }
    return 0;
  };
  for (const auto& b : encoder_) n += count(b);
  n += count(bottleneck_);
  for (const auto& b : decoder_) n += count(b);
  n += config_.task == Task::kRestoration ? project_.param_count() : classify_.param_count();
  return n;
}

CostReport Network::count_cost(const Shape& cube) const {
  check_input(cube);
  const std::size_t B = cube[0], H = cube[1], W = cube[2];
  CostReport r;
  if (rk4sva_) r.add("rk4sva", rk4sva_->cost(Dims4{B, 1, H, W}));

  Dims4 d;
  nn::Cost stem = lift_.cost(Dims4{1, B, H, W}, &d);
  stem.flops += d.numel();
  r.add("stem", stem);

  std::string module;
  std::vector<Dims4> skips;
  for (std::size_t s = 0; s < config_.depth; ++s) {
    if (s > 0) {
      Dims4 next;
      nn::Cost c = down_[s - 1].cost(d, &next);
      c.flops += next.numel();
      r.add("trunk", c);
      d = next;
    }
    const nn::Cost c = block_cost(encoder_[s], d, &module);
    r.add(module, c);
    skips.push_back(d);
  }
  {
    const nn::Cost c = block_cost(bottleneck_, d, &module);
    r.add(module, c);
  }

  if (config_.task == Task::kRestoration) {
    for (std::size_t s = config_.depth - 1; s-- > 0;) {
      d = skips[s];
      r.add("trunk", {d.numel(), 0});
      const nn::Cost c = block_cost(decoder_[s], d, &module);
      r.add(module, c);
    }
    nn::Cost head = project_.cost(d);
    head.flops += static_cast<std::uint64_t>(B) * H * W;
    r.add("head", head);
  } else {
    nn::Cost head{d.numel(), 0};
    head += classify_.cost(Dims4{config_.channels * B, 1, 1, 1});
    r.add("head", head);
  }
  return r;
}

#define FAIRHYP_INSTANTIATE(T)                                                      \
  template void Network::init<T>(ParamStore<T>&) const;                             \
  template void Network::set_identity<T>(ParamStore<T>&) const;                     \
  template Var Network::forward<T>(Tape<T>&, Var) const;                            \
  template Tensor<T> Network::infer<T>(const ParamStore<T>&, const Tensor<T>&) const; \
  template Var Network::block<T>(Tape<T>&, const Block&, Var) const;

FAIRHYP_INSTANTIATE(float)
FAIRHYP_INSTANTIATE(double)

#undef FAIRHYP_INSTANTIATE

}  // namespace fairhyp
