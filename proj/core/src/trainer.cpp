#include "fairhyp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fairhyp/errors.hpp"
#include "fairhyp/io.hpp"
#include "fairhyp/metrics.hpp"
#include "fairhyp/ops.hpp"
#include "fairhyp/rng.hpp"

namespace fairhyp {

namespace {

template <typename V>
void read_field(const nlohmann::json& j, const char* key, V& out, const char* what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(what) + ": field '" + key + "' has the wrong type");
  }
}

void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw ConfigError(std::string(what) + ": unknown field '" + key + "'");
    }
  }
}

std::string to_string(Schedule::Kind k) {
  switch (k) {
    case Schedule::Kind::kConstant: return "constant";
    case Schedule::Kind::kCosine: return "cosine";
    case Schedule::Kind::kStep: return "step";
  }
  return "cosine";
}

double base_lr(const Schedule& s, double epoch) {
  switch (s.kind) {
    case Schedule::Kind::kConstant: return s.lr0;
    case Schedule::Kind::kStep: return epoch < s.switch_epoch ? s.lr0 : s.lr1;
    case Schedule::Kind::kCosine:
      if (epoch <= 0.0) return s.lr_max;
      if (epoch >= s.period) return s.lr_min;
      return s.lr_min +
             0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(std::numbers::pi * epoch / s.period));
  }
  return s.lr0;
}

}  // namespace

template <typename T>
void AdamW<T>::step(ParamStore<T>& store, double lr) {
  for (const auto& [name, e] : store.entries()) {
    for (std::size_t i = 0; i < e.grad.size(); ++i) {
      if (!std::isfinite(static_cast<double>(e.grad[i]))) {
        throw NumericError("adamw: non-finite gradient in '" + name + "' at element " +
                           std::to_string(i) + "; step aborted");
      }
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (auto& [name, e] : store.entries()) {
    auto& st = state_[name];
    if (st.m.size() != e.value.size()) {
      st.m.assign(e.value.size(), T{0});
      st.v.assign(e.value.size(), T{0});
    }
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = static_cast<double>(e.grad[i]);
      const double m = b1 * static_cast<double>(st.m[i]) + (1.0 - b1) * g;
      const double v = b2 * static_cast<double>(st.v[i]) + (1.0 - b2) * g * g;
      st.m[i] = static_cast<T>(m);
      st.v[i] = static_cast<T>(v);
      const double w = static_cast<double>(e.value[i]) * decay;
      e.value[i] = static_cast<T>(w - lr * (m / c1) / (std::sqrt(v / c2) + config_.eps));
    }
  }
}

void Schedule::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("schedule: ") + name + " must be > 0");
  };
  switch (kind) {
    case Kind::kConstant: positive(lr0, "lr0"); break;
    case Kind::kCosine:
      positive(lr_min, "lr_min");
      positive(period, "period");
      if (!(lr_min < lr_max)) throw ConfigError("schedule: lr_min must be below lr_max");
      break;
    case Kind::kStep:
      positive(lr0, "lr0");
      positive(lr1, "lr1");
      if (!(switch_epoch >= 0.0)) throw ConfigError("schedule: switch_epoch must be >= 0");
      break;
  }
  if (!(warmup_epochs >= 0.0)) throw ConfigError("schedule: warmup_epochs must be >= 0");
  if (warmup_epochs > 0.0) positive(warmup_start, "warmup_start");
}

nlohmann::json Schedule::to_json() const {
  return {{"kind", to_string(kind)},     {"lr_max", lr_max}, {"lr_min", lr_min},
          {"period", period},            {"lr0", lr0},       {"lr1", lr1},
          {"switch_epoch", switch_epoch}, {"warmup_epochs", warmup_epochs},
          {"warmup_start", warmup_start}};
}

Schedule Schedule::from_json(const nlohmann::json& j) {
  Schedule s;
  reject_unknown(j, s.to_json(), "schedule");
  std::string kind = to_string(s.kind);
  read_field(j, "kind", kind, "schedule");
  if (kind == "constant") {
    s.kind = Kind::kConstant;
  } else if (kind == "cosine") {
    s.kind = Kind::kCosine;
  } else if (kind == "step") {
    s.kind = Kind::kStep;
  } else {
    throw ConfigError("schedule: kind must be constant, cosine or step");
  }
  read_field(j, "lr_max", s.lr_max, "schedule");
  read_field(j, "lr_min", s.lr_min, "schedule");
  read_field(j, "period", s.period, "schedule");
  read_field(j, "lr0", s.lr0, "schedule");
  read_field(j, "lr1", s.lr1, "schedule");
  read_field(j, "switch_epoch", s.switch_epoch, "schedule");
  read_field(j, "warmup_epochs", s.warmup_epochs, "schedule");
  read_field(j, "warmup_start", s.warmup_start, "schedule");
  s.validate();
  return s;
}

Schedule Schedule::restoration(double epochs) {
  Schedule s;
  s.kind = Kind::kCosine;
  s.lr_max = 1e-3;
  s.lr_min = 1e-6;
  s.period = epochs;
  s.warmup_epochs = 5;
  s.warmup_start = 1e-4;
  return s;
}

Schedule Schedule::stepped() {
  Schedule s;
  s.kind = Kind::kStep;
  s.lr0 = 1e-4;
  s.lr1 = 1e-5;
  s.switch_epoch = 60;
  return s;
}

double lr_at(const Schedule& s, double epoch) {
  if (s.warmup_epochs > 0.0 && epoch < s.warmup_epochs) {
    const double target = base_lr(s, s.warmup_epochs);
    return s.warmup_start + (target - s.warmup_start) * (epoch / s.warmup_epochs);
  }
  return base_lr(s, epoch);
}

void TrainConfig::validate() const {
  schedule.validate();
  if (batch_size == 0) throw ConfigError("train config: batch_size must be >= 1");
  if (epochs == 0) throw ConfigError("train config: epochs must be >= 1");
  if (schedule.kind == Schedule::Kind::kStep && !(schedule.switch_epoch < double(epochs))) {
    throw ConfigError("train config: switch_epoch must be below epochs");
  }
  if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0 && adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) {
    throw ConfigError("train config: betas must lie in [0, 1)");
  }
  if (!(adamw.eps > 0.0) || !(adamw.weight_decay >= 0.0) || !(grad_clip >= 0.0)) {
    throw ConfigError("train config: eps must be > 0, weight_decay and grad_clip >= 0");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"schema", 1},
          {"optimizer",
           {{"beta1", adamw.beta1},
            {"beta2", adamw.beta2},
            {"eps", adamw.eps},
            {"weight_decay", adamw.weight_decay}}},
          {"schedule", schedule.to_json()},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"max_steps", max_steps},
          {"loss", loss == Loss::kMse ? "mse" : "cross_entropy"},
          {"seed", seed},
          {"grad_clip", grad_clip},
          {"eval_every", eval_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  reject_unknown(j, c.to_json(), "train config");
  int schema = 1;
  read_field(j, "schema", schema, "train config");
  if (schema != 1) throw ConfigError("train config: unsupported schema");
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    reject_unknown(o, c.to_json().at("optimizer"), "train config optimizer");
    read_field(o, "beta1", c.adamw.beta1, "optimizer");
    read_field(o, "beta2", c.adamw.beta2, "optimizer");
    read_field(o, "eps", c.adamw.eps, "optimizer");
    read_field(o, "weight_decay", c.adamw.weight_decay, "optimizer");
  }
  if (j.contains("schedule")) c.schedule = Schedule::from_json(j.at("schedule"));
  read_field(j, "batch_size", c.batch_size, "train config");
  read_field(j, "epochs", c.epochs, "train config");
  read_field(j, "max_steps", c.max_steps, "train config");
  std::string loss = "mse";
  read_field(j, "loss", loss, "train config");
  if (loss == "mse") {
    c.loss = Loss::kMse;
  } else if (loss == "cross_entropy") {
    c.loss = Loss::kCrossEntropy;
  } else {
    throw ConfigError("train config: loss must be mse or cross_entropy");
  }
  read_field(j, "seed", c.seed, "train config");
  read_field(j, "grad_clip", c.grad_clip, "train config");
  read_field(j, "eval_every", c.eval_every, "train config");
  c.validate();
  return c;
}

template <typename T>
DenoisingDataset<T>::DenoisingDataset(std::vector<Tensor<float>> clean, DegradationSpec spec,
                                      bool fixed_noise)
    : clean_(std::move(clean)), spec_(std::move(spec)), fixed_(fixed_noise) {
  if (clean_.empty()) throw ConfigError("denoising dataset: no clean cubes");
  if (spec_.kind == DegradationKind::kDownsample) {
    throw ConfigError("denoising dataset: downsampling changes the shape; use a noise kind");
  }
  spec_.validate();
}

template <typename T>
Sample<T> DenoisingDataset<T>::get(std::size_t index, std::size_t epoch) const {
  DegradationSpec s = spec_;
  s.seed = derive_seed(spec_.seed, index, fixed_ ? 0 : epoch + 1);
  Sample<T> out;
  out.input = degrade(clean_.at(index), s).cube.template cast<T>();
  out.target = clean_[index].template cast<T>();
  return out;
}

template <typename T>
Tensor<T> extract_patch(const Tensor<float>& cube, std::size_t row, std::size_t col,
                        std::size_t patch) {
  if (cube.shape().rank() != 3) throw ConfigError("extract_patch: expected a (B,H,W) cube");
  const std::size_t B = cube.shape()[0], H = cube.shape()[1], W = cube.shape()[2];
  const auto mirror = [](long i, std::size_t n) {
    const long m = static_cast<long>(n);
    while (i < 0 || i >= m) i = i < 0 ? -i - 1 : 2 * m - 1 - i;
    return static_cast<std::size_t>(i);
  };
  const long half = static_cast<long>(patch / 2);
  Tensor<T> out(Shape{B, patch, patch});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < patch; ++i)
      for (std::size_t j = 0; j < patch; ++j) {
        const std::size_t r = mirror(static_cast<long>(row) - half + static_cast<long>(i), H);
        const std::size_t c = mirror(static_cast<long>(col) - half + static_cast<long>(j), W);
        out[(b * patch + i) * patch + j] = static_cast<T>(cube[(b * H + r) * W + c]);
      }
  return out;
}

template <typename T>
PatchDataset<T>::PatchDataset(Tensor<float> cube, std::vector<std::uint32_t> labels,
                              std::size_t patch, std::vector<std::size_t> pixels)
    : cube_(std::move(cube)), labels_(std::move(labels)), patch_(patch), pixels_(std::move(pixels)) {
  if (cube_.shape().rank() != 3) throw ConfigError("patch dataset: expected a (B,H,W) cube");
  const std::size_t P = cube_.shape()[1] * cube_.shape()[2];
  if (labels_.size() != P) throw ConfigError("patch dataset: label map does not match the cube");
  if (patch_ == 0) throw ConfigError("patch dataset: patch size must be >= 1");
  if (pixels_.empty()) {
    pixels_.resize(P);
    std::iota(pixels_.begin(), pixels_.end(), std::size_t{0});
  }
  for (std::size_t p : pixels_) {
    if (p >= P) throw ConfigError("patch dataset: pixel index out of range");
  }
}

template <typename T>
Sample<T> PatchDataset<T>::get(std::size_t index, std::size_t) const {
  const std::size_t W = cube_.shape()[2];
  const std::size_t p = pixels_.at(index);
  Sample<T> s;
  s.input = extract_patch<T>(cube_, p / W, p % W, patch_);
  s.label = labels_[p];
  return s;
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch}, {"lr", lr}, {"loss", loss}, {"steps", steps}, {"metrics", metrics}};
}

template <typename T>
nlohmann::json evaluate(const Network& net, const ParamStore<T>& store, const Dataset<T>& data) {
  if (data.size() == 0) throw ConfigError("evaluate: empty dataset");
  if (net.config().task == Task::kRestoration) {
    double out_total = 0.0, in_total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Sample<T> s = data.get(i, 0);
      const Tensor<T> y = net.infer(store, s.input);
      out_total += psnr(s.target, y, data.peak());
      in_total += psnr(s.target, s.input, data.peak());
    }
    const double n = static_cast<double>(data.size());
    return {{"psnr", out_total / n}, {"input_psnr", in_total / n}};
  }
  ConfusionMatrix cm(net.config().num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample<T> s = data.get(i, 0);
    const Tensor<T> logits = net.infer(store, s.input);
    const auto best = std::max_element(logits.data().begin(), logits.data().end());
    cm.add(s.label, static_cast<std::size_t>(best - logits.data().begin()));
  }
  return classify_scores(cm).to_json();
}

template <typename T>
TrainLog fit(const Network& net, ParamStore<T>& store, const Dataset<T>& train,
             const TrainConfig& config, const Dataset<T>* eval, std::ostream* jsonl,
             const std::filesystem::path& checkpoint) {
  config.validate();
  if (train.size() == 0) throw ConfigError("fit: empty training set");
  const bool classify = net.config().task == Task::kClassification;
  if (classify != (config.loss == Loss::kCrossEntropy)) {
    throw ConfigError("fit: loss '" + std::string(classify ? "mse" : "cross_entropy") +
                      "' does not fit a " + to_string(net.config().task) + " network");
  }
  AdamW<T> opt(config.adamw);
  TrainLog log;
  ParamStore<T> last_good = store;
  const T inv_batch = T{1} / static_cast<T>(config.batch_size);
  std::vector<std::size_t> order(train.size());

  const auto save = [&]() {
    if (!checkpoint.empty()) {
      save_checkpoint(checkpoint, store,
                      {{"network", net.config().to_json()}, {"train", config.to_json()}});
    }
  };
  const auto halt = [&](std::string reason) {
    store = last_good;
    log.halted = true;
    log.halt_reason = std::move(reason);
  };

  for (std::size_t epoch = 0; epoch < config.epochs && !log.halted; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, hash_name("shuffle"), epoch));
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(config.schedule, static_cast<double>(epoch));
    double loss_total = 0.0;
    std::size_t seen = 0;
    bool stop = false;
    for (std::size_t start = 0; start < order.size() && !stop && !log.halted;
         start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      store.zero_grads();
      for (std::size_t i = start; i < end; ++i) {
        const Sample<T> s = train.get(order[i], epoch);
        Tape<T> tape(&store);
        const Var out = net.forward(tape, tape.input(s.input));
        const Var loss = config.loss == Loss::kMse ? mse(tape, out, s.target)
                                                   : softmax_cross_entropy(tape, out, s.label);
        const double value = static_cast<double>(tape.value(loss)[0]);
        if (!std::isfinite(value)) {
          halt("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
               std::to_string(order[i]));
          break;
        }
        loss_total += value;
        ++seen;
        tape.backward(scale(tape, loss, inv_batch));
      }
      if (log.halted) break;
      if (config.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& [name, e] : store.entries())
          for (T g : e.grad.data()) sq += static_cast<double>(g) * static_cast<double>(g);
        const double norm = std::sqrt(sq);
        if (norm > config.grad_clip) {
          const T f = static_cast<T>(config.grad_clip / norm);
          for (auto& [name, e] : store.entries())
            for (T& g : e.grad.data()) g *= f;
        }
      }
      try {
        opt.step(store, rec.lr);
      } catch (const NumericError& e) {
        halt(e.what());
        break;
      }
      ++log.steps;
      if (config.max_steps > 0 && log.steps >= config.max_steps) stop = true;
    }
    if (log.halted) break;
    rec.loss = seen ? loss_total / static_cast<double>(seen) : 0.0;
    rec.steps = log.steps;
    const bool last = stop || epoch + 1 == config.epochs;
    if (eval && (last || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0))) {
      rec.metrics = evaluate(net, store, *eval);
    }
    if (jsonl) *jsonl << rec.to_json().dump() << '\n';
    log.epochs.push_back(std::move(rec));
    last_good = store;
    if (stop) break;
  }
  save();
  return log;
}

nlohmann::json DenoiseTask::to_json() const {
  return {{"cubes", cubes},   {"bands", bands},       {"height", height},
          {"width", width},   {"sigma", sigma},       {"peak", peak},
          {"steps", steps},   {"batch_size", batch_size}, {"seed", seed},
          {"schedule", schedule.to_json()}};
}

DenoiseResult run_denoise_task(const NetworkConfig& network, const DenoiseTask& task,
                               std::ostream* jsonl) {
  if (task.cubes == 0 || task.steps == 0 || task.batch_size == 0) {
    throw ConfigError("denoise task: cubes, steps and batch_size must be >= 1");
  }
  NetworkConfig nc = network;
  nc.task = Task::kRestoration;
  nc.bands = task.bands;
  const Network net(nc);

  std::vector<Tensor<float>> clean;
  for (std::size_t i = 0; i < task.cubes; ++i) {
    SynthOptions so;
    so.kind = SynthKind::kBlobs;
    so.bands = task.bands;
    so.height = task.height;
    so.width = task.width;
    so.seed = derive_seed(task.seed, hash_name("scene"), i);
    so.enforce_limits = false;
    clean.push_back(synth_dataset(so).cube);
  }
  DegradationSpec noise;
  noise.kind = DegradationKind::kGaussian;
  noise.sigma = task.sigma;
  noise.peak = task.peak;
  noise.seed = derive_seed(task.seed, hash_name("train-noise"));
  const DenoisingDataset<float> train(clean, noise, false);
  noise.seed = derive_seed(task.seed, hash_name("eval-noise"));
  const DenoisingDataset<float> eval(clean, noise, true);

  const std::size_t per_epoch = (task.cubes + task.batch_size - 1) / task.batch_size;
  TrainConfig tc;
  tc.batch_size = task.batch_size;
  tc.epochs = (task.steps + per_epoch - 1) / per_epoch;
  tc.max_steps = task.steps;
  tc.seed = task.seed;
  tc.eval_every = 0;
  tc.schedule = task.schedule;
  tc.schedule.period = static_cast<double>(tc.epochs);

  ParamStore<float> store = net.make_params<float>(task.seed);
  DenoiseResult r;
  r.log = fit(net, store, train, tc, &eval, jsonl);
  const nlohmann::json m = r.log.epochs.empty() ? evaluate(net, store, eval)
                                                : r.log.epochs.back().metrics;
  r.noisy_psnr = m.at("input_psnr").get<double>();
  r.final_psnr = m.at("psnr").get<double>();
  return r;
}

double AblationRun::mean_psnr() const {
  if (psnr.empty()) return 0.0;
  return std::accumulate(psnr.begin(), psnr.end(), 0.0) / static_cast<double>(psnr.size());
}

std::size_t AblationReport::full_not_worse() const {
  std::size_t n = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[0].mean_psnr() >= runs[i].mean_psnr()) ++n;
  }
  return n;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : runs) {
    rows.push_back({{"name", r.name},
                    {"network", r.network.to_json()},
                    {"psnr", r.psnr},
                    {"noisy_psnr", r.noisy_psnr},
                    {"halted", r.halted},
                    {"mean_psnr", r.mean_psnr()}});
  }
  return {{"schema", 1},
          {"seeds", seeds},
          {"runs", rows},
          {"full_not_worse", full_not_worse()},
          {"ablations", runs.empty() ? 0 : runs.size() - 1}};
}

AblationReport run_ablation(const NetworkConfig& base, const DenoiseTask& task,
                            const std::vector<std::string>& modules,
                            const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("ablation: need at least one seed");
  AblationReport report;
  report.seeds = seeds;
  AblationRun full;
  full.name = "full";
  full.network = base;
  report.runs.push_back(full);
  for (const auto& m : modules) {
    AblationRun r;
    r.name = "no-" + m;
    r.network = base;
    if (m == "rk4sva") {
      r.network.modules.rk4sva = false;
    } else if (m == "s2fairconv") {
      r.network.modules.s2fairconv = false;
    } else if (m == "scss") {
      r.network.modules.scss = false;
    } else {
      throw ConfigError("ablation: unknown module '" + m + "' (expected rk4sva, s2fairconv, scss)");
    }
    report.runs.push_back(r);
  }
  for (auto& run : report.runs) {
    for (std::uint64_t seed : seeds) {
      DenoiseTask t = task;
      t.seed = seed;
      const DenoiseResult res = run_denoise_task(run.network, t);
      run.psnr.push_back(res.final_psnr);
      run.noisy_psnr.push_back(res.noisy_psnr);
      run.halted.push_back(res.log.halted);
    }
  }
  return report;
}

#define FAIRHYP_INSTANTIATE(T)                                                              \
  template class AdamW<T>;                                                                  \
  template class DenoisingDataset<T>;                                                       \
  template class PatchDataset<T>;                                                           \
  template Tensor<T> extract_patch<T>(const Tensor<float>&, std::size_t, std::size_t,      \
                                      std::size_t);                                         \
  template nlohmann::json evaluate<T>(const Network&, const ParamStore<T>&,                 \
                                      const Dataset<T>&);                                   \
  template TrainLog fit<T>(const Network&, ParamStore<T>&, const Dataset<T>&,               \
                           const TrainConfig&, const Dataset<T>*, std::ostream*,            \
                           const std::filesystem::path&);

FAIRHYP_INSTANTIATE(float)
FAIRHYP_INSTANTIATE(double)

#undef FAIRHYP_INSTANTIATE

}  // namespace fairhyp
