#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairhyp/degrade.hpp"
#include "fairhyp/pipelines.hpp"
#include "fairhyp/synth.hpp"

namespace fairhyp {

struct AdamWConfig {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight decay Adam:
///   w <- w (1 - lr wd);  m, v <- moment updates;  w <- w - lr m_hat / (sqrt(v_hat) + eps)
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// Throws NumericError naming the parameter if any gradient is non-finite;
  /// nothing is updated in that case.
  void step(ParamStore<T>& store, double lr);
  std::size_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }

 private:
  struct Moments {
    std::vector<T> m, v;
  };
  AdamWConfig config_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

struct Schedule {
  enum class Kind { kConstant, kCosine, kStep };
  Kind kind = Kind::kCosine;
  // cosine: lr_max at epoch 0 down to lr_min at epoch `period`
  double lr_max = 1e-3, lr_min = 1e-6, period = 100;
  // step: lr0 before switch_epoch, lr1 from it on (constant uses lr0)
  double lr0 = 1e-4, lr1 = 1e-5, switch_epoch = 60;
  // Linear ramp from warmup_start into the schedule over the first epochs.
  double warmup_epochs = 0, warmup_start = 1e-4;

  void validate() const;
  nlohmann::json to_json() const;
  static Schedule from_json(const nlohmann::json& j);

  /// Cosine 1e-3 -> 1e-6 over `epochs`, entered by a 5-epoch ramp from 1e-4.
  static Schedule restoration(double epochs);
  /// 1e-4, dropping to 1e-5 at epoch 60.
  static Schedule stepped();
};

double lr_at(const Schedule& schedule, double epoch);

enum class Loss { kMse, kCrossEntropy };

struct TrainConfig {
  AdamWConfig adamw;
  Schedule schedule;
  std::size_t batch_size = 4;
  std::size_t epochs = 100;
  /// Stop after this many optimizer steps (0: run every epoch).
  std::size_t max_steps = 0;
  Loss loss = Loss::kMse;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
  /// Evaluate every n epochs (and always after the last); 0: only at the end.
  std::size_t eval_every = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

template <typename T>
struct Sample {
  Tensor<T> input;
  Tensor<T> target;
  std::size_t label = 0;
};

template <typename T>
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  /// Sample `index` as seen in `epoch`; deterministic in both.
  virtual Sample<T> get(std::size_t index, std::size_t epoch) const = 0;
  virtual double peak() const { return 1.0; }
};

/// Clean cubes with noise drawn per (index, epoch), or fixed per index when
/// `fixed_noise` is set (evaluation).
template <typename T>
class DenoisingDataset : public Dataset<T> {
 public:
  DenoisingDataset(std::vector<Tensor<float>> clean, DegradationSpec spec, bool fixed_noise);
  std::size_t size() const override { return clean_.size(); }
  Sample<T> get(std::size_t index, std::size_t epoch) const override;
  double peak() const override { return spec_.peak; }

 private:
  std::vector<Tensor<float>> clean_;
  DegradationSpec spec_;
  bool fixed_;
};

/// Square patches centred on labeled pixels, mirrored at the borders.
template <typename T>
class PatchDataset : public Dataset<T> {
 public:
  PatchDataset(Tensor<float> cube, std::vector<std::uint32_t> labels, std::size_t patch,
               std::vector<std::size_t> pixels);
  std::size_t size() const override { return pixels_.size(); }
  Sample<T> get(std::size_t index, std::size_t epoch) const override;

 private:
  Tensor<float> cube_;
  std::vector<std::uint32_t> labels_;
  std::size_t patch_;
  std::vector<std::size_t> pixels_;
};

/// Extracts a (B, patch, patch) window centred on (row, col), mirroring
/// indices that fall outside the image.
template <typename T>
Tensor<T> extract_patch(const Tensor<float>& cube, std::size_t row, std::size_t col,
                        std::size_t patch);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::size_t steps = 0;
  nlohmann::json metrics = nlohmann::json::object();

  nlohmann::json to_json() const;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t steps = 0;
  bool halted = false;
  std::string halt_reason;
};

/// Restoration: mean PSNR of outputs and of inputs against targets.
/// Classification: OA, AA and kappa.
template <typename T>
nlohmann::json evaluate(const Network& net, const ParamStore<T>& store, const Dataset<T>& data);

/// Minibatch AdamW training. Each sample runs on its own tape; gradients of
/// the batch-mean loss accumulate in the store. One JSON line per epoch goes
/// to `jsonl` when given. On a non-finite loss or gradient the parameters are
/// restored to the last completed epoch and training stops. The final
/// parameters are written to `checkpoint` when it is non-empty.
template <typename T>
TrainLog fit(const Network& net, ParamStore<T>& store, const Dataset<T>& train,
             const TrainConfig& config, const Dataset<T>* eval = nullptr,
             std::ostream* jsonl = nullptr, const std::filesystem::path& checkpoint = {});

/// Small synthetic denoising benchmark used by the acceptance suite and the
/// ablation command: `cubes` blob cubes, Gaussian noise redrawn every epoch
/// for training, evaluation on the same scenes under held-out noise.
struct DenoiseTask {
  std::size_t cubes = 8;
  std::size_t bands = 16, height = 32, width = 32;
  double sigma = 30.0;
  double peak = 1.0;
  std::size_t steps = 300;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  /// `period` is replaced by the number of epochs the task runs.
  Schedule schedule = Schedule::restoration(1);

  nlohmann::json to_json() const;
};

struct DenoiseResult {
  double noisy_psnr = 0.0;
  double final_psnr = 0.0;
  TrainLog log;
};

DenoiseResult run_denoise_task(const NetworkConfig& network, const DenoiseTask& task,
                               std::ostream* jsonl = nullptr);

/// One configuration of an ablation grid: final and input PSNR per seed.
struct AblationRun {
  std::string name;  // "full" or "no-<module>"
  NetworkConfig network;
  std::vector<double> psnr, noisy_psnr;
  std::vector<bool> halted;

  double mean_psnr() const;
};

struct AblationReport {
  std::vector<std::uint64_t> seeds;
  /// runs[0] is the full configuration, then one run per disabled module.
  std::vector<AblationRun> runs;

  /// Ablations whose mean PSNR does not exceed the full configuration's.
  std::size_t full_not_worse() const;
  nlohmann::json to_json() const;
};

/// Trains `base` and each single-module-disabled variant on `task` for every
/// seed. Module names: rk4sva, s2fairconv, scss.
AblationReport run_ablation(const NetworkConfig& base, const DenoiseTask& task,
                            const std::vector<std::string>& modules,
                            const std::vector<std::uint64_t>& seeds);

}  // namespace fairhyp
