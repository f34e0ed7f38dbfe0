#include "cli.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "fairhyp/degrade.hpp"
#include "fairhyp/errors.hpp"
#include "fairhyp/io.hpp"
#include "fairhyp/metrics.hpp"
#include "fairhyp/pipelines.hpp"
#include "fairhyp/rng.hpp"
#include "fairhyp/spectral.hpp"
#include "fairhyp/synth.hpp"
#include "fairhyp/trainer.hpp"

namespace fairhyp::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::array<std::size_t, 3> parse_dims(const std::string& s) {
  std::array<std::size_t, 3> d{};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t end = i < 2 ? s.find('x', pos) : s.size();
    if (end == std::string::npos) break;
    const std::string part = s.substr(pos, end - pos);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) break;
    d[static_cast<std::size_t>(i)] = std::stoul(part);
    pos = end + 1;
    if (i == 2 && d[0] && d[1] && d[2]) return d;
  }
  throw UsageError("dims '" + s + "' must look like BxHxW with positive integers, e.g. 31x64x64");
}

fs::path manifest_for(const fs::path& primary) {
  fs::path p = primary;
  p.replace_extension();
  p += ".manifest.json";
  return p;
}

fs::path sibling_with_suffix(const fs::path& primary, const std::string& suffix) {
  fs::path p = primary;
  p.replace_extension();
  p += suffix;
  return p;
}

HsiFile load_cube(const std::string& path, const std::string& format) {
  return format == "envi" ? read_envi(path) : read_hsi(path);
}

Tensor<float> label_container(const std::vector<std::uint32_t>& labels, std::size_t h,
                              std::size_t w) {
  Tensor<float> t(Shape{1, h, w});
  for (std::size_t i = 0; i < labels.size(); ++i) t[i] = static_cast<float>(labels[i]);
  return t;
}

std::vector<std::uint32_t> read_labels(const fs::path& path, std::size_t h, std::size_t w) {
  const HsiFile f = read_hsi(path);
  if (f.header.bands != 1 || f.header.height != h || f.header.width != w) {
    throw ConfigError("label map '" + path.string() + "' has dims " +
                      f.header.shape().to_string() + ", expected 1x" + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  std::vector<std::uint32_t> out(f.cube.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float v = f.cube[i];
    if (!(v >= 0.0f) || v != static_cast<float>(static_cast<std::uint32_t>(v))) {
      throw ConfigError("label map '" + path.string() + "' holds a non-integer class at pixel " +
                        std::to_string(i));
    }
    out[i] = static_cast<std::uint32_t>(v);
  }
  return out;
}

RunManifest base_manifest(const std::string& command, const std::vector<std::string>& args) {
  RunManifest m;
  m.command = command;
  m.args = args;
  return m;
}

std::string fmt(double v, int precision) { return format_metric(v, precision); }

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "blobs", dims = "31x64x64", out;
  std::uint64_t seed = 0;
  std::size_t period = 10, classes = 4, materials = 4;
  bool large = false;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto d = parse_dims(a.dims);
  SynthOptions o;
  o.kind = synth_kind_from_string(a.kind);
  o.bands = d[0];
  o.height = d[1];
  o.width = d[2];
  o.seed = a.seed;
  o.period = a.period;
  o.classes = a.classes;
  o.materials = a.materials;
  o.enforce_limits = !a.large;
  const SynthResult r = synth_dataset(o);

  HsiHeader h;
  h.provenance = {{"generator", "synth"},
                  {"kind", a.kind},
                  {"seed", a.seed},
                  {"period", a.period},
                  {"classes", a.classes},
                  {"materials", a.materials}};
  write_hsi(a.out, r.cube, h);
  RunManifest m = base_manifest("synth", args);
  m.seed = a.seed;
  m.data = h.provenance;
  m.artifacts["cube"] = a.out;
  if (!r.labels.empty()) {
    const fs::path labels = sibling_with_suffix(a.out, ".labels.json");
    HsiHeader lh;
    lh.value_max = static_cast<double>(a.classes - 1);
    lh.provenance = h.provenance;
    write_hsi(labels, label_container(r.labels, o.height, o.width), lh);
    m.artifacts["labels"] = labels.string();
  }
  write_json(manifest_for(a.out), m.to_json());
  out << "wrote " << a.out << " (" << r.cube.shape().to_string() << ", " << a.kind << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct DegradeArgs {
  std::string spec, input, output, format = "hsi", kind;
  double sigma = 30.0, peak = 1.0;
  std::uint64_t seed = 0;
  std::size_t scale = 4;
  bool clip = false, contiguous = false;
};

int cmd_degrade(const DegradeArgs& a, const CLI::App& sub, const std::vector<std::string>& args,
                std::ostream& out) {
  DegradationSpec spec;
  if (!a.spec.empty()) spec = DegradationSpec::from_json(read_json(a.spec));
  if (sub.count("--kind")) spec.kind = degradation_kind_from_string(a.kind);
  if (sub.count("--sigma")) spec.sigma = a.sigma;
  if (sub.count("--peak")) spec.peak = a.peak;
  if (sub.count("--seed")) spec.seed = a.seed;
  if (sub.count("--scale")) spec.scale = a.scale;
  if (sub.count("--clip")) spec.clip = a.clip;
  if (sub.count("--contiguous-rows")) spec.contiguous_rows = a.contiguous;
  if (a.spec.empty() && !sub.count("--kind")) {
    throw UsageError("degrade needs --spec FILE or --kind");
  }
  spec.validate();

  const HsiFile in = load_cube(a.input, a.format);
  const Degraded d = degrade(in.cube, spec);
  HsiHeader h;
  h.value_min = 0.0;
  h.value_max = spec.peak;
  h.wavelengths = in.header.wavelengths;
  h.provenance = {{"command", "degrade"}, {"source", a.input}, {"degradation", spec.to_json()}};
  write_hsi(a.output, d.cube, h);

  RunManifest m = base_manifest("degrade", args);
  m.seed = spec.seed;
  m.degradation = spec.to_json();
  m.data = {{"input", a.input}, {"format", a.format}};
  m.artifacts["output"] = a.output;
  if (d.mask) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t b = 0; b < d.mask->bands; ++b) {
      std::vector<std::size_t> r;
      for (std::size_t i = 0; i < d.mask->rows; ++i) {
        if (d.mask->at(b, i)) r.push_back(i);
      }
      if (!r.empty()) rows.push_back({{"band", b}, {"rows", r}});
    }
    const fs::path mask = sibling_with_suffix(a.output, ".mask.json");
    write_json(mask, {{"schema", 1},
                      {"bands", d.mask->bands},
                      {"rows", d.mask->rows},
                      {"masked_bands", d.mask->masked_bands()},
                      {"masked", rows}});
    m.artifacts["mask"] = mask.string();
  }
  write_json(manifest_for(a.output), m.to_json());
  out << "wrote " << a.output << " (" << to_string(spec.kind) << ", " << d.cube.shape().to_string()
      << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ref, test, truth, pred, report, format = "hsi";
  double peak = 1.0;
  std::size_t window = 11, classes = 0;
  bool uniform = false;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  nlohmann::json report;
  RunManifest m = base_manifest("eval", args);
  if (!a.ref.empty() || !a.test.empty()) {
    if (a.ref.empty() || a.test.empty()) throw UsageError("eval needs both --ref and --test");
    const HsiFile ref = load_cube(a.ref, a.format);
    const HsiFile test = load_cube(a.test, a.format);
    if (!(ref.cube.shape() == test.cube.shape())) {
      throw ConfigError("shape conflict: --ref is " + ref.cube.shape().to_string() +
                        " but --test is " + test.cube.shape().to_string());
    }
    SsimOptions so;
    so.window = std::min({a.window, ref.header.height, ref.header.width});
    so.kind = a.uniform ? SsimWindow::kUniform : SsimWindow::kGaussian;
    const RestorationScores s = evaluate_restoration(ref.cube, test.cube, a.peak, so);
    out << format_restoration_table({fs::path(a.test).filename().string()}, {s});
    out << "(SAM in radians x100, MAE x1000, peak " << fmt(a.peak, 1) << ", SSIM window "
        << so.window << (a.uniform ? " uniform" : " gaussian") << ")\n";
    if (s.sam.skipped) out << "SAM skipped " << s.sam.skipped << " zero-norm pixels\n";
    report = s.to_json();
    report["ssim_window"] = so.window;
    m.data = {{"ref", a.ref}, {"test", a.test}, {"format", a.format}};
  } else if (!a.truth.empty() || !a.pred.empty()) {
    if (a.truth.empty() || a.pred.empty()) throw UsageError("eval needs both --truth and --pred");
    const HsiFile t = read_hsi(a.truth);
    const auto truth = read_labels(a.truth, t.header.height, t.header.width);
    const auto pred = read_labels(a.pred, t.header.height, t.header.width);
    std::size_t classes = a.classes;
    if (classes == 0) {
      classes = 1 + std::max(*std::max_element(truth.begin(), truth.end()),
                             *std::max_element(pred.begin(), pred.end()));
    }
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], pred[i]);
    const ClassScores s = classify_scores(cm);
    out << std::left << std::setw(8) << "OA" << std::setw(8) << "AA" << "kappa\n"
        << std::setw(8) << fmt(s.oa, 4) << std::setw(8) << fmt(s.aa, 4) << fmt(s.kappa, 4) << "\n";
    report = s.to_json();
    m.data = {{"truth", a.truth}, {"pred", a.pred}};
  } else {
    throw UsageError("eval needs --ref/--test (restoration) or --truth/--pred (classification)");
  }
  if (!a.report.empty()) {
    report["schema"] = 1;
    write_json(a.report, report);
    m.artifacts["report"] = a.report;
    write_json(manifest_for(a.report), m.to_json());
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SpectraArgs {
  std::string cube, out_dir, format = "hsi";
  std::size_t k = 3;
};

int cmd_spectra(const SpectraArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const HsiFile f = load_cube(a.cube, a.format);
  const BandCorrelation corr = band_correlation(f.cube);
  const TopKProfile prof = topk_distance(corr, a.k);
  fs::path dir = a.out_dir;
  if (dir.empty()) dir = sibling_with_suffix(a.cube, "_spectra");
  fs::create_directories(dir);

  write_json(dir / "correlation.json", corr.to_json());
  write_json(dir / "profile.json", prof.to_json());
  std::vector<double> absolute(corr.values.size());
  std::transform(corr.values.begin(), corr.values.end(), absolute.begin(),
                 [](double v) { return std::abs(v); });
  write_png(dir / "correlation.png", corr.bands, corr.bands, 3, diverging_rgb(corr.values, -1, 1));
  write_png(dir / "abs_correlation.png", corr.bands, corr.bands, 1, grayscale(absolute, 0, 1));
  // One column per band, 8 rows, brightness = normalized distance on [0, 8].
  std::vector<double> strip;
  for (int r = 0; r < 8; ++r) strip.insert(strip.end(), prof.normalized.begin(), prof.normalized.end());
  write_png(dir / "profile.png", corr.bands, 8, 1, grayscale(strip, 0, 8));

  out << "k = " << a.k << ", adjacency baseline = " << fmt(prof.baseline, 4) << "\n";
  out << std::left << std::setw(6) << "band" << std::setw(10) << "distance" << std::setw(12)
      << "normalized" << "adequacy\n";
  for (std::size_t b = 0; b < corr.bands; ++b) {
    out << std::left << std::setw(6) << b << std::setw(10) << fmt(prof.distance[b], 3)
        << std::setw(12) << fmt(prof.normalized[b], 3) << to_string(prof.adequacy[b]) << "\n";
  }
  if (!corr.constant_bands.empty()) {
    out << "constant bands (correlations set to 0):";
    for (auto b : corr.constant_bands) out << ' ' << b;
    out << "\n";
  }
  RunManifest m = base_manifest("analyze-spectra", args);
  m.data = {{"cube", a.cube}, {"format", a.format}, {"k", a.k}};
  for (const char* name : {"correlation.json", "profile.json", "correlation.png",
                           "abs_correlation.png", "profile.png"}) {
    m.artifacts[name] = (dir / name).string();
  }
  write_json(dir / "manifest.json", m.to_json());
  return 0;
}

// ---------------------------------------------------------------------------

struct CostArgs {
  std::string config, input = "31x128x128", report;
};

NetworkConfig load_network(const std::string& path) {
  return path.empty() ? NetworkConfig{} : NetworkConfig::from_json(read_json(path));
}

int cmd_cost(const CostArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  NetworkConfig nc = load_network(a.config);
  const auto d = parse_dims(a.input);
  if (a.config.empty()) nc.bands = d[0];
  const Network net(nc);
  const CostReport r = net.count_cost(Shape{d[0], d[1], d[2]});
  out << std::left << std::setw(12) << "module" << std::right << std::setw(18) << "FLOPs"
      << std::setw(12) << "params\n";
  for (const auto& [name, c] : r.modules) {
    out << std::left << std::setw(12) << name << std::right << std::setw(18) << c.flops
        << std::setw(11) << c.params << "\n";
  }
  out << std::left << std::setw(12) << "total" << std::right << std::setw(18) << r.flops
      << std::setw(11) << r.params << "\n";
  out << "total: " << fmt(static_cast<double>(r.flops) / 1e9, 3) << " GFLOPs, "
      << fmt(static_cast<double>(r.params) / 1e6, 4) << " M params for input " << a.input << "\n";
  if (nc.task == Task::kRestoration) {
    out << "reference figure: 37.41 GFLOPs, 0.64 M params (context only; width and depth "
           "behind it are unknown, parity is not expected)\n";
  }
  if (!a.report.empty()) {
    nlohmann::json j = r.to_json();
    j["schema"] = 1;
    j["input"] = {d[0], d[1], d[2]};
    j["network"] = nc.to_json();
    j["reference"] = {{"gflops", 37.41}, {"mparams", 0.64}};
    write_json(a.report, j);
    RunManifest m = base_manifest("count-cost", args);
    m.network = nc.to_json();
    m.data = {{"input", a.input}};
    m.artifacts["report"] = a.report;
    write_json(manifest_for(a.report), m.to_json());
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::vector<std::string> toggles{"rk4sva", "s2fairconv", "scss"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t steps = 300, cubes = 8;
  std::string dims = "16x32x32", mode = "substitute", config, report;
};

int cmd_ablate(const AblateArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  NetworkConfig nc = load_network(a.config);
  nc.ablation = a.mode == "delete" ? AblationMode::kDelete : AblationMode::kSubstitute;
  const auto d = parse_dims(a.dims);
  DenoiseTask task;
  task.bands = d[0];
  task.height = d[1];
  task.width = d[2];
  task.steps = a.steps;
  task.cubes = a.cubes;
  const AblationReport r = run_ablation(nc, task, a.toggles, a.seeds);

  out << std::left << std::setw(16) << "config";
  for (auto s : a.seeds) out << std::right << std::setw(10) << ("seed " + std::to_string(s));
  out << std::setw(10) << "mean" << "\n";
  for (const auto& run : r.runs) {
    out << std::left << std::setw(16) << run.name;
    for (double p : run.psnr) out << std::right << std::setw(10) << fmt(p, 2);
    out << std::setw(10) << fmt(run.mean_psnr(), 2) << "\n";
  }
  out << "noisy input PSNR " << fmt(r.runs[0].noisy_psnr[0], 2) << " dB; full configuration >= "
      << r.full_not_worse() << " of " << r.runs.size() - 1 << " ablations (mean over seeds)\n";
  if (!a.report.empty()) {
    nlohmann::json j = r.to_json();
    j["task"] = task.to_json();
    j["mode"] = a.mode;
    write_json(a.report, j);
    RunManifest m = base_manifest("ablate", args);
    m.network = nc.to_json();
    m.data = task.to_json();
    m.artifacts["report"] = a.report;
    write_json(manifest_for(a.report), m.to_json());
  }
  return 0;
}

// ---------------------------------------------------------------------------

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return fs::absolute(path.is_absolute() ? path : base / path).lexically_normal();
}

int cmd_train(const std::string& manifest_path, const std::string& out_override,
              const std::vector<std::string>& args, std::ostream& out) {
  const fs::path mpath = fs::absolute(manifest_path);
  const fs::path base = mpath.parent_path();
  RunManifest m = RunManifest::from_json(read_json(mpath));
  const std::string task = m.task.empty() ? "restoration" : m.task;
  if (task != "restoration" && task != "classification") {
    throw ConfigError("manifest '" + manifest_path + "': task must be restoration or classification");
  }
  const bool classify = task == "classification";

  NetworkConfig nc = m.network.is_null() ? NetworkConfig{} : NetworkConfig::from_json(m.network);
  nc.task = classify ? Task::kClassification : Task::kRestoration;
  nlohmann::json train_json = m.train.is_null() ? nlohmann::json::object() : m.train;
  if (!train_json.contains("loss")) train_json["loss"] = classify ? "cross_entropy" : "mse";
  TrainConfig tc = TrainConfig::from_json(train_json);
  tc.seed = m.seed;
  const nlohmann::json data = m.data.is_null() ? nlohmann::json::object() : m.data;
  nlohmann::json resolved_data = data;

  fs::path outdir = !out_override.empty() ? fs::absolute(out_override)
                    : !m.output_dir.empty() ? resolve(base, m.output_dir)
                                            : base / (mpath.stem().string() + "_out");
  fs::create_directories(outdir);

  std::unique_ptr<Dataset<float>> train, eval;
  DegradationSpec ds;
  std::size_t bands = 0;
  if (!classify) {
    if (!m.degradation.is_null()) ds = DegradationSpec::from_json(m.degradation);
    std::vector<Tensor<float>> clean;
    if (data.contains("clean")) {
      nlohmann::json paths = nlohmann::json::array();
      for (const auto& p : data.at("clean")) {
        const fs::path path = resolve(base, p.get<std::string>());
        clean.push_back(read_hsi(path).cube);
        paths.push_back(path.string());
      }
      resolved_data["clean"] = paths;
    } else if (data.contains("synth")) {
      const auto& s = data.at("synth");
      const auto d = s.value("dims", std::vector<std::size_t>{16, 32, 32});
      if (d.size() != 3) throw ConfigError("manifest data.synth.dims must be [B, H, W]");
      for (std::size_t i = 0; i < s.value("count", std::size_t{8}); ++i) {
        SynthOptions so;
        so.kind = synth_kind_from_string(s.value("kind", std::string("blobs")));
        so.bands = d[0];
        so.height = d[1];
        so.width = d[2];
        so.seed = derive_seed(m.seed, hash_name("scene"), i);
        clean.push_back(synth_dataset(so).cube);
      }
    } else {
      throw ConfigError("manifest data needs \"clean\": [cube paths] or \"synth\": {...}");
    }
    if (clean.empty()) throw ConfigError("manifest data lists no clean cubes");
    for (const auto& c : clean) {
      if (!(c.shape() == clean[0].shape())) {
        throw ConfigError("clean cubes differ in shape: " + c.shape().to_string() + " vs " +
                          clean[0].shape().to_string());
      }
    }
    bands = clean[0].shape()[0];
    DegradationSpec eval_spec = ds;
    eval_spec.seed = derive_seed(ds.seed, hash_name("eval-noise"));
    train = std::make_unique<DenoisingDataset<float>>(clean, ds, false);
    eval = std::make_unique<DenoisingDataset<float>>(clean, eval_spec, true);
  } else {
    Tensor<float> cube;
    std::vector<std::uint32_t> labels;
    if (data.contains("cube")) {
      const fs::path cp = resolve(base, data.at("cube").get<std::string>());
      cube = read_hsi(cp).cube;
      if (!data.contains("labels")) throw ConfigError("manifest data needs \"labels\" with \"cube\"");
      const fs::path lp = resolve(base, data.at("labels").get<std::string>());
      labels = read_labels(lp, cube.shape()[1], cube.shape()[2]);
      resolved_data["cube"] = cp.string();
      resolved_data["labels"] = lp.string();
    } else if (data.contains("synth")) {
      const auto& s = data.at("synth");
      const auto d = s.value("dims", std::vector<std::size_t>{16, 32, 32});
      if (d.size() != 3) throw ConfigError("manifest data.synth.dims must be [B, H, W]");
      SynthOptions so;
      so.kind = SynthKind::kLabeledRegions;
      so.bands = d[0];
      so.height = d[1];
      so.width = d[2];
      so.classes = s.value("classes", std::size_t{4});
      so.seed = m.seed;
      SynthResult r = synth_dataset(so);
      cube = std::move(r.cube);
      labels = std::move(r.labels);
    } else {
      throw ConfigError("manifest data needs \"cube\" + \"labels\" or \"synth\": {...}");
    }
    bands = cube.shape()[0];
    const std::uint32_t top = *std::max_element(labels.begin(), labels.end());
    if (!m.network.is_object() || !m.network.contains("num_classes")) nc.num_classes = top + 1;
    if (top >= nc.num_classes) {
      throw ConfigError("label " + std::to_string(top) + " exceeds num_classes " +
                        std::to_string(nc.num_classes));
    }
    std::vector<std::size_t> pixels(labels.size());
    std::iota(pixels.begin(), pixels.end(), std::size_t{0});
    Rng rng(derive_seed(m.seed, hash_name("split")));
    std::shuffle(pixels.begin(), pixels.end(), rng);
    const double frac = data.value("train_fraction", 0.5);
    if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
    auto cut = static_cast<std::size_t>(frac * static_cast<double>(pixels.size()));
    cut = std::clamp<std::size_t>(cut, 1, pixels.size() - 1);
    std::vector<std::size_t> tr(pixels.begin(), pixels.begin() + static_cast<long>(cut));
    std::vector<std::size_t> ev(pixels.begin() + static_cast<long>(cut), pixels.end());
    const std::size_t cap = data.value("max_samples", std::size_t{0});
    if (cap) {
      tr.resize(std::min(tr.size(), cap));
      ev.resize(std::min(ev.size(), cap));
    }
    train = std::make_unique<PatchDataset<float>>(cube, labels, nc.patch_size, tr);
    eval = std::make_unique<PatchDataset<float>>(cube, labels, nc.patch_size, ev);
  }
  if (m.network.is_object() && m.network.contains("bands") && nc.bands != bands) {
    throw ConfigError("network bands " + std::to_string(nc.bands) + " do not match data bands " +
                      std::to_string(bands));
  }
  nc.bands = bands;
  const Network net(nc);
  ParamStore<float> store = net.make_params<float>(m.seed);

  const fs::path log_path = outdir / "log.jsonl";
  const fs::path ckpt = outdir / "checkpoint.json";
  std::ostringstream log_text;
  const TrainLog log = fit(net, store, *train, tc, eval.get(), &log_text, ckpt);
  write_file_atomic(log_path, log_text.str());
  nlohmann::json metrics = evaluate(net, store, *eval);
  metrics["schema"] = 1;
  metrics["steps"] = log.steps;
  metrics["halted"] = log.halted;
  if (log.halted) metrics["halt_reason"] = log.halt_reason;
  write_json(outdir / "metrics.json", metrics);

  RunManifest r = base_manifest("train", args);
  r.seed = m.seed;
  r.task = task;
  r.network = nc.to_json();
  r.degradation = classify ? nlohmann::json() : ds.to_json();
  r.train = tc.to_json();
  r.data = resolved_data;
  r.output_dir = outdir.string();
  r.artifacts = {{"log", log_path.string()},
                 {"checkpoint", ckpt.string()},
                 {"metrics", (outdir / "metrics.json").string()}};
  write_json(outdir / "manifest.json", r.to_json());

  for (const auto& e : log.epochs) out << e.to_json().dump() << "\n";
  if (log.halted) out << "halted: " << log.halt_reason << " (kept the last good parameters)\n";
  out << "final metrics: " << metrics.dump() << "\n";
  return log.halted ? 1 : 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"fairhyp: hyperspectral restoration and classification toolkit", "fairhyp"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolkitVersion));
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cube");
  synth->add_option("--kind", sa.kind, "Cube kind")
      ->check(CLI::IsMember({"gradient", "blobs", "periodic-spectra", "labeled-regions"}))
      ->capture_default_str();
  synth->add_option("--dims", sa.dims, "BxHxW")->capture_default_str();
  synth->add_option("--seed", sa.seed)->capture_default_str();
  synth->add_option("--period", sa.period, "periodic-spectra period")->capture_default_str();
  synth->add_option("--classes", sa.classes, "labeled-regions classes")->capture_default_str();
  synth->add_option("--materials", sa.materials, "blobs materials")->capture_default_str();
  synth->add_flag("--large", sa.large, "Allow cubes beyond 64x128x128");
  synth->add_option("output", sa.out, "Output header (.json)")->required();

  DegradeArgs da;
  auto* deg = app.add_subcommand("degrade", "Apply a degradation to a cube");
  deg->add_option("--spec", da.spec, "Degradation spec JSON")->check(CLI::ExistingFile);
  deg->add_option("--kind", da.kind, "Inline kind (overrides the spec)")
      ->check(CLI::IsMember(
          {"gaussian", "blind_gaussian", "deadline", "downsample", "realistic_mix"}));
  deg->add_option("--sigma", da.sigma, "Noise sigma in 8-bit units");
  deg->add_option("--peak", da.peak, "Value range peak (1 or 255)");
  deg->add_option("--seed", da.seed);
  deg->add_option("--scale", da.scale, "Downsample factor (4 or 8)");
  deg->add_flag("--clip", da.clip, "Clamp to [0, peak]");
  deg->add_flag("--contiguous-rows", da.contiguous, "Deadline rows as one block");
  deg->add_option("--format", da.format, "Input format")
      ->check(CLI::IsMember({"hsi", "envi"}))
      ->capture_default_str();
  deg->add_option("input", da.input, "Input cube")->required();
  deg->add_option("output", da.output, "Output header (.json)")->required();

  std::string train_manifest, train_out;
  auto* train = app.add_subcommand("train", "Train a network from a run manifest");
  train->add_option("--manifest", train_manifest, "Run manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--output-dir", train_out, "Override the manifest's output directory");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score a restored cube or a label map");
  ev->add_option("--ref", ea.ref, "Reference cube");
  ev->add_option("--test", ea.test, "Cube under test");
  ev->add_option("--truth", ea.truth, "Ground-truth label map");
  ev->add_option("--pred", ea.pred, "Predicted label map");
  ev->add_option("--classes", ea.classes, "Class count (default: from labels)");
  ev->add_option("--peak", ea.peak, "PSNR/SSIM peak")->capture_default_str();
  ev->add_option("--window", ea.window, "SSIM window size")->capture_default_str();
  ev->add_flag("--uniform-window", ea.uniform, "Uniform instead of Gaussian SSIM window");
  ev->add_option("--report", ea.report, "Write the scores as JSON");
  ev->add_option("--format", ea.format)->check(CLI::IsMember({"hsi", "envi"}))->capture_default_str();

  SpectraArgs pa;
  auto* spec = app.add_subcommand("analyze-spectra", "Band correlation and top-k distance profile");
  spec->add_option("--k", pa.k, "Partners per band")->capture_default_str();
  spec->add_option("--out", pa.out_dir, "Output directory (default <cube>_spectra)");
  spec->add_option("--format", pa.format)->check(CLI::IsMember({"hsi", "envi"}))->capture_default_str();
  spec->add_option("cube", pa.cube, "Input cube")->required();

  CostArgs ca;
  auto* cost = app.add_subcommand("count-cost", "Analytic FLOP and parameter count");
  cost->add_option("--config", ca.config, "Network config JSON (default config if omitted)")
      ->check(CLI::ExistingFile);
  cost->add_option("--input", ca.input, "Input BxHxW (or BxPxP patch)")->capture_default_str();
  cost->add_option("--report", ca.report, "Write the report as JSON");

  AblateArgs aa;
  auto* abl = app.add_subcommand("ablate", "Module ablation grid on the synthetic denoising task");
  abl->add_option("--toggles", aa.toggles, "Modules to disable one at a time")
      ->delimiter(',')
      ->check(CLI::IsMember({"rk4sva", "s2fairconv", "scss"}))
      ->capture_default_str();
  abl->add_option("--seeds", aa.seeds, "Seeds")->delimiter(',')->capture_default_str();
  abl->add_option("--steps", aa.steps, "Optimizer steps per run")->capture_default_str();
  abl->add_option("--cubes", aa.cubes, "Training cubes")->capture_default_str();
  abl->add_option("--dims", aa.dims, "Cube BxHxW")->capture_default_str();
  abl->add_option("--mode", aa.mode, "Disabled modules: substitute or delete")
      ->check(CLI::IsMember({"substitute", "delete"}))
      ->capture_default_str();
  abl->add_option("--config", aa.config, "Base network config JSON")->check(CLI::ExistingFile);
  abl->add_option("--report", aa.report, "Write the grid as JSON");

  if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
    const auto subs = app.get_subcommands([](CLI::App*) { return true; });
    const bool known = std::any_of(subs.begin(), subs.end(),
                                   [&](const CLI::App* s) { return s->get_name() == args[0]; });
    if (!known) {
      err << "error: unknown subcommand '" << args[0] << "'\n\n" << app.help();
      return 2;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*synth) return cmd_synth(sa, args, out);
    if (*deg) return cmd_degrade(da, *deg, args, out);
    if (*train) return cmd_train(train_manifest, train_out, args, out);
    if (*ev) return cmd_eval(ea, args, out);
    if (*spec) return cmd_spectra(pa, args, out);
    if (*cost) return cmd_cost(ca, args, out);
    if (*abl) return cmd_ablate(aa, args, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace fairhyp::cli
