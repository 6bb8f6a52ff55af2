#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "smokenet/bench.hpp"
#include "smokenet/dataset.hpp"
#include "smokenet/errors.hpp"
#include "smokenet/image.hpp"
#include "smokenet/metrics.hpp"
#include "smokenet/model.hpp"

namespace smokenet::cli {
namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError(path.string() + ": cannot open for writing");
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw DataError(path.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

std::vector<double> parse_numbers(const std::string& text, std::size_t expected,
                                  const char* flag) {
  std::vector<double> values;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    const std::string_view part =
        std::string_view(text).substr(start, comma == std::string::npos
                                                 ? std::string::npos
                                                 : comma - start);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size()) {
      throw ValidationError(std::string(flag) + ": \"" + text +
                            "\" is not a comma-separated number list");
    }
    values.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (values.size() != expected) {
    throw ValidationError(std::string(flag) + ": expected " +
                          std::to_string(expected) + " values, got " +
                          std::to_string(values.size()));
  }
  return values;
}

std::size_t as_count(double v, const char* flag) {
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw ValidationError(std::string(flag) + ": counts must be non-negative integers");
  }
  return static_cast<std::size_t>(v);
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

// Model configuration from JSON: an object of ModelConfig fields, optionally
// starting from {"preset": "compact"}.
ModelConfig parse_model_config(const fs::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
  if (!j.is_object()) throw DataError(path.string() + ": expected a JSON object");

  ModelConfig cfg;
  try {
    if (j.contains("preset")) {
      const std::string preset = j.at("preset").get<std::string>();
      if (preset == "compact") {
        cfg = ModelConfig::compact(j.value("input_size", 64u));
      } else if (preset != "default") {
        throw ValidationError(path.string() + ": unknown preset \"" + preset + "\"");
      }
    }
    for (const auto& [key, value] : j.items()) {
      if (key == "preset") continue;
      if (key == "input_size") cfg.input_size = value.get<std::uint32_t>();
      else if (key == "input_channels") cfg.input_channels = value.get<std::uint32_t>();
      else if (key == "backbone_channels") cfg.backbone_channels = value.get<decltype(cfg.backbone_channels)>();
      else if (key == "neck_channels") cfg.neck_channels = value.get<decltype(cfg.neck_channels)>();
      else if (key == "hidden_dim") cfg.hidden_dim = value.get<std::uint32_t>();
      else if (key == "num_classes") cfg.num_classes = value.get<std::uint32_t>();
      else if (key == "kernel") cfg.kernel = value.get<std::uint32_t>();
      else if (key == "stride_backbone") cfg.stride_backbone = value.get<std::uint32_t>();
      else if (key == "stride_neck") cfg.stride_neck = value.get<std::uint32_t>();
      else throw ValidationError(path.string() + ": unknown config key \"" + key + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad config value: " + e.what());
  }
  try {
    cfg.validate();
  } catch (const ContractError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return cfg;
}

ProposedModel load_model(const fs::path& weights) {
  return load_weights(weights, read_weights_config(weights));
}

Tensor model_input(const ImageBuffer& img, const ModelConfig& cfg) {
  return to_tensor(letterbox_resize(img, cfg.input_size).image);
}

fs::path manifest_dir(const fs::path& manifest) {
  return manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
}

std::string relocate(const std::string& entry_path, const fs::path& from,
                     const fs::path& to) {
  const fs::path p(entry_path);
  if (p.is_absolute()) return entry_path;
  const auto abs = fs::absolute(from / p).lexically_normal();
  return abs.lexically_proximate(fs::absolute(to).lexically_normal()).generic_string();
}

DatasetManifest relocated(const DatasetManifest& m, const fs::path& from,
                          const fs::path& to) {
  DatasetManifest out;
  for (ManifestEntry e : m.entries()) {
    e.path = relocate(e.path, from, to);
    if (!e.provenance.is_raw()) {
      e.provenance.parent = relocate(e.provenance.parent, from, to);
    }
    out.add(std::move(e));
  }
  return out;
}

struct AugmentArgs {
  std::string manifest, out, image_dir = "augmented";
  std::size_t variants = 2;
  std::uint64_t seed = 0;
  std::string rot_range = "-15,15", exposure_range = "0.5,1.5";
  double noise_rate = 0.001;
};

int cmd_augment(const AugmentArgs& a, std::ostream& out, std::ostream& err) {
  AugmentSpec spec;
  const auto rot = parse_numbers(a.rot_range, 2, "--rot-range");
  const auto exp = parse_numbers(a.exposure_range, 2, "--exposure-range");
  spec.rotation_degrees = {rot[0], rot[1]};
  spec.exposure_gain = {exp[0], exp[1]};
  spec.noise_rate = a.noise_rate;
  spec.variants_per_image = a.variants;
  spec.seed = a.seed;
  spec.validate();

  const DatasetManifest input = load_manifest(a.manifest);
  AugmentPaths paths;
  paths.source_root = manifest_dir(a.manifest);
  paths.output_root = manifest_dir(a.out);
  paths.image_subdir = a.image_dir;
  fs::create_directories(paths.output_root / paths.image_subdir);
  const AugmentResult result = augment_dataset(input, spec, paths);
  save_manifest(result.manifest, a.out);

  out << "input " << input.size() << "\n";
  out << "output " << result.manifest.size() << "\n";
  for (const auto& f : result.failures) {
    err << "augment: skipped " << f.path << ": " << f.reason << "\n";
  }
  return result.failures.empty() ? kOk : kData;
}

struct SplitArgs {
  std::string manifest, counts, out_dir;
  std::uint64_t seed = 0;
};

int cmd_split(const SplitArgs& a, std::ostream& out) {
  const auto c = parse_numbers(a.counts, 3, "--counts");
  const SplitCounts counts{as_count(c[0], "--counts"), as_count(c[1], "--counts"),
                           as_count(c[2], "--counts")};
  const DatasetManifest input = load_manifest(a.manifest);
  const DatasetSplit parts = split(input, counts, a.seed);

  const fs::path from = manifest_dir(a.manifest);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const std::pair<const char*, const DatasetManifest*> files[] = {
      {"train.tsv", &parts.train}, {"val.tsv", &parts.val}, {"test.tsv", &parts.test}};
  for (const auto& [name, m] : files) {
    save_manifest(relocated(*m, from, dir), dir / name);
    out << name << " " << m->size() << "\n";
  }
  return kOk;
}

struct TrainArgs {
  std::string manifest, config, out;
  std::size_t epochs = 1;
  double lr = 0.01;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (!(a.lr >= 0.0)) throw ValidationError("--lr must be >= 0");
  if (a.epochs == 0) throw ValidationError("--epochs must be >= 1");
  const ModelConfig cfg = parse_model_config(a.config);
  const DatasetManifest manifest = load_manifest(a.manifest);
  if (manifest.empty()) throw ValidationError(a.manifest + ": manifest is empty");

  const fs::path root = manifest_dir(a.manifest);
  std::vector<LabeledImage> samples;
  samples.reserve(manifest.size());
  for (const auto& e : manifest.entries()) {
    const ImageBuffer img = load_image(resolve(root, e.path));
    if (img.width() != cfg.input_size || img.height() != cfg.input_size) {
      throw ContractError(e.path + ": image is " + std::to_string(img.width()) + "x" +
                          std::to_string(img.height()) + " but the config expects " +
                          std::to_string(cfg.input_size) + "x" +
                          std::to_string(cfg.input_size));
    }
    if (e.label() < 0 || static_cast<std::size_t>(e.label()) >= cfg.num_classes) {
      throw ContractError(e.path + ": class " + std::to_string(e.label()) +
                          " outside the model's " + std::to_string(cfg.num_classes) +
                          " classes");
    }
    samples.push_back({to_tensor(img), static_cast<std::size_t>(e.label())});
  }

  ProposedModel model = build(cfg, a.seed);
  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.epochs = a.epochs;
  tc.seed = a.seed;
  fit(model, samples, tc, [&](const EpochStats& s) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f acc %.4f\n", s.epoch,
                  s.mean_loss, s.accuracy);
    out << buf << std::flush;
  });
  save_weights(model, a.out);
  return kOk;
}

int cmd_infer(const std::string& weights, const std::string& image,
              const std::string& json_path, std::ostream& out) {
  const ProposedModel model = load_model(weights);
  const ClassScores scores = model.forward(model_input(load_image(image), model.config()));
  if (!json_path.empty()) {
    nlohmann::json j;
    j["label"] = scores.label();
    j["class_id"] = scores.predicted_class;
    j["probabilities"] = scores.probabilities;
    write_file(json_path, j.dump(2) + "\n");
  }
  out << scores.label() << " " << percent(scores.confidence()) << "\n";
  return kOk;
}

void emit_report(const MetricsReport& report, const std::string& json_path,
                 std::ostream& out) {
  if (!json_path.empty()) write_file(json_path, report_to_json(report));
  out << render_table1(std::span<const MetricsReport>(&report, 1));
}

int cmd_eval(const std::string& weights, const std::string& manifest_file,
             const std::string& model_name, const std::string& json_path,
             std::ostream& out) {
  const ProposedModel model = load_model(weights);
  const DatasetManifest manifest = load_manifest(manifest_file);
  if (manifest.empty()) throw ValidationError(manifest_file + ": manifest is empty");
  const std::size_t classes = model.config().num_classes;
  for (const auto& e : manifest.entries()) {
    for (const auto& ann : e.annotations) {
      if (ann.class_id < 0 || static_cast<std::size_t>(ann.class_id) >= classes) {
        throw ContractError(e.path + ": class " + std::to_string(ann.class_id) +
                            " is not in the model's vocabulary of " +
                            std::to_string(classes) + " classes");
      }
    }
  }
  const fs::path root = manifest_dir(manifest_file);
  std::vector<int> predicted, truth;
  for (const auto& e : manifest.entries()) {
    const ClassScores s =
        model.forward(model_input(load_image(resolve(root, e.path)), model.config()));
    predicted.push_back(static_cast<int>(s.predicted_class));
    truth.push_back(e.label());
  }
  emit_report(classification_report(model_name, predicted, truth), json_path, out);
  return kOk;
}

int cmd_eval_det(const std::string& detections, const std::string& ground_truth,
                 const std::string& classes_text, const std::string& model_name,
                 const std::string& json_path, std::ostream& out) {
  std::vector<int> classes;
  if (!classes_text.empty()) {
    const std::size_t n = static_cast<std::size_t>(
        std::count(classes_text.begin(), classes_text.end(), ',') + 1);
    for (double v : parse_numbers(classes_text, n, "--classes")) {
      classes.push_back(static_cast<int>(as_count(v, "--classes")));
    }
  }
  const auto dets = load_detections(detections);
  const auto gts = load_ground_truth(ground_truth);
  emit_report(detection_report(model_name, dets, gts, classes), json_path, out);
  return kOk;
}

struct BenchArgs {
  std::string weights, mode = "seq", resolution = "640x480", device = "desktop";
  std::string source = "synthetic", delays, json = "bench_report.json";
  std::size_t frames = 100, warmup = 10, queue_capacity = 4;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  BenchConfig cfg;
  cfg.mode = parse_mode(a.mode);
  cfg.frame_count = a.frames;
  cfg.warmup_frames = a.warmup;
  cfg.queue_capacity = a.queue_capacity;
  if (!a.delays.empty()) {
    const auto d = parse_numbers(a.delays, 3, "--inject-delays");
    cfg.delays = {d[0], d[1], d[2]};
  }
  cfg.validate();
  const Resolution res = Resolution::parse(a.resolution);
  if (a.device.empty() || a.device.find_first_of("|\n") != std::string::npos) {
    throw ValidationError("--device-label must be non-empty without '|' or newlines");
  }

  const ProposedModel model = load_model(a.weights);
  std::unique_ptr<FrameSource> source;
  if (a.source == "synthetic") {
    source = std::make_unique<SyntheticSource>(cfg.warmup_frames + cfg.frame_count,
                                               res, a.seed);
  } else {
    source = std::make_unique<DirectorySource>(a.source);
  }
  const PipelineResult run = run_pipeline(*source, model, cfg);
  if (run.records.empty()) {
    throw DataError("source yielded no frames after " +
                    std::to_string(cfg.warmup_frames) + " warmup frames");
  }
  const BenchReport report = summarize(run, cfg, a.device);
  write_file(a.json, bench_report_to_json(report));
  out << render_table2(std::span<const BenchReport>(&report, 1));
  char buf[64];
  std::snprintf(buf, sizeof buf, "throughput %.2f fps\n", report.throughput_fps);
  out << buf;
  return kOk;
}

int cmd_report(const std::vector<std::string>& metrics,
               const std::vector<std::string>& benches, std::ostream& out) {
  if (metrics.empty() && benches.empty()) {
    throw ValidationError("report needs --metrics or --bench files");
  }
  std::vector<MetricsReport> rows;
  for (const auto& f : metrics) rows.push_back(report_from_json(read_file(f)));
  std::vector<BenchReport> bench_rows;
  for (const auto& f : benches) bench_rows.push_back(bench_report_from_json(read_file(f)));
  if (!rows.empty()) out << render_table1(rows);
  if (!rows.empty() && !bench_rows.empty()) out << "\n";
  if (!bench_rows.empty()) out << render_table2(bench_rows);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Smoking classification toolkit", "smokenet");
  app.require_subcommand(1);
  app.set_version_flag("--version", "smokenet 0.1.0");

  AugmentArgs aug;
  auto* augment = app.add_subcommand("augment", "Expand a manifest with augmented copies");
  augment->add_option("--manifest", aug.manifest, "Input manifest")->required();
  augment->add_option("--out", aug.out, "Output manifest")->required();
  augment->add_option("--variants", aug.variants, "Copies per raw image")->required();
  augment->add_option("--seed", aug.seed, "Random seed")->required();
  augment->add_option("--rot-range", aug.rot_range, "Rotation degrees A,B");
  augment->add_option("--exposure-range", aug.exposure_range, "Exposure gain A,B");
  augment->add_option("--noise-rate", aug.noise_rate, "Salt-and-pepper pixel rate");
  augment->add_option("--image-dir", aug.image_dir,
                      "Subdirectory of the output manifest for new images");

  SplitArgs sp;
  auto* split_cmd = app.add_subcommand("split", "Split a manifest into train/val/test");
  split_cmd->add_option("--manifest", sp.manifest, "Input manifest")->required();
  split_cmd->add_option("--counts", sp.counts, "Sizes T,V,E")->required();
  split_cmd->add_option("--seed", sp.seed, "Random seed")->required();
  split_cmd->add_option("--out-dir", sp.out_dir, "Directory for train/val/test.tsv")
      ->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the classifier");
  train->add_option("--manifest", tr.manifest, "Training manifest")->required();
  train->add_option("--config", tr.config, "Model config JSON")->required();
  train->add_option("--epochs", tr.epochs, "Epochs");
  train->add_option("--lr", tr.lr, "Learning rate");
  train->add_option("--seed", tr.seed, "Init and shuffle seed");
  train->add_option("--out", tr.out, "Output weights file")->required();

  std::string weights, image, manifest, json, model_name = "Proposed";
  auto* infer = app.add_subcommand("infer", "Classify one image");
  infer->add_option("--weights", weights, "Weights file")->required();
  infer->add_option("--image", image, "PPM image")->required();
  infer->add_option("--json", json, "Also write the scores here");

  auto* eval = app.add_subcommand("eval", "Classification metrics over a manifest");
  eval->add_option("--weights", weights, "Weights file")->required();
  eval->add_option("--manifest", manifest, "Labelled manifest")->required();
  eval->add_option("--model-name", model_name, "Row label");
  eval->add_option("--json", json, "Also write the report here");

  std::string detections, ground_truth, classes;
  auto* eval_det = app.add_subcommand("eval-det", "Detection metrics including mAP@50");
  eval_det->add_option("--detections", detections, "Detections file")->required();
  eval_det->add_option("--ground-truth", ground_truth,
                       "Ground-truth file or directory of YOLO label files")
      ->required();
  eval_det->add_option("--classes", classes, "Class ids to average over, e.g. 0,1");
  eval_det->add_option("--model-name", model_name, "Row label");
  eval_det->add_option("--json", json, "Also write the report here");

  BenchArgs bn;
  auto* bench = app.add_subcommand("bench", "Staged inference latency benchmark");
  bench->add_option("--weights", bn.weights, "Weights file")->required();
  bench->add_option("--mode", bn.mode, "seq or pipe");
  bench->add_option("--frames", bn.frames, "Measured frames");
  bench->add_option("--warmup", bn.warmup, "Frames excluded from statistics");
  bench->add_option("--resolution", bn.resolution, "Synthetic frame size WxH");
  bench->add_option("--device-label", bn.device, "Device column text");
  bench->add_option("--source", bn.source, "Directory of PPM frames or 'synthetic'");
  bench->add_option("--inject-delays", bn.delays, "Extra stage work PRE,INF,POST in ms");
  bench->add_option("--queue-capacity", bn.queue_capacity, "Pipelined queue size");
  bench->add_option("--seed", bn.seed, "Synthetic source seed");
  bench->add_option("--json", bn.json, "Machine-readable report path");

  std::vector<std::string> metric_files, bench_files;
  auto* report = app.add_subcommand("report", "Render saved reports as tables");
  report->add_option("--metrics", metric_files, "Metrics report JSON files");
  report->add_option("--bench", bench_files, "Bench report JSON files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*augment) return cmd_augment(aug, out, err);
    if (*split_cmd) return cmd_split(sp, out);
    if (*train) return cmd_train(tr, out);
    if (*infer) return cmd_infer(weights, image, json, out);
    if (*eval) return cmd_eval(weights, manifest, model_name, json, out);
    if (*eval_det) {
      return cmd_eval_det(detections, ground_truth, classes, model_name, json, out);
    }
    if (*bench) return cmd_bench(bn, out);
    if (*report) return cmd_report(metric_files, bench_files, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kContract;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace smokenet::cli
