// Acceptance run: one [PASS]/[FAIL] line per criterion, non-zero exit if any
// criterion fails or overruns its time budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "smokenet/bench.hpp"
#include "smokenet/dataset.hpp"
#include "smokenet/errors.hpp"
#include "smokenet/image.hpp"
#include "smokenet/metrics.hpp"
#include "smokenet/model.hpp"
#include "smokenet/tensor.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"
#include "support/synthetic.hpp"

using namespace smokenet;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  Tensor t(shape);
  for (float& v : t.data()) v = d(rng);
  return t;
}

// ---- 1 ------------------------------------------------------------------

Verdict shape_contract() {
  const ModelConfig cfg;
  const ProposedModel model = build(cfg, 1);
  std::mt19937_64 rng(7);
  const Tensor image = random_tensor({3, 640, 640}, rng, 0.0f, 1.0f);
  ForwardTrace trace;
  const ClassScores scores = scores_from_logits(model.logits(image, &trace));

  const std::vector<Shape> expected{{64, 320, 320},  {128, 160, 160}, {256, 80, 80},
                                    {512, 40, 40},   {1024, 20, 20},  {1024, 20, 20},
                                    {1024, 20, 20}};
  if (trace.conv_outputs != expected) return {false, "conv output shapes differ"};
  if (trace.flatten_length != 409600) {
    return {false, fmt("flatten length %zu", trace.flatten_length)};
  }
  if (trace.hidden != Shape{128} || scores.probabilities.size() != 2) {
    return {false, "head shapes differ"};
  }
  const double sum = double(scores.probabilities[0]) + double(scores.probabilities[1]);
  return {std::abs(sum - 1.0) <= 1e-6,
          fmt("(64,320,320) .. (1024,20,20), flatten 409600, prob sum %.9f", sum)};
}

// ---- 2 ------------------------------------------------------------------

// Largest |analytic - finite difference| over conv, dense, relu and softmax
// cross-entropy on tensors of at most 200 elements.
double op_gradient_error() {
  constexpr double eps = 1e-3;
  std::mt19937_64 rng(31);
  double worst = 0.0;
  auto note = [&](double a, double n) { worst = std::max(worst, std::abs(a - n)); };
  auto central = [&](double& slot, const std::function<double()>& f) {
    const double saved = slot;
    slot = saved + eps;
    const double up = f();
    slot = saved - eps;
    const double down = f();
    slot = saved;
    return (up - down) / (2 * eps);
  };

  {
    const Tensor x = random_tensor({2, 5, 5}, rng);
    const ConvParams p{random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng), 2, 1};
    const Tensor y = conv2d(x, p);
    const Tensor u = random_tensor(y.shape(), rng);
    const ConvGrad g = conv2d_grad(x, p, u);
    ref::Volume xv = ref::volume_of(x);
    std::vector<double> w = ref::widen(p.weights.data()), b = ref::widen(p.bias.data());
    const std::vector<double> uu = ref::widen(u.data());
    auto f = [&] {
      const ref::Volume out = ref::conv(xv, w, b, 3, 3, 2, 1);
      double s = 0.0;
      for (std::size_t i = 0; i < out.v.size(); ++i) s += uu[i] * out.v[i];
      return s;
    };
    for (std::size_t i = 0; i < xv.v.size(); ++i) note(g.input[i], central(xv.v[i], f));
    for (std::size_t i = 0; i < w.size(); ++i) note(g.weights[i], central(w[i], f));
    for (std::size_t i = 0; i < b.size(); ++i) note(g.bias[i], central(b[i], f));
  }
  {
    const Tensor x = random_tensor({12}, rng);
    const DenseParams p{random_tensor({5, 12}, rng), random_tensor({5}, rng)};
    const Tensor u = random_tensor({5}, rng);
    const DenseGrad g = dense_grad(x, p, u);
    std::vector<double> xv = ref::widen(x.data()), w = ref::widen(p.weights.data()),
                        b = ref::widen(p.bias.data());
    auto f = [&] {
      const std::vector<double> out = ref::dense(xv, w, b);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += u[i] * out[i];
      return s;
    };
    for (std::size_t i = 0; i < xv.size(); ++i) note(g.input[i], central(xv[i], f));
    for (std::size_t i = 0; i < w.size(); ++i) note(g.weights[i], central(w[i], f));
    for (std::size_t i = 0; i < b.size(); ++i) note(g.bias[i], central(b[i], f));
  }
  {
    Tensor x = random_tensor({150}, rng);
    for (float& v : x.data()) {
      if (std::abs(v) < 0.01f) v = 0.5f;
    }
    const Tensor u = random_tensor({150}, rng);
    const Tensor g = relu_grad(x, u);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double up = std::max(0.0, x[i] + eps), down = std::max(0.0, x[i] - eps);
      note(g[i], u[i] * (up - down) / (2 * eps));
    }
  }
  for (std::size_t label = 0; label < 2; ++label) {
    const Tensor z = random_tensor({2}, rng, -3.0f, 3.0f);
    const LossGrad g = softmax_cross_entropy_grad(z, label);
    std::vector<double> zz = ref::widen(z.data());
    auto f = [&] { return ref::cross_entropy(zz, label); };
    for (std::size_t i = 0; i < zz.size(); ++i) note(g.logits[i], central(zz[i], f));
  }
  return worst;
}

Verdict gradient_correctness() {
  const ProposedModel model = build(ModelConfig::compact(64), 5);
  std::mt19937_64 rng(9);
  const Tensor image = random_tensor({3, 64, 64}, rng, 0.0f, 1.0f);
  const gradcheck::Report r = gradcheck::check_model(model, image, 1, 3, 99);
  const std::size_t tensors = model.parameters().size();
  const double op_err = op_gradient_error();
  const bool pass = r.samples.size() >= 50 && r.tensors.size() == tensors && r.worst < 1e-2 &&
                    op_err <= 1e-3;
  return {pass, fmt("%zu samples over %zu/%zu tensors, worst rel %.2e (kinks %zu, zeros %zu); "
                    "op max abs %.2e",
                    r.samples.size(), r.tensors.size(), tensors, r.worst, r.kinks_skipped,
                    r.zeros_skipped, op_err)};
}

// ---- 3 ------------------------------------------------------------------

Verdict trainability() {
  const auto data = synth::blob_set(16, 64, 42);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 0.01;
  cfg.seed = 3;
  ProposedModel a = build(ModelConfig::compact(64), 3);
  ProposedModel b = build(ModelConfig::compact(64), 3);
  const TrainLog la = fit(a, data, cfg);
  const TrainLog lb = fit(b, data, cfg);
  const auto reached = std::find_if(la.begin(), la.end(),
                                    [](const EpochStats& e) { return e.accuracy >= 0.95; });
  std::size_t correct = 0;
  for (const auto& s : data) correct += a.forward(s.image).predicted_class == s.label;
  const double final_acc = static_cast<double>(correct) / static_cast<double>(data.size());
  const bool deterministic = la == lb && a == b;
  const bool pass = reached != la.end() && final_acc >= 0.95 && deterministic;
  return {pass, fmt("first epoch at >= 95%%: %s, final train acc %.4f, repeat run %s",
                    reached == la.end() ? "none" : std::to_string(reached->epoch).c_str(),
                    final_acc, deterministic ? "identical" : "differs")};
}

// ---- 4 ------------------------------------------------------------------

// Every multiset of size <= k over n option kinds, as per-kind counts.
std::vector<std::vector<int>> multisets(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> counts(n, 0);
  std::function<void(int, int)> rec = [&](int kind, int left) {
    if (kind == n) {
      out.push_back(counts);
      return;
    }
    for (int c = 0; c <= left; ++c) {
      counts[kind] = c;
      rec(kind + 1, left - c);
    }
    counts[kind] = 0;
  };
  rec(0, k);
  return out;
}

Verdict metric_oracle() {
  const Box a{0.3, 0.3, 0.2, 0.2};
  // Ground-truth kinds: (image, class) at box a.
  const std::vector<GroundTruth> gt_kinds{{"a", 0, a}, {"a", 1, a}, {"b", 0, a}, {"b", 1, a}};
  // Detection placements relative to a: exact, IoU 0.6, IoU 0.4, other
  // image, disjoint. Each comes in both classes and two confidences.
  const double weak_dx = 0.2 * 0.6 / 1.4;
  const std::vector<std::pair<std::string, Box>> places{
      {"a", a},
      {"a", {0.35, 0.3, 0.2, 0.2}},
      {"a", {0.3 + weak_dx, 0.3, 0.2, 0.2}},
      {"b", a},
      {"a", {0.8, 0.8, 0.2, 0.2}}};
  std::vector<Detection> det_kinds;
  for (const auto& [img, box] : places) {
    for (int cls : {0, 1}) {
      for (double conf : {0.4, 0.8}) det_kinds.push_back({img, cls, conf, box});
    }
  }
  const auto gt_sets = multisets(static_cast<int>(gt_kinds.size()), 4);
  const auto det_sets = multisets(static_cast<int>(det_kinds.size()), 5);
  const std::vector<int> classes{0, 1};

  std::mt19937_64 rng(2718);
  std::size_t instances = 0, mismatches = 0, throws_ok = 0;
  double worst = 0.0;
  std::set<double> distinct;
  std::vector<GroundTruth> gts;
  std::vector<Detection> dets;
  for (const auto& gc : gt_sets) {
    gts.clear();
    for (std::size_t k = 0; k < gc.size(); ++k) gts.insert(gts.end(), gc[k], gt_kinds[k]);
    for (const auto& dc : det_sets) {
      dets.clear();
      for (std::size_t k = 0; k < dc.size(); ++k) dets.insert(dets.end(), dc[k], det_kinds[k]);
      std::shuffle(dets.begin(), dets.end(), rng);
      ++instances;
      const double expected = ref::map50(dets, gts);
      if (expected < 0) {
        try {
          map50(dets, gts, classes);
          ++mismatches;
        } catch (const ValidationError&) {
          ++throws_ok;
        }
        continue;
      }
      distinct.insert(expected);
      const double got = map50(dets, gts, classes).map50;
      const double err = std::abs(got - expected);
      worst = std::max(worst, err);
      if (!(err <= 1e-9)) ++mismatches;
    }
  }
  const double worked = average_precision({true, false, true}, 2);
  const bool pass = mismatches == 0 && std::abs(worked - 5.0 / 6.0) <= 1e-12;
  return {pass, fmt("%zu instances (%zu without ground truth rejected), %zu mismatches, "
                    "max |diff| %.1e, %zu distinct mAP values; AP[TP,FP,TP]/2 = %.12f",
                    instances, throws_ok, mismatches, worst, distinct.size(), worked)};
}

// ---- 5 ------------------------------------------------------------------

Verdict dataset_arithmetic() {
  const fs::path dir = fixtures::scratch_dir("acceptance_dataset");
  const DatasetManifest raw = fixtures::placeholder_dataset(dir, 2708, 8, 5);
  AugmentSpec spec;
  spec.variants_per_image = 2;
  spec.seed = 8124;
  const AugmentResult aug = augment_dataset(raw, spec, {dir, dir, "aug"});
  const DatasetSplit s = split(aug.manifest, {5687, 1623, 814}, 11);
  fs::remove_all(dir);
  const bool pass = aug.failures.empty() && aug.manifest.size() == 8124 &&
                    s.train.size() == 5687 && s.val.size() == 1623 && s.test.size() == 814;
  return {pass, fmt("2708 -> %zu entries, split %zu/%zu/%zu", aug.manifest.size(),
                    s.train.size(), s.val.size(), s.test.size())};
}

// ---- 6 ------------------------------------------------------------------

Verdict noise_calibration() {
  const ImageBuffer gray(640, 640, 128);
  double altered = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ImageBuffer noisy = inject_noise(gray, 0.001, seed);
    std::size_t n = 0;
    for (std::size_t i = 0; i < noisy.pixel_count(); ++i) n += noisy.pixels()[i * 3] != 128;
    altered += static_cast<double>(n) / static_cast<double>(noisy.pixel_count());
  }
  const double mean = altered / 100.0;
  const double rel = std::abs(mean - 0.001) / 0.001;
  return {rel <= 0.10, fmt("mean altered fraction %.6f (%.2f%% off 0.001)", mean, rel * 100)};
}

// ---- 7 ------------------------------------------------------------------

Verdict pipeline_semantics() {
  const ProposedModel model = build(ModelConfig::compact(64), 13);
  auto run = [&](PipelineMode mode, std::size_t capacity, StageDelays delays) {
    SyntheticSource src(210, {80, 60}, 77);
    BenchConfig cfg;
    cfg.mode = mode;
    cfg.frame_count = 200;
    cfg.warmup_frames = 10;
    cfg.queue_capacity = capacity;
    cfg.delays = delays;
    return run_pipeline(src, model, cfg);
  };
  const StageDelays delays{5.0, 20.0, 1.0};
  const PipelineResult seq = run(PipelineMode::kSequential, 4, delays);
  const PipelineResult pipe = run(PipelineMode::kPipelined, 4, delays);
  const PipelineResult tight = run(PipelineMode::kPipelined, 1, {});

  bool ordered = tight.records.size() == 200 && tight.max_queue_depth <= 1;
  for (std::size_t i = 0; ordered && i < tight.records.size(); ++i) {
    ordered = tight.records[i].frame_index == i + 10;
  }
  const bool same = seq.predictions == pipe.predictions && seq.predictions == tight.predictions;
  const double seq_fps = aggregate(seq.records).throughput_fps;
  const double pipe_fps = aggregate(pipe.records).throughput_fps;
  const double ratio = pipe_fps / seq_fps;
  return {same && ordered && ratio >= 1.2,
          fmt("predictions %s, capacity-1 order %s, throughput %.1f vs %.1f fps = %.2fx",
              same ? "identical" : "differ", ordered ? "kept" : "broken", pipe_fps, seq_fps,
              ratio)};
}

// ---- 8 ------------------------------------------------------------------

Verdict report_fidelity() {
  MetricsReport r;
  r.model = "Proposed";
  r.accuracy = 0.7845;
  r.precision = 0.7801;
  r.recall = 0.7890;
  r.f1 = 0.7844;
  r.map50 = 0.8370;
  const std::string t1 = render_table1(std::span<const MetricsReport>(&r, 1));
  const bool row_ok = t1 == "Model Acc Prec Rec F1 mAP@50\nProposed 78.45 78.01 78.90 78.44 83.70\n";

  BenchReport b;
  b.device = "Xavier NX";
  b.resolution = {640, 480};
  const std::string t2 = render_table2(std::span<const BenchReport>(&b, 1));
  const std::string header = t2.substr(0, t2.find('\n'));
  const bool header_ok =
      header == "Device | Pre (ms) | Infer (ms) | Post (ms) | Res (px) | Total (ms) | Notes";
  return {row_ok && header_ok,
          fmt("table 1 row %s, table 2 columns %s", row_ok ? "exact" : "differs",
              header_ok ? "Device/Pre/Infer/Post/Res/Total/Notes" : "differ")};
}

// ---- 9 ------------------------------------------------------------------

Verdict persistence() {
  const fs::path dir = fixtures::scratch_dir("acceptance_persist");
  const ProposedModel model = build(ModelConfig::compact(64), 21);
  save_weights(model, dir / "w.bin");
  const bool weights_ok = load_weights(dir / "w.bin", model.config()) == model;

  DatasetManifest m = fixtures::placeholder_dataset(dir, 12);
  Provenance p;
  p.kind = Provenance::Kind::kAugmented;
  p.rotation_degrees = 3.0000000000000004;
  p.exposure_gain = 0.7;
  p.noise_rate = 0.001;
  p.noise_seed = 123456789012345ull;
  p.parent = m[0].path;
  m.add({"aug/x.ppm", {{1, std::nullopt}}, p});
  save_manifest(m, dir / "m.tsv");
  const bool manifest_ok = load_manifest(dir / "m.tsv") == m;

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  for (int i = 0; i < 50; ++i) {
    const Box box{u(rng), u(rng), u(rng) / 4, u(rng) / 4};
    dets.push_back({"img" + std::to_string(i % 7), i % 2, u(rng), box});
    gts.push_back({"img" + std::to_string(i % 5), (i + 1) % 2, box});
  }
  const bool dets_ok = parse_detections(format_detections(dets)) == dets;
  const bool gts_ok = parse_ground_truth(format_ground_truth(gts)) == gts;
  fs::remove_all(dir);
  return {weights_ok && manifest_ok && dets_ok && gts_ok,
          fmt("weights %s, manifest %s, detections %s, ground truth %s",
              weights_ok ? "bit-exact" : "differ", manifest_ok ? "ok" : "differs",
              dets_ok ? "ok" : "differ", gts_ok ? "ok" : "differ")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  Verdict (*check)();
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "shape contract", 120, shape_contract},
      {2, "gradient correctness", 300, gradient_correctness},
      {3, "trainability", 600, trainability},
      {4, "metric oracle equivalence", 120, metric_oracle},
      {5, "dataset arithmetic", 300, dataset_arithmetic},
      {6, "noise calibration", 120, noise_calibration},
      {7, "pipeline semantics", 180, pipeline_semantics},
      {8, "report fidelity", 60, report_fidelity},
      {9, "persistence", 60, persistence},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (v.pass && secs > c.budget_s) {
      v.pass = false;
      v.detail += fmt("; over budget of %.0f s", c.budget_s);
    }
    failed += v.pass ? 0 : 1;
    std::printf("[%s] C%d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name,
                v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed,
              std::size(criteria));
  return failed == 0 ? 0 : 1;
}
