#include "smokenet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "json.hpp"
#include "smokenet/bounded_queue.hpp"
#include "smokenet/errors.hpp"
#include "smokenet/random.hpp"
#include "text_util.hpp"

namespace smokenet {

std::string Resolution::str() const {
  return std::to_string(width) + "×" + std::to_string(height);
}

Resolution Resolution::parse(std::string_view text) {
  std::size_t sep = text.find('x');
  std::size_t sep_len = 1;
  if (sep == std::string_view::npos) {
    sep = text.find("×");
    sep_len = std::string_view("×").size();
  }
  Resolution r;
  if (sep == std::string_view::npos ||
      !detail::parse_int(text.substr(0, sep), r.width) ||
      !detail::parse_int(text.substr(sep + sep_len), r.height) || r.width == 0 ||
      r.height == 0) {
    throw ValidationError("bad resolution \"" + std::string(text) +
                          "\", expected WxH");
  }
  return r;
}

std::string to_string(PipelineMode mode) {
  return mode == PipelineMode::kSequential ? "sequential" : "pipelined";
}

PipelineMode parse_mode(std::string_view text) {
  if (text == "seq" || text == "sequential") return PipelineMode::kSequential;
  if (text == "pipe" || text == "pipelined") return PipelineMode::kPipelined;
  throw ValidationError("unknown bench mode \"" + std::string(text) +
                        "\", expected seq or pipe");
}

void BenchConfig::validate() const {
  if (queue_capacity < 1) throw ValidationError("queue_capacity must be >= 1");
  if (frame_count < 1) throw ValidationError("frame_count must be >= 1");
  for (double d : {delays.pre_ms, delays.infer_ms, delays.post_ms}) {
    if (!(d >= 0.0)) throw ValidationError("stage delays must be >= 0");
  }
}

ImageBuffer synthetic_frame(Resolution res, std::uint64_t seed, std::size_t index) {
  ImageBuffer img(res.width, res.height);
  std::mt19937_64 rng(derive_seed(seed, index));
  auto& px = img.pixels();
  std::size_t i = 0;
  while (i < px.size()) {
    std::uint64_t bits = rng();
    for (int b = 0; b < 8 && i < px.size(); ++b, ++i) {
      px[i] = static_cast<std::uint8_t>(bits & 0xFFu);
      bits >>= 8;
    }
  }
  return img;
}

SyntheticSource::SyntheticSource(std::size_t count, Resolution res,
                                 std::uint64_t seed)
    : count_(count), res_(res), seed_(seed) {
  if (count == 0) throw ValidationError("synthetic source needs count >= 1");
  if (res.width == 0 || res.height == 0) {
    throw ValidationError("synthetic source needs a positive resolution");
  }
}

std::optional<ImageBuffer> SyntheticSource::next() {
  if (emitted_ >= count_) return std::nullopt;
  return synthetic_frame(res_, seed_, emitted_++);
}

DirectorySource::DirectorySource(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError(dir.string() + ": not a directory");
  }
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") {
      files_.push_back(e.path());
    }
  }
  std::sort(files_.begin(), files_.end());
}

std::optional<ImageBuffer> DirectorySource::next() {
  if (pos_ >= files_.size()) return std::nullopt;
  return load_image(files_[pos_++]);
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::max(0.0, std::chrono::duration<double, std::milli>(b - a).count());
}

void pause_ms(double ms) {
  if (ms > 0.0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

struct PreOut {
  std::size_t index = 0;
  Resolution resolution;
  Tensor input;
  Clock::time_point start;
  double pre_ms = 0.0;
};

struct InferOut {
  PreOut pre;
  Tensor logits;
  double infer_ms = 0.0;
};

class Stages {
 public:
  Stages(const ProposedModel& model, const BenchConfig& cfg)
      : model_(model), cfg_(cfg) {}

  PreOut preprocess(std::size_t index, const ImageBuffer& frame) const {
    PreOut out;
    out.index = index;
    out.resolution = {frame.width(), frame.height()};
    out.start = Clock::now();
    out.input = to_tensor(letterbox_resize(frame, model_.config().input_size).image);
    pause_ms(cfg_.delays.pre_ms);
    out.pre_ms = ms_between(out.start, Clock::now());
    return out;
  }

  InferOut infer(PreOut in) const {
    const auto t0 = Clock::now();
    InferOut out;
    out.logits = model_.logits(in.input);
    pause_ms(cfg_.delays.infer_ms);
    out.infer_ms = ms_between(t0, Clock::now());
    out.pre = std::move(in);
    return out;
  }

  void postprocess(InferOut in, Clock::time_point epoch, PipelineResult& result) const {
    const auto t0 = Clock::now();
    ClassScores scores = scores_from_logits(in.logits);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s %.2f%%", scores.label().c_str(),
                  100.0 * scores.confidence());
    pause_ms(cfg_.delays.post_ms);
    const auto t1 = Clock::now();

    result.predictions.push_back(std::move(scores));
    result.labels.emplace_back(buf);
    ++result.frames_processed;
    if (in.pre.index < cfg_.warmup_frames) return;
    FrameRecord r;
    r.frame_index = in.pre.index;
    r.pre_ms = in.pre.pre_ms;
    r.infer_ms = in.infer_ms;
    r.post_ms = ms_between(t0, t1);
    r.total_ms = ms_between(in.pre.start, t1);
    r.resolution = in.pre.resolution;
    r.start_ms = ms_between(epoch, in.pre.start);
    r.end_ms = ms_between(epoch, t1);
    result.records.push_back(r);
  }

 private:
  const ProposedModel& model_;
  const BenchConfig& cfg_;
};

PipelineResult run_sequential(FrameSource& source, const Stages& stages,
                              std::size_t frames_wanted) {
  PipelineResult result;
  const auto epoch = Clock::now();
  for (std::size_t i = 0; i < frames_wanted; ++i) {
    std::optional<ImageBuffer> frame = source.next();
    if (!frame) break;
    stages.postprocess(stages.infer(stages.preprocess(i, *frame)), epoch, result);
  }
  return result;
}

PipelineResult run_pipelined(FrameSource& source, const Stages& stages,
                             std::size_t frames_wanted, std::size_t capacity) {
  PipelineResult result;
  BoundedQueue<PreOut> to_infer(capacity);
  BoundedQueue<InferOut> to_post(capacity);
  std::mutex error_mu;
  std::exception_ptr error;
  auto fail = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(error_mu);
      if (!error) error = e;
    }
    to_infer.close();
    to_post.close();
  };

  const auto epoch = Clock::now();
  {
    std::jthread pre([&] {
      try {
        for (std::size_t i = 0; i < frames_wanted; ++i) {
          std::optional<ImageBuffer> frame = source.next();
          if (!frame) break;
          if (!to_infer.push(stages.preprocess(i, *frame))) break;
        }
      } catch (...) {
        fail(std::current_exception());
      }
      to_infer.close();
    });
    std::jthread infer([&] {
      try {
        while (auto item = to_infer.pop()) {
          if (!to_post.push(stages.infer(std::move(*item)))) break;
        }
      } catch (...) {
        fail(std::current_exception());
      }
      to_post.close();
    });
    std::jthread post([&] {
      try {
        while (auto item = to_post.pop()) {
          stages.postprocess(std::move(*item), epoch, result);
        }
      } catch (...) {
        fail(std::current_exception());
      }
    });
  }
  if (error) std::rethrow_exception(error);
  result.max_queue_depth = std::max(to_infer.high_water(), to_post.high_water());
  return result;
}

}  // namespace

PipelineResult run_pipeline(FrameSource& source, const ProposedModel& model,
                            const BenchConfig& cfg) {
  cfg.validate();
  const Stages stages(model, cfg);
  const std::size_t wanted = cfg.warmup_frames + cfg.frame_count;
  PipelineResult result = cfg.mode == PipelineMode::kSequential
                              ? run_sequential(source, stages, wanted)
                              : run_pipelined(source, stages, wanted, cfg.queue_capacity);
  result.source_exhausted = result.frames_processed < wanted;
  return result;
}

StageStats stage_stats(std::vector<double> values) {
  if (values.empty()) throw ValidationError("statistics need at least one value");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) return values[lo];
    return values[lo] + (values[hi] - values[lo]) * frac;
  };
  StageStats s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = std::clamp(sum / static_cast<double>(values.size()), values.front(),
                      values.back());
  s.min = values.front();
  s.max = values.back();
  s.median = quantile(0.5);
  s.p95 = quantile(0.95);
  return s;
}

BenchReport aggregate(std::span<const FrameRecord> records) {
  if (records.empty()) throw ValidationError("aggregate needs at least one record");
  std::vector<double> pre, infer, post, total;
  double first_start = records.front().start_ms;
  double last_end = records.front().end_ms;
  for (const auto& r : records) {
    pre.push_back(r.pre_ms);
    infer.push_back(r.infer_ms);
    post.push_back(r.post_ms);
    total.push_back(r.total_ms);
    first_start = std::min(first_start, r.start_ms);
    last_end = std::max(last_end, r.end_ms);
  }
  BenchReport rep;
  rep.resolution = std::min_element(records.begin(), records.end(),
                                    [](const auto& a, const auto& b) {
                                      return a.frame_index < b.frame_index;
                                    })->resolution;
  rep.frames = records.size();
  rep.pre = stage_stats(std::move(pre));
  rep.infer = stage_stats(std::move(infer));
  rep.post = stage_stats(std::move(post));
  rep.total = stage_stats(std::move(total));
  // A span can collapse to zero on a coarse clock; fall back to the longest
  // single frame so throughput stays positive.
  double span_ms = last_end - first_start;
  if (!(span_ms > 0.0)) span_ms = std::max(rep.total.max, 1e-6);
  rep.throughput_fps = static_cast<double>(records.size()) * 1000.0 / span_ms;
  return rep;
}

BenchReport summarize(const PipelineResult& run, const BenchConfig& cfg,
                      std::string device) {
  BenchReport rep = aggregate(run.records);
  rep.device = std::move(device);
  rep.mode = to_string(cfg.mode);
  rep.source_exhausted = run.source_exhausted;
  rep.notes = cfg.mode == PipelineMode::kPipelined
                  ? "pipelined, 3 threads, queue " + std::to_string(cfg.queue_capacity)
                  : "sequential, 1 thread";
  if (run.source_exhausted) {
    rep.notes += ", source exhausted after " + std::to_string(run.frames_processed) +
                 " frames";
  }
  return rep;
}

namespace {

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

void require_cell(const std::string& text, const char* what) {
  if (text.find_first_of("|\n") != std::string::npos) {
    throw ValidationError(std::string(what) + " must not contain '|' or newlines");
  }
}

nlohmann::json stats_json(const StageStats& s) {
  return {{"mean", s.mean}, {"median", s.median}, {"p95", s.p95},
          {"min", s.min},   {"max", s.max}};
}

StageStats stats_from(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("median").get<double>(),
          j.at("p95").get<double>(), j.at("min").get<double>(),
          j.at("max").get<double>()};
}

}  // namespace

std::string render_table2(std::span<const BenchReport> reports) {
  if (reports.empty()) throw ValidationError("render_table2 needs at least one report");
  std::string out =
      "Device | Pre (ms) | Infer (ms) | Post (ms) | Res (px) | Total (ms) | Notes\n";
  for (const auto& r : reports) {
    if (r.device.empty()) throw ValidationError("device label is empty");
    require_cell(r.device, "device label");
    require_cell(r.notes, "notes");
    out += r.device + " | " + fixed1(r.pre.mean) + " | " + fixed1(r.infer.mean) +
           " | " + fixed1(r.post.mean) + " | " + r.resolution.str() + " | " +
           fixed1(r.total.min) + "–" + fixed1(r.total.max) + " | " + r.notes +
           "\n";
  }
  return out;
}

std::string bench_report_to_json(const BenchReport& r) {
  nlohmann::json j;
  j["device"] = r.device;
  j["mode"] = r.mode;
  j["resolution"] = {{"width", r.resolution.width}, {"height", r.resolution.height}};
  j["frames"] = r.frames;
  j["pre"] = stats_json(r.pre);
  j["infer"] = stats_json(r.infer);
  j["post"] = stats_json(r.post);
  j["total"] = stats_json(r.total);
  j["throughput_fps"] = r.throughput_fps;
  j["source_exhausted"] = r.source_exhausted;
  j["notes"] = r.notes;
  return j.dump(2) + "\n";
}

BenchReport bench_report_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    BenchReport r;
    r.device = j.at("device").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.resolution.width = j.at("resolution").at("width").get<std::size_t>();
    r.resolution.height = j.at("resolution").at("height").get<std::size_t>();
    r.frames = j.at("frames").get<std::size_t>();
    r.pre = stats_from(j.at("pre"));
    r.infer = stats_from(j.at("infer"));
    r.post = stats_from(j.at("post"));
    r.total = stats_from(j.at("total"));
    r.throughput_fps = j.at("throughput_fps").get<double>();
    r.source_exhausted = j.value("source_exhausted", false);
    r.notes = j.value("notes", std::string());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed bench report: ") + e.what());
  }
}

}  // namespace smokenet
