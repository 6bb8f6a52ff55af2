#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smokenet/image.hpp"
#include "smokenet/model.hpp"

namespace smokenet {

struct Resolution {
  std::size_t width = 0;
  std::size_t height = 0;

  // "640×480"
  std::string str() const;
  // Accepts "640x480" or "640×480".
  static Resolution parse(std::string_view text);

  friend bool operator==(const Resolution&, const Resolution&) = default;
};

// Times are steady-clock milliseconds; start/end are offsets from run start.
struct FrameRecord {
  std::size_t frame_index = 0;
  double pre_ms = 0.0;
  double infer_ms = 0.0;
  double post_ms = 0.0;
  double total_ms = 0.0;
  Resolution resolution;
  double start_ms = 0.0;
  double end_ms = 0.0;
};

enum class PipelineMode { kSequential, kPipelined };

std::string to_string(PipelineMode mode);
PipelineMode parse_mode(std::string_view text);  // "seq"/"sequential", "pipe"/"pipelined"

// Artificial per-stage work, slept inside the timed region.
struct StageDelays {
  double pre_ms = 0.0;
  double infer_ms = 0.0;
  double post_ms = 0.0;
};

struct BenchConfig {
  PipelineMode mode = PipelineMode::kSequential;
  std::size_t queue_capacity = 4;
  std::size_t frame_count = 100;   // measured frames
  std::size_t warmup_frames = 10;  // processed first, excluded from records
  StageDelays delays;

  void validate() const;
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  // nullopt once exhausted.
  virtual std::optional<ImageBuffer> next() = 0;
};

// Deterministic pseudo-random frame `index` of a stream.
ImageBuffer synthetic_frame(Resolution res, std::uint64_t seed, std::size_t index);

class SyntheticSource : public FrameSource {
 public:
  SyntheticSource(std::size_t count, Resolution res, std::uint64_t seed);
  std::optional<ImageBuffer> next() override;

 private:
  std::size_t count_;
  Resolution res_;
  std::uint64_t seed_;
  std::size_t emitted_ = 0;
};

// PPM files of a directory in lexicographic order.
class DirectorySource : public FrameSource {
 public:
  explicit DirectorySource(const std::filesystem::path& dir);
  std::optional<ImageBuffer> next() override;
  std::size_t size() const { return files_.size(); }

 private:
  std::vector<std::filesystem::path> files_;
  std::size_t pos_ = 0;
};

struct PipelineResult {
  std::vector<FrameRecord> records;        // measured frames only
  std::vector<ClassScores> predictions;    // every processed frame, in order
  std::vector<std::string> labels;         // formatted post-process output
  std::size_t frames_processed = 0;
  bool source_exhausted = false;  // fewer frames than warmup + frame_count
  std::size_t max_queue_depth = 0;
};

/// Preprocess (letterbox to the model size, to_tensor), inference (logits) and
/// postprocess (softmax, argmax, label) over a frame stream. Sequential mode
/// runs all three on the calling thread; pipelined mode runs one thread per
/// stage joined by two bounded FIFO queues. Outputs are in frame order in
/// both modes.
PipelineResult run_pipeline(FrameSource& source, const ProposedModel& model,
                            const BenchConfig& cfg);

struct StageStats {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
  double min = 0.0;
  double max = 0.0;

  friend bool operator==(const StageStats&, const StageStats&) = default;
};

// Order statistics with linear interpolation; mean over sorted values so
// the result does not depend on input order.
StageStats stage_stats(std::vector<double> values);

struct BenchReport {
  std::string device;
  std::string mode;
  Resolution resolution;
  std::size_t frames = 0;
  StageStats pre;
  StageStats infer;
  StageStats post;
  StageStats total;
  double throughput_fps = 0.0;
  bool source_exhausted = false;
  std::string notes;

  friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

// Statistics only; label fields are left for the caller.
BenchReport aggregate(std::span<const FrameRecord> records);

// aggregate() plus device, mode, flags and notes from a finished run.
BenchReport summarize(const PipelineResult& run, const BenchConfig& cfg,
                      std::string device);

// Device | Pre (ms) | Infer (ms) | Post (ms) | Res (px) | Total (ms) | Notes
std::string render_table2(std::span<const BenchReport> reports);

std::string bench_report_to_json(const BenchReport& r);
BenchReport bench_report_from_json(std::string_view text);

}  // namespace smokenet
