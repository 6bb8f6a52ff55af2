#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "smokenet/box.hpp"

namespace smokenet {

struct Annotation {
  int class_id = 0;  // 0 = smoking, 1 = not_smoking
  std::optional<Box> box;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct Provenance {
  enum class Kind { kRaw, kAugmented };

  Kind kind = Kind::kRaw;
  // Augmentation parameters; meaningful only for kAugmented.
  double rotation_degrees = 0.0;
  double exposure_gain = 1.0;
  double noise_rate = 0.0;
  std::uint64_t noise_seed = 0;
  std::string parent;

  bool is_raw() const { return kind == Kind::kRaw; }

  // "raw" or "augmented:rotate=..;exposure=..;noise=..;seed=..;parent=PATH"
  std::string tag() const;
  static Provenance parse(std::string_view tag);

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ManifestEntry {
  std::string path;
  std::vector<Annotation> annotations;  // at least one
  Provenance provenance;

  // Whole-image class: the first annotation's class.
  int label() const { return annotations.front().class_id; }

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Ordered image listing with unique paths.
///
/// Text form is UTF-8, one record per line, tab-separated:
///   path <TAB> class_id <TAB> [cx,cy,w,h] <TAB> provenance
/// An image with several annotations spans consecutive lines sharing path
/// and provenance. Blank lines and lines starting with '#' are ignored.
class DatasetManifest {
 public:
  DatasetManifest() = default;

  // Throws ValidationError on duplicate path or empty annotation list.
  void add(ManifestEntry entry);

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ManifestEntry& operator[](std::size_t i) const { return entries_[i]; }
  bool contains(const std::string& path) const { return paths_.contains(path); }

  // Every augmented entry names a parent present in this manifest.
  void check_lineage() const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<ManifestEntry> entries_;
  std::unordered_set<std::string> paths_;
};

std::string format_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(std::string_view text,
                               const std::string& origin = "<manifest>");
DatasetManifest load_manifest(const std::filesystem::path& path);
// Written through a temporary file and renamed into place.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

// YOLO label sidecar: one "class_id cx cy w h" line per object.
std::vector<Annotation> parse_yolo_labels(std::string_view text,
                                          const std::string& origin = "<labels>");
std::string format_yolo_labels(const std::vector<Annotation>& boxes);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct AugmentSpec {
  Interval rotation_degrees{-15.0, 15.0};
  Interval exposure_gain{0.5, 1.5};
  double noise_rate = 0.001;
  std::size_t variants_per_image = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AugmentPaths {
  // Relative entry paths in the input manifest resolve against this.
  std::filesystem::path source_root = ".";
  // Output manifest paths are written relative to this directory.
  std::filesystem::path output_root = ".";
  // Augmented images go to output_root / image_subdir.
  std::filesystem::path image_subdir = "augmented";
};

struct AugmentFailure {
  std::string path;
  std::string reason;
};

struct AugmentResult {
  DatasetManifest manifest;
  std::vector<AugmentFailure> failures;
};

/// Keeps every input entry and appends `variants_per_image` augmented copies
/// after each raw one. Each copy is rotate -> exposure -> noise with
/// parameters drawn from a stream seeded by (spec.seed, entry index,
/// variant). Augmented entries keep class labels but drop boxes. Raw entries
/// whose image cannot be read are reported in `failures` and omitted.
AugmentResult augment_dataset(const DatasetManifest& manifest,
                              const AugmentSpec& spec,
                              const AugmentPaths& paths = {});

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct DatasetSplit {
  DatasetManifest train;
  DatasetManifest val;
  DatasetManifest test;
};

// Seeded uniform shuffle, then contiguous train/val/test assignment.
DatasetSplit split(const DatasetManifest& manifest, const SplitCounts& counts,
                   std::uint64_t seed);

// Resolves an entry path against a root unless already absolute.
std::filesystem::path resolve(const std::filesystem::path& root,
                              const std::string& entry_path);

}  // namespace smokenet
