#include "smokenet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "smokenet/errors.hpp"
#include "smokenet/image.hpp"
#include "smokenet/random.hpp"
#include "text_util.hpp"

namespace smokenet {

using detail::format_double;
using detail::parse_double;
using detail::parse_int;

bool is_valid(const Box& b) {
  return b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0 &&
         b.w > 0.0 && b.w <= 1.0 && b.h > 0.0 && b.h <= 1.0;
}

void require_valid(const Box& b, const std::string& what) {
  if (!is_valid(b)) {
    throw ValidationError(what + ": box (" + format_double(b.cx) + "," +
                          format_double(b.cy) + "," + format_double(b.w) + "," +
                          format_double(b.h) +
                          ") outside normalized bounds");
  }
}

std::string Provenance::tag() const {
  if (kind == Kind::kRaw) return "raw";
  return "augmented:rotate=" + format_double(rotation_degrees) +
         ";exposure=" + format_double(exposure_gain) +
         ";noise=" + format_double(noise_rate) +
         ";seed=" + std::to_string(noise_seed) + ";parent=" + parent;
}

Provenance Provenance::parse(std::string_view tag) {
  if (tag == "raw") return {};
  constexpr std::string_view kPrefix = "augmented:";
  auto fail = [&](const std::string& why) -> Provenance {
    throw DataError("bad provenance tag \"" + std::string(tag) + "\": " + why);
  };
  if (!tag.starts_with(kPrefix)) return fail("expected raw or augmented:");
  std::string_view rest = tag.substr(kPrefix.size());

  // parent is last and taken verbatim, so it may contain ';' or '='.
  const std::size_t parent_at = rest.find("parent=");
  if (parent_at == std::string_view::npos) return fail("missing parent");
  Provenance p;
  p.kind = Kind::kAugmented;
  p.parent = std::string(rest.substr(parent_at + 7));
  if (p.parent.empty()) return fail("empty parent");

  std::string_view params = rest.substr(0, parent_at);
  bool rot = false, exp = false, noise = false, seed = false;
  for (std::string_view kv : detail::split(params, ';')) {
    if (kv.empty()) continue;
    const std::size_t eq = kv.find('=');
    if (eq == std::string_view::npos) return fail("expected key=value");
    std::string_view key = kv.substr(0, eq);
    std::string_view val = kv.substr(eq + 1);
    bool ok = false;
    if (key == "rotate") ok = rot = parse_double(val, p.rotation_degrees);
    else if (key == "exposure") ok = exp = parse_double(val, p.exposure_gain);
    else if (key == "noise") ok = noise = parse_double(val, p.noise_rate);
    else if (key == "seed") ok = seed = parse_int(val, p.noise_seed);
    if (!ok) return fail("bad field " + std::string(kv));
  }
  if (!(rot && exp && noise && seed)) return fail("missing parameter");
  return p;
}

void DatasetManifest::add(ManifestEntry entry) {
  if (entry.path.empty()) throw ValidationError("manifest entry has empty path");
  if (entry.annotations.empty()) {
    throw ValidationError("manifest entry " + entry.path + " has no annotations");
  }
  if (entry.path.find_first_of("\t\n") != std::string::npos) {
    throw ValidationError("manifest path contains tab or newline: " + entry.path);
  }
  if (!paths_.insert(entry.path).second) {
    throw ValidationError("duplicate manifest path " + entry.path);
  }
  entries_.push_back(std::move(entry));
}

void DatasetManifest::check_lineage() const {
  for (const auto& e : entries_) {
    if (!e.provenance.is_raw() && !paths_.contains(e.provenance.parent)) {
      throw ValidationError("augmented entry " + e.path +
                            " names missing parent " + e.provenance.parent);
    }
  }
}

std::string format_manifest(const DatasetManifest& m) {
  std::string out;
  for (const auto& e : m.entries()) {
    const std::string tag = e.provenance.tag();
    for (const auto& a : e.annotations) {
      out += e.path;
      out += '\t';
      out += std::to_string(a.class_id);
      out += '\t';
      if (a.box) {
        out += format_double(a.box->cx) + ',' + format_double(a.box->cy) + ',' +
               format_double(a.box->w) + ',' + format_double(a.box->h);
      }
      out += '\t';
      out += tag;
      out += '\n';
    }
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view text, const std::string& origin) {
  DatasetManifest m;
  std::optional<ManifestEntry> pending;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (pending) m.add(std::move(*pending));
    pending.reset();
  };

  for (std::string_view raw : detail::split(text, '\n')) {
    ++line_no;
    const std::string_view line = detail::strip_cr(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    const auto cols = detail::split(line, '\t');
    if (cols.size() != 3 && cols.size() != 4) {
      throw DataError(where + ": expected 3 or 4 tab-separated fields, got " +
                      std::to_string(cols.size()));
    }
    Annotation a;
    if (!parse_int(cols[1], a.class_id) || a.class_id < 0) {
      throw DataError(where + ": bad class_id \"" + std::string(cols[1]) + "\"");
    }
    const std::string_view box_field = cols.size() == 4 ? cols[2] : "";
    if (!box_field.empty()) {
      const auto parts = detail::split(box_field, ',');
      Box b;
      if (parts.size() != 4 || !parse_double(parts[0], b.cx) ||
          !parse_double(parts[1], b.cy) || !parse_double(parts[2], b.w) ||
          !parse_double(parts[3], b.h)) {
        throw DataError(where + ": bad box \"" + std::string(box_field) + "\"");
      }
      if (!is_valid(b)) throw DataError(where + ": box outside normalized bounds");
      a.box = b;
    }
    Provenance prov;
    try {
      prov = Provenance::parse(cols.back());
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }

    const std::string path(cols[0]);
    if (pending && pending->path == path) {
      if (pending->provenance != prov) {
        throw DataError(where + ": provenance differs from previous line for " + path);
      }
      pending->annotations.push_back(a);
      continue;
    }
    try {
      flush();
    } catch (const ValidationError& e) {
      throw DataError(where + ": " + e.what());
    }
    pending = ManifestEntry{path, {a}, prov};
  }
  try {
    flush();
  } catch (const ValidationError& e) {
    throw DataError(origin + ": " + e.what());
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(detail::read_text_file(path), path.string());
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  detail::write_text_file_atomic(path, format_manifest(m));
}

std::vector<Annotation> parse_yolo_labels(std::string_view text,
                                          const std::string& origin) {
  std::vector<Annotation> out;
  std::size_t line_no = 0;
  for (std::string_view raw : detail::split(text, '\n')) {
    ++line_no;
    const auto fields = detail::split_ws(detail::strip_cr(raw));
    if (fields.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    Annotation a;
    Box b;
    if (fields.size() != 5 || !parse_int(fields[0], a.class_id) ||
        a.class_id < 0 || !parse_double(fields[1], b.cx) ||
        !parse_double(fields[2], b.cy) || !parse_double(fields[3], b.w) ||
        !parse_double(fields[4], b.h)) {
      throw DataError(where + ": expected \"class_id cx cy w h\"");
    }
    if (!is_valid(b)) throw DataError(where + ": box outside normalized bounds");
    a.box = b;
    out.push_back(a);
  }
  return out;
}

std::string format_yolo_labels(const std::vector<Annotation>& boxes) {
  std::string out;
  for (const auto& a : boxes) {
    if (!a.box) throw ValidationError("YOLO label line needs a box");
    out += std::to_string(a.class_id) + ' ' + format_double(a.box->cx) + ' ' +
           format_double(a.box->cy) + ' ' + format_double(a.box->w) + ' ' +
           format_double(a.box->h) + '\n';
  }
  return out;
}

void AugmentSpec::validate() const {
  auto check = [](const Interval& i, const char* name) {
    if (!std::isfinite(i.lo) || !std::isfinite(i.hi) || i.lo > i.hi) {
      throw ValidationError(std::string(name) + " interval is empty or not finite");
    }
  };
  check(rotation_degrees, "rotation");
  check(exposure_gain, "exposure");
  if (exposure_gain.lo <= 0.0) {
    throw ValidationError("exposure gain interval must be positive");
  }
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
    throw ValidationError("noise rate must lie in [0, 1]");
  }
}

std::filesystem::path resolve(const std::filesystem::path& root,
                              const std::string& entry_path) {
  std::filesystem::path p(entry_path);
  return p.is_absolute() ? p : root / p;
}

namespace {

double draw(std::mt19937_64& rng, const Interval& i) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return i.lo + (i.hi - i.lo) * u;
}

// An entry path of a manifest rooted at `from`, re-expressed for a manifest
// rooted at `to`. Absolute paths stay as they are.
std::string relocate(const std::string& entry_path, const std::filesystem::path& from,
                     const std::filesystem::path& to) {
  if (std::filesystem::path(entry_path).is_absolute()) return entry_path;
  const auto abs_target = std::filesystem::absolute(from / entry_path).lexically_normal();
  const auto abs_root = std::filesystem::absolute(to).lexically_normal();
  return abs_target.lexically_proximate(abs_root).generic_string();
}

}  // namespace

AugmentResult augment_dataset(const DatasetManifest& manifest,
                              const AugmentSpec& spec, const AugmentPaths& paths) {
  if (manifest.empty()) throw ValidationError("augment: manifest is empty");
  spec.validate();

  const std::filesystem::path image_dir = paths.output_root / paths.image_subdir;
  if (spec.variants_per_image > 0) std::filesystem::create_directories(image_dir);

  AugmentResult result;
  for (std::size_t index = 0; index < manifest.size(); ++index) {
    const ManifestEntry& entry = manifest[index];
    const auto source = resolve(paths.source_root, entry.path);

    ManifestEntry kept = entry;
    kept.path = relocate(entry.path, paths.source_root, paths.output_root);
    if (!kept.provenance.is_raw()) {
      kept.provenance.parent =
          relocate(kept.provenance.parent, paths.source_root, paths.output_root);
    }
    if (!entry.provenance.is_raw() || spec.variants_per_image == 0) {
      result.manifest.add(std::move(kept));
      continue;
    }

    ImageBuffer img;
    try {
      img = load_image(source);
    } catch (const DataError& e) {
      result.failures.push_back({entry.path, e.what()});
      continue;
    }

    std::vector<Annotation> labels;
    for (const auto& a : entry.annotations) {
      const bool seen = std::any_of(labels.begin(), labels.end(), [&](const auto& l) {
        return l.class_id == a.class_id;
      });
      if (!seen) labels.push_back({a.class_id, std::nullopt});
    }

    const std::string parent = kept.path;
    result.manifest.add(std::move(kept));
    const std::string stem = source.stem().string();
    for (std::size_t v = 0; v < spec.variants_per_image; ++v) {
      std::mt19937_64 rng(derive_seed(spec.seed, index, v));
      Provenance prov;
      prov.kind = Provenance::Kind::kAugmented;
      prov.rotation_degrees = draw(rng, spec.rotation_degrees);
      prov.exposure_gain = draw(rng, spec.exposure_gain);
      prov.noise_rate = spec.noise_rate;
      prov.noise_seed = rng();
      prov.parent = parent;

      ImageBuffer out = rotate(img, prov.rotation_degrees);
      out = adjust_exposure(out, prov.exposure_gain);
      out = inject_noise(out, prov.noise_rate, prov.noise_seed);

      const auto name = paths.image_subdir / (stem + "_e" + std::to_string(index) +
                                              "_v" + std::to_string(v) + ".ppm");
      save_image(out, paths.output_root / name);
      result.manifest.add({name.lexically_normal().generic_string(), labels, prov});
    }
  }
  return result;
}

DatasetSplit split(const DatasetManifest& manifest, const SplitCounts& counts,
                   std::uint64_t seed) {
  const std::size_t total = counts.train + counts.val + counts.test;
  if (total != manifest.size()) {
    throw ValidationError("split counts " + std::to_string(counts.train) + "," +
                          std::to_string(counts.val) + "," +
                          std::to_string(counts.test) + " sum to " +
                          std::to_string(total) + " but manifest has " +
                          std::to_string(manifest.size()) + " entries");
  }
  std::vector<std::size_t> order(manifest.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const ManifestEntry& e = manifest[order[i]];
    if (i < counts.train) {
      out.train.add(e);
    } else if (i < counts.train + counts.val) {
      out.val.add(e);
    } else {
      out.test.add(e);
    }
  }
  return out;
}

}  // namespace smokenet
