#include "smokenet/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <set>

#include "json.hpp"
#include "smokenet/dataset.hpp"
#include "smokenet/errors.hpp"
#include "text_util.hpp"

namespace smokenet {

using detail::format_double;
using detail::parse_double;
using detail::parse_int;

double iou(const Box& a, const Box& b) {
  const double ax0 = a.x_min(), ax1 = a.x_max(), ay0 = a.y_min(), ay1 = a.y_max();
  const double bx0 = b.x_min(), bx1 = b.x_max(), by0 = b.y_min(), by1 = b.y_max();
  const double area_a = std::max(0.0, ax1 - ax0) * std::max(0.0, ay1 - ay0);
  const double area_b = std::max(0.0, bx1 - bx0) * std::max(0.0, by1 - by0);
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double ih = std::min(ay1, by1) - std::max(ay0, by0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruth> ground_truths,
                             double iou_threshold) {
  MatchResult out;
  out.is_tp.assign(detections.size(), false);
  out.rank_order.resize(detections.size());
  std::iota(out.rank_order.begin(), out.rank_order.end(), std::size_t{0});
  std::stable_sort(out.rank_order.begin(), out.rank_order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return detections[a].confidence > detections[b].confidence;
                   });

  std::map<std::pair<std::string, int>, std::vector<std::size_t>> by_key;
  for (std::size_t g = 0; g < ground_truths.size(); ++g) {
    by_key[{ground_truths[g].image_id, ground_truths[g].class_id}].push_back(g);
  }
  std::vector<bool> matched(ground_truths.size(), false);

  for (std::size_t d : out.rank_order) {
    const Detection& det = detections[d];
    auto it = by_key.find({det.image_id, det.class_id});
    double best = -1.0;
    std::size_t best_g = 0;
    if (it != by_key.end()) {
      for (std::size_t g : it->second) {
        if (matched[g]) continue;
        const double v = iou(det.box, ground_truths[g].box);
        if (v > best) {
          best = v;
          best_g = g;
        }
      }
    }
    if (best >= iou_threshold && best >= 0.0) {
      matched[best_g] = true;
      out.is_tp[d] = true;
      ++out.counts.tp;
    } else {
      ++out.counts.fp;
    }
  }
  out.counts.fn = ground_truths.size() - out.counts.tp;
  return out;
}

PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c) {
  PrecisionRecallF1 r;
  if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

namespace {

void require_paired(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw ValidationError("label sequences differ in length: " +
                          std::to_string(predicted.size()) + " predicted vs " +
                          std::to_string(truth.size()) + " true");
  }
  if (truth.empty()) throw ValidationError("label sequences are empty");
}

}  // namespace

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  require_paired(predicted, truth);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) agree += predicted[i] == truth[i];
  return static_cast<double>(agree) / static_cast<double>(truth.size());
}

ConfusionCounts classification_counts(std::span<const int> predicted,
                                      std::span<const int> truth,
                                      int positive_class) {
  require_paired(predicted, truth);
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == positive_class;
    const bool t = truth[i] == positive_class;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double average_precision(const std::vector<bool>& ranked_is_tp, std::size_t num_gt) {
  if (num_gt == 0 || ranked_is_tp.empty()) return 0.0;
  const std::size_t n = ranked_is_tp.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_is_tp[i];
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  // Precision envelope: best precision at any recall >= this point's.
  for (std::size_t i = n - 1; i-- > 0;) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return std::clamp(ap, 0.0, 1.0);
}

MapResult map50(std::span<const Detection> detections,
                std::span<const GroundTruth> ground_truths,
                std::span<const int> classes) {
  std::set<int> class_set(classes.begin(), classes.end());
  if (class_set.empty()) {
    for (const auto& g : ground_truths) class_set.insert(g.class_id);
    for (const auto& d : detections) class_set.insert(d.class_id);
  }
  MapResult out;
  double sum = 0.0;
  for (int cls : class_set) {
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
    for (const auto& d : detections) {
      if (d.class_id == cls) dets.push_back(d);
    }
    for (const auto& g : ground_truths) {
      if (g.class_id == cls) gts.push_back(g);
    }
    if (gts.empty()) continue;
    const MatchResult m = match_detections(dets, gts, 0.5);
    std::vector<bool> ranked;
    ranked.reserve(dets.size());
    for (std::size_t idx : m.rank_order) ranked.push_back(m.is_tp[idx]);
    ClassAp ap{cls, gts.size(), dets.size(), average_precision(ranked, gts.size())};
    sum += ap.ap;
    out.per_class.push_back(ap);
  }
  if (out.per_class.empty()) {
    throw ValidationError("mAP@50 undefined: no class has ground truth");
  }
  out.map50 = sum / static_cast<double>(out.per_class.size());
  return out;
}

MetricsReport detection_report(std::string model,
                               std::span<const Detection> detections,
                               std::span<const GroundTruth> ground_truths,
                               std::span<const int> classes) {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  std::set<int> allowed(classes.begin(), classes.end());
  for (const auto& d : detections) {
    if (allowed.empty() || allowed.contains(d.class_id)) dets.push_back(d);
  }
  for (const auto& g : ground_truths) {
    if (allowed.empty() || allowed.contains(g.class_id)) gts.push_back(g);
  }
  const MatchResult m = match_detections(dets, gts, 0.5);
  const PrecisionRecallF1 prf = precision_recall_f1(m.counts);
  const MapResult map = map50(dets, gts, classes);

  MetricsReport r;
  r.model = std::move(model);
  r.precision = prf.precision;
  r.recall = prf.recall;
  r.f1 = prf.f1;
  r.map50 = map.map50;
  for (const auto& c : map.per_class) r.per_class_ap[c.class_id] = c.ap;
  return r;
}

MetricsReport classification_report(std::string model,
                                     std::span<const int> predicted,
                                     std::span<const int> truth,
                                     int positive_class) {
  MetricsReport r;
  r.model = std::move(model);
  r.accuracy = accuracy(predicted, truth);
  const PrecisionRecallF1 prf =
      precision_recall_f1(classification_counts(predicted, truth, positive_class));
  r.precision = prf.precision;
  r.recall = prf.recall;
  r.f1 = prf.f1;
  return r;
}

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v * 100.0);
  return buf;
}

std::string percent(const std::optional<double>& v) {
  return v ? percent(*v) : std::string("-");
}

}  // namespace

std::string render_table1(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ValidationError("render_table1 needs at least one report");
  std::string out = "Model Acc Prec Rec F1 mAP@50\n";
  for (const auto& r : reports) {
    if (r.model.empty()) throw ValidationError("report model name is empty");
    if (std::any_of(r.model.begin(), r.model.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      throw ValidationError("report model name contains whitespace: " + r.model);
    }
    out += r.model + ' ' + percent(r.accuracy) + ' ' + percent(r.precision) + ' ' +
           percent(r.recall) + ' ' + percent(r.f1) + ' ' + percent(r.map50) + '\n';
  }
  return out;
}

std::string report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr);
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["map50"] = r.map50 ? nlohmann::json(*r.map50) : nlohmann::json(nullptr);
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, ap] : r.per_class_ap) per_class[std::to_string(cls)] = ap;
  j["per_class_ap"] = per_class;
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.model = j.at("model").get<std::string>();
    if (!j.at("accuracy").is_null()) r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    if (!j.at("map50").is_null()) r.map50 = j.at("map50").get<double>();
    for (const auto& [key, value] : j.at("per_class_ap").items()) {
      int cls = 0;
      if (!parse_int(std::string_view(key), cls)) {
        throw DataError("per_class_ap key is not a class id: " + key);
      }
      r.per_class_ap[cls] = value.get<double>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics report: ") + e.what());
  }
}

std::vector<Detection> parse_detections(std::string_view text,
                                        const std::string& origin) {
  std::vector<Detection> out;
  std::size_t line_no = 0;
  for (std::string_view raw : detail::split(text, '\n')) {
    ++line_no;
    const auto f = detail::split_ws(detail::strip_cr(raw));
    if (f.empty() || f[0].front() == '#') continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    Detection d;
    if (f.size() != 7 || !parse_int(f[1], d.class_id) ||
        !parse_double(f[2], d.confidence) || !parse_double(f[3], d.box.cx) ||
        !parse_double(f[4], d.box.cy) || !parse_double(f[5], d.box.w) ||
        !parse_double(f[6], d.box.h)) {
      throw DataError(where + ": expected \"image_id class_id confidence cx cy w h\"");
    }
    d.image_id = std::string(f[0]);
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
      throw DataError(where + ": confidence outside [0, 1]");
    }
    if (!is_valid(d.box)) throw DataError(where + ": box outside normalized bounds");
    out.push_back(std::move(d));
  }
  return out;
}

std::string format_detections(std::span<const Detection> detections) {
  std::string out;
  for (const auto& d : detections) {
    out += d.image_id + ' ' + std::to_string(d.class_id) + ' ' +
           format_double(d.confidence) + ' ' + format_double(d.box.cx) + ' ' +
           format_double(d.box.cy) + ' ' + format_double(d.box.w) + ' ' +
           format_double(d.box.h) + '\n';
  }
  return out;
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  return parse_detections(detail::read_text_file(path), path.string());
}

std::vector<GroundTruth> parse_ground_truth(std::string_view text,
                                            const std::string& origin) {
  std::vector<GroundTruth> out;
  std::size_t line_no = 0;
  for (std::string_view raw : detail::split(text, '\n')) {
    ++line_no;
    const auto f = detail::split_ws(detail::strip_cr(raw));
    if (f.empty() || f[0].front() == '#') continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    GroundTruth g;
    if (f.size() != 6 || !parse_int(f[1], g.class_id) ||
        !parse_double(f[2], g.box.cx) || !parse_double(f[3], g.box.cy) ||
        !parse_double(f[4], g.box.w) || !parse_double(f[5], g.box.h)) {
      throw DataError(where + ": expected \"image_id class_id cx cy w h\"");
    }
    g.image_id = std::string(f[0]);
    if (!is_valid(g.box)) throw DataError(where + ": box outside normalized bounds");
    out.push_back(std::move(g));
  }
  return out;
}

std::string format_ground_truth(std::span<const GroundTruth> gts) {
  std::string out;
  for (const auto& g : gts) {
    out += g.image_id + ' ' + std::to_string(g.class_id) + ' ' +
           format_double(g.box.cx) + ' ' + format_double(g.box.cy) + ' ' +
           format_double(g.box.w) + ' ' + format_double(g.box.h) + '\n';
  }
  return out;
}

std::vector<GroundTruth> load_ground_truth(const std::filesystem::path& path) {
  if (!std::filesystem::is_directory(path)) {
    return parse_ground_truth(detail::read_text_file(path), path.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<GroundTruth> out;
  for (const auto& file : files) {
    const std::string id = file.stem().string();
    for (const Annotation& a :
         parse_yolo_labels(detail::read_text_file(file), file.string())) {
      out.push_back({id, a.class_id, *a.box});
    }
  }
  return out;
}

}  // namespace smokenet
