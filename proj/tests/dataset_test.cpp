#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "smokenet/dataset.hpp"
#include "smokenet/errors.hpp"
#include "smokenet/image.hpp"
#include "support/fixtures.hpp"

using namespace smokenet;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

DatasetManifest plain_manifest(std::size_t n) {
  DatasetManifest m;
  for (std::size_t i = 0; i < n; ++i) {
    m.add({"img" + std::to_string(i) + ".ppm", {{static_cast<int>(i % 2), std::nullopt}}, {}});
  }
  return m;
}

std::set<std::string> paths(const DatasetManifest& m) {
  std::set<std::string> out;
  for (const auto& e : m.entries()) out.insert(e.path);
  return out;
}

}  // namespace

TEST(Manifest, RejectsDuplicatesAndEmptyAnnotations) {
  DatasetManifest m;
  m.add({"a.ppm", {{0, std::nullopt}}, {}});
  EXPECT_THROW(m.add({"a.ppm", {{1, std::nullopt}}, {}}), ValidationError);
  EXPECT_THROW(m.add({"b.ppm", {}, {}}), ValidationError);
  EXPECT_THROW(m.add({"c\td.ppm", {{0, std::nullopt}}, {}}), ValidationError);
  EXPECT_EQ(m.size(), 1u);
}

TEST(Manifest, TextRoundTrip) {
  DatasetManifest m;
  m.add({"images/a b.ppm", {{0, Box{0.5, 0.5, 0.25, 0.125}}, {1, Box{0.1, 0.2, 0.1, 0.1}}}, {}});
  Provenance p;
  p.kind = Provenance::Kind::kAugmented;
  p.rotation_degrees = -7.25;
  p.exposure_gain = 1.3333333333333333;
  p.noise_rate = 0.001;
  p.noise_seed = 18446744073709551615ull;
  p.parent = "images/a b.ppm";
  m.add({"aug/a_v0.ppm", {{0, std::nullopt}}, p});
  const std::string text = format_manifest(m);
  EXPECT_EQ(parse_manifest(text), m);
  EXPECT_EQ(format_manifest(parse_manifest(text)), text);
  EXPECT_NO_THROW(parse_manifest(text).check_lineage());
}

TEST(Manifest, ParseErrorsNameTheLine) {
  try {
    parse_manifest("a.ppm\t0\t\traw\nb.ppm\tx\t\traw\n", "list.tsv");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("list.tsv:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_manifest("a.ppm\t0\t2,0.5,0.1,0.1\traw\n"), DataError);
  EXPECT_THROW(parse_manifest("a.ppm\n"), DataError);
  EXPECT_THROW(parse_manifest("a.ppm\t0\t\tmystery\n"), DataError);
  EXPECT_THROW(load_manifest("/nonexistent/manifest.tsv"), DataError);
}

TEST(Manifest, CommentsBlankLinesAndCrlf) {
  const DatasetManifest m = parse_manifest("# header\n\na.ppm\t1\t\traw\r\nb.ppm\t0\traw\n");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].label(), 1);
  EXPECT_TRUE(m[1].provenance.is_raw());
}

TEST(Manifest, LineageCheckFindsOrphans) {
  Provenance p;
  p.kind = Provenance::Kind::kAugmented;
  p.parent = "gone.ppm";
  DatasetManifest m;
  m.add({"x.ppm", {{0, std::nullopt}}, p});
  EXPECT_THROW(m.check_lineage(), ValidationError);
}

TEST(Yolo, RoundTripAndErrors) {
  const std::vector<Annotation> boxes{{0, Box{0.5, 0.5, 0.2, 0.3}}, {1, Box{0.1, 0.9, 0.05, 0.05}}};
  EXPECT_EQ(parse_yolo_labels(format_yolo_labels(boxes)), boxes);
  EXPECT_THROW(parse_yolo_labels("0 0.5 0.5 0.2\n"), DataError);
  EXPECT_THROW(parse_yolo_labels("0 0.5 0.5 0 0.2\n"), DataError);
}

TEST(Augment, CountsAndLineage) {
  const fs::path dir = fixtures::scratch_dir("augment_counts");
  const DatasetManifest input = fixtures::placeholder_dataset(dir, 10);
  AugmentSpec spec;
  spec.variants_per_image = 2;
  spec.seed = 5;
  const AugmentResult r = augment_dataset(input, spec, {dir, dir, "aug"});
  EXPECT_TRUE(r.failures.empty());
  ASSERT_EQ(r.manifest.size(), 30u);
  EXPECT_NO_THROW(r.manifest.check_lineage());
  std::size_t augmented = 0;
  for (const auto& e : r.manifest.entries()) {
    if (e.provenance.is_raw()) continue;
    ++augmented;
    EXPECT_TRUE(fs::exists(dir / e.path)) << e.path;
    for (const auto& a : e.annotations) EXPECT_FALSE(a.box.has_value());
    EXPECT_GE(e.provenance.rotation_degrees, -15.0);
    EXPECT_LE(e.provenance.rotation_degrees, 15.0);
    EXPECT_GE(e.provenance.exposure_gain, 0.5);
    EXPECT_LE(e.provenance.exposure_gain, 1.5);
    EXPECT_EQ(e.provenance.noise_rate, 0.001);
  }
  EXPECT_EQ(augmented, 20u);
}

TEST(Augment, ZeroVariantsIsIdentity) {
  const fs::path dir = fixtures::scratch_dir("augment_zero");
  const DatasetManifest input = fixtures::placeholder_dataset(dir, 6);
  AugmentSpec spec;
  spec.variants_per_image = 0;
  EXPECT_EQ(augment_dataset(input, spec, {dir, dir, "aug"}).manifest, input);
}

TEST(Augment, SameSeedGivesIdenticalBytes) {
  const fs::path a = fixtures::scratch_dir("augment_seed_a");
  const fs::path b = fixtures::scratch_dir("augment_seed_b");
  const DatasetManifest ma = fixtures::placeholder_dataset(a, 4, 16, 3);
  const DatasetManifest mb = fixtures::placeholder_dataset(b, 4, 16, 3);
  AugmentSpec spec;
  spec.seed = 99;
  spec.noise_rate = 0.05;
  const AugmentResult ra = augment_dataset(ma, spec, {a, a, "aug"});
  const AugmentResult rb = augment_dataset(mb, spec, {b, b, "aug"});
  EXPECT_EQ(format_manifest(ra.manifest), format_manifest(rb.manifest));
  for (const auto& e : ra.manifest.entries()) {
    EXPECT_EQ(slurp(a / e.path), slurp(b / e.path)) << e.path;
  }
  spec.seed = 100;
  const AugmentResult rc = augment_dataset(mb, spec, {b, b, "aug"});
  EXPECT_NE(format_manifest(ra.manifest), format_manifest(rc.manifest));
}

TEST(Augment, UnreadableEntryIsReportedAndSkipped) {
  const fs::path dir = fixtures::scratch_dir("augment_missing");
  DatasetManifest input = fixtures::placeholder_dataset(dir, 3);
  input.add({"images/missing.ppm", {{1, std::nullopt}}, {}});
  const AugmentResult r = augment_dataset(input, AugmentSpec{}, {dir, dir, "aug"});
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].path, "images/missing.ppm");
  EXPECT_EQ(r.manifest.size(), 9u);
  EXPECT_FALSE(r.manifest.contains("images/missing.ppm"));
}

TEST(Augment, RejectsBadSpec) {
  AugmentSpec spec;
  spec.exposure_gain = {1.5, 0.5};
  EXPECT_THROW(spec.validate(), ValidationError);
  spec = {};
  spec.noise_rate = 2.0;
  EXPECT_THROW(spec.validate(), ValidationError);
}

TEST(Split, ExactSizesDisjointAndCovering) {
  const DatasetManifest m = plain_manifest(100);
  const DatasetSplit s = split(m, {70, 20, 10}, 3);
  EXPECT_EQ(s.train.size(), 70u);
  EXPECT_EQ(s.val.size(), 20u);
  EXPECT_EQ(s.test.size(), 10u);
  std::set<std::string> all = paths(s.train);
  for (const auto& p : paths(s.val)) EXPECT_TRUE(all.insert(p).second);
  for (const auto& p : paths(s.test)) EXPECT_TRUE(all.insert(p).second);
  EXPECT_EQ(all, paths(m));
}

TEST(Split, DegenerateAndDeterministic) {
  const DatasetManifest m = plain_manifest(12);
  const DatasetSplit s = split(m, {12, 0, 0}, 1);
  EXPECT_EQ(s.train.size(), 12u);
  EXPECT_TRUE(s.val.empty());
  EXPECT_TRUE(s.test.empty());
  EXPECT_EQ(split(m, {6, 3, 3}, 8).train, split(m, {6, 3, 3}, 8).train);
  EXPECT_NE(split(m, {6, 3, 3}, 8).train, split(m, {6, 3, 3}, 9).train);
}

TEST(Split, CountsMustSumToSize) {
  try {
    split(plain_manifest(10), {5, 3, 1}, 0);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("sum to 9"), std::string::npos) << e.what();
  }
}
