#pragma once

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "smokenet/dataset.hpp"
#include "smokenet/image.hpp"

namespace fixtures {

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("smokenet_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// `count` random size x size PPMs under dir/images plus a manifest whose
// paths are relative to dir. Labels alternate; every third image also gets a
// second, boxed annotation.
inline smokenet::DatasetManifest placeholder_dataset(const std::filesystem::path& dir,
                                                     std::size_t count, std::size_t size = 8,
                                                     std::uint64_t seed = 1) {
  std::filesystem::create_directories(dir / "images");
  std::mt19937_64 rng(seed);
  smokenet::DatasetManifest m;
  for (std::size_t i = 0; i < count; ++i) {
    smokenet::ImageBuffer img(size, size);
    for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng() & 0xFF);
    char name[32];
    std::snprintf(name, sizeof name, "images/img_%05zu.ppm", i);
    smokenet::save_image(img, dir / name);
    smokenet::ManifestEntry e;
    e.path = name;
    e.annotations.push_back({static_cast<int>(i % 2), smokenet::Box{0.5, 0.5, 0.4, 0.6}});
    if (i % 3 == 0) e.annotations.push_back({0, smokenet::Box{0.25, 0.25, 0.1, 0.2}});
    m.add(std::move(e));
  }
  return m;
}

}  // namespace fixtures
