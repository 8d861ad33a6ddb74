#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "jepa3d/cloud_io.hpp"
#include "jepa3d/config.hpp"
#include "jepa3d/synthetic.hpp"

namespace jepa3d {

// Directory layout: one subdirectory per class, cloud files inside. Ids are
// "<class>/<file stem>".
inline Dataset load_directory_dataset(const std::string& root, std::size_t points, std::uint64_t seed,
                                      const WarningSink& warn = warn_stderr) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("data.path '" + root + "' is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DataError("data.path '" + root + "' has no class subdirectories");
  std::vector<PointCloud> all;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    names.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[c]))
      if (e.is_regular_file() && is_cloud_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("class directory '" + class_dirs[c].string() + "' has no cloud files");
    for (const auto& f : files) {
      Rng rng(derive_seed(seed, {hash_string(f.string())}));
      PointCloud pc = load_cloud(f.string(), points, rng, warn);
      pc.label = static_cast<int>(c);
      pc.id = names.back() + "/" + f.stem().string();
      all.push_back(std::move(pc));
    }
  }
  return split_dataset(std::move(all), std::move(names), seed);
}

inline Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.data.source == "directory") return load_directory_dataset(cfg.data.path, cfg.points_per_cloud, cfg.data.seed);
  SyntheticShapeSpec spec;
  spec.per_class = cfg.data.per_class;
  spec.points = cfg.points_per_cloud;
  spec.jitter = cfg.data.jitter;
  spec.anisotropy = cfg.data.anisotropy;
  spec.occlusion = cfg.data.occlusion;
  spec.outliers = cfg.data.outliers;
  return generate_synthetic(spec, cfg.data.seed);
}

}  // namespace jepa3d
