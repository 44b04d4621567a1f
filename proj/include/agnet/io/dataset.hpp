#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "agnet/error.hpp"
#include "agnet/io/image_io.hpp"
#include "agnet/synthetic.hpp"
#include "agnet/training/trainer.hpp"

namespace agnet::io {

struct DatasetItem {
  std::string path;  // relative to the dataset root
  int label = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> classes;  // lexicographic
  std::vector<DatasetItem> train;
  std::vector<DatasetItem> test;

  std::size_t num_classes() const { return classes.size(); }
  const std::vector<DatasetItem>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "test") return test;
    throw DatasetError("unknown split '" + name + "' (expected train or test)");
  }
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline std::vector<std::string> class_dirs(const fs::path& split_dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::map<std::string, std::string> folded;
  for (const auto& n : names) {
    const auto [it, fresh] = folded.emplace(lower(n), n);
    if (!fresh) {
      throw DatasetError("duplicate class name in " + split_dir.string() + ": '" + it->second + "' and '" + n + "'");
    }
  }
  return names;
}

}  // namespace detail

/// Scans root/{train,test}/<class>/*.{png,ppm}; every file is decoded once
/// to validate it.
inline DatasetManifest ingest_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root does not exist: " + root.string());
  DatasetManifest m;
  m.root = root;
  for (const char* split : {"train", "test"}) {
    if (!fs::is_directory(root / split)) {
      throw DatasetError("missing '" + std::string(split) + "' directory: " + (root / split).string());
    }
  }
  m.classes = detail::class_dirs(root / "train");
  if (m.classes.size() < 2) throw DatasetError("at least two class directories are required under " + (root / "train").string());
  if (detail::class_dirs(root / "test") != m.classes) {
    throw DatasetError("class directories of " + (root / "test").string() + " differ from those of " +
                       (root / "train").string());
  }
  for (const char* split : {"train", "test"}) {
    auto& items = std::string(split) == "train" ? m.train : m.test;
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
      const fs::path dir = root / split / m.classes[c];
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = lower_extension(e.path());
        if (ext == ".jpg" || ext == ".jpeg") throw DatasetError("JPEG input is not supported: " + e.path().string());
        if (is_image_path(e.path())) files.push_back(e.path());
      }
      if (files.empty()) throw DatasetError("empty class directory: " + dir.string());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        try {
          (void)read_image(f);
        } catch (const IoError& e) {
          throw DatasetError("undecodable image " + f.string() + ": " + e.what());
        }
        items.push_back({fs::relative(f, root).generic_string(), static_cast<int>(c)});
      }
    }
  }
  return m;
}

/// Decodes a split, resizing to image_size × image_size where needed.
inline std::vector<LabeledImage> load_split(const DatasetManifest& m, const std::string& split, int image_size) {
  std::vector<LabeledImage> out;
  for (const DatasetItem& item : m.split(split)) {
    RgbImage img = read_image(m.root / item.path);
    if (img.width != image_size || img.height != image_size) img = resize(img, image_size, image_size);
    out.push_back({std::move(img), item.label, item.path});
  }
  return out;
}

/// Writes a generated split in the ingest layout as PNG files.
inline void write_dataset(const fs::path& root, const SyntheticSplit& data) {
  for (const char* split : {"train", "test"}) {
    const auto& items = std::string(split) == "train" ? data.train : data.test;
    for (const auto& name : data.class_names) fs::create_directories(root / split / name);
    for (const auto& item : items) {
      write_image(root / split / data.class_names[static_cast<std::size_t>(item.label)] / (item.id + ".png"), item.image);
    }
  }
}

}  // namespace agnet::io
