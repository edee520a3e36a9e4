#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "taskcast/features.hpp"

namespace taskcast {

// Sequences sharing one label space. Null classes have already been removed
// and labels re-indexed to 0..C-1.
struct Dataset {
  std::vector<std::string> class_names;
  std::size_t feature_dim = 0;
  std::vector<LabeledSequence> sequences;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  // Sequences whose split matches; an empty split selects everything.
  Dataset subset(const std::string& split) const;
};

struct ManifestEntry {
  std::string feature_file;  // relative to the manifest directory
  std::string label_file;
  std::string sequence_id;
  std::string split;
};

struct DatasetManifest {
  std::filesystem::path directory;
  std::size_t feature_dim = 0;
  std::vector<std::string> class_names;
  std::vector<int> null_class_ids;
  std::vector<ManifestEntry> entries;
};

inline constexpr const char* kManifestName = "manifest.json";

// Deletes null frames (features and labels in lockstep), drops null classes
// from the label space and re-indexes. Sequences left with < 2 frames or < 2
// distinct actions are skipped with a warning.
Dataset strip_null_classes(std::vector<LabeledSequence> sequences,
                           const std::vector<std::string>& class_names,
                           const std::vector<int>& null_class_ids,
                           std::vector<std::string>* warnings = nullptr);

// Feature file: u32 rows, u32 cols, then rows*cols f32, all little-endian.
void write_feature_file(const std::filesystem::path& path, const Matrix& features);
Matrix read_feature_file(const std::filesystem::path& path);
void write_label_file(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> read_label_file(const std::filesystem::path& path);

DatasetManifest read_manifest(const std::filesystem::path& manifest_or_dir);
void write_manifest(const DatasetManifest& manifest);

Dataset load_dataset(const DatasetManifest& manifest, std::vector<std::string>* warnings = nullptr);

// Writes <id>.feat / <id>.labels per sequence plus manifest.json.
DatasetManifest save_dataset(const std::vector<LabeledSequence>& sequences,
                             const std::vector<std::string>& class_names,
                             const std::vector<int>& null_class_ids,
                             const std::filesystem::path& directory);

// Throws DomainError when a sequence id occurs in both datasets.
void require_disjoint(const Dataset& train, const Dataset& test);

// Per-dimension standardisation fitted on a training split.
struct Standardizer {
  Vector mean;
  Vector scale;  // 1 / std, or 1 where std is zero

  static Standardizer fit(const Dataset& train);
  void apply(Dataset& data) const;
};

}  // namespace taskcast
