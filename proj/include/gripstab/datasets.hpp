#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gripstab/core.hpp"

namespace gripstab {

inline constexpr int kSchemaVersion = 1;

// On-disk layout under a dataset root:
//   images/<point_id>_left.png, images/<point_id>_right.png
//   points.ndrec   one record per line, fields in fixed order
//   traces.ndrec   optional, raw force traces keyed by point_id
//   manifest       JSON document
struct DatasetManifest {
  std::string name;
  std::vector<std::string> points;
  std::vector<std::string> object_classes;
  LabelingConfig labeling;
  std::uint64_t creation_seed = 0;
  int schema_version = kSchemaVersion;
  int image_width = 0;
  int image_height = 0;
};

struct DatasetInfo {
  std::string name = "dataset";
  LabelingConfig labeling;
  std::uint64_t creation_seed = 0;
};

// Writes images, records and manifest. traces, when given, must align with points.
DatasetManifest save_dataset(std::span<const DataPoint> points, const std::filesystem::path& root,
                             const DatasetInfo& info, std::span<const ForceTrace> traces = {});

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<DataPoint> points;
};

DatasetManifest load_manifest(const std::filesystem::path& root);
LoadedDataset load_dataset(const std::filesystem::path& root);

bool has_traces(const std::filesystem::path& root);
// Traces in manifest point order.
std::vector<ForceTrace> load_traces(const std::filesystem::path& root);

// Rewrites points.ndrec and the manifest's labeling section (used when relabelling).
void rewrite_records(std::span<const DataPoint> points, const std::filesystem::path& root,
                     const LabelingConfig& labeling);

// One line of points.ndrec.
std::string format_record(const DataPoint& d);
DataPoint parse_record(const std::string& line);

struct TrainValidationSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Whole classes go to validation; everything else to training.
TrainValidationSplit split_train_validation(std::span<const DataPoint> points,
                                            std::span<const std::string> held_out_classes);

struct FoldAssignment {
  int n_folds = 0;
  std::vector<int> assignment;

  std::vector<std::size_t> members(int fold) const;
  std::vector<std::size_t> complement(int fold) const;
};

inline constexpr int kDefaultFolds = 10;

// Seeded shuffle followed by round-robin assignment.
FoldAssignment make_folds(std::size_t n_points, int n_folds, std::uint64_t seed);
FoldAssignment make_folds(const DatasetManifest& dataset, int n_folds, std::uint64_t seed);

template <typename T>
std::vector<T> select(std::span<const T> items, std::span<const std::size_t> indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(items[i]);
  return out;
}

// Split and fold bookkeeping persisted next to the dataset (split.json).
struct SplitFile {
  std::vector<std::string> held_out_classes;
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
  int n_folds = kDefaultFolds;
  std::uint64_t fold_seed = 0;
  std::vector<int> fold_of_train;
};

void save_split(const SplitFile& split, const std::filesystem::path& path);
SplitFile load_split(const std::filesystem::path& path);

}  // namespace gripstab
