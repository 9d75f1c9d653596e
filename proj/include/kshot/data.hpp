#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <vector>

namespace kshot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ClassId = std::int64_t;

/// Feature vectors x = phi(u), one row per example, with dense class labels.
class FeatureTable {
 public:
  /// Throws ConfigError on shape mismatch, empty input or non-finite entries.
  FeatureTable(Matrix features, std::vector<ClassId> labels);

  const Matrix& features() const noexcept { return features_; }
  const std::vector<ClassId>& labels() const noexcept { return labels_; }
  /// Sorted distinct labels.
  const std::vector<ClassId>& class_ids() const noexcept { return class_ids_; }

  Eigen::Index rows() const noexcept { return features_.rows(); }
  Eigen::Index dim() const noexcept { return features_.cols(); }

  /// Row indices carrying `label`, ascending.
  std::vector<Eigen::Index> rows_of(ClassId label) const;
  /// New table made of the given rows, in the given order.
  FeatureTable subset(std::span<const Eigen::Index> row_indices) const;
  /// Copy with a constant-1 column appended (bias folding).
  FeatureTable with_bias_column() const;

  bool operator==(const FeatureTable& other) const;

 private:
  Matrix features_;
  std::vector<ClassId> labels_;
  std::vector<ClassId> class_ids_;
};

/// C x p softmax weight rows with the class id of each row.
class WeightMatrix {
 public:
  WeightMatrix(Matrix rows, std::vector<ClassId> class_ids);

  const Matrix& rows() const noexcept { return rows_; }
  const std::vector<ClassId>& class_ids() const noexcept { return class_ids_; }
  Eigen::Index num_classes() const noexcept { return rows_.rows(); }
  Eigen::Index dim() const noexcept { return rows_.cols(); }

  /// Rows at the given positions, in that order.
  WeightMatrix subset(std::span<const Eigen::Index> positions) const;

  bool operator==(const WeightMatrix& other) const;

 private:
  Matrix rows_;
  std::vector<ClassId> class_ids_;
};

/// Disjoint, non-empty base/novel class sets.
class ClassSplit {
 public:
  ClassSplit(std::set<ClassId> base_ids, std::set<ClassId> novel_ids);

  const std::set<ClassId>& base_ids() const noexcept { return base_; }
  const std::set<ClassId>& novel_ids() const noexcept { return novel_; }

 private:
  std::set<ClassId> base_;
  std::set<ClassId> novel_;
};

struct SplitTables {
  FeatureTable base;
  FeatureTable novel;
};

/// Partition rows by class membership, preserving row order.
SplitTables split_classes(const FeatureTable& table, const ClassSplit& split);

/// One way-way k-shot task. Targets index into class_ids (0..way-1).
struct Episode {
  int way = 0;
  int k = 0;
  int n_query = 0;
  std::vector<ClassId> class_ids;  // sorted ascending
  FeatureTable support;
  FeatureTable query;
  std::vector<int> support_targets;
  std::vector<int> query_targets;
  std::vector<Eigen::Index> support_rows;  // indices into the source table
  std::vector<Eigen::Index> query_rows;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Seeded episode draw: classes uniformly without replacement, then per class
/// a uniform ordering of its rows; the first k go to support, the next
/// n_query to query. Pure function of (novel, way, k, n_query, seed, stream).
Episode sample_episode(const FeatureTable& novel, int way, int k, int n_query,
                       std::uint64_t seed, std::uint64_t stream = 0);

/// CSV with header `label,f0,f1,...`.
FeatureTable read_csv_table(const std::filesystem::path& path);

}  // namespace kshot
