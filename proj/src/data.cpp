#include "kshot/data.hpp"

#include "kshot/error.hpp"
#include "kshot/rng.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

namespace kshot {

namespace {

std::vector<ClassId> distinct_sorted(std::vector<ClassId> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

}  // namespace

FeatureTable::FeatureTable(Matrix features, std::vector<ClassId> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (features_.rows() < 1 || features_.cols() < 1)
    throw ConfigError("feature table must have at least one row and one column");
  if (static_cast<Eigen::Index>(labels_.size()) != features_.rows())
    throw ConfigError("feature table has " + std::to_string(features_.rows()) + " rows but " +
                      std::to_string(labels_.size()) + " labels");
  if (!features_.allFinite()) throw ConfigError("feature table contains non-finite entries");
  class_ids_ = distinct_sorted(labels_);
  if (class_ids_.front() < 0) throw ConfigError("labels must be non-negative");
}

std::vector<Eigen::Index> FeatureTable::rows_of(ClassId label) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

FeatureTable FeatureTable::subset(std::span<const Eigen::Index> row_indices) const {
  Matrix out(static_cast<Eigen::Index>(row_indices.size()), dim());
  std::vector<ClassId> labels;
  labels.reserve(row_indices.size());
  for (std::size_t i = 0; i < row_indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = features_.row(row_indices[i]);
    labels.push_back(labels_[static_cast<std::size_t>(row_indices[i])]);
  }
  return FeatureTable(std::move(out), std::move(labels));
}

FeatureTable FeatureTable::with_bias_column() const {
  Matrix out(rows(), dim() + 1);
  out.leftCols(dim()) = features_;
  out.col(dim()).setOnes();
  return FeatureTable(std::move(out), labels_);
}

bool FeatureTable::operator==(const FeatureTable& other) const {
  return labels_ == other.labels_ && features_.rows() == other.features_.rows() &&
         features_.cols() == other.features_.cols() && features_ == other.features_;
}

WeightMatrix::WeightMatrix(Matrix rows, std::vector<ClassId> class_ids)
    : rows_(std::move(rows)), class_ids_(std::move(class_ids)) {
  if (rows_.rows() < 1 || rows_.cols() < 1)
    throw ConfigError("weight matrix must have at least one row and one column");
  if (static_cast<Eigen::Index>(class_ids_.size()) != rows_.rows())
    throw ConfigError("weight matrix has " + std::to_string(rows_.rows()) + " rows but " +
                      std::to_string(class_ids_.size()) + " class ids");
  if (distinct_sorted(class_ids_).size() != class_ids_.size())
    throw ConfigError("weight matrix class ids must be distinct");
  if (!rows_.allFinite()) throw ConfigError("weight matrix contains non-finite entries");
}

WeightMatrix WeightMatrix::subset(std::span<const Eigen::Index> positions) const {
  Matrix out(static_cast<Eigen::Index>(positions.size()), dim());
  std::vector<ClassId> ids;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = rows_.row(positions[i]);
    ids.push_back(class_ids_[static_cast<std::size_t>(positions[i])]);
  }
  return WeightMatrix(std::move(out), std::move(ids));
}

bool WeightMatrix::operator==(const WeightMatrix& other) const {
  return class_ids_ == other.class_ids_ && rows_.rows() == other.rows_.rows() &&
         rows_.cols() == other.rows_.cols() && rows_ == other.rows_;
}

ClassSplit::ClassSplit(std::set<ClassId> base_ids, std::set<ClassId> novel_ids)
    : base_(std::move(base_ids)), novel_(std::move(novel_ids)) {
  if (base_.empty()) throw ConfigError("class split: base_ids is empty");
  if (novel_.empty()) throw ConfigError("class split: novel_ids is empty");
  for (ClassId id : base_)
    if (novel_.count(id))
      throw ConfigError("class split: class " + std::to_string(id) + " is both base and novel");
}

SplitTables split_classes(const FeatureTable& table, const ClassSplit& split) {
  const auto& present = table.class_ids();
  auto check = [&](const std::set<ClassId>& ids) {
    for (ClassId id : ids)
      if (!std::binary_search(present.begin(), present.end(), id))
        throw ConfigError("class split: unknown class id " + std::to_string(id));
  };
  check(split.base_ids());
  check(split.novel_ids());

  std::vector<Eigen::Index> base_rows, novel_rows;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const ClassId label = table.labels()[static_cast<std::size_t>(i)];
    if (split.base_ids().count(label)) base_rows.push_back(i);
    else if (split.novel_ids().count(label)) novel_rows.push_back(i);
  }
  return {table.subset(base_rows), table.subset(novel_rows)};
}

Episode sample_episode(const FeatureTable& novel, int way, int k, int n_query,
                       std::uint64_t seed, std::uint64_t stream) {
  if (way < 1 || k < 1 || n_query < 1)
    throw ConfigError("episode: way, k and n_query must all be >= 1");
  const auto& ids = novel.class_ids();
  if (static_cast<int>(ids.size()) < way)
    throw ConfigError("episode: requires " + std::to_string(way) + " classes, table has " +
                      std::to_string(ids.size()));

  CounterRng rng(seed, stream);
  std::vector<ClassId> classes = ids;
  rng.partial_shuffle(classes, static_cast<std::size_t>(way));
  classes.resize(static_cast<std::size_t>(way));
  std::sort(classes.begin(), classes.end());

  std::vector<Eigen::Index> support_rows, query_rows;
  std::vector<int> support_targets, query_targets;
  const auto need = static_cast<std::size_t>(k + n_query);
  for (int c = 0; c < way; ++c) {
    auto rows = novel.rows_of(classes[static_cast<std::size_t>(c)]);
    if (rows.size() < need)
      throw ConfigError("episode: class " + std::to_string(classes[static_cast<std::size_t>(c)]) +
                        " requires " + std::to_string(need) + " examples, has " +
                        std::to_string(rows.size()));
    rng.partial_shuffle(rows, need);
    for (int i = 0; i < k; ++i) {
      support_rows.push_back(rows[static_cast<std::size_t>(i)]);
      support_targets.push_back(c);
    }
    for (int i = k; i < k + n_query; ++i) {
      query_rows.push_back(rows[static_cast<std::size_t>(i)]);
      query_targets.push_back(c);
    }
  }
  return Episode{.way = way,
                 .k = k,
                 .n_query = n_query,
                 .class_ids = std::move(classes),
                 .support = novel.subset(support_rows),
                 .query = novel.subset(query_rows),
                 .support_targets = std::move(support_targets),
                 .query_targets = std::move(query_targets),
                 .support_rows = std::move(support_rows),
                 .query_rows = std::move(query_rows),
                 .seed = seed,
                 .stream = stream};
}

FeatureTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("CSV " + path.string() + " is empty");
  if (line.rfind("label", 0) != 0)
    throw ConfigError("CSV " + path.string() + ": header must start with 'label'");
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  if (columns < 1) throw ConfigError("CSV " + path.string() + ": no feature columns");

  std::vector<double> values;
  std::vector<ClassId> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index col = -1;
    while (std::getline(ss, cell, ',')) {
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (col < 0) {
        ClassId label = 0;
        auto [ptr, ec] = std::from_chars(first, last, label);
        if (ec != std::errc() || ptr != last)
          throw ConfigError("CSV line " + std::to_string(line_no) + ": bad label '" + cell + "'");
        labels.push_back(label);
      } else {
        double v = 0;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last)
          throw ConfigError("CSV line " + std::to_string(line_no) + ": bad value '" + cell + "'");
        values.push_back(v);
      }
      ++col;
    }
    if (col != columns)
      throw ConfigError("CSV line " + std::to_string(line_no) + ": expected " +
                        std::to_string(columns) + " features, got " + std::to_string(col));
  }
  const auto n = static_cast<Eigen::Index>(labels.size());
  Matrix features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                   Eigen::RowMajor>>(values.data(), n, columns);
  return FeatureTable(std::move(features), std::move(labels));
}

}  // namespace kshot
