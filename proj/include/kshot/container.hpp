#pragma once

// Binary interchange container.
//
//   magic "WPK1" (4 bytes)
//   section count          u32 LE
//   per section:
//     name length          u16 LE
//     name                 UTF-8 bytes
//     kind                 u8   (0 = float64 matrix, 1 = int64 vector)
//     ndims                u8
//     dims                 ndims x u64 LE
//     payload              float64 LE row-major, or int64 LE
//
// Named tables map onto sections by suffix:
//   FeatureTable "x"  -> "x/features" (2-D float) + "x/labels" (1-D int)
//   WeightMatrix "w"  -> "w/weights"  (2-D float) + "w/class_ids" (1-D int)
//   metadata "key"    -> "meta/key"   (1-D int, one UTF-8 byte per element)

#include "kshot/data.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace kshot {

enum class SectionKind : std::uint8_t { float_matrix = 0, int_vector = 1 };

struct Section {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<double>, std::vector<std::int64_t>> payload;

  SectionKind kind() const noexcept {
    return payload.index() == 0 ? SectionKind::float_matrix : SectionKind::int_vector;
  }
  const std::vector<double>& floats() const { return std::get<0>(payload); }
  const std::vector<std::int64_t>& ints() const { return std::get<1>(payload); }

  static Section matrix(std::string name, const Matrix& m);
  static Section vector(std::string name, std::vector<std::int64_t> values);
  static Section text(std::string name, const std::string& utf8);

  /// Row-major payload back into a matrix; 1-D payloads become a column.
  Matrix as_matrix() const;
  std::string as_text() const;

  bool operator==(const Section&) const = default;
};

/// Encode/decode the raw section list. Decoding errors are FormatError with
/// distinct codes for bad magic, truncation and dimension overflow.
std::vector<std::uint8_t> encode_sections(const std::vector<Section>& sections);
std::vector<Section> decode_sections(const std::vector<std::uint8_t>& bytes);

void write_sections(const std::filesystem::path& path, const std::vector<Section>& sections);
std::vector<Section> read_sections(const std::filesystem::path& path);

struct NamedTable {
  std::string name;
  std::variant<FeatureTable, WeightMatrix> table;
};

struct Container {
  std::vector<NamedTable> tables;
  std::map<std::string, std::string> metadata;

  const FeatureTable& features(const std::string& name) const;
  const WeightMatrix& weights(const std::string& name) const;
  bool has(const std::string& name) const;
};

/// Rejects non-finite entries naming the offending table.
void save_container(const std::filesystem::path& path, const Container& container);
Container load_container(const std::filesystem::path& path);

std::vector<Section> to_sections(const Container& container);
Container from_sections(const std::vector<Section>& sections);

}  // namespace kshot
