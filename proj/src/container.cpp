#include "kshot/container.hpp"

#include "kshot/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace kshot {

const char* to_string(FormatErrc code) noexcept {
  switch (code) {
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::truncated: return "truncated payload";
    case FormatErrc::dimension_overflow: return "dimension overflow";
    case FormatErrc::unknown_kind: return "unknown section kind";
    case FormatErrc::non_finite: return "non-finite entry";
    case FormatErrc::malformed: return "malformed container";
  }
  return "format error";
}

namespace {

constexpr char kMagic[4] = {'W', 'P', 'K', '1'};
constexpr const char* kFeatures = "/features";
constexpr const char* kLabels = "/labels";
constexpr const char* kWeights = "/weights";
constexpr const char* kClassIds = "/class_ids";
constexpr const char* kMeta = "meta/";

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T value) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }
  void put_bytes(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string(std::size_t n) {
    require(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  void require(std::size_t n) const {
    if (remaining() < n)
      throw FormatError(FormatErrc::truncated, "needed " + std::to_string(n) + " bytes at offset " +
                                                   std::to_string(pos_) + ", " +
                                                   std::to_string(remaining()) + " left");
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string stem(const std::string& s, const std::string& suffix) {
  return s.substr(0, s.size() - suffix.size());
}

std::vector<std::int64_t> to_int64(const std::vector<ClassId>& v) { return {v.begin(), v.end()}; }

}  // namespace

Section Section::matrix(std::string name, const Matrix& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), m.rows(), m.cols()) = m;
  return Section{std::move(name),
                 {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                 std::move(data)};
}

Section Section::vector(std::string name, std::vector<std::int64_t> values) {
  const auto n = static_cast<std::uint64_t>(values.size());
  return Section{std::move(name), {n}, std::move(values)};
}

Section Section::text(std::string name, const std::string& utf8) {
  std::vector<std::int64_t> bytes;
  bytes.reserve(utf8.size());
  for (unsigned char c : utf8) bytes.push_back(c);
  return vector(std::move(name), std::move(bytes));
}

Matrix Section::as_matrix() const {
  if (kind() != SectionKind::float_matrix)
    throw FormatError(FormatErrc::malformed, "section '" + name + "' is not a float matrix");
  Eigen::Index rows = 0, cols = 1;
  if (dims.size() == 1) {
    rows = static_cast<Eigen::Index>(dims[0]);
  } else if (dims.size() == 2) {
    rows = static_cast<Eigen::Index>(dims[0]);
    cols = static_cast<Eigen::Index>(dims[1]);
  } else {
    throw FormatError(FormatErrc::malformed, "section '" + name + "' has " +
                                                 std::to_string(dims.size()) + " dims");
  }
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      floats().data(), rows, cols);
}

std::string Section::as_text() const {
  std::string out;
  for (std::int64_t b : ints()) {
    if (b < 0 || b > 255)
      throw FormatError(FormatErrc::malformed, "section '" + name + "' is not byte text");
    out.push_back(static_cast<char>(b));
  }
  return out;
}

std::vector<std::uint8_t> encode_sections(const std::vector<Section>& sections) {
  Writer w;
  w.put_bytes(std::string(kMagic, 4));
  w.put(static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    if (s.name.size() > std::numeric_limits<std::uint16_t>::max())
      throw FormatError(FormatErrc::malformed, "section name too long");
    if (s.dims.size() > 255) throw FormatError(FormatErrc::malformed, "too many dims");
    std::uint64_t count = 1;
    for (auto d : s.dims) count *= d;
    const std::size_t actual = s.kind() == SectionKind::float_matrix ? s.floats().size() : s.ints().size();
    if (count != actual)
      throw FormatError(FormatErrc::malformed, "section '" + s.name + "' dims disagree with payload");

    w.put(static_cast<std::uint16_t>(s.name.size()));
    w.put_bytes(s.name);
    w.put(static_cast<std::uint8_t>(s.kind()));
    w.put(static_cast<std::uint8_t>(s.dims.size()));
    for (auto d : s.dims) w.put(d);
    if (s.kind() == SectionKind::float_matrix) {
      for (double v : s.floats()) {
        if (!std::isfinite(v))
          throw FormatError(FormatErrc::non_finite, "section '" + s.name + "' has a non-finite entry");
        w.put(v);
      }
    } else {
      for (std::int64_t v : s.ints()) w.put(v);
    }
  }
  return w.take();
}

std::vector<Section> decode_sections(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(FormatErrc::bad_magic, "expected \"WPK1\"");
  Reader r(bytes);
  r.get_string(4);
  const auto count = r.get<std::uint32_t>();
  std::vector<Section> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    Section s;
    s.name = r.get_string(r.get<std::uint16_t>());
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1)
      throw FormatError(FormatErrc::unknown_kind, "section '" + s.name + "' kind " + std::to_string(kind));
    const auto ndims = r.get<std::uint8_t>();
    std::uint64_t elements = 1;
    for (std::uint8_t d = 0; d < ndims; ++d) {
      const auto dim = r.get<std::uint64_t>();
      if (dim != 0 && elements > std::numeric_limits<std::uint64_t>::max() / 8 / dim)
        throw FormatError(FormatErrc::dimension_overflow, "section '" + s.name + "'");
      elements *= dim;
      s.dims.push_back(dim);
    }
    r.require(static_cast<std::size_t>(elements * 8));
    if (kind == 0) {
      std::vector<double> data(static_cast<std::size_t>(elements));
      for (auto& v : data) v = r.get<double>();
      s.payload = std::move(data);
    } else {
      std::vector<std::int64_t> data(static_cast<std::size_t>(elements));
      for (auto& v : data) v = r.get<std::int64_t>();
      s.payload = std::move(data);
    }
    out.push_back(std::move(s));
  }
  if (r.remaining() != 0)
    throw FormatError(FormatErrc::malformed, std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

void write_sections(const std::filesystem::path& path, const std::vector<Section>& sections) {
  const auto bytes = encode_sections(sections);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Section> read_sections(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_sections(bytes);
}

const FeatureTable& Container::features(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name && std::holds_alternative<FeatureTable>(t.table)) return std::get<FeatureTable>(t.table);
  throw ConfigError("container has no feature table '" + name + "'");
}

const WeightMatrix& Container::weights(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name && std::holds_alternative<WeightMatrix>(t.table)) return std::get<WeightMatrix>(t.table);
  throw ConfigError("container has no weight matrix '" + name + "'");
}

bool Container::has(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name) return true;
  return false;
}

std::vector<Section> to_sections(const Container& container) {
  std::vector<Section> sections;
  for (const auto& t : container.tables) {
    if (const auto* f = std::get_if<FeatureTable>(&t.table)) {
      if (!f->features().allFinite())
        throw FormatError(FormatErrc::non_finite, "table '" + t.name + "'");
      sections.push_back(Section::matrix(t.name + kFeatures, f->features()));
      sections.push_back(Section::vector(t.name + kLabels, to_int64(f->labels())));
    } else {
      const auto& w = std::get<WeightMatrix>(t.table);
      if (!w.rows().allFinite()) throw FormatError(FormatErrc::non_finite, "table '" + t.name + "'");
      sections.push_back(Section::matrix(t.name + kWeights, w.rows()));
      sections.push_back(Section::vector(t.name + kClassIds, to_int64(w.class_ids())));
    }
  }
  for (const auto& [key, value] : container.metadata) sections.push_back(Section::text(kMeta + key, value));
  return sections;
}

Container from_sections(const std::vector<Section>& sections) {
  auto find = [&](const std::string& name) -> const Section* {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  };
  Container out;
  for (const auto& s : sections) {
    if (s.name.rfind(kMeta, 0) == 0) {
      out.metadata[s.name.substr(std::strlen(kMeta))] = s.as_text();
    } else if (ends_with(s.name, kFeatures)) {
      const auto name = stem(s.name, kFeatures);
      const Section* labels = find(name + kLabels);
      if (!labels || labels->kind() != SectionKind::int_vector)
        throw FormatError(FormatErrc::malformed, "feature table '" + name + "' has no labels section");
      std::vector<ClassId> ids(labels->ints().begin(), labels->ints().end());
      out.tables.push_back({name, FeatureTable(s.as_matrix(), std::move(ids))});
    } else if (ends_with(s.name, kWeights)) {
      const auto name = stem(s.name, kWeights);
      const Section* ids_section = find(name + kClassIds);
      if (!ids_section || ids_section->kind() != SectionKind::int_vector)
        throw FormatError(FormatErrc::malformed, "weight matrix '" + name + "' has no class_ids section");
      std::vector<ClassId> ids(ids_section->ints().begin(), ids_section->ints().end());
      out.tables.push_back({name, WeightMatrix(s.as_matrix(), std::move(ids))});
    }
  }
  return out;
}

void save_container(const std::filesystem::path& path, const Container& container) {
  write_sections(path, to_sections(container));
}

Container load_container(const std::filesystem::path& path) {
  return from_sections(read_sections(path));
}

}  // namespace kshot
