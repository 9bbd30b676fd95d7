#pragma once

// Observer representations: in-memory model, matrix file formats (CSV and
// rawbin), label files and the observer registry.
//
// rawbin layout (all integers little-endian):
//   bytes 0..7    magic "DVCRAWB\0"
//   bytes 8..11   u32 version (1)
//   byte  12      u8 dtype code (1 = f32, 2 = f64)
//   bytes 13..20  u64 rows
//   bytes 21..28  u64 cols
//   bytes 29..    row-major IEEE-754 payload, rows * cols * sizeof(dtype)

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvc/common.hpp"
#include "dvc/error.hpp"

namespace dvc {

namespace fs = std::filesystem;

enum class ObserverKind { model, brain, synthetic };

inline const char* to_string(ObserverKind k) {
  switch (k) {
    case ObserverKind::model: return "model";
    case ObserverKind::brain: return "brain";
    case ObserverKind::synthetic: return "synthetic";
  }
  return "model";
}

inline ObserverKind parse_observer_kind(const std::string& s) {
  if (s == "model") return ObserverKind::model;
  if (s == "brain") return ObserverKind::brain;
  if (s == "synthetic") return ObserverKind::synthetic;
  throw Error(ErrorKind::invalid_argument, "unknown observer kind '" + s + "'");
}

struct ObserverMeta {
  std::string observer_id;
  std::optional<std::string> family;
  std::optional<double> accuracy;
  ObserverKind kind = ObserverKind::model;
};

/// One observer's sample x feature activations with per-sample labels.
/// Build through make_representation() so the invariants hold.
struct RepresentationSet {
  std::string observer_id;
  Matrix matrix;
  std::vector<std::string> labels;
  std::vector<std::string> class_names;  // sorted, distinct
  std::vector<int> codes;                // index into class_names per sample

  Index n_samples() const { return matrix.rows(); }
  Index n_features() const { return matrix.cols(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }

  std::vector<Index> samples_of(int code) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < codes.size(); ++i)
      if (codes[i] == code) out.push_back(static_cast<Index>(i));
    return out;
  }
};

inline void check_finite(const Matrix& m, const std::string& what) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      if (!std::isfinite(m(r, c)))
        throw Error(ErrorKind::non_finite, what + ": entry (" + std::to_string(r) + ", " +
                                               std::to_string(c) + ") is not finite");
}

inline RepresentationSet make_representation(std::string observer_id, Matrix matrix,
                                             std::vector<std::string> labels) {
  if (static_cast<Index>(labels.size()) != matrix.rows())
    throw Error(ErrorKind::shape_mismatch,
                observer_id + ": " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(matrix.rows()) + " matrix rows");
  if (matrix.cols() < 2)
    throw Error(ErrorKind::shape_mismatch,
                observer_id + ": need at least 2 features, got " + std::to_string(matrix.cols()));
  check_finite(matrix, observer_id);

  std::map<std::string, int> counts;
  for (const auto& l : labels) {
    if (l.empty()) throw Error(ErrorKind::bad_format, observer_id + ": empty label");
    ++counts[l];
  }
  RepresentationSet set;
  set.observer_id = std::move(observer_id);
  set.matrix = std::move(matrix);
  for (const auto& [name, n] : counts) {
    if (n < 2)
      throw Error(ErrorKind::too_few_samples,
                  set.observer_id + ": class '" + name + "' has " + std::to_string(n) +
                      " sample(s), need at least 2");
    set.class_names.push_back(name);
  }
  std::map<std::string, int> code_of;
  for (std::size_t i = 0; i < set.class_names.size(); ++i)
    code_of[set.class_names[i]] = static_cast<int>(i);
  set.codes.reserve(labels.size());
  for (const auto& l : labels) set.codes.push_back(code_of.at(l));
  set.labels = std::move(labels);
  return set;
}

/// Same stimuli and labels in the same order.
inline bool same_stimuli(const RepresentationSet& a, const RepresentationSet& b) {
  return a.labels == b.labels;
}

// ---------------------------------------------------------------------------
// Matrix files

enum class MatrixFormat { csv, rawbin };
enum class Dtype : std::uint8_t { f32 = 1, f64 = 2 };

struct MatrixFile {
  MatrixFormat format = MatrixFormat::csv;
  fs::path path;
  Dtype dtype = Dtype::f64;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
};

inline constexpr std::array<char, 8> kRawbinMagic = {'D', 'V', 'C', 'R', 'A', 'W', 'B', '\0'};
inline constexpr std::uint32_t kRawbinVersion = 1;
inline constexpr std::size_t kRawbinHeaderSize = 8 + 4 + 1 + 8 + 8;

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<U>(v);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string_view unquote(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = unquote(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == ',' && !quoted) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  out.push_back(line.substr(start));
  return out;
}

inline bool has_rawbin_magic(const std::string& bytes) {
  return bytes.size() >= kRawbinMagic.size() &&
         std::memcmp(bytes.data(), kRawbinMagic.data(), kRawbinMagic.size()) == 0;
}

inline bool has_binary_extension(const fs::path& p) {
  auto ext = p.extension().string();
  return ext == ".bin" || ext == ".rawbin";
}

}  // namespace detail

/// Shortest form guaranteed to round-trip a double (17 significant digits).
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline Matrix parse_csv_matrix(std::string_view text, const std::string& source = "csv") {
  auto lines = detail::split_lines(text);
  if (lines.empty()) throw Error(ErrorKind::bad_format, source + ": empty file");
  std::size_t first = 0;
  {
    auto fields = detail::split_fields(lines[0]);
    if (!detail::parse_double(fields[0])) first = 1;  // header row
  }
  const std::size_t rows = lines.size() - first;
  if (rows == 0) throw Error(ErrorKind::bad_format, source + ": header without data rows");
  const std::size_t cols = detail::split_fields(lines[first]).size();
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    auto fields = detail::split_fields(lines[first + r]);
    if (fields.size() != cols)
      throw Error(ErrorKind::shape_mismatch, source + ": row " + std::to_string(first + r + 1) +
                                                 " has " + std::to_string(fields.size()) +
                                                 " fields, expected " + std::to_string(cols));
    for (std::size_t c = 0; c < cols; ++c) {
      auto v = detail::parse_double(fields[c]);
      if (!v)
        throw Error(ErrorKind::bad_format, source + ": cannot parse '" +
                                               std::string(detail::trim(fields[c])) + "' at row " +
                                               std::to_string(first + r + 1));
      m(static_cast<Index>(r), static_cast<Index>(c)) = *v;
    }
  }
  return m;
}

inline std::string encode_rawbin(const Matrix& m, Dtype dtype = Dtype::f64) {
  std::string out;
  const std::size_t width = dtype == Dtype::f64 ? 8 : 4;
  out.reserve(kRawbinHeaderSize + static_cast<std::size_t>(m.size()) * width);
  out.append(kRawbinMagic.data(), kRawbinMagic.size());
  detail::put_le<std::uint32_t>(out, kRawbinVersion);
  out.push_back(static_cast<char>(dtype));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (dtype == Dtype::f64)
        detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(m(r, c)));
      else
        detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
    }
  }
  return out;
}

inline MatrixFile parse_rawbin_header(const std::string& bytes, const fs::path& path = {}) {
  if (!detail::has_rawbin_magic(bytes))
    throw Error(ErrorKind::bad_format, path.string() + ": unknown format magic");
  if (bytes.size() < kRawbinHeaderSize)
    throw Error(ErrorKind::bad_format, path.string() + ": truncated rawbin header");
  auto p = reinterpret_cast<const unsigned char*>(bytes.data());
  auto version = detail::get_le<std::uint32_t>(p + 8);
  if (version != kRawbinVersion)
    throw Error(ErrorKind::bad_format, path.string() + ": unsupported rawbin version " +
                                           std::to_string(version));
  MatrixFile info;
  info.format = MatrixFormat::rawbin;
  info.path = path;
  auto code = p[12];
  if (code != static_cast<unsigned char>(Dtype::f32) && code != static_cast<unsigned char>(Dtype::f64))
    throw Error(ErrorKind::bad_format, path.string() + ": unknown dtype code " + std::to_string(code));
  info.dtype = static_cast<Dtype>(code);
  info.rows = detail::get_le<std::uint64_t>(p + 13);
  info.cols = detail::get_le<std::uint64_t>(p + 21);
  const std::uint64_t width = info.dtype == Dtype::f64 ? 8 : 4;
  const std::uint64_t payload = bytes.size() - kRawbinHeaderSize;
  if (info.cols != 0 && info.rows > payload / width / info.cols)
    throw Error(ErrorKind::shape_mismatch, path.string() + ": header shape exceeds payload");
  if (info.rows * info.cols * width != payload)
    throw Error(ErrorKind::shape_mismatch,
                path.string() + ": header shape (" + std::to_string(info.rows) + ", " +
                    std::to_string(info.cols) + ") does not match payload of " +
                    std::to_string(payload) + " bytes");
  return info;
}

inline Matrix decode_rawbin(const std::string& bytes, const fs::path& path = {}) {
  MatrixFile info = parse_rawbin_header(bytes, path);
  Matrix m(static_cast<Index>(info.rows), static_cast<Index>(info.cols));
  auto p = reinterpret_cast<const unsigned char*>(bytes.data()) + kRawbinHeaderSize;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (info.dtype == Dtype::f64) {
        m(r, c) = std::bit_cast<double>(detail::get_le<std::uint64_t>(p));
        p += 8;
      } else {
        m(r, c) = std::bit_cast<float>(detail::get_le<std::uint32_t>(p));
        p += 4;
      }
    }
  }
  return m;
}

/// Inspects a matrix file without decoding the payload.
inline MatrixFile probe_matrix_file(const fs::path& path) {
  std::string bytes = detail::read_file(path);
  if (detail::has_rawbin_magic(bytes) || detail::has_binary_extension(path))
    return parse_rawbin_header(bytes, path);
  Matrix m = parse_csv_matrix(bytes, path.string());
  return MatrixFile{MatrixFormat::csv, path, Dtype::f64, static_cast<std::uint64_t>(m.rows()),
                    static_cast<std::uint64_t>(m.cols())};
}

/// Reads a CSV or rawbin matrix. rawbin is detected by its magic; files
/// with a .bin/.rawbin extension must carry it.
inline Matrix read_matrix(const fs::path& path) {
  std::string bytes = detail::read_file(path);
  Matrix m;
  if (detail::has_rawbin_magic(bytes) || detail::has_binary_extension(path))
    m = decode_rawbin(bytes, path);
  else
    m = parse_csv_matrix(bytes, path.string());
  check_finite(m, path.string());
  return m;
}

inline std::string encode_csv(const Matrix& m, const std::vector<std::string>& header = {}) {
  std::string out;
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out += ',';
      out += header[i];
    }
    out += '\n';
  }
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

/// Writes `contents` to a temporary sibling and renames it over `path`.
inline void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::io, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::io, "cannot rename onto '" + path.string() + "': " + ec.message());
}

inline void write_matrix(const Matrix& m, const fs::path& path, MatrixFormat format,
                         Dtype dtype = Dtype::f64) {
  check_finite(m, path.string());
  write_file_atomic(path, format == MatrixFormat::rawbin ? encode_rawbin(m, dtype) : encode_csv(m));
}

// ---------------------------------------------------------------------------
// Labels and representations

inline std::vector<std::string> parse_labels(std::string_view text, const std::string& source = "labels") {
  std::vector<std::string> labels;
  auto lines = detail::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto l = detail::unquote(lines[i]);
    if (l.empty())
      throw Error(ErrorKind::bad_format, source + ": empty label on line " + std::to_string(i + 1));
    labels.emplace_back(l);
  }
  return labels;
}

inline std::vector<std::string> read_labels(const fs::path& path) {
  return parse_labels(detail::read_file(path), path.string());
}

inline RepresentationSet load_representation(const fs::path& matrix_path, const fs::path& labels_path,
                                             const ObserverMeta& meta) {
  return make_representation(meta.observer_id, read_matrix(matrix_path), read_labels(labels_path));
}

// ---------------------------------------------------------------------------
// Registry

struct RegistryEntry {
  ObserverMeta meta;
  fs::path matrix_path;
  fs::path labels_path;
};

/// Parses a JSON registry: either {"observers": [...]} or a bare array of
/// {id, matrix, labels, family?, accuracy?, kind}. Relative paths resolve
/// against `base_dir`. Entries come back sorted by id.
inline std::vector<RegistryEntry> parse_registry(const nlohmann::json& doc, const fs::path& base_dir,
                                                 bool check_files = true) {
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("observers"))
      throw Error(ErrorKind::bad_format, "registry: missing 'observers' array");
    list = &doc.at("observers");
  }
  if (!list->is_array()) throw Error(ErrorKind::bad_format, "registry: observers must be an array");

  std::vector<RegistryEntry> entries;
  std::set<std::string> seen;
  for (const auto& item : *list) {
    if (!item.is_object()) throw Error(ErrorKind::bad_format, "registry: entry is not an object");
    for (const char* key : {"id", "matrix", "labels"})
      if (!item.contains(key) || !item.at(key).is_string())
        throw Error(ErrorKind::bad_format, std::string("registry: entry missing string field '") + key + "'");
    RegistryEntry e;
    e.meta.observer_id = item.at("id").get<std::string>();
    if (!seen.insert(e.meta.observer_id).second)
      throw Error(ErrorKind::duplicate_id, "registry: duplicate observer id '" + e.meta.observer_id + "'");
    if (item.contains("family") && !item.at("family").is_null())
      e.meta.family = item.at("family").get<std::string>();
    if (item.contains("accuracy") && !item.at("accuracy").is_null()) {
      double acc = item.at("accuracy").get<double>();
      if (!(acc >= 0.0 && acc <= 1.0))
        throw Error(ErrorKind::invalid_argument,
                    "registry: accuracy of '" + e.meta.observer_id + "' outside [0, 1]");
      e.meta.accuracy = acc;
    }
    e.meta.kind = parse_observer_kind(item.value("kind", std::string("model")));
    auto resolve = [&](const std::string& p) {
      fs::path path(p);
      return path.is_absolute() ? path : base_dir / path;
    };
    e.matrix_path = resolve(item.at("matrix").get<std::string>());
    e.labels_path = resolve(item.at("labels").get<std::string>());
    if (check_files) {
      for (const auto& p : {e.matrix_path, e.labels_path})
        if (!fs::exists(p))
          throw Error(ErrorKind::io, "registry: '" + e.meta.observer_id + "' references missing file '" +
                                         p.string() + "'");
    }
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(), [](const RegistryEntry& a, const RegistryEntry& b) {
    return a.meta.observer_id < b.meta.observer_id;
  });
  return entries;
}

inline std::vector<RegistryEntry> registry_load(const fs::path& config_path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(detail::read_file(config_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::bad_format, config_path.string() + ": " + e.what());
  }
  return parse_registry(doc, config_path.parent_path());
}

inline std::vector<RepresentationSet> load_registry_sets(const std::vector<RegistryEntry>& entries) {
  std::vector<RepresentationSet> sets;
  sets.reserve(entries.size());
  for (const auto& e : entries) sets.push_back(load_representation(e.matrix_path, e.labels_path, e.meta));
  return sets;
}

}  // namespace dvc
