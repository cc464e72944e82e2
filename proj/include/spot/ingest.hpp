#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "spot/dataset.hpp"

namespace spot {

/// Raw cells before typing. JSON scalars are rendered to text (numbers in
/// their shortest form, booleans as true/false); nullopt means absent/null.
using RawCell = std::optional<std::string>;

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<RawCell>> rows;
};

struct CsvDialect {
  char delimiter = ',';
};

namespace detail {

inline void validate_utf8(std::string_view bytes) {
  std::size_t i = 0;
  const auto n = bytes.size();
  while (i < n) {
    auto c = static_cast<unsigned char>(bytes[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1, cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2, cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3, cp = c & 0x07;
    } else {
      throw Error(ErrorCode::EncodingError, "invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + extra >= n)
      throw Error(ErrorCode::EncodingError, "truncated UTF-8 sequence at offset " + std::to_string(i));
    for (std::size_t k = 1; k <= extra; ++k) {
      auto cc = static_cast<unsigned char>(bytes[i + k]);
      if ((cc & 0xC0) != 0x80)
        throw Error(ErrorCode::EncodingError, "invalid UTF-8 continuation at offset " + std::to_string(i + k));
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
      throw Error(ErrorCode::EncodingError, "invalid UTF-8 code point at offset " + std::to_string(i));
    i += extra + 1;
  }
}

inline std::string_view strip_bom(std::string_view bytes) {
  if (bytes.size() >= 3 && bytes.substr(0, 3) == "\xEF\xBB\xBF") bytes.remove_prefix(3);
  return bytes;
}

inline bool is_blank(const RawCell& cell) { return !cell || trim(*cell).empty(); }

}  // namespace detail

/// RFC 4180 reader. The first record is the header. Fully empty lines are
/// skipped; short records are padded with absent cells.
inline RawTable parse_csv(std::string_view bytes, CsvDialect dialect = {}) {
  detail::validate_utf8(bytes);
  bytes = detail::strip_bom(bytes);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  bool record_has_content = false;
  std::size_t i = 0;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (record_has_content || record.size() > 1) records.push_back(std::move(record));
    record.clear();
    record_has_content = false;
  };

  while (i < bytes.size()) {
    char c = bytes[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < bytes.size() && bytes[i + 1] == '"') {
          field.push_back('"');
          i += 2;
          continue;
        }
        in_quotes = false;
      } else {
        field.push_back(c);
      }
      ++i;
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
      record_has_content = true;
    } else if (c == dialect.delimiter) {
      end_field();
    } else if (c == '\r' || c == '\n') {
      end_record();
      if (c == '\r' && i + 1 < bytes.size() && bytes[i + 1] == '\n') ++i;
    } else {
      field.push_back(c);
      field_started = true;
      record_has_content = true;
    }
    ++i;
  }
  if (in_quotes) throw Error(ErrorCode::MalformedInput, "unterminated quoted field");
  if (field_started || !record.empty()) end_record();

  if (records.empty()) throw Error(ErrorCode::MalformedInput, "missing header row");

  RawTable table;
  table.header = std::move(records.front());
  std::set<std::string> seen;
  for (const auto& name : table.header) {
    if (name.empty()) throw Error(ErrorCode::MalformedInput, "empty column name in header");
    if (!seen.insert(name).second) throw Error(ErrorCode::MalformedInput, "duplicate column name '" + name + "'");
  }
  const std::size_t width = table.header.size();
  table.rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    auto& rec = records[r];
    if (rec.size() > width)
      throw MalformedRowError(r - 1, "has " + std::to_string(rec.size()) + " fields, header has " + std::to_string(width));
    std::vector<RawCell> row;
    row.reserve(width);
    for (auto& f : rec) row.emplace_back(std::move(f));
    row.resize(width);
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// Top-level array of flat objects. Header is the union of keys in first-seen order.
inline RawTable parse_json_records(std::string_view bytes) {
  detail::validate_utf8(bytes);
  bytes = detail::strip_bom(bytes);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedInput, e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::MalformedInput, "top level must be an array of records");

  RawTable table;
  std::map<std::string, std::size_t> column_of;
  std::vector<std::vector<std::pair<std::size_t, RawCell>>> sparse;
  sparse.reserve(doc.size());

  // nlohmann::json sorts object keys, so first-seen order is recovered with a SAX pass.
  struct KeyOrder : nlohmann::json_sax<nlohmann::json> {
    std::vector<std::vector<std::string>> per_record;
    int depth = 0;
    bool null() override { return true; }
    bool boolean(bool) override { return true; }
    bool number_integer(number_integer_t) override { return true; }
    bool number_unsigned(number_unsigned_t) override { return true; }
    bool number_float(number_float_t, const string_t&) override { return true; }
    bool string(string_t&) override { return true; }
    bool binary(binary_t&) override { return true; }
    bool start_object(std::size_t) override {
      if (++depth == 2) per_record.emplace_back();
      return true;
    }
    bool key(string_t& k) override {
      if (depth == 2) per_record.back().push_back(k);
      return true;
    }
    bool end_object() override {
      --depth;
      return true;
    }
    bool start_array(std::size_t) override {
      ++depth;
      return true;
    }
    bool end_array() override {
      --depth;
      return true;
    }
    bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override { return false; }
  } order;
  nlohmann::json::sax_parse(bytes.begin(), bytes.end(), &order);

  std::size_t record_index = 0;
  for (const auto& item : doc) {
    if (!item.is_object())
      throw Error(ErrorCode::MalformedInput, "record " + std::to_string(record_index) + " is not an object");
    std::vector<std::pair<std::size_t, RawCell>> cells;
    for (const auto& key : order.per_record.at(record_index)) {
      const auto& v = item.at(key);
      if (v.is_object() || v.is_array())
        throw Error(ErrorCode::UnsupportedStructure,
                    "record " + std::to_string(record_index) + " key '" + key + "' holds a nested value");
      auto [it, inserted] = column_of.try_emplace(key, table.header.size());
      if (inserted) table.header.push_back(key);
      RawCell cell;
      if (v.is_string())
        cell = v.get<std::string>();
      else if (v.is_number_float())
        cell = format_number(v.get<double>());
      else if (!v.is_null())
        cell = v.dump();
      cells.emplace_back(it->second, std::move(cell));
    }
    sparse.push_back(std::move(cells));
    ++record_index;
  }
  for (auto& cells : sparse) {
    std::vector<RawCell> row(table.header.size());
    for (auto& [col, cell] : cells) row[col] = std::move(cell);
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// Thresholds for kind detection. Tunable, not canonical.
struct DetectionConfig {
  double acceptance = 0.95;
  std::size_t categorical_min_limit = 32;
  double categorical_row_fraction = 0.05;
  bool parallel = false;
};

struct KindGuess {
  std::string column;
  FacetKind kind = FacetKind::text;
  double confidence = 0.0;
  std::size_t parse_failures = 0;

  friend bool operator==(const KindGuess&, const KindGuess&) = default;
};

inline KindGuess detect_column_kind(const RawTable& table, std::size_t col, const DetectionConfig& config = {}) {
  KindGuess guess{table.header.at(col), FacetKind::text, 0.0, 0};
  std::size_t non_empty = 0, numbers = 0, times = 0;
  std::unordered_set<std::string> distinct;
  for (const auto& row : table.rows) {
    const auto& cell = row[col];
    if (detail::is_blank(cell)) continue;
    ++non_empty;
    if (parse_number(*cell)) ++numbers;
    if (parse_timestamp(*cell)) ++times;
    distinct.insert(*cell);
  }
  if (non_empty == 0) return guess;

  auto accept = [&](FacetKind kind, std::size_t parsed) {
    double confidence = static_cast<double>(parsed) / static_cast<double>(non_empty);
    if (confidence < config.acceptance) return false;
    guess.kind = kind;
    guess.confidence = confidence;
    guess.parse_failures = non_empty - parsed;
    return true;
  };
  if (accept(FacetKind::continuous, numbers)) return guess;
  if (accept(FacetKind::datetime, times)) return guess;
  double limit = std::max(static_cast<double>(config.categorical_min_limit),
                          config.categorical_row_fraction * static_cast<double>(table.rows.size()));
  if (static_cast<double>(distinct.size()) <= limit && accept(FacetKind::categorical, non_empty)) return guess;
  accept(FacetKind::text, non_empty);
  return guess;
}

/// Tries continuous, datetime, categorical, text in that order per column.
inline std::vector<KindGuess> detect_facet_kinds(const RawTable& table, const DetectionConfig& config = {}) {
  std::vector<KindGuess> guesses(table.header.size());
  if (config.parallel) {
    std::vector<std::future<KindGuess>> futures;
    for (std::size_t c = 0; c < table.header.size(); ++c)
      futures.push_back(std::async(std::launch::async, [&, c] { return detect_column_kind(table, c, config); }));
    for (std::size_t c = 0; c < futures.size(); ++c) guesses[c] = futures[c].get();
  } else {
    for (std::size_t c = 0; c < table.header.size(); ++c) guesses[c] = detect_column_kind(table, c, config);
  }
  return guesses;
}

/// Converts one raw cell to a Value of the given kind; unparseable cells become missing.
inline Value coerce_cell(const RawCell& cell, FacetKind kind) {
  if (detail::is_blank(cell)) return Value{};
  switch (kind) {
    case FacetKind::continuous:
      if (auto v = parse_number(*cell)) return Value{*v};
      return Value{};
    case FacetKind::datetime:
      if (auto t = parse_timestamp(*cell)) return Value{*t};
      return Value{};
    default: return Value{*cell};
  }
}

struct LoadOptions {
  std::string id;
  std::string name;
  std::string description;
  DetectionConfig detection;
};

struct LoadResult {
  std::shared_ptr<const Dataset> dataset;
  std::vector<KindGuess> guesses;
  Warnings warnings;
};

/// Types a raw table. Overrides win over detected kinds.
inline LoadResult load_dataset(const RawTable& table, const std::map<std::string, FacetKind>& overrides = {},
                               const LoadOptions& options = {}) {
  for (const auto& [name, kind] : overrides)
    if (std::find(table.header.begin(), table.header.end(), name) == table.header.end())
      throw Error(ErrorCode::NotFound, "override references unknown column '" + name + "'");

  LoadResult result;
  result.guesses = detect_facet_kinds(table, options.detection);

  DatasetDescriptor descriptor{options.id, options.name.empty() ? options.id : options.name, options.description, {}, 0};
  std::vector<Column> columns;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    auto it = overrides.find(name);
    FacetKind kind = it != overrides.end() ? it->second : result.guesses[c].kind;
    Column column(kind);
    column.reserve(table.rows.size());
    std::size_t non_empty = 0, kept = 0;
    for (const auto& row : table.rows) {
      if (!detail::is_blank(row[c])) ++non_empty;
      Value v = coerce_cell(row[c], kind);
      if (!v.is_missing()) ++kept;
      column.push_back(v);
    }
    if (non_empty > 0 && kept == 0)
      result.warnings.push_back({WarningCode::EmptyFacet, name,
                                 "no cell parses as " + std::string(to_string(kind)) + "; facet kept with all values missing"});
    descriptor.facets.push_back(Facet{name, kind, "", ""});
    columns.push_back(std::move(column));
  }
  result.dataset = Dataset::create(std::move(descriptor), std::move(columns));
  return result;
}

namespace detail {

inline std::string csv_escape(const std::string& s, char delimiter) {
  bool quote = s.find_first_of(std::string{delimiter, '"', '\r', '\n'}) != std::string::npos;
  if (!quote) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Writes a dataset back out as CSV; missing cells are empty fields.
inline std::string serialize_csv(const Dataset& dataset, CsvDialect dialect = {}) {
  std::string out;
  const auto& facets = dataset.facets();
  for (std::size_t c = 0; c < facets.size(); ++c) {
    if (c) out.push_back(dialect.delimiter);
    out += detail::csv_escape(facets[c].name, dialect.delimiter);
  }
  out.push_back('\n');
  for (std::size_t row = 0; row < dataset.row_count(); ++row) {
    for (std::size_t c = 0; c < facets.size(); ++c) {
      if (c) out.push_back(dialect.delimiter);
      Value v = dataset.column(c).value(row);
      if (v.is_number())
        out += format_number(v.number());
      else if (v.is_time())
        out += format_timestamp(v.time());
      else if (v.is_label())
        out += detail::csv_escape(v.label(), dialect.delimiter);
    }
    out.push_back('\n');
  }
  return out;
}

enum class InputFormat { csv, json };

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Picks JSON when the first non-space byte is '[', CSV otherwise.
inline InputFormat sniff_format(std::string_view bytes) {
  bytes = detail::strip_bom(bytes);
  auto t = detail::trim(bytes);
  return (!t.empty() && t.front() == '[') ? InputFormat::json : InputFormat::csv;
}

inline RawTable parse_input(std::string_view bytes, InputFormat format, CsvDialect dialect = {}) {
  return format == InputFormat::json ? parse_json_records(bytes) : parse_csv(bytes, dialect);
}

}  // namespace spot
