#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "massweight/errors.hpp"
#include "massweight/format.hpp"

namespace massweight {

/// Relative tolerance for repeated-key consistency checks. Masses and
/// f-values are functions of the key, so disagreement beyond rounding
/// noise means the stream is corrupt.
inline constexpr double kConsistencyRelTol = 1e-9;

inline constexpr std::size_t kMaxKeyBytes = 16;

/// One draw: an opaque key (raw bytes), its unnormalized mass, and the
/// value of the quantity of interest at that point.
struct SampleRecord {
  std::string key;
  double mass = 0.0;
  double fvalue = 0.0;
};

struct TableEntry {
  std::uint64_t count = 0;
  double mass = 0.0;
  double fvalue = 0.0;

  friend bool operator==(const TableEntry&, const TableEntry&) = default;
};

namespace detail {

inline bool consistent(double a, double b) {
  return std::abs(a - b) <= kConsistencyRelTol * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

/// Deduplicated sample table: key -> (count, mass, fvalue).
///
/// Keys are ordered ascending by raw bytes, which fixes the iteration
/// order of every derived floating-point sum.
class MassTable {
 public:
  using Map = std::map<std::string, TableEntry>;
  using const_iterator = Map::const_iterator;

  /// Adds `count` occurrences of a record. Mass and f-value are stored on
  /// first occurrence and checked against it on repeats.
  void insert(const SampleRecord& rec, std::uint64_t count = 1) {
    if (rec.key.empty()) throw InvalidRecord("record key is empty");
    if (rec.key.size() > kMaxKeyBytes)
      throw InvalidRecord("record key exceeds " + std::to_string(kMaxKeyBytes) + " bytes");
    if (!(rec.mass > 0.0)) throw InvalidRecord("record mass must be positive");
    if (count == 0) throw InvalidRecord("record count must be positive");
    auto [it, inserted] = entries_.try_emplace(rec.key, TableEntry{count, rec.mass, rec.fvalue});
    if (!inserted) {
      if (!detail::consistent(it->second.mass, rec.mass))
        throw MassMismatch("mass mismatch for key: stored " + std::to_string(it->second.mass) +
                           ", got " + std::to_string(rec.mass));
      if (!detail::consistent(it->second.fvalue, rec.fvalue))
        throw MassMismatch("f-value mismatch for key: stored " +
                           std::to_string(it->second.fvalue) + ", got " +
                           std::to_string(rec.fvalue));
      it->second.count += count;
    }
  }

  const Map& entries() const { return entries_; }
  const_iterator begin() const { return entries_.begin(); }
  const_iterator end() const { return entries_.end(); }
  std::size_t distinct() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  friend bool operator==(const MassTable&, const MassTable&) = default;

 private:
  Map entries_;
};

/// N, M, M' and P(S) of a table; everything the boundary classification
/// and the Good-Turing initializer need.
struct SampleSummary {
  std::uint64_t n_draws = 0;       // N
  std::uint64_t n_distinct = 0;    // M
  std::uint64_t n_singletons = 0;  // M'
  double mass_on_sample = 0.0;     // P(S)
};

inline SampleSummary summarize(const MassTable& table) {
  SampleSummary s;
  for (const auto& [key, e] : table) {
    s.n_draws += e.count;
    s.n_distinct += 1;
    s.n_singletons += (e.count == 1) ? 1 : 0;
    s.mass_on_sample += e.mass;
  }
  return s;
}

/// Key-wise sum of two tables. Associative and commutative, with the
/// empty table as identity; the cross-thread composition point for
/// sharded accumulation.
inline MassTable merge(const MassTable& a, const MassTable& b) {
  MassTable out = a;
  for (const auto& [key, e] : b)
    out.insert(SampleRecord{key, e.mass, e.fvalue}, e.count);
  return out;
}

/// Masses in ascending key order (the canonical summation order).
inline std::vector<double> mass_vector(const MassTable& table) {
  std::vector<double> m;
  m.reserve(table.distinct());
  for (const auto& [key, e] : table) m.push_back(e.mass);
  return m;
}

// ---------------------------------------------------------------------------
// Hex keys
// ---------------------------------------------------------------------------

inline std::string hex_encode(std::string_view bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * bytes.size());
  for (unsigned char c : bytes) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xF]);
  }
  return out;
}

inline std::string hex_decode(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.empty()) throw ParseError("empty key");
  if (hex.size() % 2 != 0) throw ParseError("key has odd number of hex digits");
  if (hex.size() > 2 * kMaxKeyBytes) throw ParseError("key longer than 16 bytes");
  std::string out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) throw ParseError("invalid hex digit in key");
    out.push_back(static_cast<char>((hi << 4) | lo));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV sample streams
//
// Two accepted layouts, distinguished by the header line:
//   key,mass,fvalue         one row per draw (repeats as repeated rows)
//   key,count,mass,fvalue   pre-aggregated
// Keys are hex-encoded; lines starting with '#' are comments.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    std::string f = line.substr(start, pos == std::string::npos ? pos : pos - start);
    // trim surrounding whitespace
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string() : f.substr(b, e - b + 1));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

inline double parse_double(const std::string& s, std::size_t lineno, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(lineno) + ": bad " + what + " '" + s + "'");
  }
}

inline std::uint64_t parse_count(const std::string& s, std::size_t lineno) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size() || v <= 0) throw std::invalid_argument(s);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(lineno) + ": bad count '" + s + "'");
  }
}

}  // namespace detail

inline MassTable read_sample_csv(std::istream& in) {
  MassTable table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  bool aggregated = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = detail::split_csv_line(line);
    if (!have_header) {
      if (fields == std::vector<std::string>{"key", "mass", "fvalue"}) {
        aggregated = false;
      } else if (fields == std::vector<std::string>{"key", "count", "mass", "fvalue"}) {
        aggregated = true;
      } else {
        throw ParseError("line " + std::to_string(lineno) +
                         ": expected header 'key,mass,fvalue' or 'key,count,mass,fvalue'");
      }
      have_header = true;
      continue;
    }
    const std::size_t want = aggregated ? 4u : 3u;
    if (fields.size() != want)
      throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(want) +
                       " fields, got " + std::to_string(fields.size()));
    std::string key;
    try {
      key = hex_decode(fields[0]);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (aggregated) {
      const std::uint64_t count = detail::parse_count(fields[1], lineno);
      const double mass = detail::parse_double(fields[2], lineno, "mass");
      const double fvalue = detail::parse_double(fields[3], lineno, "fvalue");
      table.insert(SampleRecord{key, mass, fvalue}, count);
    } else {
      const double mass = detail::parse_double(fields[1], lineno, "mass");
      const double fvalue = detail::parse_double(fields[2], lineno, "fvalue");
      table.insert(SampleRecord{key, mass, fvalue});
    }
  }
  if (!have_header) throw ParseError("missing CSV header");
  return table;
}

inline MassTable read_sample_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_sample_csv(in);
}

/// Writes the aggregated layout, keys ascending.
inline void write_sample_csv(std::ostream& out, const MassTable& table) {
  out << "key,count,mass,fvalue\n";
  for (const auto& [key, e] : table)
    out << hex_encode(key) << ',' << e.count << ',' << format_g17(e.mass) << ','
        << format_g17(e.fvalue) << '\n';
}

}  // namespace massweight
