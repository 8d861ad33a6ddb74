#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "jepa3d/geometry.hpp"

namespace jepa3d {

using Color = std::array<std::uint8_t, 3>;
using WarningSink = std::function<void(const std::string&)>;

inline void warn_stderr(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

namespace io_detail {

// Line cursor over text with 1-based line numbers.
class Lines {
 public:
  Lines(std::string_view text, std::size_t pos = 0, std::size_t line = 0) : text_(text), pos_(pos), line_(line) {}

  bool next(std::string_view& out) {
    if (pos_ >= text_.size()) return false;
    auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    out = text_.substr(pos_, end - pos_);
    if (!out.empty() && out.back() == '\r') out.remove_suffix(1);
    pos_ = end + 1;
    ++line_;
    return true;
  }
  // Next line that is neither blank nor a `#` comment.
  bool next_content(std::string_view& out) {
    while (next(out)) {
      auto t = strip(out);
      if (!t.empty() && t.front() != '#') {
        out = t;
        return true;
      }
    }
    return false;
  }
  std::size_t line() const { return line_; }
  std::size_t offset() const { return std::min(pos_, text_.size()); }

  static std::string_view strip(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  }

 private:
  std::string_view text_;
  std::size_t pos_;
  std::size_t line_;
};

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline bool parse_size(std::string_view s, std::size_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline std::string file_stem(const std::string& path) { return std::filesystem::path(path).stem().string(); }

}  // namespace io_detail

// Whitespace-separated x y z per line; blank lines and `#` comments skipped.
inline PointCloud read_xyz(std::string_view text, const std::string& source = "<xyz>") {
  using namespace io_detail;
  PointCloud pc;
  pc.id = file_stem(source);
  Lines lines(text);
  std::string_view line;
  while (lines.next_content(line)) {
    auto tok = split_ws(line);
    if (tok.size() != 3)
      throw ParseError(source, ParseError::Unit::line, lines.line(),
                       "expected 3 coordinates, found " + std::to_string(tok.size()));
    Point3 p{};
    for (int d = 0; d < 3; ++d)
      if (!parse_double(tok[d], p[d]))
        throw ParseError(source, ParseError::Unit::line, lines.line(), "bad number '" + std::string(tok[d]) + "'");
    pc.points.push_back(p);
  }
  if (pc.points.empty()) throw ParseError(source, ParseError::Unit::line, lines.line(), "no points");
  return pc;
}

// OFF: header, "nv nf ne" counts, nv vertex lines, nf face lines. Faces are
// checked for count and index range, then dropped.
inline PointCloud read_off(std::string_view text, const std::string& source = "<off>") {
  using namespace io_detail;
  Lines lines(text);
  std::string_view line;
  if (!lines.next_content(line)) throw ParseError(source, ParseError::Unit::line, lines.line() + 1, "empty file");
  std::vector<std::string_view> counts;
  if (line == "OFF") {
    if (!lines.next_content(line))
      throw ParseError(source, ParseError::Unit::line, lines.line() + 1, "missing vertex/face counts");
    counts = split_ws(line);
  } else if (line.starts_with("OFF") && line.size() > 3 && std::isspace(static_cast<unsigned char>(line[3]))) {
    counts = split_ws(line.substr(3));  // counts on the header line
  } else {
    throw ParseError(source, ParseError::Unit::line, lines.line(), "expected 'OFF' header");
  }
  std::size_t nv = 0, nf = 0;
  if (counts.size() < 2 || !parse_size(counts[0], nv) || !parse_size(counts[1], nf))
    throw ParseError(source, ParseError::Unit::line, lines.line(), "bad vertex/face counts");
  if (nv == 0) throw ParseError(source, ParseError::Unit::line, lines.line(), "no vertices declared");
  PointCloud pc;
  pc.id = file_stem(source);
  for (std::size_t i = 0; i < nv; ++i) {
    if (!lines.next_content(line))
      throw ParseError(source, ParseError::Unit::line, lines.line() + 1,
                       "expected vertex " + std::to_string(i + 1) + " of " + std::to_string(nv) + ", found end of file");
    auto tok = split_ws(line);
    Point3 p{};
    // x y z, optionally followed by RGB or RGBA
    if (tok.size() != 3 && tok.size() != 6 && tok.size() != 7)
      throw ParseError(source, ParseError::Unit::line, lines.line(),
                       "expected vertex " + std::to_string(i + 1) + " of " + std::to_string(nv) + " (x y z), found " +
                           std::to_string(tok.size()) + " values");
    for (int d = 0; d < 3; ++d)
      if (!parse_double(tok[d], p[d]))
        throw ParseError(source, ParseError::Unit::line, lines.line(), "bad number '" + std::string(tok[d]) + "'");
    pc.points.push_back(p);
  }
  for (std::size_t f = 0; f < nf; ++f) {
    if (!lines.next_content(line))
      throw ParseError(source, ParseError::Unit::line, lines.line() + 1,
                       "expected face " + std::to_string(f + 1) + " of " + std::to_string(nf) + ", found end of file");
    auto tok = split_ws(line);
    std::size_t n = 0, v = 0;
    if (tok.empty() || !parse_size(tok[0], n) || tok.size() < n + 1)
      throw ParseError(source, ParseError::Unit::line, lines.line(), "bad face line");
    for (std::size_t j = 1; j <= n; ++j)
      if (!parse_size(tok[j], v) || v >= nv)
        throw ParseError(source, ParseError::Unit::line, lines.line(), "face index '" + std::string(tok[j]) + "' out of range");
  }
  return pc;
}

namespace ply_detail {

enum class Scalar { i8, u8, i16, u16, i32, u32, f32, f64 };

inline std::optional<Scalar> parse_scalar(std::string_view s) {
  if (s == "char" || s == "int8") return Scalar::i8;
  if (s == "uchar" || s == "uint8") return Scalar::u8;
  if (s == "short" || s == "int16") return Scalar::i16;
  if (s == "ushort" || s == "uint16") return Scalar::u16;
  if (s == "int" || s == "int32") return Scalar::i32;
  if (s == "uint" || s == "uint32") return Scalar::u32;
  if (s == "float" || s == "float32") return Scalar::f32;
  if (s == "double" || s == "float64") return Scalar::f64;
  return std::nullopt;
}

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::i8:
    case Scalar::u8:
      return 1;
    case Scalar::i16:
    case Scalar::u16:
      return 2;
    case Scalar::i32:
    case Scalar::u32:
    case Scalar::f32:
      return 4;
    case Scalar::f64:
      return 8;
  }
  return 0;
}

template <class V>
V load_le(const char* p) {
  V v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline double decode(Scalar s, const char* p) {
  static_assert(std::endian::native == std::endian::little, "binary PLY reader assumes a little-endian host");
  switch (s) {
    case Scalar::i8:
      return load_le<std::int8_t>(p);
    case Scalar::u8:
      return load_le<std::uint8_t>(p);
    case Scalar::i16:
      return load_le<std::int16_t>(p);
    case Scalar::u16:
      return load_le<std::uint16_t>(p);
    case Scalar::i32:
      return load_le<std::int32_t>(p);
    case Scalar::u32:
      return load_le<std::uint32_t>(p);
    case Scalar::f32:
      return load_le<float>(p);
    case Scalar::f64:
      return load_le<double>(p);
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::f32;
  bool is_list = false;
  Scalar count_type = Scalar::u8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

}  // namespace ply_detail

struct PlyData {
  PointCloud cloud;
  std::vector<Color> colors;  // empty unless red/green/blue are present
};

// PLY with ascii or binary_little_endian encoding. Only vertex x/y/z (and
// red/green/blue if present) are kept; other properties produce one warning each.
inline PlyData read_ply_full(std::string_view bytes, const std::string& source = "<ply>",
                             const WarningSink& warn = warn_stderr) {
  using namespace io_detail;
  using namespace ply_detail;
  Lines lines(bytes);
  std::string_view line;
  auto fail = [&](const std::string& what) { throw ParseError(source, ParseError::Unit::line, lines.line(), what); };
  if (!lines.next(line) || Lines::strip(line) != "ply") fail("expected 'ply' magic");
  bool binary = false, have_format = false;
  std::vector<Element> elements;
  for (;;) {
    if (!lines.next(line)) throw ParseError(source, ParseError::Unit::line, lines.line() + 1, "missing end_header");
    auto tok = split_ws(line);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() != 3) fail("bad format line");
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else fail("unsupported PLY encoding '" + std::string(tok[1]) + "'");
      have_format = true;
    } else if (tok[0] == "element") {
      std::size_t n = 0;
      if (tok.size() != 3 || !parse_size(tok[2], n)) fail("bad element line");
      elements.push_back({std::string(tok[1]), n, {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) fail("property before any element");
      Property p;
      if (tok.size() == 5 && tok[1] == "list") {
        auto ct = parse_scalar(tok[2]), vt = parse_scalar(tok[3]);
        if (!ct || !vt) fail("unknown list property type");
        p = {std::string(tok[4]), *vt, true, *ct};
      } else if (tok.size() == 3) {
        auto t = parse_scalar(tok[1]);
        if (!t) fail("unknown property type '" + std::string(tok[1]) + "'");
        p = {std::string(tok[2]), *t, false, Scalar::u8};
      } else {
        fail("bad property line");
      }
      elements.back().props.push_back(p);
    } else {
      fail("unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!have_format) fail("header has no format line");

  const Element* vertex = nullptr;
  for (const auto& e : elements)
    if (e.name == "vertex") vertex = &e;
  if (!vertex) fail("no vertex element");
  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  std::set<std::string> ignored;
  for (std::size_t i = 0; i < vertex->props.size(); ++i) {
    const auto& p = vertex->props[i];
    const int idx = static_cast<int>(i);
    if (p.is_list) ignored.insert(p.name);
    else if (p.name == "x") ix = idx;
    else if (p.name == "y") iy = idx;
    else if (p.name == "z") iz = idx;
    else if (p.name == "red") ir = idx;
    else if (p.name == "green") ig = idx;
    else if (p.name == "blue") ib = idx;
    else ignored.insert(p.name);
  }
  if (ix < 0 || iy < 0 || iz < 0) fail("vertex element lacks x/y/z");
  const bool colors = ir >= 0 && ig >= 0 && ib >= 0;
  if (!colors)
    for (int c : {ir, ig, ib})
      if (c >= 0) ignored.insert(vertex->props[static_cast<std::size_t>(c)].name);
  for (const auto& name : ignored) warn(source + ": ignoring unsupported vertex property '" + name + "'");

  PlyData out;
  out.cloud.id = file_stem(source);
  std::vector<double> row;
  if (!binary) {
    for (const auto& e : elements) {
      for (std::size_t r = 0; r < e.count; ++r) {
        if (!lines.next_content(line))
          throw ParseError(source, ParseError::Unit::line, lines.line() + 1,
                           "expected " + e.name + " " + std::to_string(r + 1) + " of " + std::to_string(e.count) +
                               ", found end of file");
        if (&e != vertex) continue;
        auto tok = split_ws(line);
        row.assign(e.props.size(), 0.0);
        std::size_t t = 0;
        for (std::size_t i = 0; i < e.props.size(); ++i) {
          if (t >= tok.size()) fail("vertex row has too few values");
          if (e.props[i].is_list) {
            std::size_t n = 0;
            if (!parse_size(tok[t], n)) fail("bad list count");
            t += 1 + n;
            continue;
          }
          if (!parse_double(tok[t], row[i])) fail("bad number '" + std::string(tok[t]) + "'");
          ++t;
        }
        if (t != tok.size()) fail("vertex row has extra values");
        out.cloud.points.push_back({row[ix], row[iy], row[iz]});
        if (colors)
          out.colors.push_back({static_cast<std::uint8_t>(row[ir]), static_cast<std::uint8_t>(row[ig]),
                                static_cast<std::uint8_t>(row[ib])});
      }
    }
  } else {
    std::size_t pos = lines.offset();
    auto need = [&](std::size_t n, const std::string& what) {
      if (pos + n > bytes.size())
        throw ParseError(source, ParseError::Unit::byte, pos, "truncated data: expected " + what);
    };
    for (const auto& e : elements) {
      for (std::size_t r = 0; r < e.count; ++r) {
        const std::string what = e.name + " " + std::to_string(r + 1) + " of " + std::to_string(e.count);
        row.assign(e.props.size(), 0.0);
        for (std::size_t i = 0; i < e.props.size(); ++i) {
          const auto& p = e.props[i];
          if (p.is_list) {
            need(scalar_size(p.count_type), what);
            const double n = decode(p.count_type, bytes.data() + pos);
            if (n < 0) throw ParseError(source, ParseError::Unit::byte, pos, "negative list count");
            pos += scalar_size(p.count_type);
            const std::size_t len = static_cast<std::size_t>(n) * scalar_size(p.type);
            need(len, what);
            pos += len;
            continue;
          }
          need(scalar_size(p.type), what);
          row[i] = decode(p.type, bytes.data() + pos);
          pos += scalar_size(p.type);
        }
        if (&e != vertex) continue;
        out.cloud.points.push_back({row[ix], row[iy], row[iz]});
        if (colors)
          out.colors.push_back({static_cast<std::uint8_t>(row[ir]), static_cast<std::uint8_t>(row[ig]),
                                static_cast<std::uint8_t>(row[ib])});
      }
    }
  }
  if (out.cloud.points.empty()) fail("vertex element is empty");
  return out;
}

inline PointCloud read_ply(std::string_view bytes, const std::string& source = "<ply>",
                           const WarningSink& warn = warn_stderr) {
  return read_ply_full(bytes, source, warn).cloud;
}

enum class PlyEncoding { ascii, binary_little_endian };

// Coordinates are written as doubles, so a re-read is exact.
inline std::string ply_bytes(const std::vector<Point3>& points, const std::vector<Color>& colors = {},
                             PlyEncoding enc = PlyEncoding::binary_little_endian) {
  if (!colors.empty() && colors.size() != points.size())
    throw ShapeError("ply: " + std::to_string(colors.size()) + " colors for " + std::to_string(points.size()) +
                     " points");
  std::string out = "ply\nformat ";
  out += enc == PlyEncoding::ascii ? "ascii" : "binary_little_endian";
  out += " 1.0\nelement vertex " + std::to_string(points.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (!colors.empty()) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "end_header\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (enc == PlyEncoding::ascii) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", points[i][0], points[i][1], points[i][2]);
      out += buf;
      if (!colors.empty())
        out += " " + std::to_string(colors[i][0]) + " " + std::to_string(colors[i][1]) + " " +
               std::to_string(colors[i][2]);
      out += "\n";
    } else {
      out.append(reinterpret_cast<const char*>(points[i].data()), 3 * sizeof(double));
      if (!colors.empty()) out.append(reinterpret_cast<const char*>(colors[i].data()), 3);
    }
  }
  return out;
}

inline void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) throw DataError("write failed for '" + path + "' (disk full?)");
}

inline void write_ply(const std::string& path, const std::vector<Point3>& points, const std::vector<Color>& colors = {},
                      PlyEncoding enc = PlyEncoding::binary_little_endian) {
  write_file_bytes(path, ply_bytes(points, colors, enc));
}

// Parses by extension (.xyz, .txt, .off, .ply), without resampling.
inline PointCloud read_cloud_file(const std::string& path, const WarningSink& warn = warn_stderr) {
  std::string ext = std::filesystem::path(path).extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  const std::string bytes = read_file_bytes(path);
  if (ext == ".xyz" || ext == ".txt" || ext == ".pts") return read_xyz(bytes, path);
  if (ext == ".off") return read_off(bytes, path);
  if (ext == ".ply") return read_ply(bytes, path, warn);
  throw DataError("'" + path + "': unsupported extension '" + ext + "' (expected .xyz, .off or .ply)");
}

// Parse, check finiteness, resample to `points`, normalize.
inline PointCloud load_cloud(const std::string& path, std::size_t points, Rng& rng,
                             const WarningSink& warn = warn_stderr) {
  PointCloud pc = read_cloud_file(path, warn);
  require_finite(pc);
  return normalize_unit_sphere(resample(pc, points, rng));
}

inline bool is_cloud_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".xyz" || ext == ".txt" || ext == ".pts" || ext == ".off" || ext == ".ply";
}

}  // namespace jepa3d
