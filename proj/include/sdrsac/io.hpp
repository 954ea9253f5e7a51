#pragma once

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sdrsac/errors.hpp"
#include "sdrsac/geometry.hpp"
#include "sdrsac/random.hpp"

namespace sdrsac {

enum class CloudFormat { automatic, ply_ascii, ply_binary_le, xyz_text };

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

inline std::vector<std::string_view> split_words(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <typename T>
std::optional<T> to_integer(std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

enum class PlyType { int8, uint8, int16, uint16, int32, uint32, float32, float64 };

inline std::optional<PlyType> ply_type(std::string_view name) {
  if (name == "char" || name == "int8") return PlyType::int8;
  if (name == "uchar" || name == "uint8") return PlyType::uint8;
  if (name == "short" || name == "int16") return PlyType::int16;
  if (name == "ushort" || name == "uint16") return PlyType::uint16;
  if (name == "int" || name == "int32") return PlyType::int32;
  if (name == "uint" || name == "uint32") return PlyType::uint32;
  if (name == "float" || name == "float32") return PlyType::float32;
  if (name == "double" || name == "float64") return PlyType::float64;
  return std::nullopt;
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::int8:
    case PlyType::uint8: return 1;
    case PlyType::int16:
    case PlyType::uint16: return 2;
    case PlyType::int32:
    case PlyType::uint32:
    case PlyType::float32: return 4;
    case PlyType::float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::float32;
  bool is_list = false;
  PlyType count_type = PlyType::uint8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

// Host byte order is assumed little-endian, as on every supported platform.
template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline double decode(PlyType t, const char* p) {
  switch (t) {
    case PlyType::int8: return load_le<std::int8_t>(p);
    case PlyType::uint8: return load_le<std::uint8_t>(p);
    case PlyType::int16: return load_le<std::int16_t>(p);
    case PlyType::uint16: return load_le<std::uint16_t>(p);
    case PlyType::int32: return load_le<std::int32_t>(p);
    case PlyType::uint32: return load_le<std::uint32_t>(p);
    case PlyType::float32: return load_le<float>(p);
    case PlyType::float64: return load_le<double>(p);
  }
  return 0.0;
}

struct PlyHeader {
  CloudFormat format = CloudFormat::ply_ascii;
  std::vector<PlyElement> elements;
  std::size_t body_offset = 0;  // byte offset of the first data byte
  std::size_t body_line = 0;    // 1-based line number of the first ascii data line
};

inline PlyHeader parse_ply_header(std::string_view data) {
  PlyHeader h;
  std::size_t pos = 0, line_no = 0;
  bool have_format = false, done = false;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError("PLY header line " + std::to_string(line_no) + ": " + what);
  };
  while (!done) {
    if (pos >= data.size()) {
      ++line_no;
      throw fail("unexpected end of file before end_header");
    }
    const std::size_t eol = data.find('\n', pos);
    std::string_view line = data.substr(pos, eol == std::string_view::npos ? data.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? data.size() : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto words = split_words(line);
    if (line_no == 1) {
      if (words.size() != 1 || words[0] != "ply") throw fail("missing 'ply' magic");
      continue;
    }
    if (words.empty()) continue;
    const std::string_view key = words[0];
    if (key == "comment" || key == "obj_info") continue;
    if (key == "format") {
      if (words.size() != 3) throw fail("malformed format line");
      if (words[1] == "ascii") h.format = CloudFormat::ply_ascii;
      else if (words[1] == "binary_little_endian") h.format = CloudFormat::ply_binary_le;
      else if (words[1] == "binary_big_endian") throw UnsupportedFormat("PLY: big-endian files are not supported");
      else throw fail("unknown format '" + std::string(words[1]) + "'");
      if (words[2] != "1.0") throw UnsupportedFormat("PLY: unsupported version " + std::string(words[2]));
      have_format = true;
    } else if (key == "element") {
      if (words.size() != 3) throw fail("malformed element line");
      const auto count = to_integer<std::size_t>(words[2]);
      if (!count) throw fail("bad element count '" + std::string(words[2]) + "'");
      h.elements.push_back({std::string(words[1]), *count, {}});
    } else if (key == "property") {
      if (h.elements.empty()) throw fail("property before any element");
      PlyProperty prop;
      if (words.size() == 5 && words[1] == "list") {
        const auto ct = ply_type(words[2]), it = ply_type(words[3]);
        if (!ct || !it) throw fail("unknown list property type");
        if (*ct == PlyType::float32 || *ct == PlyType::float64) throw fail("list count type must be integral");
        prop = {std::string(words[4]), *it, true, *ct};
      } else if (words.size() == 3) {
        const auto t = ply_type(words[1]);
        if (!t) throw fail("unknown property type '" + std::string(words[1]) + "'");
        prop = {std::string(words[2]), *t, false, PlyType::uint8};
      } else {
        throw fail("malformed property line");
      }
      h.elements.back().properties.push_back(std::move(prop));
    } else if (key == "end_header") {
      done = true;
    } else {
      throw fail("unknown keyword '" + std::string(key) + "'");
    }
  }
  if (!have_format) throw ParseError("PLY header: missing format line");
  h.body_offset = pos;
  h.body_line = line_no + 1;
  return h;
}

struct VertexLayout {
  std::size_t element = 0;
  std::array<std::size_t, 3> xyz{};
};

inline VertexLayout vertex_layout(const PlyHeader& h) {
  for (std::size_t e = 0; e < h.elements.size(); ++e) {
    if (h.elements[e].name != "vertex") continue;
    VertexLayout v{e, {}};
    const char* names[3] = {"x", "y", "z"};
    for (int axis = 0; axis < 3; ++axis) {
      const auto& props = h.elements[e].properties;
      auto it = std::find_if(props.begin(), props.end(),
                             [&](const PlyProperty& p) { return p.name == names[axis] && !p.is_list; });
      if (it == props.end()) throw ParseError(std::string("PLY header: vertex has no '") + names[axis] + "' property");
      v.xyz[static_cast<std::size_t>(axis)] = static_cast<std::size_t>(it - props.begin());
    }
    return v;
  }
  throw ParseError("PLY header: no vertex element");
}

inline std::vector<Vec3> parse_ply_ascii(std::string_view data, const PlyHeader& h, const VertexLayout& layout) {
  std::vector<Vec3> points;
  std::size_t pos = h.body_offset, line_no = h.body_line - 1;
  auto next_line = [&]() -> std::vector<std::string_view> {
    while (pos < data.size()) {
      const std::size_t eol = data.find('\n', pos);
      std::string_view line = data.substr(pos, eol == std::string_view::npos ? data.size() - pos : eol - pos);
      pos = eol == std::string_view::npos ? data.size() : eol + 1;
      ++line_no;
      auto words = split_words(line);
      if (!words.empty()) return words;
    }
    throw ParseError("PLY line " + std::to_string(line_no + 1) + ": unexpected end of file");
  };
  for (std::size_t e = 0; e < h.elements.size(); ++e) {
    const PlyElement& el = h.elements[e];
    if (e == layout.element) points.reserve(el.count);
    for (std::size_t row = 0; row < el.count; ++row) {
      const auto words = next_line();
      std::size_t w = 0;
      std::array<double, 3> xyz{};
      for (std::size_t p = 0; p < el.properties.size(); ++p) {
        const PlyProperty& prop = el.properties[p];
        auto take = [&]() {
          if (w >= words.size()) throw ParseError("PLY line " + std::to_string(line_no) + ": too few values");
          const auto v = to_double(words[w]);
          if (!v) {
            throw ParseError("PLY line " + std::to_string(line_no) + ": bad number '" + std::string(words[w]) + "'");
          }
          ++w;
          return *v;
        };
        if (prop.is_list) {
          const double count = take();
          if (count < 0 || count != std::floor(count)) {
            throw ParseError("PLY line " + std::to_string(line_no) + ": bad list length");
          }
          for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) take();
          continue;
        }
        const double v = take();
        for (std::size_t axis = 0; axis < 3; ++axis) {
          if (e == layout.element && layout.xyz[axis] == p) xyz[axis] = v;
        }
      }
      if (w != words.size()) throw ParseError("PLY line " + std::to_string(line_no) + ": too many values");
      if (e == layout.element) points.emplace_back(xyz[0], xyz[1], xyz[2]);
    }
  }
  return points;
}

inline std::vector<Vec3> parse_ply_binary(std::string_view data, const PlyHeader& h, const VertexLayout& layout) {
  std::vector<Vec3> points;
  std::size_t pos = h.body_offset;
  auto need = [&](std::size_t bytes) {
    if (data.size() - pos < bytes) {
      throw ParseError("PLY byte offset " + std::to_string(pos) + ": unexpected end of file");
    }
  };
  for (std::size_t e = 0; e < h.elements.size(); ++e) {
    const PlyElement& el = h.elements[e];
    if (e == layout.element) points.reserve(el.count);
    for (std::size_t row = 0; row < el.count; ++row) {
      std::array<double, 3> xyz{};
      for (std::size_t p = 0; p < el.properties.size(); ++p) {
        const PlyProperty& prop = el.properties[p];
        if (prop.is_list) {
          need(ply_size(prop.count_type));
          const double count = decode(prop.count_type, data.data() + pos);
          if (count < 0) throw ParseError("PLY byte offset " + std::to_string(pos) + ": negative list length");
          pos += ply_size(prop.count_type);
          const std::size_t bytes = static_cast<std::size_t>(count) * ply_size(prop.type);
          need(bytes);
          pos += bytes;
          continue;
        }
        need(ply_size(prop.type));
        const double v = decode(prop.type, data.data() + pos);
        pos += ply_size(prop.type);
        for (std::size_t axis = 0; axis < 3; ++axis) {
          if (e == layout.element && layout.xyz[axis] == p) xyz[axis] = v;
        }
      }
      if (e == layout.element) points.emplace_back(xyz[0], xyz[1], xyz[2]);
    }
  }
  return points;
}

inline PointCloud finished_cloud(std::vector<Vec3> points, const std::string& what) {
  if (points.empty()) throw ParseError(what + ": no points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) throw ParseError(what + ": non-finite coordinate at point " + std::to_string(i));
  }
  return PointCloud(std::move(points));
}

}  // namespace detail

/// Parses PLY contents (ascii or binary little-endian). Only vertex x, y, z are kept.
inline PointCloud parse_ply(std::string_view data, CloudFormat expected = CloudFormat::automatic) {
  const detail::PlyHeader header = detail::parse_ply_header(data);
  if (expected != CloudFormat::automatic && expected != header.format) {
    throw ParseError("PLY: file format does not match the requested format");
  }
  const detail::VertexLayout layout = detail::vertex_layout(header);
  auto points = header.format == CloudFormat::ply_ascii ? detail::parse_ply_ascii(data, header, layout)
                                                        : detail::parse_ply_binary(data, header, layout);
  return detail::finished_cloud(std::move(points), "PLY");
}

/// One "x y z" per line; blank lines and '#' comments are skipped, extra columns ignored.
inline PointCloud parse_xyz(std::string_view data) {
  std::vector<Vec3> points;
  std::size_t pos = 0, line_no = 0;
  while (pos < data.size()) {
    const std::size_t eol = data.find('\n', pos);
    std::string_view line = data.substr(pos, eol == std::string_view::npos ? data.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? data.size() : eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto words = detail::split_words(line);
    if (words.empty()) continue;
    if (words.size() < 3) throw ParseError("XYZ line " + std::to_string(line_no) + ": expected 3 coordinates");
    Vec3 p;
    for (int axis = 0; axis < 3; ++axis) {
      const auto v = detail::to_double(words[static_cast<std::size_t>(axis)]);
      if (!v) throw ParseError("XYZ line " + std::to_string(line_no) + ": bad number");
      p[axis] = *v;
    }
    points.push_back(p);
  }
  return detail::finished_cloud(std::move(points), "XYZ");
}

inline CloudFormat guess_format(const std::string& path) {
  auto ends_with = [&](std::string_view suffix) {
    if (path.size() < suffix.size()) return false;
    return std::equal(suffix.rbegin(), suffix.rend(), path.rbegin(),
                      [](char a, char b) { return a == std::tolower(static_cast<unsigned char>(b)); });
  };
  if (ends_with(".ply")) return CloudFormat::automatic;
  if (ends_with(".xyz") || ends_with(".txt")) return CloudFormat::xyz_text;
  throw UnsupportedFormat("cannot infer the cloud format of '" + path + "'");
}

inline PointCloud load_cloud(const std::string& path, CloudFormat format = CloudFormat::automatic) {
  if (format == CloudFormat::automatic) format = guess_format(path);
  const std::string data = detail::read_file(path);
  if (format == CloudFormat::xyz_text) return parse_xyz(data);
  return parse_ply(data, format);
}

inline void save_ply(const std::string& path, const PointCloud& cloud, bool binary = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\nend_header\n";
  if (binary) {
    for (const Vec3& p : cloud.points()) {
      const double v[3] = {p.x(), p.y(), p.z()};
      out.write(reinterpret_cast<const char*>(v), sizeof(v));
    }
  } else {
    out << std::setprecision(17);
    for (const Vec3& p : cloud.points()) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
  if (!out) throw InvalidArgument("failed writing '" + path + "'");
}

inline void save_xyz(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << std::setprecision(17);
  for (const Vec3& p : cloud.points()) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  if (!out) throw InvalidArgument("failed writing '" + path + "'");
}

inline void save_cloud(const std::string& path, const PointCloud& cloud) {
  if (guess_format(path) == CloudFormat::xyz_text) save_xyz(path, cloud);
  else save_ply(path, cloud, false);
}

/// One zero-based "i j" pair per line; '#' starts a comment.
inline CorrespondenceSet parse_correspondences(std::string_view data) {
  CorrespondenceSet out;
  std::size_t pos = 0, line_no = 0;
  while (pos < data.size()) {
    const std::size_t eol = data.find('\n', pos);
    std::string_view line = data.substr(pos, eol == std::string_view::npos ? data.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? data.size() : eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto words = detail::split_words(line);
    if (words.empty()) continue;
    const auto i = words.size() == 2 ? detail::to_integer<std::size_t>(words[0]) : std::nullopt;
    const auto j = words.size() == 2 ? detail::to_integer<std::size_t>(words[1]) : std::nullopt;
    if (!i || !j) throw ParseError("correspondence line " + std::to_string(line_no) + ": expected 'i j'");
    out.pairs.push_back({*i, *j, 0.0});
  }
  return out;
}

inline CorrespondenceSet load_correspondences(const std::string& path) {
  return parse_correspondences(detail::read_file(path));
}

inline void save_correspondences(const std::string& path, const CorrespondenceSet& set) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  for (const auto& c : set.pairs) out << c.source << ' ' << c.target << '\n';
  if (!out) throw InvalidArgument("failed writing '" + path + "'");
}

inline void save_transform(const std::string& path, const RigidTransform& t) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << std::setprecision(17);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = t.rotation();
  m.topRightCorner<3, 1>() = t.translation();
  for (int r = 0; r < 4; ++r) out << m(r, 0) << ' ' << m(r, 1) << ' ' << m(r, 2) << ' ' << m(r, 3) << '\n';
}

/// Reads a 4x4 homogeneous matrix (12 or 16 numbers, row-major).
inline RigidTransform load_transform(const std::string& path) {
  const std::string data = detail::read_file(path);
  std::vector<double> v;
  for (std::string_view w : detail::split_words(data)) {
    const auto d = detail::to_double(w);
    if (!d) throw ParseError("transform '" + path + "': bad number '" + std::string(w) + "'");
    v.push_back(*d);
  }
  if (v.size() != 12 && v.size() != 16) throw ParseError("transform '" + path + "': expected a 3x4 or 4x4 matrix");
  Mat3 r;
  Vec3 t;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r(i, j) = v[static_cast<std::size_t>(4 * i + j)];
    t(i) = v[static_cast<std::size_t>(4 * i + 3)];
  }
  if (!RigidTransform::is_rotation(r, 1e-6)) throw ParseError("transform '" + path + "': not a rotation");
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return RigidTransform(svd.matrixU() * svd.matrixV().transpose(), t);
}

/// Uniform subsample without replacement; kept points stay in input order.
inline PointCloud downsample_uniform(const PointCloud& c, std::size_t n, std::uint64_t seed) {
  detail::require(n >= 1 && n <= c.size(), "downsample_uniform: n must be in [1, |cloud|]");
  RandomStream rng(seed, {0x646f776eULL});
  auto idx = rng.sample_indices(c.size(), n);
  std::sort(idx.begin(), idx.end());
  return c.subset(idx);
}

namespace detail {

struct Ellipsoid {
  Vec3 center;
  Vec3 radii;
  Mat3 frame;  // columns are the local axes

  bool contains(const Vec3& p) const {
    const Vec3 local = frame.transpose() * (p - center);
    return local.cwiseQuotient(radii).squaredNorm() < 1.0;
  }
  double area() const {
    // Knud Thomsen's approximation.
    const double pw = 1.6075;
    const double a = std::pow(radii.x(), pw), b = std::pow(radii.y(), pw), c = std::pow(radii.z(), pw);
    return 4.0 * std::numbers::pi * std::pow((a * b + a * c + b * c) / 3.0, 1.0 / pw);
  }
};

inline Mat3 axis_angle(double deg, const Vec3& axis) {
  return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, axis.normalized()).toRotationMatrix();
}

}  // namespace detail

/// Procedural stand-in for a scanned model: an asymmetric union of ellipsoids
/// (body, head, two unequal ears, tail, paw) about 0.2 across, with points
/// spread uniformly over the visible surface. Deterministic in (n, seed).
inline PointCloud builtin_shape(std::size_t n, std::uint64_t seed = 0) {
  detail::require(n >= 1, "builtin_shape: n must be positive");
  using detail::axis_angle;
  const std::vector<detail::Ellipsoid> parts = {
      {{0.0, 0.0, 0.045}, {0.07, 0.05, 0.045}, axis_angle(-12.0, Vec3::UnitY())},
      {{0.06, 0.004, 0.09}, {0.032, 0.027, 0.028}, axis_angle(15.0, Vec3::UnitZ())},
      {{0.055, 0.016, 0.135}, {0.007, 0.012, 0.034}, axis_angle(-18.0, Vec3::UnitX())},
      {{0.07, -0.012, 0.128}, {0.007, 0.011, 0.028}, axis_angle(35.0, Vec3(1.0, 0.4, 0.0))},
      {{-0.07, 0.006, 0.058}, {0.014, 0.013, 0.013}, Mat3::Identity()},
      {{0.05, 0.03, 0.01}, {0.024, 0.011, 0.01}, axis_angle(20.0, Vec3::UnitZ())},
  };
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& e : parts) cumulative.push_back(total += e.area());

  RandomStream rng(seed, {0x7368617065ULL});
  std::vector<Vec3> points;
  points.reserve(n);
  while (points.size() < n) {
    const double pick = rng.uniform() * total;
    const std::size_t k = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
    const auto& e = parts[std::min(k, parts.size() - 1)];
    Vec3 u(rng.normal(), rng.normal(), rng.normal());
    if (u.norm() < 1e-12) continue;
    u.normalize();
    // Accept in proportion to the local area element to get uniform density.
    const Vec3& r = e.radii;
    const double g = std::sqrt(std::pow(r.y() * r.z() * u.x(), 2) + std::pow(r.x() * r.z() * u.y(), 2) +
                               std::pow(r.x() * r.y() * u.z(), 2));
    const double g_max = std::max({r.y() * r.z(), r.x() * r.z(), r.x() * r.y()});
    if (rng.uniform() * g_max > g) continue;
    const Vec3 p = e.center + e.frame * u.cwiseProduct(r);
    bool hidden = false;
    for (const auto& other : parts) {
      if (&other != &e && other.contains(p)) {
        hidden = true;
        break;
      }
    }
    if (!hidden) points.push_back(p);
  }
  return PointCloud(std::move(points));
}

struct SyntheticSpec {
  PointCloud base;
  std::size_t n_points = 2000;
  double outlier_rate = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticPair {
  PointCloud source;
  PointCloud target;
  RigidTransform truth;
  std::size_t true_inlier_count = 0;
  /// target_origin[j] is the source index that target point j was made from.
  std::vector<std::size_t> target_origin;
};

/// Source = uniform subsample of the base; target = truth(source) plus
/// per-axis Gaussian noise, with floor(r n) random target points removed.
inline SyntheticPair synth_generate(const SyntheticSpec& spec) {
  detail::require(spec.n_points >= 1 && spec.n_points <= spec.base.size(),
                  "synth_generate: n_points must be in [1, |base|]");
  detail::require(spec.outlier_rate >= 0.0 && spec.outlier_rate < 1.0, "synth_generate: outlier_rate must be in [0, 1)");
  detail::require(spec.noise_sigma >= 0.0 && std::isfinite(spec.noise_sigma),
                  "synth_generate: noise_sigma must be nonnegative");

  PointCloud source = downsample_uniform(spec.base, spec.n_points, spec.seed);
  RandomStream rng(spec.seed, {0x73796e7468ULL});
  const Mat3 rotation = rng.rotation();
  const double extent = source.extent();
  Vec3 translation;
  for (int axis = 0; axis < 3; ++axis) translation[axis] = rng.uniform(-0.5, 0.5) * extent;
  const RigidTransform truth(rotation, translation);

  std::vector<Vec3> moved;
  moved.reserve(source.size());
  for (const Vec3& p : source.points()) {
    Vec3 q = truth(p);
    if (spec.noise_sigma > 0.0) {
      for (int axis = 0; axis < 3; ++axis) q[axis] += spec.noise_sigma * rng.normal();
    }
    moved.push_back(q);
  }
  const auto removed_count =
      static_cast<std::size_t>(std::floor(spec.outlier_rate * static_cast<double>(spec.n_points) + 1e-9));
  std::vector<char> removed(moved.size(), 0);
  for (std::size_t i : rng.sample_indices(moved.size(), removed_count)) removed[i] = 1;

  SyntheticPair out{source, source, truth, 0, {}};
  std::vector<Vec3> kept;
  for (std::size_t i = 0; i < moved.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(moved[i]);
    out.target_origin.push_back(i);
  }
  out.true_inlier_count = kept.size();
  out.target = PointCloud(std::move(kept));
  return out;
}

/// Putative correspondences from a synthetic pair: every target point paired
/// with its origin, then a fraction of the pairs rewired to random wrong targets.
inline CorrespondenceSet synth_putative(const SyntheticPair& pair, double rewire_fraction, std::uint64_t seed) {
  detail::require(rewire_fraction >= 0.0 && rewire_fraction <= 1.0, "synth_putative: fraction must be in [0, 1]");
  CorrespondenceSet out;
  for (std::size_t j = 0; j < pair.target_origin.size(); ++j) out.pairs.push_back({pair.target_origin[j], j, 0.0});
  const std::size_t n = out.pairs.size();
  RandomStream rng(seed, {0x72657769ULL});
  const auto count = static_cast<std::size_t>(std::floor(rewire_fraction * static_cast<double>(n) + 1e-9));
  if (n < 2) return out;
  for (std::size_t k : rng.sample_indices(n, count)) {
    std::size_t j = static_cast<std::size_t>(rng.below(n - 1));
    if (j >= out.pairs[k].target) ++j;
    out.pairs[k].target = j;
  }
  return out;
}

/// Machine-readable summary of one registration run.
struct RunReport {
  std::string method;
  RigidTransform transform;
  std::size_t consensus = 0;
  std::size_t iterations = 0;
  std::optional<double> wall_time_s;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::optional<double> rotation_error_deg;
  std::optional<double> translation_error;
  std::optional<std::size_t> true_inlier_count;

  friend bool operator==(const RunReport& a, const RunReport& b) {
    return a.method == b.method && a.transform == b.transform && a.consensus == b.consensus &&
           a.iterations == b.iterations && a.wall_time_s == b.wall_time_s && a.config == b.config &&
           a.rotation_error_deg == b.rotation_error_deg && a.translation_error == b.translation_error &&
           a.true_inlier_count == b.true_inlier_count;
  }
};

/// Fills the ground-truth error fields of a report.
inline void attach_truth(RunReport& r, const RigidTransform& truth) {
  r.rotation_error_deg = rotation_error_deg(r.transform.rotation(), truth.rotation());
  r.translation_error = (r.transform.translation() - truth.translation()).norm();
}

inline nlohmann::ordered_json to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  nlohmann::ordered_json rot = nlohmann::ordered_json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) rot.push_back(r.transform.rotation()(i, k));
  }
  j["rotation"] = rot;
  const Vec3& t = r.transform.translation();
  j["translation"] = {t.x(), t.y(), t.z()};
  j["consensus"] = r.consensus;
  j["iterations"] = r.iterations;
  if (r.wall_time_s) j["wall_time_s"] = *r.wall_time_s;
  j["config"] = r.config;
  if (r.rotation_error_deg) j["rotation_error_deg"] = *r.rotation_error_deg;
  if (r.translation_error) j["translation_error"] = *r.translation_error;
  if (r.true_inlier_count) j["true_inlier_count"] = *r.true_inlier_count;
  return j;
}

inline RunReport report_from_json(const nlohmann::ordered_json& j) {
  try {
    RunReport r;
    r.method = j.at("method").get<std::string>();
    const auto& rot = j.at("rotation");
    if (!rot.is_array() || rot.size() != 9) throw ParseError("report: rotation must have 9 entries");
    Mat3 m;
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) m(i, k) = rot.at(static_cast<std::size_t>(3 * i + k)).get<double>();
    }
    const auto& tr = j.at("translation");
    if (!tr.is_array() || tr.size() != 3) throw ParseError("report: translation must have 3 entries");
    r.transform = RigidTransform(m, Vec3(tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>()));
    r.consensus = j.at("consensus").get<std::size_t>();
    r.iterations = j.at("iterations").get<std::size_t>();
    if (j.contains("wall_time_s")) r.wall_time_s = j["wall_time_s"].get<double>();
    r.config = j.at("config");
    if (j.contains("rotation_error_deg")) r.rotation_error_deg = j["rotation_error_deg"].get<double>();
    if (j.contains("translation_error")) r.translation_error = j["translation_error"].get<double>();
    if (j.contains("true_inlier_count")) r.true_inlier_count = j["true_inlier_count"].get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

inline std::string text_table_header() {
  std::ostringstream os;
  os << std::left << std::setw(10) << "method" << std::right << std::setw(10) << "#Corrs" << std::setw(10) << "Time(s)"
     << std::setw(8) << "iters" << std::setw(12) << "rot_err" << std::setw(12) << "trans_err" << '\n';
  return os.str();
}

/// Fixed-width row: method, #Corrs, Time(s), iterations, rotation and translation errors.
inline std::string text_table_row(const RunReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(10) << r.method << std::right << std::setw(10) << r.consensus;
  if (r.wall_time_s) os << std::setw(10) << std::fixed << std::setprecision(2) << *r.wall_time_s;
  else os << std::setw(10) << "-";
  os << std::setw(8) << r.iterations;
  os << std::setprecision(4) << std::fixed;
  if (r.rotation_error_deg) os << std::setw(12) << *r.rotation_error_deg;
  else os << std::setw(12) << "-";
  if (r.translation_error) os << std::setw(12) << *r.translation_error;
  else os << std::setw(12) << "-";
  os << '\n';
  return os.str();
}

}  // namespace sdrsac
