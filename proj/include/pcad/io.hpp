#pragma once

#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pcad/point_cloud.hpp"

namespace pcad {

enum class CloudFormat { xyz, ply };

inline CloudFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  if (ext == ".ply" || ext == ".PLY") return CloudFormat::ply;
  if (ext == ".xyz" || ext == ".XYZ" || ext == ".txt") return CloudFormat::xyz;
  throw ArgumentError("cannot infer cloud format from '" + path.string() + "'");
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    auto j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("invalid number '" + std::string(tok) + "'", line);
  return v;
}

inline std::uint8_t parse_label(std::string_view tok, std::size_t line) {
  const double v = parse_double(tok, line);
  if (v != 0.0 && v != 1.0) throw ParseError("label must be 0 or 1, got '" + std::string(tok) + "'", line);
  return static_cast<std::uint8_t>(v);
}

inline PointCloud load_xyz(std::istream& in) {
  PointCloud cloud;
  std::vector<std::uint8_t> labels;
  int columns = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = split_ws(line);
    if (tok.empty() || tok.front().front() == '#') continue;
    const int cols = static_cast<int>(tok.size());
    if (cols != 3 && cols != 4) throw ParseError("expected 3 or 4 columns, got " + std::to_string(cols), lineno);
    if (columns == 0) columns = cols;
    if (cols != columns) throw ParseError("inconsistent column count", lineno);
    cloud.points.emplace_back(parse_double(tok[0], lineno), parse_double(tok[1], lineno),
                              parse_double(tok[2], lineno));
    if (cols == 4) labels.push_back(parse_label(tok[3], lineno));
  }
  if (cloud.empty()) throw EmptyCloudError("xyz input contains no points");
  if (columns == 4) cloud.labels = std::move(labels);
  return cloud;
}

inline PointCloud load_ply(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line != "ply") throw ParseError("missing 'ply' magic", lineno);

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
  };
  std::vector<Element> elements;
  bool ascii = false;
  while (true) {
    if (!next()) throw ParseError("unterminated ply header", lineno);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") throw ParseError("only ascii ply is supported", lineno);
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError("malformed element line", lineno);
      Element e;
      e.name = std::string(tok[1]);
      e.count = static_cast<std::size_t>(parse_double(tok[2], lineno));
      elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError("property before any element", lineno);
      if (tok.size() < 3) throw ParseError("malformed property line", lineno);
      elements.back().properties.emplace_back(tok.back());
    } else {
      throw ParseError("unknown header keyword '" + std::string(tok[0]) + "'", lineno);
    }
  }
  if (!ascii) throw ParseError("missing format line", lineno);

  PointCloud cloud;
  for (const auto& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i)
        if (!next()) throw ParseError("truncated element '" + e.name + "'", lineno);
      continue;
    }
    auto column = [&](std::string_view name) -> int {
      for (std::size_t c = 0; c < e.properties.size(); ++c)
        if (e.properties[c] == name) return static_cast<int>(c);
      return -1;
    };
    const int cx = column("x"), cy = column("y"), cz = column("z");
    if (cx < 0 || cy < 0 || cz < 0) throw ParseError("vertex element lacks x/y/z", lineno);
    const int ca = column("anomaly"), cs = column("score");
    const int cnx = column("nx"), cny = column("ny"), cnz = column("nz");
    const bool has_normals = cnx >= 0 && cny >= 0 && cnz >= 0;
    if (ca >= 0) cloud.labels.emplace();
    if (cs >= 0) cloud.scores.emplace();
    if (has_normals) cloud.normals.emplace();
    cloud.points.reserve(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!next()) throw ParseError("truncated vertex list", lineno);
      auto tok = split_ws(line);
      if (tok.size() != e.properties.size())
        throw ParseError("expected " + std::to_string(e.properties.size()) + " values", lineno);
      cloud.points.emplace_back(parse_double(tok[cx], lineno), parse_double(tok[cy], lineno),
                                parse_double(tok[cz], lineno));
      if (ca >= 0) cloud.labels->push_back(parse_label(tok[ca], lineno));
      if (cs >= 0) cloud.scores->push_back(parse_double(tok[cs], lineno));
      if (has_normals)
        cloud.normals->emplace_back(parse_double(tok[cnx], lineno), parse_double(tok[cny], lineno),
                                    parse_double(tok[cnz], lineno));
    }
  }
  if (cloud.empty()) throw EmptyCloudError("ply input contains no vertices");
  return cloud;
}

inline std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
  return std::string(buf, ptr);
}

}  // namespace detail

inline PointCloud load_cloud(std::istream& in, CloudFormat format) {
  return format == CloudFormat::xyz ? detail::load_xyz(in) : detail::load_ply(in);
}

inline PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return load_cloud(in, format);
}

inline PointCloud load_cloud(const std::filesystem::path& path) {
  return load_cloud(path, format_from_path(path));
}

// Writes coordinates in shortest round-trip decimal form, so reloading
// reproduces them bit-for-bit. xyz carries labels as a 4th column; ply
// carries labels as uchar "anomaly" and scores as double "score".
inline void save_cloud(const PointCloud& cloud, std::ostream& out, CloudFormat format) {
  if (cloud.empty()) throw EmptyCloudError("refusing to save an empty cloud");
  cloud.validate();
  using detail::fmt;
  if (format == CloudFormat::xyz) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      out << fmt(p.x()) << ' ' << fmt(p.y()) << ' ' << fmt(p.z());
      if (cloud.labels) out << ' ' << int((*cloud.labels)[i]);
      out << '\n';
    }
  } else {
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << '\n'
        << "property double x\nproperty double y\nproperty double z\n";
    if (cloud.normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
    if (cloud.labels) out << "property uchar anomaly\n";
    if (cloud.scores) out << "property double score\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      out << fmt(p.x()) << ' ' << fmt(p.y()) << ' ' << fmt(p.z());
      if (cloud.normals) {
        const auto& nrm = (*cloud.normals)[i];
        out << ' ' << fmt(nrm.x()) << ' ' << fmt(nrm.y()) << ' ' << fmt(nrm.z());
      }
      if (cloud.labels) out << ' ' << int((*cloud.labels)[i]);
      if (cloud.scores) out << ' ' << fmt((*cloud.scores)[i]);
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed");
}

inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  save_cloud(cloud, out, format);
}

inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  save_cloud(cloud, path, format_from_path(path));
}

}  // namespace pcad
