#pragma once

// Procedural desk-scale parts sampled uniformly by surface area.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pcad/point_cloud.hpp"

namespace pcad {

enum class ShapeKind { washer, ring, hex_nut, bolt };

inline std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::washer: return "washer";
    case ShapeKind::ring: return "ring";
    case ShapeKind::hex_nut: return "hex_nut";
    case ShapeKind::bolt: return "bolt";
  }
  return "?";
}

inline ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "washer") return ShapeKind::washer;
  if (s == "ring") return ShapeKind::ring;
  if (s == "hex_nut") return ShapeKind::hex_nut;
  if (s == "bolt") return ShapeKind::bolt;
  throw ArgumentError("unknown shape kind '" + s + "'");
}

// Dimensions in millimetres. Field meaning per kind:
//   washer   outer/inner radius of the annulus, height = thickness
//   ring     torus: outer_radius = centre-line radius, inner_radius = tube radius
//   hex_nut  outer_radius = hexagon circumradius, inner_radius = bore, height
//   bolt     outer_radius = head circumradius, inner_radius = shaft radius,
//            height = shaft length, head_height, thread_pitch, thread_depth
struct ShapeSpec {
  ShapeKind kind = ShapeKind::washer;
  std::size_t n_points = 4096;
  double outer_radius = 10.0;
  double inner_radius = 5.0;
  double height = 2.0;
  double head_height = 4.0;
  double thread_pitch = 2.0;
  double thread_depth = 0.3;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

inline ShapeSpec default_shape(ShapeKind kind) {
  ShapeSpec s;
  s.kind = kind;
  switch (kind) {
    case ShapeKind::washer: s.outer_radius = 10.0, s.inner_radius = 5.0, s.height = 2.0; break;
    case ShapeKind::ring: s.outer_radius = 8.0, s.inner_radius = 2.0; break;
    case ShapeKind::hex_nut: s.outer_radius = 8.0, s.inner_radius = 4.0, s.height = 6.0; break;
    case ShapeKind::bolt:
      s.outer_radius = 6.0, s.inner_radius = 3.0, s.height = 16.0, s.head_height = 4.0;
      s.thread_pitch = 2.0, s.thread_depth = 0.3;
      break;
  }
  return s;
}

inline void validate(const ShapeSpec& s) {
  if (s.n_points < 512) throw ArgumentError("shape needs at least 512 points");
  if (!(s.noise_sigma >= 0.0)) throw ArgumentError("noise sigma must be >= 0");
  if (!(s.outer_radius > 0.0 && s.inner_radius > 0.0)) throw ArgumentError("radii must be positive");
  if (s.inner_radius >= s.outer_radius) throw ArgumentError("inner radius must be below outer radius");
  switch (s.kind) {
    case ShapeKind::washer:
      if (!(s.height > 0.0)) throw ArgumentError("washer thickness must be positive");
      break;
    case ShapeKind::ring: break;
    case ShapeKind::hex_nut:
      if (!(s.height > 0.0)) throw ArgumentError("nut height must be positive");
      if (s.inner_radius >= s.outer_radius * std::sqrt(3.0) / 2.0)
        throw ArgumentError("nut bore must fit inside the hexagon");
      break;
    case ShapeKind::bolt:
      if (!(s.height > 0.0 && s.head_height > 0.0 && s.thread_pitch > 0.0 && s.thread_depth >= 0.0))
        throw ArgumentError("bolt dimensions must be positive");
      if (s.thread_depth >= s.inner_radius) throw ArgumentError("thread depth must be below shaft radius");
      if (s.inner_radius + s.thread_depth >= s.outer_radius * std::sqrt(3.0) / 2.0)
        throw ArgumentError("bolt shaft must fit inside the head");
      break;
  }
}

namespace detail {

struct Sample {
  Vec3 point, normal;
};

// One surface patch with its exact area and a uniform-by-area sampler.
struct Face {
  double area;
  std::function<Sample(std::mt19937_64&)> sample;
};

inline double unit(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline Face annulus(double z, double r_in, double r_out, double nz) {
  const double area = std::numbers::pi * (r_out * r_out - r_in * r_in);
  return {area, [=](std::mt19937_64& rng) {
            const double r = std::sqrt(r_in * r_in + unit(rng) * (r_out * r_out - r_in * r_in));
            const double t = 2.0 * std::numbers::pi * unit(rng);
            return Sample{Vec3(r * std::cos(t), r * std::sin(t), z), Vec3(0, 0, nz)};
          }};
}

// Side of a cylinder; `outward` selects the normal direction.
inline Face cylinder(double r, double z0, double z1, bool outward) {
  return {2.0 * std::numbers::pi * r * (z1 - z0), [=](std::mt19937_64& rng) {
            const double t = 2.0 * std::numbers::pi * unit(rng);
            const double z = z0 + (z1 - z0) * unit(rng);
            const Vec3 n(std::cos(t), std::sin(t), 0.0);
            return Sample{Vec3(r * n.x(), r * n.y(), z), outward ? n : Vec3(-n)};
          }};
}

inline Face torus(double major, double minor) {
  return {4.0 * std::numbers::pi * std::numbers::pi * major * minor, [=](std::mt19937_64& rng) {
            // tube angle density proportional to (major + minor cos v)
            double v = 0.0;
            do v = 2.0 * std::numbers::pi * unit(rng);
            while (unit(rng) * (major + minor) > major + minor * std::cos(v));
            const double u = 2.0 * std::numbers::pi * unit(rng);
            const Vec3 n(std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v));
            const double rr = major + minor * std::cos(v);
            return Sample{Vec3(rr * std::cos(u), rr * std::sin(u), minor * std::sin(v)), n};
          }};
}

inline bool inside_hexagon(double x, double y, double circumradius) {
  const double apothem = circumradius * std::sqrt(3.0) / 2.0;
  // flat sides at y = +-apothem; vertices on the x axis
  for (int s = 0; s < 6; ++s) {
    const double ang = std::numbers::pi / 6.0 + s * std::numbers::pi / 3.0;
    if (x * std::cos(ang) + y * std::sin(ang) > apothem) return false;
  }
  return true;
}

// Hexagon (vertices on the x axis) with an optional central hole.
inline Face hexagon(double z, double circumradius, double hole, double nz) {
  const double area = 1.5 * std::sqrt(3.0) * circumradius * circumradius - std::numbers::pi * hole * hole;
  return {area, [=](std::mt19937_64& rng) {
            const double ymax = circumradius * std::sqrt(3.0) / 2.0;
            while (true) {
              const double x = circumradius * (2.0 * unit(rng) - 1.0);
              const double y = ymax * (2.0 * unit(rng) - 1.0);
              if (!inside_hexagon(x, y, circumradius) || x * x + y * y < hole * hole) continue;
              return Sample{Vec3(x, y, z), Vec3(0, 0, nz)};
            }
          }};
}

inline Face hex_sides(double circumradius, double z0, double z1) {
  return {6.0 * circumradius * (z1 - z0), [=](std::mt19937_64& rng) {
            const int side = std::uniform_int_distribution<int>(0, 5)(rng);
            const double a0 = side * std::numbers::pi / 3.0, a1 = a0 + std::numbers::pi / 3.0;
            const Vec3 p0(circumradius * std::cos(a0), circumradius * std::sin(a0), 0.0);
            const Vec3 p1(circumradius * std::cos(a1), circumradius * std::sin(a1), 0.0);
            const double mid = 0.5 * (a0 + a1);
            Vec3 p = p0 + unit(rng) * (p1 - p0);
            p.z() = z0 + (z1 - z0) * unit(rng);
            return Sample{p, Vec3(std::cos(mid), std::sin(mid), 0.0)};
          }};
}

// Helical thread: r(t, z) = r0 + depth * sin(2 pi z / pitch - t). Sampled by
// rejection against the exact area element sqrt(r^2 + r_t^2 + r^2 r_z^2).
inline Face thread(double r0, double depth, double pitch, double z0, double z1) {
  const double w = 2.0 * std::numbers::pi / pitch;
  auto element = [=](double t, double z) {
    const double phase = w * z - t;
    const double r = r0 + depth * std::sin(phase);
    const double rt = -depth * std::cos(phase);
    const double rz = depth * w * std::cos(phase);
    return std::sqrt(r * r + rt * rt + r * r * rz * rz);
  };
  // the element depends on the phase only; integrate over one period
  const int steps = 4096;
  double mean_element = 0.0, max_element = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double e = element(0.0, (i + 0.5) / steps * pitch);
    mean_element += e / steps;
    max_element = std::max(max_element, e);
  }
  const double area = mean_element * 2.0 * std::numbers::pi * (z1 - z0);
  return {area, [=](std::mt19937_64& rng) {
            while (true) {
              const double t = 2.0 * std::numbers::pi * unit(rng);
              const double z = z0 + (z1 - z0) * unit(rng);
              if (unit(rng) * max_element > element(t, z)) continue;
              const double phase = w * z - t;
              const double r = r0 + depth * std::sin(phase);
              const double rt = -depth * std::cos(phase);
              const double rz = depth * w * std::cos(phase);
              const Vec3 n(rt * std::sin(t) + r * std::cos(t), -rt * std::cos(t) + r * std::sin(t), -r * rz);
              return Sample{Vec3(r * std::cos(t), r * std::sin(t), z), n.normalized()};
            }
          }};
}

inline std::vector<Face> faces_of(const ShapeSpec& s) {
  switch (s.kind) {
    case ShapeKind::washer:
      return {annulus(s.height, s.inner_radius, s.outer_radius, 1.0), annulus(0.0, s.inner_radius, s.outer_radius, -1.0),
              cylinder(s.outer_radius, 0.0, s.height, true), cylinder(s.inner_radius, 0.0, s.height, false)};
    case ShapeKind::ring: return {torus(s.outer_radius, s.inner_radius)};
    case ShapeKind::hex_nut:
      return {hexagon(s.height, s.outer_radius, s.inner_radius, 1.0), hexagon(0.0, s.outer_radius, s.inner_radius, -1.0),
              hex_sides(s.outer_radius, 0.0, s.height), cylinder(s.inner_radius, 0.0, s.height, false)};
    case ShapeKind::bolt: {
      const double top = s.height + s.head_height;
      return {thread(s.inner_radius, s.thread_depth, s.thread_pitch, 0.0, s.height),
              annulus(0.0, 0.0, s.inner_radius, -1.0),
              hexagon(s.height, s.outer_radius, s.inner_radius, -1.0),
              hexagon(top, s.outer_radius, 0.0, 1.0),
              hex_sides(s.outer_radius, s.height, top)};
    }
  }
  return {};
}

}  // namespace detail

// Surface area of the part, summed over its faces.
inline double surface_area(const ShapeSpec& spec) {
  validate(spec);
  double a = 0.0;
  for (const auto& f : detail::faces_of(spec)) a += f.area;
  return a;
}

// Exactly n_points samples, uniform by area, each displaced along its
// surface normal by N(0, noise_sigma). Deterministic per seed.
inline PointCloud make_shape(const ShapeSpec& spec) {
  validate(spec);
  const auto faces = detail::faces_of(spec);
  std::vector<double> areas;
  for (const auto& f : faces) areas.push_back(f.area);
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  std::normal_distribution<double> noise(0.0, 1.0);
  std::mt19937_64 rng(spec.seed);
  PointCloud cloud;
  cloud.points.reserve(spec.n_points);
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    auto s = faces[pick(rng)].sample(rng);
    if (spec.noise_sigma > 0.0) s.point += spec.noise_sigma * noise(rng) * s.normal;
    cloud.points.push_back(s.point);
  }
  return cloud;
}

}  // namespace pcad
