#include "core/ply.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace vf {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int quantize_channel(double v) {
  return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_samples_ply(const std::string& path, std::span<const WeightedSample> samples) {
  std::ofstream out(path);
  if (!out) throw DataError("ply: cannot write " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << samples.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property double weight\nend_header\n";
  for (const WeightedSample& s : samples) {
    out << fmt_double(s.pos.x) << ' ' << fmt_double(s.pos.y) << ' ' << fmt_double(s.pos.z) << ' '
        << quantize_channel(s.colour[0]) << ' ' << quantize_channel(s.colour[1]) << ' '
        << quantize_channel(s.colour[2]) << ' ' << fmt_double(s.weight) << '\n';
  }
  if (!out) throw DataError("ply: write failed for " + path);
}

void write_points_ply(const std::string& path, std::span<const Vec3> points) {
  std::ofstream out(path);
  if (!out) throw DataError("ply: cannot write " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\nend_header\n";
  for (const Vec3& p : points) {
    out << fmt_double(p.x) << ' ' << fmt_double(p.y) << ' ' << fmt_double(p.z) << '\n';
  }
  if (!out) throw DataError("ply: write failed for " + path);
}

std::vector<WeightedSample> read_samples_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("ply: cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || line != "ply") throw DataError("ply: bad magic in " + path);

  size_t vertex_count = 0;
  std::vector<std::string> columns;
  bool ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string kind;
      ls >> kind;
      ascii = kind == "ascii";
    } else if (tok == "element") {
      std::string name;
      ls >> name >> vertex_count;
      if (name != "vertex") throw DataError("ply: unsupported element '" + name + "' in " + path);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      columns.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!ascii) throw DataError("ply: only ascii PLY is supported: " + path);

  const auto col = [&](const std::string& name) {
    const auto it = std::find(columns.begin(), columns.end(), name);
    return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
  };
  const int cx = col("x"), cy = col("y"), cz = col("z");
  const int cr = col("red"), cg = col("green"), cb = col("blue");
  const int cw = col("weight");
  if (cx < 0 || cy < 0 || cz < 0) throw DataError("ply: missing x/y/z properties in " + path);

  std::vector<WeightedSample> samples;
  samples.reserve(vertex_count);
  for (size_t i = 0; i < vertex_count; ++i) {
    if (!std::getline(in, line)) throw DataError("ply: truncated vertex list in " + path);
    std::istringstream ls(line);
    std::vector<double> vals(columns.size());
    for (double& v : vals) {
      if (!(ls >> v)) throw DataError("ply: malformed vertex row in " + path);
    }
    WeightedSample s;
    s.pos = {vals[static_cast<size_t>(cx)], vals[static_cast<size_t>(cy)],
             vals[static_cast<size_t>(cz)]};
    if (cr >= 0 && cg >= 0 && cb >= 0) {
      s.colour = {vals[static_cast<size_t>(cr)] / 255.0, vals[static_cast<size_t>(cg)] / 255.0,
                  vals[static_cast<size_t>(cb)] / 255.0};
    }
    if (cw >= 0) s.weight = vals[static_cast<size_t>(cw)];
    samples.push_back(s);
  }
  return samples;
}

}  // namespace vf
