#include "core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <vector>

#include "core/error.hpp"
#include "core/field.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace vf {

namespace {

constexpr uint32_t kMagic = 0x4b434656;  // "VFCK"
constexpr uint32_t kVersion = 1;

struct Writer {
  std::ofstream out;

  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw DataError("checkpoint: cannot write " + path);
  }
  template <typename T>
  void put(const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
};

struct Reader {
  std::ifstream in;
  std::string path;

  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw DataError("checkpoint: cannot open " + p);
  }
  template <typename T>
  T get(const char* section) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint: truncated " + std::string(section) + " in " + path);
    return v;
  }
};

void write_net(Writer& w, const FieldNet& net) {
  w.put<uint32_t>(static_cast<uint32_t>(net.arch.width));
  w.put<uint32_t>(static_cast<uint32_t>(net.arch.depth));
  w.put<uint32_t>(static_cast<uint32_t>(net.arch.l_pos));
  w.put<uint32_t>(static_cast<uint32_t>(net.arch.l_dir));
  w.put<uint64_t>(static_cast<uint64_t>(net.param_count()));
  for (const Layer& l : net.layers) {
    for (Eigen::Index i = 0; i < l.w.size(); ++i) w.put<float>(static_cast<float>(l.w.data()[i]));
    for (Eigen::Index i = 0; i < l.b.size(); ++i) w.put<float>(static_cast<float>(l.b.data()[i]));
  }
}

std::shared_ptr<FieldNet> read_net(Reader& r) {
  FieldArch arch;
  arch.width = static_cast<int>(r.get<uint32_t>("net architecture"));
  arch.depth = static_cast<int>(r.get<uint32_t>("net architecture"));
  arch.l_pos = static_cast<int>(r.get<uint32_t>("net architecture"));
  arch.l_dir = static_cast<int>(r.get<uint32_t>("net architecture"));
  if (arch.width < 1 || arch.width > (1 << 20) || arch.depth < 1 || arch.depth > 1024 ||
      arch.l_pos < 0 || arch.l_pos > 64 || arch.l_dir < 0 || arch.l_dir > 64) {
    throw DataError("checkpoint: implausible net architecture in " + r.path);
  }
  const uint64_t n = r.get<uint64_t>("net parameter count");
  auto net = std::make_shared<FieldNet>(FieldNet::zeros(arch));
  if (n != static_cast<uint64_t>(net->param_count())) {
    throw DataError("checkpoint: parameter count mismatch in " + r.path);
  }
  net->visit_params([&](double& p) { p = static_cast<double>(r.get<float>("net parameters")); });
  return net;
}

void write_diagram(Writer& w, const VoronoiDiagram& d);

void write_node(Writer& w, const VoronoiNode& node) {
  w.put<double>(node.centre.x);
  w.put<double>(node.centre.y);
  w.put<double>(node.centre.z);
  w.put<uint8_t>(node.net ? 1 : 0);
  if (node.net) write_net(w, *node.net);
  w.put<uint8_t>(node.child ? 1 : 0);
  if (node.child) write_diagram(w, *node.child);
}

void write_diagram(Writer& w, const VoronoiDiagram& d) {
  w.put<uint32_t>(static_cast<uint32_t>(d.level));
  w.put<uint32_t>(static_cast<uint32_t>(d.centres.size()));
  for (const VoronoiNode& node : d.cells) write_node(w, node);
}

VoronoiDiagram read_diagram(Reader& r);

void read_node(Reader& r, VoronoiNode& node) {
  node.centre.x = r.get<double>("node centre");
  node.centre.y = r.get<double>("node centre");
  node.centre.z = r.get<double>("node centre");
  if (r.get<uint8_t>("node net flag") != 0) node.net = read_net(r);
  if (r.get<uint8_t>("node child flag") != 0) {
    node.child = std::make_unique<VoronoiDiagram>(read_diagram(r));
  }
}

VoronoiDiagram read_diagram(Reader& r) {
  VoronoiDiagram d;
  d.level = static_cast<int>(r.get<uint32_t>("diagram level"));
  const uint32_t n = r.get<uint32_t>("diagram size");
  if (n == 0 || n > (1u << 24)) throw DataError("checkpoint: implausible diagram size in " + r.path);
  d.cells.resize(n);
  d.centres.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    read_node(r, d.cells[i]);
    d.centres[i] = d.cells[i].centre;
  }
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const VoronoiDiagram& root, const ModelMeta& meta) {
  Writer w(path);
  w.put<uint32_t>(kMagic);
  w.put<uint32_t>(kVersion);
  for (const Vec3& v : {meta.scene_box.lo, meta.scene_box.hi}) {
    w.put<double>(v.x);
    w.put<double>(v.y);
    w.put<double>(v.z);
  }
  for (double c : meta.background) w.put<double>(c);
  w.put<double>(meta.near);
  w.put<double>(meta.far);
  write_diagram(w, root);
  if (!w.out) throw DataError("checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  Reader r(path);
  if (r.get<uint32_t>("magic") != kMagic) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  const uint32_t version = r.get<uint32_t>("version");
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version in " + path);
  }
  Model m;
  m.meta.scene_box.lo = {r.get<double>("scene box"), r.get<double>("scene box"),
                         r.get<double>("scene box")};
  m.meta.scene_box.hi = {r.get<double>("scene box"), r.get<double>("scene box"),
                         r.get<double>("scene box")};
  for (int c = 0; c < 3; ++c) m.meta.background[static_cast<size_t>(c)] = r.get<double>("background");
  m.meta.near = r.get<double>("near plane");
  m.meta.far = r.get<double>("far plane");
  m.root = read_diagram(r);
  return m;
}

}  // namespace vf
