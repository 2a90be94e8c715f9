#include "core/field.hpp"

#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace vf {

namespace {

struct LayerDims {
  int in;
  int out;
};

std::vector<LayerDims> layer_dims(const FieldArch& a) {
  std::vector<LayerDims> dims;
  dims.reserve(static_cast<size_t>(a.depth) + 3);
  for (int l = 0; l < a.depth; ++l) {
    int in = (l == 0) ? a.pos_dim() : a.width;
    if (l == a.skip_layer()) in += a.pos_dim();
    dims.push_back({in, a.width});
  }
  dims.push_back({a.width, 1});                             // density head
  dims.push_back({a.width + a.dir_dim(), a.colour_hidden()});  // colour hidden
  dims.push_back({a.colour_hidden(), 3});                   // rgb output
  return dims;
}

void validate_arch(const FieldArch& a) {
  if (a.width < 1 || a.depth < 1 || a.l_pos < 0 || a.l_dir < 0) {
    throw UsageError("field: invalid architecture");
  }
}

}  // namespace

int64_t FieldArch::param_count() const {
  int64_t n = 0;
  for (const LayerDims& d : layer_dims(*this)) {
    n += static_cast<int64_t>(d.in) * d.out + d.out;
  }
  return n;
}

FieldNet FieldNet::random(const FieldArch& arch, uint64_t seed) {
  validate_arch(arch);
  FieldNet net;
  net.arch = arch;
  Rng rng(seed);
  for (const LayerDims& d : layer_dims(arch)) {
    Layer l;
    l.w.resize(d.out, d.in);
    l.b.resize(d.out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d.in));
    for (Eigen::Index i = 0; i < l.w.size(); ++i) l.w.data()[i] = rng.uniform(-bound, bound);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b.data()[i] = rng.uniform(-bound, bound);
    net.layers.push_back(std::move(l));
  }
  return net;
}

FieldNet FieldNet::zeros(const FieldArch& arch) {
  validate_arch(arch);
  FieldNet net;
  net.arch = arch;
  for (const LayerDims& d : layer_dims(arch)) {
    Layer l;
    l.w = Eigen::MatrixXd::Zero(d.out, d.in);
    l.b = Eigen::VectorXd::Zero(d.out);
    net.layers.push_back(std::move(l));
  }
  return net;
}

bool FieldNet::inheritance_equal(const FieldNet& other) const {
  if (!(arch == other.arch)) return false;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].w != other.layers[i].w) return false;
    if (layers[i].b != other.layers[i].b) return false;
  }
  return true;
}

FieldNet clone_params(const FieldNet& parent) { return parent; }

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

// Rows: the raw components, then per band the sin triple and the cos triple.
void encode_into(const Vec3& v, int bands, Eigen::MatrixXd& out, Eigen::Index col) {
  out(0, col) = v.x;
  out(1, col) = v.y;
  out(2, col) = v.z;
  double freq = M_PI;
  for (int l = 0; l < bands; ++l) {
    const Eigen::Index row = 3 + 6 * l;
    out(row + 0, col) = std::sin(freq * v.x);
    out(row + 1, col) = std::sin(freq * v.y);
    out(row + 2, col) = std::sin(freq * v.z);
    out(row + 3, col) = std::cos(freq * v.x);
    out(row + 4, col) = std::cos(freq * v.y);
    out(row + 5, col) = std::cos(freq * v.z);
    freq *= 2.0;
  }
}

}  // namespace

Eigen::MatrixXd encode_positions(std::span<const Vec3> points, int l_pos) {
  Eigen::MatrixXd out(3 * (1 + 2 * l_pos), static_cast<Eigen::Index>(points.size()));
  for (size_t i = 0; i < points.size(); ++i) {
    if (!points[i].finite()) throw UsageError("field: encoding a non-finite position");
    encode_into(points[i], l_pos, out, static_cast<Eigen::Index>(i));
  }
  return out;
}

Eigen::MatrixXd encode_directions(std::span<const Vec3> dirs, int l_dir) {
  Eigen::MatrixXd out(3 * (1 + 2 * l_dir), static_cast<Eigen::Index>(dirs.size()));
  for (size_t i = 0; i < dirs.size(); ++i) {
    if (!dirs[i].finite()) throw UsageError("field: encoding a non-finite direction");
    encode_into(dirs[i], l_dir, out, static_cast<Eigen::Index>(i));
  }
  return out;
}

Eigen::VectorXd encode(const Vec3& p, const Vec3& dir, int l_pos, int l_dir) {
  if (!p.finite() || !dir.finite()) throw UsageError("field: encoding non-finite input");
  if (std::abs(dir.norm() - 1.0) > 1e-4) {
    throw UsageError("field: view direction must be normalized");
  }
  const Eigen::MatrixXd ep = encode_positions(std::span<const Vec3>(&p, 1), l_pos);
  const Eigen::MatrixXd ed = encode_directions(std::span<const Vec3>(&dir, 1), l_dir);
  Eigen::VectorXd out(ep.rows() + ed.rows());
  out << ep.col(0), ed.col(0);
  return out;
}

void field_forward(const FieldNet& net, FieldBatch& batch) {
  const FieldArch& a = net.arch;
  const Eigen::Index m = batch.enc_pos.cols();
  batch.trunk.resize(static_cast<size_t>(a.depth));

  for (int l = 0; l < a.depth; ++l) {
    const Layer& layer = net.layers[static_cast<size_t>(l)];
    Eigen::MatrixXd& h = batch.trunk[static_cast<size_t>(l)];
    if (l == 0) {
      h.noalias() = layer.w * batch.enc_pos;
    } else if (l == a.skip_layer()) {
      h.noalias() = layer.w.leftCols(a.width) * batch.trunk[static_cast<size_t>(l - 1)];
      h.noalias() += layer.w.rightCols(a.pos_dim()) * batch.enc_pos;
    } else {
      h.noalias() = layer.w * batch.trunk[static_cast<size_t>(l - 1)];
    }
    h.colwise() += layer.b;
    h = h.cwiseMax(0.0);
  }

  const Eigen::MatrixXd& top = batch.trunk.back();
  const Layer& sig = net.layers[static_cast<size_t>(a.depth)];
  batch.sigma_pre = (sig.w * top).transpose().col(0);
  batch.sigma_pre.array() += sig.b(0);
  batch.sigma.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    batch.sigma(i) = softplus(batch.sigma_pre(i) + kDensityShift);
  }

  const Layer& ch = net.layers[static_cast<size_t>(a.depth) + 1];
  batch.cfeat.noalias() = ch.w.leftCols(a.width) * top;
  batch.cfeat.noalias() += ch.w.rightCols(a.dir_dim()) * batch.enc_dir;
  batch.cfeat.colwise() += ch.b;
  batch.cfeat = batch.cfeat.cwiseMax(0.0);

  const Layer& ro = net.layers[static_cast<size_t>(a.depth) + 2];
  batch.rgb.noalias() = ro.w * batch.cfeat;
  batch.rgb.colwise() += ro.b;
  batch.rgb = batch.rgb.unaryExpr([](double x) { return sigmoid(x); });
}

FieldOutput forward_point(const FieldNet& net, const Vec3& p, const Vec3& dir) {
  FieldBatch b;
  b.enc_pos = encode_positions(std::span<const Vec3>(&p, 1), net.arch.l_pos);
  b.enc_dir = encode_directions(std::span<const Vec3>(&dir, 1), net.arch.l_dir);
  field_forward(net, b);
  return FieldOutput{{b.rgb(0, 0), b.rgb(1, 0), b.rgb(2, 0)}, b.sigma(0)};
}

FieldGrads FieldGrads::zeros(const FieldArch& arch) {
  FieldGrads g;
  for (const LayerDims& d : layer_dims(arch)) {
    Layer l;
    l.w = Eigen::MatrixXd::Zero(d.out, d.in);
    l.b = Eigen::VectorXd::Zero(d.out);
    g.layers.push_back(std::move(l));
  }
  return g;
}

void FieldGrads::add(const FieldGrads& other) {
  for (size_t i = 0; i < layers.size(); ++i) {
    layers[i].w += other.layers[i].w;
    layers[i].b += other.layers[i].b;
  }
}

void FieldGrads::scale(double s) {
  for (Layer& l : layers) {
    l.w *= s;
    l.b *= s;
  }
}

bool FieldGrads::finite() const {
  for (const Layer& l : layers) {
    if (!l.w.allFinite() || !l.b.allFinite()) return false;
  }
  return true;
}

void field_backward(const FieldNet& net, const FieldBatch& batch, const Eigen::MatrixXd& d_rgb,
                    const Eigen::VectorXd& d_sigma, FieldGrads& grads) {
  const FieldArch& a = net.arch;
  const Eigen::MatrixXd& top = batch.trunk.back();

  // rgb output: sigmoid'(x) = y(1-y)
  const Eigen::MatrixXd d_rgb_pre =
      d_rgb.cwiseProduct(batch.rgb.cwiseProduct((1.0 - batch.rgb.array()).matrix()));
  const size_t i_rgb = static_cast<size_t>(a.depth) + 2;
  grads.layers[i_rgb].w.noalias() += d_rgb_pre * batch.cfeat.transpose();
  grads.layers[i_rgb].b += d_rgb_pre.rowwise().sum();

  // colour hidden (ReLU over [trunk_top; enc_dir])
  Eigen::MatrixXd d_cfeat = net.layers[i_rgb].w.transpose() * d_rgb_pre;
  d_cfeat = d_cfeat.cwiseProduct((batch.cfeat.array() > 0.0).cast<double>().matrix());
  const size_t i_ch = static_cast<size_t>(a.depth) + 1;
  grads.layers[i_ch].w.leftCols(a.width).noalias() += d_cfeat * top.transpose();
  grads.layers[i_ch].w.rightCols(a.dir_dim()).noalias() += d_cfeat * batch.enc_dir.transpose();
  grads.layers[i_ch].b += d_cfeat.rowwise().sum();
  Eigen::MatrixXd d_top = net.layers[i_ch].w.leftCols(a.width).transpose() * d_cfeat;

  // density head: softplus'(x) = sigmoid(x)
  Eigen::VectorXd d_sigma_pre(batch.sigma_pre.size());
  for (Eigen::Index i = 0; i < d_sigma_pre.size(); ++i) {
    d_sigma_pre(i) = d_sigma(i) * sigmoid(batch.sigma_pre(i) + kDensityShift);
  }
  const size_t i_sig = static_cast<size_t>(a.depth);
  grads.layers[i_sig].w.noalias() += d_sigma_pre.transpose() * top.transpose();
  grads.layers[i_sig].b(0) += d_sigma_pre.sum();
  d_top.noalias() += net.layers[i_sig].w.transpose() * d_sigma_pre.transpose();

  // trunk, top down
  Eigen::MatrixXd d_h = std::move(d_top);
  for (int l = a.depth - 1; l >= 0; --l) {
    const Layer& layer = net.layers[static_cast<size_t>(l)];
    Layer& g = grads.layers[static_cast<size_t>(l)];
    const Eigen::MatrixXd d_pre =
        d_h.cwiseProduct((batch.trunk[static_cast<size_t>(l)].array() > 0.0).cast<double>().matrix());
    g.b += d_pre.rowwise().sum();
    if (l == 0) {
      g.w.noalias() += d_pre * batch.enc_pos.transpose();
    } else if (l == a.skip_layer()) {
      g.w.leftCols(a.width).noalias() +=
          d_pre * batch.trunk[static_cast<size_t>(l - 1)].transpose();
      g.w.rightCols(a.pos_dim()).noalias() += d_pre * batch.enc_pos.transpose();
      d_h = layer.w.leftCols(a.width).transpose() * d_pre;
      continue;
    } else {
      g.w.noalias() += d_pre * batch.trunk[static_cast<size_t>(l - 1)].transpose();
    }
    if (l > 0) d_h = layer.w.transpose() * d_pre;
  }
}

AdamState AdamState::zeros(const FieldArch& arch) {
  AdamState s;
  for (const LayerDims& d : layer_dims(arch)) {
    Layer m;
    m.w = Eigen::MatrixXd::Zero(d.out, d.in);
    m.b = Eigen::VectorXd::Zero(d.out);
    s.m.push_back(m);
    s.v.push_back(std::move(m));
  }
  return s;
}

bool adam_step(FieldNet& net, AdamState& state, const FieldGrads& grads, const AdamHyper& hp) {
  if (!grads.finite()) return false;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = hp.beta1 * m + (1.0 - hp.beta1) * g;
    v = hp.beta2 * v + (1.0 - hp.beta2) * g.cwiseProduct(g);
    p.array() -= hp.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + hp.eps);
  };
  for (size_t i = 0; i < net.layers.size(); ++i) {
    update(net.layers[i].w, grads.layers[i].w, state.m[i].w, state.v[i].w);
    update(net.layers[i].b, grads.layers[i].b, state.m[i].b, state.v[i].b);
  }
  return true;
}

}  // namespace vf
