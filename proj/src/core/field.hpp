#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "core/geometry.hpp"

namespace vf {

// MLP shape: `depth` hidden ReLU layers of `width` channels over the encoded
// position, with the encoding re-injected at mid depth, then a softplus
// density head and a sigmoid colour branch fed by the encoded view direction.
struct FieldArch {
  int width = 64;
  int depth = 4;
  int l_pos = 10;
  int l_dir = 4;

  int pos_dim() const { return 3 * (1 + 2 * l_pos); }
  int dir_dim() const { return 3 * (1 + 2 * l_dir); }
  int skip_layer() const { return depth >= 2 ? depth / 2 : -1; }
  int colour_hidden() const { return width / 2 < 4 ? 4 : width / 2; }
  int64_t param_count() const;
  bool operator==(const FieldArch&) const = default;
};

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out
};

// Shifted so a zero pre-activation maps to a small positive density.
inline constexpr double kDensityShift = -1.0;

struct FieldNet {
  FieldArch arch;
  // layers[0..depth-1] trunk, then density head, colour hidden, rgb output.
  std::vector<Layer> layers;

  static FieldNet random(const FieldArch& arch, uint64_t seed);
  static FieldNet zeros(const FieldArch& arch);

  int64_t param_count() const { return arch.param_count(); }
  bool inheritance_equal(const FieldNet& other) const;

  template <typename Fn>
  void visit_params(Fn&& fn) {
    for (Layer& l : layers) {
      for (Eigen::Index i = 0; i < l.w.size(); ++i) fn(l.w.data()[i]);
      for (Eigen::Index i = 0; i < l.b.size(); ++i) fn(l.b.data()[i]);
    }
  }
};

// Deep copy; the clone shares no storage with the parent.
FieldNet clone_params(const FieldNet& parent);

Eigen::MatrixXd encode_positions(std::span<const Vec3> points, int l_pos);
Eigen::MatrixXd encode_directions(std::span<const Vec3> dirs, int l_dir);
// Single-point encoding of (position, unit view direction), concatenated.
Eigen::VectorXd encode(const Vec3& p, const Vec3& dir, int l_pos, int l_dir);

// Forward activations for one batch through one net, kept for backward.
struct FieldBatch {
  Eigen::MatrixXd enc_pos;  // pos_dim x m
  Eigen::MatrixXd enc_dir;  // dir_dim x m
  std::vector<Eigen::MatrixXd> trunk;
  Eigen::VectorXd sigma_pre;
  Eigen::VectorXd sigma;  // softplus-bounded density per sample
  Eigen::MatrixXd cfeat;
  Eigen::MatrixXd rgb;  // sigmoid-bounded colour, 3 x m

  Eigen::Index size() const { return enc_pos.cols(); }
};

void field_forward(const FieldNet& net, FieldBatch& batch);

struct FieldOutput {
  Rgb colour;
  double sigma;
};
FieldOutput forward_point(const FieldNet& net, const Vec3& p, const Vec3& dir);

struct FieldGrads {
  std::vector<Layer> layers;  // same shapes as the net

  static FieldGrads zeros(const FieldArch& arch);
  void add(const FieldGrads& other);
  void scale(double s);
  bool finite() const;
};

// Reverse-mode gradients of (rgb, sigma) w.r.t. all parameters, accumulated
// into `grads`. d_rgb is 3 x m, d_sigma is m.
void field_backward(const FieldNet& net, const FieldBatch& batch, const Eigen::MatrixXd& d_rgb,
                    const Eigen::VectorXd& d_sigma, FieldGrads& grads);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Layer> m;
  std::vector<Layer> v;
  int64_t t = 0;

  static AdamState zeros(const FieldArch& arch);
};

// Standard Adam with bias correction. Returns false (and leaves the net
// untouched) when the gradient is non-finite.
bool adam_step(FieldNet& net, AdamState& state, const FieldGrads& grads, const AdamHyper& hp);

double softplus(double x);
double sigmoid(double x);

}  // namespace vf
