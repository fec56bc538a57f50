// splitnerf is Copyright(c) 2026 the splitnerf authors.
// The splitnerf source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "splitnerf/common.hpp"
#include "splitnerf/encoding.hpp"
#include "splitnerf/random.hpp"

namespace splitnerf {

// Architecture and behavior switches for the two-branch field network.
// The transmitted branch predicts density, radiance and the per-point
// reflection fraction alpha; the reflected branch predicts density and
// radiance only and never sees the viewing direction.
struct ModelConfig {
  int pos_freqs = 10;
  int dir_freqs = 4;
  double pos_scale = 1.0;  // positions are multiplied by this before encoding

  int trunk_depth = 4;
  int trunk_width = 128;
  int skip_layer = 2;  // trunk layer that re-receives the encoded position
  int dir_hidden = 64;

  int refl_depth = 4;
  int refl_width = 128;

  double sigma_init = 0.1;     // initial density (softplus head bias)
  bool view_dependent = true;  // false: transmitted color ignores direction
  bool single_field = false;   // alpha == 0, reflected branch inert

  PositionalEncoding pos_encoding() const { return {pos_freqs, true}; }
  PositionalEncoding dir_encoding() const { return {dir_freqs, true}; }
  int pos_dim() const { return pos_encoding().output_dim(3); }
  int dir_dim() const { return dir_encoding().output_dim(3); }

  void validate() const {
    if (trunk_depth < 1 || refl_depth < 1 || trunk_width < 1 || refl_width < 1 ||
        dir_hidden < 1)
      throw InputError("model config: layer sizes must be >= 1");
    if (pos_freqs < 1 || dir_freqs < 1)
      throw InputError("model config: encoding frequencies must be >= 1");
    if (!(sigma_init > 0.0))
      throw InputError("model config: sigma_init must be > 0");
  }
  // Skip connection only applies to interior trunk layers.
  int effective_skip() const {
    return (skip_layer > 0 && skip_layer < trunk_depth) ? skip_layer : -1;
  }
};

// Per-point outputs of the two branches.
struct FieldSample {
  double sigma_t = 0.0;
  Vec3 c_t = Vec3::Zero();
  double alpha = 0.0;
  double sigma_r = 0.0;
  Vec3 c_r = Vec3::Zero();
};

namespace detail {
struct LinearSpec {
  int in = 0, out = 0;
  long w_off = 0, b_off = 0;  // offsets into the flat parameter vector
  long size() const { return static_cast<long>(in) * out + out; }
};
}  // namespace detail

// Intermediate activations kept for the backward pass. Reused across calls;
// matrices keep their allocations when batch shapes repeat.
struct ModelCache {
  int n = 0;
  // Smallest |pre-activation| seen across all rectifier layers in the last
  // forward pass. Gradient-check fixtures use it to stay clear of the kink.
  double min_abs_preact = 0.0;
  MatrixXd ex, ed;
  std::vector<MatrixXd> t_h;  // post-relu trunk activations
  MatrixXd t_skip_in;         // [h_{skip-1}, ex]
  VectorXd z_sigma_t;         // pre-softplus
  VectorXd sigma_t;
  VectorXd alpha;  // post-logistic
  MatrixXd dir_in;  // [h_last, ed]
  MatrixXd g;       // post-relu direction hidden layer
  MatX3 c_t;        // post-logistic
  std::vector<MatrixXd> r_h;
  VectorXd z_sigma_r;
  VectorXd sigma_r;
  MatX3 c_r;
};

// Gradients of a scalar loss with respect to every per-point model output.
struct FieldGrads {
  VectorXd d_sigma_t, d_alpha, d_sigma_r;
  MatX3 d_c_t, d_c_r;

  void setZero(int n) {
    d_sigma_t = VectorXd::Zero(n);
    d_alpha = VectorXd::Zero(n);
    d_sigma_r = VectorXd::Zero(n);
    d_c_t = MatX3::Zero(n, 3);
    d_c_r = MatX3::Zero(n, 3);
  }
};

// Two-branch coordinate network over a single flat parameter vector.
// Output activations enforce the range invariants: softplus densities >= 0,
// logistic colors and alpha in (0, 1).
class TwoFieldModel {
 public:
  ModelConfig cfg;
  VectorXd params;

  TwoFieldModel() = default;
  explicit TwoFieldModel(const ModelConfig& config, uint64_t init_seed = 0)
      : cfg(config) {
    cfg.validate();
    build_layout();
    init_params(init_seed);
  }

  long param_count() const { return total_params_; }

  // Batched forward pass. X: n x 3 world positions, D: n x 3 unit directions.
  // use_view_dirs lets the trainer zero the direction features during the
  // warm-up phase; it is forced off when the model is not view-dependent.
  void forward(const Eigen::Ref<const MatrixXd>& X,
               const Eigen::Ref<const MatrixXd>& D, bool use_view_dirs,
               ModelCache& c) const {
    const int n = static_cast<int>(X.rows());
    c.n = n;
    c.min_abs_preact = std::numeric_limits<double>::infinity();
    encode_batch(cfg.pos_encoding(), (X * cfg.pos_scale).eval(), c.ex);
    if (cfg.view_dependent && use_view_dirs)
      encode_batch(cfg.dir_encoding(), D, c.ed);
    else
      c.ed = MatrixXd::Zero(n, cfg.dir_dim());

    // Transmitted trunk.
    c.t_h.resize(static_cast<size_t>(cfg.trunk_depth));
    const int skip = cfg.effective_skip();
    for (int i = 0; i < cfg.trunk_depth; ++i) {
      const MatrixXd* in = nullptr;
      if (i == 0) {
        in = &c.ex;
      } else if (i == skip) {
        c.t_skip_in.resize(n, cfg.trunk_width + cfg.pos_dim());
        c.t_skip_in.leftCols(cfg.trunk_width) = c.t_h[static_cast<size_t>(i - 1)];
        c.t_skip_in.rightCols(cfg.pos_dim()) = c.ex;
        in = &c.t_skip_in;
      } else {
        in = &c.t_h[static_cast<size_t>(i - 1)];
      }
      linear_relu(t_trunk_[static_cast<size_t>(i)], *in, c.t_h[static_cast<size_t>(i)], c.min_abs_preact);
    }
    const MatrixXd& feat = c.t_h.back();

    // Heads off the transmitted feature.
    linear_raw(t_sigma_, feat, c.z_sigma_t);
    c.sigma_t = c.z_sigma_t.unaryExpr([](double z) { return softplus(z); });
    VectorXd z_alpha;
    linear_raw(t_alpha_, feat, z_alpha);
    c.alpha = z_alpha.unaryExpr([](double z) { return logistic(z); });
    if (cfg.single_field) c.alpha.setZero();

    c.dir_in.resize(n, cfg.trunk_width + cfg.dir_dim());
    c.dir_in.leftCols(cfg.trunk_width) = feat;
    c.dir_in.rightCols(cfg.dir_dim()) = c.ed;
    linear_relu(t_dir_, c.dir_in, c.g, c.min_abs_preact);
    MatrixXd z_ct;
    linear_raw(t_color_, c.g, z_ct);
    c.c_t = z_ct.unaryExpr([](double z) { return logistic(z); });

    // Reflected branch (plain trunk, no direction input).
    if (cfg.single_field) {
      c.sigma_r = VectorXd::Zero(n);
      c.z_sigma_r = VectorXd::Zero(n);
      c.c_r = MatX3::Zero(n, 3);
      return;
    }
    c.r_h.resize(static_cast<size_t>(cfg.refl_depth));
    for (int i = 0; i < cfg.refl_depth; ++i) {
      const MatrixXd& in = (i == 0) ? c.ex : c.r_h[static_cast<size_t>(i - 1)];
      linear_relu(r_trunk_[static_cast<size_t>(i)], in, c.r_h[static_cast<size_t>(i)], c.min_abs_preact);
    }
    linear_raw(r_sigma_, c.r_h.back(), c.z_sigma_r);
    c.sigma_r = c.z_sigma_r.unaryExpr([](double z) { return softplus(z); });
    MatrixXd z_cr;
    linear_raw(r_color_, c.r_h.back(), z_cr);
    c.c_r = z_cr.unaryExpr([](double z) { return logistic(z); });
  }

  // Accumulates parameter gradients for the batch held in `c` into `grad`
  // (flat, same layout as params). `grad` must be pre-sized and may already
  // hold contributions from other batches.
  void backward(const ModelCache& c, const FieldGrads& g, VectorXd& grad) const {
    const int n = c.n;
    MatrixXd dfeat = MatrixXd::Zero(n, cfg.trunk_width);

    // Color head: c_t = logistic(z), z = color(g).
    MatrixXd dz = c.c_t.array() * (1.0 - c.c_t.array()) * g.d_c_t.array();
    MatrixXd dg;
    linear_backward(t_color_, c.g, dz, grad, &dg);
    dg.array() *= (c.g.array() > 0.0).cast<double>();
    MatrixXd d_dir_in;
    linear_backward(t_dir_, c.dir_in, dg, grad, &d_dir_in);
    dfeat += d_dir_in.leftCols(cfg.trunk_width);

    // Alpha head (skipped when forced to zero).
    if (!cfg.single_field) {
      VectorXd dz_alpha =
          (c.alpha.array() * (1.0 - c.alpha.array()) * g.d_alpha.array()).matrix();
      MatrixXd dfeat_alpha;
      linear_backward_vec(t_alpha_, c.t_h.back(), dz_alpha, grad, &dfeat_alpha);
      dfeat += dfeat_alpha;
    }

    // Density head: sigma = softplus(z) so dz = dsigma * logistic(z).
    VectorXd dz_sigma =
        (g.d_sigma_t.array() *
         c.z_sigma_t.unaryExpr([](double z) { return logistic(z); }).array())
            .matrix();
    MatrixXd dfeat_sigma;
    linear_backward_vec(t_sigma_, c.t_h.back(), dz_sigma, grad, &dfeat_sigma);
    dfeat += dfeat_sigma;

    // Transmitted trunk, reverse order.
    const int skip = cfg.effective_skip();
    MatrixXd dh = dfeat;
    for (int i = cfg.trunk_depth - 1; i >= 0; --i) {
      dh.array() *= (c.t_h[static_cast<size_t>(i)].array() > 0.0).cast<double>();
      const MatrixXd& in = (i == 0) ? c.ex
                           : (i == skip) ? c.t_skip_in
                                         : c.t_h[static_cast<size_t>(i - 1)];
      if (i == 0) {
        linear_backward(t_trunk_[0], in, dh, grad, nullptr);
      } else {
        MatrixXd din;
        linear_backward(t_trunk_[static_cast<size_t>(i)], in, dh, grad, &din);
        dh = (i == skip) ? din.leftCols(cfg.trunk_width).eval() : std::move(din);
      }
    }

    if (cfg.single_field) return;

    // Reflected branch.
    MatrixXd dz_cr = c.c_r.array() * (1.0 - c.c_r.array()) * g.d_c_r.array();
    MatrixXd drfeat;
    linear_backward(r_color_, c.r_h.back(), dz_cr, grad, &drfeat);
    VectorXd dz_sr =
        (g.d_sigma_r.array() *
         c.z_sigma_r.unaryExpr([](double z) { return logistic(z); }).array())
            .matrix();
    MatrixXd drfeat_sigma;
    linear_backward_vec(r_sigma_, c.r_h.back(), dz_sr, grad, &drfeat_sigma);
    drfeat += drfeat_sigma;
    MatrixXd drh = std::move(drfeat);
    for (int i = cfg.refl_depth - 1; i >= 0; --i) {
      drh.array() *= (c.r_h[static_cast<size_t>(i)].array() > 0.0).cast<double>();
      const MatrixXd& in = (i == 0) ? c.ex : c.r_h[static_cast<size_t>(i - 1)];
      if (i == 0) {
        linear_backward(r_trunk_[0], in, drh, grad, nullptr);
      } else {
        MatrixXd din;
        linear_backward(r_trunk_[static_cast<size_t>(i)], in, drh, grad, &din);
        drh = std::move(din);
      }
    }
  }

  FieldSample evaluate(const Vec3& x, const Vec3& d,
                       bool use_view_dirs = true) const {
    MatrixXd X(1, 3), D(1, 3);
    X.row(0) = x.transpose();
    D.row(0) = d.transpose();
    ModelCache c;
    forward(X, D, use_view_dirs, c);
    FieldSample s;
    s.sigma_t = c.sigma_t[0];
    s.c_t = c.c_t.row(0).transpose();
    s.alpha = c.alpha[0];
    s.sigma_r = c.sigma_r[0];
    s.c_r = c.c_r.row(0).transpose();
    return s;
  }

  // Layer shape description used by the checkpoint format.
  std::vector<std::array<int, 2>> layer_shapes() const {
    std::vector<std::array<int, 2>> out;
    for (const auto& l : all_layers()) out.push_back({l->out, l->in});
    return out;
  }

 private:
  using LinearSpec = detail::LinearSpec;
  std::vector<LinearSpec> t_trunk_;
  LinearSpec t_sigma_, t_alpha_, t_dir_, t_color_;
  std::vector<LinearSpec> r_trunk_;
  LinearSpec r_sigma_, r_color_;
  long total_params_ = 0;

  std::vector<const LinearSpec*> all_layers() const {
    std::vector<const LinearSpec*> out;
    for (const auto& l : t_trunk_) out.push_back(&l);
    out.push_back(&t_sigma_);
    out.push_back(&t_alpha_);
    out.push_back(&t_dir_);
    out.push_back(&t_color_);
    for (const auto& l : r_trunk_) out.push_back(&l);
    out.push_back(&r_sigma_);
    out.push_back(&r_color_);
    return out;
  }

  void build_layout() {
    long off = 0;
    auto add = [&off](int in, int out) {
      LinearSpec l;
      l.in = in;
      l.out = out;
      l.w_off = off;
      l.b_off = off + static_cast<long>(in) * out;
      off += l.size();
      return l;
    };
    const int skip = cfg.effective_skip();
    t_trunk_.clear();
    for (int i = 0; i < cfg.trunk_depth; ++i) {
      const int in = (i == 0) ? cfg.pos_dim()
                              : cfg.trunk_width + (i == skip ? cfg.pos_dim() : 0);
      t_trunk_.push_back(add(in, cfg.trunk_width));
    }
    t_sigma_ = add(cfg.trunk_width, 1);
    t_alpha_ = add(cfg.trunk_width, 1);
    t_dir_ = add(cfg.trunk_width + cfg.dir_dim(), cfg.dir_hidden);
    t_color_ = add(cfg.dir_hidden, 3);
    r_trunk_.clear();
    for (int i = 0; i < cfg.refl_depth; ++i)
      r_trunk_.push_back(add(i == 0 ? cfg.pos_dim() : cfg.refl_width, cfg.refl_width));
    r_sigma_ = add(cfg.refl_width, 1);
    r_color_ = add(cfg.refl_width, 3);
    total_params_ = off;
  }

  void init_params(uint64_t seed) {
    params = VectorXd::Zero(total_params_);
    const auto layers = all_layers();
    for (size_t i = 0; i < layers.size(); ++i) {
      auto s = make_stream(seed, stream_key::kInit, i);
      const LinearSpec& l = *layers[i];
      const double scale = 1.0 / std::sqrt(static_cast<double>(l.in));
      for (long k = 0; k < static_cast<long>(l.in) * l.out; ++k)
        params[l.w_off + k] = (2.0 * s() - 1.0) * scale;
      // biases stay zero
    }
    const double sigma_bias = inverse_softplus(cfg.sigma_init);
    params[t_sigma_.b_off] = sigma_bias;
    params[r_sigma_.b_off] = sigma_bias;
  }

  Eigen::Map<const MatrixXd> W(const LinearSpec& l) const {
    return {params.data() + l.w_off, l.out, l.in};
  }
  Eigen::Map<const VectorXd> b(const LinearSpec& l) const {
    return {params.data() + l.b_off, l.out};
  }

  void linear_raw(const LinearSpec& l, const Eigen::Ref<const MatrixXd>& X,
                  MatrixXd& Z) const {
    Z.noalias() = X * W(l).transpose();
    Z.rowwise() += b(l).transpose();
  }
  void linear_raw(const LinearSpec& l, const Eigen::Ref<const MatrixXd>& X,
                  VectorXd& z) const {
    z.noalias() = X * W(l).transpose().col(0);
    z.array() += b(l)[0];
  }
  void linear_relu(const LinearSpec& l, const Eigen::Ref<const MatrixXd>& X,
                   MatrixXd& H, double& min_abs_preact) const {
    linear_raw(l, X, H);
    if (H.size() > 0)
      min_abs_preact = std::min(min_abs_preact, H.cwiseAbs().minCoeff());
    H = H.cwiseMax(0.0);
  }

  // Accumulates dW, db for layer `l` given upstream dZ; optionally returns
  // the gradient with respect to the layer input.
  void linear_backward(const LinearSpec& l, const Eigen::Ref<const MatrixXd>& X,
                       const Eigen::Ref<const MatrixXd>& dZ, VectorXd& grad,
                       MatrixXd* dX) const {
    Eigen::Map<MatrixXd> gW(grad.data() + l.w_off, l.out, l.in);
    Eigen::Map<VectorXd> gb(grad.data() + l.b_off, l.out);
    gW.noalias() += dZ.transpose() * X;
    gb.noalias() += dZ.colwise().sum().transpose();
    if (dX) dX->noalias() = dZ * W(l);
  }
  void linear_backward_vec(const LinearSpec& l,
                           const Eigen::Ref<const MatrixXd>& X,
                           const Eigen::Ref<const VectorXd>& dz, VectorXd& grad,
                           MatrixXd* dX) const {
    Eigen::Map<MatrixXd> gW(grad.data() + l.w_off, l.out, l.in);
    Eigen::Map<VectorXd> gb(grad.data() + l.b_off, l.out);
    gW.row(0).noalias() += (X.transpose() * dz).transpose();
    gb[0] += dz.sum();
    if (dX) dX->noalias() = dz * W(l).row(0);
  }
};

// Coarse + fine model pair optimized simultaneously. The fine model renders
// final images; the coarse model drives importance sampling.
struct System {
  ModelConfig cfg;
  TwoFieldModel coarse, fine;

  System() = default;
  explicit System(const ModelConfig& config, uint64_t seed = 0)
      : cfg(config),
        coarse(config, make_stream(seed, stream_key::kInit, 0, 1).next()),
        fine(config, make_stream(seed, stream_key::kInit, 0, 2).next()) {}

  long param_count() const { return coarse.param_count() + fine.param_count(); }
};

}  // namespace splitnerf
