// splitnerf is Copyright(c) 2026 the splitnerf authors.
// The splitnerf source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#pragma once

#include <cmath>

#include "splitnerf/common.hpp"

namespace splitnerf {

// Effective loss weights for one training step (the scheduler produces
// lambda_d / lambda_bdc; gamma is the color-gradient decay of the
// depth-smoothness term).
struct LossWeights {
  double lambda_d = 0.1;
  double lambda_bdc = 0.05;
  double lambda_beta = 1.0;
  double gamma = 10.0;

  void validate() const {
    if (lambda_d < 0 || lambda_bdc < 0 || lambda_beta < 0 || gamma < 0)
      throw InputError("loss weights must be >= 0");
  }
};

// Mean over rays of the L2 norm of the color residual. Note: the norm, not
// its square.
inline double photometric_loss(const MatX3& rendered, const MatX3& truth) {
  if (rendered.rows() != truth.rows())
    throw InputError("photometric_loss: ray count mismatch");
  if (rendered.rows() == 0) return 0.0;
  return (rendered - truth).rowwise().norm().mean();
}

// Gradient wrt the rendered colors; scale = 1 / (number of rays in the mean),
// letting batch assembly normalize across shards.
inline void photometric_loss_backward(const MatX3& rendered, const MatX3& truth,
                                      double scale, MatX3& d_rendered) {
  for (long i = 0; i < rendered.rows(); ++i) {
    const Vec3 diff = (rendered.row(i) - truth.row(i)).transpose();
    const double norm = diff.norm();
    if (norm > 0.0) d_rendered.row(i) += (scale / norm) * diff.transpose();
  }
}

// Color-gradient decay factor: exp(-gamma * ||c1 - c2||_1). In (0, 1], equal
// to 1 iff the colors match or gamma is zero.
inline double smoothness_pair_weight(const Vec3& c1, const Vec3& c2,
                                     double gamma) {
  return std::exp(-gamma * (c1 - c2).cwiseAbs().sum());
}

namespace detail {
// Unordered 8-neighborhood offsets (row, col): right, down, down-right,
// down-left. Each unordered pair appears exactly once.
inline constexpr int kPairOffsets[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};

template <class PairFn>
void for_patch_pairs(int P, PairFn&& fn) {
  for (int r = 0; r < P; ++r)
    for (int c = 0; c < P; ++c)
      for (const auto& o : kPairOffsets) {
        const int r2 = r + o[0], c2 = c + o[1];
        if (r2 < 0 || r2 >= P || c2 < 0 || c2 >= P) continue;
        fn(r * P + c, r2 * P + c2);
      }
}

inline int patch_pair_count(int P) {
  return 2 * P * (P - 1) + 2 * (P - 1) * (P - 1);
}
}  // namespace detail

// Edge-aware first-order smoothness of the transmitted depth over one P x P
// patch. `patch_colors` are ground-truth image colors (row-major P*P x 3),
// `depths` the per-pixel transmitted forward depths. Mean over the patch's
// valid neighbor pairs.
inline double depth_smoothness_loss(const MatX3& patch_colors,
                                    const VectorXd& depths, int P,
                                    double gamma) {
  if (P < 3) throw InputError("depth_smoothness_loss: patch size must be >= 3");
  if (patch_colors.rows() != P * P || depths.size() != P * P)
    throw InputError("depth_smoothness_loss: patch data size mismatch");
  double sum = 0.0;
  detail::for_patch_pairs(P, [&](int a, int b) {
    const double w = smoothness_pair_weight(patch_colors.row(a).transpose(),
                                            patch_colors.row(b).transpose(), gamma);
    sum += w * std::abs(depths[a] - depths[b]);
  });
  return sum / detail::patch_pair_count(P);
}

// Gradient wrt depths; scale = 1 / (global pair count) so several patches can
// share one normalizer. Returns the patch's unnormalized pair sum.
inline double depth_smoothness_backward(const MatX3& patch_colors,
                                        const VectorXd& depths, int P,
                                        double gamma, double scale,
                                        Eigen::Ref<VectorXd> d_depths) {
  double sum = 0.0;
  detail::for_patch_pairs(P, [&](int a, int b) {
    const double w = smoothness_pair_weight(patch_colors.row(a).transpose(),
                                            patch_colors.row(b).transpose(), gamma);
    const double diff = depths[a] - depths[b];
    sum += w * std::abs(diff);
    if (diff > 0.0) {
      d_depths[a] += scale * w;
      d_depths[b] -= scale * w;
    } else if (diff < 0.0) {
      d_depths[a] -= scale * w;
      d_depths[b] += scale * w;
    }
  });
  return sum;
}

// Bidirectional depth consistency: mean over rays of |forward - backward|
// expected termination depth (computed on the reflected field).
inline double bdc_loss(const VectorXd& depth_fwd, const VectorXd& depth_bwd) {
  if (depth_fwd.size() != depth_bwd.size())
    throw InputError("bdc_loss: ray count mismatch");
  if (depth_fwd.size() == 0) return 0.0;
  return (depth_fwd - depth_bwd).cwiseAbs().mean();
}

// Per-ray gradient contributions for the BDC term.
inline void bdc_loss_backward(double fwd, double bwd, double scale,
                              double& d_fwd, double& d_bwd) {
  const double diff = fwd - bwd;
  if (diff > 0.0) {
    d_fwd += scale;
    d_bwd -= scale;
  } else if (diff < 0.0) {
    d_fwd -= scale;
    d_bwd += scale;
  }
}

// Mean L1 consistency between predicted reflection fractions and user-mask
// values (only rays from masked images contribute).
inline double mask_loss(const VectorXd& beta_pred, const VectorXd& mask_value) {
  if (beta_pred.size() != mask_value.size())
    throw InputError("mask_loss: size mismatch");
  if (beta_pred.size() == 0) return 0.0;
  return (beta_pred - mask_value).cwiseAbs().mean();
}

inline void mask_loss_backward(double beta_pred, double mask_value,
                               double scale, double& d_beta) {
  const double diff = beta_pred - mask_value;
  if (diff > 0.0)
    d_beta += scale;
  else if (diff < 0.0)
    d_beta -= scale;
}

// Weighted total with per-term breakdown for logging. Component values are
// the raw (unweighted) losses.
struct LossBreakdown {
  double pm = 0.0;
  double depth_smooth = 0.0;
  double bdc = 0.0;
  double mask_beta = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    pm += o.pm;
    depth_smooth += o.depth_smooth;
    bdc += o.bdc;
    mask_beta += o.mask_beta;
    total += o.total;
    return *this;
  }
};

inline double total_loss(LossBreakdown& b, const LossWeights& w) {
  w.validate();
  b.total = b.pm + w.lambda_d * b.depth_smooth + w.lambda_bdc * b.bdc +
            w.lambda_beta * b.mask_beta;
  return b.total;
}

}  // namespace splitnerf
