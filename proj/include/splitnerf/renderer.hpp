// splitnerf is Copyright(c) 2026 the splitnerf authors.
// The splitnerf source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "splitnerf/common.hpp"
#include "splitnerf/geometry.hpp"
#include "splitnerf/image.hpp"
#include "splitnerf/model.hpp"
#include "splitnerf/parallel.hpp"

namespace splitnerf {

// Quadrature integration of one field along one ray.
//   T_i   = exp(-sum_{j<i} sigma_j delta_j)          (forward transmittance)
//   w_i   = T_i (1 - exp(-sigma_i delta_i))          (point weight)
//   color = sum_i w_i c_i,  depth_fwd = sum_i w_i t_i
// When with_backward is set, the same accumulation is done with
// transmittance from the far end: Tb_i = exp(-sum_{j>i} sigma_j delta_j).
struct FieldIntegral {
  VectorXd weights;
  VectorXd transmittance;
  VectorXd absorbed;  // a_i = 1 - exp(-sigma_i delta_i)
  Vec3 color = Vec3::Zero();
  double depth_fwd = 0.0;
  double weight_sum = 0.0;
  VectorXd weights_bwd;
  VectorXd transmittance_bwd;
  double depth_bwd = 0.0;
};

inline FieldIntegral integrate_field(const Eigen::Ref<const VectorXd>& sigma,
                                     const MatX3* colors,
                                     const RaySamples& s,
                                     bool with_backward = false) {
  const int n = s.size();
  if (static_cast<int>(sigma.size()) != n)
    throw InputError("integrate_field: sigma length != sample count");
  if (colors && static_cast<int>(colors->rows()) != n)
    throw InputError("integrate_field: color count != sample count");
  FieldIntegral out;
  out.weights.resize(n);
  out.transmittance.resize(n);
  out.absorbed.resize(n);
  double T = 1.0;
  for (int i = 0; i < n; ++i) {
    const double tau = sigma[i] * s.delta[i];
    const double e = std::exp(-tau);
    const double a = 1.0 - e;
    const double w = T * a;
    out.transmittance[i] = T;
    out.absorbed[i] = a;
    out.weights[i] = w;
    if (colors) out.color += w * colors->row(i).transpose();
    out.depth_fwd += w * s.t[i];
    out.weight_sum += w;
    T *= e;
  }
  if (with_backward) {
    out.weights_bwd.resize(n);
    out.transmittance_bwd.resize(n);
    double Tb = 1.0;
    for (int i = n - 1; i >= 0; --i) {
      const double w = Tb * out.absorbed[i];
      out.transmittance_bwd[i] = Tb;
      out.weights_bwd[i] = w;
      out.depth_bwd += w * s.t[i];
      Tb *= 1.0 - out.absorbed[i];
    }
  }
  return out;
}

// --- Standalone per-ray accumulators -------------------------------------

inline Vec3 accumulate_color(const Eigen::Ref<const VectorXd>& sigma,
                             const MatX3& colors, const RaySamples& s) {
  return integrate_field(sigma, &colors, s).color;
}

// Expected termination depth, unnormalized: zero when the ray is empty.
inline double forward_depth(const Eigen::Ref<const VectorXd>& sigma,
                            const RaySamples& s) {
  return integrate_field(sigma, nullptr, s).depth_fwd;
}

// Same expectation with transmittance accumulated from the far end.
inline double backward_depth(const Eigen::Ref<const VectorXd>& sigma,
                             const RaySamples& s) {
  return integrate_field(sigma, nullptr, s, true).depth_bwd;
}

// Reflection fraction accumulated over the transmitted field's geometry.
inline double accumulate_beta(const Eigen::Ref<const VectorXd>& sigma_t,
                              const Eigen::Ref<const VectorXd>& alpha,
                              const RaySamples& s) {
  if (sigma_t.size() != alpha.size())
    throw InputError("accumulate_beta: alpha length != sigma length");
  const FieldIntegral it = integrate_field(sigma_t, nullptr, s);
  return (it.weights.array() * alpha.array()).sum();
}

// --- Full per-ray render ---------------------------------------------------

struct RenderResult {
  Vec3 color_t = Vec3::Zero();
  Vec3 color_r = Vec3::Zero();
  double beta = 0.0;
  Vec3 color = Vec3::Zero();  // color_t + beta * color_r, unclamped
  double depth_t_fwd = 0.0;
  double depth_r_fwd = 0.0;
  double depth_r_bwd = 0.0;
  VectorXd weights_t, weights_r;
  VectorXd transmittance_t, transmittance_r;
};

// Composes the two already-evaluated fields along a ray.
inline RenderResult render_from_fields(const Eigen::Ref<const VectorXd>& sigma_t,
                                       const MatX3& c_t,
                                       const Eigen::Ref<const VectorXd>& alpha,
                                       const Eigen::Ref<const VectorXd>& sigma_r,
                                       const MatX3& c_r, const RaySamples& s) {
  RenderResult r;
  const FieldIntegral it = integrate_field(sigma_t, &c_t, s);
  const FieldIntegral ir = integrate_field(sigma_r, &c_r, s, true);
  r.color_t = it.color;
  r.color_r = ir.color;
  r.beta = (it.weights.array() * alpha.array()).sum();
  r.color = r.color_t + r.beta * r.color_r;
  r.depth_t_fwd = it.depth_fwd;
  r.depth_r_fwd = ir.depth_fwd;
  r.depth_r_bwd = ir.depth_bwd;
  r.weights_t = it.weights;
  r.weights_r = ir.weights;
  r.transmittance_t = it.transmittance;
  r.transmittance_r = ir.transmittance;
  return r;
}

// Evaluates the model at the given samples and composes the result.
inline RenderResult render_ray(const TwoFieldModel& model, const Ray& ray,
                               const RaySamples& s) {
  const int n = s.size();
  MatrixXd X(n, 3), D(n, 3);
  for (int i = 0; i < n; ++i) {
    X.row(i) = (ray.origin + s.t[i] * ray.dir).transpose();
    D.row(i) = ray.dir.transpose();
  }
  ModelCache cache;
  model.forward(X, D, true, cache);
  if (!all_finite(cache.sigma_t) || !all_finite(cache.c_t) ||
      !all_finite(cache.alpha) || !all_finite(cache.sigma_r) ||
      !all_finite(cache.c_r))
    throw NumericError("render_ray", "non-finite field output");
  return render_from_fields(cache.sigma_t, cache.c_t, cache.alpha,
                            cache.sigma_r, cache.c_r, s);
}

// --- Backward pass ---------------------------------------------------------

// Upstream gradients for one rendered ray.
struct RayOutputGrads {
  Vec3 d_color = Vec3::Zero();  // wrt composed (unclamped) color
  double d_beta = 0.0;
  double d_depth_t_fwd = 0.0;
  double d_depth_r_fwd = 0.0;
  double d_depth_r_bwd = 0.0;
};

namespace detail {
// Chain rule through w_i = T_i (1 - e^{-tau_i}): given dL/dw, accumulates
// dL/dtau. d w_i / d tau_i = T_i e^{-tau_i}; d w_i / d tau_j = -w_i (j < i).
inline void weights_backward_fwd_chain(const FieldIntegral& I,
                                       const VectorXd& d_w, VectorXd& d_tau) {
  const int n = static_cast<int>(d_w.size());
  double suffix = 0.0;
  for (int k = n - 1; k >= 0; --k) {
    d_tau[k] += d_w[k] * I.transmittance[k] * (1.0 - I.absorbed[k]) - suffix;
    suffix += d_w[k] * I.weights[k];
  }
}
// Mirror image for the far-end transmittance: d wb_i / d tau_j = -wb_i (j > i).
inline void weights_backward_bwd_chain(const FieldIntegral& I,
                                       const VectorXd& d_wb, VectorXd& d_tau) {
  const int n = static_cast<int>(d_wb.size());
  double prefix = 0.0;
  for (int k = 0; k < n; ++k) {
    d_tau[k] +=
        d_wb[k] * I.transmittance_bwd[k] * (1.0 - I.absorbed[k]) - prefix;
    prefix += d_wb[k] * I.weights_bwd[k];
  }
}
}  // namespace detail

// Accumulates per-sample gradients for one ray into segment views of the
// batch gradient arrays. The integrals must come from the same forward pass.
inline void render_backward(const Eigen::Ref<const VectorXd>& alpha,
                            const MatX3& c_t, const MatX3& c_r,
                            const RaySamples& s, const FieldIntegral& it,
                            const FieldIntegral& ir, double beta,
                            const RayOutputGrads& g,
                            Eigen::Ref<VectorXd> d_sigma_t,
                            Eigen::Ref<VectorXd> d_alpha,
                            Eigen::Ref<VectorXd> d_sigma_r,
                            Eigen::Ref<MatX3> d_c_t,
                            Eigen::Ref<MatX3> d_c_r) {
  const int n = s.size();
  const double g_beta = g.d_beta + g.d_color.dot(ir.color);

  // Per-sample color gradients.
  for (int i = 0; i < n; ++i) {
    d_c_t.row(i) += it.weights[i] * g.d_color.transpose();
    d_c_r.row(i) += ir.weights[i] * beta * g.d_color.transpose();
  }

  // Transmitted weights: color, beta and forward-depth paths.
  VectorXd d_w_t(n), d_w_r(n);
  for (int i = 0; i < n; ++i) {
    d_w_t[i] = g.d_color.dot(c_t.row(i)) + g_beta * alpha[i] +
               g.d_depth_t_fwd * s.t[i];
    d_alpha[i] += g_beta * it.weights[i];
    d_w_r[i] = beta * g.d_color.dot(c_r.row(i)) + g.d_depth_r_fwd * s.t[i];
  }
  VectorXd d_tau_t = VectorXd::Zero(n), d_tau_r = VectorXd::Zero(n);
  detail::weights_backward_fwd_chain(it, d_w_t, d_tau_t);
  detail::weights_backward_fwd_chain(ir, d_w_r, d_tau_r);
  if (g.d_depth_r_bwd != 0.0) {
    VectorXd d_wb = g.d_depth_r_bwd * s.t;
    detail::weights_backward_bwd_chain(ir, d_wb, d_tau_r);
  }
  d_sigma_t += (d_tau_t.array() * s.delta.array()).matrix();
  d_sigma_r += (d_tau_r.array() * s.delta.array()).matrix();
}

// --- Image-level rendering --------------------------------------------------

struct RenderConfig {
  int samples_per_stage = 64;
  int threads = 1;
  int chunk_rays = 256;  // pixels evaluated per model batch
};

struct ImageBundle {
  Image composed;  // quantization-consistent: q(trans) + q(beta) * q(refl)
  Image trans;
  Image refl;
  Image beta;
  Image depth;  // transmitted forward depth, world units
};

// Hierarchical two-stage render of every pixel. Fully deterministic: coarse
// samples sit at bin midpoints and fine samples at evenly spaced quantiles of
// the coarse weight distribution (max of the two fields' weights per bin).
inline ImageBundle render_image(const System& sys, const Camera& cam,
                                const RenderConfig& rc) {
  cam.validate();
  const int W = cam.width, H = cam.height;
  const int n_pixels = W * H;
  ImageBundle out;
  out.composed = Image(W, H, 3);
  out.trans = Image(W, H, 3);
  out.refl = Image(W, H, 3);
  out.beta = Image(W, H, 1);
  out.depth = Image(W, H, 1);

  const int S = rc.samples_per_stage;
  const int chunk = std::max(1, rc.chunk_rays);
  const int n_chunks = (n_pixels + chunk - 1) / chunk;

  parallel_for(n_chunks, rc.threads, [&](int ci) {
    const int begin = ci * chunk;
    const int end = std::min(n_pixels, begin + chunk);
    const int nr = end - begin;
    std::vector<Ray> rays(static_cast<size_t>(nr));
    std::vector<RaySamples> coarse(static_cast<size_t>(nr));
    auto midpoint = [] { return 0.5; };
    for (int k = 0; k < nr; ++k) {
      const int pix = begin + k;
      rays[static_cast<size_t>(k)] = generate_ray(cam, pix / W, pix % W);
      coarse[static_cast<size_t>(k)] =
          stratified_sample(rays[static_cast<size_t>(k)], S, midpoint);
    }
    try {
      // Coarse stage.
      MatrixXd X(nr * S, 3), D(nr * S, 3);
      for (int k = 0; k < nr; ++k)
        for (int i = 0; i < S; ++i) {
          X.row(k * S + i) =
              (rays[static_cast<size_t>(k)].origin +
               coarse[static_cast<size_t>(k)].t[i] * rays[static_cast<size_t>(k)].dir)
                  .transpose();
          D.row(k * S + i) = rays[static_cast<size_t>(k)].dir.transpose();
        }
      ModelCache cc;
      sys.coarse.forward(X, D, true, cc);
      require_finite(cc.sigma_t, "render_image/coarse");
      require_finite(cc.sigma_r, "render_image/coarse");

      // Fine stage over merged samples.
      std::vector<RaySamples> fine(static_cast<size_t>(nr));
      int total_fine = 0;
      for (int k = 0; k < nr; ++k) {
        const auto seg_t = cc.sigma_t.segment(k * S, S);
        const auto seg_r = cc.sigma_r.segment(k * S, S);
        const FieldIntegral wt =
            integrate_field(seg_t, nullptr, coarse[static_cast<size_t>(k)]);
        const FieldIntegral wr =
            integrate_field(seg_r, nullptr, coarse[static_cast<size_t>(k)]);
        VectorXd combined = wt.weights.cwiseMax(wr.weights);
        int qi = 0;
        auto quantiles = [&qi, S]() mutable { return (qi++ + 0.5) / S; };
        fine[static_cast<size_t>(k)] = importance_sample(
            rays[static_cast<size_t>(k)], coarse[static_cast<size_t>(k)],
            std::span<const double>(combined.data(), static_cast<size_t>(S)), S,
            quantiles);
        total_fine += fine[static_cast<size_t>(k)].size();
      }
      MatrixXd Xf(total_fine, 3), Df(total_fine, 3);
      int off = 0;
      for (int k = 0; k < nr; ++k) {
        const RaySamples& fs = fine[static_cast<size_t>(k)];
        for (int i = 0; i < fs.size(); ++i) {
          Xf.row(off + i) = (rays[static_cast<size_t>(k)].origin +
                             fs.t[i] * rays[static_cast<size_t>(k)].dir)
                                .transpose();
          Df.row(off + i) = rays[static_cast<size_t>(k)].dir.transpose();
        }
        off += fs.size();
      }
      ModelCache fc;
      sys.fine.forward(Xf, Df, true, fc);
      off = 0;
      for (int k = 0; k < nr; ++k) {
        const RaySamples& fs = fine[static_cast<size_t>(k)];
        const int m = fs.size();
        const MatX3 ct = fc.c_t.middleRows(off, m);
        const MatX3 cr = fc.c_r.middleRows(off, m);
        const RenderResult r = render_from_fields(
            fc.sigma_t.segment(off, m), ct, fc.alpha.segment(off, m),
            fc.sigma_r.segment(off, m), cr, fs);
        const int pix = begin + k;
        const int row = pix / W, col = pix % W;
        // Write components first, then compose from their quantized values so
        // the emitted files satisfy composed = trans + beta * refl exactly.
        double qb = quantize8(r.beta) / 255.0;
        for (int ch = 0; ch < 3; ++ch) {
          const double qt = quantize8(r.color_t[ch]) / 255.0;
          const double qr = quantize8(r.color_r[ch]) / 255.0;
          out.trans.at(row, col, ch) = qt;
          out.refl.at(row, col, ch) = qr;
          out.composed.at(row, col, ch) = clamp01(qt + qb * qr);
        }
        out.beta.at(row, col) = qb;
        out.depth.at(row, col) = r.depth_t_fwd;
        off += m;
      }
    } catch (const NumericError& e) {
      throw NumericError(e.operation,
                         "pixels [" + std::to_string(begin) + ", " +
                             std::to_string(end) + "): " + e.what());
    }
  });
  return out;
}

}  // namespace splitnerf
