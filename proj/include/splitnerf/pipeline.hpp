// splitnerf is Copyright(c) 2026 the splitnerf authors.
// The splitnerf source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "splitnerf/geometry.hpp"
#include "splitnerf/losses.hpp"
#include "splitnerf/model.hpp"
#include "splitnerf/parallel.hpp"
#include "splitnerf/renderer.hpp"

namespace splitnerf {

// One training ray with its supervision.
struct RayData {
  Ray ray;
  Vec3 gt_color = Vec3::Zero();
  double mask_value = -1.0;  // < 0: the source image has no reflection mask
};

// P x P pixel patch stored row-major as a contiguous ray range.
struct PatchRef {
  int offset = 0;
  int P = 0;
};

// Batch layout: independent rays first, then the patch ranges.
struct RayBatch {
  std::vector<RayData> rays;
  std::vector<PatchRef> patches;

  int n_rays() const { return static_cast<int>(rays.size()); }
  int masked_count() const {
    int n = 0;
    for (const auto& r : rays)
      if (r.mask_value >= 0.0) ++n;
    return n;
  }
  int smoothness_pair_count() const {
    int n = 0;
    for (const auto& p : patches) n += detail::patch_pair_count(p.P);
    return n;
  }
};

// Frozen per-ray sample sets; lets gradient checks replay the exact graph.
struct SampleSet {
  std::vector<RaySamples> coarse;
  std::vector<RaySamples> fine;
};

struct PipelineOptions {
  int samples_per_stage = 64;
  bool use_view_dirs = true;  // trainer's view-dependency warm-up gate
  uint64_t seed = 0;
  uint64_t step = 0;
  int threads = 1;
  int chunk_rays = 64;                  // independent rays per work group
  const SampleSet* frozen = nullptr;    // replay captured samples
  SampleSet* capture = nullptr;         // record drawn samples
};

struct PipelineStats {
  int importance_fallbacks = 0;  // rays whose coarse weights were all zero
};

namespace detail {

struct GroupRange {
  int begin = 0, end = 0;
  int patch_P = 0;  // > 0 when the group is one whole patch
};

inline std::vector<GroupRange> make_groups(const RayBatch& batch,
                                           int chunk_rays) {
  std::vector<GroupRange> groups;
  int first_patch = batch.n_rays();
  if (!batch.patches.empty()) first_patch = batch.patches.front().offset;
  for (int b = 0; b < first_patch; b += chunk_rays)
    groups.push_back({b, std::min(first_patch, b + chunk_rays), 0});
  for (const auto& p : batch.patches)
    groups.push_back({p.offset, p.offset + p.P * p.P, p.P});
  return groups;
}

// Everything one stage produces for one group of rays.
struct StageData {
  ModelCache cache;
  std::vector<RaySamples> samples;
  std::vector<FieldIntegral> integral_t, integral_r;
  std::vector<RenderResult> result;  // scalar/vec outputs only (weights unused)
  std::vector<int> offsets;          // row offset of each ray's samples
  int total_points = 0;
};

// Per-group partial sums reduced in fixed group order after the join.
struct GroupAccum {
  double pm_sum = 0, smooth_sum = 0, bdc_sum = 0, mask_sum = 0;
  int fallbacks = 0;
  VectorXd grad_coarse, grad_fine;
};

inline void forward_stage(const TwoFieldModel& model, const RayBatch& batch,
                          const GroupRange& g,
                          const std::vector<RaySamples>& samples,
                          bool use_view_dirs, const char* stage_name,
                          StageData& out) {
  const int nr = g.end - g.begin;
  out.samples = samples;
  out.offsets.assign(static_cast<size_t>(nr), 0);
  int total = 0;
  for (int k = 0; k < nr; ++k) {
    out.offsets[static_cast<size_t>(k)] = total;
    total += samples[static_cast<size_t>(k)].size();
  }
  out.total_points = total;
  MatrixXd X(total, 3), D(total, 3);
  for (int k = 0; k < nr; ++k) {
    const RayData& rd = batch.rays[static_cast<size_t>(g.begin + k)];
    const RaySamples& s = samples[static_cast<size_t>(k)];
    const int off = out.offsets[static_cast<size_t>(k)];
    for (int i = 0; i < s.size(); ++i) {
      X.row(off + i) = (rd.ray.origin + s.t[i] * rd.ray.dir).transpose();
      D.row(off + i) = rd.ray.dir.transpose();
    }
  }
  model.forward(X, D, use_view_dirs, out.cache);
  require_finite(out.cache.sigma_t, stage_name);
  require_finite(out.cache.c_t, stage_name);
  require_finite(out.cache.alpha, stage_name);
  require_finite(out.cache.sigma_r, stage_name);
  require_finite(out.cache.c_r, stage_name);

  out.integral_t.resize(static_cast<size_t>(nr));
  out.integral_r.resize(static_cast<size_t>(nr));
  out.result.resize(static_cast<size_t>(nr));
  for (int k = 0; k < nr; ++k) {
    const RaySamples& s = samples[static_cast<size_t>(k)];
    const int off = out.offsets[static_cast<size_t>(k)];
    const int m = s.size();
    const MatX3 ct = out.cache.c_t.middleRows(off, m);
    const MatX3 cr = out.cache.c_r.middleRows(off, m);
    FieldIntegral it = integrate_field(out.cache.sigma_t.segment(off, m), &ct, s);
    FieldIntegral ir =
        integrate_field(out.cache.sigma_r.segment(off, m), &cr, s, true);
    RenderResult& r = out.result[static_cast<size_t>(k)];
    r.color_t = it.color;
    r.color_r = ir.color;
    r.beta = (it.weights.array() *
              out.cache.alpha.segment(off, m).array()).sum();
    r.color = r.color_t + r.beta * r.color_r;
    r.depth_t_fwd = it.depth_fwd;
    r.depth_r_fwd = ir.depth_fwd;
    r.depth_r_bwd = ir.depth_bwd;
    out.integral_t[static_cast<size_t>(k)] = std::move(it);
    out.integral_r[static_cast<size_t>(k)] = std::move(ir);
  }
}

// Loss terms + upstream per-ray gradients for one stage over one group.
// Normalizers are global (whole-batch) counts so group sums stay additive.
struct LossNormalizers {
  int n_rays = 0;
  int n_masked = 0;
  int n_pairs = 0;
};

inline void stage_losses(const RayBatch& batch, const GroupRange& g,
                         const StageData& sd, const LossWeights& w,
                         const LossNormalizers& norm, bool want_grads,
                         GroupAccum& acc, std::vector<RayOutputGrads>& grads) {
  const int nr = g.end - g.begin;
  if (want_grads) grads.assign(static_cast<size_t>(nr), RayOutputGrads{});

  for (int k = 0; k < nr; ++k) {
    const RayData& rd = batch.rays[static_cast<size_t>(g.begin + k)];
    const RenderResult& r = sd.result[static_cast<size_t>(k)];
    // Photometric (all rays).
    const Vec3 diff = r.color - rd.gt_color;
    const double dist = diff.norm();
    acc.pm_sum += dist;
    if (want_grads && dist > 0.0)
      grads[static_cast<size_t>(k)].d_color +=
          diff / (dist * norm.n_rays);
    // Bidirectional depth consistency on the reflected field (all rays).
    acc.bdc_sum += std::abs(r.depth_r_fwd - r.depth_r_bwd);
    if (want_grads && w.lambda_bdc > 0.0)
      bdc_loss_backward(r.depth_r_fwd, r.depth_r_bwd,
                        w.lambda_bdc / norm.n_rays,
                        grads[static_cast<size_t>(k)].d_depth_r_fwd,
                        grads[static_cast<size_t>(k)].d_depth_r_bwd);
    // Mask consistency (masked rays only).
    if (rd.mask_value >= 0.0 && norm.n_masked > 0) {
      acc.mask_sum += std::abs(r.beta - rd.mask_value);
      if (want_grads && w.lambda_beta > 0.0)
        mask_loss_backward(r.beta, rd.mask_value,
                           w.lambda_beta / norm.n_masked,
                           grads[static_cast<size_t>(k)].d_beta);
    }
  }

  // Depth smoothness over the patch (transmitted forward depth, ground-truth
  // colors as the decay reference).
  if (g.patch_P > 0 && norm.n_pairs > 0) {
    const int P = g.patch_P;
    MatX3 colors(P * P, 3);
    VectorXd depths(P * P);
    for (int k = 0; k < P * P; ++k) {
      colors.row(k) =
          batch.rays[static_cast<size_t>(g.begin + k)].gt_color.transpose();
      depths[k] = sd.result[static_cast<size_t>(k)].depth_t_fwd;
    }
    if (want_grads && w.lambda_d > 0.0) {
      VectorXd d_depths = VectorXd::Zero(P * P);
      acc.smooth_sum += depth_smoothness_backward(
          colors, depths, P, w.gamma, 1.0 / norm.n_pairs, d_depths);
      for (int k = 0; k < P * P; ++k)
        grads[static_cast<size_t>(k)].d_depth_t_fwd +=
            w.lambda_d * d_depths[k];
    } else {
      VectorXd scratch = VectorXd::Zero(P * P);
      acc.smooth_sum +=
          depth_smoothness_backward(colors, depths, P, w.gamma, 0.0, scratch);
    }
  }
}

inline void stage_backward(const TwoFieldModel& model, const GroupRange& g,
                           const StageData& sd,
                           const std::vector<RayOutputGrads>& grads,
                           VectorXd& grad_out) {
  const int nr = g.end - g.begin;
  FieldGrads fg;
  fg.setZero(sd.total_points);
  for (int k = 0; k < nr; ++k) {
    const RaySamples& s = sd.samples[static_cast<size_t>(k)];
    const int off = sd.offsets[static_cast<size_t>(k)];
    const int m = s.size();
    const MatX3 ct = sd.cache.c_t.middleRows(off, m);
    const MatX3 cr = sd.cache.c_r.middleRows(off, m);
    render_backward(sd.cache.alpha.segment(off, m), ct, cr, s,
                    sd.integral_t[static_cast<size_t>(k)],
                    sd.integral_r[static_cast<size_t>(k)],
                    sd.result[static_cast<size_t>(k)].beta,
                    grads[static_cast<size_t>(k)],
                    fg.d_sigma_t.segment(off, m), fg.d_alpha.segment(off, m),
                    fg.d_sigma_r.segment(off, m), fg.d_c_t.middleRows(off, m),
                    fg.d_c_r.middleRows(off, m));
  }
  model.backward(sd.cache, fg, grad_out);
}

}  // namespace detail

// Runs the full two-stage graph over one batch: coarse stratified samples,
// coarse render and losses, importance-guided fine samples (treated as
// constants with respect to the coarse parameters), fine render and losses.
// Both stages contribute the same loss terms under the same weights; the
// returned breakdown is the sum of the two stages. When grad_coarse /
// grad_fine are non-null they receive the parameter gradients of the total.
inline LossBreakdown run_batch(const System& sys, const RayBatch& batch,
                               const LossWeights& weights,
                               const PipelineOptions& opt,
                               VectorXd* grad_coarse = nullptr,
                               VectorXd* grad_fine = nullptr,
                               PipelineStats* stats = nullptr) {
  weights.validate();
  const int n = batch.n_rays();
  if (n == 0) throw InputError("run_batch: empty batch");
  const bool want_grads = grad_coarse != nullptr;
  if (want_grads != (grad_fine != nullptr))
    throw InputError("run_batch: both or neither gradient output");

  detail::LossNormalizers norm;
  norm.n_rays = n;
  norm.n_masked = batch.masked_count();
  norm.n_pairs = batch.smoothness_pair_count();

  const auto groups = detail::make_groups(batch, opt.chunk_rays);
  const int n_groups = static_cast<int>(groups.size());
  std::vector<detail::GroupAccum> acc(static_cast<size_t>(n_groups));
  if (opt.capture) {
    opt.capture->coarse.resize(static_cast<size_t>(n));
    opt.capture->fine.resize(static_cast<size_t>(n));
  }

  parallel_for(n_groups, opt.threads, [&](int gi) {
    const detail::GroupRange& g = groups[static_cast<size_t>(gi)];
    detail::GroupAccum& a = acc[static_cast<size_t>(gi)];
    const int nr = g.end - g.begin;
    const int S = opt.samples_per_stage;

    // Coarse samples.
    std::vector<RaySamples> coarse(static_cast<size_t>(nr));
    for (int k = 0; k < nr; ++k) {
      const int ray_idx = g.begin + k;
      if (opt.frozen) {
        coarse[static_cast<size_t>(k)] =
            opt.frozen->coarse[static_cast<size_t>(ray_idx)];
      } else {
        auto rng = make_stream(opt.seed, stream_key::kCoarse, opt.step,
                               static_cast<uint64_t>(ray_idx));
        coarse[static_cast<size_t>(k)] = stratified_sample(
            batch.rays[static_cast<size_t>(ray_idx)].ray, S, rng);
      }
      if (opt.capture)
        opt.capture->coarse[static_cast<size_t>(ray_idx)] =
            coarse[static_cast<size_t>(k)];
    }

    detail::StageData cs;
    detail::forward_stage(sys.coarse, batch, g, coarse, opt.use_view_dirs,
                          "coarse_stage", cs);

    // Fine samples from the coarse weight envelope (max of the two fields).
    std::vector<RaySamples> fine(static_cast<size_t>(nr));
    for (int k = 0; k < nr; ++k) {
      const int ray_idx = g.begin + k;
      if (opt.frozen) {
        fine[static_cast<size_t>(k)] =
            opt.frozen->fine[static_cast<size_t>(ray_idx)];
      } else {
        const VectorXd combined =
            cs.integral_t[static_cast<size_t>(k)].weights.cwiseMax(
                cs.integral_r[static_cast<size_t>(k)].weights);
        auto rng = make_stream(opt.seed, stream_key::kFine, opt.step,
                               static_cast<uint64_t>(ray_idx));
        bool fell_back = false;
        fine[static_cast<size_t>(k)] = importance_sample(
            batch.rays[static_cast<size_t>(ray_idx)].ray,
            coarse[static_cast<size_t>(k)],
            std::span<const double>(combined.data(),
                                    static_cast<size_t>(combined.size())),
            S, rng, &fell_back);
        if (fell_back) ++a.fallbacks;
      }
      if (opt.capture)
        opt.capture->fine[static_cast<size_t>(ray_idx)] =
            fine[static_cast<size_t>(k)];
    }

    detail::StageData fs;
    detail::forward_stage(sys.fine, batch, g, fine, opt.use_view_dirs,
                          "fine_stage", fs);

    std::vector<RayOutputGrads> cg, fgr;
    detail::stage_losses(batch, g, cs, weights, norm, want_grads, a, cg);
    detail::stage_losses(batch, g, fs, weights, norm, want_grads, a, fgr);

    if (want_grads) {
      a.grad_coarse = VectorXd::Zero(sys.coarse.param_count());
      a.grad_fine = VectorXd::Zero(sys.fine.param_count());
      detail::stage_backward(sys.coarse, g, cs, cg, a.grad_coarse);
      detail::stage_backward(sys.fine, g, fs, fgr, a.grad_fine);
    }
  });

  // Fixed-order reduction: results are identical for any thread count.
  LossBreakdown out;
  double pm = 0, smooth = 0, bdc = 0, mask = 0;
  int fallbacks = 0;
  if (want_grads) {
    grad_coarse->setZero(sys.coarse.param_count());
    grad_fine->setZero(sys.fine.param_count());
  }
  for (const auto& a : acc) {
    pm += a.pm_sum;
    smooth += a.smooth_sum;
    bdc += a.bdc_sum;
    mask += a.mask_sum;
    fallbacks += a.fallbacks;
    if (want_grads) {
      *grad_coarse += a.grad_coarse;
      *grad_fine += a.grad_fine;
    }
  }
  out.pm = pm / norm.n_rays;
  out.depth_smooth = norm.n_pairs > 0 ? smooth / norm.n_pairs : 0.0;
  out.bdc = bdc / norm.n_rays;
  out.mask_beta = norm.n_masked > 0 ? mask / norm.n_masked : 0.0;
  total_loss(out, weights);
  require_finite(out.total, "total_loss");
  if (stats) stats->importance_fallbacks = fallbacks;
  return out;
}

}  // namespace splitnerf
