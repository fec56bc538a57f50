// splitnerf is Copyright(c) 2026 the splitnerf authors.
// The splitnerf source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "splitnerf/common.hpp"
#include "splitnerf/random.hpp"

namespace splitnerf {

// Pinhole camera. Convention: right-handed, camera looks down -z, +x right,
// +y up. Pixel (row, col) with integer coordinates at pixel centers; rows grow
// downward in the image. Poses are camera-to-world.
struct Camera {
  int width = 0;
  int height = 0;
  double focal = 0.0;  // pixels
  double cx = 0.0;     // principal point, pixels (default: image center)
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();  // columns: camera x/y/z axes in world
  Vec3 position = Vec3::Zero();
  double t_near = 0.0;  // scene bounds, world units
  double t_far = 0.0;

  static Camera look_at(int width, int height, double focal, const Vec3& eye,
                        const Vec3& target, const Vec3& up, double t_near,
                        double t_far) {
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.focal = focal;
    cam.cx = (width - 1) * 0.5;
    cam.cy = (height - 1) * 0.5;
    const Vec3 z = (eye - target).normalized();  // camera looks down -z
    Vec3 x = up.cross(z);
    if (x.norm() < 1e-12)
      throw InputError("look_at: up direction parallel to view direction");
    x.normalize();
    const Vec3 y = z.cross(x);
    cam.rotation.col(0) = x;
    cam.rotation.col(1) = y;
    cam.rotation.col(2) = z;
    cam.position = eye;
    cam.t_near = t_near;
    cam.t_far = t_far;
    return cam;
  }

  void validate() const {
    if (width < 1 || height < 1) throw InputError("camera: width/height < 1");
    if (!(focal > 0.0)) throw InputError("camera: focal must be > 0");
    const Mat3 should_be_identity = rotation * rotation.transpose();
    if ((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
      throw InputError("camera: rotation is not orthonormal");
  }

  // Pose as a 3x4 [R | t] camera-to-world matrix, row-major flattening.
  std::array<double, 12> pose_row_major() const {
    std::array<double, 12> out{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out[r * 4 + c] = rotation(r, c);
      out[r * 4 + 3] = position(r);
    }
    return out;
  }

  void set_pose_row_major(std::span<const double> v) {
    if (v.size() != 12) throw InputError("camera pose: expected 12 values");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) rotation(r, c) = v[r * 4 + c];
      position(r) = v[r * 4 + 3];
    }
  }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();  // unit length
  double t_near = 0.0;
  double t_far = 0.0;
};

// Ascending sample distances t along a ray with interval lengths delta.
// delta_i = t_{i+1} - t_i for i < N, delta_N = t_far - t_N (mean of the other
// deltas if that difference is zero). All deltas > 0.
struct RaySamples {
  VectorXd t;
  VectorXd delta;
  int size() const { return static_cast<int>(t.size()); }
};

inline Ray generate_ray(const Camera& cam, double row, double col) {
  if (row < -0.5 || row > cam.height - 0.5 || col < -0.5 ||
      col > cam.width - 0.5)
    throw InputError("generate_ray: pixel out of bounds");
  Vec3 d_cam((col - cam.cx) / cam.focal, -(row - cam.cy) / cam.focal, -1.0);
  Ray ray;
  ray.origin = cam.position;
  ray.dir = (cam.rotation * d_cam).normalized();
  ray.t_near = cam.t_near;
  ray.t_far = cam.t_far;
  return ray;
}

// Inverse of generate_ray: world point -> (row, col). Throws if the point is
// behind the camera.
inline Vec2 project(const Camera& cam, const Vec3& p) {
  const Vec3 p_cam = cam.rotation.transpose() * (p - cam.position);
  if (p_cam.z() >= -1e-12)
    throw InputError("project: point behind camera plane");
  const double inv_depth = 1.0 / -p_cam.z();
  const double col = cam.cx + cam.focal * p_cam.x() * inv_depth;
  const double row = cam.cy - cam.focal * p_cam.y() * inv_depth;
  return Vec2(row, col);
}

namespace detail {
inline void finalize_deltas(const Ray& ray, RaySamples& s) {
  const int n = s.size();
  s.delta.resize(n);
  for (int i = 0; i + 1 < n; ++i) s.delta[i] = s.t[i + 1] - s.t[i];
  double last = ray.t_far - s.t[n - 1];
  if (last <= 0.0) {
    last = n > 1 ? s.delta.head(n - 1).mean()
                 : (ray.t_far - ray.t_near);
  }
  s.delta[n - 1] = last;
}
}  // namespace detail

// One uniform draw per equal-width bin of [t_near, t_far].
template <UniformSource S>
RaySamples stratified_sample(const Ray& ray, int n, S&& u) {
  if (n < 1) throw InputError("stratified_sample: n must be >= 1");
  RaySamples s;
  s.t.resize(n);
  const double w = (ray.t_far - ray.t_near) / n;
  for (int i = 0; i < n; ++i) s.t[i] = ray.t_near + (i + u()) * w;
  detail::finalize_deltas(ray, s);
  return s;
}

// Inverse-transform draws from the piecewise-constant PDF over bins
// [edges[i], edges[i+1]) with unnormalized weights[i]. All-zero weights fall
// back to uniform stratified draws over the full range (reported through
// fell_back, not an error).
template <UniformSource S>
std::vector<double> draw_importance(std::span<const double> edges,
                                    std::span<const double> weights, int n,
                                    S&& u, bool* fell_back = nullptr) {
  if (edges.size() != weights.size() + 1)
    throw InputError("draw_importance: edges must have weights.size()+1 entries");
  if (n < 1) throw InputError("draw_importance: n must be >= 1");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw InputError("draw_importance: negative weight");
    total += w;
  }
  std::vector<double> out(static_cast<size_t>(n));
  if (fell_back) *fell_back = false;
  if (total <= 0.0) {
    if (fell_back) *fell_back = true;
    const double lo = edges.front();
    const double span = edges.back() - lo;
    for (int i = 0; i < n; ++i) out[i] = lo + (i + u()) * span / n;
    return out;
  }
  std::vector<double> cdf(weights.size() + 1, 0.0);
  for (size_t i = 0; i < weights.size(); ++i)
    cdf[i + 1] = cdf[i] + weights[i] / total;
  cdf.back() = 1.0;
  for (int i = 0; i < n; ++i) {
    const double v = u();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), v);
    size_t k = static_cast<size_t>(std::distance(cdf.begin(), it));
    k = std::min(std::max<size_t>(k, 1), weights.size()) - 1;
    const double lo = cdf[k], hi = cdf[k + 1];
    const double frac = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    out[i] = edges[k] + frac * (edges[k + 1] - edges[k]);
  }
  return out;
}

// Merges fine sample distances into the coarse set, sorts, and restores the
// strictly-ascending invariant by nudging exact duplicates forward by
// 1e-6 * (t_far - t_near).
inline RaySamples merge_samples(const Ray& ray, const RaySamples& coarse,
                                std::vector<double> fine_t) {
  std::vector<double> all(coarse.t.data(), coarse.t.data() + coarse.size());
  all.insert(all.end(), fine_t.begin(), fine_t.end());
  std::sort(all.begin(), all.end());
  const double nudge = 1e-6 * (ray.t_far - ray.t_near);
  for (size_t i = 1; i < all.size(); ++i)
    if (all[i] <= all[i - 1]) all[i] = all[i - 1] + nudge;
  RaySamples s;
  s.t = Eigen::Map<const VectorXd>(all.data(), static_cast<long>(all.size()));
  detail::finalize_deltas(ray, s);
  return s;
}

// Coarse-weight-guided refinement: draws n samples from the per-bin PDF of
// the coarse weights and returns them merged with the coarse samples.
template <UniformSource S>
RaySamples importance_sample(const Ray& ray, const RaySamples& coarse,
                             std::span<const double> weights, int n, S&& u,
                             bool* fell_back = nullptr) {
  if (static_cast<int>(weights.size()) != coarse.size())
    throw InputError("importance_sample: one weight per coarse sample required");
  std::vector<double> edges(static_cast<size_t>(coarse.size()) + 1);
  for (int i = 0; i < coarse.size(); ++i) edges[static_cast<size_t>(i)] = coarse.t[i];
  edges.back() = ray.t_far;
  auto fine = draw_importance(edges, weights, n, u, fell_back);
  return merge_samples(ray, coarse, std::move(fine));
}

}  // namespace splitnerf
