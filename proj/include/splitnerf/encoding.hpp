// splitnerf is Copyright(c) 2026 the splitnerf authors.
// The splitnerf source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#pragma once

#include <cmath>

#include "splitnerf/common.hpp"

namespace splitnerf {

// Sinusoidal positional encoding. For each input coordinate x the encoding
// emits [x]? ++ [sin(2^k pi x), cos(2^k pi x) for k = 0..L-1], laid out in
// coordinate-major blocks.
struct PositionalEncoding {
  int num_freqs = 10;
  bool include_identity = true;

  int output_dim(int input_dim) const {
    return input_dim * (2 * num_freqs + (include_identity ? 1 : 0));
  }
};

inline void encode(const PositionalEncoding& enc, const VectorXd& x,
                   VectorXd& out) {
  const int d = static_cast<int>(x.size());
  const int block = 2 * enc.num_freqs + (enc.include_identity ? 1 : 0);
  out.resize(static_cast<long>(d) * block);
  for (int j = 0; j < d; ++j) {
    int o = j * block;
    if (enc.include_identity) out[o++] = x[j];
    double arg = M_PI * x[j];  // 2^0 pi x
    for (int k = 0; k < enc.num_freqs; ++k) {
      out[o++] = std::sin(arg);
      out[o++] = std::cos(arg);
      arg *= 2.0;
    }
  }
}

inline VectorXd encode(const PositionalEncoding& enc, const VectorXd& x) {
  VectorXd out;
  encode(enc, x, out);
  return out;
}

// Batched row-wise encoding: X is n x d, result is n x output_dim(d).
inline void encode_batch(const PositionalEncoding& enc,
                         const Eigen::Ref<const MatrixXd>& X, MatrixXd& out) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  const int block = 2 * enc.num_freqs + (enc.include_identity ? 1 : 0);
  out.resize(n, static_cast<long>(d) * block);
  for (int j = 0; j < d; ++j) {
    const int o = j * block;
    if (enc.include_identity) out.col(o) = X.col(j);
    const int base = o + (enc.include_identity ? 1 : 0);
    for (int i = 0; i < n; ++i) {
      double arg = M_PI * X(i, j);
      for (int k = 0; k < enc.num_freqs; ++k) {
        out(i, base + 2 * k) = std::sin(arg);
        out(i, base + 2 * k + 1) = std::cos(arg);
        arg *= 2.0;
      }
    }
  }
}

}  // namespace splitnerf
