#pragma once

#include <cstdint>

#include "ept/model.hpp"
#include "ept/tensor.hpp"

namespace ept {

/// Tracks transient buffer footprint (docked in doubles) of a kernel run.
/// Outputs are excluded: the comparison of interest is the working set a
/// kernel needs beyond what it must return anyway.
struct ScratchStats {
  std::int64_t peak_doubles = 0;
  void track(std::int64_t n) {
    if (n > peak_doubles) peak_doubles = n;
  }
};

/// Single-head attention core, materializing the full (n x n) weight matrix.
/// q, k are (n x d); vh (n x c) scalar values; vv (3n x c) vector values;
/// bias (n x n) added to q k^T * scale before the softmax. Rows whose logits
/// are all -inf produce zero outputs. out_h is (n x c), out_v (3n x c).
/// `weights` optionally receives the softmax matrix.
void attention_naive(const Tensor& q, const Tensor& k, const Tensor& vh, const Tensor& vv,
                     const Tensor& bias, double scale, Tensor& out_h, Tensor& out_v,
                     ScratchStats* stats = nullptr, Tensor* weights = nullptr);

/// Streaming-softmax equivalent over key tiles: running max and sum per
/// query, O(n * tile) scratch instead of O(n^2).
void attention_tiled(const Tensor& q, const Tensor& k, const Tensor& vh, const Tensor& vv,
                     const Tensor& bias, double scale, std::int64_t tile, Tensor& out_h,
                     Tensor& out_v, ScratchStats* stats = nullptr);

/// Full attention sublayer on plain tensors: all heads of one layer, merged
/// through the output projections. h_ln is the pre-normalized scalar state.
/// tile = 0 selects the naive core. Mirrors the taped sublayer bit-for-bit
/// in structure; used to cross-check it and to measure kernel memory.
void attention_sublayer(const ModelParams& p, std::int64_t layer, const Tensor& h_ln,
                        const Tensor& v, const Tensor& bias, std::int64_t tile, Tensor& dh,
                        Tensor& dv, ScratchStats* stats = nullptr);

}  // namespace ept
