#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ept/tensor.hpp"

namespace ept {

class Tape;

/// Handle to a tape node. Cheap to copy; valid for the lifetime of its tape.
struct Var {
  Tape* tape = nullptr;
  std::int64_t id = -1;
  bool ok() const { return tape != nullptr && id >= 0; }
};

/// Define-by-run reverse-mode tape. Each op records its output value and a
/// backward closure; backward() walks the nodes in reverse, accumulating
/// gradients. Graphs are rebuilt per step, so node order is execution order
/// and replay with the same inputs is bit-identical.
class Tape {
 public:
  Var leaf(Tensor value);

  std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }

  const Tensor& val(Var v) const;
  /// Gradient of the last backward() target w.r.t. v. Zero tensor if v was
  /// not reached.
  const Tensor& grad(Var v) const;

  /// Reverse sweep from a scalar output. Resets all gradients first.
  void backward(Var output);

  /// Low-level node emission; ops use this, callers normally don't.
  Var emit(Tensor value, std::function<void(Tape&)> back);
  Tensor& grad_buf(std::int64_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;
  };
  std::vector<Node> nodes_;
};

// Elementwise / scalar ops.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_const(Var a, const Tensor& c);
Var sub_const(Var a, const Tensor& c);   // a - c
Var mul_const(Var a, const Tensor& c);
Var silu(Var a);
Var abs_val(Var a);

// Linear algebra.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T

// Shape plumbing.
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::int64_t start, std::int64_t n);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, std::int64_t start, std::int64_t n);

// Indexed ops. Index arrays are captured by value; entries are validated.
Var gather_rows(Var table, std::vector<std::int64_t> idx);
Var segment_sum(Var x, std::vector<std::int64_t> ids, std::int64_t n_segments);
Var segment_mean(Var x, std::vector<std::int64_t> ids, std::int64_t n_segments);
Var broadcast_rows(Var x, std::vector<std::int64_t> ids);

// Reductions.
Var sum_all(Var a);
Var col_sum(Var a);  // (r x c) -> (1 x c)

// Normalization.
Var layer_norm(Var a, Var gain, Var bias);  // per row over channels
Var softmax_rows(Var a);                    // all -inf rows -> zero rows

inline constexpr double kLayerNormEps = 1e-5;

// Spatial-triple ops. V tensors of shape (3N x C) hold three N-row slices,
// one per spatial coordinate.
Var vec3_norm(Var v, std::int64_t n);                       // -> (N x C)
Var vec3_normalize(Var v, std::int64_t n, double guard);    // v / max(|v|, guard)
Var vec3_scale(Var v, Var s, std::int64_t n);               // per-channel scale by (N x C)
Var vec3_weighted_sum(Var v, Var w, std::int64_t n);        // -> (N x 3)

// Rigid-body ops.
/// Per-segment torque: out[b] = sum over rows r with ids[r]==b of
/// lever[r] x f[r]. f and lever are (N x 3).
Var block_torque(Var f, const Tensor& lever, std::vector<std::int64_t> ids,
                 std::int64_t n_segments);
/// Per-row 3x3 multiply: out[b] = P[b] * x[b], P is (M x 9) row-major 3x3.
Var block_matvec3(const Tensor& p, Var x);

/// Scatter per-edge scalars into a dense (n x n) matrix; absent pairs are 0.
Var scatter_edges(Var edge_vals, std::vector<std::pair<std::int64_t, std::int64_t>> pairs,
                  std::int64_t n);

}  // namespace ept
