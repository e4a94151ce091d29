#include "ept/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ept {

namespace {

Tape& same_tape(Var a, Var b, const char* who) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument(std::string(who) + ": vars must come from one tape");
  return *a.tape;
}

Tape& tape_of(Var a, const char* who) {
  if (a.tape == nullptr) throw std::invalid_argument(std::string(who) + ": null var");
  return *a.tape;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var Tape::leaf(Tensor value) { return emit(std::move(value), nullptr); }

Var Tape::emit(Tensor value, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(back)});
  return Var{this, static_cast<std::int64_t>(nodes_.size()) - 1};
}

const Tensor& Tape::val(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= size())
    throw std::invalid_argument("val: var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

const Tensor& Tape::grad(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= size())
    throw std::invalid_argument("grad: var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)].grad;
}

Tensor& Tape::grad_buf(std::int64_t id) { return nodes_[static_cast<std::size_t>(id)].grad; }

void Tape::backward(Var output) {
  if (output.tape != this || output.id < 0 || output.id >= size())
    throw std::invalid_argument("backward: var does not belong to this tape");
  if (val(output).size() != 1)
    throw std::invalid_argument("backward: output must be a scalar, got shape " +
                                val(output).shape_str());
  for (auto& n : nodes_) n.grad = Tensor(n.value.dims());
  nodes_[static_cast<std::size_t>(output.id)].grad[0] = 1.0;
  for (std::int64_t i = output.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back) n.back(*this);
  }
}

// Ops compute their output node id (tape.size() at emission time) up front so
// backward closures can read their own gradient buffer.

// ---- elementwise ----

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const Tensor &ta = t.val(a), &tb = t.val(b);
  check_same_shape(ta, tb, "add");
  Tensor out(ta.dims());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
  const std::int64_t ia = a.id, ib = b.id, io = t.size();
  return t.emit(std::move(out), [ia, ib, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor &ga = tp.grad_buf(ia), &gb = tp.grad_buf(ib);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  const Tensor &ta = t.val(a), &tb = t.val(b);
  check_same_shape(ta, tb, "sub");
  Tensor out(ta.dims());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] - tb[i];
  const std::int64_t ia = a.id, ib = b.id, io = t.size();
  return t.emit(std::move(out), [ia, ib, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor &ga = tp.grad_buf(ia), &gb = tp.grad_buf(ib);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  const Tensor &ta = t.val(a), &tb = t.val(b);
  check_same_shape(ta, tb, "mul");
  Tensor out(ta.dims());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
  const std::int64_t ia = a.id, ib = b.id, io = t.size();
  return t.emit(std::move(out), [ia, ib, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    const Tensor &va = tp.val(Var{&tp, ia}), &vb = tp.val(Var{&tp, ib});
    Tensor &ga = tp.grad_buf(ia), &gb = tp.grad_buf(ib);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  });
}

Var scale(Var a, double c) {
  Tape& t = tape_of(a, "scale");
  const Tensor& ta = t.val(a);
  Tensor out(ta.dims());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] * c;
  const std::int64_t ia = a.id, io = t.size();
  return t.emit(std::move(out), [ia, io, c](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& ga = tp.grad_buf(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
}

Var add_const(Var a, const Tensor& c) {
  Tape& t = tape_of(a, "add_const");
  const Tensor& ta = t.val(a);
  check_same_shape(ta, c, "add_const");
  Tensor out(ta.dims());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] + c[i];
  const std::int64_t ia = a.id, io = t.size();
  return t.emit(std::move(out), [ia, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& ga = tp.grad_buf(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var sub_const(Var a, const Tensor& c) {
  Tape& t = tape_of(a, "sub_const");
  const Tensor& ta = t.val(a);
  check_same_shape(ta, c, "sub_const");
  Tensor out(ta.dims());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] - c[i];
  const std::int64_t ia = a.id, io = t.size();
  return t.emit(std::move(out), [ia, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& ga = tp.grad_buf(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var mul_const(Var a, const Tensor& c) {
  Tape& t = tape_of(a, "mul_const");
  const Tensor& ta = t.val(a);
  check_same_shape(ta, c, "mul_const");
  Tensor out(ta.dims());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] * c[i];
  const std::int64_t ia = a.id, io = t.size();
  Tensor ckeep = c;
  return t.emit(std::move(out), [ia, io, ckeep = std::move(ckeep)](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& ga = tp.grad_buf(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ckeep[i];
  });
}

Var silu(Var a) {
  Tape& t = tape_of(a, "silu");
  const Tensor& ta = t.val(a);
  Tensor out(ta.dims());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] * sigmoid(ta[i]);
  const std::int64_t ia = a.id, io = t.size();
  return t.emit(std::move(out), [ia, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    const Tensor& x = tp.val(Var{&tp, ia});
    Tensor& ga = tp.grad_buf(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid(x[i]);
      ga[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

Var abs_val(Var a) {
  Tape& t = tape_of(a, "abs_val");
  const Tensor& ta = t.val(a);
  Tensor out(ta.dims());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::abs(ta[i]);
  const std::int64_t ia = a.id, io = t.size();
  return t.emit(std::move(out), [ia, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    const Tensor& x = tp.val(Var{&tp, ia});
    Tensor& ga = tp.grad_buf(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
      ga[i] += g[i] * s;
    }
  });
}

// ---- linear algebra ----

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  Tensor out = matmul(t.val(a), t.val(b));
  const std::int64_t ia = a.id, ib = b.id, io = t.size();
  return t.emit(std::move(out), [ia, ib, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    const Tensor &va = tp.val(Var{&tp, ia}), &vb = tp.val(Var{&tp, ib});
    gemm_nt(g.data(), vb.data(), tp.grad_buf(ia).data(), g.rows(), g.cols(), va.cols(), true);
    gemm_tn(va.data(), g.data(), tp.grad_buf(ib).data(), va.cols(), va.rows(), g.cols(), true);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul_nt");
  Tensor out = matmul_nt(t.val(a), t.val(b));
  const std::int64_t ia = a.id, ib = b.id, io = t.size();
  return t.emit(std::move(out), [ia, ib, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    const Tensor &va = tp.val(Var{&tp, ia}), &vb = tp.val(Var{&tp, ib});
    // c = a b^T: da = g b, db = g^T a
    gemm(g.data(), vb.data(), tp.grad_buf(ia).data(), g.rows(), g.cols(), vb.cols(), true);
    gemm_tn(g.data(), va.data(), tp.grad_buf(ib).data(), g.cols(), g.rows(), va.cols(), true);
  });
}

// ---- shape plumbing ----

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Tape& t = tape_of(parts[0], "concat_cols");
  const std::int64_t r = t.val(parts[0]).rows();
  std::int64_t c = 0;
  for (Var p : parts) {
    same_tape(parts[0], p, "concat_cols");
    if (t.val(p).rows() != r)
      throw std::invalid_argument("concat_cols: row mismatch " + t.val(p).shape_str());
    c += t.val(p).cols();
  }
  Tensor out({r, c});
  std::int64_t off = 0;
  for (Var p : parts) {
    const Tensor& tp = t.val(p);
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < tp.cols(); ++j) out.at(i, off + j) = tp.at(i, j);
    off += tp.cols();
  }
  std::vector<std::int64_t> ids;
  std::vector<std::int64_t> widths;
  for (Var p : parts) {
    ids.push_back(p.id);
    widths.push_back(t.val(p).cols());
  }
  const std::int64_t io = t.size();
  return t.emit(std::move(out), [ids, widths, io, r](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    std::int64_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor& gp = tp.grad_buf(ids[k]);
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < widths[k]; ++j) gp.at(i, j) += g.at(i, off + j);
      off += widths[k];
    }
  });
}

Var slice_cols(Var a, std::int64_t start, std::int64_t n) {
  Tape& t = tape_of(a, "slice_cols");
  const Tensor& ta = t.val(a);
  if (start < 0 || n < 0 || start + n > ta.cols())
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " +
                                std::to_string(start + n) + ") out of " + ta.shape_str());
  Tensor out({ta.rows(), n});
  for (std::int64_t i = 0; i < ta.rows(); ++i)
    for (std::int64_t j = 0; j < n; ++j) out.at(i, j) = ta.at(i, start + j);
  const std::int64_t ia = a.id, io = t.size();
  return t.emit(std::move(out), [ia, io, start, n](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& ga = tp.grad_buf(ia);
    for (std::int64_t i = 0; i < g.rows(); ++i)
      for (std::int64_t j = 0; j < n; ++j) ga.at(i, start + j) += g.at(i, j);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Tape& t = tape_of(parts[0], "concat_rows");
  const std::int64_t c = t.val(parts[0]).cols();
  std::int64_t r = 0;
  for (Var p : parts) {
    same_tape(parts[0], p, "concat_rows");
    if (t.val(p).cols() != c)
      throw std::invalid_argument("concat_rows: col mismatch " + t.val(p).shape_str());
    r += t.val(p).rows();
  }
  Tensor out({r, c});
  std::int64_t off = 0;
  for (Var p : parts) {
    const Tensor& tp = t.val(p);
    for (std::int64_t i = 0; i < tp.rows(); ++i)
      for (std::int64_t j = 0; j < c; ++j) out.at(off + i, j) = tp.at(i, j);
    off += tp.rows();
  }
  std::vector<std::int64_t> ids, heights;
  for (Var p : parts) {
    ids.push_back(p.id);
    heights.push_back(t.val(p).rows());
  }
  const std::int64_t io = t.size();
  return t.emit(std::move(out), [ids, heights, io, c](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    std::int64_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor& gp = tp.grad_buf(ids[k]);
      for (std::int64_t i = 0; i < heights[k]; ++i)
        for (std::int64_t j = 0; j < c; ++j) gp.at(i, j) += g.at(off + i, j);
      off += heights[k];
    }
  });
}

Var slice_rows(Var a, std::int64_t start, std::int64_t n) {
  Tape& t = tape_of(a, "slice_rows");
  const Tensor& ta = t.val(a);
  if (start < 0 || n < 0 || start + n > ta.rows())
    throw std::invalid_argument("slice_rows: range [" + std::to_string(start) + ", " +
                                std::to_string(start + n) + ") out of " + ta.shape_str());
  Tensor out({n, ta.cols()});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < ta.cols(); ++j) out.at(i, j) = ta.at(start + i, j);
  const std::int64_t ia = a.id, io = t.size();
  return t.emit(std::move(out), [ia, io, start, n](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& ga = tp.grad_buf(ia);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < g.cols(); ++j) ga.at(start + i, j) += g.at(i, j);
  });
}

// ---- indexed ----

namespace {

void check_ids(const std::vector<std::int64_t>& ids, std::int64_t limit, const char* who) {
  for (std::size_t r = 0; r < ids.size(); ++r)
    if (ids[r] < 0 || ids[r] >= limit)
      throw std::out_of_range(std::string(who) + ": index " + std::to_string(ids[r]) +
                              " at position " + std::to_string(r) + " outside [0, " +
                              std::to_string(limit) + ")");
}

}  // namespace

Var gather_rows(Var table, std::vector<std::int64_t> idx) {
  Tape& t = tape_of(table, "gather_rows");
  const Tensor& tb = t.val(table);
  check_ids(idx, tb.rows(), "gather_rows");
  Tensor out({static_cast<std::int64_t>(idx.size()), tb.cols()});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::int64_t j = 0; j < tb.cols(); ++j)
      out.at(static_cast<std::int64_t>(r), j) = tb.at(idx[r], j);
  const std::int64_t it = table.id, io = t.size();
  return t.emit(std::move(out), [it, io, idx = std::move(idx)](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& gt = tp.grad_buf(it);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::int64_t j = 0; j < g.cols(); ++j)
        gt.at(idx[r], j) += g.at(static_cast<std::int64_t>(r), j);
  });
}

Var segment_sum(Var x, std::vector<std::int64_t> ids, std::int64_t n_segments) {
  Tape& t = tape_of(x, "segment_sum");
  const Tensor& tx = t.val(x);
  if (static_cast<std::int64_t>(ids.size()) != tx.rows())
    throw std::invalid_argument("segment_sum: ids length " + std::to_string(ids.size()) +
                                " != rows of " + tx.shape_str());
  check_ids(ids, n_segments, "segment_sum");
  Tensor out({n_segments, tx.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (std::int64_t j = 0; j < tx.cols(); ++j)
      out.at(ids[r], j) += tx.at(static_cast<std::int64_t>(r), j);
  const std::int64_t ix = x.id, io = t.size();
  return t.emit(std::move(out), [ix, io, ids = std::move(ids)](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& gx = tp.grad_buf(ix);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::int64_t j = 0; j < g.cols(); ++j)
        gx.at(static_cast<std::int64_t>(r), j) += g.at(ids[r], j);
  });
}

Var segment_mean(Var x, std::vector<std::int64_t> ids, std::int64_t n_segments) {
  Tape& t = tape_of(x, "segment_mean");
  const Tensor& tx = t.val(x);
  if (static_cast<std::int64_t>(ids.size()) != tx.rows())
    throw std::invalid_argument("segment_mean: ids length " + std::to_string(ids.size()) +
                                " != rows of " + tx.shape_str());
  check_ids(ids, n_segments, "segment_mean");
  std::vector<std::int64_t> count(static_cast<std::size_t>(n_segments), 0);
  for (auto id : ids) ++count[static_cast<std::size_t>(id)];
  Tensor out({n_segments, tx.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (std::int64_t j = 0; j < tx.cols(); ++j)
      out.at(ids[r], j) += tx.at(static_cast<std::int64_t>(r), j);
  for (std::int64_t s = 0; s < n_segments; ++s)
    if (count[static_cast<std::size_t>(s)] > 0)
      for (std::int64_t j = 0; j < tx.cols(); ++j)
        out.at(s, j) /= static_cast<double>(count[static_cast<std::size_t>(s)]);
  const std::int64_t ix = x.id, io = t.size();
  return t.emit(std::move(out),
                [ix, io, ids = std::move(ids), count = std::move(count)](Tape& tp) {
                  const Tensor& g = tp.grad_buf(io);
                  Tensor& gx = tp.grad_buf(ix);
                  for (std::size_t r = 0; r < ids.size(); ++r) {
                    const double inv = 1.0 / static_cast<double>(count[static_cast<std::size_t>(ids[r])]);
                    for (std::int64_t j = 0; j < g.cols(); ++j)
                      gx.at(static_cast<std::int64_t>(r), j) += g.at(ids[r], j) * inv;
                  }
                });
}

Var broadcast_rows(Var x, std::vector<std::int64_t> ids) {
  Tape& t = tape_of(x, "broadcast_rows");
  const Tensor& tx = t.val(x);
  check_ids(ids, tx.rows(), "broadcast_rows");
  Tensor out({static_cast<std::int64_t>(ids.size()), tx.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (std::int64_t j = 0; j < tx.cols(); ++j)
      out.at(static_cast<std::int64_t>(r), j) = tx.at(ids[r], j);
  const std::int64_t ix = x.id, io = t.size();
  return t.emit(std::move(out), [ix, io, ids = std::move(ids)](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& gx = tp.grad_buf(ix);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::int64_t j = 0; j < g.cols(); ++j)
        gx.at(ids[r], j) += g.at(static_cast<std::int64_t>(r), j);
  });
}

// ---- reductions ----

Var sum_all(Var a) {
  Tape& t = tape_of(a, "sum_all");
  const Tensor& ta = t.val(a);
  double s = 0.0;
  for (std::int64_t i = 0; i < ta.size(); ++i) s += ta[i];
  const std::int64_t ia = a.id, io = t.size();
  return t.emit(Tensor::scalar(s), [ia, io](Tape& tp) {
    const double g = tp.grad_buf(io)[0];
    Tensor& ga = tp.grad_buf(ia);
    for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var col_sum(Var a) {
  Tape& t = tape_of(a, "col_sum");
  const Tensor& ta = t.val(a);
  Tensor out({1, ta.cols()});
  for (std::int64_t i = 0; i < ta.rows(); ++i)
    for (std::int64_t j = 0; j < ta.cols(); ++j) out.at(0, j) += ta.at(i, j);
  const std::int64_t ia = a.id, io = t.size();
  return t.emit(std::move(out), [ia, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& ga = tp.grad_buf(ia);
    for (std::int64_t i = 0; i < ga.rows(); ++i)
      for (std::int64_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += g.at(0, j);
  });
}

// ---- normalization ----

Var layer_norm(Var a, Var gain, Var bias) {
  Tape& t = same_tape(a, gain, "layer_norm");
  same_tape(a, bias, "layer_norm");
  const Tensor& x = t.val(a);
  const Tensor &gm = t.val(gain), &bt = t.val(bias);
  const std::int64_t r = x.rows(), c = x.cols();
  if (gm.size() != c || bt.size() != c)
    throw std::invalid_argument("layer_norm: gain/bias must have " + std::to_string(c) +
                                " entries, got " + gm.shape_str() + " and " + bt.shape_str());
  Tensor out(x.dims());
  Tensor xhat(x.dims());
  Tensor inv_sd({r});
  for (std::int64_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::int64_t j = 0; j < c; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_sd[i] = inv;
    for (std::int64_t j = 0; j < c; ++j) {
      xhat.at(i, j) = (x.at(i, j) - mean) * inv;
      out.at(i, j) = gm[j] * xhat.at(i, j) + bt[j];
    }
  }
  const std::int64_t ia = a.id, ig = gain.id, ib = bias.id, io = t.size();
  return t.emit(std::move(out),
                [ia, ig, ib, io, xhat = std::move(xhat), inv_sd = std::move(inv_sd)](Tape& tp) {
                  const Tensor& g = tp.grad_buf(io);
                  const Tensor& gm = tp.val(Var{&tp, ig});
                  Tensor& ga = tp.grad_buf(ia);
                  Tensor& gg = tp.grad_buf(ig);
                  Tensor& gb = tp.grad_buf(ib);
                  const std::int64_t r = g.rows(), c = g.cols();
                  for (std::int64_t i = 0; i < r; ++i) {
                    double sum_gy = 0.0, sum_gyx = 0.0;
                    for (std::int64_t j = 0; j < c; ++j) {
                      const double gy = g.at(i, j) * gm[j];
                      sum_gy += gy;
                      sum_gyx += gy * xhat.at(i, j);
                      gg[j] += g.at(i, j) * xhat.at(i, j);
                      gb[j] += g.at(i, j);
                    }
                    const double mg = sum_gy / static_cast<double>(c);
                    const double mgx = sum_gyx / static_cast<double>(c);
                    for (std::int64_t j = 0; j < c; ++j) {
                      const double gy = g.at(i, j) * gm[j];
                      ga.at(i, j) += (gy - mg - xhat.at(i, j) * mgx) * inv_sd[i];
                    }
                  }
                });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a, "softmax_rows");
  Tensor out = softmax_rows(t.val(a));
  const std::int64_t ia = a.id, io = t.size();
  return t.emit(std::move(out), [ia, io](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    const Tensor& y = tp.val(Var{&tp, io});
    Tensor& ga = tp.grad_buf(ia);
    const std::int64_t r = g.rows(), c = g.cols();
    for (std::int64_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::int64_t j = 0; j < c; ++j) ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

// ---- spatial triples ----

namespace {

void check_triple(const Tensor& v, std::int64_t n, const char* who) {
  if (v.rows() != 3 * n)
    throw std::invalid_argument(std::string(who) + ": expected " + std::to_string(3 * n) +
                                " rows (3 slices), got " + v.shape_str());
}

}  // namespace

Var vec3_norm(Var v, std::int64_t n) {
  Tape& t = tape_of(v, "vec3_norm");
  const Tensor& tv = t.val(v);
  check_triple(tv, n, "vec3_norm");
  const std::int64_t c = tv.cols();
  Tensor out({n, c});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      const double x = tv.at(i, j), y = tv.at(n + i, j), z = tv.at(2 * n + i, j);
      out.at(i, j) = std::sqrt(x * x + y * y + z * z);
    }
  const std::int64_t iv = v.id, io = t.size();
  return t.emit(std::move(out), [iv, io, n](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    const Tensor& tv = tp.val(Var{&tp, iv});
    const Tensor& nv = tp.val(Var{&tp, io});
    Tensor& gv = tp.grad_buf(iv);
    const std::int64_t c = g.cols();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        const double norm = nv.at(i, j);
        if (norm <= 0.0) continue;  // flat point: subgradient 0
        const double f = g.at(i, j) / norm;
        gv.at(i, j) += f * tv.at(i, j);
        gv.at(n + i, j) += f * tv.at(n + i, j);
        gv.at(2 * n + i, j) += f * tv.at(2 * n + i, j);
      }
  });
}

Var vec3_normalize(Var v, std::int64_t n, double guard) {
  Tape& t = tape_of(v, "vec3_normalize");
  const Tensor& tv = t.val(v);
  check_triple(tv, n, "vec3_normalize");
  const std::int64_t c = tv.cols();
  Tensor out(tv.dims());
  Tensor norms({n, c});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      const double x = tv.at(i, j), y = tv.at(n + i, j), z = tv.at(2 * n + i, j);
      const double norm = std::max(std::sqrt(x * x + y * y + z * z), guard);
      norms.at(i, j) = norm;
      out.at(i, j) = x / norm;
      out.at(n + i, j) = y / norm;
      out.at(2 * n + i, j) = z / norm;
    }
  const std::int64_t iv = v.id, io = t.size();
  return t.emit(std::move(out), [iv, io, n, guard, norms = std::move(norms)](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    const Tensor& tv = tp.val(Var{&tp, iv});
    Tensor& gv = tp.grad_buf(iv);
    const std::int64_t c = g.cols();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        const double x = tv.at(i, j), y = tv.at(n + i, j), z = tv.at(2 * n + i, j);
        const double gx = g.at(i, j), gy = g.at(n + i, j), gz = g.at(2 * n + i, j);
        const double norm = norms.at(i, j);
        const double raw = std::sqrt(x * x + y * y + z * z);
        if (raw <= guard) {
          // below the guard the map is linear: v / guard
          gv.at(i, j) += gx / guard;
          gv.at(n + i, j) += gy / guard;
          gv.at(2 * n + i, j) += gz / guard;
        } else {
          const double dot = gx * x + gy * y + gz * z;
          const double inv = 1.0 / norm, inv3 = inv * inv * inv;
          gv.at(i, j) += gx * inv - x * dot * inv3;
          gv.at(n + i, j) += gy * inv - y * dot * inv3;
          gv.at(2 * n + i, j) += gz * inv - z * dot * inv3;
        }
      }
  });
}

Var vec3_scale(Var v, Var s, std::int64_t n) {
  Tape& t = same_tape(v, s, "vec3_scale");
  const Tensor &tv = t.val(v), &ts = t.val(s);
  check_triple(tv, n, "vec3_scale");
  if (ts.rows() != n || ts.cols() != tv.cols())
    throw std::invalid_argument("vec3_scale: scale shape " + ts.shape_str() + " vs value " +
                                tv.shape_str());
  const std::int64_t c = tv.cols();
  Tensor out(tv.dims());
  for (std::int64_t d = 0; d < 3; ++d)
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j)
        out.at(d * n + i, j) = tv.at(d * n + i, j) * ts.at(i, j);
  const std::int64_t iv = v.id, is = s.id, io = t.size();
  return t.emit(std::move(out), [iv, is, io, n](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    const Tensor &tv = tp.val(Var{&tp, iv}), &ts = tp.val(Var{&tp, is});
    Tensor &gv = tp.grad_buf(iv), &gs = tp.grad_buf(is);
    const std::int64_t c = g.cols();
    for (std::int64_t d = 0; d < 3; ++d)
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < c; ++j) {
          gv.at(d * n + i, j) += g.at(d * n + i, j) * ts.at(i, j);
          gs.at(i, j) += g.at(d * n + i, j) * tv.at(d * n + i, j);
        }
  });
}

Var vec3_weighted_sum(Var v, Var w, std::int64_t n) {
  Tape& t = same_tape(v, w, "vec3_weighted_sum");
  const Tensor &tv = t.val(v), &tw = t.val(w);
  check_triple(tv, n, "vec3_weighted_sum");
  if (tw.rows() != n || tw.cols() != tv.cols())
    throw std::invalid_argument("vec3_weighted_sum: weight shape " + tw.shape_str() +
                                " vs value " + tv.shape_str());
  const std::int64_t c = tv.cols();
  Tensor out({n, 3});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t d = 0; d < 3; ++d) {
      double s = 0.0;
      for (std::int64_t j = 0; j < c; ++j) s += tv.at(d * n + i, j) * tw.at(i, j);
      out.at(i, d) = s;
    }
  const std::int64_t iv = v.id, iw = w.id, io = t.size();
  return t.emit(std::move(out), [iv, iw, io, n](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    const Tensor &tv = tp.val(Var{&tp, iv}), &tw = tp.val(Var{&tp, iw});
    Tensor &gv = tp.grad_buf(iv), &gw = tp.grad_buf(iw);
    const std::int64_t c = tv.cols();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t d = 0; d < 3; ++d) {
        const double gd = g.at(i, d);
        if (gd == 0.0) continue;
        for (std::int64_t j = 0; j < c; ++j) {
          gv.at(d * n + i, j) += gd * tw.at(i, j);
          gw.at(i, j) += gd * tv.at(d * n + i, j);
        }
      }
  });
}

// ---- rigid body ----

Var block_torque(Var f, const Tensor& lever, std::vector<std::int64_t> ids,
                 std::int64_t n_segments) {
  Tape& t = tape_of(f, "block_torque");
  const Tensor& tf = t.val(f);
  if (tf.cols() != 3 || lever.cols() != 3 || lever.rows() != tf.rows())
    throw std::invalid_argument("block_torque: need matching (N x 3) tensors, got " +
                                tf.shape_str() + " and " + lever.shape_str());
  if (static_cast<std::int64_t>(ids.size()) != tf.rows())
    throw std::invalid_argument("block_torque: ids length mismatch");
  check_ids(ids, n_segments, "block_torque");
  Tensor out({n_segments, 3});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::int64_t i = static_cast<std::int64_t>(r);
    const double ux = lever.at(i, 0), uy = lever.at(i, 1), uz = lever.at(i, 2);
    const double fx = tf.at(i, 0), fy = tf.at(i, 1), fz = tf.at(i, 2);
    out.at(ids[r], 0) += uy * fz - uz * fy;
    out.at(ids[r], 1) += uz * fx - ux * fz;
    out.at(ids[r], 2) += ux * fy - uy * fx;
  }
  const std::int64_t iff = f.id, io = t.size();
  Tensor lv = lever;
  return t.emit(std::move(out), [iff, io, ids = std::move(ids), lv = std::move(lv)](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& gf = tp.grad_buf(iff);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const std::int64_t i = static_cast<std::int64_t>(r);
      const double ux = lv.at(i, 0), uy = lv.at(i, 1), uz = lv.at(i, 2);
      const double gx = g.at(ids[r], 0), gy = g.at(ids[r], 1), gz = g.at(ids[r], 2);
      // d(u x f)/df = skew(u), so grad_f = skew(u)^T g = g x u
      gf.at(i, 0) += gy * uz - gz * uy;
      gf.at(i, 1) += gz * ux - gx * uz;
      gf.at(i, 2) += gx * uy - gy * ux;
    }
  });
}

Var block_matvec3(const Tensor& p, Var x) {
  Tape& t = tape_of(x, "block_matvec3");
  const Tensor& tx = t.val(x);
  if (tx.cols() != 3 || p.cols() != 9 || p.rows() != tx.rows())
    throw std::invalid_argument("block_matvec3: need (M x 9) and (M x 3), got " + p.shape_str() +
                                " and " + tx.shape_str());
  const std::int64_t m = tx.rows();
  Tensor out({m, 3});
  for (std::int64_t b = 0; b < m; ++b)
    for (std::int64_t r = 0; r < 3; ++r)
      out.at(b, r) = p.at(b, 3 * r) * tx.at(b, 0) + p.at(b, 3 * r + 1) * tx.at(b, 1) +
                     p.at(b, 3 * r + 2) * tx.at(b, 2);
  const std::int64_t ix = x.id, io = t.size();
  Tensor pk = p;
  return t.emit(std::move(out), [ix, io, pk = std::move(pk)](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& gx = tp.grad_buf(ix);
    for (std::int64_t b = 0; b < g.rows(); ++b)
      for (std::int64_t cidx = 0; cidx < 3; ++cidx)
        gx.at(b, cidx) += pk.at(b, cidx) * g.at(b, 0) + pk.at(b, 3 + cidx) * g.at(b, 1) +
                          pk.at(b, 6 + cidx) * g.at(b, 2);
  });
}

Var scatter_edges(Var edge_vals, std::vector<std::pair<std::int64_t, std::int64_t>> pairs,
                  std::int64_t n) {
  Tape& t = tape_of(edge_vals, "scatter_edges");
  const Tensor& te = t.val(edge_vals);
  if (te.size() != static_cast<std::int64_t>(pairs.size()))
    throw std::invalid_argument("scatter_edges: " + std::to_string(pairs.size()) +
                                " pairs vs values " + te.shape_str());
  Tensor out({n, n});
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const auto [i, j] = pairs[e];
    if (i < 0 || i >= n || j < 0 || j >= n)
      throw std::out_of_range("scatter_edges: pair (" + std::to_string(i) + ", " +
                              std::to_string(j) + ") outside [0, " + std::to_string(n) + ")");
    out.at(i, j) += te[static_cast<std::int64_t>(e)];
  }
  const std::int64_t ie = edge_vals.id, io = t.size();
  return t.emit(std::move(out), [ie, io, pairs = std::move(pairs)](Tape& tp) {
    const Tensor& g = tp.grad_buf(io);
    Tensor& ge = tp.grad_buf(ie);
    for (std::size_t e = 0; e < pairs.size(); ++e)
      ge[static_cast<std::int64_t>(e)] += g.at(pairs[e].first, pairs[e].second);
  });
}

}  // namespace ept
