#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ept {

/// Dense row-major tensor of doubles. Most of the model works on rank-2
/// tensors (rows = atoms or edges, cols = channels); rank-1 is used for
/// per-row vectors and scalars are {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> dims);
  Tensor(std::vector<std::int64_t> dims, double fill);

  static Tensor scalar(double v);
  static Tensor from(std::vector<std::int64_t> dims, std::vector<double> data);

  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  /// Rank-2 view: rows() * cols() == size(). Rank-1 tensors are 1 x n.
  std::int64_t rows() const;
  std::int64_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }

  double item() const;  // requires size() == 1

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
  std::string shape_str() const;
  bool all_finite() const;

  void fill(double v);

 private:
  std::vector<std::int64_t> dims_;
  std::int64_t cols_ = 0;  // product of all but the first dim
  std::vector<double> data_;
};

std::string shape_str(const std::vector<std::int64_t>& dims);

/// c = a * b for rank-2 a (m x k) and b (k x n). Throws std::invalid_argument
/// naming both shapes on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T, a (m x k), b (n x k) -> (m x n).
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// a^T * b, a (k x m), b (k x n) -> (m x n).
Tensor matmul_tn(const Tensor& a, const Tensor& b);

/// Raw GEMM cores used by both Tensor and the attention kernels.
/// c (m x n) += or = a (m x k) * b (k x n); all row-major, no aliasing.
void gemm(const double* a, const double* b, double* c,
          std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);

/// Row-wise softmax with max subtraction. Rows whose entries are all -inf
/// become all zeros instead of NaN.
Tensor softmax_rows(const Tensor& a);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace ept
