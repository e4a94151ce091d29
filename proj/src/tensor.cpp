#include "ept/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ept {

namespace {

std::int64_t product(const std::vector<std::int64_t>& dims) {
  std::int64_t p = 1;
  for (auto d : dims) {
    if (d < 0) throw std::invalid_argument("tensor dim must be non-negative");
    p *= d;
  }
  return p;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> dims) : Tensor(std::move(dims), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> dims, double fill)
    : dims_(std::move(dims)) {
  if (dims_.empty()) throw std::invalid_argument("tensor needs at least one dim");
  data_.assign(static_cast<std::size_t>(product(dims_)), fill);
  cols_ = dims_.size() == 1 ? dims_[0] : product(dims_) / (dims_[0] == 0 ? 1 : dims_[0]);
  if (dims_[0] == 0) cols_ = 0;
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.data_[0] = v;
  return t;
}

Tensor Tensor::from(std::vector<std::int64_t> dims, std::vector<double> data) {
  Tensor t(std::move(dims));
  if (static_cast<std::int64_t>(data.size()) != t.size())
    throw std::invalid_argument("tensor data size does not match shape " + t.shape_str());
  t.data_ = std::move(data);
  return t;
}

std::int64_t Tensor::rows() const {
  if (dims_.empty()) return 0;
  return dims_.size() == 1 ? 1 : dims_[0];
}

std::int64_t Tensor::cols() const { return cols_; }

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str());
  return data_[0];
}

std::string Tensor::shape_str() const { return ept::shape_str(dims_); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) { data_.assign(data_.size(), v); }

std::string shape_str(const std::vector<std::int64_t>& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << " x ";
    os << dims[i];
  }
  os << ')';
  return os.str();
}

void gemm(const double* a, const double* b, double* c,
          std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < m * n; ++i) c[i] = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < m * n; ++i) c[i] = 0.0;
  for (std::int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

namespace {

void require_rank2(const Tensor& t, const char* who) {
  if (t.dims().size() > 2)
    throw std::invalid_argument(std::string(who) + ": expected rank <= 2 tensor, got " + t.shape_str());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul shape mismatch: " + a.shape_str() + " * " + b.shape_str());
  Tensor c({a.rows(), b.cols()});
  gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols(), false);
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt shape mismatch: " + a.shape_str() + " * " + b.shape_str() + "^T");
  Tensor c({a.rows(), b.rows()});
  gemm_nt(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.rows(), false);
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  if (a.rows() != b.rows())
    throw std::invalid_argument("matmul_tn shape mismatch: " + a.shape_str() + "^T * " + b.shape_str());
  Tensor c({a.cols(), b.cols()});
  gemm_tn(a.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols(), false);
  return c;
}

Tensor softmax_rows(const Tensor& a) {
  require_rank2(a, "softmax_rows");
  Tensor out(a.dims());
  const std::int64_t r = a.rows(), c = a.cols();
  for (std::int64_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < c; ++j) mx = std::max(mx, a.at(i, j));
    if (!(mx > -std::numeric_limits<double>::infinity())) continue;  // fully masked row -> zeros
    double sum = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double e = std::exp(a.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::int64_t j = 0; j < c; ++j) out.at(i, j) /= sum;
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_abs_diff shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

}  // namespace ept
