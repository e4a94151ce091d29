#pragma once

#include <array>

namespace ept {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

Mat3 skew(const Vec3& w);
Mat3 mat3_mul(const Mat3& a, const Mat3& b);
Mat3 mat3_transpose(const Mat3& a);
Vec3 mat3_apply(const Mat3& a, const Vec3& x);
double mat3_det(const Mat3& a);

/// Closed-form exponential of skew(w) (Rodrigues); series branch below
/// |w| = 1e-4 avoids the 0/0 coefficients. Always orthogonal with det 1.
Mat3 rotation_matrix(const Vec3& w);

struct Eigen3 {
  Vec3 values;   // ascending
  Mat3 vectors;  // columns are the matching eigenvectors
};

/// Cyclic Jacobi diagonalization of a symmetric 3x3 matrix.
Eigen3 eigen_sym3(const Mat3& a);

/// Eigendecomposition pseudo-inverse: eigenvalues below cut * trace (and any
/// when the trace is zero) are treated as exact zeros and dropped.
Mat3 pinv_sym3(const Mat3& a, double cut = 1e-10);

}  // namespace ept
