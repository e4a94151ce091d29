#include "ept/so3.hpp"

#include <algorithm>
#include <cmath>

namespace ept {

Mat3 skew(const Vec3& w) {
  return {0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0};
}

Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = s;
    }
  return c;
}

Mat3 mat3_transpose(const Mat3& a) {
  return {a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]};
}

Vec3 mat3_apply(const Mat3& a, const Vec3& x) {
  return {a[0] * x[0] + a[1] * x[1] + a[2] * x[2], a[3] * x[0] + a[4] * x[1] + a[5] * x[2],
          a[6] * x[0] + a[7] * x[1] + a[8] * x[2]};
}

double mat3_det(const Mat3& a) {
  return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
         a[2] * (a[3] * a[7] - a[4] * a[6]);
}

Mat3 rotation_matrix(const Vec3& w) {
  const double th2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
  const double th = std::sqrt(th2);
  double a, b;  // sin(th)/th and (1-cos(th))/th^2
  if (th < 1e-4) {
    a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0;
    b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / th2;
  }
  const Mat3 k = skew(w);
  const Mat3 k2 = mat3_mul(k, k);
  Mat3 q{};
  for (int i = 0; i < 9; ++i) q[i] = a * k[i] + b * k2[i];
  q[0] += 1.0;
  q[4] += 1.0;
  q[8] += 1.0;
  return q;
}

Eigen3 eigen_sym3(const Mat3& a_in) {
  // work on the symmetrized copy so tiny asymmetries cannot stall convergence
  double a[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a[i][j] = 0.5 * (a_in[i * 3 + j] + a_in[j * 3 + i]);
  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    const double diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
    if (off <= 1e-60 * (diag + 1e-300)) break;
    for (int p = 0; p < 2; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int r = 0; r < 3; ++r) {
          const double arp = a[r][p], arq = a[r][q];
          a[r][p] = c * arp - s * arq;
          a[r][q] = s * arp + c * arq;
        }
        for (int r = 0; r < 3; ++r) {
          const double apr = a[p][r], aqr = a[q][r];
          a[p][r] = c * apr - s * aqr;
          a[q][r] = s * apr + c * aqr;
        }
        for (int r = 0; r < 3; ++r) {
          const double vrp = v[r][p], vrq = v[r][q];
          v[r][p] = c * vrp - s * vrq;
          v[r][q] = s * vrp + c * vrq;
        }
      }
  }

  int order[3] = {0, 1, 2};
  std::sort(order, order + 3, [&a](int x, int y) { return a[x][x] < a[y][y]; });
  Eigen3 out;
  for (int k = 0; k < 3; ++k) {
    out.values[k] = a[order[k]][order[k]];
    for (int r = 0; r < 3; ++r) out.vectors[r * 3 + k] = v[r][order[k]];
  }
  return out;
}

Mat3 pinv_sym3(const Mat3& a, double cut) {
  const Eigen3 e = eigen_sym3(a);
  const double trace = a[0] + a[4] + a[8];
  const double floor = cut * std::abs(trace);
  Mat3 out{};
  for (int k = 0; k < 3; ++k) {
    if (std::abs(e.values[k]) <= floor) continue;  // null direction dropped
    const double inv = 1.0 / e.values[k];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        out[i * 3 + j] += inv * e.vectors[i * 3 + k] * e.vectors[j * 3 + k];
  }
  return out;
}

}  // namespace ept
