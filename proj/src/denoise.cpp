#include "ept/denoise.hpp"

#include <cmath>
#include <stdexcept>

namespace ept {

namespace {

void check_coords(const Tensor& z) {
  if (z.rows() < 1 || z.cols() != 3)
    throw std::invalid_argument("expected nonempty (N x 3) coordinates");
}

void check_partition(const Tensor& z, const std::vector<std::uint16_t>& block_of,
                     std::int64_t m) {
  check_coords(z);
  if (static_cast<std::int64_t>(block_of.size()) != z.rows())
    throw std::invalid_argument("coordinate/partition length mismatch");
  if (m < 1) throw std::invalid_argument("block count must be positive");
  for (std::uint16_t b : block_of)
    if (b >= m) throw std::out_of_range("block id out of range");
}

std::vector<std::int64_t> counts_of(const std::vector<std::uint16_t>& block_of, std::int64_t m) {
  std::vector<std::int64_t> c(m, 0);
  for (std::uint16_t b : block_of) ++c[b];
  return c;
}

std::vector<std::int64_t> ids_of(const std::vector<std::uint16_t>& block_of) {
  return std::vector<std::int64_t>(block_of.begin(), block_of.end());
}

Tensor draw_normal(std::int64_t rows, RngStream& rng) {
  Tensor e({rows, 3});
  for (std::int64_t i = 0; i < rows; ++i)
    for (int c = 0; c < 3; ++c) e.at(i, c) = rng.normal();
  return e;
}

/// Per-atom position from noised centers plus (optionally rotated) relative
/// coordinates, then centering. Shared by the block kernels and reconstruct
/// so replays are bit-identical.
Tensor assemble_blocks(const Tensor& zb_noised, const Tensor& z_r,
                       const std::vector<std::uint16_t>& block_of, const Tensor* omega) {
  const std::int64_t n = z_r.rows();
  std::vector<Mat3> q;
  if (omega != nullptr) {
    q.reserve(static_cast<std::size_t>(omega->rows()));
    for (std::int64_t b = 0; b < omega->rows(); ++b)
      q.push_back(rotation_matrix({omega->at(b, 0), omega->at(b, 1), omega->at(b, 2)}));
  }
  Tensor p({n, 3});
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint16_t b = block_of[i];
    Vec3 u = {z_r.at(i, 0), z_r.at(i, 1), z_r.at(i, 2)};
    if (omega != nullptr) u = mat3_apply(q[b], u);
    for (int c = 0; c < 3; ++c) p.at(i, c) = zb_noised.at(b, c) + u[c];
  }
  return center_project(p);
}

}  // namespace

Tensor center_project(const Tensor& z) {
  check_coords(z);
  const std::int64_t n = z.rows();
  Tensor out = z;
  for (int c = 0; c < 3; ++c) {
    // Kahan sum keeps the mean error at roundoff of the data scale even for
    // large N, which lets the snap-to-zero below make C exactly idempotent.
    double sum = 0.0, comp = 0.0, scale = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double v = z.at(i, c);
      scale = std::max(scale, std::abs(v));
      const double y = v - comp;
      const double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
    const double mean = sum / static_cast<double>(n);
    if (std::abs(mean) <= 1e-14 * (1.0 + scale)) continue;  // already centered
    for (std::int64_t i = 0; i < n; ++i) out.at(i, c) -= mean;
  }
  return out;
}

Tensor block_mean(const Tensor& z, const std::vector<std::uint16_t>& block_of, std::int64_t m) {
  check_partition(z, block_of, m);
  // Anchored at each block's first atom: mean = anchor + mean(deviation).
  // When every atom of a block holds the same value the deviations are
  // exactly zero, so mu(g(X)) returns X bit-for-bit.
  Tensor anchor({m, 3});
  std::vector<char> seen(static_cast<std::size_t>(m), 0);
  for (std::int64_t i = 0; i < z.rows(); ++i) {
    const std::uint16_t b = block_of[i];
    if (!seen[b]) {
      for (int c = 0; c < 3; ++c) anchor.at(b, c) = z.at(i, c);
      seen[b] = 1;
    }
  }
  Tensor out({m, 3});
  const auto counts = counts_of(block_of, m);
  for (std::int64_t i = 0; i < z.rows(); ++i)
    for (int c = 0; c < 3; ++c) out.at(block_of[i], c) += z.at(i, c) - anchor.at(block_of[i], c);
  for (std::int64_t b = 0; b < m; ++b) {
    const double k = counts[b] > 0 ? static_cast<double>(counts[b]) : 1.0;
    for (int c = 0; c < 3; ++c) out.at(b, c) = anchor.at(b, c) + out.at(b, c) / k;
  }
  return out;
}

Tensor block_broadcast(const Tensor& zb, const std::vector<std::uint16_t>& block_of) {
  const std::int64_t n = static_cast<std::int64_t>(block_of.size());
  Tensor out({n, 3});
  for (std::int64_t i = 0; i < n; ++i) {
    if (block_of[i] >= zb.rows()) throw std::out_of_range("block id out of range");
    for (int c = 0; c < 3; ++c) out.at(i, c) = zb.at(block_of[i], c);
  }
  return out;
}

NoiseSample perturb_atom(const Tensor& z, double sigma_t, RngStream& rng) {
  check_coords(z);
  if (!(sigma_t > 0.0)) throw std::invalid_argument("sigma_t must be positive");
  NoiseSample s;
  s.z_clean = z;
  s.sigma_t = sigma_t;
  s.z_b = z;  // every atom its own center
  s.z_r = Tensor({z.rows(), 3});
  s.eps_atom = draw_normal(z.rows(), rng);
  Tensor p({z.rows(), 3});
  for (std::int64_t i = 0; i < z.rows(); ++i)
    for (int c = 0; c < 3; ++c) p.at(i, c) = z.at(i, c) + sigma_t * s.eps_atom.at(i, c);
  s.z_prime = center_project(p);
  return s;
}

NoiseSample perturb_block_translation(const Tensor& z, const std::vector<std::uint16_t>& block_of,
                                      std::int64_t m, double sigma_t, RngStream& rng) {
  check_partition(z, block_of, m);
  if (!(sigma_t > 0.0)) throw std::invalid_argument("sigma_t must be positive");
  NoiseSample s;
  s.z_clean = z;
  s.sigma_t = sigma_t;
  s.z_b = block_mean(z, block_of, m);
  const Tensor centers = block_broadcast(s.z_b, block_of);
  s.z_r = Tensor({z.rows(), 3});
  for (std::int64_t i = 0; i < z.rows(); ++i)
    for (int c = 0; c < 3; ++c) s.z_r.at(i, c) = z.at(i, c) - centers.at(i, c);
  s.eps_block = draw_normal(m, rng);
  Tensor zb_noised({m, 3});
  for (std::int64_t b = 0; b < m; ++b)
    for (int c = 0; c < 3; ++c)
      zb_noised.at(b, c) = s.z_b.at(b, c) + sigma_t * s.eps_block.at(b, c);
  s.z_prime = assemble_blocks(zb_noised, s.z_r, block_of, nullptr);
  return s;
}

NoiseSample perturb_block_complete(const Tensor& z, const std::vector<std::uint16_t>& block_of,
                                   std::int64_t m, double sigma_t, const IgSo3Table& table,
                                   RngStream& rng) {
  // epsilons first, rotations second: a translation draw from an equally
  // seeded stream then shares the epsilons (rotation-free reduction)
  NoiseSample s = perturb_block_translation(z, block_of, m, sigma_t, rng);
  s.sigma_r = table.sigma_r;
  s.omega = Tensor({m, 3});
  for (std::int64_t b = 0; b < m; ++b) {
    const Vec3 w = igso3_sample(table, rng);
    for (int c = 0; c < 3; ++c) s.omega.at(b, c) = w[c];
  }
  Tensor zb_noised({m, 3});
  for (std::int64_t b = 0; b < m; ++b)
    for (int c = 0; c < 3; ++c)
      zb_noised.at(b, c) = s.z_b.at(b, c) + sigma_t * s.eps_block.at(b, c);
  s.z_prime = assemble_blocks(zb_noised, s.z_r, block_of, &s.omega);
  return s;
}

Tensor reconstruct(const NoiseSample& s, const std::vector<std::uint16_t>& block_of) {
  if (s.eps_atom.size() > 0) {
    Tensor p({s.z_clean.rows(), 3});
    for (std::int64_t i = 0; i < s.z_clean.rows(); ++i)
      for (int c = 0; c < 3; ++c)
        p.at(i, c) = s.z_clean.at(i, c) + s.sigma_t * s.eps_atom.at(i, c);
    return center_project(p);
  }
  if (s.eps_block.size() == 0) throw std::invalid_argument("sample carries no noise draws");
  const std::int64_t m = s.eps_block.rows();
  Tensor zb_noised({m, 3});
  for (std::int64_t b = 0; b < m; ++b)
    for (int c = 0; c < 3; ++c)
      zb_noised.at(b, c) = s.z_b.at(b, c) + s.sigma_t * s.eps_block.at(b, c);
  return assemble_blocks(zb_noised, s.z_r, block_of, s.omega.size() > 0 ? &s.omega : nullptr);
}

Tensor block_torque_of(const Tensor& f, const Tensor& z,
                       const std::vector<std::uint16_t>& block_of, std::int64_t m) {
  check_partition(z, block_of, m);
  if (f.rows() != z.rows() || f.cols() != 3)
    throw std::invalid_argument("force/coordinate shape mismatch");
  const Tensor centers = block_broadcast(block_mean(z, block_of, m), block_of);
  Tensor out({m, 3});
  for (std::int64_t i = 0; i < z.rows(); ++i) {
    const std::uint16_t b = block_of[i];
    const double ux = z.at(i, 0) - centers.at(i, 0);
    const double uy = z.at(i, 1) - centers.at(i, 1);
    const double uz = z.at(i, 2) - centers.at(i, 2);
    out.at(b, 0) += uy * f.at(i, 2) - uz * f.at(i, 1);
    out.at(b, 1) += uz * f.at(i, 0) - ux * f.at(i, 2);
    out.at(b, 2) += ux * f.at(i, 1) - uy * f.at(i, 0);
  }
  return out;
}

std::vector<Mat3> inertia_of(const Tensor& z, const std::vector<std::uint16_t>& block_of,
                             std::int64_t m) {
  check_partition(z, block_of, m);
  const Tensor centers = block_broadcast(block_mean(z, block_of, m), block_of);
  std::vector<Mat3> out(m, Mat3{});
  for (std::int64_t i = 0; i < z.rows(); ++i) {
    Mat3& ib = out[block_of[i]];
    const double u[3] = {z.at(i, 0) - centers.at(i, 0), z.at(i, 1) - centers.at(i, 1),
                         z.at(i, 2) - centers.at(i, 2)};
    const double n2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) ib[r * 3 + c] += (r == c ? n2 : 0.0) - u[r] * u[c];
  }
  return out;
}

Tensor angular_acceleration(const Tensor& torque, const std::vector<Mat3>& inertia) {
  if (torque.rows() != static_cast<std::int64_t>(inertia.size()) || torque.cols() != 3)
    throw std::invalid_argument("torque/inertia shape mismatch");
  Tensor out({torque.rows(), 3});
  for (std::int64_t b = 0; b < torque.rows(); ++b) {
    const Mat3 pinv = pinv_sym3(inertia[b]);
    const Vec3 a = mat3_apply(pinv, {torque.at(b, 0), torque.at(b, 1), torque.at(b, 2)});
    for (int c = 0; c < 3; ++c) out.at(b, c) = a[c];
  }
  return out;
}

double loss_atom(const Tensor& f, const NoiseSample& s) {
  if (!(s.sigma_t > 0.0)) throw std::invalid_argument("sample has no translation scale");
  if (f.rows() != s.z_prime.rows() || f.cols() != 3)
    throw std::invalid_argument("force/sample shape mismatch");
  const double inv = 1.0 / (s.sigma_t * s.sigma_t);
  const std::int64_t n = f.rows();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      const double target = (s.z_prime.at(i, c) - s.z_clean.at(i, c)) * inv;
      const double d = f.at(i, c) - target;
      acc += d * d;
    }
  return acc / static_cast<double>(n);
}

double loss_block_T(const Tensor& f, const NoiseSample& s,
                    const std::vector<std::uint16_t>& block_of, std::int64_t m) {
  if (!(s.sigma_t > 0.0)) throw std::invalid_argument("sample has no translation scale");
  const Tensor mu_f = block_mean(f, block_of, m);
  const Tensor mu_zp = block_mean(s.z_prime, block_of, m);
  const double inv = 1.0 / (s.sigma_t * s.sigma_t);
  double acc = 0.0;
  for (std::int64_t b = 0; b < m; ++b)
    for (int c = 0; c < 3; ++c) {
      const double target = (mu_zp.at(b, c) - s.z_b.at(b, c)) * inv;
      const double d = mu_f.at(b, c) - target;
      acc += d * d;
    }
  return acc / static_cast<double>(m);
}

RotationLoss loss_block_R(const Tensor& f, const NoiseSample& s,
                          const std::vector<std::uint16_t>& block_of, std::int64_t m,
                          const IgSo3Table& table) {
  if (s.omega.size() == 0) throw std::invalid_argument("sample carries no rotation draws");
  if (std::abs(table.sigma_r - s.sigma_r) > 1e-12)
    throw std::invalid_argument("score table scale does not match the sample");
  const auto counts = counts_of(block_of, m);
  const Tensor tq = block_torque_of(f, s.z_prime, block_of, m);
  const Tensor alpha = angular_acceleration(tq, inertia_of(s.z_prime, block_of, m));

  RotationLoss out;
  double acc = 0.0;
  for (std::int64_t b = 0; b < m; ++b) {
    if (counts[b] < 2) continue;  // a lone atom defines no rotation
    ++out.eligible;
    const Vec3 sc = igso3_score(table, {s.omega.at(b, 0), s.omega.at(b, 1), s.omega.at(b, 2)});
    for (int c = 0; c < 3; ++c) {
      const double d = alpha.at(b, c) - sc[c];
      acc += d * d;
    }
  }
  if (out.eligible > 0) out.value = acc / static_cast<double>(out.eligible);
  return out;
}

double loss_block_C(const Tensor& f, const NoiseSample& s,
                    const std::vector<std::uint16_t>& block_of, std::int64_t m,
                    const IgSo3Table& table) {
  return loss_block_T(f, s, block_of, m) + loss_block_R(f, s, block_of, m, table).value;
}

Var loss_atom_t(Var f, const NoiseSample& s) {
  if (!(s.sigma_t > 0.0)) throw std::invalid_argument("sample has no translation scale");
  const std::int64_t n = s.z_prime.rows();
  const double inv = 1.0 / (s.sigma_t * s.sigma_t);
  Tensor target({n, 3});
  for (std::int64_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      target.at(i, c) = (s.z_prime.at(i, c) - s.z_clean.at(i, c)) * inv;
  Var d = sub_const(f, target);
  return scale(sum_all(mul(d, d)), 1.0 / static_cast<double>(n));
}

Var loss_block_T_t(Var f, const NoiseSample& s, const std::vector<std::uint16_t>& block_of,
                   std::int64_t m) {
  if (!(s.sigma_t > 0.0)) throw std::invalid_argument("sample has no translation scale");
  const Tensor mu_zp = block_mean(s.z_prime, block_of, m);
  const double inv = 1.0 / (s.sigma_t * s.sigma_t);
  Tensor target({m, 3});
  for (std::int64_t b = 0; b < m; ++b)
    for (int c = 0; c < 3; ++c) target.at(b, c) = (mu_zp.at(b, c) - s.z_b.at(b, c)) * inv;
  Var mu_f = segment_mean(f, ids_of(block_of), m);
  Var d = sub_const(mu_f, target);
  return scale(sum_all(mul(d, d)), 1.0 / static_cast<double>(m));
}

Var loss_block_R_t(Var f, const NoiseSample& s, const std::vector<std::uint16_t>& block_of,
                   std::int64_t m, const IgSo3Table& table) {
  if (s.omega.size() == 0) throw std::invalid_argument("sample carries no rotation draws");
  if (std::abs(table.sigma_r - s.sigma_r) > 1e-12)
    throw std::invalid_argument("score table scale does not match the sample");
  const auto counts = counts_of(block_of, m);
  std::int64_t eligible = 0;
  for (std::int64_t b = 0; b < m; ++b)
    if (counts[b] >= 2) ++eligible;
  if (eligible == 0) return scale(sum_all(f), 0.0);

  const Tensor centers = block_broadcast(block_mean(s.z_prime, block_of, m), block_of);
  Tensor lever({s.z_prime.rows(), 3});
  for (std::int64_t i = 0; i < s.z_prime.rows(); ++i)
    for (int c = 0; c < 3; ++c) lever.at(i, c) = s.z_prime.at(i, c) - centers.at(i, c);

  const auto inert = inertia_of(s.z_prime, block_of, m);
  Tensor pinv({m, 9});
  for (std::int64_t b = 0; b < m; ++b) {
    const Mat3 p = pinv_sym3(inert[b]);
    for (int k = 0; k < 9; ++k) pinv.at(b, k) = p[k];
  }

  Tensor target({m, 3});
  Tensor mask({m, 3});
  for (std::int64_t b = 0; b < m; ++b) {
    if (counts[b] < 2) continue;
    const Vec3 sc = igso3_score(table, {s.omega.at(b, 0), s.omega.at(b, 1), s.omega.at(b, 2)});
    for (int c = 0; c < 3; ++c) {
      target.at(b, c) = sc[c];
      mask.at(b, c) = 1.0;
    }
  }

  Var tq = block_torque(f, lever, ids_of(block_of), m);
  Var alpha = block_matvec3(pinv, tq);
  Var d = mul_const(sub_const(alpha, target), mask);
  return scale(sum_all(mul(d, d)), 1.0 / static_cast<double>(eligible));
}

Var loss_block_C_t(Var f, const NoiseSample& s, const std::vector<std::uint16_t>& block_of,
                   std::int64_t m, const IgSo3Table& table) {
  return add(loss_block_T_t(f, s, block_of, m), loss_block_R_t(f, s, block_of, m, table));
}

}  // namespace ept
