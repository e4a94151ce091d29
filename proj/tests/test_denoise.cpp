#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "ept/denoise.hpp"
#include "ept/igso3.hpp"
#include "ept/rng.hpp"
#include "ept/so3.hpp"
#include "common/gradcheck.hpp"
#include "common/oracles.hpp"

using namespace ept;
using testutil::random_tensor;

namespace {

std::vector<std::uint16_t> partition_of(const std::vector<int>& sizes) {
  std::vector<std::uint16_t> block_of;
  for (std::size_t b = 0; b < sizes.size(); ++b)
    for (int k = 0; k < sizes[b]; ++k) block_of.push_back(static_cast<std::uint16_t>(b));
  return block_of;
}

Tensor rotate_rows(const Tensor& t, const Mat3& q) {
  Tensor out({t.rows(), 3});
  for (std::int64_t i = 0; i < t.rows(); ++i) {
    const Vec3 r = mat3_apply(q, {t.at(i, 0), t.at(i, 1), t.at(i, 2)});
    for (int c = 0; c < 3; ++c) out.at(i, c) = r[c];
  }
  return out;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

double col_mean_max(const Tensor& t) {
  double worst = 0.0;
  for (int c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < t.rows(); ++i) acc += t.at(i, c);
    worst = std::max(worst, std::abs(acc / static_cast<double>(t.rows())));
  }
  return worst;
}

}  // namespace

TEST_CASE("centering projection: fixture, idempotence, invariance") {
  const Tensor z = Tensor::from({2, 3}, {1, 1, 1, 3, 3, 3});
  const Tensor c = center_project(z);
  CHECK(bit_equal(c, Tensor::from({2, 3}, {-1, -1, -1, 1, 1, 1})));

  RngStream rng(mix_seed(23, 0, 0));
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({3 + static_cast<std::int64_t>(rng.index(40)), 3}, rng, 5.0);
    const Tensor c1 = center_project(x);
    CHECK(bit_equal(center_project(c1), c1));
    CHECK(col_mean_max(c1) < 1e-12);
  }

  // a rigid shift of the input does not move the projection
  Tensor shifted = center_project(z);
  for (std::int64_t i = 0; i < shifted.rows(); ++i) {
    shifted.at(i, 0) += 7.5;
    shifted.at(i, 1) -= 2.25;
    shifted.at(i, 2) += 0.125;
  }
  CHECK(max_abs_diff(center_project(shifted), c) < 1e-12);

  CHECK_THROWS_AS(center_project(Tensor()), std::invalid_argument);
}

TEST_CASE("block mean and broadcast are mutual inverses on block data") {
  const std::vector<std::uint16_t> block_of = {0, 0, 1};
  const Tensor z = Tensor::from({3, 3}, {0, 0, 0, 2, 4, 6, 5, 5, 5});
  const Tensor mu = block_mean(z, block_of, 2);
  CHECK(bit_equal(mu, Tensor::from({2, 3}, {1, 2, 3, 5, 5, 5})));
  const Tensor g = block_broadcast(mu, block_of);
  CHECK(g.rows() == 3);
  CHECK(g.at(0, 1) == 2.0);
  CHECK(g.at(1, 2) == 3.0);
  CHECK(g.at(2, 0) == 5.0);

  // mu(g(X)) == X bit-for-bit, including blocks whose size has no exact
  // floating-point reciprocal
  RngStream rng(mix_seed(23, 1, 0));
  const auto part = partition_of({3, 1, 7, 5, 2});
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({5, 3}, rng, 4.0);
    CHECK(bit_equal(block_mean(block_broadcast(x, part), part, 5), x));
  }

  // singleton partition: both maps are the identity
  const std::vector<std::uint16_t> single = {0, 1, 2};
  CHECK(bit_equal(block_mean(z, single, 3), z));
  CHECK(bit_equal(block_broadcast(z, single), z));
}

TEST_CASE("atom kernel: projected Gaussian statistics") {
  RngStream rng(mix_seed(23, 2, 0));
  const Tensor z = random_tensor({5, 3}, rng, 3.0);
  const Tensor cz = center_project(z);
  const double sigma = 0.3;

  RngStream draw(mix_seed(23, 2, 1));
  double acc = 0.0;
  std::int64_t count = 0;
  for (int s = 0; s < 4000; ++s) {
    const NoiseSample ns = perturb_atom(z, sigma, draw);
    CHECK(col_mean_max(ns.z_prime) < 1e-12);
    for (std::int64_t i = 0; i < ns.z_prime.size(); ++i) {
      const double d = ns.z_prime[i] - cz[i];
      acc += d * d;
      ++count;
    }
  }
  const double std_hat = std::sqrt(acc / static_cast<double>(count));
  const double expected = sigma * std::sqrt(1.0 - 1.0 / 5.0);
  CHECK(std_hat == doctest::Approx(expected).epsilon(0.03));

  // stored fields and replay
  RngStream r1(mix_seed(23, 2, 2)), r2(mix_seed(23, 2, 2));
  const NoiseSample a = perturb_atom(z, sigma, r1);
  const NoiseSample b = perturb_atom(z, sigma, r2);
  CHECK(bit_equal(a.z_prime, b.z_prime));
  CHECK(bit_equal(a.eps_atom, b.eps_atom));
  CHECK(bit_equal(a.z_b, z));
  CHECK(a.z_r.size() == z.size());
  for (std::int64_t i = 0; i < a.z_r.size(); ++i) CHECK(a.z_r[i] == 0.0);
  CHECK(bit_equal(reconstruct(a, {}), a.z_prime));

  // vanishing noise recovers the centered input
  RngStream r3(mix_seed(23, 2, 3));
  const NoiseSample tiny = perturb_atom(z, 1e-14, r3);
  CHECK(max_abs_diff(tiny.z_prime, cz) < 1e-12);

  CHECK_THROWS_AS(perturb_atom(z, 0.0, r3), std::invalid_argument);
  CHECK_THROWS_AS(reconstruct(NoiseSample{}, {}), std::invalid_argument);
}

TEST_CASE("translation kernel: rigidity and moments") {
  RngStream rng(mix_seed(23, 3, 0));
  const auto block_of = partition_of({3, 1, 4, 2});
  const std::int64_t m = 4;
  const Tensor z = random_tensor({10, 3}, rng, 3.0);

  RngStream draw(mix_seed(23, 3, 1));
  const NoiseSample s = perturb_block_translation(z, block_of, m, 0.3, draw);
  CHECK(col_mean_max(s.z_prime) < 1e-12);
  CHECK(s.eps_block.rows() == m);
  CHECK(bit_equal(reconstruct(s, block_of), s.z_prime));

  // relative-to-center geometry is untouched
  const Tensor rel_before = [&] {
    Tensor out({10, 3});
    const Tensor g = block_broadcast(block_mean(z, block_of, m), block_of);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = z[i] - g[i];
    return out;
  }();
  const Tensor rel_after = [&] {
    Tensor out({10, 3});
    const Tensor g = block_broadcast(block_mean(s.z_prime, block_of, m), block_of);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = s.z_prime[i] - g[i];
    return out;
  }();
  CHECK(max_abs_diff(rel_before, rel_after) < 1e-12);

  // vanishing noise recovers the centered input
  RngStream r2(mix_seed(23, 3, 2));
  const NoiseSample tiny = perturb_block_translation(z, block_of, m, 1e-14, r2);
  CHECK(max_abs_diff(tiny.z_prime, center_project(z)) < 1e-12);
}

TEST_CASE("singleton partition collapses the block kernels onto the atom kernel") {
  RngStream rng(mix_seed(23, 4, 0));
  const Tensor z = random_tensor({6, 3}, rng, 3.0);
  std::vector<std::uint16_t> single(6);
  for (int i = 0; i < 6; ++i) single[i] = static_cast<std::uint16_t>(i);
  const IgSo3Table table = igso3_build(0.5);

  RngStream ra(mix_seed(23, 4, 1)), rt(mix_seed(23, 4, 1)), rc(mix_seed(23, 4, 1));
  const NoiseSample sa = perturb_atom(z, 0.3, ra);
  const NoiseSample st = perturb_block_translation(z, single, 6, 0.3, rt);
  const NoiseSample sc = perturb_block_complete(z, single, 6, 0.3, table, rc);
  CHECK(bit_equal(sa.z_prime, st.z_prime));
  CHECK(bit_equal(st.z_prime, sc.z_prime));

  const Tensor f = random_tensor({6, 3}, rng, 2.0);
  CHECK(loss_atom(f, sa) == loss_block_T(f, st, single, 6));

  const RotationLoss r = loss_block_R(f, sc, single, 6, table);
  CHECK(r.vacuous());
  CHECK(r.eligible == 0);
  CHECK(r.value == 0.0);
  CHECK(loss_block_C(f, sc, single, 6, table) == loss_block_T(f, sc, single, 6));
}

TEST_CASE("complete kernel: rigid blocks, reduction to translation, replay") {
  RngStream rng(mix_seed(23, 5, 0));
  const auto block_of = partition_of({3, 1, 4, 2});
  const std::int64_t m = 4;
  const Tensor z = random_tensor({10, 3}, rng, 3.0);
  const IgSo3Table table = igso3_build(0.5);

  RngStream draw(mix_seed(23, 5, 1));
  const NoiseSample s = perturb_block_complete(z, block_of, m, 0.3, table, draw);
  CHECK(col_mean_max(s.z_prime) < 1e-12);
  CHECK(s.omega.rows() == m);
  CHECK(s.sigma_r == table.sigma_r);
  CHECK(bit_equal(reconstruct(s, block_of), s.z_prime));

  // every intra-block pairwise distance survives the rigid motion
  for (std::int64_t i = 0; i < 10; ++i)
    for (std::int64_t j = i + 1; j < 10; ++j) {
      if (block_of[i] != block_of[j]) continue;
      auto dist = [](const Tensor& t, std::int64_t a, std::int64_t b) {
        const double dx = t.at(a, 0) - t.at(b, 0);
        const double dy = t.at(a, 1) - t.at(b, 1);
        const double dz = t.at(a, 2) - t.at(b, 2);
        return std::sqrt(dx * dx + dy * dy + dz * dz);
      };
      CHECK(std::abs(dist(s.z_prime, i, j) - dist(z, i, j)) < 1e-12);
    }

  // zeroing the rotations reproduces a translation draw from an equal stream
  RngStream rt(mix_seed(23, 5, 1));
  const NoiseSample st = perturb_block_translation(z, block_of, m, 0.3, rt);
  CHECK(bit_equal(s.eps_block, st.eps_block));
  NoiseSample frozen = s;
  frozen.omega.fill(0.0);
  CHECK(bit_equal(reconstruct(frozen, block_of), st.z_prime));

  // same seed replays the same draw
  RngStream r2(mix_seed(23, 5, 1));
  const NoiseSample again = perturb_block_complete(z, block_of, m, 0.3, table, r2);
  CHECK(bit_equal(again.z_prime, s.z_prime));
  CHECK(bit_equal(again.omega, s.omega));

  // vanishing scales recover the centered input (the sharp-angle table
  // concentrates all mass below the first grid node, so draws are zero)
  const IgSo3Table sharp = igso3_build_small_sigma(1e-7);
  RngStream r3(mix_seed(23, 5, 2));
  const NoiseSample tiny = perturb_block_complete(z, block_of, m, 1e-14, sharp, r3);
  CHECK(max_abs_diff(tiny.z_prime, center_project(z)) < 1e-12);
}

TEST_CASE("torque, inertia, and angular acceleration fixtures") {
  // two atoms on the x axis, opposed tangential forces
  const Tensor z = Tensor::from({2, 3}, {1, 0, 0, -1, 0, 0});
  const Tensor f = Tensor::from({2, 3}, {0, 1, 0, 0, -1, 0});
  const std::vector<std::uint16_t> one = {0, 0};

  const Tensor tq = block_torque_of(f, z, one, 1);
  CHECK(tq.at(0, 0) == 0.0);
  CHECK(tq.at(0, 1) == 0.0);
  CHECK(tq.at(0, 2) == 2.0);

  const std::vector<Mat3> inertia = inertia_of(z, one, 1);
  CHECK(inertia[0] == Mat3{0, 0, 0, 0, 2, 0, 0, 0, 2});

  const Tensor alpha = angular_acceleration(tq, inertia);
  CHECK(alpha.at(0, 0) == 0.0);
  CHECK(alpha.at(0, 1) == 0.0);
  CHECK(alpha.at(0, 2) == 1.0);

  // torque along the degenerate axis is annihilated
  const Tensor null_tq = Tensor::from({1, 3}, {5, 0, 0});
  const Tensor null_alpha = angular_acceleration(null_tq, inertia);
  for (int c = 0; c < 3; ++c) CHECK(null_alpha.at(0, c) == 0.0);

  // a uniform force exerts no torque about the centroid
  RngStream rng(mix_seed(23, 6, 0));
  const Tensor zr = random_tensor({5, 3}, rng, 2.0);
  Tensor fu({5, 3});
  for (std::int64_t i = 0; i < 5; ++i)
    for (int c = 0; c < 3; ++c) fu.at(i, c) = c + 0.5;
  const std::vector<std::uint16_t> all0(5, 0);
  const Tensor tqu = block_torque_of(fu, zr, all0, 1);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(tqu.at(0, c)) < 1e-12);

  // single-atom blocks are inert
  const std::vector<std::uint16_t> singles = {0, 1, 2, 3, 4};
  const Tensor fr = random_tensor({5, 3}, rng, 2.0);
  const Tensor tqs = block_torque_of(fr, zr, singles, 5);
  const auto is = inertia_of(zr, singles, 5);
  const Tensor as = angular_acceleration(tqs, is);
  for (std::int64_t i = 0; i < tqs.size(); ++i) {
    CHECK(tqs[i] == 0.0);
    CHECK(as[i] == 0.0);
  }
  for (const Mat3& mat : is)
    for (double v : mat) CHECK(v == 0.0);
}

TEST_CASE("torque and inertia: loop oracle, invariance, conditioning") {
  RngStream rng(mix_seed(23, 7, 0));
  const auto block_of = partition_of({4, 2, 3, 1});
  const std::int64_t m = 4, n = 10;
  const Tensor z = random_tensor({n, 3}, rng, 3.0);
  const Tensor f = random_tensor({n, 3}, rng, 2.0);

  const Tensor tq = block_torque_of(f, z, block_of, m);
  const auto inertia = inertia_of(z, block_of, m);

  // independent per-block recomputation
  for (std::int64_t b = 0; b < m; ++b) {
    double center[3] = {0, 0, 0};
    int count = 0;
    for (std::int64_t i = 0; i < n; ++i)
      if (block_of[i] == b) {
        for (int c = 0; c < 3; ++c) center[c] += z.at(i, c);
        ++count;
      }
    for (double& v : center) v /= count;
    double want_tq[3] = {0, 0, 0};
    Mat3 want_in{};
    for (std::int64_t i = 0; i < n; ++i) {
      if (block_of[i] != b) continue;
      const double u[3] = {z.at(i, 0) - center[0], z.at(i, 1) - center[1], z.at(i, 2) - center[2]};
      want_tq[0] += u[1] * f.at(i, 2) - u[2] * f.at(i, 1);
      want_tq[1] += u[2] * f.at(i, 0) - u[0] * f.at(i, 2);
      want_tq[2] += u[0] * f.at(i, 1) - u[1] * f.at(i, 0);
      const double n2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) want_in[r * 3 + c] += (r == c ? n2 : 0.0) - u[r] * u[c];
    }
    for (int c = 0; c < 3; ++c) CHECK(tq.at(b, c) == doctest::Approx(want_tq[c]).epsilon(1e-12));
    for (int k = 0; k < 9; ++k)
      CHECK(inertia[b][k] == doctest::Approx(want_in[k]).epsilon(1e-12));
    // PSD
    const Eigen3 e = eigen_sym3(inertia[b]);
    CHECK(e.values[0] > -1e-12);
  }

  // rigid shifts change nothing (centers absorb them)
  Tensor zs = z;
  for (std::int64_t i = 0; i < n; ++i) {
    zs.at(i, 0) += 10.0;
    zs.at(i, 1) -= 5.0;
    zs.at(i, 2) += 3.0;
  }
  CHECK(max_abs_diff(block_torque_of(f, zs, block_of, m), tq) < 1e-12);
  const auto inertia_s = inertia_of(zs, block_of, m);
  for (std::int64_t b = 0; b < m; ++b)
    for (int k = 0; k < 9; ++k) CHECK(std::abs(inertia_s[b][k] - inertia[b][k]) < 1e-12);

  // well-conditioned blocks solve I*alpha = torque to tight residual
  const Tensor alpha = angular_acceleration(tq, inertia);
  for (std::int64_t b = 0; b < 3; ++b) {  // blocks with >= 2 noncollinear atoms
    const Eigen3 e = eigen_sym3(inertia[b]);
    if (e.values[0] < 1e-6) continue;  // two-atom blocks keep a null axis
    const Vec3 back = mat3_apply(inertia[b], {alpha.at(b, 0), alpha.at(b, 1), alpha.at(b, 2)});
    for (int c = 0; c < 3; ++c) CHECK(std::abs(back[c] - tq.at(b, c)) < 1e-10);
  }
}

TEST_CASE("losses match scalar-loop oracles and their taped twins") {
  RngStream rng(mix_seed(23, 8, 0));
  const auto block_of = partition_of({3, 1, 4, 2});
  const std::int64_t m = 4, n = 10;
  const Tensor z = random_tensor({n, 3}, rng, 3.0);
  const IgSo3Table table = igso3_build(0.5);
  RngStream draw(mix_seed(23, 8, 1));
  const NoiseSample s = perturb_block_complete(z, block_of, m, 0.3, table, draw);
  const Tensor f = random_tensor({n, 3}, rng, 2.0);
  const double inv = 1.0 / (0.3 * 0.3);

  // atom loss oracle
  {
    double want = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) {
        const double d = f.at(i, c) - (s.z_prime.at(i, c) - z.at(i, c)) * inv;
        want += d * d;
      }
    want /= static_cast<double>(n);
    CHECK(loss_atom(f, s) == doctest::Approx(want).epsilon(1e-12));
  }

  // block translation loss oracle
  {
    double want = 0.0;
    for (std::int64_t b = 0; b < m; ++b) {
      double mf[3] = {0, 0, 0}, mz[3] = {0, 0, 0};
      int count = 0;
      for (std::int64_t i = 0; i < n; ++i)
        if (block_of[i] == b) {
          for (int c = 0; c < 3; ++c) {
            mf[c] += f.at(i, c);
            mz[c] += s.z_prime.at(i, c);
          }
          ++count;
        }
      for (int c = 0; c < 3; ++c) {
        const double d = mf[c] / count - (mz[c] / count - s.z_b.at(b, c)) * inv;
        want += d * d;
      }
    }
    want /= static_cast<double>(m);
    CHECK(loss_block_T(f, s, block_of, m) == doctest::Approx(want).epsilon(1e-12));
  }

  // rotation loss oracle: torque -> pseudo-inverse -> score residual
  {
    double want = 0.0;
    std::int64_t eligible = 0;
    for (std::int64_t b = 0; b < m; ++b) {
      double center[3] = {0, 0, 0};
      int count = 0;
      for (std::int64_t i = 0; i < n; ++i)
        if (block_of[i] == b) {
          for (int c = 0; c < 3; ++c) center[c] += s.z_prime.at(i, c);
          ++count;
        }
      if (count < 2) continue;
      ++eligible;
      for (double& v : center) v /= count;
      double tq[3] = {0, 0, 0};
      Mat3 inertia{};
      for (std::int64_t i = 0; i < n; ++i) {
        if (block_of[i] != b) continue;
        const double u[3] = {s.z_prime.at(i, 0) - center[0], s.z_prime.at(i, 1) - center[1],
                             s.z_prime.at(i, 2) - center[2]};
        tq[0] += u[1] * f.at(i, 2) - u[2] * f.at(i, 1);
        tq[1] += u[2] * f.at(i, 0) - u[0] * f.at(i, 2);
        tq[2] += u[0] * f.at(i, 1) - u[1] * f.at(i, 0);
        const double n2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) inertia[r * 3 + c] += (r == c ? n2 : 0.0) - u[r] * u[c];
      }
      const Vec3 alpha = mat3_apply(pinv_sym3(inertia), {tq[0], tq[1], tq[2]});
      const Vec3 sc = igso3_score(table, {s.omega.at(b, 0), s.omega.at(b, 1), s.omega.at(b, 2)});
      for (int c = 0; c < 3; ++c) want += (alpha[c] - sc[c]) * (alpha[c] - sc[c]);
    }
    want /= static_cast<double>(eligible);
    const RotationLoss r = loss_block_R(f, s, block_of, m, table);
    CHECK(r.eligible == eligible);
    CHECK(r.value == doctest::Approx(want).epsilon(1e-12));
  }

  // plug-in values at F' = 0 and at the exact target
  {
    const Tensor zero({n, 3});
    double want = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) {
        const double d = (s.z_prime.at(i, c) - z.at(i, c)) * inv;
        want += d * d;
      }
    CHECK(loss_atom(zero, s) == doctest::Approx(want / n).epsilon(1e-12));

    Tensor exact({n, 3});
    for (std::int64_t i = 0; i < exact.size(); ++i) exact[i] = (s.z_prime[i] - z[i]) * inv;
    // fused multiply-add contraction leaves one rounding of the target
    // product, so "zero" means ulp^2 here
    CHECK(loss_atom(exact, s) <= 1e-28);
  }

  // decomposition and taped equality
  const RotationLoss r = loss_block_R(f, s, block_of, m, table);
  CHECK(loss_block_C(f, s, block_of, m, table) ==
        doctest::Approx(loss_block_T(f, s, block_of, m) + r.value).epsilon(1e-12));

  {
    Tape tape;
    Var fv = tape.leaf(f);
    CHECK(tape.val(loss_atom_t(fv, s)).item() ==
          doctest::Approx(loss_atom(f, s)).epsilon(1e-12));
    CHECK(tape.val(loss_block_T_t(fv, s, block_of, m)).item() ==
          doctest::Approx(loss_block_T(f, s, block_of, m)).epsilon(1e-12));
    CHECK(tape.val(loss_block_R_t(fv, s, block_of, m, table)).item() ==
          doctest::Approx(r.value).epsilon(1e-12));
    CHECK(tape.val(loss_block_C_t(fv, s, block_of, m, table)).item() ==
          doctest::Approx(loss_block_C(f, s, block_of, m, table)).epsilon(1e-12));
  }

  // shape and state guards
  CHECK_THROWS_WITH_AS(loss_atom(Tensor({3, 3}), s), doctest::Contains("shape"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(loss_block_R(f, perturb_atom(z, 0.3, rng), block_of, m, table),
                       doctest::Contains("rotation"), std::invalid_argument);
  const IgSo3Table other = igso3_build(0.3);
  CHECK_THROWS_WITH_AS(loss_block_R(f, s, block_of, m, other), doctest::Contains("scale"),
                       std::invalid_argument);
  NoiseSample unscaled = s;
  unscaled.sigma_t = 0.0;
  CHECK_THROWS_WITH_AS(loss_atom(f, unscaled), doctest::Contains("scale"),
                       std::invalid_argument);
}

TEST_CASE("losses are invariant under a global rotation of the frame") {
  RngStream rng(mix_seed(23, 9, 0));
  const auto block_of = partition_of({3, 2, 4});
  const std::int64_t m = 3, n = 9;
  const Tensor z = random_tensor({n, 3}, rng, 3.0);
  const IgSo3Table table = igso3_build(0.5);
  RngStream draw(mix_seed(23, 9, 1));
  const NoiseSample s = perturb_block_complete(z, block_of, m, 0.3, table, draw);
  const Tensor f = random_tensor({n, 3}, rng, 2.0);

  const Mat3 q = rotation_matrix({0.4, -1.1, 0.7});
  NoiseSample rs = s;
  rs.z_clean = rotate_rows(s.z_clean, q);
  rs.z_prime = rotate_rows(s.z_prime, q);
  rs.z_b = rotate_rows(s.z_b, q);
  rs.z_r = rotate_rows(s.z_r, q);
  rs.omega = rotate_rows(s.omega, q);  // the axis-angle draw lives in the frame too
  const Tensor rf = rotate_rows(f, q);

  auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({std::abs(a), std::abs(b), 1.0});
  };
  CHECK(close(loss_atom(rf, rs), loss_atom(f, s)));
  CHECK(close(loss_block_T(rf, rs, block_of, m), loss_block_T(f, s, block_of, m)));
  CHECK(close(loss_block_R(rf, rs, block_of, m, table).value,
              loss_block_R(f, s, block_of, m, table).value));
  CHECK(close(loss_block_C(rf, rs, block_of, m, table),
              loss_block_C(f, s, block_of, m, table)));
}

TEST_CASE("taped losses backpropagate true derivatives") {
  RngStream rng(mix_seed(23, 10, 0));
  const auto block_of = partition_of({3, 1, 2});
  const std::int64_t m = 3, n = 6;
  const Tensor z = random_tensor({n, 3}, rng, 2.0);
  const IgSo3Table table = igso3_build(0.5);
  RngStream draw(mix_seed(23, 10, 1));
  const NoiseSample s = perturb_block_complete(z, block_of, m, 0.3, table, draw);
  const Tensor f0 = random_tensor({n, 3}, rng, 1.0);

  testutil::check_gradients(
      [&](Tape& t, const std::vector<Var>& v) { return loss_atom_t(v[0], s); }, {f0});
  testutil::check_gradients(
      [&](Tape& t, const std::vector<Var>& v) { return loss_block_T_t(v[0], s, block_of, m); },
      {f0});
  testutil::check_gradients(
      [&](Tape& t, const std::vector<Var>& v) {
        return loss_block_R_t(v[0], s, block_of, m, table);
      },
      {f0});
  testutil::check_gradients(
      [&](Tape& t, const std::vector<Var>& v) {
        return loss_block_C_t(v[0], s, block_of, m, table);
      },
      {f0});
}
