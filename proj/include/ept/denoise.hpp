#pragma once

#include <cstdint>
#include <vector>

#include "ept/autodiff.hpp"
#include "ept/igso3.hpp"
#include "ept/rng.hpp"
#include "ept/tensor.hpp"

namespace ept {

/// One perturbation draw. Coordinates are (N x 3) rows; per-block arrays are
/// (M x 3). Kernels draw entity-major (all epsilons, then all rotations), so
/// a translation draw and a complete draw from equal streams share epsilons.
struct NoiseSample {
  Tensor z_clean;    // input coordinates as passed
  Tensor z_prime;    // centered perturbed coordinates
  Tensor eps_atom;   // atom kernel only
  Tensor eps_block;  // block kernels only
  Tensor omega;      // complete kernel only; axis-angle per block
  double sigma_t = 0.0;
  double sigma_r = 0.0;
  Tensor z_b;  // clean block centers (the atoms themselves for the atom kernel)
  Tensor z_r;  // clean block-relative coordinates
};

/// Subtract the column mean: projection onto the mean-centered subspace.
/// Idempotent.
Tensor center_project(const Tensor& z);

Tensor block_mean(const Tensor& z, const std::vector<std::uint16_t>& block_of, std::int64_t m);
Tensor block_broadcast(const Tensor& zb, const std::vector<std::uint16_t>& block_of);

/// Z' = C(Z + sigma_t * eps), independent per coordinate.
NoiseSample perturb_atom(const Tensor& z, double sigma_t, RngStream& rng);

/// Z' = C(Z + sigma_t * g(eps_b)): one shared offset per block.
NoiseSample perturb_block_translation(const Tensor& z, const std::vector<std::uint16_t>& block_of,
                                      std::int64_t m, double sigma_t, RngStream& rng);

/// Z' = C(g(Z_b + sigma_t * eps_b) + Q_b Z_r): block translation plus a
/// rigid rotation of each block about its center. Single-atom blocks rotate
/// trivially (their relative coordinate is zero).
NoiseSample perturb_block_complete(const Tensor& z, const std::vector<std::uint16_t>& block_of,
                                   std::int64_t m, double sigma_t, const IgSo3Table& table,
                                   RngStream& rng);

/// Rebuild z_prime from the stored draws; bit-identical to the stored field.
Tensor reconstruct(const NoiseSample& s, const std::vector<std::uint16_t>& block_of);

/// Torque about each block's center: sum of (z_j - center) x f_j.
Tensor block_torque_of(const Tensor& f, const Tensor& z,
                       const std::vector<std::uint16_t>& block_of, std::int64_t m);

/// Inertia matrix per block: sum of |u|^2 Id - u u^T. Symmetric PSD.
std::vector<Mat3> inertia_of(const Tensor& z, const std::vector<std::uint16_t>& block_of,
                             std::int64_t m);

/// alpha_b = pinv(I_b) * torque_b; null directions contribute nothing.
Tensor angular_acceleration(const Tensor& torque, const std::vector<Mat3>& inertia);

// Denoising losses: per-entity means of squared 3-vector residuals. The
// translation target is (perturbed - clean)/sigma_t^2 at the respective
// granularity; the rotation target is the angle-density score at omega_b.
double loss_atom(const Tensor& f, const NoiseSample& s);
double loss_block_T(const Tensor& f, const NoiseSample& s,
                    const std::vector<std::uint16_t>& block_of, std::int64_t m);

struct RotationLoss {
  double value = 0.0;
  std::int64_t eligible = 0;  // blocks with at least two atoms
  bool vacuous() const { return eligible == 0; }
};
RotationLoss loss_block_R(const Tensor& f, const NoiseSample& s,
                          const std::vector<std::uint16_t>& block_of, std::int64_t m,
                          const IgSo3Table& table);
double loss_block_C(const Tensor& f, const NoiseSample& s,
                    const std::vector<std::uint16_t>& block_of, std::int64_t m,
                    const IgSo3Table& table);

// Taped variants; f is an (N x 3) tape node, all targets enter as constants.
Var loss_atom_t(Var f, const NoiseSample& s);
Var loss_block_T_t(Var f, const NoiseSample& s, const std::vector<std::uint16_t>& block_of,
                   std::int64_t m);
Var loss_block_R_t(Var f, const NoiseSample& s, const std::vector<std::uint16_t>& block_of,
                   std::int64_t m, const IgSo3Table& table);
Var loss_block_C_t(Var f, const NoiseSample& s, const std::vector<std::uint16_t>& block_of,
                   std::int64_t m, const IgSo3Table& table);

}  // namespace ept
