#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ept/rng.hpp"
#include "ept/so3.hpp"

namespace ept {

/// Tabulated angle density of the isotropic Gaussian on SO(3) at scale
/// sigma_r: f(theta) = (1-cos theta)/pi * S(theta) with S the heat-kernel
/// character series. Immutable after construction; share freely.
struct IgSo3Table {
  double sigma_r = 0.0;
  std::vector<double> theta;      // uniform grid on [0, pi]
  std::vector<double> f;          // density in theta, f(0) = 0, nonnegative
  std::vector<double> cdf;        // trapezoid cumulative of f, cdf[0] = 0
  std::vector<double> score;      // d/dtheta log(f / haar) on the grid
};

inline constexpr int kIgSo3GridSize = 2048;
/// Below this scale the character series cancels catastrophically in doubles.
inline constexpr double kIgSo3MinSigma = 0.02;

/// Truncated-series construction. Terms stop once their envelope falls under
/// 1e-12 of the partial sum; needing more than 5000 terms (or sigma_r under
/// kIgSo3MinSigma) raises a precision error pointing at
/// igso3_build_small_sigma.
IgSo3Table igso3_build(double sigma_r);

/// Small-scale fallback: Maxwell angle density with scale sqrt(2)*sigma_r,
/// the sharp-concentration limit of the series. Same table layout and score
/// pipeline; intended for sigma_r < kIgSo3MinSigma.
IgSo3Table igso3_build_small_sigma(double sigma_r);

/// Angle by inverse-CDF interpolation, axis uniform on the sphere.
double igso3_sample_angle(const IgSo3Table& t, RngStream& rng);
Vec3 igso3_sample(const IgSo3Table& t, RngStream& rng);

/// Score vector s(|w|) * w/|w|; zero at w = 0, |w| > pi is a domain error.
Vec3 igso3_score(const IgSo3Table& t, const Vec3& omega);

/// Binary cache, magic "IGS3". Round-trips bit-exactly.
void igso3_save(const std::string& path, const IgSo3Table& t);
IgSo3Table igso3_load(const std::string& path);

}  // namespace ept
