#include "ept/igso3.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include "ept/wire.hpp"

namespace ept {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxTerms = 5000;
constexpr double kTermCut = 1e-12;

/// Character series S(theta) = sum_l (2l+1) e^{-l(l+1)s2} sin((l+1/2)theta)/sin(theta/2).
/// The stopping rule bounds the term by its envelope, not the term itself:
/// sin((l+1/2)theta) has incidental zeros that would truncate too early.
double series_S(double theta, double sigma2) {
  const double sh = std::sin(0.5 * theta);
  double sum = 0.0;
  for (int l = 0; l <= kMaxTerms; ++l) {
    const double w = (2.0 * l + 1.0) * std::exp(-static_cast<double>(l) * (l + 1) * sigma2);
    double term, envelope;
    if (theta == 0.0) {
      term = w * (2.0 * l + 1.0);  // limit of the sine ratio
      envelope = term;
    } else {
      term = w * std::sin((l + 0.5) * theta) / sh;
      envelope = w / std::abs(sh);
    }
    sum += term;
    if (l >= 1 && envelope < kTermCut * std::abs(sum)) return sum;
  }
  throw std::domain_error(
      "igso3 series needs more than 5000 terms; for sharp scales use "
      "igso3_build_small_sigma (Gaussian-angle approximation)");
}

void finish_table(IgSo3Table& t, const std::vector<double>& log_s) {
  const std::size_t n = t.theta.size();
  const double h = t.theta[1] - t.theta[0];

  t.cdf.assign(n, 0.0);
  for (std::size_t i = 1; i < n; ++i)
    t.cdf[i] = t.cdf[i - 1] + 0.5 * (t.f[i - 1] + t.f[i]) * h;

  t.score.assign(n, 0.0);  // score(0) = 0: log S is even in theta
  for (std::size_t i = 1; i + 1 < n; ++i)
    t.score[i] = (log_s[i + 1] - log_s[i - 1]) / (2.0 * h);
  t.score[n - 1] = (log_s[n - 1] - log_s[n - 2]) / h;
}

}  // namespace

IgSo3Table igso3_build(double sigma_r) {
  if (!(sigma_r > 0.0)) throw std::invalid_argument("sigma_r must be positive");
  if (sigma_r < kIgSo3MinSigma)
    throw std::domain_error(
        "sigma_r " + std::to_string(sigma_r) +
        " is below the double-precision floor of the character series (" +
        std::to_string(kIgSo3MinSigma) + "); use igso3_build_small_sigma instead");

  IgSo3Table t;
  t.sigma_r = sigma_r;
  const double sigma2 = sigma_r * sigma_r;
  t.theta.resize(kIgSo3GridSize);
  t.f.resize(kIgSo3GridSize);
  std::vector<double> log_s(kIgSo3GridSize);
  for (int i = 0; i < kIgSo3GridSize; ++i) {
    const double th = kPi * i / (kIgSo3GridSize - 1);
    t.theta[i] = th;
    const double s = series_S(th, sigma2);
    // far tails cancel below roundoff; clamp so the density stays a density
    t.f[i] = (1.0 - std::cos(th)) / kPi * std::max(s, 0.0);
    log_s[i] = std::log(std::max(s, 1e-300));
  }
  finish_table(t, log_s);
  return t;
}

IgSo3Table igso3_build_small_sigma(double sigma_r) {
  if (!(sigma_r > 0.0)) throw std::invalid_argument("sigma_r must be positive");
  IgSo3Table t;
  t.sigma_r = sigma_r;
  const double a = std::sqrt(2.0) * sigma_r;  // Maxwell scale
  const double norm = std::sqrt(2.0 / kPi) / (a * a * a);
  t.theta.resize(kIgSo3GridSize);
  t.f.resize(kIgSo3GridSize);
  std::vector<double> log_s(kIgSo3GridSize);
  for (int i = 0; i < kIgSo3GridSize; ++i) {
    const double th = kPi * i / (kIgSo3GridSize - 1);
    t.theta[i] = th;
    // S = f / haar, finite at 0 where theta^2/(1-cos) -> 2
    const double ratio = th < 1e-6 ? 2.0 / (1.0 - th * th / 12.0)
                                   : th * th / (1.0 - std::cos(th));
    const double s = norm * kPi * ratio * std::exp(-th * th / (2.0 * a * a));
    t.f[i] = (1.0 - std::cos(th)) / kPi * s;
    log_s[i] = std::log(std::max(s, 1e-300));
  }
  finish_table(t, log_s);
  return t;
}

double igso3_sample_angle(const IgSo3Table& t, RngStream& rng) {
  const double u = rng.uniform() * t.cdf.back();
  const auto it = std::lower_bound(t.cdf.begin(), t.cdf.end(), u);
  std::size_t i = static_cast<std::size_t>(it - t.cdf.begin());
  if (i == 0) return t.theta[0];
  const double du = t.cdf[i] - t.cdf[i - 1];
  const double frac = du > 0.0 ? (u - t.cdf[i - 1]) / du : 0.0;
  return t.theta[i - 1] + frac * (t.theta[i] - t.theta[i - 1]);
}

Vec3 igso3_sample(const IgSo3Table& t, RngStream& rng) {
  const double th = igso3_sample_angle(t, rng);
  double axis[3];
  rng.unit3(axis);
  return {th * axis[0], th * axis[1], th * axis[2]};
}

Vec3 igso3_score(const IgSo3Table& t, const Vec3& omega) {
  const double th = std::sqrt(omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]);
  if (th == 0.0) return {0.0, 0.0, 0.0};
  if (th > kPi * (1.0 + 1e-9))
    throw std::domain_error("rotation angle " + std::to_string(th) + " exceeds pi");
  const double h = t.theta[1] - t.theta[0];
  const double pos = std::min(th, kPi) / h;
  std::size_t i = std::min(static_cast<std::size_t>(pos), t.theta.size() - 2);
  const double frac = pos - static_cast<double>(i);
  const double s = t.score[i] + frac * (t.score[i + 1] - t.score[i]);
  const double inv = s / th;
  return {inv * omega[0], inv * omega[1], inv * omega[2]};
}

void igso3_save(const std::string& path, const IgSo3Table& t) {
  std::string s;
  s.append("IGS3", 4);
  wire::put_u32(s, static_cast<std::uint32_t>(t.theta.size()));
  wire::put_f64(s, t.sigma_r);
  for (const auto* arr : {&t.theta, &t.f, &t.cdf, &t.score})
    for (double v : *arr) wire::put_f64(s, v);
  wire::write_file(path, s, "igso3 table");
}

IgSo3Table igso3_load(const std::string& path) {
  const std::string data = wire::read_file(path, "igso3 table");
  wire::Reader r{data, "igso3 table"};
  r.need(4);
  if (std::memcmp(data.data(), "IGS3", 4) != 0)
    throw std::runtime_error("not an igso3 table: bad magic in " + path);
  r.off = 4;
  const std::uint32_t n = r.u32();
  if (n < 2 || n > (1u << 24)) throw std::runtime_error("igso3 table corrupt: bad grid size");
  IgSo3Table t;
  t.sigma_r = r.f64();
  for (auto* arr : {&t.theta, &t.f, &t.cdf, &t.score}) {
    arr->resize(n);
    for (double& v : *arr) v = r.f64();
  }
  return t;
}

}  // namespace ept
