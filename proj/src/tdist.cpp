#include "ssmvae/tdist.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ssmvae/errors.hpp"

namespace ssmvae {

void TParams::validate() const {
  if (scale_diag.size() != loc.size()) {
    throw ContractViolation("TParams: loc has " + std::to_string(loc.size()) +
                            " entries but scale_diag has " + std::to_string(scale_diag.size()));
  }
  if (!(scale_diag.array() > 0.0).all() || !scale_diag.allFinite()) {
    throw ContractViolation("TParams: scale_diag must be finite and strictly positive");
  }
  if (!(dof > 0.0)) throw ContractViolation("TParams: dof must be positive");
}

TParams TParams::standard(int dim, double dof) {
  return TParams{Vector::Zero(dim), Vector::Ones(dim), dof};
}

double t_log_normalizer(double dof, int dim) {
  const double d = static_cast<double>(dim);
  return std::lgamma(0.5 * (dof + d)) - std::lgamma(0.5 * dof) -
         0.5 * d * std::log(dof * std::numbers::pi);
}

double t_logpdf(const TParams& p, const Vector& z) {
  p.validate();
  if (z.size() != p.loc.size()) {
    throw ContractViolation("t_logpdf: z has dimension " + std::to_string(z.size()) +
                            ", expected " + std::to_string(p.loc.size()));
  }
  const double d = static_cast<double>(p.dim());
  const double maha = ((z - p.loc).array().square() / p.scale_diag.array()).sum();
  const double half_log_det = 0.5 * p.scale_diag.array().log().sum();
  if (p.is_gaussian()) {
    return -0.5 * d * std::log(2.0 * std::numbers::pi) - half_log_det - 0.5 * maha;
  }
  return t_log_normalizer(p.dof, p.dim()) - half_log_det -
         0.5 * (p.dof + d) * std::log1p(maha / p.dof);
}

Vector t_sample_reparam(const TParams& p_enc, double nu_base, int aug_dim,
                        const ReparamNoise& noise) {
  p_enc.validate();
  if (!(noise.delta > 0.0)) {
    throw ContractViolation("t_sample_reparam: chi-square draw delta must be positive");
  }
  if (noise.eps.size() != p_enc.loc.size()) {
    throw ContractViolation("t_sample_reparam: eps dimension mismatch");
  }
  if (aug_dim < 0 || !(nu_base > 0.0)) {
    throw ContractViolation("t_sample_reparam: need nu_base > 0 and aug_dim >= 0");
  }
  const double radial = std::sqrt(nu_base / noise.delta);
  return p_enc.loc + radial * (p_enc.scale_diag.array().sqrt() * noise.eps.array()).matrix();
}

ReparamNoise draw_reparam_noise(Rng& rng, int dim, double chi_dof) {
  ReparamNoise out{Vector(dim), 0.0};
  for (int i = 0; i < dim; ++i) out.eps(i) = rng.normal();
  out.delta = rng.chi_square(chi_dof);
  return out;
}

Moments t_moments(const TParams& p) {
  p.validate();
  if (p.is_gaussian()) return {p.loc, p.scale_diag};
  if (!(p.dof > 2.0)) {
    throw UndefinedMoment("t_moments: covariance undefined for dof = " + std::to_string(p.dof));
  }
  return {p.loc, (p.dof / (p.dof - 2.0)) * p.scale_diag};
}

namespace {

Vector sample_from(const TParams& q, Rng& rng) {
  Vector eps(q.dim());
  for (int i = 0; i < q.dim(); ++i) eps(i) = rng.normal();
  double radial = 1.0;
  if (!q.is_gaussian()) radial = std::sqrt(q.dof / rng.chi_square(q.dof));
  return q.loc + radial * (q.scale_diag.array().sqrt() * eps.array()).matrix();
}

// Per-sample terms a = q^g, b = p^g and (importance weight) c = p^{1+g} / q.
struct SampleTerms {
  std::vector<double> a, b, c;
  double mean_a = 0.0, mean_b = 0.0, mean_c = 0.0;
};

struct Evaluated {
  double value;
  std::vector<double> influence;
};

void check_gamma(double gamma) {
  if (!(gamma > -1.0 && gamma < 0.0)) {
    throw UnsupportedRegime("gamma-power divergence estimator requires gamma in (-1, 0), got " +
                            std::to_string(gamma));
  }
}

SampleTerms collect(const TParams& q, const LogDensity& log_p, double gamma, std::int64_t n,
                    Rng& rng, bool want_c) {
  SampleTerms t;
  t.a.resize(static_cast<std::size_t>(n));
  t.b.resize(static_cast<std::size_t>(n));
  if (want_c) t.c.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const Vector z = sample_from(q, rng);
    const double lq = t_logpdf(q, z);
    const double lp = log_p(z);
    const auto k = static_cast<std::size_t>(i);
    t.a[k] = std::exp(gamma * lq);
    t.b[k] = std::exp(gamma * lp);
    t.mean_a += t.a[k];
    t.mean_b += t.b[k];
    if (want_c) {
      t.c[k] = std::exp((1.0 + gamma) * lp - lq);
      t.mean_c += t.c[k];
    }
  }
  const double dn = static_cast<double>(n);
  t.mean_a /= dn;
  t.mean_b /= dn;
  t.mean_c /= dn;
  return t;
}

Evaluated evaluate(const SampleTerms& t, double gamma, std::optional<double> log_p_norm) {
  const double g1 = 1.0 + gamma;
  const double A = t.mean_a;
  const double B = t.mean_b;
  const double lA = std::log(A);
  const double nq = std::exp(lA / g1);
  Evaluated out;
  out.influence.resize(t.a.size());
  if (log_p_norm) {
    const double np_neg_g = std::exp(-gamma * *log_p_norm);
    out.value = (nq - B * np_neg_g) / gamma;
    for (std::size_t i = 0; i < t.a.size(); ++i) {
      out.influence[i] = (nq * (t.a[i] - A) / (g1 * A) - (t.b[i] - B) * np_neg_g) / gamma;
    }
  } else {
    const double C = t.mean_c;
    const double lC = std::log(C);
    const double np_neg_g = std::exp(-gamma * lC / g1);
    // Arranged so that q == p with shared draws gives exactly zero.
    out.value = np_neg_g / gamma * ((C - B) + C * std::expm1((lA - lC) / g1));
    for (std::size_t i = 0; i < t.a.size(); ++i) {
      out.influence[i] = (nq * (t.a[i] - A) / (g1 * A) - (t.b[i] - B) * np_neg_g +
                          B * gamma * np_neg_g * (t.c[i] - C) / (g1 * C)) /
                         gamma;
    }
  }
  return out;
}

double stderr_of(const std::vector<double>& influence) {
  const double n = static_cast<double>(influence.size());
  if (influence.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : influence) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : influence) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0) / n);
}

}  // namespace

GammaDivergenceEstimate gamma_divergence_mc(const TParams& q, const LogDensity& log_p,
                                            double gamma, std::int64_t n, std::uint64_t seed,
                                            std::optional<double> log_p_norm) {
  check_gamma(gamma);
  q.validate();
  if (n < 1) throw ContractViolation("gamma_divergence_mc: need at least one sample");
  Rng rng(seed);
  const SampleTerms terms = collect(q, log_p, gamma, n, rng, !log_p_norm.has_value());
  const Evaluated e = evaluate(terms, gamma, log_p_norm);
  return {e.value, stderr_of(e.influence), n};
}

GammaDivergenceEstimate gamma_divergence_mc_diff(const TParams& q1, const LogDensity& log_p1,
                                                 const TParams& q2, const LogDensity& log_p2,
                                                 double gamma, std::int64_t n, std::uint64_t seed,
                                                 double log_p_norm) {
  check_gamma(gamma);
  q1.validate();
  q2.validate();
  if (q1.dim() != q2.dim() || q1.dof != q2.dof) {
    throw ContractViolation("gamma_divergence_mc_diff: q1 and q2 must share dimension and dof");
  }
  if (n < 2) throw ContractViolation("gamma_divergence_mc_diff: need at least two samples");
  Rng rng1(seed);
  Rng rng2(seed);
  const Evaluated e1 = evaluate(collect(q1, log_p1, gamma, n, rng1, false), gamma, log_p_norm);
  const Evaluated e2 = evaluate(collect(q2, log_p2, gamma, n, rng2, false), gamma, log_p_norm);
  std::vector<double> diff(e1.influence.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = e1.influence[i] - e2.influence[i];
  return {e1.value - e2.value, stderr_of(diff), n};
}

}  // namespace ssmvae
