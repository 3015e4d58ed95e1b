// Copyright 2026 The cddpm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cddpm/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cddpm/simd.hpp"

namespace cddpm {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Per-component constants reused across many samples.
struct Scorer {
  const GMMParams& p;
  std::vector<double> inv_var;
  std::vector<double> offset;

  explicit Scorer(const GMMParams& params) : p(params), inv_var(params.sigma2.size()), offset(params.K()) {
    for (std::size_t i = 0; i < inv_var.size(); ++i) inv_var[i] = 1.0 / p.sigma2[i];
    for (int c = 0; c < p.K(); ++c) {
      double logdet = 0.0;
      for (int j = 0; j < p.J; ++j) logdet += std::log(p.var(c)[j]);
      offset[c] = std::log(p.pi[c]) - 0.5 * (p.J * kLog2Pi + logdet);
    }
  }

  void scores(const double* z, double* out) const {
    const auto& kt = simd::active();
    for (int c = 0; c < p.K(); ++c) {
      out[c] = offset[c] - 0.5 * kt.wsqdist(p.J, z, p.mean(c), inv_var.data() + static_cast<std::size_t>(c) * p.J);
    }
  }
};

void check_latents(const Tensor& Z, int J) {
  if (Z.shape.size() != 2) throw ShapeError("latent matrix must be [N, J], got " + shape_str(Z.shape));
  if (J >= 0 && Z.dim(1) != J) throw ShapeError("latent dimension mismatch: " + shape_str(Z.shape));
  for (std::size_t i = 0; i < Z.size(); ++i) {
    if (!std::isfinite(Z[i])) {
      throw std::invalid_argument("non-finite latent value in row " + std::to_string(i / Z.dim(1)));
    }
  }
}

// E-step: fills resp [N, K], returns the total log-likelihood.
double expectation(const Tensor& Z, const GMMParams& p, std::vector<double>& resp) {
  const int n = Z.dim(0), k = p.K();
  resp.assign(static_cast<std::size_t>(n) * k, 0.0);
  Scorer scorer(p);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double* r = resp.data() + static_cast<std::size_t>(i) * k;
    scorer.scores(Z.ptr() + static_cast<std::size_t>(i) * p.J, r);
    const double lse = log_sum_exp({r, static_cast<std::size_t>(k)});
    total += lse;
    for (int c = 0; c < k; ++c) r[c] = std::exp(r[c] - lse);
  }
  return total;
}

void maximization(const Tensor& Z, const std::vector<double>& resp, GMMParams& p) {
  const int n = Z.dim(0), k = p.K(), J = p.J;
  for (int c = 0; c < k; ++c) {
    double nk = 0.0;
    for (int i = 0; i < n; ++i) nk += resp[static_cast<std::size_t>(i) * k + c];
    if (nk <= 0.0) {
      p.pi[c] = 0.0;
      continue;
    }
    std::vector<double> mean(J, 0.0);
    for (int i = 0; i < n; ++i)
      simd::axpy(J, resp[static_cast<std::size_t>(i) * k + c], Z.ptr() + static_cast<std::size_t>(i) * J, mean.data());
    for (double& m : mean) m /= nk;
    std::vector<double> var(J, 0.0);
    for (int i = 0; i < n; ++i) {
      const double r = resp[static_cast<std::size_t>(i) * k + c];
      const double* z = Z.ptr() + static_cast<std::size_t>(i) * J;
      for (int j = 0; j < J; ++j) var[j] += r * (z[j] - mean[j]) * (z[j] - mean[j]);
    }
    for (int j = 0; j < J; ++j) {
      p.mu[static_cast<std::size_t>(c) * J + j] = mean[j];
      p.sigma2[static_cast<std::size_t>(c) * J + j] = std::max(var[j] / nk, kVarianceFloor);
    }
    p.pi[c] = nk / n;
  }
  double s = 0.0;
  for (double v : p.pi) s += v;
  for (double& v : p.pi) v /= s;
}

}  // namespace

void GMMParams::validate() const {
  const std::size_t k = pi.size();
  if (k == 0 || J < 1) throw std::invalid_argument("GMM needs K >= 1 and J >= 1");
  if (mu.size() != k * J || sigma2.size() != k * J) throw std::invalid_argument("GMM parameter shapes disagree");
  double s = 0.0;
  for (double v : pi) {
    if (!(v >= 0.0)) throw std::invalid_argument("GMM mixing weight negative or NaN");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("GMM mixing weights do not sum to 1");
  for (double v : sigma2)
    if (!(v >= kVarianceFloor)) throw std::invalid_argument("GMM variance below floor");
  for (double v : mu)
    if (!std::isfinite(v)) throw std::invalid_argument("GMM mean not finite");
}

std::vector<double> component_log_scores(std::span<const double> z, const GMMParams& params) {
  if (z.size() != static_cast<std::size_t>(params.J)) {
    throw ShapeError("latent has length " + std::to_string(z.size()) + ", GMM expects " + std::to_string(params.J));
  }
  for (double v : z)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite latent vector");
  std::vector<double> out(params.K());
  Scorer(params).scores(z.data(), out.data());
  return out;
}

std::vector<double> responsibilities(std::span<const double> z, const GMMParams& params) {
  std::vector<double> w = component_log_scores(z, params);
  const double lse = log_sum_exp(w);
  for (double& v : w) v = std::exp(v - lse);
  return w;
}

int assign(std::span<const double> z, const GMMParams& params) {
  const std::vector<double> s = component_log_scores(z, params);
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

std::vector<int> assign_all(const Tensor& Z, const GMMParams& params) {
  check_latents(Z, params.J);
  std::vector<int> out(Z.dim(0));
  for (int i = 0; i < Z.dim(0); ++i)
    out[i] = assign({Z.ptr() + static_cast<std::size_t>(i) * params.J, static_cast<std::size_t>(params.J)}, params);
  return out;
}

std::vector<double> sample_component(const GMMParams& params, int c, Rng& rng) {
  if (c < 0 || c >= params.K()) throw std::out_of_range("cluster index " + std::to_string(c) + " out of range");
  std::vector<double> z(params.J);
  for (int j = 0; j < params.J; ++j) z[j] = params.mean(c)[j] + std::sqrt(params.var(c)[j]) * rng.normal();
  return z;
}

PriorSample sample_prior(const GMMParams& params, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int c = params.K() - 1;
  for (int k = 0; k < params.K(); ++k) {
    acc += params.pi[k];
    if (u < acc) {
      c = k;
      break;
    }
  }
  // Never land on a zero-weight trailing component through rounding.
  while (params.pi[c] <= 0.0 && c > 0) --c;
  return {c, sample_component(params, c, rng)};
}

double log_likelihood(const Tensor& Z, const GMMParams& params) {
  check_latents(Z, params.J);
  std::vector<double> resp;
  return expectation(Z, params, resp);
}

GMMParams kmeanspp_init(const Tensor& Z, int K, Rng& rng) {
  check_latents(Z, -1);
  const int n = Z.dim(0), J = Z.dim(1);
  if (K < 1) throw std::invalid_argument("GMM needs K >= 1");
  if (n < K)
    throw std::invalid_argument("GMM needs at least K=" + std::to_string(K) + " samples, got " + std::to_string(n));
  const auto& kt = simd::active();
  auto row = [&](int i) { return Z.ptr() + static_cast<std::size_t>(i) * J; };

  std::vector<int> seeds{rng.uniform_int(0, n - 1)};
  std::vector<double> d2(n);
  for (int i = 0; i < n; ++i) d2[i] = kt.sqdist(J, row(i), row(seeds[0]));
  while (static_cast<int>(seeds.size()) < K) {
    double total = 0.0;
    for (double v : d2) total += v;
    int pick = n - 1;
    if (total <= 0.0) {
      pick = rng.uniform_int(0, n - 1);
    } else {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    seeds.push_back(pick);
    for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], kt.sqdist(J, row(i), row(pick)));
  }

  // Hard assignment to the nearest seed, ties toward the lowest index.
  std::vector<double> resp(static_cast<std::size_t>(n) * K, 0.0);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double bd = kt.sqdist(J, row(i), row(seeds[0]));
    for (int c = 1; c < K; ++c) {
      const double d = kt.sqdist(J, row(i), row(seeds[c]));
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    resp[static_cast<std::size_t>(i) * K + best] = 1.0;
  }

  GMMParams p;
  p.J = J;
  p.pi.assign(K, 0.0);
  p.mu.resize(static_cast<std::size_t>(K) * J);
  p.sigma2.assign(static_cast<std::size_t>(K) * J, kVarianceFloor);
  // Empty clusters keep their seed as mean and the global variance.
  std::vector<double> gmean(J, 0.0), gvar(J, 0.0);
  for (int i = 0; i < n; ++i) simd::axpy(J, 1.0 / n, row(i), gmean.data());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < J; ++j) gvar[j] += (row(i)[j] - gmean[j]) * (row(i)[j] - gmean[j]) / n;
  for (int c = 0; c < K; ++c)
    for (int j = 0; j < J; ++j) {
      p.mu[static_cast<std::size_t>(c) * J + j] = row(seeds[c])[j];
      p.sigma2[static_cast<std::size_t>(c) * J + j] = std::max(gvar[j], kVarianceFloor);
    }
  maximization(Z, resp, p);
  return p;
}

GmmFitResult fit_gmm_from(const Tensor& Z, GMMParams init, const GmmFitOptions& options) {
  check_latents(Z, init.J);
  if (Z.dim(0) < init.K()) {
    throw std::invalid_argument("GMM needs at least K=" + std::to_string(init.K()) + " samples, got " +
                                std::to_string(Z.dim(0)));
  }
  init.validate();
  GmmFitResult result;
  result.params = std::move(init);
  const double n = Z.dim(0);
  std::vector<double> resp;
  double ll = expectation(Z, result.params, resp);
  result.log_likelihood.push_back(ll);
  for (int it = 0; it < options.max_iters; ++it) {
    maximization(Z, resp, result.params);
    const double next = expectation(Z, result.params, resp);
    result.log_likelihood.push_back(next);
    ++result.iterations;
    const bool small = (next - ll) / n < options.tol;
    ll = next;
    if (small) {
      result.converged = true;
      break;
    }
  }
  return result;
}

GmmFitResult fit_gmm(const Tensor& Z, int K, const GmmFitOptions& options, Rng& rng) {
  check_latents(Z, -1);
  if (K < 1) throw std::invalid_argument("GMM needs K >= 1");
  if (Z.dim(0) < K) {
    throw std::invalid_argument("GMM needs at least K=" + std::to_string(K) + " samples, got " +
                                std::to_string(Z.dim(0)));
  }
  GmmFitResult best;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    GmmFitResult cur = fit_gmm_from(Z, kmeanspp_init(Z, K, rng), options);
    if (r == 0 || cur.log_likelihood.back() > best.log_likelihood.back()) best = std::move(cur);
  }
  return best;
}

void write_gmm_text(std::ostream& os, const GMMParams& params) {
  os << std::setprecision(17);
  for (int c = 0; c < params.K(); ++c) {
    os << params.pi[c];
    for (int j = 0; j < params.J; ++j) os << ' ' << params.mean(c)[j];
    for (int j = 0; j < params.J; ++j) os << ' ' << params.var(c)[j];
    os << '\n';
  }
}

GMMParams read_gmm_text(std::istream& is) {
  GMMParams p;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (v.size() < 3 || v.size() % 2 == 0) throw std::invalid_argument("malformed GMM text line");
    const int J = static_cast<int>((v.size() - 1) / 2);
    if (p.J && p.J != J) throw std::invalid_argument("inconsistent GMM dimension across lines");
    p.J = J;
    p.pi.push_back(v[0]);
    p.mu.insert(p.mu.end(), v.begin() + 1, v.begin() + 1 + J);
    p.sigma2.insert(p.sigma2.end(), v.begin() + 1 + J, v.end());
  }
  p.validate();
  return p;
}

}  // namespace cddpm
