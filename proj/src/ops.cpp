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

#include "cddpm/ops.hpp"

#include <cmath>

#include "cddpm/simd.hpp"

namespace cddpm::ag {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.shape.size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape));
}

}  // namespace

Var conv2d(Tape& tape, Var xv, Var wv, Var bv) {
  const Tensor& x = tape.value(xv);
  const Tensor& w = tape.value(wv);
  const Tensor& b = tape.value(bv);
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  const int ci_n = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int co_n = w.dim(0), k = w.dim(2);
  if (w.dim(1) != ci_n || w.dim(3) != k || k % 2 == 0 || b.size() != static_cast<std::size_t>(co_n)) {
    throw ShapeError("conv2d: weight " + shape_str(w.shape) + " incompatible with input " + shape_str(x.shape));
  }
  const int pad = k / 2;
  const int hp = h + 2 * pad, wp = wd + 2 * pad;
  const std::size_t plane_in = static_cast<std::size_t>(hp) * wp;
  const std::size_t plane_out = static_cast<std::size_t>(h) * wp;
  // Output rows are computed on the padded width; columns >= W are discarded.
  const std::size_t run = static_cast<std::size_t>(h - 1) * wp + wd;

  std::vector<double> in_pad(static_cast<std::size_t>(ci_n) * plane_in, 0.0);
  for (int c = 0; c < ci_n; ++c)
    for (int y = 0; y < h; ++y)
      std::copy_n(x.ptr() + (static_cast<std::size_t>(c) * h + y) * wd, wd,
                  in_pad.data() + c * plane_in + static_cast<std::size_t>(y + pad) * wp + pad);

  std::vector<double> out_ext(static_cast<std::size_t>(co_n) * plane_out, 0.0);
  const auto& kt = simd::active();
  for (int co = 0; co < co_n; ++co) {
    double* dst = out_ext.data() + co * plane_out;
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* wk = w.ptr() + (static_cast<std::size_t>(co) * ci_n + ci) * k * k;
      const double* src = in_pad.data() + ci * plane_in;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) kt.axpy(run, wk[ky * k + kx], src + ky * wp + kx, dst);
    }
  }
  Tensor out({co_n, h, wd});
  for (int co = 0; co < co_n; ++co)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < wd; ++xx)
        out.data[(static_cast<std::size_t>(co) * h + y) * wd + xx] = out_ext[co * plane_out + y * wp + xx] + b[co];

  return tape.push(std::move(out), [xv, wv, bv, in_pad = std::move(in_pad), ci_n, co_n, h, wd, k, pad, hp, wp, plane_in,
                                    plane_out, run](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    const Tensor& w = t.value(wv);
    const auto& kt = simd::active();
    std::vector<double> g_ext(static_cast<std::size_t>(co_n) * plane_out, 0.0);
    for (int co = 0; co < co_n; ++co)
      for (int y = 0; y < h; ++y)
        std::copy_n(gy.ptr() + (static_cast<std::size_t>(co) * h + y) * wd, wd, g_ext.data() + co * plane_out + y * wp);

    Tensor& gb = t.grad(bv);
    for (int co = 0; co < co_n; ++co) {
      double s = 0.0;
      const double* g = gy.ptr() + static_cast<std::size_t>(co) * h * wd;
      for (int i = 0; i < h * wd; ++i) s += g[i];
      gb[co] += s;
    }
    Tensor& gw = t.grad(wv);
    for (int co = 0; co < co_n; ++co) {
      const double* g = g_ext.data() + co * plane_out;
      for (int ci = 0; ci < ci_n; ++ci) {
        double* gwk = gw.ptr() + (static_cast<std::size_t>(co) * ci_n + ci) * k * k;
        const double* src = in_pad.data() + ci * plane_in;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) gwk[ky * k + kx] += kt.dot(run, g, src + ky * wp + kx);
      }
    }
    std::vector<double> gin_pad(static_cast<std::size_t>(ci_n) * plane_in, 0.0);
    for (int co = 0; co < co_n; ++co) {
      const double* g = g_ext.data() + co * plane_out;
      for (int ci = 0; ci < ci_n; ++ci) {
        const double* wk = w.ptr() + (static_cast<std::size_t>(co) * ci_n + ci) * k * k;
        double* dst = gin_pad.data() + ci * plane_in;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) kt.axpy(run, wk[ky * k + kx], g, dst + ky * wp + kx);
      }
    }
    Tensor& gx = t.grad(xv);
    for (int c = 0; c < ci_n; ++c)
      for (int y = 0; y < h; ++y) {
        const double* src = gin_pad.data() + c * plane_in + static_cast<std::size_t>(y + pad) * wp + pad;
        double* dst = gx.ptr() + (static_cast<std::size_t>(c) * h + y) * wd;
        for (int xx = 0; xx < wd; ++xx) dst[xx] += src[xx];
      }
    (void)hp;
  });
}

Var linear(Tape& tape, Var xv, Var wv, Var bv) {
  const Tensor& x = tape.value(xv);
  const Tensor& w = tape.value(wv);
  const Tensor& b = tape.value(bv);
  require_rank(w, 2, "linear");
  const int out_n = w.dim(0), in_n = w.dim(1);
  if (x.size() != static_cast<std::size_t>(in_n) || b.size() != static_cast<std::size_t>(out_n)) {
    throw ShapeError("linear: weight " + shape_str(w.shape) + " incompatible with input " + shape_str(x.shape));
  }
  Tensor y({out_n});
  for (int o = 0; o < out_n; ++o) y[o] = simd::dot(in_n, w.ptr() + static_cast<std::size_t>(o) * in_n, x.ptr()) + b[o];
  return tape.push(std::move(y), [xv, wv, bv, out_n, in_n](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    const Tensor& x = t.value(xv);
    const Tensor& w = t.value(wv);
    Tensor& gx = t.grad(xv);
    Tensor& gw = t.grad(wv);
    Tensor& gb = t.grad(bv);
    for (int o = 0; o < out_n; ++o) {
      const double g = gy[o];
      if (g == 0.0) continue;
      simd::axpy(in_n, g, w.ptr() + static_cast<std::size_t>(o) * in_n, gx.ptr());
      simd::axpy(in_n, g, x.ptr(), gw.ptr() + static_cast<std::size_t>(o) * in_n);
      gb[o] += g;
    }
  });
}

Var group_norm(Tape& tape, Var xv, int groups, Var gv, Var bv, double eps) {
  const Tensor& x = tape.value(xv);
  const Tensor& gamma = tape.value(gv);
  const Tensor& beta = tape.value(bv);
  require_rank(x, 3, "group_norm");
  const int c_n = x.dim(0);
  if (groups <= 0 || c_n % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
  if (gamma.size() != static_cast<std::size_t>(c_n) || beta.size() != static_cast<std::size_t>(c_n))
    throw ShapeError("group_norm: affine parameters do not match channel count");
  const std::size_t hw = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const int cpg = c_n / groups;
  const std::size_t gsize = hw * cpg;

  Tensor xhat(x.shape);
  std::vector<double> inv_std(groups);
  for (int g = 0; g < groups; ++g) {
    const double* src = x.ptr() + g * gsize;
    double mean = 0.0;
    for (std::size_t i = 0; i < gsize; ++i) mean += src[i];
    mean /= static_cast<double>(gsize);
    double var = 0.0;
    for (std::size_t i = 0; i < gsize; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<double>(gsize);
    inv_std[g] = 1.0 / std::sqrt(var + eps);
    double* dst = xhat.ptr() + g * gsize;
    for (std::size_t i = 0; i < gsize; ++i) dst[i] = (src[i] - mean) * inv_std[g];
  }
  Tensor y(x.shape);
  for (int c = 0; c < c_n; ++c)
    for (std::size_t i = 0; i < hw; ++i) y.data[c * hw + i] = gamma[c] * xhat.data[c * hw + i] + beta[c];

  return tape.push(std::move(y), [xv, gv, bv, xhat = std::move(xhat), inv_std = std::move(inv_std), groups, cpg, hw,
                                  gsize, c_n](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    const Tensor& gamma = t.value(gv);
    Tensor& ggamma = t.grad(gv);
    Tensor& gbeta = t.grad(bv);
    for (int c = 0; c < c_n; ++c) {
      double sg = 0.0, sgx = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        sg += gy.data[c * hw + i];
        sgx += gy.data[c * hw + i] * xhat.data[c * hw + i];
      }
      gbeta[c] += sg;
      ggamma[c] += sgx;
    }
    Tensor& gx = t.grad(xv);
    std::vector<double> gxhat(gsize);
    for (int g = 0; g < groups; ++g) {
      double mean_g = 0.0, mean_gx = 0.0;
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = g * cpg + cc;
        for (std::size_t i = 0; i < hw; ++i) {
          const double v = gy.data[c * hw + i] * gamma[c];
          gxhat[cc * hw + i] = v;
          mean_g += v;
          mean_gx += v * xhat.data[c * hw + i];
        }
      }
      mean_g /= static_cast<double>(gsize);
      mean_gx /= static_cast<double>(gsize);
      const double* xh = xhat.ptr() + g * gsize;
      double* dst = gx.ptr() + g * gsize;
      for (std::size_t i = 0; i < gsize; ++i) dst[i] += inv_std[g] * (gxhat[i] - mean_g - xh[i] * mean_gx);
    }
  });
}

Var scale_shift(Tape& tape, Var xv, Var sv) {
  const Tensor& x = tape.value(xv);
  const Tensor& ss = tape.value(sv);
  require_rank(x, 3, "scale_shift");
  const int c_n = x.dim(0);
  if (ss.size() != static_cast<std::size_t>(2 * c_n)) throw ShapeError("scale_shift: expected 2C modulation values");
  const std::size_t hw = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  Tensor y(x.shape);
  for (int c = 0; c < c_n; ++c)
    for (std::size_t i = 0; i < hw; ++i) y.data[c * hw + i] = x.data[c * hw + i] * (1.0 + ss[c]) + ss[c_n + c];
  return tape.push(std::move(y), [xv, sv, c_n, hw](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    const Tensor& x = t.value(xv);
    const Tensor& ss = t.value(sv);
    Tensor& gx = t.grad(xv);
    Tensor& gs = t.grad(sv);
    for (int c = 0; c < c_n; ++c) {
      double sgx = 0.0, sg = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        const double g = gy.data[c * hw + i];
        gx.data[c * hw + i] += g * (1.0 + ss[c]);
        sgx += g * x.data[c * hw + i];
        sg += g;
      }
      gs[c] += sgx;
      gs[c_n + c] += sg;
    }
  });
}

Var silu(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / (1.0 + std::exp(-x[i]));
  return tape.push(std::move(y), [xv](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    const Tensor& x = t.value(xv);
    Tensor& gx = t.grad(xv);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-x[i]));
      gx[i] += gy[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

Var add(Tape& tape, Var av, Var bv) {
  const Tensor& a = tape.value(av);
  const Tensor& b = tape.value(bv);
  require_same_shape(a, b, "add");
  Tensor y = a;
  simd::axpy(y.size(), 1.0, b.ptr(), y.ptr());
  return tape.push(std::move(y), [av, bv](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    simd::axpy(gy.size(), 1.0, gy.ptr(), t.grad(av).ptr());
    simd::axpy(gy.size(), 1.0, gy.ptr(), t.grad(bv).ptr());
  });
}

Var adaptive_avg_pool(Tape& tape, Var xv, int out) {
  const Tensor& x = tape.value(xv);
  require_rank(x, 3, "adaptive_avg_pool");
  const int c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (out <= 0 || h % out != 0 || w % out != 0)
    throw ShapeError("adaptive_avg_pool: " + shape_str(x.shape) + " not divisible into " + std::to_string(out));
  const int fy = h / out, fx = w / out;
  const double inv = 1.0 / (fy * fx);
  Tensor y({c_n, out, out});
  for (int c = 0; c < c_n; ++c)
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx)
        y.data[(static_cast<std::size_t>(c) * out + yy / fy) * out + xx / fx] +=
            inv * x.data[(static_cast<std::size_t>(c) * h + yy) * w + xx];
  return tape.push(std::move(y), [xv, c_n, h, w, out, fy, fx, inv](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad(xv);
    for (int c = 0; c < c_n; ++c)
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
          gx.data[(static_cast<std::size_t>(c) * h + yy) * w + xx] +=
              inv * gy.data[(static_cast<std::size_t>(c) * out + yy / fy) * out + xx / fx];
  });
}

Var avg_pool2(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  require_rank(x, 3, "avg_pool2");
  const int c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) throw ShapeError("avg_pool2: odd spatial size " + shape_str(x.shape));
  const int ho = h / 2, wo = w / 2;
  Tensor y({c_n, ho, wo});
  for (int c = 0; c < c_n; ++c)
    for (int yy = 0; yy < ho; ++yy)
      for (int xx = 0; xx < wo; ++xx) {
        const double* r0 = x.ptr() + (static_cast<std::size_t>(c) * h + 2 * yy) * w + 2 * xx;
        const double* r1 = r0 + w;
        y.data[(static_cast<std::size_t>(c) * ho + yy) * wo + xx] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  return tape.push(std::move(y), [xv, c_n, h, w, ho, wo](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad(xv);
    for (int c = 0; c < c_n; ++c)
      for (int yy = 0; yy < ho; ++yy)
        for (int xx = 0; xx < wo; ++xx) {
          const double g = 0.25 * gy.data[(static_cast<std::size_t>(c) * ho + yy) * wo + xx];
          double* r0 = gx.ptr() + (static_cast<std::size_t>(c) * h + 2 * yy) * w + 2 * xx;
          double* r1 = r0 + w;
          r0[0] += g;
          r0[1] += g;
          r1[0] += g;
          r1[1] += g;
        }
  });
}

Var upsample2(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  require_rank(x, 3, "upsample2");
  const int c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int ho = 2 * h, wo = 2 * w;
  Tensor y({c_n, ho, wo});
  for (int c = 0; c < c_n; ++c)
    for (int yy = 0; yy < ho; ++yy)
      for (int xx = 0; xx < wo; ++xx)
        y.data[(static_cast<std::size_t>(c) * ho + yy) * wo + xx] =
            x.data[(static_cast<std::size_t>(c) * h + yy / 2) * w + xx / 2];
  return tape.push(std::move(y), [xv, c_n, h, w, ho, wo](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad(xv);
    for (int c = 0; c < c_n; ++c)
      for (int yy = 0; yy < ho; ++yy)
        for (int xx = 0; xx < wo; ++xx)
          gx.data[(static_cast<std::size_t>(c) * h + yy / 2) * w + xx / 2] +=
              gy.data[(static_cast<std::size_t>(c) * ho + yy) * wo + xx];
  });
}

Var concat_channels(Tape& tape, Var av, Var bv) {
  const Tensor& a = tape.value(av);
  const Tensor& b = tape.value(bv);
  require_rank(a, 3, "concat_channels");
  require_rank(b, 3, "concat_channels");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw ShapeError("concat_channels: spatial mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor y({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  const std::size_t na = a.size(), nb = b.size();
  return tape.push(std::move(y), [av, bv, na, nb](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    simd::axpy(na, 1.0, gy.ptr(), t.grad(av).ptr());
    simd::axpy(nb, 1.0, gy.ptr() + na, t.grad(bv).ptr());
  });
}

Var flatten(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  Tensor y({static_cast<int>(x.size())}, x.data);
  return tape.push(std::move(y), [xv](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    simd::axpy(gy.size(), 1.0, gy.ptr(), t.grad(xv).ptr());
  });
}

Var slice(Tape& tape, Var vv, int begin, int len) {
  const Tensor& v = tape.value(vv);
  if (begin < 0 || len < 0 || static_cast<std::size_t>(begin + len) > v.size())
    throw ShapeError("slice: range out of bounds for " + shape_str(v.shape));
  Tensor y({len}, std::vector<double>(v.data.begin() + begin, v.data.begin() + begin + len));
  return tape.push(std::move(y), [vv, begin, len](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    simd::axpy(len, 1.0, gy.ptr(), t.grad(vv).ptr() + begin);
  });
}

Var clamp(Tape& tape, Var xv, double lo, double hi) {
  const Tensor& x = tape.value(xv);
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::clamp(x[i], lo, hi);
  return tape.push(std::move(y), [xv, lo, hi](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    const Tensor& x = t.value(xv);
    Tensor& gx = t.grad(xv);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] >= lo && x[i] <= hi) gx[i] += gy[i];
  });
}

Var reparameterize(Tape& tape, Var mv, Var lv, const Tensor& eps) {
  const Tensor& mu = tape.value(mv);
  const Tensor& logvar = tape.value(lv);
  require_same_shape(mu, logvar, "reparameterize");
  require_same_shape(mu, eps, "reparameterize");
  Tensor z(mu.shape);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + std::exp(0.5 * logvar[i]) * eps[i];
  return tape.push(std::move(z), [mv, lv, eps](Tape& t, int self) {
    const Tensor& gz = t.grad(self);
    const Tensor& logvar = t.value(lv);
    Tensor& gm = t.grad(mv);
    Tensor& gl = t.grad(lv);
    for (std::size_t i = 0; i < gz.size(); ++i) {
      gm[i] += gz[i];
      gl[i] += gz[i] * eps[i] * 0.5 * std::exp(0.5 * logvar[i]);
    }
  });
}

Var sum_squared_error(Tape& tape, Var pv, const Tensor& target) {
  const Tensor& pred = tape.value(pv);
  require_same_shape(pred, target, "sum_squared_error");
  Tensor y({1});
  y[0] = simd::sqdist(pred.size(), pred.ptr(), target.ptr());
  return tape.push(std::move(y), [pv, target](Tape& t, int self) {
    const double g = t.grad(self)[0];
    const Tensor& pred = t.value(pv);
    Tensor& gp = t.grad(pv);
    for (std::size_t i = 0; i < pred.size(); ++i) gp[i] += 2.0 * g * (pred[i] - target[i]);
  });
}

Var weighted_sum(Tape& tape, const std::vector<Var>& scalars, const std::vector<double>& weights) {
  if (scalars.size() != weights.size()) throw ShapeError("weighted_sum: size mismatch");
  Tensor y({1});
  for (std::size_t k = 0; k < scalars.size(); ++k) y[0] += weights[k] * tape.value(scalars[k])[0];
  return tape.push(std::move(y), [scalars, weights](Tape& t, int self) {
    const double g = t.grad(self)[0];
    for (std::size_t k = 0; k < scalars.size(); ++k) t.grad(scalars[k])[0] += weights[k] * g;
  });
}

}  // namespace cddpm::ag
