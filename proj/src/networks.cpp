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

#include "cddpm/networks.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cddpm/ops.hpp"

namespace cddpm {

void NetworkConfig::validate() const {
  if (channels < 1 || height < 1 || width < 1) throw std::invalid_argument("network: image shape must be positive");
  if (latent_dim < 1) throw std::invalid_argument("network: latent_dim must be >= 1");
  if (widths.empty()) throw std::invalid_argument("network: need at least one resolution level");
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument("network: widths must be positive");
    if (groups < 1 || w % groups != 0) {
      throw std::invalid_argument("network: width " + std::to_string(w) + " not divisible by groups " +
                                  std::to_string(groups));
    }
  }
  const int scale = 1 << (widths.size() - 1);
  if (height % scale || width % scale) throw std::invalid_argument("network: image size not divisible by 2^(levels-1)");
  if ((height / scale) % encoder_pool || (width / scale) % encoder_pool || encoder_pool < 1) {
    throw std::invalid_argument("network: encoder_pool must divide the lowest resolution");
  }
  if (time_embed_dim < 2 || time_embed_dim % 2) throw std::invalid_argument("network: time_embed_dim must be even");
  if (embed_dim < 1) throw std::invalid_argument("network: embed_dim must be positive");
}

std::vector<double> reparameterize(const EncoderOutput& enc, std::span<const double> eps) {
  if (eps.size() != enc.mu.size() || enc.log_sigma2.size() != enc.mu.size()) {
    throw ShapeError("reparameterize: eps has length " + std::to_string(eps.size()) + ", latent has " +
                     std::to_string(enc.mu.size()));
  }
  std::vector<double> z(enc.mu.size());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = enc.mu[j] + std::exp(0.5 * enc.log_sigma2[j]) * eps[j];
  return z;
}

Tensor timestep_embedding(int t, int dim) {
  Tensor e({dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e[i] = std::sin(t * freq);
    e[half + i] = std::cos(t * freq);
  }
  return e;
}

Networks::Conv Networks::make_conv(const std::string& name, int cin, int cout, int k, double gain, int group,
                                   Rng& rng) {
  Tensor w({cout, cin, k, k});
  const double sd = gain * std::sqrt(2.0 / (cin * k * k));
  for (double& v : w.data) v = sd * rng.normal();
  return {store_.add(name + ".w", std::move(w), group), store_.add(name + ".b", Tensor({cout}), group)};
}

Networks::Linear Networks::make_linear(const std::string& name, int in, int out, double gain, int group, Rng& rng) {
  Tensor w({out, in});
  const double sd = gain * std::sqrt(1.0 / in);
  for (double& v : w.data) v = sd * rng.normal();
  return {store_.add(name + ".w", std::move(w), group), store_.add(name + ".b", Tensor({out}), group)};
}

Networks::Norm Networks::make_norm(const std::string& name, int c, int group) {
  return {store_.add(name + ".gamma", Tensor({c}, 1.0), group), store_.add(name + ".beta", Tensor({c}), group)};
}

Networks::ResBlock Networks::make_block(const std::string& name, int cin, int cout, bool conditioned, int group,
                                        Rng& rng) {
  ResBlock b;
  b.cin = cin;
  b.cout = cout;
  b.norm1 = make_norm(name + ".norm1", cin, group);
  b.conv1 = make_conv(name + ".conv1", cin, cout, 3, 1.0, group, rng);
  b.norm2 = make_norm(name + ".norm2", cout, group);
  if (conditioned) b.modulation = make_linear(name + ".mod", config_.embed_dim, 2 * cout, 1.0, group, rng);
  b.conv2 = make_conv(name + ".conv2", cout, cout, 3, 0.5, group, rng);
  if (cin != cout) b.skip = make_conv(name + ".skip", cin, cout, 1, 1.0, group, rng);
  return b;
}

Networks::Networks(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  const auto& w = config_.widths;
  const int levels = static_cast<int>(w.size());
  const int P = kPredictorParams, E = kEncoderParams;

  time_fc1_ = make_linear("unet.time1", config_.time_embed_dim, config_.embed_dim, 1.0, P, rng);
  time_fc2_ = make_linear("unet.time2", config_.embed_dim, config_.embed_dim, 1.0, P, rng);
  latent_fc_ = make_linear("unet.latent", config_.latent_dim, config_.embed_dim, 1.0, P, rng);
  unet_in_ = make_conv("unet.in", config_.channels, w[0], 3, 1.0, P, rng);
  int cur = w[0];
  for (int l = 0; l < levels; ++l) {
    down_.push_back(make_block("unet.down" + std::to_string(l), cur, w[l], true, P, rng));
    cur = w[l];
  }
  mid_ = make_block("unet.mid", cur, cur, true, P, rng);
  for (int l = levels - 1; l >= 0; --l) {
    up_.push_back(make_block("unet.up" + std::to_string(l), cur + w[l], w[l], true, P, rng));
    cur = w[l];
  }
  unet_out_norm_ = make_norm("unet.out_norm", cur, P);
  unet_out_ = make_conv("unet.out", cur, config_.channels, 3, 0.1, P, rng);

  enc_in_ = make_conv("enc.in", config_.channels, w[0], 3, 1.0, E, rng);
  cur = w[0];
  for (int l = 0; l < levels; ++l) {
    enc_down_.push_back(make_block("enc.down" + std::to_string(l), cur, w[l], false, E, rng));
    cur = w[l];
  }
  enc_out_norm_ = make_norm("enc.out_norm", cur, E);
  const int pooled = cur * config_.encoder_pool * config_.encoder_pool;
  enc_head_ = make_linear("enc.head", pooled, 2 * config_.latent_dim, 1.0, E, rng);
}

ag::Var Networks::conv(ag::Tape& tape, const Conv& c, ag::Var x) const {
  return ag::conv2d(tape, x, tape.param(store_, c.w), tape.param(store_, c.b));
}

ag::Var Networks::linear(ag::Tape& tape, const Linear& l, ag::Var x) const {
  return ag::linear(tape, x, tape.param(store_, l.w), tape.param(store_, l.b));
}

ag::Var Networks::norm(ag::Tape& tape, const Norm& n, ag::Var x) const {
  return ag::group_norm(tape, x, config_.groups, tape.param(store_, n.gamma), tape.param(store_, n.beta));
}

// GN -> SiLU -> conv, GN -> (t,z) scale/shift -> SiLU -> conv, plus skip.
ag::Var Networks::block(ag::Tape& tape, const ResBlock& b, ag::Var x, ag::Var emb) const {
  ag::Var h = conv(tape, b.conv1, ag::silu(tape, norm(tape, b.norm1, x)));
  h = norm(tape, b.norm2, h);
  if (b.modulation.w >= 0) h = ag::scale_shift(tape, h, linear(tape, b.modulation, emb));
  h = conv(tape, b.conv2, ag::silu(tape, h));
  ag::Var skip = b.skip.w >= 0 ? conv(tape, b.skip, x) : x;
  return ag::add(tape, h, skip);
}

void Networks::check_image(const Tensor& x) const {
  if (x.shape != config_.image_shape()) {
    throw ShapeError("image shape " + shape_str(x.shape) + " does not match network input " +
                     shape_str(config_.image_shape()));
  }
}

Networks::EncoderVars Networks::encode(ag::Tape& tape, ag::Var x0) const {
  check_image(tape.value(x0));
  ag::Var h = conv(tape, enc_in_, x0);
  for (std::size_t l = 0; l < enc_down_.size(); ++l) {
    if (l > 0) h = ag::avg_pool2(tape, h);
    h = block(tape, enc_down_[l], h, ag::Var{});
  }
  h = ag::silu(tape, norm(tape, enc_out_norm_, h));
  h = ag::flatten(tape, ag::adaptive_avg_pool(tape, h, config_.encoder_pool));
  ag::Var head = linear(tape, enc_head_, h);
  const int J = config_.latent_dim;
  ag::Var mu = ag::slice(tape, head, 0, J);
  ag::Var lv = ag::clamp(tape, ag::slice(tape, head, J, J), kLogVarMin, kLogVarMax);
  return {mu, lv};
}

ag::Var Networks::predict_noise(ag::Tape& tape, ag::Var x_t, int t, ag::Var z) const {
  check_image(tape.value(x_t));
  if (tape.value(z).size() != static_cast<std::size_t>(config_.latent_dim)) {
    throw ShapeError("latent has length " + std::to_string(tape.value(z).size()) + ", network expects " +
                     std::to_string(config_.latent_dim));
  }
  ag::Var temb = tape.constant(timestep_embedding(t, config_.time_embed_dim));
  temb = linear(tape, time_fc2_, ag::silu(tape, linear(tape, time_fc1_, temb)));
  ag::Var emb = ag::silu(tape, ag::add(tape, temb, linear(tape, latent_fc_, z)));

  ag::Var h = conv(tape, unet_in_, x_t);
  std::vector<ag::Var> skips;
  for (std::size_t l = 0; l < down_.size(); ++l) {
    if (l > 0) h = ag::avg_pool2(tape, h);
    h = block(tape, down_[l], h, emb);
    skips.push_back(h);
  }
  h = block(tape, mid_, h, emb);
  for (std::size_t i = 0; i < up_.size(); ++i) {
    if (i > 0) h = ag::upsample2(tape, h);
    h = block(tape, up_[i], ag::concat_channels(tape, h, skips[skips.size() - 1 - i]), emb);
  }
  h = ag::silu(tape, norm(tape, unet_out_norm_, h));
  return conv(tape, unet_out_, h);
}

EncoderOutput Networks::encode(const Tensor& x0) const {
  ag::Tape tape(false);
  EncoderVars v = encode(tape, tape.constant(x0));
  return {tape.value(v.mu).data, tape.value(v.log_sigma2).data};
}

Tensor Networks::predict_noise(const Tensor& x_t, int t, std::span<const double> z) const {
  ag::Tape tape(false);
  ag::Var zv = tape.constant(Tensor({static_cast<int>(z.size())}, std::vector<double>(z.begin(), z.end())));
  return tape.value(predict_noise(tape, tape.constant(x_t), t, zv));
}

NoisePredictor Networks::predictor() const {
  return [this](const Tensor& x_t, int t, const std::vector<double>& z) { return predict_noise(x_t, t, z); };
}

}  // namespace cddpm
