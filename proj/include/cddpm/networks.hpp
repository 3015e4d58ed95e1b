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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cddpm/autograd.hpp"
#include "cddpm/diffusion.hpp"
#include "cddpm/tensor.hpp"

namespace cddpm {

inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 20.0;

struct NetworkConfig {
  int channels = 1;
  int height = 16;
  int width = 16;
  int latent_dim = 8;
  // Channel width per resolution level; each level after the first halves H and W.
  std::vector<int> widths{8, 16};
  int groups = 4;
  int time_embed_dim = 16;
  int embed_dim = 32;
  // Encoder features are average-pooled to encoder_pool x encoder_pool before the head.
  int encoder_pool = 4;
  std::uint64_t seed = 0;

  Shape image_shape() const { return {channels, height, width}; }
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

// Variational posterior parameters of q_phi(z | x0).
struct EncoderOutput {
  std::vector<double> mu;
  std::vector<double> log_sigma2;
};

// z = mu + exp(0.5 * log_sigma2) * eps
std::vector<double> reparameterize(const EncoderOutput& enc, std::span<const double> eps);

enum ParamGroup : int { kPredictorParams = 0, kEncoderParams = 1 };

// Encoder f_phi and conditional noise predictor eps_theta sharing one
// parameter store; group tags separate theta from phi.
class Networks {
 public:
  explicit Networks(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  ag::ParamStore& params() { return store_; }
  const ag::ParamStore& params() const { return store_; }

  struct EncoderVars {
    ag::Var mu;
    ag::Var log_sigma2;  // clamped to [kLogVarMin, kLogVarMax]
  };
  EncoderVars encode(ag::Tape& tape, ag::Var x0) const;
  ag::Var predict_noise(ag::Tape& tape, ag::Var x_t, int t, ag::Var z) const;

  EncoderOutput encode(const Tensor& x0) const;
  Tensor predict_noise(const Tensor& x_t, int t, std::span<const double> z) const;
  // Wraps predict_noise; the returned callable references *this.
  NoisePredictor predictor() const;

 private:
  struct Conv {
    int w = -1, b = -1;
  };
  struct Linear {
    int w = -1, b = -1;
  };
  struct Norm {
    int gamma = -1, beta = -1;
  };
  struct ResBlock {
    int cin = 0, cout = 0;
    Norm norm1;
    Conv conv1;
    Norm norm2;
    Linear modulation;  // absent (w < 0) in the encoder
    Conv conv2;
    Conv skip;  // 1x1, absent when cin == cout
  };

  Conv make_conv(const std::string& name, int cin, int cout, int k, double gain, int group, Rng& rng);
  Linear make_linear(const std::string& name, int in, int out, double gain, int group, Rng& rng);
  Norm make_norm(const std::string& name, int c, int group);
  ResBlock make_block(const std::string& name, int cin, int cout, bool conditioned, int group, Rng& rng);

  ag::Var conv(ag::Tape& tape, const Conv& c, ag::Var x) const;
  ag::Var linear(ag::Tape& tape, const Linear& l, ag::Var x) const;
  ag::Var norm(ag::Tape& tape, const Norm& n, ag::Var x) const;
  ag::Var block(ag::Tape& tape, const ResBlock& b, ag::Var x, ag::Var emb) const;
  void check_image(const Tensor& x) const;

  NetworkConfig config_;
  ag::ParamStore store_;

  // Noise predictor.
  Linear time_fc1_, time_fc2_, latent_fc_;
  Conv unet_in_;
  std::vector<ResBlock> down_;
  ResBlock mid_;
  std::vector<ResBlock> up_;
  Norm unet_out_norm_;
  Conv unet_out_;

  // Encoder.
  Conv enc_in_;
  std::vector<ResBlock> enc_down_;
  Norm enc_out_norm_;
  Linear enc_head_;
};

// Sinusoidal embedding of a timestep, length dim (even).
Tensor timestep_embedding(int t, int dim);

}  // namespace cddpm
