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

#include "cddpm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "cddpm/checkpoint.hpp"
#include "cddpm/evaluation.hpp"
#include "cddpm/parallel.hpp"
#include "cddpm/simd.hpp"

namespace cddpm {
namespace {

// Stream tags for derive_seed.
enum : std::uint64_t { kTagShuffle = 1, kTagBatch = 2, kTagGmm = 3, kTagLatent = 4, kTagDiag = 5, kTagFinal = 6 };

std::size_t thread_count(const TrainConfig& cfg) { return cfg.threads == 0 ? default_threads() : cfg.threads; }

bool finite(const LossBreakdown& b) {
  return std::isfinite(b.recon) && std::isfinite(b.kl_cat) && std::isfinite(b.kl_gauss) && std::isfinite(b.total);
}

bool should_checkpoint(const TrainConfig& cfg, int round) {
  return round == cfg.em_rounds || (cfg.checkpoint_every > 0 && round % cfg.checkpoint_every == 0);
}

}  // namespace

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  need(clusters >= 1, "clusters must be >= 1");
  need(latent_dim >= 1, "latent_dim must be >= 1");
  need(timesteps >= 1, "timesteps must be >= 1");
  need(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and >= 0");
  need(learning_rate >= 0.0, "learning_rate must be >= 0");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(mstep_epochs >= 0 && em_rounds >= 0 && warmup_epochs >= 0, "epoch and round counts must be >= 0");
  need(gmm.max_iters >= 1 && gmm.restarts >= 1, "gmm max_iters and restarts must be >= 1");
  need(checkpoint_every >= 0, "checkpoint_every must be >= 0");
}

nlohmann::ordered_json to_json(const LossRecord& r) {
  return {{"em_round", r.em_round},  {"epoch", r.epoch},        {"step", r.step},
          {"recon", r.loss.recon},   {"kl_cat", r.loss.kl_cat}, {"kl_gauss", r.loss.kl_gauss},
          {"lambda", r.loss.lambda}, {"total", r.loss.total}};
}

TrainState::TrainState(const NetworkConfig& net, const TrainConfig& cfg)
    : nets(net), optimizer(nets.params(), Adam::Options{cfg.learning_rate}) {}

Tensor extract_latents(const ImageSet& data, const Networks& nets, LatentSource source, std::uint64_t seed,
                       std::size_t threads) {
  const int J = nets.config().latent_dim;
  const std::size_t n = data.size();
  Tensor Z({static_cast<int>(n), J});
  const std::size_t shards = std::max<std::size_t>(1, std::min<std::size_t>(n, 64));
  parallel_shards(shards, threads, [&](std::size_t s) {
    for (std::size_t i = s * n / shards; i < (s + 1) * n / shards; ++i) {
      EncoderOutput enc = nets.encode(data.images[i]);
      std::vector<double> z = enc.mu;
      if (source == LatentSource::kSample) {
        Rng rng(derive_seed(seed, {kTagLatent, i}));
        std::vector<double> eps(J);
        rng.fill_normal(eps);
        z = reparameterize(enc, eps);
      }
      std::copy(z.begin(), z.end(), Z.ptr() + i * J);
    }
  });
  return Z;
}

GMMParams align_to(const GMMParams& fit, const GMMParams& previous) {
  if (fit.K() != previous.K() || fit.J != previous.J) throw std::invalid_argument("align_to: shape mismatch");
  const int K = fit.K(), J = fit.J;
  std::vector<double> cost(static_cast<std::size_t>(K) * K);
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b)
      cost[static_cast<std::size_t>(a) * K + b] = simd::sqdist(J, previous.mean(a), fit.mean(b));
  const std::vector<int> match = hungarian(cost, K);
  GMMParams out = fit;
  for (int a = 0; a < K; ++a) {
    const int b = match[a];
    out.pi[a] = fit.pi[b];
    std::copy_n(fit.mean(b), J, out.mu.begin() + static_cast<std::ptrdiff_t>(a) * J);
    std::copy_n(fit.var(b), J, out.sigma2.begin() + static_cast<std::ptrdiff_t>(a) * J);
  }
  return out;
}

GMMParams fit_latent_gmm(const Tensor& Z, const TrainConfig& cfg, const GMMParams* warm, std::uint64_t seed) {
  Rng rng(seed);
  GmmFitResult fresh = fit_gmm(Z, cfg.clusters, cfg.gmm, rng);
  if (!warm || warm->K() != cfg.clusters || warm->J != Z.dim(1)) return fresh.params;
  const GmmFitResult carried = fit_gmm_from(Z, *warm, cfg.gmm);
  if (carried.log_likelihood.back() >= fresh.log_likelihood.back()) return carried.params;
  return align_to(fresh.params, *warm);
}

GMMParams e_step(const ImageSet& data, const Networks& nets, const TrainConfig& cfg, const GMMParams* warm, int round) {
  if (data.size() < static_cast<std::size_t>(cfg.clusters)) {
    throw std::invalid_argument("E-step: dataset has " + std::to_string(data.size()) +
                                " samples, fewer than K=" + std::to_string(cfg.clusters));
  }
  const Tensor Z = extract_latents(data, nets, cfg.estep_latents,
                                   derive_seed(cfg.seed, {kTagGmm, 1, std::uint64_t(round)}), thread_count(cfg));
  return fit_latent_gmm(Z, cfg, warm, derive_seed(cfg.seed, {kTagGmm, 0, std::uint64_t(round)}));
}

LossBreakdown dataset_loss(const ImageSet& data, const Networks& nets, const GMMParams* params,
                           const NoiseSchedule& schedule, double lambda, std::uint64_t seed, const TrainConfig& cfg) {
  std::vector<const Tensor*> all;
  for (const auto& img : data.images) all.push_back(&img);
  Rng rng(seed);
  return total_loss(all, nets, params, schedule, lambda, rng, ObjectiveOptions{cfg.grad_through_w, thread_count(cfg)},
                    nullptr);
}

MStepResult m_step(const ImageSet& data, const GMMParams* params, TrainState& state, const TrainConfig& cfg,
                   double lambda, int round, int epochs, const LogSink& log) {
  if (!params && lambda != 0.0) throw std::invalid_argument("M-step: prior matching needs GMM parameters");
  if (data.size() == 0) throw std::invalid_argument("M-step: empty dataset");
  const NoiseSchedule schedule = cfg.schedule();
  const ObjectiveOptions opts{cfg.grad_through_w, thread_count(cfg)};
  const std::size_t n = data.size();
  MStepResult result;
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Warm-up epochs are numbered across resumes.
    const std::uint64_t epoch_tag = static_cast<std::uint64_t>(round) * 100000 +
                                    static_cast<std::uint64_t>(round == 0 ? state.warmup_epochs_done : epoch);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {kTagShuffle, epoch_tag}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    int step = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++step) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      std::vector<const Tensor*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&data.images[order[i]]);
      Rng rng(derive_seed(cfg.seed, {kTagBatch, epoch_tag, static_cast<std::uint64_t>(step)}));
      ag::Grads grads = ag::zero_grads(state.nets.params());
      const LossBreakdown loss = total_loss(batch, state.nets, params, schedule, lambda, rng, opts, &grads);
      LossRecord rec{round, epoch, step, loss};
      if (!finite(loss)) {
        if (log) {
          auto j = to_json(rec);
          j["event"] = "abort";
          j["reason"] = "non-finite loss";
          log(j);
        }
        throw TrainingAborted("non-finite loss in EM round " + std::to_string(round) + ", epoch " +
                              std::to_string(epoch) + ", step " + std::to_string(step));
      }
      state.optimizer.step(state.nets.params(), grads);
      ++state.global_step;
      epoch_sum += loss.total * static_cast<double>(end - begin);
      if (log) log(to_json(rec));
      result.records.push_back(rec);
    }
    result.epoch_mean_total.push_back(epoch_sum / static_cast<double>(n));
    if (round == 0) ++state.warmup_epochs_done;
  }
  return result;
}

TrainResult train(const ImageSet& data, const TrainConfig& cfg, const NetworkConfig& net, const TrainOptions& options,
                  std::optional<TrainState> resume) {
  cfg.validate();
  if (net.latent_dim != cfg.latent_dim) throw std::invalid_argument("train: network latent_dim != train latent_dim");
  if (data.size() < static_cast<std::size_t>(cfg.clusters)) {
    throw std::invalid_argument("train: dataset has " + std::to_string(data.size()) +
                                " samples, fewer than K=" + std::to_string(cfg.clusters));
  }
  TrainState state = resume ? std::move(*resume) : TrainState(net, cfg);
  state.optimizer.set_lr(cfg.learning_rate);
  const NoiseSchedule schedule = cfg.schedule();
  auto checkpoint = [&] {
    if (options.checkpoint_dir)
      save_checkpoint(*options.checkpoint_dir, state, cfg, state.nets.config(), options.config_echo);
  };
  auto emit = [&](nlohmann::ordered_json j) {
    if (options.log) options.log(j);
  };

  if (state.warmup_epochs_done < cfg.warmup_epochs) {
    m_step(data, nullptr, state, cfg, 0.0, 0, cfg.warmup_epochs - state.warmup_epochs_done, options.log);
    emit({{"event", "warmup_done"}, {"epochs", state.warmup_epochs_done}});
    checkpoint();
  }

  for (int round = state.round + 1; round <= cfg.em_rounds; ++round) {
    const GMMParams* warm = (cfg.gmm_warm_start && round > 1 && state.gmm) ? &*state.gmm : nullptr;
    const GMMParams gmm = e_step(data, state.nets, cfg, warm, round);
    const std::uint64_t diag_seed = derive_seed(cfg.seed, {kTagDiag, std::uint64_t(round)});
    nlohmann::ordered_json round_log{{"event", "round"}, {"em_round", round}};
    if (cfg.diagnostics)
      round_log["loss_before"] = dataset_loss(data, state.nets, &gmm, schedule, cfg.lambda, diag_seed, cfg).total;
    const MStepResult ms = m_step(data, &gmm, state, cfg, cfg.lambda, round, cfg.mstep_epochs, options.log);
    if (cfg.diagnostics)
      round_log["loss_after"] = dataset_loss(data, state.nets, &gmm, schedule, cfg.lambda, diag_seed, cfg).total;
    round_log["epoch_mean_total"] = ms.epoch_mean_total;
    round_log["gmm_pi"] = gmm.pi;
    emit(round_log);
    state.gmm = gmm;
    state.round = round;
    if (should_checkpoint(cfg, round) && round != cfg.em_rounds) checkpoint();
  }

  TrainResult result{std::move(state), {}, {}};
  TrainState& s = result.state;
  result.latents = extract_latents(data, s.nets, LatentSource::kPosteriorMean, 0, thread_count(cfg));
  s.gmm = fit_latent_gmm(result.latents, cfg, cfg.gmm_warm_start && s.gmm ? &*s.gmm : nullptr,
                         derive_seed(cfg.seed, {kTagFinal}));
  result.assignments = assign_all(result.latents, *s.gmm);
  s.complete = true;
  if (options.checkpoint_dir) save_checkpoint(*options.checkpoint_dir, s, cfg, s.nets.config(), options.config_echo);
  emit({{"event", "done"}, {"em_rounds", s.round}, {"steps", s.global_step}});
  return result;
}

}  // namespace cddpm
