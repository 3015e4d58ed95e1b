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

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "cddpm/checkpoint.hpp"
#include "cddpm/trainer.hpp"
#include "support.hpp"

using namespace cddpm;

namespace {

struct Fixture {
  Dataset data;
  NetworkConfig net;
  TrainConfig cfg;

  Fixture() {
    SynthOptions so;
    so.size = 8;
    so.per_class = 8;
    data = synth_mixture_images(so);
    net.height = net.width = 8;
    net.latent_dim = 3;
    net.widths = {4, 8};
    net.groups = 2;
    net.time_embed_dim = 8;
    net.embed_dim = 8;
    net.encoder_pool = 2;
    cfg.latent_dim = 3;
    cfg.timesteps = 20;
    cfg.batch_size = 8;
    cfg.warmup_epochs = 1;
    cfg.em_rounds = 2;
    cfg.learning_rate = 1e-3;
    cfg.lambda = 0.1;
    cfg.seed = 5;
    cfg.diagnostics = false;
  }
};

std::vector<std::vector<double>> snapshot(const Networks& nets) {
  std::vector<std::vector<double>> out;
  for (std::size_t p = 0; p < nets.params().count(); ++p) out.push_back(nets.params().at(p).value.data);
  return out;
}

bool same_gmm(const GMMParams& a, const GMMParams& b) {
  return a.J == b.J && a.pi == b.pi && a.mu == b.mu && a.sigma2 == b.sigma2;
}

GMMParams separated_gmm() { return GMMParams{2, {0.2, 0.3, 0.5}, {-6, 0, 0, 0, 6, 6}, {1, 1, 0.5, 0.5, 2, 2}}; }

// Matches the fixture's latent size.
GMMParams latent_gmm() {
  return GMMParams{3, {0.3, 0.3, 0.4}, {-1, 0, 0, 0, 1, 0, 1, 0, 1}, {1, 1, 1, 1, 1, 1, 1, 1, 1}};
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto mutate) {
    TrainConfig t;
    mutate(t);
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  };
  bad([](TrainConfig& t) { t.clusters = 0; });
  bad([](TrainConfig& t) { t.lambda = -0.1; });
  bad([](TrainConfig& t) { t.lambda = NAN; });
  bad([](TrainConfig& t) { t.learning_rate = -1; });
  bad([](TrainConfig& t) { t.batch_size = 0; });
  bad([](TrainConfig& t) { t.timesteps = 0; });
  bad([](TrainConfig& t) { t.em_rounds = -1; });
}

TEST_CASE("M-step with zero epochs is a no-op") {
  Fixture f;
  TrainState state(f.net, f.cfg);
  const auto before = snapshot(state.nets);
  const MStepResult r = m_step(f.data.images, nullptr, state, f.cfg, 0.0, 0, 0);
  CHECK(r.records.empty());
  CHECK(snapshot(state.nets) == before);
  CHECK(state.global_step == 0);
  CHECK(state.optimizer.steps() == 0);
}

TEST_CASE("M-step with zero learning rate leaves parameters unchanged") {
  Fixture f;
  f.cfg.learning_rate = 0.0;
  TrainState state(f.net, f.cfg);
  const auto before = snapshot(state.nets);
  const GMMParams g = latent_gmm();
  const MStepResult r = m_step(f.data.images, &g, state, f.cfg, 0.1, 1, 2);
  CHECK(snapshot(state.nets) == before);
  CHECK(r.records.size() == 6);  // 24 samples in batches of 8, two epochs
  CHECK(r.epoch_mean_total.size() == 2);
  for (const auto& rec : r.records) {
    CHECK(std::isfinite(rec.loss.total));
    CHECK(rec.loss.total > 0.0);
    CHECK(rec.em_round == 1);
  }
  CHECK(state.global_step == 6);
}

TEST_CASE("M-step keeps the GMM fixed and updates parameters") {
  Fixture f;
  TrainState state(f.net, f.cfg);
  const GMMParams g = latent_gmm();
  const GMMParams copy = g;
  const auto before = snapshot(state.nets);
  std::vector<nlohmann::ordered_json> log;
  m_step(f.data.images, &g, state, f.cfg, 0.1, 1, 1, [&](const auto& j) { log.push_back(j); });
  CHECK(same_gmm(g, copy));
  CHECK(snapshot(state.nets) != before);
  REQUIRE(log.size() == 3);
  CHECK(log[0]["em_round"] == 1);
  CHECK(log[2]["step"] == 2);
  const double total = log[1]["total"].get<double>();
  const double expect =
      log[1]["recon"].get<double>() + 0.1 * (log[1]["kl_cat"].get<double>() + log[1]["kl_gauss"].get<double>());
  CHECK(std::abs(total - expect) <= 1e-9 * total);
  CHECK_THROWS_AS(m_step(f.data.images, nullptr, state, f.cfg, 0.1, 1, 1), std::invalid_argument);
}

TEST_CASE("training lowers the fixed-draw dataset loss") {
  Fixture f;
  TrainState state(f.net, f.cfg);
  const auto sched = f.cfg.schedule();
  const double before = dataset_loss(f.data.images, state.nets, nullptr, sched, 0.0, 11, f.cfg).total;
  m_step(f.data.images, nullptr, state, f.cfg, 0.0, 0, 10);
  const double after = dataset_loss(f.data.images, state.nets, nullptr, sched, 0.0, 11, f.cfg).total;
  CHECK(after < before);
  CHECK(state.warmup_epochs_done == 10);
}

TEST_CASE("non-finite losses abort training") {
  Fixture f;
  TrainState state(f.net, f.cfg);
  for (double& v : state.nets.params().at(0).value.data) v = NAN;
  std::vector<nlohmann::ordered_json> log;
  CHECK_THROWS_AS(m_step(f.data.images, nullptr, state, f.cfg, 0.0, 0, 1, [&](const auto& j) { log.push_back(j); }),
                  TrainingAborted);
  REQUIRE(log.size() == 1);
  CHECK(log[0]["event"] == "abort");
}

TEST_CASE("E-step does not modify network parameters and is deterministic") {
  Fixture f;
  TrainState state(f.net, f.cfg);
  const auto before = snapshot(state.nets);
  const GMMParams a = e_step(f.data.images, state.nets, f.cfg, nullptr, 1);
  const GMMParams b = e_step(f.data.images, state.nets, f.cfg, nullptr, 1);
  CHECK(snapshot(state.nets) == before);
  CHECK(same_gmm(a, b));
  CHECK(a.K() == 3);
  CHECK(a.J == 3);
  CHECK_NOTHROW(a.validate());
  f.cfg.clusters = 100;
  CHECK_THROWS_AS(e_step(f.data.images, state.nets, f.cfg, nullptr, 1), std::invalid_argument);
}

TEST_CASE("latent extraction") {
  Fixture f;
  TrainState state(f.net, f.cfg);
  const Tensor mean1 = extract_latents(f.data.images, state.nets, LatentSource::kPosteriorMean, 0, 1);
  const Tensor mean3 = extract_latents(f.data.images, state.nets, LatentSource::kPosteriorMean, 9, 3);
  CHECK(mean1.shape == Shape{24, 3});
  CHECK(mean1.data == mean3.data);
  const EncoderOutput e = state.nets.encode(f.data.images.images[4]);
  for (int j = 0; j < 3; ++j) CHECK(mean1[4 * 3 + j] == e.mu[j]);
  const Tensor s1 = extract_latents(f.data.images, state.nets, LatentSource::kSample, 9, 1);
  const Tensor s2 = extract_latents(f.data.images, state.nets, LatentSource::kSample, 9, 2);
  CHECK(s1.data == s2.data);
  CHECK(s1.data != mean1.data);
}

TEST_CASE("GMM fit on fixed latents recovers well separated clusters") {
  // Stands in for an encoder whose outputs are known exactly.
  Rng rng(3);
  const GMMParams truth = separated_gmm();
  Tensor Z({600, 2});
  std::vector<int> labels(600);
  for (int i = 0; i < 600; ++i) {
    labels[i] = i % 3;
    for (int j = 0; j < 2; ++j)
      Z.data[i * 2 + j] = truth.mean(labels[i])[j] + std::sqrt(truth.var(labels[i])[j]) * rng.normal();
  }
  TrainConfig cfg;
  cfg.latent_dim = 2;
  const GMMParams fit = fit_latent_gmm(Z, cfg, nullptr, 17);
  const GMMParams aligned = align_to(fit, truth);
  for (int c = 0; c < 3; ++c)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(aligned.mean(c)[j] - truth.mean(c)[j]) < 0.3);
  const auto assign = assign_all(Z, aligned);
  int hits = 0;
  for (int i = 0; i < 600; ++i) hits += assign[i] == labels[i];
  CHECK(hits >= 590);
  // A warm start at the truth keeps the component order.
  const GMMParams warm = fit_latent_gmm(Z, cfg, &truth, 17);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(warm.mean(c)[0] - truth.mean(c)[0]) < 0.3);
}

TEST_CASE("align_to undoes a permutation") {
  const GMMParams g = separated_gmm();
  GMMParams permuted = g;
  const int perm[3] = {2, 0, 1};
  for (int c = 0; c < 3; ++c) {
    permuted.pi[c] = g.pi[perm[c]];
    for (int j = 0; j < 2; ++j) {
      permuted.mu[c * 2 + j] = g.mean(perm[c])[j];
      permuted.sigma2[c * 2 + j] = g.var(perm[c])[j];
    }
  }
  CHECK(same_gmm(align_to(permuted, g), g));
  CHECK_THROWS_AS(align_to(g, GMMParams{1, {1.0}, {0}, {1}}), std::invalid_argument);
}

TEST_CASE("full training is deterministic") {
  Fixture f;
  std::vector<std::string> events;
  TrainOptions opt;
  opt.log = [&](const nlohmann::ordered_json& j) {
    if (j.contains("event")) events.push_back(j["event"]);
  };
  const TrainResult a = train(f.data.images, f.cfg, f.net, opt);
  const TrainResult b = train(f.data.images, f.cfg, f.net);
  CHECK(snapshot(a.state.nets) == snapshot(b.state.nets));
  CHECK(a.assignments == b.assignments);
  CHECK(same_gmm(*a.state.gmm, *b.state.gmm));
  CHECK(a.latents.data == b.latents.data);
  CHECK(a.state.complete);
  CHECK(a.state.round == 2);
  CHECK(a.state.warmup_epochs_done == 1);
  CHECK(a.state.global_step == 9);
  CHECK(events == std::vector<std::string>{"warmup_done", "round", "round", "done"});

  f.cfg.threads = 3;
  const TrainResult c = train(f.data.images, f.cfg, f.net);
  CHECK(snapshot(c.state.nets) == snapshot(a.state.nets));

  f.cfg.seed = 6;
  const TrainResult d = train(f.data.images, f.cfg, f.net);
  CHECK(snapshot(d.state.nets) != snapshot(a.state.nets));
}

TEST_CASE("training with no EM rounds still fits a final GMM") {
  Fixture f;
  f.cfg.em_rounds = 0;
  const TrainResult r = train(f.data.images, f.cfg, f.net);
  CHECK(r.state.round == 0);
  REQUIRE(r.state.gmm.has_value());
  CHECK(r.state.gmm->K() == 3);
  CHECK(r.assignments.size() == 24);
  CHECK(r.state.complete);

  f.net.latent_dim = 4;
  CHECK_THROWS_AS(train(f.data.images, f.cfg, f.net), std::invalid_argument);
}

TEST_CASE("checkpoint round trip") {
  testing::ScratchDir dir("ckpt");
  Fixture f;
  TrainOptions opt;
  opt.checkpoint_dir = dir.path();
  opt.config_echo = {{"note", "echo"}};
  const TrainResult r = train(f.data.images, f.cfg, f.net, opt);
  const Checkpoint ck = load_checkpoint(dir.path());
  CHECK(snapshot(ck.state.nets) == snapshot(r.state.nets));
  CHECK(ck.network == r.state.nets.config());
  CHECK(ck.train.lambda == f.cfg.lambda);
  CHECK(ck.train.seed == f.cfg.seed);
  CHECK(ck.config_echo["note"] == "echo");
  CHECK(ck.state.complete);
  CHECK(ck.state.round == 2);
  CHECK(ck.state.global_step == r.state.global_step);
  CHECK(ck.state.optimizer.steps() == r.state.optimizer.steps());
  for (std::size_t p = 0; p < r.state.nets.params().count(); ++p) {
    CHECK(ck.state.optimizer.first_moment()[p].data == r.state.optimizer.first_moment()[p].data);
    CHECK(ck.state.optimizer.second_moment()[p].data == r.state.optimizer.second_moment()[p].data);
  }
  REQUIRE(ck.state.gmm.has_value());
  CHECK(same_gmm(*ck.state.gmm, *r.state.gmm));
  CHECK_FALSE(std::filesystem::exists(dir / "manifest.json.tmp"));

  SUBCASE("missing directory") { CHECK_THROWS(load_checkpoint(dir / "nope")); }
  SUBCASE("truncated parameters") {
    std::filesystem::resize_file(dir / "params.bin", 16);
    CHECK_THROWS(load_checkpoint(dir.path()));
  }
  SUBCASE("wrong format tag") {
    std::ofstream(dir / "manifest.json") << R"({"format": "something-else"})";
    CHECK_THROWS(load_checkpoint(dir.path()));
  }
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  testing::ScratchDir dir("resume");
  Fixture f;
  f.cfg.em_rounds = 3;
  const TrainResult full = train(f.data.images, f.cfg, f.net);

  // Interrupt during round 2, after round 1's checkpoint was written.
  TrainOptions opt;
  opt.checkpoint_dir = dir.path();
  opt.log = [](const nlohmann::ordered_json& j) {
    if (j.contains("event") && j["event"] == "round" && j["em_round"] == 2) throw std::runtime_error("interrupted");
  };
  CHECK_THROWS_WITH(train(f.data.images, f.cfg, f.net, opt), "interrupted");
  Checkpoint ck = load_checkpoint(dir.path());
  CHECK(ck.state.round == 1);
  CHECK_FALSE(ck.state.complete);
  const TrainResult resumed = train(f.data.images, f.cfg, f.net, {}, std::move(ck.state));
  CHECK(snapshot(resumed.state.nets) == snapshot(full.state.nets));
  CHECK(resumed.assignments == full.assignments);
  CHECK(resumed.state.global_step == full.state.global_step);
}

TEST_CASE("resuming during warm-up matches an uninterrupted run") {
  testing::ScratchDir dir("resume_warmup");
  Fixture f;
  f.cfg.warmup_epochs = 3;
  f.cfg.em_rounds = 1;
  const TrainResult full = train(f.data.images, f.cfg, f.net);
  TrainState partial(f.net, f.cfg);
  m_step(f.data.images, nullptr, partial, f.cfg, 0.0, 0, 2);
  save_checkpoint(dir.path(), partial, f.cfg, f.net);
  Checkpoint ck = load_checkpoint(dir.path());
  CHECK(ck.state.warmup_epochs_done == 2);
  CHECK_FALSE(ck.state.gmm.has_value());
  const TrainResult resumed = train(f.data.images, f.cfg, f.net, {}, std::move(ck.state));
  CHECK(snapshot(resumed.state.nets) == snapshot(full.state.nets));
}

TEST_CASE("loss records serialize") {
  const LossRecord r{2, 1, 3, LossBreakdown{1.5, 0.25, 0.5, 0.5, 1.875}};
  const auto j = to_json(r);
  CHECK(j["em_round"] == 2);
  CHECK(j["epoch"] == 1);
  CHECK(j["step"] == 3);
  CHECK(j.contains("recon"));
  CHECK(j.contains("kl_cat"));
  CHECK(j.contains("kl_gauss"));
  CHECK(j["lambda"] == 0.5);
  CHECK(j.contains("total"));
}
