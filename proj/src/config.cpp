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

#include "cddpm/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace cddpm {
namespace {

using json = nlohmann::json;
using Setter = std::function<void(const json&)>;

// Applies one setter per key; any key without a setter is an error.
void apply(const json& j, const std::string& where, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    }
  }
}

template <class T>
Setter set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

std::string latent_source_name(LatentSource s) { return s == LatentSource::kSample ? "sample" : "mean"; }

LatentSource parse_latent_source(const std::string& s) {
  if (s == "mean") return LatentSource::kPosteriorMean;
  if (s == "sample") return LatentSource::kSample;
  throw ConfigError("train.estep_latents: expected 'mean' or 'sample', got '" + s + "'");
}

SynthOptions synth_from_json(const json& j, SynthOptions s) {
  apply(j, "dataset.synth",
        {{"classes", set(s.classes)},
         {"per_class", set(s.per_class)},
         {"size", set(s.size)},
         {"seed", set(s.seed)},
         {"pixel_noise", set(s.pixel_noise)},
         {"position_jitter", set(s.position_jitter)},
         {"amplitude_jitter", set(s.amplitude_jitter)}});
  return s;
}

DatasetSpec dataset_from_json(const json& j, DatasetSpec d) {
  apply(j, "dataset",
        {{"name", set(d.name)},
         {"split", set(d.split)},
         {"limit", set(d.limit)},
         {"classes", set(d.classes)},
         {"downscale", set(d.downscale)},
         {"root", set(d.root)},
         {"synth", [&](const json& v) { d.synth = synth_from_json(v, d.synth); }}});
  return d;
}

}  // namespace

nlohmann::ordered_json to_json(const NetworkConfig& c) {
  return {{"channels", c.channels},
          {"height", c.height},
          {"width", c.width},
          {"latent_dim", c.latent_dim},
          {"widths", c.widths},
          {"groups", c.groups},
          {"time_embed_dim", c.time_embed_dim},
          {"embed_dim", c.embed_dim},
          {"encoder_pool", c.encoder_pool},
          {"seed", c.seed}};
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"clusters", c.clusters},
          {"latent_dim", c.latent_dim},
          {"timesteps", c.timesteps},
          {"beta_start", c.beta_start},
          {"beta_end", c.beta_end},
          {"lambda", c.lambda},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"mstep_epochs", c.mstep_epochs},
          {"em_rounds", c.em_rounds},
          {"warmup_epochs", c.warmup_epochs},
          {"gmm", {{"max_iters", c.gmm.max_iters}, {"tol", c.gmm.tol}, {"restarts", c.gmm.restarts}}},
          {"gmm_warm_start", c.gmm_warm_start},
          {"estep_latents", latent_source_name(c.estep_latents)},
          {"grad_through_w", c.grad_through_w},
          {"seed", c.seed},
          {"threads", c.threads},
          {"checkpoint_every", c.checkpoint_every},
          {"diagnostics", c.diagnostics}};
}

nlohmann::ordered_json to_json(const DatasetSpec& d) {
  nlohmann::ordered_json j{{"name", d.name},       {"split", d.split},         {"limit", d.limit},
                           {"classes", d.classes}, {"downscale", d.downscale}, {"root", d.root}};
  j["synth"] = {{"classes", d.synth.classes},
                {"per_class", d.synth.per_class},
                {"size", d.synth.size},
                {"seed", d.synth.seed},
                {"pixel_noise", d.synth.pixel_noise},
                {"position_jitter", d.synth.position_jitter},
                {"amplitude_jitter", d.synth.amplitude_jitter}};
  return j;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json net = to_json(c.network);
  net.erase("latent_dim");
  net.erase("seed");
  return {{"dataset", to_json(c.dataset)},
          {"network", net},
          {"train", to_json(c.train)},
          {"output_dir", c.output_dir},
          {"knn_k", c.knn_k}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j, NetworkConfig c) {
  apply(j, "network",
        {{"channels", set(c.channels)},
         {"height", set(c.height)},
         {"width", set(c.width)},
         {"latent_dim", set(c.latent_dim)},
         {"widths", set(c.widths)},
         {"groups", set(c.groups)},
         {"time_embed_dim", set(c.time_embed_dim)},
         {"embed_dim", set(c.embed_dim)},
         {"encoder_pool", set(c.encoder_pool)},
         {"seed", set(c.seed)}});
  return c;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  apply(j, "train",
        {{"clusters", set(c.clusters)},
         {"latent_dim", set(c.latent_dim)},
         {"timesteps", set(c.timesteps)},
         {"beta_start", set(c.beta_start)},
         {"beta_end", set(c.beta_end)},
         {"lambda", set(c.lambda)},
         {"learning_rate", set(c.learning_rate)},
         {"batch_size", set(c.batch_size)},
         {"mstep_epochs", set(c.mstep_epochs)},
         {"em_rounds", set(c.em_rounds)},
         {"warmup_epochs", set(c.warmup_epochs)},
         {"gmm",
          [&](const json& v) {
            apply(v, "train.gmm",
                  {{"max_iters", set(c.gmm.max_iters)}, {"tol", set(c.gmm.tol)}, {"restarts", set(c.gmm.restarts)}});
          }},
         {"gmm_warm_start", set(c.gmm_warm_start)},
         {"estep_latents", [&](const json& v) { c.estep_latents = parse_latent_source(v.get<std::string>()); }},
         {"grad_through_w", set(c.grad_through_w)},
         {"seed", set(c.seed)},
         {"threads", set(c.threads)},
         {"checkpoint_every", set(c.checkpoint_every)},
         {"diagnostics", set(c.diagnostics)}});
  return c;
}

void RunConfig::resolve() {
  network.latent_dim = train.latent_dim;
  network.seed = train.seed;
  if (dataset.name == "synth") {
    network.channels = 1;
    network.height = network.width = dataset.synth.size;
    if (dataset.synth.classes < 2) throw ConfigError("dataset.synth.classes must be >= 2");
  }
  if (dataset.downscale < 1) throw ConfigError("dataset.downscale must be >= 1");
  for (int k : knn_k)
    if (k < 1) throw ConfigError("knn_k entries must be >= 1");
  try {
    train.validate();
    network.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  apply(j, "config",
        {{"dataset", [&](const json& v) { c.dataset = dataset_from_json(v, c.dataset); }},
         {"network",
          [&](const json& v) {
            for (const char* k : {"latent_dim", "seed"})
              if (v.is_object() && v.contains(k))
                throw ConfigError(std::string("network.") + k + ": set train." + k + " instead");
            c.network = network_config_from_json(v, c.network);
          }},
         {"train", [&](const json& v) { c.train = train_config_from_json(v, c.train); }},
         {"output_dir", set(c.output_dir)},
         {"knn_k", set(c.knn_k)}});
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

Dataset load_run_dataset(const DatasetSpec& spec) {
  Dataset d;
  if (spec.name == "synth") {
    d = synth_mixture_images(spec.synth);
  } else {
    LoadOptions opts;
    opts.split = spec.split;
    opts.limit = spec.classes.empty() ? spec.limit : 0;
    opts.downscale = spec.downscale;
    opts.root = spec.root;
    d = load_dataset(spec.name, opts);
  }
  if (!spec.classes.empty()) d = select_classes(std::move(d), spec.classes);
  truncate(d, spec.limit);
  return d;
}

}  // namespace cddpm
