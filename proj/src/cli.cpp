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

#include "cddpm/cli.hpp"

#include <unistd.h>

#include <CLI11.hpp>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "cddpm/checkpoint.hpp"
#include "cddpm/config.hpp"
#include "cddpm/evaluation.hpp"
#include "cddpm/parallel.hpp"
#include "cddpm/simd.hpp"
#include "cddpm/tsne.hpp"

namespace cddpm {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Flags {
  std::string config;
  std::string dataset;
  std::size_t limit = 0;
  double lambda = 0.0;
  int latent_dim = 0;
  int timesteps = 0;
  int em_rounds = 0;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string checkpoint;
  std::vector<int> k;
  int per_cluster = 8;
  std::size_t threads = 0;
  bool resume = false;
  std::string embeddings;
  std::string output;
  double perplexity = 30.0;
  int tsne_iterations = 1000;

  // Options actually given on the command line.
  std::set<std::string> given;
  bool has(const std::string& name) const { return given.count(name) > 0; }
};

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Holds <dir>/LOCK for the lifetime of one command.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir, bool create = false) : path_(dir / "LOCK") {
    if (create) fs::create_directories(dir);
    if (!fs::is_directory(dir)) throw std::runtime_error("checkpoint directory not found: " + dir.string());
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw std::runtime_error("checkpoint directory is locked: " + path_.string() +
                               " exists (another command is running, or remove it after a crash)");
    std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_stamp(const fs::path& dir, const std::string& command, const std::optional<fs::path>& checkpoint) {
  fs::create_directories(dir);
  ojson run{{"format", kRunFormat}, {"command", command}, {"checkpoint_format", kCheckpointFormat}};
  if (checkpoint) run["checkpoint"] = checkpoint->string();
  write_text(dir / "run.json", run.dump(2) + "\n");
}

// Resolved config echo and the format stamp, written to every run directory.
void write_run_files(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                     const std::optional<fs::path>& checkpoint = std::nullopt) {
  write_stamp(dir, command, checkpoint);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
}

void apply_overrides(RunConfig& cfg, const Flags& f) {
  if (f.has("dataset")) cfg.dataset.name = f.dataset;
  if (f.has("limit")) cfg.dataset.limit = f.limit;
  if (f.has("lambda")) cfg.train.lambda = f.lambda;
  if (f.has("latent-dim")) cfg.train.latent_dim = f.latent_dim;
  if (f.has("timesteps")) cfg.train.timesteps = f.timesteps;
  if (f.has("em-rounds")) cfg.train.em_rounds = f.em_rounds;
  if (f.has("seed")) cfg.train.seed = f.seed;
  if (f.has("output-dir")) cfg.output_dir = f.output_dir;
  if (f.has("k")) cfg.knn_k = f.k;
  if (f.has("threads")) cfg.train.threads = f.threads;
}

std::size_t threads_of(const RunConfig& cfg) { return cfg.train.threads == 0 ? default_threads() : cfg.train.threads; }

Dataset load_for(RunConfig& cfg) {
  Dataset data = load_run_dataset(cfg.dataset);
  cfg.network.channels = data.images.shape.at(0);
  cfg.network.height = data.images.shape.at(1);
  cfg.network.width = data.images.shape.at(2);
  return data;
}

struct Loaded {
  Checkpoint ck;
  RunConfig cfg;
};

Loaded open_checkpoint(const Flags& f) {
  if (!f.has("checkpoint")) throw ConfigError("--checkpoint is required");
  Checkpoint ck = load_checkpoint(f.checkpoint);
  RunConfig cfg = ck.config_echo.is_object() ? run_config_from_json(ck.config_echo) : RunConfig{};
  cfg.train = ck.train;
  cfg.network = ck.network;
  if (!f.has("output-dir")) cfg.output_dir.clear();
  apply_overrides(cfg, f);
  if (!ck.state.gmm) throw std::runtime_error("checkpoint " + f.checkpoint + " has no mixture prior yet");
  return {std::move(ck), std::move(cfg)};
}

fs::path command_dir(const RunConfig& cfg, const Flags& f, const std::string& command) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  return fs::path(f.checkpoint).parent_path() / command;
}

Dataset load_matching(RunConfig& cfg, const Checkpoint& ck) {
  Dataset data = load_run_dataset(cfg.dataset);
  if (data.images.shape != ck.network.image_shape())
    throw ConfigError("dataset image shape " + shape_str(data.images.shape) + " does not match checkpoint shape " +
                      shape_str(ck.network.image_shape()));
  return data;
}

Tensor flatten_images(const ImageSet& set) {
  const int D = static_cast<int>(shape_size(set.shape));
  Tensor X({static_cast<int>(set.size()), D});
  for (std::size_t i = 0; i < set.size(); ++i)
    std::copy(set.images[i].data.begin(), set.images[i].data.end(), X.ptr() + i * D);
  return X;
}

void write_assignments_csv(const fs::path& path, const std::vector<int>& clusters) {
  std::ostringstream os;
  os << "index,cluster\n";
  for (std::size_t i = 0; i < clusters.size(); ++i) os << i << ',' << clusters[i] << '\n';
  write_text(path, os.str());
}

void write_embeddings_csv(const fs::path& path, const Tensor& Z, const std::vector<int>& clusters,
                          const std::vector<int>& labels) {
  const int J = Z.dim(1);
  std::ostringstream os;
  os << "index,cluster,label";
  for (int j = 0; j < J; ++j) os << ",z" << j;
  os << '\n';
  for (int i = 0; i < Z.dim(0); ++i) {
    os << i << ',' << clusters[i] << ',';
    if (!labels.empty()) os << labels[i];
    for (int j = 0; j < J; ++j) os << ',' << num(Z.data[static_cast<std::size_t>(i) * J + j]);
    os << '\n';
  }
  write_text(path, os.str());
}

struct Embeddings {
  Tensor Z;
  std::vector<int> clusters;
  std::vector<int> labels;  // empty when any row is unlabeled
};

Embeddings read_embeddings_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("index,cluster,label", 0) != 0)
    throw std::runtime_error(path.string() + ": missing 'index,cluster,label,z0,...' header");
  const int J = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 2;
  if (J < 1) throw std::runtime_error(path.string() + ": no latent columns");
  Embeddings e;
  std::vector<double> values;
  bool all_labeled = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (static_cast<int>(cells.size()) != J + 3)
      throw std::runtime_error(path.string() + ": row " + std::to_string(e.clusters.size() + 1) + " has " +
                               std::to_string(cells.size()) + " columns, expected " + std::to_string(J + 3));
    try {
      e.clusters.push_back(std::stoi(cells[1]));
      if (cells[2].empty()) {
        all_labeled = false;
        e.labels.push_back(-1);
      } else {
        e.labels.push_back(std::stoi(cells[2]));
      }
      for (int j = 0; j < J; ++j) values.push_back(std::stod(cells[3 + j]));
    } catch (const std::logic_error&) {
      throw std::runtime_error(path.string() + ": malformed row " + std::to_string(e.clusters.size() + 1));
    }
  }
  if (!all_labeled) e.labels.clear();
  e.Z = Tensor({static_cast<int>(e.clusters.size()), J}, std::move(values));
  return e;
}

// Misclustered mask under the optimal cluster-to-class matching.
std::vector<bool> misclustered(const std::vector<int>& clusters, const std::vector<int>& labels) {
  std::vector<bool> mask(clusters.size(), false);
  if (labels.empty()) return mask;
  const MetricReport r = evaluate_clustering(clusters, labels);
  for (std::size_t i = 0; i < clusters.size(); ++i) mask[i] = r.matching[clusters[i]] != labels[i];
  return mask;
}

int cmd_train(const Flags& f, std::ostream& out) {
  RunConfig cfg = f.has("config") ? load_run_config(f.config) : RunConfig{};
  apply_overrides(cfg, f);
  Dataset data = load_for(cfg);
  cfg.resolve();
  const fs::path dir = cfg.output_dir;
  const fs::path ckdir = dir / "checkpoint";
  DirLock lock(ckdir, true);
  write_run_files(dir, "train", cfg, ckdir);

  std::optional<TrainState> resume;
  if (f.resume && fs::exists(ckdir / "manifest.json")) {
    Checkpoint ck = load_checkpoint(ckdir);
    ck.train.threads = cfg.train.threads;
    if (to_json(ck.train) != to_json(cfg.train) || !(ck.network == cfg.network))
      throw ConfigError("--resume: checkpoint in " + ckdir.string() + " was written with a different configuration");
    resume = std::move(ck.state);
    out << "resuming after EM round " << resume->round << '\n';
  }

  std::ofstream log(dir / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + (dir / "train_log.jsonl").string());
  TrainOptions opts;
  opts.checkpoint_dir = ckdir;
  opts.config_echo = to_json(cfg);
  opts.log = [&log](const ojson& j) { log << j.dump() << '\n' << std::flush; };

  const TrainResult result = train(data.images, cfg.train, cfg.network, opts, std::move(resume));
  write_assignments_csv(dir / "assignments.csv", result.assignments);
  out << "trained " << data.size() << " images, " << result.state.round << " EM rounds, " << result.state.global_step
      << " steps\n";
  if (data.labeled()) {
    const MetricReport report = evaluate_clustering(result.assignments, data.labels);
    write_text(dir / "metrics.json", to_json(report).dump(2) + "\n");
    out << "ACC " << num(report.acc) << " NMI " << num(report.nmi) << '\n';
  }
  out << "outputs in " << dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out, std::ostream& err) {
  DirLock lock(f.checkpoint);
  auto [ck, cfg] = open_checkpoint(f);
  Dataset data = load_matching(cfg, ck);
  if (!data.labeled()) throw ConfigError("eval needs a labeled dataset");
  const fs::path dir = command_dir(cfg, f, "eval");
  write_run_files(dir, "eval", cfg, fs::path(f.checkpoint));

  const Tensor Z = extract_latents(data.images, ck.state.nets, LatentSource::kPosteriorMean, 0, threads_of(cfg));
  const std::vector<int> pred = assign_all(Z, *ck.state.gmm);
  const MetricReport report = evaluate_clustering(pred, data.labels);
  write_text(dir / "metrics.json", to_json(report).dump(2) + "\n");
  out << "ACC " << num(report.acc) << " NMI " << num(report.nmi) << '\n';

  // kNN probe on the source's own train/test split when present, otherwise
  // every fifth sample is held out.
  const Tensor X = flatten_images(data.images);
  const bool canonical = data.test_begin > 0 && data.test_begin < data.size();
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    ((canonical ? i >= data.test_begin : i % 5 == 4) ? test_idx : train_idx).push_back(i);
  out << "kNN split: " << (canonical ? "canonical" : "every fifth sample held out") << ", " << train_idx.size()
      << " train / " << test_idx.size() << " test\n";
  auto take = [](const Tensor& M, const std::vector<std::size_t>& idx) {
    const int D = M.dim(1);
    Tensor S({static_cast<int>(idx.size()), D});
    for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(M.ptr() + idx[r] * D, D, S.ptr() + r * D);
    return S;
  };
  auto labels_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<int> l;
    for (std::size_t i : idx) l.push_back(data.labels[i]);
    return l;
  };
  std::vector<int> ks;
  for (int k : cfg.knn_k) {
    if (static_cast<std::size_t>(k) <= train_idx.size()) {
      ks.push_back(k);
    } else {
      err << "skipping k=" << k << ": only " << train_idx.size() << " training points\n";
    }
  }
  std::ostringstream csv;
  csv << "k,latent_accuracy,pixel_accuracy\n";
  if (!ks.empty() && !test_idx.empty()) {
    const auto train_l = labels_of(train_idx), test_l = labels_of(test_idx);
    const auto latent = knn_probe(take(Z, train_idx), train_l, take(Z, test_idx), test_l, ks);
    const auto pixel = knn_probe(take(X, train_idx), train_l, take(X, test_idx), test_l, ks);
    for (std::size_t i = 0; i < ks.size(); ++i)
      csv << ks[i] << ',' << num(latent[i].accuracy) << ',' << num(pixel[i].accuracy) << '\n';
  }
  write_text(dir / "knn.csv", csv.str());
  out << "outputs in " << dir.string() << '\n';
  return kExitOk;
}

int cmd_generate(const Flags& f, std::ostream& out) {
  DirLock lock(f.checkpoint);
  auto [ck, cfg] = open_checkpoint(f);
  if (f.per_cluster < 1) throw ConfigError("--per-cluster must be >= 1");
  const std::uint64_t seed = f.has("seed") ? f.seed : 0;
  const fs::path dir = command_dir(cfg, f, "generate");
  write_run_files(dir, "generate", cfg, fs::path(f.checkpoint));

  const GMMParams& gmm = *ck.state.gmm;
  const int K = gmm.K();
  std::vector<int> clusters;
  for (int c = 0; c < K; ++c) clusters.insert(clusters.end(), f.per_cluster, c);
  Rng rng(seed);
  const GeneratedBatch batch =
      generate(static_cast<int>(clusters.size()), GenerationCondition::from_clusters(gmm, clusters),
               ck.state.nets.predictor(), ck.network.image_shape(), ck.train.schedule(), rng);

  // Self-consistency: the encoder should put each image back in its cluster.
  ImageSet generated{"generated", "all", ck.network.image_shape(), batch.images};
  const Tensor Z = extract_latents(generated, ck.state.nets, LatentSource::kPosteriorMean, 0, threads_of(cfg));
  const std::vector<int> back = assign_all(Z, gmm);
  std::vector<double> per_cluster(K, 0.0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (back[i] == clusters[i]) {
      ++hits;
      per_cluster[clusters[i]] += 1.0 / f.per_cluster;
    }
  }
  for (int c = 0; c < K; ++c) {
    std::vector<Tensor> row(batch.images.begin() + static_cast<long>(c) * f.per_cluster,
                            batch.images.begin() + static_cast<long>(c + 1) * f.per_cluster);
    write_png(dir / ("cluster_" + std::to_string(c) + ".png"), image_grid(row, f.per_cluster));
  }
  write_png(dir / "clusters.png", image_grid(batch.images, f.per_cluster));
  const double overall = static_cast<double>(hits) / static_cast<double>(clusters.size());
  ojson record{{"seed", seed},
               {"clusters", K},
               {"per_cluster", f.per_cluster},
               {"self_consistency", overall},
               {"self_consistency_per_cluster", per_cluster},
               {"reassigned", back}};
  write_text(dir / "generation.json", record.dump(2) + "\n");
  out << "generated " << clusters.size() << " images, self-consistency " << num(overall) << '\n';
  out << "outputs in " << dir.string() << '\n';
  return kExitOk;
}

int cmd_embed(const Flags& f, std::ostream& out) {
  DirLock lock(f.checkpoint);
  auto [ck, cfg] = open_checkpoint(f);
  Dataset data = load_matching(cfg, ck);
  const fs::path dir = command_dir(cfg, f, "embed");
  write_run_files(dir, "embed", cfg, fs::path(f.checkpoint));
  const Tensor Z = extract_latents(data.images, ck.state.nets, LatentSource::kPosteriorMean, 0, threads_of(cfg));
  const std::vector<int> clusters = assign_all(Z, *ck.state.gmm);
  const fs::path path = f.has("output") ? fs::path(f.output) : dir / "embeddings.csv";
  write_embeddings_csv(path, Z, clusters, data.labels);
  out << "wrote " << data.size() << " rows to " << path.string() << '\n';
  return kExitOk;
}

int cmd_visualize(const Flags& f, std::ostream& out) {
  Embeddings e;
  fs::path dir;
  if (f.has("embeddings")) {
    e = read_embeddings_csv(f.embeddings);
    dir = f.has("output-dir") ? fs::path(f.output_dir) : fs::path(f.embeddings).parent_path();
    if (dir.empty()) dir = ".";
    write_stamp(dir, "visualize", std::nullopt);
  } else {
    if (!f.has("checkpoint")) throw ConfigError("visualize needs --embeddings or --checkpoint");
    DirLock lock(f.checkpoint);
    auto [ck, cfg] = open_checkpoint(f);
    Dataset data = load_matching(cfg, ck);
    dir = command_dir(cfg, f, "visualize");
    write_run_files(dir, "visualize", cfg, fs::path(f.checkpoint));
    e.Z = extract_latents(data.images, ck.state.nets, LatentSource::kPosteriorMean, 0, threads_of(cfg));
    e.clusters = assign_all(e.Z, *ck.state.gmm);
    e.labels = data.labels;
  }
  fs::create_directories(dir);
  const fs::path png = f.has("output") ? fs::path(f.output) : dir / "tsne.png";
  const std::size_t n = e.clusters.size();
  if (n < 2) throw ConfigError("visualize needs at least 2 points");
  TsneOptions opts;
  opts.seed = f.has("seed") ? f.seed : 0;
  opts.iterations = f.tsne_iterations;
  // Perplexity above (N - 1) / 3 cannot be met; shrink it for small inputs.
  opts.perplexity = std::min(f.perplexity, std::max(1.0, (static_cast<double>(n) - 1.0) / 3.0));
  const std::vector<bool> mask = misclustered(e.clusters, e.labels);
  const std::vector<int>& colors = e.labels.empty() ? e.clusters : e.labels;
  const PlotRecord rec = tsne_plot(e.Z, colors, mask, png, opts);
  out << "wrote " << png.string() << " (" << rec.highlighted() << " misclustered points highlighted)\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clustering with conditional diffusion models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kRunFormat);
  Flags f;

  auto track = [&f](CLI::Option* o, const std::string& name) {
    o->each([&f, name](const std::string&) { f.given.insert(name); });
    return o;
  };
  auto add_common = [&](CLI::App* sub) {
    track(sub->add_option("--threads", f.threads, "Worker threads (0 = all cores); results do not depend on it"),
          "threads");
  };
  auto add_dataset = [&](CLI::App* sub) {
    track(sub->add_option("--dataset", f.dataset, "synth, mnist, fashion-mnist, cifar10, coil20, or a manifest dir"),
          "dataset");
    track(sub->add_option("--limit", f.limit, "Keep the first N records"), "limit");
  };
  auto add_output_dir = [&](CLI::App* sub) {
    track(sub->add_option("--output-dir", f.output_dir, "Run directory"), "output-dir");
  };
  auto add_checkpoint = [&](CLI::App* sub, bool required) {
    auto* o = track(sub->add_option("--checkpoint", f.checkpoint, "Checkpoint directory"), "checkpoint");
    if (required) o->required();
  };

  CLI::App* train = app.add_subcommand("train", "Warm-up, EM training and final clustering");
  track(train->add_option("--config", f.config, "Run configuration (JSON)")->check(CLI::ExistingFile), "config");
  add_dataset(train);
  track(train->add_option("--lambda", f.lambda, "Prior-matching weight"), "lambda");
  track(train->add_option("--latent-dim", f.latent_dim, "Latent dimensionality"), "latent-dim");
  track(train->add_option("--timesteps", f.timesteps, "Diffusion steps"), "timesteps");
  track(train->add_option("--em-rounds", f.em_rounds, "EM rounds after warm-up"), "em-rounds");
  track(train->add_option("--seed", f.seed, "Seed for initialization and all draws"), "seed");
  add_output_dir(train);
  train->add_flag("--resume", f.resume, "Continue from the checkpoint in the run directory");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "Clustering metrics and the kNN probe");
  add_checkpoint(eval, true);
  add_dataset(eval);
  track(eval->add_option("--k", f.k, "kNN neighbour counts")->delimiter(','), "k");
  add_output_dir(eval);
  add_common(eval);

  CLI::App* gen = app.add_subcommand("generate", "Cluster-conditional samples");
  add_checkpoint(gen, true);
  track(gen->add_option("--per-cluster", f.per_cluster, "Images per cluster"), "per-cluster");
  track(gen->add_option("--seed", f.seed, "Sampling seed"), "seed");
  add_output_dir(gen);
  add_common(gen);

  CLI::App* embed = app.add_subcommand("embed", "Write latents and assignments as CSV");
  add_checkpoint(embed, true);
  add_dataset(embed);
  track(embed->add_option("--output", f.output, "CSV path (default <output-dir>/embeddings.csv)"), "output");
  add_output_dir(embed);
  add_common(embed);

  CLI::App* vis = app.add_subcommand("visualize", "t-SNE plot with misclustered points in red");
  auto* emb_opt = track(vis->add_option("--embeddings", f.embeddings, "CSV written by embed")->check(CLI::ExistingFile),
                        "embeddings");
  add_checkpoint(vis, false);
  add_dataset(vis);
  track(vis->add_option("--output", f.output, "PNG path (default <output-dir>/tsne.png)"), "output");
  track(vis->add_option("--seed", f.seed, "t-SNE seed"), "seed");
  track(vis->add_option("--perplexity", f.perplexity, "t-SNE perplexity"), "perplexity");
  track(vis->add_option("--tsne-iterations", f.tsne_iterations, "t-SNE iterations"), "tsne-iterations");
  add_output_dir(vis);
  add_common(vis);
  emb_opt->excludes("--checkpoint");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kRunFormat << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front())
      err << "run '" << sub->get_name() << " --help' for usage\n";
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "train") return cmd_train(f, out);
    if (command == "eval") return cmd_eval(f, out, err);
    if (command == "generate") return cmd_generate(f, out);
    if (command == "embed") return cmd_embed(f, out);
    return cmd_visualize(f, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace cddpm
