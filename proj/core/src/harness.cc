/*
 * Copyright 2026 The FedCBO Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fedcbo/harness.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "fedcbo/consensus.h"
#include "fedcbo/rng.h"

#ifndef FEDCBO_VERSION
#define FEDCBO_VERSION "dev"
#endif

namespace fedcbo {

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error("invalid configuration: " + join(violations, "; ")),
      violations_(std::move(violations)) {}

const char* code_version() { return FEDCBO_VERSION; }

std::string ProblemSpec::dataset_id() const {
  return is_learner() ? kind.substr(8) : std::string();
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.problem.kind = "learner:synthetic";
  c.problem.data = DataSpec{};
  c.problem.arch = Architecture{c.problem.data.feature_dim, 16, c.problem.data.classes,
                                Activation::kRelu};
  c.hp.lambda1 = 10.0;
  c.hp.lambda2 = 1.0;
  c.hp.alpha = 10.0;
  c.hp.gamma = 0.1;
  c.hp.local_steps = 5;
  c.hp.downloads = 10;
  c.hp.momentum = 0.9;
  c.rounds = 30;
  return c;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

class SectionReader {
 public:
  SectionReader(const nlohmann::json& doc, std::string name,
                std::vector<std::string>& errors)
      : name_(std::move(name)), errors_(errors) {
    if (!doc.contains(name_)) {
      section_ = nlohmann::json::object();
    } else if (!doc.at(name_).is_object()) {
      errors_.push_back("[" + name_ + "] must be an object");
      section_ = nlohmann::json::object();
    } else {
      section_ = doc.at(name_);
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!section_.contains(key)) return;
    try {
      out = section_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(name_ + "." + key + ": wrong type");
    }
  }

  const nlohmann::json& raw() const { return section_; }

  void expect(bool ok, const std::string& key, const std::string& message) {
    if (!ok) errors_.push_back(name_ + "." + key + ": " + message);
  }

  void reject_unknown() {
    for (const auto& [key, value] : section_.items()) {
      if (!seen_.count(key)) errors_.push_back(name_ + "." + key + ": unknown key");
    }
  }

 private:
  std::string name_;
  std::vector<std::string>& errors_;
  nlohmann::json section_;
  std::set<std::string> seen_;
};

Activation parse_activation(const std::string& s, std::vector<std::string>& errors) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  errors.push_back("problem.activation: expected relu or tanh");
  return Activation::kRelu;
}

const char* activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

bool known_protocol(const std::string& p) {
  return p == "fedcbo" || p == "fedavg" || p == "ifca" || p == "local";
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& doc) {
  std::vector<std::string> errors;
  ExperimentConfig c = default_config();
  if (!doc.is_object()) throw ConfigError({"config root must be an object"});
  for (const auto& [key, value] : doc.items()) {
    if (key != "problem" && key != "hyperparams" && key != "schedule" && key != "output") {
      errors.push_back(key + ": unknown section");
    }
  }

  {
    SectionReader r(doc, "problem", errors);
    ProblemSpec& p = c.problem;
    r.read("kind", p.kind);
    r.read("clusters", p.clusters);
    r.read("dim", p.dim);
    r.read("offset", p.offset);
    r.read("scale", p.scale);
    r.read("grad_bound", p.grad_bound);
    r.read("agents", p.agents);
    r.read("samples_per_agent", p.data.samples_per_agent);
    r.read("feature_dim", p.data.feature_dim);
    r.read("classes", p.data.classes);
    r.read("test_per_cluster", p.data.test_per_cluster);
    r.read("class_radius", p.data.class_radius);
    r.read("noise", p.data.noise);
    r.read("allow_unequal_clusters", p.data.allow_unequal_clusters);
    r.read("hidden", p.arch.hidden);
    std::string act = activation_name(p.arch.activation);
    r.read("activation", act);
    p.arch.activation = parse_activation(act, errors);
    r.reject_unknown();

    p.data.clusters = p.clusters;
    p.data.agents = p.agents;
    p.arch.inputs = p.data.feature_dim;
    p.arch.classes = p.data.classes;

    const bool analytic = p.kind == "quadratic" || p.kind == "rastrigin";
    r.expect(analytic || (p.is_learner() && !p.dataset_id().empty()), "kind",
             "expected quadratic, rastrigin or learner:<dataset-id>");
    r.expect(p.clusters >= 1, "clusters", "must be >= 1");
    r.expect(p.dim >= 1, "dim", "must be >= 1");
    r.expect(p.clusters <= 2 || p.dim >= 2 || !analytic, "dim", "K > 2 wells need dim >= 2");
    r.expect(p.scale > 0, "scale", "must be > 0");
    r.expect(p.grad_bound > 0, "grad_bound", "must be > 0");
    r.expect(p.agents >= 2, "agents", "must be >= 2");
    r.expect(p.agents >= p.clusters, "agents", "must be >= clusters");
    r.expect(p.data.allow_unequal_clusters || p.clusters < 1 || p.agents % p.clusters == 0,
             "agents", "must be divisible by clusters");
    r.expect(p.data.samples_per_agent >= 1, "samples_per_agent", "must be >= 1");
    r.expect(p.data.feature_dim >= 1, "feature_dim", "must be >= 1");
    r.expect(p.data.classes >= 2, "classes", "must be >= 2");
    r.expect(p.data.test_per_cluster >= 1, "test_per_cluster", "must be >= 1");
    r.expect(p.data.noise >= 0, "noise", "must be >= 0");
    r.expect(p.arch.hidden >= 0, "hidden", "must be >= 0");
  }
  {
    SectionReader r(doc, "hyperparams", errors);
    HyperParams& h = c.hp;
    r.read("lambda1", h.lambda1);
    r.read("lambda2", h.lambda2);
    r.read("sigma1", h.sigma1);
    r.read("sigma2", h.sigma2);
    r.read("alpha", h.alpha);
    r.read("gamma", h.gamma);
    r.read("local_steps", h.local_steps);
    r.read("downloads", h.downloads);
    r.read("momentum", h.momentum);
    r.read("batch_size", h.batch_size);
    r.read("participation", h.participation);
    r.read("include_self", h.include_self);
    r.reject_unknown();
    r.expect(h.lambda1 >= 0, "lambda1", "must be >= 0");
    r.expect(h.lambda2 >= 0, "lambda2", "must be >= 0");
    r.expect(h.sigma1 >= 0, "sigma1", "must be >= 0");
    r.expect(h.sigma2 >= 0, "sigma2", "must be >= 0");
    r.expect(h.alpha >= 0, "alpha", "must be >= 0");
    r.expect(h.gamma > 0, "gamma", "must be > 0");
    r.expect(h.local_steps >= 0, "local_steps", "must be >= 0");
    r.expect(h.downloads >= 0, "downloads", "must be >= 0");
    r.expect(h.momentum >= 0 && h.momentum < 1, "momentum", "must lie in [0, 1)");
    r.expect(h.batch_size >= 0, "batch_size", "must be >= 0");
    r.expect(h.participation > 0 && h.participation <= 1, "participation",
             "must lie in (0, 1]");
  }
  {
    SectionReader r(doc, "schedule", errors);
    r.read("rounds", c.rounds);
    r.read("seeds", c.seeds);
    r.read("protocol", c.protocol);
    r.read("protocols", c.protocols);
    r.read("epsilon_start", c.hp.epsilon.start);
    r.read("epsilon_decay", c.hp.epsilon.decay);
    r.read("epsilon_floor", c.hp.epsilon.floor);
    r.read("sde_per_cluster", c.sde.per_cluster);
    r.read("sde_steps", c.sde.steps);
    r.read("sde_record_every", c.sde.record_every);
    r.read("init_stddev", c.sde.init_stddev);
    r.read("meanfield_sizes", c.meanfield.sizes);
    r.read("meanfield_reference", c.meanfield.reference);
    r.read("meanfield_checkpoints", c.meanfield.checkpoints);
    r.read("meanfield_projections", c.meanfield.projections);
    r.reject_unknown();
    r.expect(c.rounds >= 0, "rounds", "must be >= 0");
    r.expect(!c.seeds.empty(), "seeds", "must list at least one seed");
    r.expect(known_protocol(c.protocol), "protocol", "expected fedcbo, fedavg, ifca or local");
    for (const auto& p : c.protocols) {
      r.expect(known_protocol(p), "protocols", "unknown protocol '" + p + "'");
    }
    const EpsilonSchedule& e = c.hp.epsilon;
    r.expect(e.start >= 0 && e.start <= 1, "epsilon_start", "must lie in [0, 1]");
    r.expect(e.floor >= 0 && e.floor <= 1, "epsilon_floor", "must lie in [0, 1]");
    r.expect(e.decay >= 0, "epsilon_decay", "must be >= 0");
    r.expect(c.sde.per_cluster >= 1, "sde_per_cluster", "must be >= 1");
    r.expect(c.sde.steps >= 0, "sde_steps", "must be >= 0");
    r.expect(c.sde.record_every >= 1, "sde_record_every", "must be >= 1");
    r.expect(c.sde.init_stddev >= 0, "init_stddev", "must be >= 0");
    bool increasing = !c.meanfield.sizes.empty();
    for (std::size_t i = 0; i < c.meanfield.sizes.size(); ++i) {
      if (c.meanfield.sizes[i] < 1 || (i && c.meanfield.sizes[i] <= c.meanfield.sizes[i - 1])) {
        increasing = false;
      }
    }
    r.expect(increasing, "meanfield_sizes", "must be a nonempty increasing list of positive sizes");
    r.expect(c.meanfield.sizes.empty() || c.meanfield.reference >= c.meanfield.sizes.back(),
             "meanfield_reference", "must be >= the largest size");
    r.expect(c.meanfield.checkpoints >= 1, "meanfield_checkpoints", "must be >= 1");
    r.expect(c.meanfield.projections >= 1, "meanfield_projections", "must be >= 1");
  }
  {
    SectionReader r(doc, "output", errors);
    std::string dir = c.output_dir.string();
    r.read("dir", dir);
    c.output_dir = dir;
    r.read("threads", c.threads);
    r.reject_unknown();
    r.expect(!dir.empty(), "dir", "must not be empty");
    r.expect(c.threads >= 1, "threads", "must be >= 1");
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError({"cannot open config file " + file.string()});
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  return parse_config(doc);
}

nlohmann::json to_json(const ExperimentConfig& c) {
  const ProblemSpec& p = c.problem;
  const HyperParams& h = c.hp;
  nlohmann::json doc;
  doc["problem"] = {
      {"kind", p.kind},
      {"clusters", p.clusters},
      {"dim", p.dim},
      {"offset", p.offset},
      {"scale", p.scale},
      {"grad_bound", p.grad_bound},
      {"agents", p.agents},
      {"samples_per_agent", p.data.samples_per_agent},
      {"feature_dim", p.data.feature_dim},
      {"classes", p.data.classes},
      {"test_per_cluster", p.data.test_per_cluster},
      {"class_radius", p.data.class_radius},
      {"noise", p.data.noise},
      {"allow_unequal_clusters", p.data.allow_unequal_clusters},
      {"hidden", p.arch.hidden},
      {"activation", activation_name(p.arch.activation)},
  };
  doc["hyperparams"] = {
      {"lambda1", h.lambda1},       {"lambda2", h.lambda2},
      {"sigma1", h.sigma1},         {"sigma2", h.sigma2},
      {"alpha", h.alpha},           {"gamma", h.gamma},
      {"local_steps", h.local_steps}, {"downloads", h.downloads},
      {"momentum", h.momentum},     {"batch_size", h.batch_size},
      {"participation", h.participation}, {"include_self", h.include_self},
  };
  doc["schedule"] = {
      {"rounds", c.rounds},
      {"seeds", c.seeds},
      {"protocol", c.protocol},
      {"protocols", c.protocols},
      {"epsilon_start", h.epsilon.start},
      {"epsilon_decay", h.epsilon.decay},
      {"epsilon_floor", h.epsilon.floor},
      {"sde_per_cluster", c.sde.per_cluster},
      {"sde_steps", c.sde.steps},
      {"sde_record_every", c.sde.record_every},
      {"init_stddev", c.sde.init_stddev},
      {"meanfield_sizes", c.meanfield.sizes},
      {"meanfield_reference", c.meanfield.reference},
      {"meanfield_checkpoints", c.meanfield.checkpoints},
      {"meanfield_projections", c.meanfield.projections},
  };
  doc["output"] = {{"dir", c.output_dir.string()}, {"threads", c.threads}};
  return doc;
}

std::string serialize_config(const ExperimentConfig& config) {
  return to_json(config).dump(2) + "\n";
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) {
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Problem instances

BenchmarkProblem make_benchmark(const ProblemSpec& spec) {
  if (spec.is_learner()) throw InvalidParameter("learner problems have no analytic minimizers");
  return make_wells(spec.kind, spec.dim, spec.clusters, spec.offset, spec.scale,
                    spec.grad_bound);
}

namespace {

struct Instance {
  std::vector<LocalTask> tasks;
  std::vector<int> labels;
  std::shared_ptr<const ClusteredDataset> data;  // learners
  std::optional<BenchmarkProblem> bench;         // analytic wells
  Architecture arch;
  int dim = 0;
  int clusters = 0;
};

Instance build_instance(const ExperimentConfig& c, std::uint64_t seed) {
  Instance inst;
  const ProblemSpec& p = c.problem;
  if (p.is_learner()) {
    ClusteredDataset data;
    if (p.dataset_id() == "synthetic") {
      DataSpec spec = p.data;
      spec.seed = seed;
      data = generate_clustered_data(spec);
    } else {
      data = read_dataset(p.dataset_id());
    }
    auto shared = std::make_shared<const ClusteredDataset>(std::move(data));
    inst.arch = p.arch;
    inst.arch.inputs = shared->spec.feature_dim;
    inst.arch.classes = shared->spec.classes;
    inst.dim = inst.arch.parameter_count();
    inst.clusters = shared->spec.clusters;
    inst.labels = shared->agent_cluster;
    for (std::size_t j = 0; j < shared->shards.size(); ++j) {
      // Aliasing pointer keeps the whole dataset alive.
      std::shared_ptr<const Shard> shard(shared, &shared->shards[j]);
      LocalTask task{empirical_loss(inst.arch, shard), {}};
      if (c.hp.batch_size > 0) {
        const Architecture arch = inst.arch;
        const int batch = c.hp.batch_size;
        task.stochastic_grad = [arch, shard, batch](const Vec& theta, CounterRng& rng) {
          return minibatch_gradient(arch, theta, *shard, batch, rng);
        };
      }
      inst.tasks.push_back(std::move(task));
    }
    inst.data = std::move(shared);
  } else {
    inst.bench = make_benchmark(p);
    inst.dim = p.dim;
    inst.clusters = p.clusters;
    for (int j = 0; j < p.agents; ++j) {
      const int k = static_cast<int>(static_cast<std::int64_t>(j) * p.clusters / p.agents);
      inst.labels.push_back(k);
      inst.tasks.push_back(LocalTask{inst.bench->cluster_objectives[k], {}});
    }
  }
  return inst;
}

Vec initial_model(const Instance& inst, const ExperimentConfig& c, std::uint64_t seed,
                  std::uint64_t id) {
  CounterRng rng(seed, {tag(Stream::kModelInit), id});
  if (inst.data) return init_params(inst.arch, rng);
  return c.sde.init_stddev * rng.normal_vector(inst.dim);
}

// Agent-owned models (FedCBO, local): each agent is scored on its own
// cluster's test data.
void evaluate_agent_models(const Instance& inst, std::span<const Vec> models,
                           RoundMetrics& m, const Executor& exec) {
  const int kk = inst.clusters;
  std::vector<double> score(models.size());
  exec.parallel_for(models.size(), [&](std::size_t j) {
    const int k = inst.labels[j];
    if (inst.data) {
      score[j] = accuracy(inst.arch, models[j], inst.data->test_sets[k]);
    } else {
      score[j] = 0.5 * (models[j] - *inst.bench->cluster_objectives[k].minimizer()).squaredNorm();
    }
  });
  std::vector<double> sum(kk, 0.0);
  std::vector<int> count(kk, 0);
  for (std::size_t j = 0; j < models.size(); ++j) {
    sum[inst.labels[j]] += score[j];
    ++count[inst.labels[j]];
  }
  std::vector<double> per(kk, 0.0);
  for (int k = 0; k < kk; ++k) per[k] = count[k] ? sum[k] / count[k] : 0.0;
  if (inst.data) {
    m.cluster_accuracy = per;
    m.macro_accuracy = std::accumulate(per.begin(), per.end(), 0.0) / kk;
  } else {
    m.cluster_variance = per;
  }
}

// Server-held models (FedAvg, IFCA): for each cluster, the model with the
// smallest test loss is the one scored.
void evaluate_server_models(const Instance& inst, std::span<const Vec> models,
                            RoundMetrics& m) {
  const int kk = inst.clusters;
  std::vector<double> per(kk, 0.0);
  for (int k = 0; k < kk; ++k) {
    if (inst.data) {
      const Shard& test = inst.data->test_sets[k];
      std::size_t best = 0;
      double best_loss = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < models.size(); ++i) {
        const double l = cross_entropy(inst.arch, models[i], test, nullptr);
        if (l < best_loss) {
          best_loss = l;
          best = i;
        }
      }
      per[k] = accuracy(inst.arch, models[best], test);
    } else {
      const Objective& obj = inst.bench->cluster_objectives[k];
      const int best = best_model(models, obj);
      per[k] = 0.5 * (models[best] - *obj.minimizer()).squaredNorm();
    }
  }
  if (inst.data) {
    m.cluster_accuracy = per;
    m.macro_accuracy = std::accumulate(per.begin(), per.end(), 0.0) / kk;
  } else {
    m.cluster_variance = per;
  }
}

}  // namespace

nlohmann::json to_json(const RoundMetrics& m) {
  nlohmann::json j = {{"round", m.round},
                      {"participants", m.participants},
                      {"mean_local_loss", m.mean_local_loss}};
  if (m.epsilon) j["epsilon"] = *m.epsilon;
  if (m.sr) j["sr"] = *m.sr;
  if (m.oracle_sr) j["oracle_sr"] = *m.oracle_sr;
  if (!m.cluster_accuracy.empty()) j["cluster_accuracy"] = m.cluster_accuracy;
  if (m.macro_accuracy) j["macro_accuracy"] = *m.macro_accuracy;
  if (!m.cluster_variance.empty()) j["cluster_variance"] = m.cluster_variance;
  return j;
}

ProtocolRun run_protocol(const ExperimentConfig& c, const std::string& protocol,
                         std::uint64_t seed, const Executor& exec) {
  if (!known_protocol(protocol)) throw InvalidParameter("unknown protocol '" + protocol + "'");
  const Instance inst = build_instance(c, seed);
  const int n = static_cast<int>(inst.tasks.size());
  ProtocolRun run;
  run.protocol = protocol;
  run.seed = seed;
  run.hidden_labels = inst.labels;

  if (protocol == "fedcbo" || protocol == "local") {
    std::vector<Vec> models;
    for (int j = 0; j < n; ++j) models.push_back(initial_model(inst, c, seed, j));
    FedCboState state = init_fedcbo_state(std::move(models));
    std::vector<int> cluster_size(inst.clusters, 0);
    for (int k : inst.labels) ++cluster_size[k];
    for (int r = 0; r < c.rounds; ++r) {
      RoundMetrics m;
      m.round = r;
      if (protocol == "fedcbo") {
        RoundLog log = fedcbo_round(state, inst.tasks, c.hp, r, seed, exec);
        m.participants = static_cast<int>(log.participants.size());
        m.epsilon = log.epsilon;
        m.mean_local_loss = log.mean_local_loss;
        // Selection rate needs the hidden labels, so it is scored here and
        // never inside the protocol.
        double sr = 0.0, oracle = 0.0;
        int counted = 0;
        for (int j : log.participants) {
          if (log.selections[j].empty()) continue;
          sr += selection_rate(j, log.selections[j], inst.labels);
          oracle += oracle_sr(log.epsilon, cluster_size[inst.labels[j]], n);
          ++counted;
        }
        if (counted) {
          m.sr = sr / counted;
          m.oracle_sr = oracle / counted;
        }
        run.fedcbo_logs.push_back(std::move(log));
      } else {
        BaselineRoundLog log = local_only_round(state.models, inst.tasks, c.hp, r, seed, exec);
        m.participants = n;
        m.mean_local_loss = log.mean_local_loss;
      }
      evaluate_agent_models(inst, state.models, m, exec);
      run.rounds.push_back(std::move(m));
    }
    run.final_metrics = run.rounds.empty() ? RoundMetrics{} : run.rounds.back();
    if (run.rounds.empty()) evaluate_agent_models(inst, state.models, run.final_metrics, exec);
  } else {
    const int k_models = protocol == "ifca" ? inst.clusters : 1;
    std::vector<Vec> server;
    // Offset keeps server initializations distinct from agent ids.
    for (int k = 0; k < k_models; ++k) {
      server.push_back(initial_model(inst, c, seed, (1ULL << 40) + k));
    }
    for (int r = 0; r < c.rounds; ++r) {
      RoundMetrics m;
      m.round = r;
      m.participants = n;
      const BaselineRoundLog log =
          protocol == "ifca" ? ifca_round(server, inst.tasks, c.hp, r, seed, exec)
                             : fedavg_round(server.front(), inst.tasks, c.hp, r, seed, exec);
      m.mean_local_loss = log.mean_local_loss;
      evaluate_server_models(inst, server, m);
      run.rounds.push_back(std::move(m));
    }
    run.final_metrics = run.rounds.empty() ? RoundMetrics{} : run.rounds.back();
    if (run.rounds.empty()) evaluate_server_models(inst, server, run.final_metrics);
  }
  return run;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

// Tracks files written during a run so an abort can remove them.
class OutputTracker {
 public:
  explicit OutputTracker(std::filesystem::path root) : root_(std::move(root)) {}

  std::ofstream open(const std::string& relative) {
    const auto path = root_ / relative;
    std::filesystem::create_directories(path.parent_path());
    written_.push_back(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
  }

  void write(const std::string& relative, const std::string& bytes) {
    std::ofstream out = open(relative);
    out << bytes;
  }

  void rollback() noexcept {
    std::error_code ec;
    for (auto it = written_.rbegin(); it != written_.rend(); ++it) {
      std::filesystem::remove(*it, ec);
    }
    written_.clear();
  }

  void commit() { written_.clear(); }

 private:
  std::filesystem::path root_;
  std::vector<std::filesystem::path> written_;
};

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(10) << v;
  return out.str();
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

std::string metric_file(const std::string& protocol, std::uint64_t seed) {
  return "metrics/" + protocol + "_seed" + std::to_string(seed) + ".jsonl";
}

std::string metrics_jsonl(const ProtocolRun& run) {
  std::string out;
  for (const RoundMetrics& m : run.rounds) out += to_json(m).dump() + "\n";
  return out;
}

ComparisonRow summarize(const std::string& protocol, const std::vector<ProtocolRun>& runs,
                        int clusters) {
  ComparisonRow row;
  row.protocol = protocol;
  row.seeds = static_cast<int>(runs.size());
  std::vector<double> macro;
  for (int k = 0; k < clusters; ++k) {
    std::vector<double> xs;
    for (const ProtocolRun& r : runs) {
      const auto& fm = r.final_metrics;
      const auto& v = fm.cluster_accuracy.empty() ? fm.cluster_variance : fm.cluster_accuracy;
      if (k < static_cast<int>(v.size())) xs.push_back(v[k]);
    }
    const MeanStd s = mean_std(xs);
    row.cluster_mean.push_back(s.mean);
    row.cluster_std.push_back(s.std);
  }
  for (const ProtocolRun& r : runs) {
    if (r.final_metrics.macro_accuracy) macro.push_back(*r.final_metrics.macro_accuracy);
  }
  const MeanStd s = mean_std(macro);
  row.macro_mean = s.mean;
  row.macro_std = s.std;
  return row;
}

std::string summary_csv(const std::vector<ComparisonRow>& rows, int clusters, bool learner) {
  std::ostringstream out;
  const std::string metric = learner ? "accuracy" : "variance";
  out << "protocol,seeds";
  for (int k = 0; k < clusters; ++k) {
    out << ',' << metric << "_cluster" << k << "_mean," << metric << "_cluster" << k << "_std";
  }
  out << ",macro_accuracy_mean,macro_accuracy_std\n";
  for (const ComparisonRow& r : rows) {
    out << r.protocol << ',' << r.seeds;
    for (int k = 0; k < clusters; ++k) {
      out << ',' << format_double(r.cluster_mean[k]) << ',' << format_double(r.cluster_std[k]);
    }
    if (learner) {
      out << ',' << format_double(r.macro_mean) << ',' << format_double(r.macro_std);
    } else {
      out << ",,";
    }
    out << '\n';
  }
  return out.str();
}

int cluster_count(const ExperimentConfig& c) {
  return c.problem.clusters;
}

}  // namespace

nlohmann::json to_json(const RunManifest& m) {
  return {{"config_hash", m.config_hash},   {"code_version", m.code_version},
          {"seeds", m.seeds},               {"protocols", m.protocols},
          {"started_at", m.started_at},     {"finished_at", m.finished_at},
          {"metric_files", m.metric_files}, {"summary_file", m.summary_file}};
}

RunManifest run_experiment(const ExperimentConfig& config, const Executor& exec) {
  RunManifest manifest;
  manifest.started_at = utc_now();
  manifest.code_version = code_version();
  manifest.seeds = config.seeds;
  manifest.protocols = {config.protocol};

  OutputTracker out(config.output_dir);
  try {
    const std::string serialized = serialize_config(config);
    manifest.config_hash = sha256_hex(serialized);
    out.write("config.json", serialized);

    std::vector<ProtocolRun> runs;
    for (std::uint64_t seed : config.seeds) {
      ProtocolRun run = run_protocol(config, config.protocol, seed, exec);
      const std::string file = metric_file(config.protocol, seed);
      out.write(file, metrics_jsonl(run));
      manifest.metric_files.push_back(file);
      runs.push_back(std::move(run));
    }
    const int kk = cluster_count(config);
    manifest.summary_file = "summary.csv";
    out.write(manifest.summary_file,
              summary_csv({summarize(config.protocol, runs, kk)}, kk,
                          config.problem.is_learner()));
    manifest.finished_at = utc_now();
    out.write("manifest.json", to_json(manifest).dump(2) + "\n");
    out.commit();
  } catch (...) {
    out.rollback();
    throw;
  }
  return manifest;
}

const ComparisonRow* ComparisonTable::find(const std::string& protocol) const {
  for (const ComparisonRow& r : rows) {
    if (r.protocol == protocol) return &r;
  }
  return nullptr;
}

std::optional<double> ComparisonTable::margin(const std::string& a,
                                              const std::string& b) const {
  const ComparisonRow* ra = find(a);
  const ComparisonRow* rb = find(b);
  if (!ra || !rb) return std::nullopt;
  return 100.0 * (ra->macro_mean - rb->macro_mean);
}

std::vector<ReferenceAccuracy> reference_table() {
  return {{"fedcbo", 96.51}, {"ifca", 94.44}, {"fedavg", 85.50}, {"local", 81.27}};
}

std::int64_t compute_budget(const ExperimentConfig& config) {
  return static_cast<std::int64_t>(config.rounds) * config.hp.local_steps;
}

ComparisonTable compare_protocols(const std::vector<ExperimentConfig>& configs,
                                  const Executor& exec, bool write_files) {
  if (configs.empty()) throw InvalidParameter("nothing to compare");
  const ExperimentConfig& base = configs.front();
  const nlohmann::json base_problem = to_json(base)["problem"];
  for (const ExperimentConfig& c : configs) {
    if (compute_budget(c) != compute_budget(base)) {
      throw InvalidParameter("protocols have different local-step budgets (" +
                             std::to_string(compute_budget(c)) + " vs " +
                             std::to_string(compute_budget(base)) + ")");
    }
    if (c.rounds != base.rounds) throw InvalidParameter("protocols use different round counts");
    if (c.seeds != base.seeds) throw InvalidParameter("protocols use different seeds");
    if (to_json(c)["problem"] != base_problem) {
      throw InvalidParameter("protocols use different problems");
    }
  }

  OutputTracker out(base.output_dir);
  ComparisonTable table;
  const int kk = cluster_count(base);
  try {
    if (write_files) out.write("config.json", serialize_config(base));
    for (const ExperimentConfig& c : configs) {
      std::vector<ProtocolRun> runs;
      for (std::uint64_t seed : c.seeds) {
        ProtocolRun run = run_protocol(c, c.protocol, seed, exec);
        if (write_files) out.write(metric_file(c.protocol, seed), metrics_jsonl(run));
        runs.push_back(std::move(run));
      }
      table.rows.push_back(summarize(c.protocol, runs, kk));
    }
    if (write_files) {
      out.write("comparison.csv", summary_csv(table.rows, kk, base.problem.is_learner()));
    }
    out.commit();
  } catch (...) {
    out.rollback();
    throw;
  }
  return table;
}

ComparisonTable compare_protocols(const ExperimentConfig& config,
                                  const std::vector<std::string>& protocols,
                                  const Executor& exec, bool write_files) {
  std::vector<ExperimentConfig> configs;
  for (const std::string& p : protocols) {
    ExperimentConfig c = config;
    c.protocol = p;
    configs.push_back(std::move(c));
  }
  return compare_protocols(configs, exec, write_files);
}

// ---------------------------------------------------------------------------
// Diagnostics subcommands

void run_sde_command(const ExperimentConfig& config, const Executor& exec) {
  const BenchmarkProblem problem = make_benchmark(config.problem);
  InitSpec init;
  init.stddev = config.sde.init_stddev;
  SdeOptions opts;
  opts.record_every = config.sde.record_every;
  const RateEstimate theory =
      theoretical_rate(config.hp, problem.grad_lipschitz(), problem.dim(), 0.5);

  OutputTracker out(config.output_dir);
  try {
    out.write("config.json", serialize_config(config));
    std::ostringstream summary;
    summary << "seed,theory_regime,theoretical_rate_tau0.5,fitted_rate,V0,V_final";
    for (int k = 0; k < problem.clusters(); ++k) summary << ",consensus_error" << k;
    summary << '\n';
    for (std::uint64_t seed : config.seeds) {
      const SdeTrajectory traj = run_sde(problem, config.sde.per_cluster, config.hp,
                                         config.sde.steps, init, seed, opts, exec);
      std::ostringstream jsonl;
      write_trajectory_jsonl(jsonl, traj);
      out.write("sde_seed" + std::to_string(seed) + ".jsonl", jsonl.str());

      std::vector<double> v, t;
      for (const SdeRecord& r : traj.records) {
        v.push_back(r.variance_sum);
        t.push_back(r.time);
      }
      const double v0 = v.front();
      const std::size_t hit = first_at_or_below(v, 1e-3 * v0);
      const std::size_t end = std::min(hit + 1, v.size());
      double rate = std::nan("");
      if (end >= 2) {
        rate = decay_exponent_fit(std::span<const double>(v).first(end),
                                  std::span<const double>(t).first(end));
      }
      summary << seed << ',' << (traj.theory_regime ? 1 : 0) << ','
              << format_double(theory.rate) << ',' << format_double(rate) << ','
              << format_double(v0) << ',' << format_double(v.back());
      for (double e : traj.records.back().consensus_error) summary << ',' << format_double(e);
      summary << '\n';
    }
    out.write("sde_summary.csv", summary.str());
    out.commit();
  } catch (...) {
    out.rollback();
    throw;
  }
}

MeanFieldScan run_meanfield_command(const ExperimentConfig& config, const Executor& exec) {
  const BenchmarkProblem problem = make_benchmark(config.problem);
  MeanFieldOptions opts;
  opts.checkpoints = config.meanfield.checkpoints;
  opts.projections = config.meanfield.projections;
  opts.init.stddev = config.sde.init_stddev;
  const MeanFieldScan scan =
      meanfield_scan(problem, config.hp, config.meanfield.sizes, config.meanfield.reference,
                     config.seeds, config.sde.steps, opts, exec);
  OutputTracker out(config.output_dir);
  try {
    out.write("config.json", serialize_config(config));
    std::ostringstream csv;
    csv << "N,reference_N,w1_discrepancy,std_error\n";
    for (std::size_t i = 0; i < scan.sizes.size(); ++i) {
      csv << scan.sizes[i] << ',' << scan.reference_size << ','
          << format_double(scan.discrepancy[i]) << ',' << format_double(scan.std_error[i])
          << '\n';
    }
    out.write("meanfield.csv", csv.str());
    out.commit();
  } catch (...) {
    out.rollback();
    throw;
  }
  return scan;
}

void export_long_csv(const std::filesystem::path& run_dir,
                     const std::filesystem::path& out_file) {
  const auto metrics_dir = run_dir / "metrics";
  if (!std::filesystem::is_directory(metrics_dir)) {
    throw InvalidParameter("no metrics/ directory under " + run_dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(metrics_dir)) {
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::ofstream out(out_file);
  if (!out) throw InvalidParameter("cannot write " + out_file.string());
  out << "protocol,seed,round,metric,value\n";
  for (const auto& file : files) {
    const std::string stem = file.stem().string();
    const auto pos = stem.rfind("_seed");
    if (pos == std::string::npos) continue;
    const std::string protocol = stem.substr(0, pos);
    const std::string seed = stem.substr(pos + 5);
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const nlohmann::json j = nlohmann::json::parse(line);
      const int round = j.at("round").get<int>();
      for (const auto& [key, value] : j.items()) {
        if (key == "round") continue;
        if (value.is_array()) {
          for (std::size_t k = 0; k < value.size(); ++k) {
            out << protocol << ',' << seed << ',' << round << ',' << key << '_' << k << ','
                << format_double(value[k].get<double>()) << '\n';
          }
        } else {
          out << protocol << ',' << seed << ',' << round << ',' << key << ','
              << format_double(value.get<double>()) << '\n';
        }
      }
    }
  }
}

}  // namespace fedcbo
