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

#ifndef FEDCBO_HARNESS_H_
#define FEDCBO_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedcbo/baselines.h"
#include "fedcbo/diagnostics.h"
#include "fedcbo/fedcbo.h"
#include "fedcbo/hyperparams.h"
#include "fedcbo/learners.h"
#include "fedcbo/objectives.h"
#include "fedcbo/parallel.h"
#include "fedcbo/particle_sde.h"

namespace fedcbo {

// Version string recorded in run manifests.
const char* code_version();

// [problem] section. `kind` is "quadratic", "rastrigin", "learner:synthetic"
// or "learner:<dataset dir>" (a directory written by write_dataset).
struct ProblemSpec {
  std::string kind = "learner:synthetic";
  // Analytic wells.
  int clusters = 4;
  int dim = 2;
  double offset = 2.0;
  double scale = 1.0;
  double grad_bound = kDefaultGradBound;
  // Agents for federated runs over analytic wells.
  int agents = 40;
  // Synthetic learner data.
  DataSpec data;
  Architecture arch{8, 16, 4, Activation::kRelu};

  bool is_learner() const { return kind.rfind("learner:", 0) == 0; }
  std::string dataset_id() const;
};

struct SdeSection {
  int per_cluster = 200;
  std::int64_t steps = 2000;
  int record_every = 20;
  double init_stddev = 2.0;
};

struct MeanFieldSection {
  std::vector<int> sizes{50, 100, 200, 400};
  int reference = 800;
  int checkpoints = 20;
  int projections = 64;
};

struct ExperimentConfig {
  ProblemSpec problem;
  HyperParams hp;
  // [schedule]
  int rounds = 30;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string protocol = "fedcbo";
  std::vector<std::string> protocols{"fedcbo", "ifca", "fedavg", "local"};
  SdeSection sde;
  MeanFieldSection meanfield;
  // [output]
  std::filesystem::path output_dir = "runs/default";
  int threads = 1;
};

// The desk-scale protocol-comparison setup.
ExperimentConfig default_config();

// Parses and validates; throws ConfigError listing every violation.
// Missing keys take the values of default_config().
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& file);
// Fully resolved configuration; parse_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& config);
// Canonical serialization used for hashing and persistence.
std::string serialize_config(const ExperimentConfig& config);
// Hex SHA-256 of `bytes`.
std::string sha256_hex(const std::string& bytes);

// Per-round record. Optional fields are absent when the protocol or problem
// does not define them (SR only for FedCBO, accuracy only for learners,
// variance only for analytic wells).
struct RoundMetrics {
  int round = 0;
  int participants = 0;
  std::optional<double> epsilon;
  std::optional<double> sr;
  std::optional<double> oracle_sr;
  std::vector<double> cluster_accuracy;
  std::optional<double> macro_accuracy;
  std::vector<double> cluster_variance;
  double mean_local_loss = 0.0;
};

nlohmann::json to_json(const RoundMetrics& m);

struct ProtocolRun {
  std::string protocol;
  std::uint64_t seed = 0;
  std::vector<RoundMetrics> rounds;
  // Evaluated on the final models (initial models when rounds == 0).
  RoundMetrics final_metrics;
  std::vector<RoundLog> fedcbo_logs;  // FedCBO only
  std::vector<int> hidden_labels;
};

// Runs one protocol for config.rounds rounds on the problem built from
// `seed`. Nothing is written to disk.
ProtocolRun run_protocol(const ExperimentConfig& config, const std::string& protocol,
                         std::uint64_t seed, const Executor& exec);

struct RunManifest {
  std::string config_hash;
  std::string code_version;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> protocols;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> metric_files;  // relative to the output dir
  std::string summary_file;
};

nlohmann::json to_json(const RunManifest& m);

// Runs `config.protocol` for every seed. Writes config.json,
// metrics/<protocol>_seed<s>.jsonl, summary.csv and, last, manifest.json.
// On failure every file written by this call is removed.
RunManifest run_experiment(const ExperimentConfig& config,
                           const Executor& exec = Executor{});

struct ComparisonRow {
  std::string protocol;
  std::vector<double> cluster_mean;
  std::vector<double> cluster_std;
  double macro_mean = 0.0;
  double macro_std = 0.0;
  int seeds = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  // Accuracy points (x100) by which `a` beats `b`; nullopt if missing.
  std::optional<double> margin(const std::string& a, const std::string& b) const;
  const ComparisonRow* find(const std::string& protocol) const;
};

// Reference ordering from the full-scale rotated-digit benchmark; metadata
// only, never asserted against desk-scale runs.
struct ReferenceAccuracy {
  const char* protocol;
  double accuracy_percent;
};
std::vector<ReferenceAccuracy> reference_table();

// Local gradient steps per agent over a whole experiment.
std::int64_t compute_budget(const ExperimentConfig& config);

// One config per protocol; all must share problem, seeds, rounds and local
// step budget, otherwise InvalidParameter. Writes comparison.csv plus the
// per-protocol metric files when `write_files` is set.
ComparisonTable compare_protocols(const std::vector<ExperimentConfig>& configs,
                                  const Executor& exec = Executor{},
                                  bool write_files = true);
ComparisonTable compare_protocols(const ExperimentConfig& config,
                                  const std::vector<std::string>& protocols,
                                  const Executor& exec = Executor{},
                                  bool write_files = true);

// Builds the analytic benchmark described by a non-learner problem spec.
BenchmarkProblem make_benchmark(const ProblemSpec& spec);

// `sde` subcommand: one trajectory per seed plus sde_summary.csv.
void run_sde_command(const ExperimentConfig& config, const Executor& exec);
// `scan-meanfield` subcommand: meanfield.csv.
MeanFieldScan run_meanfield_command(const ExperimentConfig& config,
                                    const Executor& exec);
// `plot-export`: tidy long-format CSV (protocol, seed, round, metric, value)
// from every metrics/*.jsonl under `run_dir`.
void export_long_csv(const std::filesystem::path& run_dir,
                     const std::filesystem::path& out_file);

}  // namespace fedcbo

#endif  // FEDCBO_HARNESS_H_
