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

// Command-line front end for the fedcbo library.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fedcbo/common.h"
#include "fedcbo/harness.h"
#include "fedcbo/parallel.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string protocol;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_protocol) {
  cmd->add_option("--config", f.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "run a single seed instead of the configured list");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  if (with_protocol) {
    cmd->add_option("--protocol", f.protocol, "protocol to run")
        ->check(CLI::IsMember({"fedcbo", "fedavg", "ifca", "local"}));
  }
}

fedcbo::ExperimentConfig resolve(const CommonFlags& f) {
  fedcbo::ExperimentConfig c =
      f.config.empty() ? fedcbo::default_config() : fedcbo::load_config(f.config);
  if (f.seed) c.seeds = {*f.seed};
  if (!f.out.empty()) c.output_dir = f.out;
  if (!f.protocol.empty()) c.protocol = f.protocol;
  if (f.threads) c.threads = *f.threads;
  return c;
}

void print_table(const fedcbo::ComparisonTable& table, bool learner) {
  std::cout << (learner ? "protocol  macro_accuracy  std\n" : "protocol  cluster0_variance\n");
  for (const auto& row : table.rows) {
    std::cout << row.protocol << "  ";
    if (learner) {
      std::cout << row.macro_mean << "  " << row.macro_std << '\n';
    } else {
      std::cout << (row.cluster_mean.empty() ? 0.0 : row.cluster_mean.front()) << '\n';
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated consensus-based optimization experiments"};
  app.require_subcommand(1);

  CommonFlags run_f, cmp_f, mf_f, sde_f;
  CLI::App* run = app.add_subcommand("run", "run one protocol over the configured seeds");
  add_common(run, run_f, true);

  CLI::App* compare = app.add_subcommand("compare", "run several protocols on one problem");
  add_common(compare, cmp_f, false);

  CLI::App* meanfield =
      app.add_subcommand("scan-meanfield", "sliced W1 distance to a large reference cloud");
  add_common(meanfield, mf_f, false);

  CLI::App* sde = app.add_subcommand("sde", "simulate the particle system on analytic wells");
  add_common(sde, sde_f, false);

  std::string export_run, export_out;
  CLI::App* plot = app.add_subcommand("plot-export", "flatten run metrics into a long CSV");
  plot->add_option("run_dir", export_run, "directory written by run or compare")->required();
  plot->add_option("--out", export_out, "CSV destination")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*plot) {
      fedcbo::export_long_csv(export_run, export_out);
      std::cout << "wrote " << export_out << '\n';
      return kExitOk;
    }
    if (*run) {
      const auto config = resolve(run_f);
      const fedcbo::Executor exec(config.threads);
      const auto manifest = fedcbo::run_experiment(config, exec);
      std::cout << "config " << manifest.config_hash << "\nwrote "
                << (config.output_dir / "manifest.json").string() << '\n';
    } else if (*compare) {
      const auto config = resolve(cmp_f);
      const fedcbo::Executor exec(config.threads);
      const auto table = fedcbo::compare_protocols(config, config.protocols, exec);
      print_table(table, config.problem.is_learner());
    } else if (*meanfield) {
      const auto config = resolve(mf_f);
      const fedcbo::Executor exec(config.threads);
      const auto scan = fedcbo::run_meanfield_command(config, exec);
      for (std::size_t i = 0; i < scan.sizes.size(); ++i) {
        std::cout << "N=" << scan.sizes[i] << "  W1=" << scan.discrepancy[i] << " +- "
                  << scan.std_error[i] << '\n';
      }
      std::cout << (scan.decreasing ? "decreasing" : "not decreasing") << '\n';
    } else if (*sde) {
      const auto config = resolve(sde_f);
      const fedcbo::Executor exec(config.threads);
      fedcbo::run_sde_command(config, exec);
      std::cout << "wrote " << (config.output_dir / "sde_summary.csv").string() << '\n';
    }
  } catch (const fedcbo::ConfigError& e) {
    for (const auto& v : e.violations()) std::cerr << "config error: " << v << '\n';
    return kExitConfig;
  } catch (const fedcbo::InvalidParameter& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fedcbo::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
