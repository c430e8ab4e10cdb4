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

#include "fedcbo/learners.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fedcbo {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_arch(const Architecture& arch) {
  if (arch.inputs < 1 || arch.classes < 2 || arch.hidden < 0) {
    throw InvalidParameter("architecture needs inputs >= 1, classes >= 2, hidden >= 0");
  }
}

Eigen::MatrixXd read_block(const Vec& theta, int& offset, int rows, int cols) {
  Eigen::MatrixXd m =
      Eigen::Map<const RowMatrix>(theta.data() + offset, rows, cols);
  offset += rows * cols;
  return m;
}

Vec read_vec(const Vec& theta, int& offset, int n) {
  Vec v = theta.segment(offset, n);
  offset += n;
  return v;
}

void write_block(Vec& theta, int& offset, const Eigen::MatrixXd& m) {
  Eigen::Map<RowMatrix>(theta.data() + offset, m.rows(), m.cols()) = m;
  offset += static_cast<int>(m.size());
}

void write_vec(Vec& theta, int& offset, const Vec& v) {
  theta.segment(offset, v.size()) = v;
  offset += static_cast<int>(v.size());
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const int> rows) {
  Eigen::MatrixXd out(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = x.row(rows[r]);
  return out;
}

// Returns logits for the given inputs; fills hidden pre/post activations.
Eigen::MatrixXd forward(const Architecture& arch, const Layers& l,
                        const Eigen::MatrixXd& x, Eigen::MatrixXd* pre,
                        Eigen::MatrixXd* post) {
  if (arch.hidden == 0) {
    return (x * l.w2.transpose()).rowwise() + l.b2.transpose();
  }
  Eigen::MatrixXd z = (x * l.w1.transpose()).rowwise() + l.b1.transpose();
  Eigen::MatrixXd a = arch.activation == Activation::kRelu
                          ? Eigen::MatrixXd(z.cwiseMax(0.0))
                          : Eigen::MatrixXd(z.array().tanh().matrix());
  Eigen::MatrixXd logits = (a * l.w2.transpose()).rowwise() + l.b2.transpose();
  if (pre) *pre = std::move(z);
  if (post) *post = std::move(a);
  return logits;
}

}  // namespace

int Architecture::parameter_count() const {
  if (hidden == 0) return classes * inputs + classes;
  return hidden * inputs + hidden + classes * hidden + classes;
}

Layers unflatten(const Architecture& arch, const Vec& theta) {
  check_arch(arch);
  if (theta.size() != arch.parameter_count()) {
    throw InvalidParameter("parameter vector has " +
                           std::to_string(theta.size()) + " entries, expected " +
                           std::to_string(arch.parameter_count()));
  }
  Layers l;
  int offset = 0;
  if (arch.hidden > 0) {
    l.w1 = read_block(theta, offset, arch.hidden, arch.inputs);
    l.b1 = read_vec(theta, offset, arch.hidden);
    l.w2 = read_block(theta, offset, arch.classes, arch.hidden);
  } else {
    l.w2 = read_block(theta, offset, arch.classes, arch.inputs);
  }
  l.b2 = read_vec(theta, offset, arch.classes);
  return l;
}

Vec flatten(const Architecture& arch, const Layers& l) {
  check_arch(arch);
  Vec theta(arch.parameter_count());
  int offset = 0;
  if (arch.hidden > 0) {
    write_block(theta, offset, l.w1);
    write_vec(theta, offset, l.b1);
  }
  write_block(theta, offset, l.w2);
  write_vec(theta, offset, l.b2);
  if (offset != theta.size()) throw InvalidParameter("layer shapes do not match architecture");
  return theta;
}

Vec init_params(const Architecture& arch, CounterRng& rng) {
  check_arch(arch);
  Layers l;
  auto glorot = [&rng](int rows, int cols) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = limit * (2.0 * rng.uniform() - 1.0);
    }
    return m;
  };
  if (arch.hidden > 0) {
    l.w1 = glorot(arch.hidden, arch.inputs);
    l.b1 = Vec::Zero(arch.hidden);
    l.w2 = glorot(arch.classes, arch.hidden);
  } else {
    l.w2 = glorot(arch.classes, arch.inputs);
  }
  l.b2 = Vec::Zero(arch.classes);
  return flatten(arch, l);
}

Vec rotate_pairs(const Vec& x, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Vec out = x;
  for (int i = 0; i + 1 < x.size(); i += 2) {
    out[i] = c * x[i] - s * x[i + 1];
    out[i + 1] = s * x[i] + c * x[i + 1];
  }
  return out;
}

ClusteredDataset generate_clustered_data(const DataSpec& spec) {
  if (spec.clusters < 1 || spec.agents < 1) {
    throw InvalidParameter("clusters and agents must be >= 1");
  }
  if (spec.samples_per_agent < 1) throw InvalidParameter("samples per agent must be >= 1");
  if (spec.feature_dim < 1 || spec.classes < 2) {
    throw InvalidParameter("need feature_dim >= 1 and classes >= 2");
  }
  if (spec.agents % spec.clusters != 0 && !spec.allow_unequal_clusters) {
    throw InvalidParameter("agents (" + std::to_string(spec.agents) +
                           ") not divisible by clusters (" +
                           std::to_string(spec.clusters) + ")");
  }
  if (spec.agents < spec.clusters) throw InvalidParameter("fewer agents than clusters");

  ClusteredDataset data;
  data.spec = spec;
  const int m = spec.feature_dim;
  for (int k = 0; k < spec.clusters; ++k) {
    data.rotation_angles.push_back(2.0 * std::numbers::pi * k / spec.clusters);
  }
  for (int c = 0; c < spec.classes; ++c) {
    Vec mean = Vec::Zero(m);
    const double angle = 2.0 * std::numbers::pi * c / spec.classes;
    mean[0] = spec.class_radius * std::cos(angle);
    if (m > 1) mean[1] = spec.class_radius * std::sin(angle);
    data.class_means.push_back(mean);
  }

  // Balanced cluster sizes, then a seeded shuffle so agent ids carry no
  // information about cluster membership.
  data.agent_cluster.resize(spec.agents);
  for (int j = 0; j < spec.agents; ++j) {
    data.agent_cluster[j] = static_cast<int>(
        static_cast<std::int64_t>(j) * spec.clusters / spec.agents);
  }
  CounterRng perm_rng(spec.seed, {tag(Stream::kData), 0});
  for (int j = spec.agents - 1; j > 0; --j) {
    std::swap(data.agent_cluster[j],
              data.agent_cluster[perm_rng.below(static_cast<std::uint64_t>(j) + 1)]);
  }

  auto draw = [&](CounterRng& rng, int cluster, int count) {
    Shard s;
    s.features.resize(count, m);
    s.labels.resize(count);
    for (int r = 0; r < count; ++r) {
      const int label = static_cast<int>(rng.below(spec.classes));
      Vec x = data.class_means[label] + spec.noise * rng.normal_vector(m);
      s.features.row(r) = rotate_pairs(x, data.rotation_angles[cluster]).transpose();
      s.labels[r] = label;
    }
    return s;
  };

  data.shards.reserve(spec.agents);
  for (int j = 0; j < spec.agents; ++j) {
    CounterRng rng(spec.seed, {tag(Stream::kData), 1, static_cast<std::uint64_t>(j)});
    data.shards.push_back(draw(rng, data.agent_cluster[j], spec.samples_per_agent));
  }
  for (int k = 0; k < spec.clusters; ++k) {
    CounterRng rng(spec.seed, {tag(Stream::kData), 2, static_cast<std::uint64_t>(k)});
    data.test_sets.push_back(draw(rng, k, spec.test_per_cluster));
  }
  return data;
}

double cross_entropy(const Architecture& arch, const Vec& theta,
                     const Shard& shard, Vec* grad, std::span<const int> rows) {
  if (shard.size() == 0) throw InvalidParameter("empty shard");
  if (shard.features.cols() != arch.inputs) {
    throw InvalidParameter("shard feature dimension does not match architecture");
  }
  const Layers l = unflatten(arch, theta);
  Eigen::MatrixXd x_sel;
  std::vector<int> labels;
  if (rows.empty()) {
    x_sel = shard.features;
    labels = shard.labels;
  } else {
    x_sel = gather_rows(shard.features, rows);
    labels.reserve(rows.size());
    for (int r : rows) labels.push_back(shard.labels[r]);
  }
  const auto n = static_cast<double>(labels.size());

  Eigen::MatrixXd pre, post;
  Eigen::MatrixXd logits = forward(arch, l, x_sel, &pre, &post);
  double loss = 0.0;
  // Softmax in place, max-shifted per row.
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    logits.row(r).array() -= mx;
    const double log_z = std::log(logits.row(r).array().exp().sum());
    loss -= logits(r, labels[r]) - log_z;
    logits.row(r) = (logits.row(r).array() - log_z).exp().matrix();
  }
  loss /= n;
  if (!grad) return loss;

  // dL/dlogits = (softmax - onehot) / n
  Eigen::MatrixXd delta = std::move(logits);
  for (Eigen::Index r = 0; r < delta.rows(); ++r) delta(r, labels[r]) -= 1.0;
  delta /= n;

  Layers g;
  if (arch.hidden == 0) {
    g.w2 = delta.transpose() * x_sel;
    g.b2 = delta.colwise().sum().transpose();
  } else {
    g.w2 = delta.transpose() * post;
    g.b2 = delta.colwise().sum().transpose();
    Eigen::MatrixXd da = delta * l.w2;
    if (arch.activation == Activation::kRelu) {
      da = da.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    } else {
      da = da.cwiseProduct((1.0 - post.array().square()).matrix());
    }
    g.w1 = da.transpose() * x_sel;
    g.b1 = da.colwise().sum().transpose();
  }
  *grad = flatten(arch, g);
  return loss;
}

double accuracy(const Architecture& arch, const Vec& theta, const Shard& shard) {
  if (shard.size() == 0) throw InvalidParameter("empty shard");
  const Layers l = unflatten(arch, theta);
  const Eigen::MatrixXd logits = forward(arch, l, shard.features, nullptr, nullptr);
  int correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    if (best == shard.labels[r]) ++correct;
  }
  return static_cast<double>(correct) / shard.size();
}

Objective empirical_loss(const Architecture& arch,
                         std::shared_ptr<const Shard> shard) {
  if (!shard || shard->size() == 0) {
    throw InvalidParameter("empirical loss needs a nonempty shard");
  }
  check_arch(arch);
  return Objective(
      arch.parameter_count(),
      [arch, shard](const Vec& theta) {
        return cross_entropy(arch, theta, *shard, nullptr);
      },
      [arch, shard](const Vec& theta) -> Vec {
        Vec g;
        cross_entropy(arch, theta, *shard, &g);
        return g;
      },
      Objective::Constants{}, std::nullopt, std::nullopt, "learner");
}

Vec minibatch_gradient(const Architecture& arch, const Vec& theta,
                       const Shard& shard, int batch, CounterRng& rng) {
  Vec g;
  if (batch <= 0 || batch >= shard.size()) {
    cross_entropy(arch, theta, shard, &g);
    return g;
  }
  // Partial Fisher-Yates: the first `batch` entries are a uniform sample
  // without replacement.
  std::vector<int> idx(shard.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < batch; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(shard.size() - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(batch);
  cross_entropy(arch, theta, shard, &g, idx);
  return g;
}

Vec sgd_step(const Architecture& arch, const Vec& theta, const Shard& shard,
             double rate, int batch, CounterRng& rng) {
  if (rate < 0) throw InvalidParameter("learning rate must be nonnegative");
  return theta - rate * minibatch_gradient(arch, theta, shard, batch, rng);
}

namespace {

void write_rows(std::ostream& out, int key, const Shard& s) {
  for (int r = 0; r < s.size(); ++r) {
    out << key << ',' << s.labels[r];
    for (Eigen::Index c = 0; c < s.features.cols(); ++c) {
      out << ',' << s.features(r, c);
    }
    out << '\n';
  }
}

std::vector<std::pair<int, Shard>> read_rows(const std::filesystem::path& file,
                                             int groups, int dim) {
  std::ifstream in(file);
  if (!in) throw InvalidParameter("cannot open " + file.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<std::vector<double>>> rows(groups);
  std::vector<std::vector<int>> labels(groups);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const int key = std::stoi(cell);
    std::getline(ss, cell, ',');
    const int label = std::stoi(cell);
    if (key < 0 || key >= groups) throw InvalidParameter("bad group id in " + file.string());
    std::vector<double> x;
    while (std::getline(ss, cell, ',')) x.push_back(std::stod(cell));
    if (static_cast<int>(x.size()) != dim) {
      throw InvalidParameter("bad feature count in " + file.string());
    }
    rows[key].push_back(std::move(x));
    labels[key].push_back(label);
  }
  std::vector<std::pair<int, Shard>> out;
  for (int g = 0; g < groups; ++g) {
    Shard s;
    s.features.resize(static_cast<Eigen::Index>(rows[g].size()), dim);
    for (std::size_t r = 0; r < rows[g].size(); ++r) {
      for (int c = 0; c < dim; ++c) s.features(static_cast<Eigen::Index>(r), c) = rows[g][r][c];
    }
    s.labels = labels[g];
    out.emplace_back(g, std::move(s));
  }
  return out;
}

}  // namespace

void write_dataset(const ClusteredDataset& data,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const DataSpec& s = data.spec;
  nlohmann::json manifest = {
      {"format", "fedcbo-clustered-dataset/1"},
      {"seed", s.seed},
      {"clusters", s.clusters},
      {"agents", s.agents},
      {"samples_per_agent", s.samples_per_agent},
      {"feature_dim", s.feature_dim},
      {"classes", s.classes},
      {"test_per_cluster", s.test_per_cluster},
      {"class_radius", s.class_radius},
      {"noise", s.noise},
      {"rotation_angles", data.rotation_angles},
      {"agent_cluster", data.agent_cluster},
      {"train_file", "train.csv"},
      {"test_file", "test.csv"},
  };
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';

  auto header = [&](std::ostream& out, const char* key) {
    out << key << ",label";
    for (int c = 0; c < s.feature_dim; ++c) out << ",x" << c;
    out << '\n';
  };
  std::ofstream train(dir / "train.csv");
  train.precision(17);
  header(train, "agent");
  for (int j = 0; j < static_cast<int>(data.shards.size()); ++j) {
    write_rows(train, j, data.shards[j]);
  }
  std::ofstream test(dir / "test.csv");
  test.precision(17);
  header(test, "cluster");
  for (int k = 0; k < static_cast<int>(data.test_sets.size()); ++k) {
    write_rows(test, k, data.test_sets[k]);
  }
}

ClusteredDataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw InvalidParameter("missing dataset manifest in " + dir.string());
  const nlohmann::json m = nlohmann::json::parse(in);
  ClusteredDataset data;
  DataSpec& s = data.spec;
  s.seed = m.at("seed").get<std::uint64_t>();
  s.clusters = m.at("clusters").get<int>();
  s.agents = m.at("agents").get<int>();
  s.samples_per_agent = m.at("samples_per_agent").get<int>();
  s.feature_dim = m.at("feature_dim").get<int>();
  s.classes = m.at("classes").get<int>();
  s.test_per_cluster = m.at("test_per_cluster").get<int>();
  s.class_radius = m.at("class_radius").get<double>();
  s.noise = m.at("noise").get<double>();
  s.allow_unequal_clusters = s.agents % s.clusters != 0;
  data.rotation_angles = m.at("rotation_angles").get<std::vector<double>>();
  data.agent_cluster = m.at("agent_cluster").get<std::vector<int>>();
  for (int c = 0; c < s.classes; ++c) {
    Vec mean = Vec::Zero(s.feature_dim);
    const double angle = 2.0 * std::numbers::pi * c / s.classes;
    mean[0] = s.class_radius * std::cos(angle);
    if (s.feature_dim > 1) mean[1] = s.class_radius * std::sin(angle);
    data.class_means.push_back(mean);
  }
  for (auto& [g, shard] : read_rows(dir / m.at("train_file").get<std::string>(),
                                    s.agents, s.feature_dim)) {
    data.shards.push_back(std::move(shard));
  }
  for (auto& [g, shard] : read_rows(dir / m.at("test_file").get<std::string>(),
                                    s.clusters, s.feature_dim)) {
    data.test_sets.push_back(std::move(shard));
  }
  return data;
}

}  // namespace fedcbo
