#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "erp/dataio.hpp"
#include "erp/error.hpp"
#include "erp/keyvalue.hpp"
#include "erp/nn.hpp"
#include "erp/rng.hpp"
#include "erp/types.hpp"

namespace erp {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t init_seed = 42;

  void validate() const {
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::invariant,
            "learning_rate must be positive");
    require(batch_size >= 2 && batch_size % 2 == 0, ErrorCode::invariant,
            "batch_size must be even and >= 2");
  }
};

// Assignment of every non-target epoch to one of n_groups groups. Targets
// are not partitioned; every group shares all of them.
struct PartitionPlan {
  std::size_t n_groups = 0;
  std::uint64_t shuffle_seed = 0;
  std::vector<std::size_t> nontarget_indices;  // ascending epoch indices
  std::vector<std::uint32_t> group_of;         // parallel to nontarget_indices

  std::vector<std::size_t> members(std::size_t group) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nontarget_indices.size(); ++i)
      if (group_of[i] == group) out.push_back(nontarget_indices[i]);
    return out;
  }

  std::vector<std::size_t> group_sizes() const {
    std::vector<std::size_t> sizes(n_groups, 0);
    for (auto g : group_of) ++sizes[g];
    return sizes;
  }

  friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

inline std::vector<std::size_t> indices_with_label(std::span<const Label> labels, Label wanted) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == wanted) out.push_back(i);
  return out;
}

// Shuffled round-robin: non-target indices are permuted with the seed, then
// position p goes to group p mod n_groups. Group sizes differ by at most one.
inline PartitionPlan partition(std::span<const Label> labels, std::size_t n_groups, std::uint64_t seed) {
  require(n_groups >= 1, ErrorCode::invariant, "n_groups must be >= 1");
  auto nontargets = indices_with_label(labels, Label::nontarget);
  require(!indices_with_label(labels, Label::target).empty(), ErrorCode::single_class,
          "partition needs at least one target epoch");
  require(nontargets.size() >= n_groups, ErrorCode::invariant,
          "need at least " + std::to_string(n_groups) + " non-target epochs, have " +
              std::to_string(nontargets.size()));

  PartitionPlan plan;
  plan.n_groups = n_groups;
  plan.shuffle_seed = seed;
  plan.nontarget_indices = nontargets;
  plan.group_of.assign(nontargets.size(), 0);

  std::vector<std::size_t> order(nontargets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(seed);
  rng.shuffle(std::span(order));
  for (std::size_t p = 0; p < order.size(); ++p)
    plan.group_of[order[p]] = static_cast<std::uint32_t>(p % n_groups);
  return plan;
}

// One pass over a group: each batch holds batch_size/2 group members and the
// same number of targets. Group members appear exactly once (the last batch
// may be ragged); targets are drawn from a shuffled stream that reshuffles
// whenever it runs out. Within a batch, targets come first.
inline std::vector<std::vector<std::size_t>> balanced_batches(const PartitionPlan& plan, std::size_t group_id,
                                                              std::span<const Label> labels,
                                                              std::size_t batch_size, std::uint64_t epoch_seed) {
  require(batch_size >= 2 && batch_size % 2 == 0, ErrorCode::invariant, "batch_size must be even and >= 2");
  require(group_id < plan.n_groups, ErrorCode::out_of_range, "group id out of range");
  auto group = plan.members(group_id);
  require(!group.empty(), ErrorCode::invariant, "group " + std::to_string(group_id) + " is empty");
  auto targets = indices_with_label(labels, Label::target);
  require(!targets.empty(), ErrorCode::single_class, "no target epochs to pair with");

  SplitMix64 rng(epoch_seed);
  rng.shuffle(std::span(group));
  rng.shuffle(std::span(targets));

  const std::size_t half = batch_size / 2;
  std::size_t next_target = 0;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < group.size(); start += half) {
    const std::size_t take = std::min(half, group.size() - start);
    std::vector<std::size_t> batch;
    batch.reserve(2 * take);
    for (std::size_t i = 0; i < take; ++i) {
      if (next_target == targets.size()) {
        rng.shuffle(std::span(targets));
        next_target = 0;
      }
      batch.push_back(targets[next_target++]);
    }
    batch.insert(batch.end(), group.begin() + static_cast<std::ptrdiff_t>(start),
                 group.begin() + static_cast<std::ptrdiff_t>(start + take));
    batches.push_back(std::move(batch));
  }
  return batches;
}

enum class EnsembleMode { shared_weights, independent_predictors };

inline std::string to_string(EnsembleMode mode) {
  return mode == EnsembleMode::shared_weights ? "shared" : "independent";
}

inline EnsembleMode parse_ensemble_mode(const std::string& text) {
  if (text == "shared" || text == "shared_weights") return EnsembleMode::shared_weights;
  if (text == "independent" || text == "independent_predictors") return EnsembleMode::independent_predictors;
  throw Error(ErrorCode::malformed, "mode must be 'shared' or 'independent', got '" + text + "'");
}

struct EnsembleConfig {
  EnsembleMode mode = EnsembleMode::shared_weights;
  std::size_t n_groups = 4;
  std::uint64_t shuffle_seed = 7;
  TrainConfig train;

  void validate() const {
    train.validate();
    require(n_groups >= 1, ErrorCode::invariant, "n_groups must be >= 1");
  }
};

// round(non-target count / target count): 4 for a 0.2 target ratio.
inline std::size_t groups_for_ratio(std::size_t n_targets, std::size_t n_nontargets) {
  require(n_targets > 0, ErrorCode::single_class, "no target epochs");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                      static_cast<double>(n_nontargets) / static_cast<double>(n_targets))));
}

struct StepResult {
  std::vector<Gradients> group_gradients;  // mean gradient per group batch
  std::vector<double> group_losses;
  std::optional<Gradients> averaged;  // shared mode only
};

// One synchronous update. Shared mode: networks holds one network; the mean
// of per-group batch gradients (summed group 0..n-1) drives one SGD step.
// Independent mode: network k is updated with group k's gradient only.
// A null batch pointer means the group has no batch at this step.
inline StepResult ensemble_train_step(std::vector<Network>& networks, const EpochSet& data,
                                      std::span<const std::vector<std::size_t>* const> batches,
                                      EnsembleMode mode, double learning_rate) {
  require(!batches.empty(), ErrorCode::invariant, "no group batches");
  if (mode == EnsembleMode::shared_weights)
    require(networks.size() == 1, ErrorCode::invariant, "shared mode trains exactly one network");
  else
    require(networks.size() == batches.size(), ErrorCode::invariant,
            "independent mode needs one network per group");

  StepResult step;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    if (batches[k] == nullptr) continue;
    const Network& net = mode == EnsembleMode::shared_weights ? networks[0] : networks[k];
    BatchResult r = batch_gradients(net, data, *batches[k]);
    require(r.gradients.all_finite(), ErrorCode::non_finite,
            "non-finite gradient in group " + std::to_string(k) + " (mean batch loss " +
                std::to_string(r.mean_loss) + ")");
    step.group_gradients.push_back(std::move(r.gradients));
    step.group_losses.push_back(r.mean_loss);
  }
  require(!step.group_gradients.empty(), ErrorCode::invariant, "every group batch is empty");

  if (mode == EnsembleMode::shared_weights) {
    Gradients avg(networks[0].arch);
    for (const auto& g : step.group_gradients) avg += g;
    avg *= 1.0 / static_cast<double>(step.group_gradients.size());
    networks[0] = sgd_step(std::move(networks[0]), avg, learning_rate);
    step.averaged = std::move(avg);
  } else {
    std::size_t used = 0;
    for (std::size_t k = 0; k < batches.size(); ++k) {
      if (batches[k] == nullptr) continue;
      networks[k] = sgd_step(std::move(networks[k]), step.group_gradients[used++], learning_rate);
    }
  }
  return step;
}

inline StepResult ensemble_train_step(std::vector<Network>& networks, const EpochSet& data,
                                      const std::vector<std::vector<std::size_t>>& batches,
                                      EnsembleMode mode, double learning_rate) {
  std::vector<const std::vector<std::size_t>*> ptrs;
  for (const auto& b : batches) ptrs.push_back(&b);
  return ensemble_train_step(networks, data, std::span<const std::vector<std::size_t>* const>(ptrs), mode,
                             learning_rate);
}

struct TrainedEnsemble {
  EnsembleMode mode = EnsembleMode::shared_weights;
  std::vector<Network> networks;
  PartitionPlan plan;
  std::vector<double> loss_trace;  // mean training loss per pass
  EnsembleConfig config;

  friend bool operator==(const TrainedEnsemble& a, const TrainedEnsemble& b) {
    return a.mode == b.mode && a.networks == b.networks && a.plan == b.plan && a.loss_trace == b.loss_trace;
  }
};

// Seed of the batch shuffles for (pass, group).
inline std::uint64_t batch_seed(std::uint64_t shuffle_seed, std::size_t pass, std::size_t group) {
  return derive_seed(derive_seed(shuffle_seed, 1000 + pass), group);
}

// Network k of an independent ensemble is initialized from its own stream.
inline std::uint64_t member_init_seed(std::uint64_t init_seed, std::size_t member) {
  return member == 0 ? init_seed : derive_seed(init_seed, member);
}

// Runs cfg.train.epochs passes. Within a pass every group walks its own
// balanced batches in lockstep; when groups have unequal batch counts the
// shorter ones sit out the final steps and the average runs over the groups
// that contributed.
inline TrainedEnsemble train(const EpochSet& train_set, const EnsembleConfig& cfg) {
  cfg.validate();
  train_set.validate();
  train_set.require_both_classes();

  TrainedEnsemble ens;
  ens.mode = cfg.mode;
  ens.config = cfg;
  ens.plan = partition(train_set.labels, cfg.n_groups, cfg.shuffle_seed);

  const Architecture arch = Architecture::standard(train_set.n_channels, train_set.n_samples);
  const std::size_t n_networks = cfg.mode == EnsembleMode::shared_weights ? 1 : cfg.n_groups;
  for (std::size_t k = 0; k < n_networks; ++k)
    ens.networks.push_back(init_network(arch, member_init_seed(cfg.train.init_seed, k)));

  for (std::size_t pass = 0; pass < cfg.train.epochs; ++pass) {
    std::vector<std::vector<std::vector<std::size_t>>> group_batches;
    std::size_t steps = 0;
    for (std::size_t g = 0; g < cfg.n_groups; ++g) {
      group_batches.push_back(balanced_batches(ens.plan, g, train_set.labels, cfg.train.batch_size,
                                               batch_seed(cfg.shuffle_seed, pass, g)));
      steps = std::max(steps, group_batches.back().size());
    }
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<const std::vector<std::size_t>*> batch_ptrs(cfg.n_groups, nullptr);
      for (std::size_t g = 0; g < cfg.n_groups; ++g)
        if (s < group_batches[g].size()) batch_ptrs[g] = &group_batches[g][s];
      const StepResult step = ensemble_train_step(
          ens.networks, train_set, std::span<const std::vector<std::size_t>* const>(batch_ptrs), cfg.mode,
          cfg.train.learning_rate);
      for (double l : step.group_losses) loss_sum += l;
      loss_count += step.group_losses.size();
    }
    ens.loss_trace.push_back(loss_sum / static_cast<double>(loss_count));
  }
  return ens;
}

struct PlainTrainResult {
  Network network;
  std::vector<double> loss_trace;
};

// Baseline: ordinary minibatch SGD over the full, imbalanced training set.
inline PlainTrainResult train_plain(const EpochSet& train_set, const TrainConfig& cfg, std::uint64_t shuffle_seed) {
  cfg.validate();
  train_set.validate();
  train_set.require_both_classes();
  PlainTrainResult result{init_network(Architecture::standard(train_set.n_channels, train_set.n_samples),
                                       cfg.init_seed),
                          {}};
  std::vector<std::size_t> order(train_set.n_epochs);
  for (std::size_t pass = 0; pass < cfg.epochs; ++pass) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(batch_seed(shuffle_seed, pass, 0));
    rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      BatchResult r = batch_gradients(result.network, train_set, batch);
      result.network = sgd_step(std::move(result.network), r.gradients, cfg.learning_rate);
      loss_sum += r.mean_loss;
      ++n_batches;
    }
    result.loss_trace.push_back(loss_sum / static_cast<double>(n_batches));
  }
  return result;
}

// Shared mode: the single network's probability. Independent mode: the
// arithmetic mean over members.
inline std::vector<double> predict(const TrainedEnsemble& ens, const EpochSet& set) {
  require(!ens.networks.empty(), ErrorCode::invariant, "ensemble has no networks");
  const Architecture& arch = ens.networks.front().arch;
  require(set.n_channels == arch.n_channels && set.n_samples == arch.n_samples, ErrorCode::dimension,
          "data is " + std::to_string(set.n_channels) + " channels x " + std::to_string(set.n_samples) +
              " samples, model expects " + std::to_string(arch.n_channels) + " x " +
              std::to_string(arch.n_samples));
  std::vector<double> probs(set.n_epochs, 0.0);
  for (std::size_t e = 0; e < set.n_epochs; ++e) {
    const Matrix x = epoch_matrix(set, e);
    double sum = 0.0;
    for (const Network& net : ens.networks) sum += predict(net, x);
    probs[e] = sum / static_cast<double>(ens.networks.size());
  }
  return probs;
}

inline std::vector<double> predict(const Network& net, const EpochSet& set) {
  TrainedEnsemble single;
  single.networks.push_back(net);
  return predict(single, set);
}

// ---- persistence --------------------------------------------------------
//
// <dir>/ensemble.txt    key=value: mode, n_groups, seeds, hyperparameters,
//                       models, partition and loss file names
// <dir>/model_<k>.erpm  one per network
// <dir>/partition.csv   epoch_index,group
// <dir>/loss.csv        epoch,loss

inline void save_ensemble(const TrainedEnsemble& ens, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  KeyValueFile kv;
  kv.set("mode", to_string(ens.mode));
  kv.set_number("n_groups", ens.plan.n_groups);
  kv.set_number("init_seed", ens.config.train.init_seed);
  kv.set_number("shuffle_seed", ens.plan.shuffle_seed);
  kv.set_number("learning_rate", ens.config.train.learning_rate);
  kv.set_number("epochs", ens.config.train.epochs);
  kv.set_number("batch_size", ens.config.train.batch_size);
  kv.set_number("n_models", ens.networks.size());
  std::string models;
  for (std::size_t k = 0; k < ens.networks.size(); ++k) {
    const std::string name = "model_" + std::to_string(k) + ".erpm";
    save_model(ens.networks[k], dir / name);
    models += (k ? "," : "") + name;
  }
  kv.set("models", models);
  kv.set("partition", "partition.csv");
  kv.set("loss_trace", "loss.csv");
  kv.save(dir / "ensemble.txt");

  std::ofstream part(dir / "partition.csv", std::ios::binary | std::ios::trunc);
  part << "epoch_index,group\n";
  for (std::size_t i = 0; i < ens.plan.nontarget_indices.size(); ++i)
    part << ens.plan.nontarget_indices[i] << ',' << ens.plan.group_of[i] << '\n';
  require(static_cast<bool>(part), ErrorCode::io, "cannot write partition.csv");

  std::ofstream loss(dir / "loss.csv", std::ios::binary | std::ios::trunc);
  loss << "epoch,loss\n";
  loss.precision(17);
  for (std::size_t i = 0; i < ens.loss_trace.size(); ++i) loss << (i + 1) << ',' << ens.loss_trace[i] << '\n';
  require(static_cast<bool>(loss), ErrorCode::io, "cannot write loss.csv");
}

inline TrainedEnsemble load_ensemble(const std::filesystem::path& dir) {
  const KeyValueFile kv = KeyValueFile::load(dir / "ensemble.txt");
  TrainedEnsemble ens;
  ens.mode = parse_ensemble_mode(kv.at("mode"));
  ens.config.mode = ens.mode;
  ens.config.n_groups = static_cast<std::size_t>(kv.get_int("n_groups", 0));
  ens.config.train.init_seed = static_cast<std::uint64_t>(kv.get_int("init_seed", 0));
  ens.config.shuffle_seed = static_cast<std::uint64_t>(kv.get_int("shuffle_seed", 0));
  ens.config.train.learning_rate = kv.get_double("learning_rate", 0.01);
  ens.config.train.epochs = static_cast<std::size_t>(kv.get_int("epochs", 0));
  ens.config.train.batch_size = static_cast<std::size_t>(kv.get_int("batch_size", 32));

  std::stringstream models(kv.at("models"));
  std::string name;
  while (std::getline(models, name, ',')) ens.networks.push_back(load_model(dir / name));
  const auto expected = ens.mode == EnsembleMode::shared_weights ? 1 : ens.config.n_groups;
  require(ens.networks.size() == expected, ErrorCode::invariant,
          "ensemble.txt lists " + std::to_string(ens.networks.size()) + " models, mode needs " +
              std::to_string(expected));
  for (const auto& net : ens.networks)
    require(net.arch == ens.networks.front().arch, ErrorCode::dimension, "ensemble members differ in shape");

  ens.plan.n_groups = ens.config.n_groups;
  ens.plan.shuffle_seed = ens.config.shuffle_seed;
  std::ifstream part(dir / kv.at("partition"));
  require(static_cast<bool>(part), ErrorCode::io, "cannot open partition file");
  std::string line;
  std::getline(part, line);
  while (std::getline(part, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, ErrorCode::malformed, "partition row without comma");
    ens.plan.nontarget_indices.push_back(
        static_cast<std::size_t>(KeyValueFile::parse_int("epoch_index", line.substr(0, comma))));
    ens.plan.group_of.push_back(static_cast<std::uint32_t>(KeyValueFile::parse_int("group", line.substr(comma + 1))));
  }

  std::ifstream loss(dir / kv.at("loss_trace"));
  require(static_cast<bool>(loss), ErrorCode::io, "cannot open loss trace");
  std::getline(loss, line);
  while (std::getline(loss, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, ErrorCode::malformed, "loss row without comma");
    ens.loss_trace.push_back(KeyValueFile::parse_double("loss", line.substr(comma + 1)));
  }
  return ens;
}

}  // namespace erp
