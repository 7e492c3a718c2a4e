#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ampnet/gradcheck.hpp"
#include "ampnet/graph_spec.hpp"
#include "ampnet/runtime.hpp"

namespace ampnet {

/// A schema violation. The message starts with the JSON path of the
/// offending value, e.g. "train.max_active_keys: must be >= 1".
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  /// "mlp", "rnn", "tree" or "ggsnn".
  std::string type = "rnn";
  std::vector<int> dims{20, 16, 16, 16, 4};
  int hidden = 128;
  int embed = 0;
  int steps = 2;
  /// Tree lookup table update frequency; 0 uses the run value.
  std::int64_t embedding_muf = 0;
  /// Replicate this PPT `replicas` times when replicas > 1.
  std::string replicate;
  int replicas = 1;
};

struct DatasetConfig {
  /// "list_reduction", "synthetic_images", "mnist", "trees", "sst" or "babi15".
  std::string type = "list_reduction";
  std::size_t train = 20000;
  std::size_t valid = 2000;
  /// Derived from the run seed when absent.
  std::uint64_t seed = 0;
  bool seed_set = false;
  int dim = 20;
  int classes = 4;
  int min_depth = 1;
  int max_depth = 4;
  int vocab = 16;
  int num_nodes = 54;
  /// Bucketed pump order with this batch size; 0 shuffles instances.
  std::size_t bucket = 0;
  std::string train_images, train_labels, valid_images, valid_labels;
  std::string train_path, valid_path;
};

struct RunConfig {
  ModelConfig model;
  DatasetConfig dataset;
  TrainConfig train;
  int epochs = 20;
  /// Early stop once validation accuracy reaches this value; 0 disables it.
  double target_accuracy = 0.0;
  std::uint64_t seed = 1;
  bool event_log = false;
  std::size_t gradcheck_instances = 1;
  GradcheckOptions gradcheck;

  /// Validates every field; throws ConfigError naming the path.
  static RunConfig from_json(const Json& j);
  static RunConfig load(const std::string& path);
  Json to_json() const;
};

}  // namespace ampnet
