#pragma once

#include <string>
#include <vector>

#include "ampnet/datasets.hpp"
#include "ampnet/graph_spec.hpp"
#include "ampnet/runtime.hpp"

namespace ampnet {

// Model graph builders and the matching instance converters. Controller port
// names used by the converters are fixed by the builders.

/// Fully connected ReLU network: dims = {in, h1, ..., out}. Ports "x", "label".
GraphSpec build_mlp_spec(const std::vector<int>& dims);
Instance mlp_instance(const DenseInstance& x);

/// Recurrent cell over token sequences: embed -> [x | h] -> linear -> relu,
/// looping on `t < len`, then a linear readout. Ports "tokens", "h0", "label".
struct RnnOptions {
  int hidden = 128;
  int embed = 0;  // 0 means `hidden`
  int vocab = kListVocab;
  int classes = kListClasses;
};
GraphSpec build_rnn_spec(const RnnOptions& opt);
Instance rnn_instance(const std::vector<int>& tokens, int label, int hidden);
Instance rnn_instance(const ListReductionInstance& x, int hidden);

/// Bottom-up tree network with a classifier at every node. Leaf tokens
/// enter on "leaves", per-node labels on "labels".
struct TreeOptions {
  int hidden = 8;
  int vocab = 16;
  int classes = kTreeClasses;
  /// Update frequency of the embedding table (other nodes use the run value).
  std::int64_t embedding_muf = 0;  // 0 keeps the run value
};
GraphSpec build_tree_spec(const TreeOptions& opt);
Instance tree_instance(const TreeInstance& t);

/// Gated graph network with one linear message function per edge type and
/// a per-node readout scored by a softmax over nodes. Ports "annotations",
/// "label".
struct GgsnnOptions {
  int hidden = 5;
  int steps = 2;
  int edge_types = kBabiEdgeTypes;
  int annotation_vocab = 2;
};
GraphSpec build_ggsnn_spec(const GgsnnOptions& opt);
Instance ggsnn_instance(const GraphInstance& g);

}  // namespace ampnet
