#pragma once

#include <cstdint>
#include <ostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ampnet/graph_spec.hpp"
#include "ampnet/tensor.hpp"

namespace ampnet {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- list reduction ----

enum class ListOp { kMean = 0, kAltMean = 1, kRange = 2, kLen = 3 };
const char* to_string(ListOp op);

/// Token encoding: operations are tokens 0-3 (in ListOp order), digit d is
/// token 4 + d. The sequence is the op token followed by the digits.
inline constexpr int kListVocab = 14;
inline constexpr int kListClasses = 10;

struct ListReductionInstance {
  ListOp op = ListOp::kMean;
  std::vector<int> digits;
  int label = 0;

  std::vector<int> tokens() const;
};

/// Exact label: the rational result rounded half away from zero, then taken
/// modulo 10 into [0, 9]. alt_mean needs at least two digits.
int list_reduction_label(ListOp op, const std::vector<int>& digits);

/// `n` instances with 1-9 digits (2-9 for alt_mean), ops uniform.
std::vector<ListReductionInstance> gen_list_reduction(std::size_t n, std::uint64_t seed);

// ---- trees ----

/// Binary tree with one class label per node. Leaves carry a token. Node ids
/// are dense; `child0/child1/parent` use -1 for "none".
struct TreeInstance {
  std::vector<std::int64_t> parent;
  std::vector<std::int64_t> child0;
  std::vector<std::int64_t> child1;
  /// Position of a node below its parent (0 or 1), -1 for the root.
  std::vector<std::int64_t> slot;
  std::vector<int> token;
  std::vector<int> label;
  std::int64_t root = 0;

  std::size_t size() const noexcept { return parent.size(); }
  bool is_leaf(std::size_t v) const { return child0[v] < 0; }
  std::size_t leaf_count() const;
};

inline constexpr int kTreeClasses = 5;

/// Planted composition rule: a leaf's class is token % 5; a branch's class
/// is (left + right + 1) / 2 in integer arithmetic.
int tree_leaf_rule(int token);
int tree_branch_rule(int left, int right);

/// Random binary trees with depth in [min_depth, max_depth], labels from
/// the planted rule.
std::vector<TreeInstance> gen_trees(std::size_t n, int min_depth, int max_depth, int vocab, std::uint64_t seed);

/// Parsed s-expression sentiment tree: "(3 (2 a) (4 b))".
struct SstNode {
  int label = 0;
  std::string word;  // leaves only
  std::vector<SstNode> children;
};

/// Throws DatasetError with the character offset on malformed input.
SstNode parse_sst(const std::string& text);
std::string print_sst(const SstNode& tree);
std::vector<SstNode> load_sst_format(const std::string& path);
/// Flattens to a TreeInstance; unary chains are collapsed and keep the top
/// label. Words missing from `vocab` are appended to it.
TreeInstance sst_to_tree(const SstNode& root, std::vector<std::string>& vocab);

// ---- graphs ----

struct GraphEdge {
  std::int64_t src = 0;
  std::int64_t dst = 0;
  std::int64_t type = 0;
};

/// Directed typed graph with per-node annotation ids and a node-valued answer.
struct GraphInstance {
  std::int64_t num_nodes = 0;
  std::vector<int> annotation;
  std::vector<GraphEdge> edges;
  int label = 0;
};

/// Edge types of the bAbI-15-like task. Every node gets a self loop so that
/// each node has at least one incoming edge.
enum BabiEdgeType : int { kSelf = 0, kIsA = 1, kHasFear = 2, kIsARev = 3, kHasFearRev = 4 };
inline constexpr int kBabiEdgeTypes = 5;

/// Type-hierarchy deduction graphs: 4 species, 4 entities, each entity is-a
/// species, each species has-fear another species. The query entity is
/// annotated 1 and the answer is the species feared by its species. Nodes
/// beyond the first 8 are isolated padding (self loop only).
std::vector<GraphInstance> gen_babi15_like(std::size_t n, int num_nodes, std::uint64_t seed);

/// Answer by direct traversal of the is-a and has-fear edges.
int babi_answer_by_traversal(const GraphInstance& g);

// ---- dense images ----

struct DenseInstance {
  std::vector<Scalar> features;
  int label = 0;
};

/// Reads IDX image/label files (big-endian magic 0x00000803 / 0x00000801);
/// pixels scaled to [0, 1].
std::vector<DenseInstance> load_mnist_idx(const std::string& images_path, const std::string& labels_path);

/// Noisy class prototypes in [0, 1]^dim. Prototypes depend on `seed` only;
/// `split` selects an independent sample stream (train, validation, ...).
std::vector<DenseInstance> gen_synthetic_images(std::size_t n, int dim, int classes, std::uint64_t seed,
                                                std::uint64_t split);

// ---- utilities ----

/// Pump order: indices sorted by length, cut into batches of `batch`, batch
/// order shuffled with `seed`.
std::vector<std::size_t> bucket_order(const std::vector<std::size_t>& lengths, std::size_t batch, std::uint64_t seed);

Json to_json(const ListReductionInstance& x);
Json to_json(const TreeInstance& x);
Json to_json(const GraphInstance& x);
Json to_json(const DenseInstance& x);

template <typename T>
void write_jsonl(std::ostream& os, const std::vector<T>& data) {
  for (const auto& x : data) os << to_json(x).dump() << '\n';
}

}  // namespace ampnet
