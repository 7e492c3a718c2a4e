#include "ampnet/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>

namespace ampnet {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Rounds num/den (den > 0) half away from zero.
std::int64_t round_ratio(std::int64_t num, std::int64_t den) {
  const std::int64_t mag = (2 * (num < 0 ? -num : num) + den) / (2 * den);
  return num < 0 ? -mag : mag;
}

}  // namespace

// ---- list reduction ----

const char* to_string(ListOp op) {
  switch (op) {
    case ListOp::kMean: return "mean";
    case ListOp::kAltMean: return "alt_mean";
    case ListOp::kRange: return "range";
    case ListOp::kLen: return "len";
  }
  return "?";
}

std::vector<int> ListReductionInstance::tokens() const {
  std::vector<int> t{static_cast<int>(op)};
  for (int d : digits) t.push_back(4 + d);
  return t;
}

int list_reduction_label(ListOp op, const std::vector<int>& digits) {
  if (digits.empty()) throw DatasetError("list reduction needs at least one digit");
  std::int64_t value = 0;
  switch (op) {
    case ListOp::kMean: {
      const std::int64_t sum = std::accumulate(digits.begin(), digits.end(), std::int64_t{0});
      value = round_ratio(sum, static_cast<std::int64_t>(digits.size()));
      break;
    }
    case ListOp::kAltMean: {
      if (digits.size() < 2) throw DatasetError("alt_mean needs at least two digits");
      std::int64_t even = 0, odd = 0, ne = 0, no = 0;
      for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i % 2 == 0) {
          even += digits[i];
          ++ne;
        } else {
          odd += digits[i];
          ++no;
        }
      }
      value = round_ratio(even * no - odd * ne, ne * no);
      break;
    }
    case ListOp::kRange: {
      const auto [lo, hi] = std::minmax_element(digits.begin(), digits.end());
      value = *hi - *lo;
      break;
    }
    case ListOp::kLen: value = static_cast<std::int64_t>(digits.size()); break;
  }
  return static_cast<int>(((value % 10) + 10) % 10);
}

std::vector<ListReductionInstance> gen_list_reduction(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DatasetError("gen_list_reduction: n must be positive");
  std::mt19937_64 rng(mix(seed, 0x11));
  std::vector<ListReductionInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ListReductionInstance x;
    x.op = static_cast<ListOp>(uniform_int(rng, 0, 3));
    const int len = uniform_int(rng, x.op == ListOp::kAltMean ? 2 : 1, 9);
    for (int j = 0; j < len; ++j) x.digits.push_back(uniform_int(rng, 0, 9));
    x.label = list_reduction_label(x.op, x.digits);
    out.push_back(std::move(x));
  }
  return out;
}

// ---- trees ----

std::size_t TreeInstance::leaf_count() const {
  std::size_t c = 0;
  for (std::size_t v = 0; v < size(); ++v)
    if (is_leaf(v)) ++c;
  return c;
}

int tree_leaf_rule(int token) { return token % kTreeClasses; }
int tree_branch_rule(int left, int right) { return (left + right + 1) / 2; }

namespace {

struct TreeBuilder {
  TreeInstance t;

  std::int64_t add() {
    t.parent.push_back(-1);
    t.child0.push_back(-1);
    t.child1.push_back(-1);
    t.slot.push_back(-1);
    t.token.push_back(-1);
    t.label.push_back(0);
    return static_cast<std::int64_t>(t.parent.size() - 1);
  }

  void link(std::int64_t parent, std::int64_t left, std::int64_t right) {
    t.child0[parent] = left;
    t.child1[parent] = right;
    t.parent[left] = parent;
    t.parent[right] = parent;
    t.slot[left] = 0;
    t.slot[right] = 1;
  }

  // Children are created before their parent, so node ids are a post-order.
  std::int64_t grow(std::mt19937_64& rng, int depth, int target, bool forced, int vocab) {
    const bool branch = depth < target && (forced || std::bernoulli_distribution(0.5)(rng));
    if (!branch) {
      const auto v = add();
      t.token[v] = uniform_int(rng, 0, vocab - 1);
      t.label[v] = tree_leaf_rule(t.token[v]);
      return v;
    }
    const bool left_forced = forced && std::bernoulli_distribution(0.5)(rng);
    const auto l = grow(rng, depth + 1, target, left_forced, vocab);
    const auto r = grow(rng, depth + 1, target, forced && !left_forced, vocab);
    const auto v = add();
    link(v, l, r);
    t.label[v] = tree_branch_rule(t.label[l], t.label[r]);
    return v;
  }
};

}  // namespace

std::vector<TreeInstance> gen_trees(std::size_t n, int min_depth, int max_depth, int vocab, std::uint64_t seed) {
  if (min_depth < 1 || max_depth < min_depth) throw DatasetError("gen_trees: need 1 <= min_depth <= max_depth");
  if (vocab < 1) throw DatasetError("gen_trees: vocab must be positive");
  std::mt19937_64 rng(mix(seed, 0x22));
  std::vector<TreeInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TreeBuilder b;
    const int target = uniform_int(rng, min_depth, max_depth);
    b.t.root = b.grow(rng, 0, target, true, vocab);
    out.push_back(std::move(b.t));
  }
  return out;
}

namespace {

class SstParser {
 public:
  explicit SstParser(const std::string& s) : s_(s) {}

  SstNode parse_all() {
    SstNode n = parse_node();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return n;
  }

  SstNode parse_node() {
    skip_ws();
    expect('(');
    skip_ws();
    SstNode node;
    const auto start = pos_;
    bool neg = false;
    if (pos_ < s_.size() && s_[pos_] == '-') {
      neg = true;
      ++pos_;
    }
    if (pos_ >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      pos_ = start;
      fail("expected an integer label");
    }
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])))
      node.label = node.label * 10 + (s_[pos_++] - '0');
    if (neg) node.label = -node.label;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      while (true) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == '(') node.children.push_back(parse_node());
        else break;
      }
    } else {
      const auto w0 = pos_;
      while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) && s_[pos_] != '(' &&
             s_[pos_] != ')')
        ++pos_;
      if (pos_ == w0) fail("expected a word or a subtree");
      node.word = s_.substr(w0, pos_ - w0);
    }
    skip_ws();
    expect(')');
    return node;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  void expect(char c) {
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw DatasetError("sst parse error at offset " + std::to_string(pos_) + ": " + what);
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

SstNode parse_sst(const std::string& text) { return SstParser(text).parse_all(); }

std::string print_sst(const SstNode& tree) {
  std::string out = "(" + std::to_string(tree.label);
  if (tree.children.empty()) {
    out += " " + tree.word;
  } else {
    for (const auto& c : tree.children) out += " " + print_sst(c);
  }
  return out + ")";
}

std::vector<SstNode> load_sst_format(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open '" + path + "'");
  std::vector<SstNode> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_sst(line));
    } catch (const DatasetError& e) {
      throw DatasetError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

TreeInstance sst_to_tree(const SstNode& root, std::vector<std::string>& vocab) {
  TreeBuilder b;
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], static_cast<int>(i));

  auto rec = [&](auto&& self, const SstNode& n) -> std::int64_t {
    const SstNode* cur = &n;
    while (cur->children.size() == 1) cur = &cur->children.front();
    if (cur->children.size() > 2) throw DatasetError("sst tree is not binary");
    if (cur->children.empty()) {
      auto [it, inserted] = index.emplace(cur->word, static_cast<int>(vocab.size()));
      if (inserted) vocab.push_back(cur->word);
      const auto v = b.add();
      b.t.token[v] = it->second;
      b.t.label[v] = n.label;
      return v;
    }
    const auto l = self(self, cur->children[0]);
    const auto r = self(self, cur->children[1]);
    const auto v = b.add();
    b.link(v, l, r);
    b.t.label[v] = n.label;
    return v;
  };
  b.t.root = rec(rec, root);
  return std::move(b.t);
}

// ---- graphs ----

std::vector<GraphInstance> gen_babi15_like(std::size_t n, int num_nodes, std::uint64_t seed) {
  if (num_nodes < 8) throw DatasetError("gen_babi15_like: num_nodes must be >= 8");
  std::mt19937_64 rng(mix(seed, 0x33));
  std::vector<GraphInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    GraphInstance g;
    g.num_nodes = num_nodes;
    g.annotation.assign(static_cast<std::size_t>(num_nodes), 0);
    std::vector<std::int64_t> ids(8);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::int64_t* species = ids.data();
    const std::int64_t* entity = ids.data() + 4;

    std::vector<int> fear(4);
    for (int s = 0; s < 4; ++s) {
      int f = uniform_int(rng, 0, 2);
      if (f >= s) ++f;
      fear[static_cast<std::size_t>(s)] = f;
    }
    std::vector<int> kind(4);
    for (int e = 0; e < 4; ++e) kind[static_cast<std::size_t>(e)] = uniform_int(rng, 0, 3);

    for (std::int64_t v = 0; v < num_nodes; ++v) g.edges.push_back({v, v, kSelf});
    for (int e = 0; e < 4; ++e) {
      const auto s = species[kind[static_cast<std::size_t>(e)]];
      g.edges.push_back({entity[e], s, kIsA});
      g.edges.push_back({s, entity[e], kIsARev});
    }
    for (int s = 0; s < 4; ++s) {
      const auto f = species[fear[static_cast<std::size_t>(s)]];
      g.edges.push_back({species[s], f, kHasFear});
      g.edges.push_back({f, species[s], kHasFearRev});
    }
    std::shuffle(g.edges.begin(), g.edges.end(), rng);

    const int q = uniform_int(rng, 0, 3);
    g.annotation[static_cast<std::size_t>(entity[q])] = 1;
    g.label = static_cast<int>(species[fear[static_cast<std::size_t>(kind[static_cast<std::size_t>(q)])]]);
    out.push_back(std::move(g));
  }
  return out;
}

int babi_answer_by_traversal(const GraphInstance& g) {
  auto query = std::find(g.annotation.begin(), g.annotation.end(), 1);
  if (query == g.annotation.end()) throw DatasetError("graph has no annotated query node");
  auto follow = [&](std::int64_t from, int type) {
    for (const auto& e : g.edges)
      if (e.src == from && e.type == type) return e.dst;
    throw DatasetError("node " + std::to_string(from) + " has no edge of type " + std::to_string(type));
  };
  const auto species = follow(query - g.annotation.begin(), kIsA);
  return static_cast<int>(follow(species, kHasFear));
}

// ---- dense images ----

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace

std::vector<DenseInstance> load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (img.size() < 16) throw DatasetError(images_path + ": file too short for an IDX image header");
  if (lab.size() < 8) throw DatasetError(labels_path + ": file too short for an IDX label header");
  if (be32(img, 0) != 0x00000803) throw DatasetError(images_path + ": bad magic number (expected 0x00000803)");
  if (be32(lab, 0) != 0x00000801) throw DatasetError(labels_path + ": bad magic number (expected 0x00000801)");
  const std::size_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  const std::size_t nl = be32(lab, 4);
  const std::size_t dim = rows * cols;
  if (img.size() != 16 + n * dim)
    throw DatasetError(images_path + ": length " + std::to_string(img.size()) + " does not match header (" +
                       std::to_string(16 + n * dim) + " bytes expected)");
  if (lab.size() != 8 + nl)
    throw DatasetError(labels_path + ": length " + std::to_string(lab.size()) + " does not match header");
  if (n != nl) throw DatasetError("image count " + std::to_string(n) + " != label count " + std::to_string(nl));

  std::vector<DenseInstance> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].features.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) out[i].features[j] = static_cast<Scalar>(img[16 + i * dim + j]) / Scalar(255);
    out[i].label = lab[8 + i];
  }
  return out;
}

std::vector<DenseInstance> gen_synthetic_images(std::size_t n, int dim, int classes, std::uint64_t seed,
                                                std::uint64_t split) {
  if (dim < 1 || classes < 2) throw DatasetError("gen_synthetic_images: need dim >= 1 and classes >= 2");
  std::mt19937_64 proto_rng(mix(seed, 0x44));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> protos(static_cast<std::size_t>(classes), std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& p : protos)
    for (auto& v : p) v = unit(proto_rng);

  std::mt19937_64 rng(mix(mix(seed, 0x55), split));
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<DenseInstance> out(n);
  for (auto& x : out) {
    x.label = uniform_int(rng, 0, classes - 1);
    x.features.resize(static_cast<std::size_t>(dim));
    for (int j = 0; j < dim; ++j) {
      const double v = protos[static_cast<std::size_t>(x.label)][static_cast<std::size_t>(j)] + noise(rng);
      x.features[static_cast<std::size_t>(j)] = static_cast<Scalar>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

// ---- utilities ----

std::vector<std::size_t> bucket_order(const std::vector<std::size_t>& lengths, std::size_t batch, std::uint64_t seed) {
  if (batch == 0) throw std::invalid_argument("bucket batch size must be positive");
  std::vector<std::size_t> idx(lengths.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < idx.size(); i += batch)
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                         idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), i + batch)));
  std::mt19937_64 rng(mix(seed, 0x66));
  std::shuffle(batches.begin(), batches.end(), rng);
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (const auto& b : batches) out.insert(out.end(), b.begin(), b.end());
  return out;
}

Json to_json(const ListReductionInstance& x) {
  return {{"op", to_string(x.op)}, {"digits", x.digits}, {"tokens", x.tokens()}, {"label", x.label}};
}

Json to_json(const TreeInstance& x) {
  return {{"root", x.root},     {"parent", x.parent}, {"child0", x.child0}, {"child1", x.child1},
          {"token", x.token},   {"label", x.label}};
}

Json to_json(const GraphInstance& x) {
  Json edges = Json::array();
  for (const auto& e : x.edges) edges.push_back({e.src, e.dst, e.type});
  return {{"num_nodes", x.num_nodes}, {"annotation", x.annotation}, {"edges", edges}, {"label", x.label}};
}

Json to_json(const DenseInstance& x) { return {{"features", x.features}, {"label", x.label}}; }

}  // namespace ampnet
