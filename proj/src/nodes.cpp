#include "ampnet/nodes.hpp"

#include <stdexcept>

#include "node_impl.hpp"

namespace ampnet {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::unique_ptr<Node> make_node(const NodeSpec& spec, const NodeContext& ctx) {
  if (spec.id.empty()) throw std::invalid_argument("node id must not be empty");
  if (spec.id.find(':') != std::string::npos) throw std::invalid_argument("node id '" + spec.id + "' contains ':'");
  try {
    if (auto n = detail::make_transform_node(spec, ctx)) return n;
    if (auto n = detail::make_control_node(spec)) return n;
    if (auto n = detail::make_aggregate_node(spec)) return n;
    if (auto n = detail::make_loss_node(spec)) return n;
  } catch (const Json::exception& e) {
    throw std::invalid_argument("node '" + spec.id + "' (" + spec.kind + "): bad configuration: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("node '" + spec.id + "' (" + spec.kind + "): " + e.what());
  }
  throw std::invalid_argument("node '" + spec.id + "': unknown kind '" + spec.kind + "'");
}

bool is_parameterized_kind(const std::string& kind) {
  return kind == "linear" || kind == "embedding" || kind == "gru";
}

std::uint64_t node_seed(std::uint64_t run_seed, const NodeSpec& spec) {
  std::string init_key = spec.id;
  if (spec.config.contains("init_seed")) {
    const auto& v = spec.config.at("init_seed");
    init_key = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return splitmix64(run_seed ^ splitmix64(fnv1a(init_key)));
}

}  // namespace ampnet
