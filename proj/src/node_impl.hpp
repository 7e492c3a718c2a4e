#pragma once

// Shared helpers for the node implementations. Not installed.

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ampnet/nodes.hpp"
#include "ampnet/state_fns.hpp"

namespace ampnet::detail {

/// Key-indexed cache with the insert-once / consume-once contract shared by
/// every caching node.
template <typename T>
class KeyedCache {
 public:
  KeyedCache(const std::string* owner, const char* name) : owner_(owner), name_(name) {}

  bool contains(const Key& k) const { return map_.count(k) != 0; }

  T& insert(const Key& k, T value) {
    auto [it, inserted] = map_.try_emplace(k, std::move(value));
    if (!inserted)
      throw DuplicateKeyError("node '" + *owner_ + "': duplicate key " + k.to_string() + " in " + name_ +
                              " cache (keying function is not injective on in-flight states)");
    return it->second;
  }

  T* find(const Key& k) {
    auto it = map_.find(k);
    return it == map_.end() ? nullptr : &it->second;
  }

  T& at(const Key& k, const State& s) {
    auto it = map_.find(k);
    if (it == map_.end()) missing(k, s);
    return it->second;
  }

  T take(const Key& k, const State& s) {
    auto it = map_.find(k);
    if (it == map_.end()) missing(k, s);
    T v = std::move(it->second);
    map_.erase(it);
    return v;
  }

  void erase(const Key& k) { map_.erase(k); }
  std::size_t size() const noexcept { return map_.size(); }
  void clear() { map_.clear(); }

  void append_keys(std::vector<std::string>& out) const {
    for (const auto& [k, v] : map_) out.push_back(std::string(name_) + ":" + k.to_string());
  }

 private:
  [[noreturn]] void missing(const Key& k, const State& s) const {
    throw MissingKeyError("node '" + *owner_ + "': no " + name_ + " cache entry for key " + k.to_string() +
                          " (state " + s.to_string() + ")");
  }

  const std::string* owner_;
  const char* name_;
  std::unordered_map<Key, T, KeyHash> map_;
};

inline KeyFn key_from_config(const Json& config) {
  if (!config.contains("key")) return KeyFn({"id"});
  return KeyFn(parse_name_list(config.at("key")));
}

inline Message make_message(Direction d, Tensor payload, State state, bool inference = false) {
  Message m;
  m.direction = d;
  m.payload = std::move(payload);
  m.state = std::move(state);
  m.inference = inference;
  return m;
}

// Factories, one per implementation file.
std::unique_ptr<Node> make_transform_node(const NodeSpec& spec, const NodeContext& ctx);
std::unique_ptr<Node> make_control_node(const NodeSpec& spec);
std::unique_ptr<Node> make_aggregate_node(const NodeSpec& spec);
std::unique_ptr<Node> make_loss_node(const NodeSpec& spec);

}  // namespace ampnet::detail
