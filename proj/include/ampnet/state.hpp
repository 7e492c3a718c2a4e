#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ampnet/tensor.hpp"

namespace ampnet {

class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A state key that is already present in a node cache.
class DuplicateKeyError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// A backward message whose key has no forward record.
class MissingKeyError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// Interned state field name. Interning happens while graphs are built; the
/// runtime only compares ids.
using FieldId = std::uint16_t;

/// Pseudo-field resolving to State::instance_id in key functions.
inline constexpr FieldId kInstanceField = 0;

FieldId intern_field(std::string_view name);
const std::string& field_name(FieldId id);

struct Field {
  FieldId id = 0;
  std::int64_t value = 0;
  friend bool operator==(const Field&, const Field&) = default;
};

/// Read-only per-instance structure shared by every message of an instance:
/// adjacency lists, tree parent tables, sizes.
class InstanceAux {
 public:
  void set_scalar(const std::string& name, std::int64_t v) { scalars_[name] = v; }
  void set_table(const std::string& name, std::vector<std::int64_t> t) { tables_[name] = std::move(t); }
  void set_lists(const std::string& name, std::vector<std::vector<std::int64_t>> l) { lists_[name] = std::move(l); }

  std::int64_t scalar(const std::string& name) const;
  const std::vector<std::int64_t>& table(const std::string& name) const;
  const std::vector<std::vector<std::int64_t>>& lists(const std::string& name) const;
  std::int64_t table_at(const std::string& name, std::int64_t index) const;
  const std::vector<std::int64_t>& list_at(const std::string& name, std::int64_t index) const;

 private:
  std::map<std::string, std::int64_t> scalars_;
  std::map<std::string, std::vector<std::int64_t>> tables_;
  std::map<std::string, std::vector<std::vector<std::int64_t>>> lists_;
};

using AuxPtr = std::shared_ptr<const InstanceAux>;

/// Algorithmic metadata carried by every message. Fields are kept sorted by
/// id so that equal field sets compare and hash equal regardless of the order
/// in which they were added.
class State {
 public:
  static constexpr std::size_t kMaxFields = 10;

  State() = default;
  explicit State(std::int64_t instance_id) : instance_id_(instance_id) {}
  State(std::int64_t instance_id, std::initializer_list<std::pair<std::string_view, std::int64_t>> fields);

  std::int64_t instance_id() const noexcept { return instance_id_; }
  void set_instance_id(std::int64_t id) noexcept { instance_id_ = id; }

  bool has(FieldId id) const noexcept;
  std::optional<std::int64_t> find(FieldId id) const noexcept;
  /// Throws ProtocolError if the field is absent.
  std::int64_t get(FieldId id) const;
  std::int64_t get(std::string_view name) const { return get(intern_field(name)); }
  void set(FieldId id, std::int64_t value);
  void set(std::string_view name, std::int64_t value) { set(intern_field(name), value); }
  void erase(FieldId id);

  std::size_t field_count() const noexcept { return count_; }
  const Field& field(std::size_t i) const { return fields_[i]; }

  const AuxPtr& aux() const noexcept { return aux_; }
  void set_aux(AuxPtr aux) { aux_ = std::move(aux); }

  std::string to_string() const;
  std::size_t hash() const noexcept;

  /// Aux handles are instance-shared references and do not take part in equality.
  friend bool operator==(const State& a, const State& b) noexcept;
  friend bool operator<(const State& a, const State& b) noexcept;

 private:
  std::int64_t instance_id_ = 0;
  std::array<Field, kMaxFields> fields_{};
  std::uint8_t count_ = 0;
  AuxPtr aux_;
};

/// Projection of a state onto a subset of its fields; the cache index used by
/// every caching node.
class Key {
 public:
  static constexpr std::size_t kMaxParts = 8;

  void push(std::int64_t v);
  std::size_t size() const noexcept { return n_; }
  std::int64_t operator[](std::size_t i) const { return v_[i]; }
  std::int64_t sum() const noexcept;
  /// Little-endian byte encoding of the projected values.
  std::string bytes() const;
  std::string to_string() const;

  friend bool operator==(const Key& a, const Key& b) noexcept {
    if (a.n_ != b.n_) return false;
    for (std::size_t i = 0; i < a.n_; ++i)
      if (a.v_[i] != b.v_[i]) return false;
    return true;
  }
  friend bool operator<(const Key& a, const Key& b) noexcept;

 private:
  std::array<std::int64_t, kMaxParts> v_{};
  std::uint8_t n_ = 0;
};

struct KeyHash {
  std::size_t operator()(const Key& k) const noexcept;
};

struct StateHash {
  std::size_t operator()(const State& s) const noexcept { return s.hash(); }
};

/// Named projection from State to Key.
class KeyFn {
 public:
  KeyFn() = default;
  explicit KeyFn(const std::vector<std::string>& field_names);

  /// Throws ProtocolError if a referenced field is missing from the state.
  Key operator()(const State& s) const;
  const std::vector<FieldId>& fields() const noexcept { return fields_; }
  std::vector<std::string> names() const;
  bool empty() const noexcept { return fields_.empty(); }

 private:
  std::vector<FieldId> fields_;
};

enum class Direction : std::uint8_t { kForward, kBackward };

const char* to_string(Direction d);

struct Message {
  Direction direction = Direction::kForward;
  Tensor payload;
  State state;
  /// Forward-only evaluation: nodes do not record activations and the loss
  /// does not emit gradients.
  bool inference = false;
};

}  // namespace ampnet
