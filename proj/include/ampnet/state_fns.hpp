#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ampnet/graph_spec.hpp"
#include "ampnet/state.hpp"

namespace ampnet {

// Declarative library of state functions used to parameterize Cond, Isu,
// Group, Ungroup and Flatmap nodes. All of them read only the state and the
// instance's aux structure, never the payload.

/// Integer operand: a state field, a constant, or an aux scalar.
struct Operand {
  enum class Kind { kField, kConstant, kAuxScalar } kind = Kind::kConstant;
  FieldId field = 0;
  std::int64_t constant = 0;
  std::string aux;

  static Operand parse(const Json& j);
  std::int64_t eval(const State& s) const;
};

/// Cond routing function. Variants:
///   {"type": "compare", "lhs": "t", "op": "<", "rhs": "len" | 3 | {"aux": "root"}}  ports true/false
///   {"type": "key_mod", "fields": ["id", "t"], "k": 3}                            ports "0".."k-1"
///   {"type": "switch", "field": "etype", "cases": 4}                               ports "0".."cases-1"
///   {"type": "constant", "ports": ["a", "b"], "port": "a"}
class Predicate {
 public:
  static Predicate parse(const Json& j);

  const std::vector<std::string>& ports() const noexcept { return ports_; }
  /// Returns the output port index; throws ProtocolError for an out-of-range switch.
  std::size_t route(const State& s) const;

 private:
  enum class Type { kCompare, kKeyMod, kSwitch, kConstant } type_ = Type::kConstant;
  Operand lhs_, rhs_;
  std::string op_;
  KeyFn key_;
  std::int64_t modulus_ = 1;
  FieldId field_ = 0;
  std::size_t constant_port_ = 0;
  std::vector<std::string> ports_;
};

/// Invertible state update. Variants:
///   {"type": "increment", "field": "t", "by": 1}
///   {"type": "ascend", "field": "node", "parent": "parent", "slot_field": "slot",
///    "slot": "child_slot", "children": ["child0", "child1"]}
/// `ascend` maps a tree node to (parent, child slot) using the instance aux
/// tables; its inverse maps (parent, slot) back to the child.
class IsuFn {
 public:
  static IsuFn parse(const Json& j);

  State apply(const State& s) const;
  State invert(const State& s) const;

 private:
  enum class Type { kIncrement, kAscend } type_ = Type::kIncrement;
  FieldId field_ = 0;
  std::int64_t by_ = 1;
  std::string parent_table_;
  FieldId slot_field_ = 0;
  std::string slot_table_;
  std::vector<std::string> child_tables_;
};

/// Expected member count. Variants:
///   {"const": 2} | {"aux_scalar": "num_nodes"} | {"aux_list_size": "in_edges", "index": "dst"} | {"field": "n"}
struct CountSpec {
  enum class Kind { kConstant, kAuxScalar, kAuxListSize, kField } kind = Kind::kConstant;
  std::int64_t constant = 1;
  std::string name;
  FieldId field = 0;

  static CountSpec parse(const Json& j);
  std::int64_t eval(const State& s) const;
};

/// Derives one field from the aux structure:
///   {"field": "edge", "list": "edges_by_type", "index": "etype"}  field = lists[index][position]
///   {"field": "dst", "table": "edge_dst", "index": "edge"}        field = table[index]
struct Expansion {
  FieldId field = 0;
  bool from_list = false;
  std::string name;
  FieldId index = 0;

  static Expansion parse(const Json& j);
  static std::vector<Expansion> parse_list(const Json& j);
  /// `position` is the row/fan-out index; only list expansions use it.
  void apply(State& s, std::int64_t position) const;
};

std::vector<std::string> parse_name_list(const Json& j);

}  // namespace ampnet
