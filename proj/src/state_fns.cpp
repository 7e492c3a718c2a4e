#include "ampnet/state_fns.hpp"

#include <stdexcept>

namespace ampnet {

namespace {

std::int64_t aux_scalar(const State& s, const std::string& name) {
  if (!s.aux()) throw ProtocolError("state " + s.to_string() + " carries no aux structure (needed '" + name + "')");
  return s.aux()->scalar(name);
}

const InstanceAux& aux_of(const State& s) {
  if (!s.aux()) throw ProtocolError("state " + s.to_string() + " carries no aux structure");
  return *s.aux();
}

}  // namespace

std::vector<std::string> parse_name_list(const Json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  return j.get<std::vector<std::string>>();
}

// ---- Operand ----

Operand Operand::parse(const Json& j) {
  Operand o;
  if (j.is_number_integer()) {
    o.kind = Kind::kConstant;
    o.constant = j.get<std::int64_t>();
  } else if (j.is_string()) {
    o.kind = Kind::kField;
    o.field = intern_field(j.get<std::string>());
  } else if (j.is_object() && j.contains("aux")) {
    o.kind = Kind::kAuxScalar;
    o.aux = j.at("aux").get<std::string>();
  } else {
    throw std::invalid_argument("operand must be an integer, a field name or {\"aux\": name}: " + j.dump());
  }
  return o;
}

std::int64_t Operand::eval(const State& s) const {
  switch (kind) {
    case Kind::kField: return s.get(field);
    case Kind::kConstant: return constant;
    case Kind::kAuxScalar: return aux_scalar(s, aux);
  }
  return 0;
}

// ---- Predicate ----

Predicate Predicate::parse(const Json& j) {
  Predicate p;
  const auto type = j.at("type").get<std::string>();
  if (type == "compare") {
    p.type_ = Type::kCompare;
    p.lhs_ = Operand::parse(j.at("lhs"));
    p.rhs_ = Operand::parse(j.at("rhs"));
    p.op_ = j.at("op").get<std::string>();
    if (p.op_ != "<" && p.op_ != "<=" && p.op_ != "==" && p.op_ != "!=" && p.op_ != ">" && p.op_ != ">=")
      throw std::invalid_argument("compare predicate: unknown operator '" + p.op_ + "'");
    p.ports_ = {"true", "false"};
  } else if (type == "key_mod") {
    p.type_ = Type::kKeyMod;
    p.key_ = KeyFn(parse_name_list(j.at("fields")));
    p.modulus_ = j.at("k").get<std::int64_t>();
    if (p.modulus_ < 1) throw std::invalid_argument("key_mod predicate: k must be >= 1");
    for (std::int64_t r = 0; r < p.modulus_; ++r) p.ports_.push_back(std::to_string(r));
  } else if (type == "switch") {
    p.type_ = Type::kSwitch;
    p.field_ = intern_field(j.at("field").get<std::string>());
    const auto cases = j.at("cases").get<std::int64_t>();
    if (cases < 1) throw std::invalid_argument("switch predicate: cases must be >= 1");
    for (std::int64_t r = 0; r < cases; ++r) p.ports_.push_back(std::to_string(r));
  } else if (type == "constant") {
    p.type_ = Type::kConstant;
    p.ports_ = j.at("ports").get<std::vector<std::string>>();
    const auto port = j.at("port").get<std::string>();
    bool found = false;
    for (std::size_t i = 0; i < p.ports_.size(); ++i) {
      if (p.ports_[i] == port) {
        p.constant_port_ = i;
        found = true;
      }
    }
    if (!found) throw std::invalid_argument("constant predicate: port '" + port + "' is not among its ports");
  } else {
    throw std::invalid_argument("unknown predicate type '" + type + "'");
  }
  return p;
}

std::size_t Predicate::route(const State& s) const {
  switch (type_) {
    case Type::kCompare: {
      const auto a = lhs_.eval(s);
      const auto b = rhs_.eval(s);
      bool r = false;
      if (op_ == "<") r = a < b;
      else if (op_ == "<=") r = a <= b;
      else if (op_ == "==") r = a == b;
      else if (op_ == "!=") r = a != b;
      else if (op_ == ">") r = a > b;
      else r = a >= b;
      return r ? 0 : 1;
    }
    case Type::kKeyMod: {
      const auto sum = key_(s).sum();
      return static_cast<std::size_t>(((sum % modulus_) + modulus_) % modulus_);
    }
    case Type::kSwitch: {
      const auto v = s.get(field_);
      if (v < 0 || static_cast<std::size_t>(v) >= ports_.size())
        throw ProtocolError("switch predicate: value " + std::to_string(v) + " of field '" + field_name(field_) +
                            "' has no port");
      return static_cast<std::size_t>(v);
    }
    case Type::kConstant: return constant_port_;
  }
  return 0;
}

// ---- IsuFn ----

IsuFn IsuFn::parse(const Json& j) {
  IsuFn f;
  const auto type = j.at("type").get<std::string>();
  if (type == "increment") {
    f.type_ = Type::kIncrement;
    f.field_ = intern_field(j.at("field").get<std::string>());
    f.by_ = j.value("by", std::int64_t{1});
    if (f.by_ == 0) throw std::invalid_argument("increment isu: 'by' must be non-zero");
  } else if (type == "ascend") {
    f.type_ = Type::kAscend;
    f.field_ = intern_field(j.at("field").get<std::string>());
    f.parent_table_ = j.at("parent").get<std::string>();
    f.slot_field_ = intern_field(j.at("slot_field").get<std::string>());
    f.slot_table_ = j.at("slot").get<std::string>();
    f.child_tables_ = j.at("children").get<std::vector<std::string>>();
    if (f.child_tables_.empty()) throw std::invalid_argument("ascend isu: needs at least one child table");
  } else {
    throw std::invalid_argument("unknown isu function type '" + type + "'");
  }
  return f;
}

State IsuFn::apply(const State& s) const {
  State out = s;
  switch (type_) {
    case Type::kIncrement:
      out.set(field_, s.get(field_) + by_);
      break;
    case Type::kAscend: {
      const auto& aux = aux_of(s);
      const auto v = s.get(field_);
      const auto parent = aux.table_at(parent_table_, v);
      if (parent < 0) throw ProtocolError("ascend isu: node " + std::to_string(v) + " has no parent");
      out.set(field_, parent);
      out.set(slot_field_, aux.table_at(slot_table_, v));
      break;
    }
  }
  return out;
}

State IsuFn::invert(const State& s) const {
  State out = s;
  switch (type_) {
    case Type::kIncrement:
      out.set(field_, s.get(field_) - by_);
      break;
    case Type::kAscend: {
      const auto& aux = aux_of(s);
      const auto parent = s.get(field_);
      const auto slot = s.get(slot_field_);
      if (slot < 0 || static_cast<std::size_t>(slot) >= child_tables_.size())
        throw ProtocolError("ascend isu: slot " + std::to_string(slot) + " out of range");
      out.set(field_, aux.table_at(child_tables_[static_cast<std::size_t>(slot)], parent));
      out.erase(slot_field_);
      break;
    }
  }
  return out;
}

// ---- CountSpec ----

CountSpec CountSpec::parse(const Json& j) {
  CountSpec c;
  if (j.is_number_integer()) {
    c.constant = j.get<std::int64_t>();
  } else if (j.contains("const")) {
    c.constant = j.at("const").get<std::int64_t>();
  } else if (j.contains("aux_scalar")) {
    c.kind = Kind::kAuxScalar;
    c.name = j.at("aux_scalar").get<std::string>();
  } else if (j.contains("aux_list_size")) {
    c.kind = Kind::kAuxListSize;
    c.name = j.at("aux_list_size").get<std::string>();
    c.field = intern_field(j.at("index").get<std::string>());
  } else if (j.contains("field")) {
    c.kind = Kind::kField;
    c.field = intern_field(j.at("field").get<std::string>());
  } else {
    throw std::invalid_argument("count spec must be an integer or one of const/aux_scalar/aux_list_size/field: " +
                                j.dump());
  }
  if (c.kind == Kind::kConstant && c.constant < 0) throw std::invalid_argument("count must be non-negative");
  return c;
}

std::int64_t CountSpec::eval(const State& s) const {
  switch (kind) {
    case Kind::kConstant: return constant;
    case Kind::kAuxScalar: return aux_scalar(s, name);
    case Kind::kAuxListSize: return static_cast<std::int64_t>(aux_of(s).list_at(name, s.get(field)).size());
    case Kind::kField: return s.get(field);
  }
  return 0;
}

// ---- Expansion ----

Expansion Expansion::parse(const Json& j) {
  Expansion e;
  e.field = intern_field(j.at("field").get<std::string>());
  if (j.contains("list")) {
    e.from_list = true;
    e.name = j.at("list").get<std::string>();
  } else {
    e.name = j.at("table").get<std::string>();
  }
  e.index = intern_field(j.at("index").get<std::string>());
  return e;
}

std::vector<Expansion> Expansion::parse_list(const Json& j) {
  std::vector<Expansion> out;
  if (j.is_null()) return out;
  for (const auto& e : j) out.push_back(parse(e));
  return out;
}

void Expansion::apply(State& s, std::int64_t position) const {
  const auto& aux = aux_of(s);
  const auto idx = s.get(index);
  if (from_list) {
    const auto& list = aux.list_at(name, idx);
    if (position < 0 || static_cast<std::size_t>(position) >= list.size())
      throw ProtocolError("expansion: position " + std::to_string(position) + " out of range of list '" + name + "'[" +
                          std::to_string(idx) + "]");
    s.set(field, list[static_cast<std::size_t>(position)]);
  } else {
    s.set(field, aux.table_at(name, idx));
  }
}

}  // namespace ampnet
