#include "ampnet/state.hpp"

#include <algorithm>
#include <deque>
#include <mutex>
#include <sstream>
#include <unordered_map>

namespace ampnet {

namespace {

struct FieldRegistry {
  std::mutex mu;
  std::deque<std::string> names{"id"};
  std::unordered_map<std::string, FieldId> ids{{"id", kInstanceField}};
};

FieldRegistry& registry() {
  static FieldRegistry r;
  return r;
}

inline std::size_t mix(std::size_t h, std::uint64_t v) noexcept {
  v ^= v >> 33;
  v *= 0xff51afd7ed558ccdULL;
  v ^= v >> 33;
  return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

}  // namespace

FieldId intern_field(std::string_view name) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  auto it = r.ids.find(std::string(name));
  if (it != r.ids.end()) return it->second;
  if (r.names.size() >= 0xffff) throw std::length_error("too many state field names");
  const auto id = static_cast<FieldId>(r.names.size());
  r.names.emplace_back(name);
  r.ids.emplace(std::string(name), id);
  return id;
}

const std::string& field_name(FieldId id) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  if (id >= r.names.size()) throw std::out_of_range("unknown field id " + std::to_string(id));
  return r.names[id];
}

// ---- InstanceAux ----

std::int64_t InstanceAux::scalar(const std::string& name) const {
  auto it = scalars_.find(name);
  if (it == scalars_.end()) throw ProtocolError("instance aux has no scalar '" + name + "'");
  return it->second;
}

const std::vector<std::int64_t>& InstanceAux::table(const std::string& name) const {
  auto it = tables_.find(name);
  if (it == tables_.end()) throw ProtocolError("instance aux has no table '" + name + "'");
  return it->second;
}

const std::vector<std::vector<std::int64_t>>& InstanceAux::lists(const std::string& name) const {
  auto it = lists_.find(name);
  if (it == lists_.end()) throw ProtocolError("instance aux has no list table '" + name + "'");
  return it->second;
}

std::int64_t InstanceAux::table_at(const std::string& name, std::int64_t index) const {
  const auto& t = table(name);
  if (index < 0 || static_cast<std::size_t>(index) >= t.size())
    throw ProtocolError("aux table '" + name + "' index " + std::to_string(index) + " out of range");
  return t[static_cast<std::size_t>(index)];
}

const std::vector<std::int64_t>& InstanceAux::list_at(const std::string& name, std::int64_t index) const {
  const auto& l = lists(name);
  if (index < 0 || static_cast<std::size_t>(index) >= l.size())
    throw ProtocolError("aux list table '" + name + "' index " + std::to_string(index) + " out of range");
  return l[static_cast<std::size_t>(index)];
}

// ---- State ----

State::State(std::int64_t instance_id, std::initializer_list<std::pair<std::string_view, std::int64_t>> fields)
    : instance_id_(instance_id) {
  for (const auto& [name, value] : fields) set(name, value);
}

bool State::has(FieldId id) const noexcept { return find(id).has_value(); }

std::optional<std::int64_t> State::find(FieldId id) const noexcept {
  if (id == kInstanceField) return instance_id_;
  for (std::size_t i = 0; i < count_; ++i) {
    if (fields_[i].id == id) return fields_[i].value;
    if (fields_[i].id > id) break;
  }
  return std::nullopt;
}

std::int64_t State::get(FieldId id) const {
  auto v = find(id);
  if (!v) throw ProtocolError("state " + to_string() + " has no field '" + field_name(id) + "'");
  return *v;
}

void State::set(FieldId id, std::int64_t value) {
  if (id == kInstanceField) {
    instance_id_ = value;
    return;
  }
  std::size_t pos = 0;
  while (pos < count_ && fields_[pos].id < id) ++pos;
  if (pos < count_ && fields_[pos].id == id) {
    fields_[pos].value = value;
    return;
  }
  if (count_ == kMaxFields) throw ProtocolError("state field capacity exceeded adding '" + field_name(id) + "'");
  for (std::size_t i = count_; i > pos; --i) fields_[i] = fields_[i - 1];
  fields_[pos] = Field{id, value};
  ++count_;
}

void State::erase(FieldId id) {
  for (std::size_t i = 0; i < count_; ++i) {
    if (fields_[i].id == id) {
      for (std::size_t j = i; j + 1 < count_; ++j) fields_[j] = fields_[j + 1];
      --count_;
      return;
    }
  }
}

std::string State::to_string() const {
  std::ostringstream os;
  os << "{id=" << instance_id_;
  for (std::size_t i = 0; i < count_; ++i) os << ", " << field_name(fields_[i].id) << "=" << fields_[i].value;
  os << "}";
  return os.str();
}

std::size_t State::hash() const noexcept {
  std::size_t h = mix(0, static_cast<std::uint64_t>(instance_id_));
  for (std::size_t i = 0; i < count_; ++i) {
    h = mix(h, fields_[i].id);
    h = mix(h, static_cast<std::uint64_t>(fields_[i].value));
  }
  return h;
}

bool operator==(const State& a, const State& b) noexcept {
  if (a.instance_id_ != b.instance_id_ || a.count_ != b.count_) return false;
  for (std::size_t i = 0; i < a.count_; ++i)
    if (!(a.fields_[i] == b.fields_[i])) return false;
  return true;
}

bool operator<(const State& a, const State& b) noexcept {
  if (a.instance_id_ != b.instance_id_) return a.instance_id_ < b.instance_id_;
  const std::size_t n = std::min(a.count_, b.count_);
  for (std::size_t i = 0; i < n; ++i) {
    if (a.fields_[i].id != b.fields_[i].id) return a.fields_[i].id < b.fields_[i].id;
    if (a.fields_[i].value != b.fields_[i].value) return a.fields_[i].value < b.fields_[i].value;
  }
  return a.count_ < b.count_;
}

// ---- Key ----

void Key::push(std::int64_t v) {
  if (n_ == kMaxParts) throw ProtocolError("key capacity exceeded");
  v_[n_++] = v;
}

std::int64_t Key::sum() const noexcept {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < n_; ++i) s += v_[i];
  return s;
}

std::string Key::bytes() const {
  std::string out;
  out.reserve(n_ * 8);
  for (std::size_t i = 0; i < n_; ++i) {
    auto u = static_cast<std::uint64_t>(v_[i]);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
  }
  return out;
}

std::string Key::to_string() const {
  std::string s = "(";
  for (std::size_t i = 0; i < n_; ++i) {
    if (i) s += ",";
    s += std::to_string(v_[i]);
  }
  return s + ")";
}

bool operator<(const Key& a, const Key& b) noexcept {
  const std::size_t n = std::min(a.n_, b.n_);
  for (std::size_t i = 0; i < n; ++i)
    if (a.v_[i] != b.v_[i]) return a.v_[i] < b.v_[i];
  return a.n_ < b.n_;
}

std::size_t KeyHash::operator()(const Key& k) const noexcept {
  std::size_t h = k.size();
  for (std::size_t i = 0; i < k.size(); ++i) h = mix(h, static_cast<std::uint64_t>(k[i]));
  return h;
}

// ---- KeyFn ----

KeyFn::KeyFn(const std::vector<std::string>& field_names) {
  if (field_names.size() > Key::kMaxParts) throw std::invalid_argument("key function has too many fields");
  fields_.reserve(field_names.size());
  for (const auto& n : field_names) fields_.push_back(intern_field(n));
}

Key KeyFn::operator()(const State& s) const {
  Key k;
  for (FieldId f : fields_) {
    auto v = s.find(f);
    if (!v) throw ProtocolError("key field '" + field_name(f) + "' missing from state " + s.to_string());
    k.push(*v);
  }
  return k;
}

std::vector<std::string> KeyFn::names() const {
  std::vector<std::string> out;
  for (FieldId f : fields_) out.push_back(field_name(f));
  return out;
}

const char* to_string(Direction d) { return d == Direction::kForward ? "forward" : "backward"; }

}  // namespace ampnet
