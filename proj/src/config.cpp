#include "ampnet/config.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

namespace ampnet {

namespace {

// Walks one JSON object, remembering which keys were read so that unknown
// keys can be rejected.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  std::int64_t integer(const std::string& key, std::int64_t def, std::int64_t min,
                       std::int64_t max = std::numeric_limits<std::int64_t>::max()) {
    if (!take(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) fail(at(key), "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < min) fail(at(key), "must be >= " + std::to_string(min));
    if (x > max) fail(at(key), "must be <= " + std::to_string(max));
    return x;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
    if (!take(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      fail(at(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  double number(const std::string& key, double def, double min, double max, bool min_exclusive = false) {
    if (!take(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    const auto x = v.get<double>();
    if (min_exclusive ? !(x > min) : !(x >= min))
      fail(at(key), std::string("must be ") + (min_exclusive ? "> " : ">= ") + std::to_string(min));
    if (!(x <= max)) fail(at(key), "must be <= " + std::to_string(max));
    return x;
  }

  bool boolean(const std::string& key, bool def) {
    if (!take(key)) return def;
    if (!j_.at(key).is_boolean()) fail(at(key), "expected a boolean");
    return j_.at(key).get<bool>();
  }

  std::string string(const std::string& key, const std::string& def, const std::vector<std::string>& allowed = {}) {
    if (!take(key)) return def;
    if (!j_.at(key).is_string()) fail(at(key), "expected a string");
    auto s = j_.at(key).get<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      fail(at(key), "unknown value '" + s + "' (expected one of: " + list + ")");
    }
    return s;
  }

  const Json* object(const std::string& key) {
    if (!take(key)) return nullptr;
    if (!j_.at(key).is_object()) fail(at(key), "expected an object");
    return &j_.at(key);
  }

  const Json* array(const std::string& key) {
    if (!take(key)) return nullptr;
    if (!j_.at(key).is_array()) fail(at(key), "expected an array");
    return &j_.at(key);
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError((path.empty() ? std::string("config") : path) + ": " + what);
  }

 private:
  bool take(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

constexpr std::int64_t kMaxInt = std::numeric_limits<int>::max();

ModelConfig read_model(const Json& j) {
  Reader r(j, "model");
  ModelConfig m;
  m.type = r.string("type", m.type, {"mlp", "rnn", "tree", "ggsnn"});
  if (const Json* dims = r.array("dims")) {
    m.dims.clear();
    for (std::size_t i = 0; i < dims->size(); ++i) {
      const auto& v = (*dims)[i];
      if (!v.is_number_integer() || v.get<std::int64_t>() < 1 || v.get<std::int64_t>() > kMaxInt)
        Reader::fail("model.dims[" + std::to_string(i) + "]", "expected a positive integer");
      m.dims.push_back(v.get<int>());
    }
    if (m.dims.size() < 2) Reader::fail("model.dims", "needs at least input and output sizes");
  }
  m.hidden = static_cast<int>(r.integer("hidden", m.type == "tree" ? 8 : (m.type == "ggsnn" ? 5 : m.hidden), 1, kMaxInt));
  m.embed = static_cast<int>(r.integer("embed", 0, 0, kMaxInt));
  m.steps = static_cast<int>(r.integer("steps", m.steps, 0, kMaxInt));
  m.embedding_muf = r.integer("embedding_muf", 0, 0);
  m.replicate = r.string("replicate", "");
  m.replicas = static_cast<int>(r.integer("replicas", 1, 1, 64));
  if (m.replicas > 1 && m.replicate.empty()) Reader::fail("model.replicate", "required when replicas > 1");
  r.finish();
  return m;
}

DatasetConfig read_dataset(const Json& j, const std::string& model) {
  Reader r(j, "dataset");
  DatasetConfig d;
  d.type = r.string("type", d.type, {"list_reduction", "synthetic_images", "mnist", "trees", "sst", "babi15"});
  const bool ok = (model == "mlp" && (d.type == "synthetic_images" || d.type == "mnist")) ||
                  (model == "rnn" && d.type == "list_reduction") ||
                  (model == "tree" && (d.type == "trees" || d.type == "sst")) ||
                  (model == "ggsnn" && d.type == "babi15");
  if (!ok) Reader::fail("dataset.type", "'" + d.type + "' cannot feed a '" + model + "' model");
  d.train = static_cast<std::size_t>(r.integer("train", static_cast<std::int64_t>(d.train), 1));
  d.valid = static_cast<std::size_t>(r.integer("valid", static_cast<std::int64_t>(d.valid), 1));
  d.seed_set = r.has("seed");
  d.seed = r.unsigned_integer("seed", 0);
  d.dim = static_cast<int>(r.integer("dim", d.dim, 1, kMaxInt));
  d.classes = static_cast<int>(r.integer("classes", d.classes, 2, kMaxInt));
  d.min_depth = static_cast<int>(r.integer("min_depth", d.min_depth, 1, 30));
  d.max_depth = static_cast<int>(r.integer("max_depth", d.max_depth, 1, 30));
  if (d.max_depth < d.min_depth) Reader::fail("dataset.max_depth", "must be >= min_depth");
  d.vocab = static_cast<int>(r.integer("vocab", d.vocab, 1, kMaxInt));
  d.num_nodes = static_cast<int>(r.integer("num_nodes", d.num_nodes, 8, kMaxInt));
  d.bucket = static_cast<std::size_t>(r.integer("bucket", 0, 0));
  d.train_images = r.string("train_images", "");
  d.train_labels = r.string("train_labels", "");
  d.valid_images = r.string("valid_images", "");
  d.valid_labels = r.string("valid_labels", "");
  d.train_path = r.string("train_path", "");
  d.valid_path = r.string("valid_path", "");
  if (d.type == "mnist")
    for (const char* k : {"train_images", "train_labels", "valid_images", "valid_labels"})
      if (j.value(k, std::string()).empty()) Reader::fail(std::string("dataset.") + k, "required for mnist");
  if (d.type == "sst")
    for (const char* k : {"train_path", "valid_path"})
      if (j.value(k, std::string()).empty()) Reader::fail(std::string("dataset.") + k, "required for sst");
  r.finish();
  return d;
}

OptimizerConfig read_optimizer(const Json& j) {
  Reader r(j, "train.optimizer");
  OptimizerConfig o;
  o.kind = parse_optimizer_kind(r.string("kind", "sgd", {"sgd", "momentum", "adam"}));
  o.lr = r.number("lr", o.lr, 0.0, 1e6, true);
  o.momentum = r.number("momentum", o.momentum, 0.0, 1.0);
  o.beta1 = r.number("beta1", o.beta1, 0.0, 1.0);
  o.beta2 = r.number("beta2", o.beta2, 0.0, 1.0);
  o.epsilon = r.number("epsilon", o.epsilon, 0.0, 1.0, true);
  r.finish();
  return o;
}

TrainConfig read_train(const Json& j) {
  Reader r(j, "train");
  TrainConfig t;
  t.threads = static_cast<int>(r.integer("threads", 1, 1, 1024));
  t.max_active_keys = static_cast<int>(r.integer("max_active_keys", 1, 1, 1 << 20));
  t.min_update_frequency = r.integer("min_update_frequency", 1, 1);
  if (const Json* o = r.object("muf_overrides")) {
    for (auto it = o->begin(); it != o->end(); ++it) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 1)
        Reader::fail("train.muf_overrides." + it.key(), "expected an integer >= 1");
      t.muf_overrides[it.key()] = it->get<std::int64_t>();
    }
  }
  if (const Json* o = r.object("optimizer")) t.optimizer = read_optimizer(*o);
  if (const Json* p = r.object("placement")) {
    for (auto it = p->begin(); it != p->end(); ++it) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 0 || it->get<std::int64_t>() >= t.threads)
        Reader::fail("train.placement." + it.key(), "expected a worker index in [0, threads)");
      t.placement[it.key()] = it->get<int>();
    }
  }
  t.diagnostics = r.boolean("diagnostics", false);
  t.stall_timeout_s = r.number("stall_timeout_s", t.stall_timeout_s, 0.0, 1e9, true);
  r.finish();
  return t;
}

}  // namespace

RunConfig RunConfig::from_json(const Json& j) {
  Reader r(j, "");
  RunConfig c;
  c.seed = r.unsigned_integer("seed", c.seed);
  c.epochs = static_cast<int>(r.integer("epochs", c.epochs, 1, 1000000));
  c.target_accuracy = r.number("target_accuracy", 0.0, 0.0, 1.0);
  c.event_log = r.boolean("event_log", false);
  if (const Json* m = r.object("model")) c.model = read_model(*m);
  else Reader::fail("model", "required");
  if (const Json* d = r.object("dataset")) c.dataset = read_dataset(*d, c.model.type);
  else Reader::fail("dataset", "required");
  if (const Json* t = r.object("train")) c.train = read_train(*t);
  c.train.seed = c.seed;
  if (const Json* g = r.object("gradcheck")) {
    Reader gr(*g, "gradcheck");
    c.gradcheck_instances = static_cast<std::size_t>(gr.integer("instances", 1, 1));
    c.gradcheck.step = gr.number("step", c.gradcheck.step, 0.0, 1.0, true);
    c.gradcheck.tolerance = gr.number("tolerance", c.gradcheck.tolerance, 0.0, 1.0, true);
    c.gradcheck.floor = gr.number("floor", c.gradcheck.floor, 0.0, 1.0, true);
    c.gradcheck.max_per_tensor = static_cast<std::size_t>(gr.integer("max_per_tensor", 0, 0));
    gr.finish();
  }
  c.gradcheck.seed = c.seed;
  r.finish();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

Json RunConfig::to_json() const {
  Json placement = Json::object();
  for (const auto& [k, v] : train.placement) placement[k] = v;
  Json overrides = Json::object();
  for (const auto& [k, v] : train.muf_overrides) overrides[k] = v;
  Json ds = {{"type", dataset.type},
             {"train", dataset.train},
             {"valid", dataset.valid},
             {"dim", dataset.dim},
             {"classes", dataset.classes},
             {"min_depth", dataset.min_depth},
             {"max_depth", dataset.max_depth},
             {"vocab", dataset.vocab},
             {"num_nodes", dataset.num_nodes},
             {"bucket", dataset.bucket}};
  if (dataset.seed_set) ds["seed"] = dataset.seed;
  for (const auto& [k, v] : {std::pair{"train_images", &dataset.train_images},
                             {"train_labels", &dataset.train_labels},
                             {"valid_images", &dataset.valid_images},
                             {"valid_labels", &dataset.valid_labels},
                             {"train_path", &dataset.train_path},
                             {"valid_path", &dataset.valid_path}})
    if (!v->empty()) ds[k] = *v;
  return {{"seed", seed},
          {"epochs", epochs},
          {"target_accuracy", target_accuracy},
          {"event_log", event_log},
          {"model",
           {{"type", model.type},
            {"dims", model.dims},
            {"hidden", model.hidden},
            {"embed", model.embed},
            {"steps", model.steps},
            {"embedding_muf", model.embedding_muf},
            {"replicate", model.replicate},
            {"replicas", model.replicas}}},
          {"dataset", ds},
          {"train",
           {{"threads", train.threads},
            {"max_active_keys", train.max_active_keys},
            {"min_update_frequency", train.min_update_frequency},
            {"muf_overrides", overrides},
            {"optimizer",
             {{"kind", to_string(train.optimizer.kind)},
              {"lr", train.optimizer.lr},
              {"momentum", train.optimizer.momentum},
              {"beta1", train.optimizer.beta1},
              {"beta2", train.optimizer.beta2},
              {"epsilon", train.optimizer.epsilon}}},
            {"placement", placement},
            {"diagnostics", train.diagnostics},
            {"stall_timeout_s", train.stall_timeout_s}}},
          {"gradcheck",
           {{"instances", gradcheck_instances},
            {"step", gradcheck.step},
            {"tolerance", gradcheck.tolerance},
            {"floor", gradcheck.floor},
            {"max_per_tensor", gradcheck.max_per_tensor}}}};
}

}  // namespace ampnet
