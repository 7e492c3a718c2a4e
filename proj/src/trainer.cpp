#include "ampnet/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ampnet/datasets.hpp"
#include "ampnet/models.hpp"

namespace ampnet {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t dataset_seed(const RunConfig& cfg) {
  return cfg.dataset.seed_set ? cfg.dataset.seed : component_seed(cfg.seed, "dataset");
}

std::vector<DenseInstance> dense_split(const RunConfig& cfg, bool train) {
  const auto& d = cfg.dataset;
  const std::size_t n = train ? d.train : d.valid;
  if (d.type == "synthetic_images") return gen_synthetic_images(n, d.dim, d.classes, dataset_seed(cfg), train ? 0 : 1);
  if (!fs::exists(train ? d.train_images : d.valid_images))
    throw ConfigError(std::string("dataset.") + (train ? "train_images" : "valid_images") + ": file not found");
  auto all = train ? load_mnist_idx(d.train_images, d.train_labels) : load_mnist_idx(d.valid_images, d.valid_labels);
  if (all.size() > n) all.resize(n);
  return all;
}

std::vector<TreeInstance> tree_split(const RunConfig& cfg, bool train) {
  const auto& d = cfg.dataset;
  if (d.type == "trees")
    return gen_trees(train ? d.train : d.valid, d.min_depth, d.max_depth, d.vocab,
                     component_seed(dataset_seed(cfg), train ? "train" : "valid"));
  std::vector<std::string> vocab;
  std::vector<TreeInstance> out;
  for (const bool part : {true, false}) {
    const auto& path = part ? d.train_path : d.valid_path;
    if (!fs::exists(path)) throw ConfigError(std::string("dataset.") + (part ? "train_path" : "valid_path") + ": file not found");
    auto parsed = load_sst_format(path);
    const std::size_t n = std::min(parsed.size(), part ? d.train : d.valid);
    for (std::size_t i = 0; i < n; ++i) {
      auto t = sst_to_tree(parsed[i], vocab);
      if (part == train) out.push_back(std::move(t));
    }
  }
  if (vocab.size() > static_cast<std::size_t>(d.vocab))
    throw ConfigError("dataset.vocab: the treebank has " + std::to_string(vocab.size()) + " distinct words");
  for (const auto& t : out)
    for (int l : t.label)
      if (l < 0 || l >= kTreeClasses) throw DatasetError("sst label " + std::to_string(l) + " outside [0, 5)");
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::uint64_t component_seed(std::uint64_t run_seed, const std::string& component) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : component) h = (h ^ c) * 1099511628211ULL;
  return splitmix(run_seed ^ splitmix(h));
}

GraphSpec model_spec(const RunConfig& cfg) {
  const auto& m = cfg.model;
  const auto& d = cfg.dataset;
  if (m.type == "mlp") {
    if (d.type == "synthetic_images" && (m.dims.front() != d.dim || m.dims.back() != d.classes))
      throw ConfigError("model.dims: must start with dataset.dim and end with dataset.classes");
    return build_mlp_spec(m.dims);
  }
  if (m.type == "rnn") return build_rnn_spec({m.hidden, m.embed, kListVocab, kListClasses});
  if (m.type == "tree") return build_tree_spec({m.hidden, d.vocab, kTreeClasses, m.embedding_muf});
  if (m.type == "ggsnn") return build_ggsnn_spec({m.hidden, m.steps, kBabiEdgeTypes, 2});
  throw ConfigError("model.type: unknown model '" + m.type + "'");
}

IrGraph build_model_graph(const RunConfig& cfg) {
  IrGraph g = IrGraph::build(model_spec(cfg));
  if (cfg.model.replicas > 1) {
    if (g.index_of(cfg.model.replicate) < 0)
      throw ConfigError("model.replicate: no node '" + cfg.model.replicate + "' in the " + cfg.model.type + " graph");
    g = build_replicated(g, cfg.model.replicate, cfg.model.replicas);
  }
  return g;
}

LoadedData load_data(const RunConfig& cfg) {
  LoadedData out;
  const auto& m = cfg.model;
  const auto& d = cfg.dataset;
  if (m.type == "mlp") {
    for (const bool train : {true, false})
      for (const auto& x : dense_split(cfg, train)) {
        (train ? out.train : out.valid).push_back(mlp_instance(x));
        if (train) out.train_sizes.push_back(1);
      }
  } else if (m.type == "rnn") {
    const auto seed = dataset_seed(cfg);
    for (const auto& x : gen_list_reduction(d.train, component_seed(seed, "train"))) {
      out.train.push_back(rnn_instance(x, m.hidden));
      out.train_sizes.push_back(x.digits.size() + 1);
    }
    for (const auto& x : gen_list_reduction(d.valid, component_seed(seed, "valid")))
      out.valid.push_back(rnn_instance(x, m.hidden));
  } else if (m.type == "tree") {
    for (const bool train : {true, false})
      for (const auto& t : tree_split(cfg, train)) {
        (train ? out.train : out.valid).push_back(tree_instance(t));
        if (train) out.train_sizes.push_back(t.size());
      }
  } else if (m.type == "ggsnn") {
    const auto seed = dataset_seed(cfg);
    for (const auto& g : gen_babi15_like(d.train, d.num_nodes, component_seed(seed, "train"))) {
      out.train.push_back(ggsnn_instance(g));
      out.train_sizes.push_back(g.edges.size());
    }
    for (const auto& g : gen_babi15_like(d.valid, d.num_nodes, component_seed(seed, "valid")))
      out.valid.push_back(ggsnn_instance(g));
  }
  if (out.train.empty() || out.valid.empty()) throw DatasetError("dataset produced no instances");
  return out;
}

Json weights_json(Runtime& rt) {
  Json out = Json::object();
  for (const auto& id : rt.graph().topological_ids()) {
    const ParamBlock* b = rt.node(id).params();
    if (!b) continue;
    Json node = Json::object();
    for (std::size_t p = 0; p < b->size(); ++p)
      node[b->names[p]] = {{"shape", {b->weights[p].rows(), b->weights[p].cols()}}, {"values", b->weights[p].values()}};
    out[id] = std::move(node);
  }
  return out;
}

TrainResult train(const RunConfig& cfg, const std::string& out_dir) {
  return train(cfg, build_model_graph(cfg), load_data(cfg), out_dir);
}

TrainResult train(const RunConfig& cfg, const IrGraph& graph, const LoadedData& data, const std::string& out_dir) {
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file((fs::path(out_dir) / "config.json").string(), cfg.to_json().dump(2) + "\n");
    csv.open(fs::path(out_dir) / "metrics.csv");
    if (!csv) throw IoError("cannot write metrics.csv in '" + out_dir + "'");
    csv << kMetricsHeader << '\n';
    if (cfg.event_log) {
      tc.event_log = (fs::path(out_dir) / "events.jsonl").string();
      fs::remove(tc.event_log);
    }
  }

  Runtime rt(graph, tc);
  TrainResult result;
  const auto order_seed = component_seed(cfg.seed, "order");
  std::vector<std::size_t> idx(data.train.size());
  std::iota(idx.begin(), idx.end(), 0);
  double wall = 0;
  std::size_t seen = 0;
  for (int e = 1; e <= cfg.epochs; ++e) {
    const auto epoch_seed = splitmix(order_seed + static_cast<std::uint64_t>(e));
    if (cfg.dataset.bucket > 0) {
      idx = bucket_order(data.train_sizes, cfg.dataset.bucket, epoch_seed);
    } else {
      std::mt19937_64 rng(epoch_seed);
      std::shuffle(idx.begin(), idx.end(), rng);
    }
    std::vector<Instance> ordered;
    ordered.reserve(idx.size());
    for (auto i : idx) ordered.push_back(data.train[i]);

    const auto tr = rt.train_epoch(ordered);
    const auto va = rt.evaluate(data.valid);
    wall += tr.wall_s;
    seen += tr.instances;
    EpochRow row{e, wall, tr.mean_loss, va.accuracy, tr.inst_per_s, tr.mean_staleness};
    result.rows.push_back(row);
    if (csv.is_open()) {
      csv << row.epoch << ',' << row.wall_s << ',' << row.train_loss << ',' << row.valid_acc << ',' << row.inst_per_s
          << ',' << row.mean_staleness << '\n';
      csv.flush();
    }
    if (cfg.target_accuracy > 0 && va.accuracy >= cfg.target_accuracy) {
      result.reached = true;
      result.epochs_to_target = e;
      result.wall_to_target_s = wall;
      break;
    }
  }
  result.inst_per_s = wall > 0 ? static_cast<double>(seen) / wall : 0.0;
  result.final_valid_acc = result.rows.empty() ? 0.0 : result.rows.back().valid_acc;
  if (!out_dir.empty()) write_file((fs::path(out_dir) / "weights.json").string(), weights_json(rt).dump() + "\n");
  rt.shutdown();
  return result;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Json train_repeated(const RunConfig& cfg, const std::string& out_dir, int repeat) {
  if (repeat < 1) throw std::invalid_argument("repeat must be >= 1");
  std::vector<double> epochs, walls, rates, accs;
  Json runs = Json::array();
  int reached = 0;
  for (int i = 0; i < repeat; ++i) {
    RunConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(i);
    const auto dir = out_dir.empty() ? std::string() : (fs::path(out_dir) / ("run_" + std::to_string(i))).string();
    const auto r = train(c, dir);
    if (r.reached) {
      ++reached;
      epochs.push_back(r.epochs_to_target);
      walls.push_back(r.wall_to_target_s);
    }
    rates.push_back(r.inst_per_s);
    accs.push_back(r.final_valid_acc);
    runs.push_back({{"seed", c.seed},
                    {"reached", r.reached},
                    {"epochs_to_target", r.epochs_to_target},
                    {"wall_to_target_s", r.wall_to_target_s},
                    {"inst_per_s", r.inst_per_s},
                    {"final_valid_acc", r.final_valid_acc}});
  }
  Json summary = {{"runs", runs},
                  {"repeat", repeat},
                  {"reached", reached},
                  {"median_inst_per_s", median(rates)},
                  {"median_final_valid_acc", median(accs)}};
  // Medians over the runs that reached the target.
  summary["median_epochs_to_target"] = epochs.empty() ? Json(nullptr) : Json(median(epochs));
  summary["median_wall_to_target_s"] = walls.empty() ? Json(nullptr) : Json(median(walls));
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2) + "\n");
  }
  return summary;
}

std::vector<SweepRow> sweep(const RunConfig& cfg, const std::vector<int>& maks, const std::vector<std::int64_t>& mufs,
                            const std::string& out_dir) {
  if (maks.empty() || mufs.empty()) throw std::invalid_argument("sweep needs at least one mak and one muf value");
  for (int m : maks)
    if (m < 1) throw std::invalid_argument("sweep: max_active_keys values must be >= 1");
  for (auto f : mufs)
    if (f < 1) throw std::invalid_argument("sweep: min_update_frequency values must be >= 1");
  const auto graph = build_model_graph(cfg);
  const auto data = load_data(cfg);
  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    csv.open(fs::path(out_dir) / "sweep.csv");
    if (!csv) throw IoError("cannot write sweep.csv in '" + out_dir + "'");
    csv << kSweepHeader << '\n';
  }
  std::vector<SweepRow> rows;
  for (int mak : maks) {
    for (auto muf : mufs) {
      RunConfig c = cfg;
      c.train.max_active_keys = mak;
      c.train.min_update_frequency = muf;
      SweepRow row{mak, muf, train(c, graph, data, "")};
      if (csv.is_open()) {
        const auto& r = row.result;
        csv << mak << ',' << muf << ',' << r.epochs_to_target << ',' << r.wall_to_target_s << ',' << r.inst_per_s << ','
            << r.final_valid_acc << ',' << (r.reached ? 1 : 0) << '\n';
        csv.flush();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

GradcheckReport gradcheck(const RunConfig& cfg) {
  const auto graph = build_model_graph(cfg);
  auto data = load_data(cfg);
  if (data.train.size() > cfg.gradcheck_instances) data.train.resize(cfg.gradcheck_instances);
  return gradcheck(graph, data.train, cfg.gradcheck);
}

Json to_json(const GradcheckReport& r) {
  Json tensors = Json::array();
  for (const auto& t : r.tensors)
    tensors.push_back({{"node", t.node},
                       {"param", t.param},
                       {"checked", t.checked},
                       {"max_rel_err", t.max_rel_err},
                       {"worst_index", t.worst_index},
                       {"analytic", t.worst_analytic},
                       {"numeric", t.worst_numeric},
                       {"passed", t.passed}});
  return {{"passed", r.passed}, {"max_rel_err", r.max_rel_err}, {"loss", r.loss}, {"wall_s", r.wall_s}, {"tensors", tensors}};
}

Json summarize_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw IoError(path + ": empty file");
  const bool metrics = header == kMetricsHeader;
  if (!metrics && header != kSweepHeader) throw IoError(path + ": unrecognized header '" + header + "'");
  const auto columns = split_csv_line(header);

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != columns.size())
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns.size()) +
                               " fields, got " + std::to_string(cells.size()));
    std::vector<double> row;
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size() || c.empty())
        throw IoError(path + ":" + std::to_string(lineno) + ": '" + c + "' is not a number");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }

  Json out = {{"path", path}, {"kind", metrics ? "metrics" : "sweep"}, {"rows", rows.size()}};
  if (rows.empty()) return out;
  auto as_object = [&](const std::vector<double>& r) {
    Json o = Json::object();
    for (std::size_t i = 0; i < columns.size(); ++i) o[columns[i]] = r[i];
    return o;
  };
  if (metrics) {
    const auto best = std::max_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a[3] < b[3]; });
    out["final"] = as_object(rows.back());
    out["best_valid_acc"] = (*best)[3];
    out["best_epoch"] = (*best)[0];
    out["total_wall_s"] = rows.back()[1];
  } else {
    const std::vector<double>* best = nullptr;
    for (const auto& r : rows)
      if (r[6] > 0 && (!best || r[2] < (*best)[2] || (r[2] == (*best)[2] && r[3] < (*best)[3]))) best = &r;
    out["reached"] = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r[6] > 0; });
    out["fastest"] = best ? as_object(*best) : Json(nullptr);
  }
  return out;
}

std::size_t export_dataset(const RunConfig& cfg, const std::string& split, const std::string& path) {
  if (split != "train" && split != "valid") throw std::invalid_argument("split must be 'train' or 'valid'");
  const bool train = split == "train";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  const auto& d = cfg.dataset;
  const auto seed = dataset_seed(cfg);
  std::size_t n = 0;
  if (d.type == "list_reduction") {
    const auto data = gen_list_reduction(train ? d.train : d.valid, component_seed(seed, split));
    write_jsonl(out, data);
    n = data.size();
  } else if (d.type == "synthetic_images" || d.type == "mnist") {
    const auto data = dense_split(cfg, train);
    write_jsonl(out, data);
    n = data.size();
  } else if (d.type == "trees" || d.type == "sst") {
    const auto data = tree_split(cfg, train);
    write_jsonl(out, data);
    n = data.size();
  } else {
    const auto data = gen_babi15_like(train ? d.train : d.valid, d.num_nodes, component_seed(seed, split));
    write_jsonl(out, data);
    n = data.size();
  }
  return n;
}

}  // namespace ampnet
