#include "ampnet/ampnet.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "ampnet/config.hpp"
#include "ampnet/datasets.hpp"
#include "ampnet/graph.hpp"
#include "ampnet/throughput.hpp"
#include "ampnet/trainer.hpp"

struct ampnet_config {
  ampnet::RunConfig cfg;
};

struct ampnet_session {
  ampnet::RunConfig cfg;
  ampnet::LoadedData data;
  std::unique_ptr<ampnet::Runtime> rt;
};

namespace {

thread_local std::string g_last_error;

ampnet_status fail(ampnet_status s, const std::string& what) {
  g_last_error = what;
  return s;
}

template <typename F>
ampnet_status guarded(F&& f) {
  using namespace ampnet;
  try {
    g_last_error.clear();
    return f();
  } catch (const ConfigError& e) {
    return fail(AMPNET_ERR_CONFIG, e.what());
  } catch (const ValidationError& e) {
    return fail(AMPNET_ERR_GRAPH, e.what());
  } catch (const DatasetError& e) {
    return fail(AMPNET_ERR_DATASET, e.what());
  } catch (const DeadlockError& e) {
    return fail(AMPNET_ERR_DEADLOCK, e.what());
  } catch (const ExecutionError& e) {
    return fail(AMPNET_ERR_EXECUTION, e.what());
  } catch (const IoError& e) {
    return fail(AMPNET_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(AMPNET_ERR_IO, e.what());
  } catch (const Json::exception& e) {
    return fail(AMPNET_ERR_CONFIG, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(AMPNET_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(AMPNET_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(AMPNET_ERR_INTERNAL, "unknown exception");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void fill(const ampnet::EpochReport& r, ampnet_epoch_stats* out) {
  out->mean_loss = r.mean_loss;
  out->accuracy = r.accuracy;
  out->wall_s = r.wall_s;
  out->inst_per_s = r.inst_per_s;
  out->mean_staleness = r.mean_staleness;
  out->instances = static_cast<int64_t>(r.instances);
  out->updates = r.updates;
}

#define AMPNET_REQUIRE(cond, what) \
  if (!(cond)) return fail(AMPNET_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* ampnet_last_error(void) { return g_last_error.c_str(); }

const char* ampnet_status_name(ampnet_status s) {
  switch (s) {
    case AMPNET_OK: return "ok";
    case AMPNET_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case AMPNET_ERR_CONFIG: return "config";
    case AMPNET_ERR_IO: return "io";
    case AMPNET_ERR_GRAPH: return "graph";
    case AMPNET_ERR_DATASET: return "dataset";
    case AMPNET_ERR_EXECUTION: return "execution";
    case AMPNET_ERR_DEADLOCK: return "deadlock";
    case AMPNET_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ampnet_version(void) { return "0.1.0"; }

int ampnet_scalar_bytes(void) { return static_cast<int>(sizeof(ampnet::Scalar)); }

void ampnet_string_free(char* s) { std::free(s); }

ampnet_status ampnet_config_load(const char* path, ampnet_config** out) {
  AMPNET_REQUIRE(path && out, "path and out must be non-null");
  return guarded([&] {
    *out = new ampnet_config{ampnet::RunConfig::load(path)};
    return AMPNET_OK;
  });
}

ampnet_status ampnet_config_parse(const char* json, ampnet_config** out) {
  AMPNET_REQUIRE(json && out, "json and out must be non-null");
  return guarded([&] {
    *out = new ampnet_config{ampnet::RunConfig::from_json(ampnet::Json::parse(json))};
    return AMPNET_OK;
  });
}

void ampnet_config_free(ampnet_config* cfg) { delete cfg; }

ampnet_status ampnet_config_set_int(ampnet_config* cfg, const char* key, int64_t value) {
  AMPNET_REQUIRE(cfg && key, "cfg and key must be non-null");
  return guarded([&] {
    auto j = cfg->cfg.to_json();
    const std::string k = key;
    if (k == "threads" || k == "max_active_keys" || k == "min_update_frequency") j["train"][k] = value;
    else if (k == "replicas") j["model"][k] = value;
    else if (k == "seed" || k == "epochs") j[k] = value;
    else return fail(AMPNET_ERR_INVALID_ARGUMENT, "unknown integer key '" + k + "'");
    cfg->cfg = ampnet::RunConfig::from_json(j);
    return AMPNET_OK;
  });
}

ampnet_status ampnet_config_set_double(ampnet_config* cfg, const char* key, double value) {
  AMPNET_REQUIRE(cfg && key, "cfg and key must be non-null");
  return guarded([&] {
    auto j = cfg->cfg.to_json();
    const std::string k = key;
    if (k == "lr") j["train"]["optimizer"]["lr"] = value;
    else if (k == "target_accuracy") j[k] = value;
    else return fail(AMPNET_ERR_INVALID_ARGUMENT, "unknown number key '" + k + "'");
    cfg->cfg = ampnet::RunConfig::from_json(j);
    return AMPNET_OK;
  });
}

ampnet_status ampnet_config_to_json(const ampnet_config* cfg, char** out_json) {
  AMPNET_REQUIRE(cfg && out_json, "cfg and out_json must be non-null");
  return guarded([&] {
    *out_json = dup_string(cfg->cfg.to_json().dump(2));
    return AMPNET_OK;
  });
}

ampnet_status ampnet_train(const ampnet_config* cfg, const char* out_dir, int repeat, char** out_summary) {
  AMPNET_REQUIRE(cfg, "cfg must be non-null");
  AMPNET_REQUIRE(repeat >= 1, "repeat must be >= 1");
  return guarded([&] {
    const auto summary = ampnet::train_repeated(cfg->cfg, out_dir ? out_dir : "", repeat);
    if (out_summary) *out_summary = dup_string(summary.dump(2));
    return AMPNET_OK;
  });
}

ampnet_status ampnet_gradcheck(const ampnet_config* cfg, int* passed, char** out_report) {
  AMPNET_REQUIRE(cfg, "cfg must be non-null");
  return guarded([&] {
    const auto report = ampnet::gradcheck(cfg->cfg);
    if (passed) *passed = report.passed ? 1 : 0;
    if (out_report) *out_report = dup_string(ampnet::to_json(report).dump(2));
    return AMPNET_OK;
  });
}

ampnet_status ampnet_sweep(const ampnet_config* cfg, const int64_t* maks, size_t n_maks, const int64_t* mufs,
                           size_t n_mufs, const char* out_dir, char** out_rows) {
  AMPNET_REQUIRE(cfg && maks && mufs, "cfg, maks and mufs must be non-null");
  return guarded([&] {
    std::vector<int> m;
    for (size_t i = 0; i < n_maks; ++i) m.push_back(static_cast<int>(maks[i]));
    std::vector<std::int64_t> f(mufs, mufs + n_mufs);
    const auto rows = ampnet::sweep(cfg->cfg, m, f, out_dir ? out_dir : "");
    if (out_rows) {
      ampnet::Json j = ampnet::Json::array();
      for (const auto& r : rows)
        j.push_back({{"max_active_keys", r.max_active_keys},
                     {"min_update_frequency", r.min_update_frequency},
                     {"epochs_to_target", r.result.epochs_to_target},
                     {"wall_to_target_s", r.result.wall_to_target_s},
                     {"inst_per_s", r.result.inst_per_s},
                     {"final_valid_acc", r.result.final_valid_acc},
                     {"reached", r.result.reached}});
      *out_rows = dup_string(j.dump(2));
    }
    return AMPNET_OK;
  });
}

ampnet_status ampnet_estimate_throughput(const ampnet_throughput_model* model, ampnet_throughput_estimate* out) {
  AMPNET_REQUIRE(model && out, "model and out must be non-null");
  return guarded([&] {
    const auto e = ampnet::estimate_throughput({model->hidden, model->nodes, model->edges, model->edge_types, model->steps,
                                                model->device_flops, model->overhead, model->bits_per_scalar});
    *out = {e.fwdop, e.bwdop, e.samples_per_s, e.bandwidth_bits_per_s};
    return AMPNET_OK;
  });
}

ampnet_status ampnet_summarize(const char* csv_path, char** out_json) {
  AMPNET_REQUIRE(csv_path && out_json, "csv_path and out_json must be non-null");
  return guarded([&] {
    *out_json = dup_string(ampnet::summarize_csv(csv_path).dump(2));
    return AMPNET_OK;
  });
}

ampnet_status ampnet_export_dataset(const ampnet_config* cfg, const char* split, const char* path, size_t* out_count) {
  AMPNET_REQUIRE(cfg && split && path, "cfg, split and path must be non-null");
  return guarded([&] {
    const auto n = ampnet::export_dataset(cfg->cfg, split, path);
    if (out_count) *out_count = n;
    return AMPNET_OK;
  });
}

ampnet_status ampnet_graph_validate(const char* graph_json, char** out_errors) {
  AMPNET_REQUIRE(graph_json, "graph_json must be non-null");
  if (out_errors) *out_errors = nullptr;
  const auto st = guarded([&] {
    ampnet::IrGraph::build(ampnet::GraphSpec::from_json(ampnet::Json::parse(graph_json)));
    return AMPNET_OK;
  });
  if (st != AMPNET_OK && out_errors) *out_errors = dup_string(g_last_error);
  return st;
}

ampnet_status ampnet_session_create(const ampnet_config* cfg, ampnet_session** out) {
  AMPNET_REQUIRE(cfg && out, "cfg and out must be non-null");
  return guarded([&] {
    auto s = std::make_unique<ampnet_session>();
    s->cfg = cfg->cfg;
    s->data = ampnet::load_data(s->cfg);
    auto tc = s->cfg.train;
    tc.seed = s->cfg.seed;
    s->rt = std::make_unique<ampnet::Runtime>(ampnet::build_model_graph(s->cfg), tc);
    *out = s.release();
    return AMPNET_OK;
  });
}

ampnet_status ampnet_session_train_epoch(ampnet_session* s, ampnet_epoch_stats* out) {
  AMPNET_REQUIRE(s && out, "session and out must be non-null");
  return guarded([&] {
    fill(s->rt->train_epoch(s->data.train), out);
    return AMPNET_OK;
  });
}

ampnet_status ampnet_session_evaluate(ampnet_session* s, ampnet_epoch_stats* out) {
  AMPNET_REQUIRE(s && out, "session and out must be non-null");
  return guarded([&] {
    fill(s->rt->evaluate(s->data.valid), out);
    return AMPNET_OK;
  });
}

ampnet_status ampnet_session_weights(ampnet_session* s, char** out_json) {
  AMPNET_REQUIRE(s && out_json, "session and out_json must be non-null");
  return guarded([&] {
    *out_json = dup_string(ampnet::weights_json(*s->rt).dump());
    return AMPNET_OK;
  });
}

void ampnet_session_free(ampnet_session* s) {
  if (!s) return;
  try {
    s->rt->shutdown();
  } catch (...) {
  }
  delete s;
}

}  // extern "C"
