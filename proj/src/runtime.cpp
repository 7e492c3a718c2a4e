#include "ampnet/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace ampnet {

using Clock = std::chrono::steady_clock;

struct Runtime::Worker {
  int index = 0;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Envelope> inbox;
  bool stop = false;

  // Local priority queue: backward before forward, FIFO within each class.
  std::deque<Envelope> backward;
  std::deque<Envelope> forward;

  CollectingEmitter emitter;
  std::map<std::pair<int, std::size_t>, std::map<State, std::int64_t>> emitted_fwd;
  std::map<std::pair<int, std::size_t>, std::map<State, std::int64_t>> received_bwd;
  std::vector<std::string> events;
  std::thread thread;
};

struct Runtime::ControllerEvent {
  enum class Kind { kReturn, kReport, kError } kind = Kind::kReturn;
  std::int64_t instance = 0;
  std::size_t port = 0;
  State state;
  LossRecord record;
  std::string error;
};

struct Runtime::ControllerInbox {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<ControllerEvent> queue;
};

std::vector<int> default_placement(const IrGraph& graph, int threads) {
  const auto n = graph.node_count();
  std::vector<int> place(n, -1);
  int next_ppt = 0;
  for (auto v : graph.topological_order()) {
    if (is_parameterized_kind(graph.node_spec(v).kind)) {
      place[v] = next_ppt++ % threads;
      continue;
    }
    for (std::size_t p = 0; p < graph.inputs(v).size(); ++p) {
      const auto src = graph.backward_target(v, p);
      if (!src.is_controller() && place[static_cast<std::size_t>(src.node)] >= 0) {
        place[v] = place[static_cast<std::size_t>(src.node)];
        break;
      }
    }
    if (place[v] < 0) place[v] = 0;
  }
  return place;
}

Runtime::Runtime(const IrGraph& graph, TrainConfig config)
    : graph_(graph), config_(std::move(config)), controller_(std::make_unique<ControllerInbox>()) {
  if (config_.threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (config_.max_active_keys < 1) throw std::invalid_argument("max_active_keys must be >= 1");
  if (config_.min_update_frequency < 1) throw std::invalid_argument("min_update_frequency must be >= 1");

  NodeContext ctx;
  ctx.seed = config_.seed;
  ctx.optimizer = config_.optimizer;
  ctx.min_update_frequency = config_.min_update_frequency;
  nodes_ = graph_.instantiate(ctx);

  for (const auto& [id, muf] : config_.muf_overrides) {
    if (muf < 1) throw std::invalid_argument("min_update_frequency override for '" + id + "' must be >= 1");
    std::vector<std::string> targets{id};
    for (const auto& rg : graph_.replica_groups())
      if (rg.logical == id) targets = rg.members;
    for (const auto& t : targets) {
      const auto i = graph_.index_of(t);
      if (i < 0) throw std::invalid_argument("min_update_frequency override names unknown node '" + id + "'");
      auto* block = nodes_[static_cast<std::size_t>(i)]->params();
      if (!block) throw std::invalid_argument("min_update_frequency override on non-PPT node '" + id + "'");
      block->min_update_frequency = muf;
    }
  }

  compute_placement();
  start_ = Clock::now();
  for (int i = 0; i < config_.threads; ++i) {
    auto w = std::make_unique<Worker>();
    w->index = i;
    workers_.push_back(std::move(w));
  }
  for (auto& w : workers_) w->thread = std::thread([this, raw = w.get()] { worker_loop(*raw); });
}

Runtime::~Runtime() { shutdown(); }

void Runtime::compute_placement() {
  placement_ = default_placement(graph_, config_.threads);
  for (const auto& [id, worker] : config_.placement) {
    const auto i = graph_.index_of(id);
    if (i < 0) throw std::invalid_argument("placement names unknown node '" + id + "'");
    if (worker < 0 || worker >= config_.threads)
      throw std::invalid_argument("placement of '" + id + "' on worker " + std::to_string(worker) + " but only " +
                                  std::to_string(config_.threads) + " workers");
    placement_[static_cast<std::size_t>(i)] = worker;
  }
}

int Runtime::worker_of(const std::string& node_id) const {
  const auto i = graph_.index_of(node_id);
  if (i < 0) throw std::out_of_range("no node '" + node_id + "'");
  return placement_[static_cast<std::size_t>(i)];
}

void Runtime::shutdown() {
  if (shut_down_) return;
  shut_down_ = true;
  for (auto& w : workers_) {
    std::lock_guard<std::mutex> lk(w->mu);
    w->stop = true;
    w->cv.notify_one();
  }
  for (auto& w : workers_)
    if (w->thread.joinable()) w->thread.join();
}

void Runtime::dispatch(int, Envelope env) {
  Worker& w = *workers_[static_cast<std::size_t>(placement_[static_cast<std::size_t>(env.node)])];
  in_flight_.fetch_add(1, std::memory_order_acq_rel);
  enqueued_.fetch_add(1, std::memory_order_relaxed);
  {
    std::lock_guard<std::mutex> lk(w.mu);
    w.inbox.push_back(std::move(env));
  }
  w.cv.notify_one();
}

void Runtime::send_to_controller(ControllerEvent ev) {
  in_flight_.fetch_add(1, std::memory_order_acq_rel);
  enqueued_.fetch_add(1, std::memory_order_relaxed);
  {
    std::lock_guard<std::mutex> lk(controller_->mu);
    controller_->queue.push_back(std::move(ev));
  }
  controller_->cv.notify_one();
}

void Runtime::worker_loop(Worker& w) {
  std::deque<Envelope> drained;
  for (;;) {
    {
      std::unique_lock<std::mutex> lk(w.mu);
      if (w.backward.empty() && w.forward.empty()) {
        w.cv.wait(lk, [&] { return !w.inbox.empty() || w.stop; });
        if (w.inbox.empty() && w.stop) return;
      }
      drained.swap(w.inbox);
    }
    // Full drain each iteration, so a gradient that arrived while the previous
    // message was being handled overtakes every queued forward.
    for (auto& e : drained) (e.msg.direction == Direction::kBackward ? w.backward : w.forward).push_back(std::move(e));
    drained.clear();

    auto& q = w.backward.empty() ? w.forward : w.backward;
    Envelope env = std::move(q.front());
    q.pop_front();
    handle(w, env);
    dequeued_.fetch_add(1, std::memory_order_relaxed);
    if (in_flight_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
      std::lock_guard<std::mutex> lk(controller_->mu);
      controller_->cv.notify_one();
    }
  }
}

void Runtime::handle(Worker& w, Envelope& env) {
  if (discard_.load(std::memory_order_acquire)) return;
  const auto v = static_cast<std::size_t>(env.node);
  Node& node = *nodes_[v];
  const bool backward = env.msg.direction == Direction::kBackward;
  const bool inference = env.msg.inference;
  const bool record = config_.diagnostics && !inference;
  const std::int64_t instance = env.msg.state.instance_id();
  const bool log = !config_.event_log.empty();
  std::string state_str;
  if (log) state_str = env.msg.state.to_string();
  if (record && backward) ++w.received_bwd[{env.node, env.port}][env.msg.state];

  auto& em = w.emitter;
  em.clear();
  const auto t0 = Clock::now();
  try {
    if (backward) node.backward(env.port, std::move(env.msg), em);
    else node.forward(env.port, std::move(env.msg), em);
  } catch (const std::exception& e) {
    ControllerEvent ev;
    ev.kind = ControllerEvent::Kind::kError;
    ev.instance = instance;
    ev.error = "node '" + node.id() + "' (" + node.kind() + ") on worker " + std::to_string(w.index) + ", " +
               (backward ? "backward" : "forward") + ": " + e.what();
    send_to_controller(std::move(ev));
    return;
  }
  if (log) {
    const auto us = [&](Clock::time_point t) {
      return std::chrono::duration_cast<std::chrono::microseconds>(t - start_).count();
    };
    Json line = {{"worker", w.index},      {"node", node.id()}, {"dir", backward ? "bwd" : "fwd"},
                 {"instance", instance},   {"state", state_str}, {"start_us", us(t0)},
                 {"end_us", us(Clock::now())}};
    w.events.push_back(line.dump());
  }

  for (auto& out : em.out) {
    if (out.direction == Direction::kForward) {
      const auto target = graph_.forward_target(v, out.port);
      if (record) {
        const auto& tspec = graph_.node_spec(static_cast<std::size_t>(target.node));
        const bool label_port = tspec.kind == "loss" && target.port == 1;
        if (!label_port) ++w.emitted_fwd[{env.node, out.port}][out.msg.state];
      }
      out.msg.direction = Direction::kForward;
      dispatch(w.index, Envelope{target.node, target.port, std::move(out.msg)});
    } else {
      const auto target = graph_.backward_target(v, out.port);
      out.msg.direction = Direction::kBackward;
      if (target.is_controller()) {
        ControllerEvent ev;
        ev.kind = ControllerEvent::Kind::kReturn;
        ev.instance = out.msg.state.instance_id();
        ev.port = target.port;
        ev.state = std::move(out.msg.state);
        send_to_controller(std::move(ev));
      } else {
        dispatch(w.index, Envelope{target.node, target.port, std::move(out.msg)});
      }
    }
  }
  for (const auto& r : em.reports) {
    ControllerEvent ev;
    ev.kind = ControllerEvent::Kind::kReport;
    ev.instance = r.instance_id;
    ev.record = r;
    send_to_controller(std::move(ev));
  }
  em.clear();
}

std::vector<std::string> Runtime::live_cache_keys() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_)
    for (const auto& k : n->cached_keys()) out.push_back(n->id() + " " + k);
  return out;
}

void Runtime::abort_run() {
  discard_.store(true, std::memory_order_release);
  for (;;) {
    std::deque<ControllerEvent> batch;
    {
      std::lock_guard<std::mutex> lk(controller_->mu);
      batch.swap(controller_->queue);
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      dequeued_.fetch_add(1, std::memory_order_relaxed);
      in_flight_.fetch_sub(1, std::memory_order_acq_rel);
    }
    if (in_flight_.load(std::memory_order_acquire) == 0) break;
    std::this_thread::sleep_for(std::chrono::microseconds(100));
  }
  discard_.store(false, std::memory_order_release);
}

Node& Runtime::node(const std::string& id) {
  const auto i = graph_.index_of(id);
  if (i < 0) throw std::out_of_range("no node '" + id + "'");
  return *nodes_[static_cast<std::size_t>(i)];
}

void Runtime::flush_updates() {
  for (auto& n : nodes_) n->flush_updates();
}

void Runtime::set_min_update_frequency(std::int64_t muf) {
  if (muf < 1) throw std::invalid_argument("min_update_frequency must be >= 1");
  for (auto& n : nodes_)
    if (auto* b = n->params()) b->min_update_frequency = muf;
}

void Runtime::replica_sync() {
  for (const auto& rg : graph_.replica_groups()) {
    std::vector<ParamBlock*> blocks;
    for (const auto& m : rg.members) blocks.push_back(node(m).params());
    if (blocks.size() < 2) continue;
    const double inv = 1.0 / static_cast<double>(blocks.size());
    auto average = [&](std::vector<Tensor> ParamBlock::*field) {
      auto& first = blocks.front()->*field;
      for (std::size_t t = 0; t < first.size(); ++t) {
        Tensor mean(first[t].rows(), first[t].cols());
        for (auto* b : blocks) {
          const auto& x = (b->*field)[t];
          if (!x.same_shape(mean))
            throw DimensionError("replica group '" + rg.logical + "': shape mismatch " + x.shape_str() + " vs " +
                                 mean.shape_str());
          add_inplace(mean, x);
        }
        mean = scale(mean, static_cast<Scalar>(inv));
        for (auto* b : blocks) (b->*field)[t] = mean;
      }
    };
    average(&ParamBlock::weights);
    if (!blocks.front()->slot1.empty()) average(&ParamBlock::slot1);
    if (!blocks.front()->slot2.empty()) average(&ParamBlock::slot2);
    std::int64_t step = 0;
    for (auto* b : blocks) step = std::max(step, b->adam_step);
    for (auto* b : blocks) b->adam_step = step;
  }
}

void Runtime::reset_diagnostics() {
  for (auto& w : workers_) {
    w->emitted_fwd.clear();
    w->received_bwd.clear();
  }
  pumped_states_.clear();
  returned_states_.clear();
}

std::vector<PortBalance> Runtime::port_balances() const {
  std::map<std::pair<int, std::size_t>, std::map<State, std::int64_t>> fwd, bwd;
  for (const auto& w : workers_) {
    for (const auto& [k, m] : w->emitted_fwd)
      for (const auto& [s, c] : m) fwd[k][s] += c;
    for (const auto& [k, m] : w->received_bwd)
      for (const auto& [s, c] : m) bwd[k][s] += c;
  }
  std::set<std::pair<int, std::size_t>> keys;
  for (const auto& [k, m] : fwd) keys.insert(k);
  for (const auto& [k, m] : bwd) keys.insert(k);

  auto total = [](const std::map<State, std::int64_t>& m) {
    std::int64_t t = 0;
    for (const auto& [s, c] : m) t += c;
    return t;
  };
  std::vector<PortBalance> out;
  static const std::map<State, std::int64_t> kEmpty;
  for (const auto& k : keys) {
    const auto& f = fwd.count(k) ? fwd.at(k) : kEmpty;
    const auto& b = bwd.count(k) ? bwd.at(k) : kEmpty;
    const auto& spec = graph_.node_spec(static_cast<std::size_t>(k.first));
    out.push_back({spec.id, graph_.outputs(static_cast<std::size_t>(k.first))[k.second], total(f), total(b), f == b});
  }
  std::set<std::size_t> cports;
  for (const auto& [p, m] : pumped_states_) cports.insert(p);
  for (const auto& [p, m] : returned_states_) cports.insert(p);
  for (auto p : cports) {
    const auto& f = pumped_states_.count(p) ? pumped_states_.at(p) : kEmpty;
    const auto& b = returned_states_.count(p) ? returned_states_.at(p) : kEmpty;
    out.push_back({"controller", graph_.controller_port(p).name, total(f), total(b), f == b});
  }
  return out;
}

EpochReport Runtime::run(const std::vector<Instance>& data, const RunOptions& options) {
  if (shut_down_) throw ExecutionError("runtime has been shut down");
  EpochReport report;
  report.instances = data.size();

  std::map<std::string, std::size_t> port_index;
  for (std::size_t c = 0; c < graph_.controller_port_count(); ++c) port_index[graph_.controller_port(c).name] = c;

  std::map<std::string, std::int64_t> updates_before, skipped_before;
  for (auto& n : nodes_) {
    n->reset_staleness();
    if (auto* b = n->params()) {
      updates_before[n->id()] = b->update_counter;
      skipped_before[n->id()] = b->nonfinite_skipped;
    }
  }
  const auto enq0 = enqueued_.load();
  const auto deq0 = dequeued_.load();

  struct Slot {
    std::int64_t returns_left = 0;
    std::int64_t reports_left = 0;
  };
  std::unordered_map<std::int64_t, Slot> active;
  std::size_t next = 0;
  std::size_t completed = 0;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::string first_error;

  const auto t_start = Clock::now();
  auto last_progress = t_start;

  auto process = [&](ControllerEvent& ev) {
    using Kind = ControllerEvent::Kind;
    if (ev.kind == Kind::kError) {
      if (first_error.empty()) first_error = ev.error;
      return;
    }
    auto it = active.find(ev.instance);
    if (it == active.end()) {
      if (first_error.empty()) first_error = "completion for unknown instance id " + std::to_string(ev.instance);
      return;
    }
    if (ev.kind == Kind::kReturn) {
      if (config_.diagnostics) ++returned_states_[ev.port][ev.state];
      --it->second.returns_left;
    } else {
      --it->second.reports_left;
      ++report.loss_records;
      loss_sum += ev.record.loss;
      if (ev.record.correct) ++correct;
    }
    if (it->second.returns_left < 0 || it->second.reports_left < 0) {
      if (first_error.empty()) first_error = "instance " + std::to_string(ev.instance) + " received too many completions";
      return;
    }
    if (it->second.returns_left == 0 && it->second.reports_left == 0) {
      active.erase(it);
      ++completed;
    }
  };

  auto admit = [&](const Instance& inst) {
    const std::int64_t id = next_instance_id_++;
    Slot slot;
    slot.reports_left = static_cast<std::int64_t>(inst.expected_losses);
    std::vector<std::pair<std::size_t, Message>> msgs;
    for (const auto& item : inst.items) {
      auto it = port_index.find(item.port);
      if (it == port_index.end())
        throw std::invalid_argument("instance pumps unknown controller port '" + item.port + "'");
      const auto cport = it->second;
      const bool returns = graph_.controller_port(cport).returns && !options.inference;
      if (returns) ++slot.returns_left;
      Message m;
      m.direction = Direction::kForward;
      m.payload = item.payload;
      m.state = item.state;
      m.state.set_instance_id(id);
      if (inst.aux) m.state.set_aux(inst.aux);
      m.inference = options.inference;
      if (config_.diagnostics && returns) ++pumped_states_[cport][m.state];
      msgs.emplace_back(cport, std::move(m));
    }
    if (slot.returns_left == 0 && slot.reports_left == 0)
      throw std::invalid_argument("instance has no completion events (no returning ports and no losses)");
    active[id] = slot;
    for (auto& [cport, m] : msgs) {
      const auto target = graph_.controller_target(cport);
      dispatch(-1, Envelope{target.node, target.port, std::move(m)});
    }
  };

  const auto mak = static_cast<std::size_t>(config_.max_active_keys);
  while (completed < data.size()) {
    while (active.size() < mak && next < data.size()) admit(data[next++]);
    report.max_active_observed = std::max(report.max_active_observed, static_cast<int>(active.size()));

    std::deque<ControllerEvent> batch;
    {
      std::unique_lock<std::mutex> lk(controller_->mu);
      controller_->cv.wait_for(lk, std::chrono::milliseconds(20), [&] { return !controller_->queue.empty(); });
      batch.swap(controller_->queue);
    }
    if (batch.empty()) {
      const bool idle = in_flight_.load(std::memory_order_acquire) == 0;
      const double stalled = std::chrono::duration<double>(Clock::now() - last_progress).count();
      if (idle || stalled > config_.stall_timeout_s) {
        bool really_idle = idle;
        if (idle) {
          std::lock_guard<std::mutex> lk(controller_->mu);
          really_idle = controller_->queue.empty() && in_flight_.load(std::memory_order_acquire) == 0;
        }
        if (really_idle || stalled > config_.stall_timeout_s) {
          abort_run();
          std::ostringstream os;
          os << (really_idle ? "deadlock: no messages in flight" : "stall: no progress for " + std::to_string(stalled) + " s")
             << " with " << active.size() << " active instance(s)";
          for (const auto& [id, s] : active)
            os << "\n  instance " << id << ": " << s.returns_left << " return(s), " << s.reports_left << " report(s) missing";
          for (const auto& k : live_cache_keys()) os << "\n  cached " << k;
          for (auto& n : nodes_) n->clear_caches();
          throw DeadlockError(os.str());
        }
      }
      continue;
    }
    last_progress = Clock::now();
    for (auto& ev : batch) {
      process(ev);
      dequeued_.fetch_add(1, std::memory_order_relaxed);
      in_flight_.fetch_sub(1, std::memory_order_acq_rel);
    }
    report.max_active_observed = std::max(report.max_active_observed, static_cast<int>(active.size()));
    if (!first_error.empty()) {
      abort_run();
      for (auto& n : nodes_) n->clear_caches();
      throw ExecutionError(first_error);
    }
  }

  // Quiesce: every instance is complete, but stray messages may still be in
  // a queue.
  while (in_flight_.load(std::memory_order_acquire) != 0) {
    std::deque<ControllerEvent> batch;
    {
      std::unique_lock<std::mutex> lk(controller_->mu);
      controller_->cv.wait_for(lk, std::chrono::milliseconds(20), [&] {
        return !controller_->queue.empty() || in_flight_.load(std::memory_order_acquire) == 0;
      });
      batch.swap(controller_->queue);
    }
    for (auto& ev : batch) {
      if (ev.kind == ControllerEvent::Kind::kError && first_error.empty()) first_error = ev.error;
      else if (first_error.empty())
        first_error = "event for instance " + std::to_string(ev.instance) + " after its completion";
      dequeued_.fetch_add(1, std::memory_order_relaxed);
      in_flight_.fetch_sub(1, std::memory_order_acq_rel);
    }
  }
  const auto t_end = Clock::now();
  if (!first_error.empty()) {
    for (auto& n : nodes_) n->clear_caches();
    throw ExecutionError(first_error);
  }

  const auto leftovers = live_cache_keys();
  if (!leftovers.empty()) {
    std::ostringstream os;
    os << "caches not empty after all instances completed:";
    for (const auto& k : leftovers) os << "\n  " << k;
    for (auto& n : nodes_) n->clear_caches();
    throw ExecutionError(os.str());
  }

  if (!options.inference && options.finalize) {
    flush_updates();
    replica_sync();
  }

  if (!config_.event_log.empty()) {
    std::ofstream log(config_.event_log, std::ios::app);
    for (auto& w : workers_) {
      for (const auto& line : w->events) log << line << '\n';
      w->events.clear();
    }
  }

  report.wall_s = std::chrono::duration<double>(t_end - t_start).count();
  report.inst_per_s = report.wall_s > 0 ? static_cast<double>(data.size()) / report.wall_s : 0.0;
  report.mean_loss = report.loss_records ? loss_sum / static_cast<double>(report.loss_records) : 0.0;
  report.accuracy = report.loss_records ? static_cast<double>(correct) / static_cast<double>(report.loss_records) : 0.0;
  report.messages_enqueued = enqueued_.load() - enq0;
  report.messages_dequeued = dequeued_.load() - deq0;

  std::int64_t events = 0;
  double weighted = 0.0;
  for (auto& n : nodes_) {
    if (const auto* h = n->staleness()) {
      report.staleness[n->id()] = *h;
      events += h->total();
      weighted += h->mean() * static_cast<double>(h->total());
    }
    if (const auto* b = n->params()) {
      report.updates += b->update_counter - updates_before[n->id()];
      report.nonfinite_skipped += b->nonfinite_skipped - skipped_before[n->id()];
    }
  }
  report.mean_staleness = events ? weighted / static_cast<double>(events) : 0.0;
  return report;
}

}  // namespace ampnet
