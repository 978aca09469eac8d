#include "pimeta/simulators.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <queue>
#include <stdexcept>

namespace pimeta {

int mm1_sample(const MM1Config& cfg, Rng& rng) {
  if (!(cfg.arrival_rate > 0.0 && cfg.arrival_rate < 1.0))
    throw std::invalid_argument("mm1: arrival rate must lie in (0,1), got " +
                                std::to_string(cfg.arrival_rate));
  return rng.geometric(cfg.arrival_rate);
}

NetworkConfig default_network_config() { return {}; }

namespace {

constexpr int kNodes = 4;
constexpr int kEdges = 4;

struct Hop {
  int edge;     // 1-based
  int to_node;  // 1-based
};

// Edge e joins node e and node (e mod 4)+1.
bool edge_joins(int e, int a, int b) {
  const int u = e;
  const int v = (e % kNodes) + 1;
  return (u == a && v == b) || (u == b && v == a);
}

// Fewest-hop route on the ring; ties resolved by the lexicographically
// smallest edge sequence, i.e. toward the lower-index first edge.
std::vector<Hop> compute_route(int origin, int dest) {
  std::vector<Hop> best;
  std::vector<Hop> current;
  std::vector<bool> visited(kNodes + 1, false);

  auto better = [](const std::vector<Hop>& a, const std::vector<Hop>& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].edge != b[i].edge) return a[i].edge < b[i].edge;
    }
    return false;
  };

  std::function<void(int)> walk = [&](int node) {
    if (node == dest) {
      if (best.empty() || better(current, best)) best = current;
      return;
    }
    // A partial path at best's length can only finish longer.
    if (!best.empty() && current.size() >= best.size()) return;
    for (int e = 1; e <= kEdges; ++e) {
      for (int next = 1; next <= kNodes; ++next) {
        if (next == node || visited[next] || !edge_joins(e, node, next))
          continue;
        visited[next] = true;
        current.push_back({e, next});
        walk(next);
        current.pop_back();
        visited[next] = false;
      }
    }
  };
  visited[origin] = true;
  walk(origin);
  if (best.empty()) throw std::logic_error("network: no route found");
  return best;
}

const std::vector<Hop>& route_between(int origin, int dest) {
  static const auto table = [] {
    std::array<std::array<std::vector<Hop>, kNodes + 1>, kNodes + 1> t{};
    for (int a = 1; a <= kNodes; ++a) {
      for (int b = 1; b <= kNodes; ++b) {
        if (a != b) t[a][b] = compute_route(a, b);
      }
    }
    return t;
  }();
  return table[origin][dest];
}

struct Message {
  int id = 0;
  double arrival = 0.0;
  double length = 0.0;
  const std::vector<Hop>* route = nullptr;
  std::size_t hop = 0;  // next route index to traverse
};

enum class EventKind { node_done, edge_done };

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;  // creation order breaks time ties
  EventKind kind = EventKind::node_done;
  int msg = 0;
  int edge = 0;  // for edge_done
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

// Time-ordered stream of external messages.
class ArrivalSource {
 public:
  virtual ~ArrivalSource() = default;
  virtual std::optional<ExternalMessage> peek() = 0;
  virtual ExternalMessage pop() = 0;
};

class ScriptedSource final : public ArrivalSource {
 public:
  explicit ScriptedSource(std::vector<ExternalMessage> msgs)
      : msgs_(std::move(msgs)) {
    std::stable_sort(msgs_.begin(), msgs_.end(),
                     [](const ExternalMessage& a, const ExternalMessage& b) {
                       return a.arrival_time < b.arrival_time;
                     });
  }
  std::optional<ExternalMessage> peek() override {
    if (next_ >= msgs_.size()) return std::nullopt;
    return msgs_[next_];
  }
  ExternalMessage pop() override { return msgs_[next_++]; }

 private:
  std::vector<ExternalMessage> msgs_;
  std::size_t next_ = 0;
};

// Twelve independent Poisson streams (one per ordered node pair), each
// owning its RNG so the merged order never depends on processing order.
// Message lengths come from the same per-pair stream as the arrival gaps.
class PoissonSource final : public ArrivalSource {
 public:
  PoissonSource(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    int stream = 0;
    for (int i = 1; i <= kNodes; ++i) {
      for (int j = 1; j <= kNodes; ++j) {
        if (i == j) continue;
        const double rate = cfg.arrival_rates[i - 1][j - 1];
        if (!(rate > 0.0))
          throw std::invalid_argument("network: arrival rate for pair (" +
                                      std::to_string(i) + "," +
                                      std::to_string(j) + ") must be > 0");
        pairs_.push_back(Pair{i, j, rate, Rng(derive_seed(seed, stream)), 0.0});
        pairs_.back().next_time = pairs_.back().rng.exponential(1.0 / rate);
        ++stream;
      }
    }
  }

  std::optional<ExternalMessage> peek() override {
    const Pair& p = pairs_[earliest()];
    return ExternalMessage{p.next_time, p.origin, p.dest, 0.0};
  }

  ExternalMessage pop() override {
    Pair& p = pairs_[earliest()];
    ExternalMessage msg{p.next_time, p.origin, p.dest,
                        p.rng.exponential(cfg_.mean_length_bits)};
    p.next_time += p.rng.exponential(1.0 / p.rate);
    return msg;
  }

 private:
  struct Pair {
    int origin, dest;
    double rate;
    Rng rng;
    double next_time;
  };
  std::size_t earliest() const {
    std::size_t best = 0;
    for (std::size_t k = 1; k < pairs_.size(); ++k) {
      if (pairs_[k].next_time < pairs_[best].next_time) best = k;
    }
    return best;
  }
  const NetworkConfig& cfg_;
  std::vector<Pair> pairs_;
};

class NetworkSimulation {
 public:
  NetworkSimulation(const NetworkConfig& cfg, int horizon)
      : cfg_(cfg), horizon_(horizon) {
    if (horizon_ < 1)
      throw std::invalid_argument("network: horizon must be >= 1");
    tracked_delay_.assign(static_cast<std::size_t>(horizon_), -1.0);
  }

  // Runs until the first `horizon` arriving messages are delivered (or the
  // source is exhausted) and returns their delays in arrival order.
  std::vector<double> run(ArrivalSource& source) {
    std::uint64_t processed = 0;
    while (delivered_ < std::min(tracked_, horizon_) || tracked_ < horizon_) {
      auto arrival = source.peek();
      const bool take_arrival =
          arrival &&
          (events_.empty() || arrival->arrival_time <= events_.top().time);
      if (take_arrival) {
        admit(source.pop());
      } else if (!events_.empty()) {
        const Event ev = events_.top();
        events_.pop();
        dispatch(ev);
      } else if (!arrival) {
        break;  // scripted source drained before reaching the horizon
      }
      if (++processed > 100000000ULL)
        throw std::runtime_error("network: event budget exhausted");
    }

    std::vector<double> out;
    for (double d : tracked_delay_) {
      if (d >= 0.0) out.push_back(d);
    }
    return out;
  }

 private:
  void admit(const ExternalMessage& ext) {
    if (ext.origin < 1 || ext.origin > kNodes || ext.destination < 1 ||
        ext.destination > kNodes || ext.origin == ext.destination)
      throw std::invalid_argument("network: bad origin/destination pair");
    if (!(ext.length_bits >= 0.0))
      throw std::invalid_argument("network: negative message length");
    Message m;
    m.id = static_cast<int>(messages_.size());
    m.arrival = ext.arrival_time;
    m.length = ext.length_bits;
    m.route = &route_between(ext.origin, ext.destination);
    messages_.push_back(m);
    track_of_.push_back(tracked_ < horizon_ ? tracked_++ : -1);
    schedule(ext.arrival_time + cfg_.node_processing_s, EventKind::node_done,
             m.id, 0);
  }

  void schedule(double time, EventKind kind, int msg, int edge) {
    events_.push(Event{time, seq_++, kind, msg, edge});
  }

  double occupancy(int edge, double length) const {
    return length / cfg_.edge_capacity_bits +
           cfg_.edge_length_scale_miles * edge / cfg_.signal_speed_miles_s;
  }

  void dispatch(const Event& ev) {
    Message& m = messages_[static_cast<std::size_t>(ev.msg)];
    if (ev.kind == EventKind::node_done) {
      if (m.hop == m.route->size()) {
        const int slot = track_of_[static_cast<std::size_t>(ev.msg)];
        if (slot >= 0) {
          tracked_delay_[static_cast<std::size_t>(slot)] = ev.time - m.arrival;
          ++delivered_;
        }
        return;
      }
      const int edge = (*m.route)[m.hop].edge;
      EdgeState& es = edges_[static_cast<std::size_t>(edge - 1)];
      if (es.busy) {
        es.queue.push_back(ev.msg);
      } else {
        es.busy = true;
        schedule(ev.time + occupancy(edge, m.length), EventKind::edge_done,
                 ev.msg, edge);
      }
    } else {
      EdgeState& es = edges_[static_cast<std::size_t>(ev.edge - 1)];
      ++m.hop;
      schedule(ev.time + cfg_.node_processing_s, EventKind::node_done, ev.msg,
               0);
      if (!es.queue.empty()) {
        const int next = es.queue.front();
        es.queue.pop_front();
        const Message& nm = messages_[static_cast<std::size_t>(next)];
        schedule(ev.time + occupancy(ev.edge, nm.length), EventKind::edge_done,
                 next, ev.edge);
      } else {
        es.busy = false;
      }
    }
  }

  struct EdgeState {
    bool busy = false;
    std::deque<int> queue;  // FIFO, one message in transit at a time
  };

  const NetworkConfig& cfg_;
  int horizon_;
  int tracked_ = 0;
  int delivered_ = 0;
  std::vector<Message> messages_;
  std::vector<int> track_of_;          // message id -> tracked slot or -1
  std::vector<double> tracked_delay_;  // per tracked slot, -1 until done
  std::array<EdgeState, kEdges> edges_;
  std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
  std::uint64_t seq_ = 0;
};

}  // namespace

std::vector<double> simulate_network_delays(
    const NetworkConfig& cfg, const std::vector<ExternalMessage>& arrivals,
    int horizon) {
  ScriptedSource source(arrivals);
  NetworkSimulation sim(cfg, horizon);
  return sim.run(source);
}

double network_sample(const NetworkConfig& cfg, Rng& rng) {
  if (!(cfg.mean_length_bits > 0.0))
    throw std::invalid_argument(
        "network: mean message length must be > 0, got " +
        std::to_string(cfg.mean_length_bits));
  PoissonSource source(cfg, rng.next_u64());
  NetworkSimulation sim(cfg, cfg.message_horizon);
  const std::vector<double> delays = sim.run(source);
  if (delays.size() != static_cast<std::size_t>(cfg.message_horizon))
    throw std::runtime_error("network: simulation ended before the horizon");
  double total = 0.0;
  for (double d : delays) total += d;
  return total / static_cast<double>(delays.size());
}

Simulator simulator_from_name(const std::string& name) {
  if (name == "mm1") return Simulator::mm1;
  if (name == "network") return Simulator::network;
  throw std::invalid_argument("unknown simulator: " + name);
}

std::string simulator_name(Simulator sim) {
  return sim == Simulator::mm1 ? "mm1" : "network";
}

std::pair<double, double> simulator_domain(Simulator sim) {
  return sim == Simulator::mm1 ? std::pair{0.3, 0.9} : std::pair{200.0, 600.0};
}

ReplicatedDataset generate_design(Simulator sim,
                                  const std::vector<double>& design_points,
                                  int reps, std::uint64_t seed) {
  return generate_design(sim, design_points, reps, seed,
                         default_network_config());
}

ReplicatedDataset generate_design(Simulator sim,
                                  const std::vector<double>& design_points,
                                  int reps, std::uint64_t seed,
                                  const NetworkConfig& net_cfg) {
  if (reps < 1)
    throw std::invalid_argument("generate_design: reps must be >= 1");
  ReplicatedDataset data;
  data.points.reserve(design_points.size());
  data.replications.reserve(design_points.size());
  for (std::size_t i = 0; i < design_points.size(); ++i) {
    const double x = design_points[i];
    if (sim == Simulator::mm1 && !(x > 0.0 && x < 1.0))
      throw std::invalid_argument("generate_design: mm1 point " +
                                  std::to_string(x) + " outside (0,1)");
    if (sim == Simulator::network && !(x > 0.0))
      throw std::invalid_argument("generate_design: network point " +
                                  std::to_string(x) + " must be > 0");
    Rng rng(derive_seed(seed, i));
    std::vector<double> ys;
    ys.reserve(static_cast<std::size_t>(reps));
    for (int j = 0; j < reps; ++j) {
      if (sim == Simulator::mm1) {
        ys.push_back(static_cast<double>(mm1_sample(MM1Config{x}, rng)));
      } else {
        NetworkConfig cfg = net_cfg;
        cfg.mean_length_bits = x;
        ys.push_back(network_sample(cfg, rng));
      }
    }
    data.points.push_back({x});
    data.replications.push_back(std::move(ys));
  }
  return data;
}

}  // namespace pimeta
