#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pimeta/dataset.hpp"
#include "pimeta/rng.hpp"

namespace pimeta {

// M/M/1 queue with service rate 1; Y(x) is the steady-state number of
// customers, geometric with mean x/(1-x).
struct MM1Config {
  double arrival_rate = 0.5;  // must lie in (0,1) for stability
};

int mm1_sample(const MM1Config& cfg, Rng& rng);

// Four-node / four-edge message network. Edge i joins node i and node
// (i mod 4)+1 and is a FIFO channel holding one message at a time; a
// message of length l bits occupies edge i for l/capacity + 100*i/speed
// seconds. Every visited node adds a fixed processing latency.
struct NetworkConfig {
  double mean_length_bits = 400.0;  // x, mean of the exponential lengths
  // arrival_rates[i][j]: Poisson rate of messages entering node i+1 bound
  // for node j+1; diagonal unused.
  std::array<std::array<double, 4>, 4> arrival_rates{{
      {0.0, 40.0, 30.0, 35.0},
      {50.0, 0.0, 45.0, 15.0},
      {60.0, 15.0, 0.0, 20.0},
      {25.0, 30.0, 40.0, 0.0},
  }};
  double node_processing_s = 0.001;
  double edge_capacity_bits = 275000.0;
  double signal_speed_miles_s = 150000.0;
  double edge_length_scale_miles = 100.0;  // edge i has length scale*i
  int message_horizon = 30;                // first-k messages averaged
};

NetworkConfig default_network_config();

// One externally arriving message, for scripted runs in tests.
struct ExternalMessage {
  double arrival_time = 0.0;
  int origin = 1;       // 1-based node ids
  int destination = 2;  // != origin
  double length_bits = 0.0;
};

// Runs the event loop over a fixed arrival list (sorted by arrival time)
// and returns the end-to-end delay of the first `horizon` messages by
// arrival order. Later messages still load the network.
std::vector<double> simulate_network_delays(
    const NetworkConfig& cfg, const std::vector<ExternalMessage>& arrivals,
    int horizon);

// Poisson arrivals per node pair, exponential lengths with mean x; returns
// the mean delay of the first `message_horizon` arriving messages.
double network_sample(const NetworkConfig& cfg, Rng& rng);

enum class Simulator { mm1, network };

Simulator simulator_from_name(const std::string& name);
std::string simulator_name(Simulator sim);
// Valid input domain, used for drawing test points and validating designs.
std::pair<double, double> simulator_domain(Simulator sim);

// r_i = reps i.i.d. outputs at each design point; replication streams are
// derived per point, so the dataset is reproducible regardless of how the
// points are iterated. Throws on points outside the simulator's domain.
ReplicatedDataset generate_design(Simulator sim,
                                  const std::vector<double>& design_points,
                                  int reps, std::uint64_t seed);
ReplicatedDataset generate_design(Simulator sim,
                                  const std::vector<double>& design_points,
                                  int reps, std::uint64_t seed,
                                  const NetworkConfig& net_cfg);

}  // namespace pimeta
