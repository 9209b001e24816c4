#ifndef TUBO_TE_HPP
#define TUBO_TE_HPP

#include <string>
#include <vector>

#include "tubo/pipeline.hpp"
#include "tubo/types.hpp"

namespace tubo {

/// Candidate tunnels: up to k loopless shortest paths per OD pair, sorted by
/// latency ascending (k=1 is the reactive tunnel set).
struct PathSet {
  struct Path {
    std::vector<int> links;  // link ids into Topology::links
    double latency = 0.0;
  };
  int nodes = 0;
  int k = 0;
  std::vector<std::vector<Path>> paths;  // indexed by i*nodes+j
  std::vector<uint8_t> reachable;        // per OD pair

  const std::vector<Path>& for_pair(int i, int j) const {
    return paths[size_t(i) * nodes + j];
  }
};

/// Yen's algorithm per OD pair over link latencies.
PathSet k_shortest_paths(const Topology& topo, int k);

struct TeSolution {
  double throughput = 0.0;         // total delivered Mbps
  double latency_objective = 0.0;  // sum of flow * path latency
  std::vector<std::vector<double>> flows;  // aligned with PathSet::paths
  std::vector<double> link_utilization;    // load / capacity per link
  double lost_demand = 0.0;  // demand on unreachable/uncovered pairs
};

/// Max-commodity-flow: maximize delivered traffic under link capacities and
/// per-OD demand caps, exact LP.
TeSolution solve_p1(const Topology& topo, const PathSet& paths,
                    const DemandMatrix& demand);

/// Low-latency maximum flow: stage 1 maximizes throughput F*, stage 2
/// minimizes latency-weighted flow subject to throughput >= F* (1 - 1e-6).
TeSolution solve_p2(const Topology& topo, const PathSet& paths,
                    const DemandMatrix& demand);

/// Shortest-path tunnel routing: each pair's demand goes on its single
/// shortest path; overloaded links scale the flows through them
/// proportionally until feasible.
TeSolution reactive_baseline(const Topology& topo, const DemandMatrix& demand);

/// Independent feasibility audit (never uses solver internals).
struct AuditResult {
  bool ok = true;
  double max_violation = 0.0;
  std::string what;
};
AuditResult audit_solution(const Topology& topo, const PathSet& paths,
                           const DemandMatrix& demand, const TeSolution& sol,
                           double tol = 1e-6);

enum class TeObjective { P1, P2 };

std::string to_string(TeObjective obj);

struct DegradationReport {
  std::vector<int> epochs;
  std::vector<double> per_epoch;  // 1 - achieved/oracle per epoch
  double median = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
  double mean_latency_objective = 0.0;
  double mean_throughput = 0.0;

  std::string to_json_string() const;
};

/// For each outcome epoch: solve the LP on the effective (forecast/fallback)
/// demand, freeze that routing, deliver min(allocation, true demand) per pair
/// against the true DM, and compare to the oracle LP on the truth.
DegradationReport degradation_sweep(const OnlineResult& outcomes, const DmSeries& truth,
                                    const Topology& topo, TeObjective objective,
                                    int k = 4);

/// Same scoring for the reactive baseline: true demand routed on fixed
/// 1-shortest-path tunnels with proportional overload scaling.
DegradationReport degradation_sweep_reactive(const std::vector<int>& epochs,
                                             const DmSeries& truth, const Topology& topo,
                                             TeObjective objective, int k = 4);

/// Per-epoch degradations as CSV (epoch, degradation) for box plots.
void write_degradation_csv(const DegradationReport& report, const std::string& path);

}  // namespace tubo

#endif  // TUBO_TE_HPP
