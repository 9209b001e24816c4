#include "tubo/te.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <set>

#include <json.hpp>

#include "tubo/lp.hpp"

namespace tubo {

namespace {

struct NodePath {
  std::vector<int> links;
  std::vector<int> nodes;
  double latency = 0.0;

  bool operator<(const NodePath& o) const {
    if (latency != o.latency) return latency < o.latency;
    return nodes < o.nodes;
  }
  bool operator==(const NodePath& o) const { return nodes == o.nodes && links == o.links; }
};

// Deterministic Dijkstra by latency; ties broken on node id, parallel links
// on link id. Banned nodes/links support Yen's spur computation.
bool dijkstra(const Topology& topo, int src, int dst,
              const std::vector<uint8_t>& banned_node,
              const std::set<int>& banned_links, NodePath& out) {
  const int n = topo.node_count;
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> par_link(n, -1), par_node(n, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = 0.0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u] + 1e-15) continue;
    for (int lid = 0; lid < int(topo.links.size()); ++lid) {
      const Link& l = topo.links[lid];
      if (l.src != u || banned_node[l.dst] || banned_links.count(lid)) continue;
      const double nd = d + l.latency;
      if (nd < dist[l.dst] - 1e-15 ||
          (nd < dist[l.dst] + 1e-15 && par_link[l.dst] >= 0 && lid < par_link[l.dst])) {
        dist[l.dst] = nd;
        par_link[l.dst] = lid;
        par_node[l.dst] = u;
        pq.push({nd, l.dst});
      }
    }
  }
  if (!std::isfinite(dist[dst])) return false;
  out.links.clear();
  out.nodes.clear();
  out.latency = dist[dst];
  int v = dst;
  while (v != src) {
    out.links.push_back(par_link[v]);
    out.nodes.push_back(v);
    v = par_node[v];
  }
  out.nodes.push_back(src);
  std::reverse(out.links.begin(), out.links.end());
  std::reverse(out.nodes.begin(), out.nodes.end());
  return true;
}

std::vector<NodePath> yen(const Topology& topo, int src, int dst, int k) {
  std::vector<NodePath> found;
  std::vector<uint8_t> no_ban(topo.node_count, 0);
  NodePath first;
  if (!dijkstra(topo, src, dst, no_ban, {}, first)) return found;
  found.push_back(first);

  std::set<NodePath> candidates;
  while (int(found.size()) < k) {
    const NodePath& prev = found.back();
    for (size_t spur = 0; spur + 1 < prev.nodes.size(); ++spur) {
      const int spur_node = prev.nodes[spur];
      std::vector<int> root_links(prev.links.begin(), prev.links.begin() + spur);
      std::vector<int> root_nodes(prev.nodes.begin(), prev.nodes.begin() + spur + 1);
      double root_latency = 0.0;
      for (int lid : root_links) root_latency += topo.links[lid].latency;

      std::set<int> banned_links;
      for (const NodePath& p : found)
        if (p.links.size() > spur &&
            std::equal(root_links.begin(), root_links.end(), p.links.begin()))
          banned_links.insert(p.links[spur]);

      std::vector<uint8_t> banned_node(topo.node_count, 0);
      for (size_t q = 0; q < spur; ++q) banned_node[prev.nodes[q]] = 1;

      NodePath spur_path;
      if (!dijkstra(topo, spur_node, dst, banned_node, banned_links, spur_path))
        continue;

      NodePath total;
      total.links = root_links;
      total.links.insert(total.links.end(), spur_path.links.begin(), spur_path.links.end());
      total.nodes = root_nodes;
      total.nodes.insert(total.nodes.end(), spur_path.nodes.begin() + 1,
                         spur_path.nodes.end());
      total.latency = root_latency + spur_path.latency;
      if (std::find(found.begin(), found.end(), total) == found.end())
        candidates.insert(std::move(total));
    }
    if (candidates.empty()) break;
    found.push_back(*candidates.begin());
    candidates.erase(candidates.begin());
  }
  return found;
}

}  // namespace

PathSet k_shortest_paths(const Topology& topo, int k) {
  topo.validate();
  if (k < 1) throw Error("k_shortest_paths: k must be >= 1");
  const int n = topo.node_count;
  PathSet ps;
  ps.nodes = n;
  ps.k = k;
  ps.paths.assign(size_t(n) * n, {});
  ps.reachable.assign(size_t(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const std::vector<NodePath> raw = yen(topo, i, j, k);
      if (raw.empty()) continue;
      ps.reachable[size_t(i) * n + j] = 1;
      for (const NodePath& p : raw)
        ps.paths[size_t(i) * n + j].push_back({p.links, p.latency});
    }
  return ps;
}

namespace {

struct VarMap {
  // var index -> (od cell, path index); vars only for demanded covered pairs
  std::vector<std::pair<size_t, size_t>> vars;
  std::vector<std::vector<int>> od_vars;  // per od cell, its variable indices
};

VarMap map_variables(const PathSet& paths, const DemandMatrix& demand) {
  VarMap vm;
  const int n = paths.nodes;
  vm.od_vars.assign(size_t(n) * n, {});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const size_t c = size_t(i) * n + j;
      if (demand.values[c] <= 0.0 || !paths.reachable[c]) continue;
      for (size_t p = 0; p < paths.paths[c].size(); ++p) {
        vm.od_vars[c].push_back(int(vm.vars.size()));
        vm.vars.emplace_back(c, p);
      }
    }
  return vm;
}

lp::Problem base_problem(const Topology& topo, const PathSet& paths,
                         const DemandMatrix& demand, const VarMap& vm) {
  lp::Problem prob;
  prob.num_vars = int(vm.vars.size());
  prob.objective.assign(prob.num_vars, 0.0);

  // Per-link capacity constraints.
  std::vector<lp::Constraint> link_rows(topo.links.size());
  for (size_t l = 0; l < topo.links.size(); ++l) {
    link_rows[l].rel = lp::Relation::LessEq;
    link_rows[l].rhs = topo.links[l].capacity_mbps;
  }
  for (int v = 0; v < prob.num_vars; ++v) {
    const auto [c, p] = vm.vars[v];
    for (int lid : paths.paths[c][p].links) link_rows[lid].terms.emplace_back(v, 1.0);
  }
  for (auto& row : link_rows)
    if (!row.terms.empty()) prob.constraints.push_back(std::move(row));

  // Per-OD demand caps.
  for (size_t c = 0; c < vm.od_vars.size(); ++c) {
    if (vm.od_vars[c].empty()) continue;
    lp::Constraint row;
    row.rel = lp::Relation::LessEq;
    row.rhs = demand.values[c];
    for (int v : vm.od_vars[c]) row.terms.emplace_back(v, 1.0);
    prob.constraints.push_back(std::move(row));
  }
  return prob;
}

TeSolution package(const Topology& topo, const PathSet& paths,
                   const DemandMatrix& demand, const VarMap& vm,
                   const std::vector<double>& x) {
  TeSolution sol;
  const int n = paths.nodes;
  sol.flows.assign(size_t(n) * n, {});
  for (size_t c = 0; c < sol.flows.size(); ++c)
    sol.flows[c].assign(paths.paths[c].size(), 0.0);
  std::vector<double> load(topo.links.size(), 0.0);
  for (size_t v = 0; v < vm.vars.size(); ++v) {
    const auto [c, p] = vm.vars[v];
    const double f = std::max(0.0, x[v]);
    sol.flows[c][p] = f;
    sol.throughput += f;
    sol.latency_objective += f * paths.paths[c][p].latency;
    for (int lid : paths.paths[c][p].links) load[lid] += f;
  }
  sol.link_utilization.assign(topo.links.size(), 0.0);
  for (size_t l = 0; l < topo.links.size(); ++l)
    sol.link_utilization[l] = load[l] / topo.links[l].capacity_mbps;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const size_t c = size_t(i) * n + j;
      if (i != j && demand.values[c] > 0.0 && !paths.reachable[c])
        sol.lost_demand += demand.values[c];
    }
  return sol;
}

}  // namespace

TeSolution solve_p1(const Topology& topo, const PathSet& paths,
                    const DemandMatrix& demand) {
  const VarMap vm = map_variables(paths, demand);
  lp::Problem prob = base_problem(topo, paths, demand, vm);
  for (double& c : prob.objective) c = 1.0;
  if (prob.num_vars == 0) return package(topo, paths, demand, vm, {});
  const lp::Solution s = lp::solve(prob);
  if (!s.feasible) throw Error("solve_p1: solver reported infeasible (unexpected)");
  return package(topo, paths, demand, vm, s.x);
}

TeSolution solve_p2(const Topology& topo, const PathSet& paths,
                    const DemandMatrix& demand) {
  const VarMap vm = map_variables(paths, demand);
  if (vm.vars.empty()) return package(topo, paths, demand, vm, {});

  lp::Problem stage1 = base_problem(topo, paths, demand, vm);
  for (double& c : stage1.objective) c = 1.0;
  const lp::Solution s1 = lp::solve(stage1);
  if (!s1.feasible) throw Error("solve_p2: stage 1 infeasible (unexpected)");
  const double fstar = s1.objective;

  lp::Problem stage2 = base_problem(topo, paths, demand, vm);
  for (size_t v = 0; v < vm.vars.size(); ++v) {
    const auto [c, p] = vm.vars[v];
    stage2.objective[v] = -paths.paths[c][p].latency;  // minimize latency
  }
  lp::Constraint keep;
  keep.rel = lp::Relation::GreaterEq;
  keep.rhs = fstar * (1.0 - 1e-6);
  for (int v = 0; v < stage2.num_vars; ++v) keep.terms.emplace_back(v, 1.0);
  stage2.constraints.push_back(std::move(keep));
  const lp::Solution s2 = lp::solve(stage2);
  if (!s2.feasible) throw Error("solve_p2: stage 2 infeasible (unexpected)");
  return package(topo, paths, demand, vm, s2.x);
}

TeSolution reactive_baseline(const Topology& topo, const DemandMatrix& demand) {
  const PathSet tunnels = k_shortest_paths(topo, 1);
  const int n = tunnels.nodes;
  TeSolution sol;
  sol.flows.assign(size_t(n) * n, {});
  std::vector<double> flow(size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const size_t c = size_t(i) * n + j;
      sol.flows[c].assign(tunnels.paths[c].size(), 0.0);
      if (i == j || demand.values[c] <= 0.0) continue;
      if (!tunnels.reachable[c]) {
        sol.lost_demand += demand.values[c];
        continue;
      }
      flow[c] = demand.values[c];
    }

  // Proportionally shrink flows through each overloaded link to a fixpoint.
  for (int iter = 0; iter < 1000; ++iter) {
    bool changed = false;
    for (size_t lid = 0; lid < topo.links.size(); ++lid) {
      double load = 0.0;
      for (size_t c = 0; c < flow.size(); ++c) {
        if (flow[c] <= 0.0) continue;
        for (int pl : tunnels.paths[c][0].links)
          if (pl == int(lid)) {
            load += flow[c];
            break;
          }
      }
      const double cap = topo.links[lid].capacity_mbps;
      if (load > cap * (1.0 + 1e-12)) {
        const double r = cap / load;
        for (size_t c = 0; c < flow.size(); ++c) {
          if (flow[c] <= 0.0) continue;
          for (int pl : tunnels.paths[c][0].links)
            if (pl == int(lid)) {
              flow[c] *= r;
              break;
            }
        }
        changed = true;
      }
    }
    if (!changed) break;
  }

  std::vector<double> load(topo.links.size(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const size_t c = size_t(i) * n + j;
      if (flow[c] <= 0.0) continue;
      sol.flows[c][0] = flow[c];
      sol.throughput += flow[c];
      sol.latency_objective += flow[c] * tunnels.paths[c][0].latency;
      for (int lid : tunnels.paths[c][0].links) load[lid] += flow[c];
    }
  sol.link_utilization.assign(topo.links.size(), 0.0);
  for (size_t l = 0; l < topo.links.size(); ++l)
    sol.link_utilization[l] = load[l] / topo.links[l].capacity_mbps;
  return sol;
}

AuditResult audit_solution(const Topology& topo, const PathSet& paths,
                           const DemandMatrix& demand, const TeSolution& sol,
                           double tol) {
  AuditResult a;
  auto fail = [&a](double v, const std::string& what) {
    if (v > a.max_violation) {
      a.max_violation = v;
      a.what = what;
    }
    a.ok = false;
  };
  std::vector<double> load(topo.links.size(), 0.0);
  const int n = paths.nodes;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const size_t c = size_t(i) * n + j;
      double delivered = 0.0;
      for (size_t p = 0; p < sol.flows[c].size(); ++p) {
        const double f = sol.flows[c][p];
        if (f < -tol) fail(-f, "negative flow");
        delivered += f;
        for (int lid : paths.paths[c][p].links) load[lid] += f;
      }
      if (delivered > demand.values[c] + tol)
        fail(delivered - demand.values[c], "demand cap exceeded");
    }
  for (size_t l = 0; l < topo.links.size(); ++l)
    if (load[l] > topo.links[l].capacity_mbps + tol)
      fail(load[l] - topo.links[l].capacity_mbps, "capacity exceeded");
  return a;
}

std::string to_string(TeObjective obj) { return obj == TeObjective::P1 ? "p1" : "p2"; }

namespace {

double percentile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const double pos = q * (xs.size() - 1);
  const size_t lo = size_t(pos);
  const size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - lo;
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

void summarize(DegradationReport& r) {
  r.median = percentile(r.per_epoch, 0.5);
  r.p5 = percentile(r.per_epoch, 0.05);
  r.p95 = percentile(r.per_epoch, 0.95);
}

DemandMatrix truth_matrix(const DmSeries& truth, int epoch) {
  // Missing truth cells carry zero demand on both sides of the comparison.
  return truth.matrix_at(epoch);
}

double delivered_against(const TeSolution& sol, const PathSet& paths,
                         const DemandMatrix& true_dm) {
  // Routing frozen: per pair, deliver min(allocated, true demand). Shrinking
  // per-pair flows keeps every link feasible.
  double total = 0.0;
  const int n = paths.nodes;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const size_t c = size_t(i) * n + j;
      double alloc = 0.0;
      for (double f : sol.flows[c]) alloc += f;
      total += std::min(alloc, true_dm.values[c]);
    }
  return total;
}

}  // namespace

DegradationReport degradation_sweep(const OnlineResult& outcomes, const DmSeries& truth,
                                    const Topology& topo, TeObjective objective,
                                    int k) {
  const PathSet paths = k_shortest_paths(topo, k);
  DegradationReport report;
  for (const ForecastOutcome& o : outcomes.outcomes) {
    if (o.epoch < 0 || o.epoch >= truth.epochs())
      throw Error("degradation_sweep: outcome epoch out of range");
    DemandMatrix eff(outcomes.nodes, o.epoch);
    eff.values = o.values;
    for (int i = 0; i < eff.nodes; ++i) eff.at(i, i) = 0.0;

    const DemandMatrix true_dm = truth_matrix(truth, o.epoch);
    const TeSolution planned = objective == TeObjective::P1
                                   ? solve_p1(topo, paths, eff)
                                   : solve_p2(topo, paths, eff);
    const TeSolution oracle = objective == TeObjective::P1
                                  ? solve_p1(topo, paths, true_dm)
                                  : solve_p2(topo, paths, true_dm);
    const double achieved = delivered_against(planned, paths, true_dm);
    const double deg =
        oracle.throughput > 1e-9 ? 1.0 - achieved / oracle.throughput : 0.0;
    report.epochs.push_back(o.epoch);
    report.per_epoch.push_back(deg);
    report.mean_latency_objective += planned.latency_objective;
    report.mean_throughput += achieved;
  }
  if (!report.per_epoch.empty()) {
    report.mean_latency_objective /= double(report.per_epoch.size());
    report.mean_throughput /= double(report.per_epoch.size());
  }
  summarize(report);
  return report;
}

DegradationReport degradation_sweep_reactive(const std::vector<int>& epochs,
                                             const DmSeries& truth, const Topology& topo,
                                             TeObjective objective, int k) {
  const PathSet paths = k_shortest_paths(topo, k);
  DegradationReport report;
  for (int e : epochs) {
    if (e < 0 || e >= truth.epochs())
      throw Error("degradation_sweep_reactive: epoch out of range");
    const DemandMatrix true_dm = truth_matrix(truth, e);
    const TeSolution sol = reactive_baseline(topo, true_dm);
    const TeSolution oracle = objective == TeObjective::P1
                                  ? solve_p1(topo, paths, true_dm)
                                  : solve_p2(topo, paths, true_dm);
    const double deg = oracle.throughput > 1e-9
                           ? 1.0 - sol.throughput / oracle.throughput
                           : 0.0;
    report.epochs.push_back(e);
    report.per_epoch.push_back(deg);
    report.mean_latency_objective += sol.latency_objective;
    report.mean_throughput += sol.throughput;
  }
  if (!report.per_epoch.empty()) {
    report.mean_latency_objective /= double(report.per_epoch.size());
    report.mean_throughput /= double(report.per_epoch.size());
  }
  summarize(report);
  return report;
}

std::string DegradationReport::to_json_string() const {
  nlohmann::json j;
  j["epochs"] = int(per_epoch.size());
  j["median"] = median;
  j["p5"] = p5;
  j["p95"] = p95;
  j["mean_throughput_mbps"] = mean_throughput;
  j["mean_latency_objective"] = mean_latency_objective;
  return j.dump(2);
}

void write_degradation_csv(const DegradationReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_degradation_csv: cannot open " + path);
  out << "epoch,degradation\n";
  char buf[64];
  for (size_t k = 0; k < report.per_epoch.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%d,%.9f\n", report.epochs[k], report.per_epoch[k]);
    out << buf;
  }
}

}  // namespace tubo
