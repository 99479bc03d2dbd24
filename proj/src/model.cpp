#include "swmpc/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace swmpc {

void NetworkModel::validate() const {
  const int S = num_subsystems();
  if (S < 1) throw std::invalid_argument("NetworkModel: no subsystems");
  if (num_modes() < 1) throw std::invalid_argument("NetworkModel: no topologies");
  for (int i = 0; i < S; ++i) {
    const Subsystem& s = subsystems[i];
    const int nx = s.nx();
    const int nu = s.nu();
    if (s.A.cols() != nx) throw std::invalid_argument("NetworkModel: A not square");
    if (s.B.rows() != nx) throw std::invalid_argument("NetworkModel: B row mismatch");
    if (s.X.dim() != nx || s.U.dim() != nu)
      throw std::invalid_argument("NetworkModel: constraint set dimension mismatch");
    if (s.X.is_empty() || s.U.is_empty())
      throw std::invalid_argument("NetworkModel: empty constraint set");
    for (const auto& [j, c] : s.couplings) {
      if (j < 0 || j >= S || j == i)
        throw std::invalid_argument("NetworkModel: coupling index out of range");
      const Subsystem& nb = subsystems[j];
      if (c.A.rows() != nx || c.A.cols() != nb.nx())
        throw std::invalid_argument("NetworkModel: coupling A shape mismatch");
      if (c.B.size() > 0 && (c.B.rows() != nx || c.B.cols() != nb.nu()))
        throw std::invalid_argument("NetworkModel: coupling B shape mismatch");
    }
  }
  for (const ModeTopology& topo : topologies) {
    if (static_cast<int>(topo.neighbors.size()) != S)
      throw std::invalid_argument("NetworkModel: topology size mismatch");
    for (int i = 0; i < S; ++i) {
      for (int j : topo.neighbors[i]) {
        if (j == i) throw std::invalid_argument("NetworkModel: topology lists self neighbor");
        if (!subsystems[i].couplings.count(j))
          throw std::invalid_argument("NetworkModel: topology uses undeclared coupling");
      }
    }
  }
}

int SwitchingSignal::mode_at(int t) const {
  if (schedule.empty() || schedule.front().first != 0)
    throw std::invalid_argument("SwitchingSignal: schedule must start at t=0");
  int mode = schedule.front().second;
  for (const auto& [tt, m] : schedule) {
    if (tt > t) break;
    mode = m;
  }
  return mode;
}

std::vector<int> SwitchingSignal::mode_sequence(int steps) const {
  std::vector<int> seq(steps + 1);
  for (int t = 0; t <= steps; ++t) seq[t] = mode_at(t);
  return seq;
}

void SwitchingSignal::validate(int num_modes) const {
  graph.validate();
  if (graph.num_modes != num_modes)
    throw std::invalid_argument("SwitchingSignal: graph mode count mismatch");
  if (schedule.empty() || schedule.front().first != 0)
    throw std::invalid_argument("SwitchingSignal: schedule must start at t=0");
  int prev_t = -1;
  for (const auto& [t, m] : schedule) {
    if (t <= prev_t) throw std::invalid_argument("SwitchingSignal: schedule times not increasing");
    if (m < 0 || m >= num_modes)
      throw std::invalid_argument("SwitchingSignal: undeclared mode in schedule");
    prev_t = t;
  }
}

std::vector<Vector> plant_step(const NetworkModel& net, int mode,
                               const std::vector<Vector>& x,
                               const std::vector<Vector>& u) {
  const int S = net.num_subsystems();
  if (mode < 0 || mode >= net.num_modes())
    throw std::invalid_argument("plant_step: mode out of range");
  if (static_cast<int>(x.size()) != S || static_cast<int>(u.size()) != S)
    throw std::invalid_argument("plant_step: state/input count mismatch");
  const ModeTopology& topo = net.topologies[mode];
  std::vector<Vector> next(S);
  for (int i = 0; i < S; ++i) {
    const Subsystem& s = net.subsystems[i];
    if (x[i].size() != s.nx() || u[i].size() != s.nu())
      throw std::invalid_argument("plant_step: vector dimension mismatch");
    Vector xi = s.A * x[i] + s.B * u[i];
    for (int j : topo.neighbors[i]) {
      const Coupling& c = s.couplings.at(j);
      xi += c.A * x[j];
      if (c.B.size() > 0) xi += c.B * u[j];
    }
    next[i] = std::move(xi);
  }
  return next;
}

namespace {

Polytope coupling_sum(const NetworkModel& net, int subsystem,
                      const std::vector<int>& neighbors,
                      const std::vector<Polytope>& E,
                      const std::vector<Polytope>& Eu) {
  const Subsystem& s = net.subsystems[subsystem];
  const int n = s.nx();
  if (static_cast<int>(E.size()) != net.num_subsystems() ||
      static_cast<int>(Eu.size()) != net.num_subsystems())
    throw std::invalid_argument("disturbance set: tube family size mismatch");
  Polytope W = Polytope::singleton(Vector::Zero(n));
  std::vector<int> sorted = neighbors;
  std::sort(sorted.begin(), sorted.end());
  for (int j : sorted) {
    auto it = s.couplings.find(j);
    if (it == s.couplings.end())
      throw std::invalid_argument("disturbance set: undeclared coupling");
    const Coupling& c = it->second;
    if (c.A.cwiseAbs().maxCoeff() > 0.0)
      W = minkowski_sum(W, affine_image(E[j], c.A));
    if (c.B.size() > 0 && c.B.cwiseAbs().maxCoeff() > 0.0)
      W = minkowski_sum(W, affine_image(Eu[j], c.B));
  }
  return W;
}

} // namespace

Polytope interaction_disturbance_set(const NetworkModel& net, int subsystem, int mode,
                                     const std::vector<Polytope>& E,
                                     const std::vector<Polytope>& Eu) {
  if (mode < 0 || mode >= net.num_modes())
    throw std::invalid_argument("interaction_disturbance_set: mode out of range");
  if (subsystem < 0 || subsystem >= net.num_subsystems())
    throw std::invalid_argument("interaction_disturbance_set: subsystem out of range");
  return coupling_sum(net, subsystem, net.topologies[mode].neighbors[subsystem], E, Eu);
}

Polytope worst_case_disturbance_set(const NetworkModel& net, int subsystem,
                                    const std::vector<int>& allowable,
                                    const std::vector<Polytope>& E,
                                    const std::vector<Polytope>& Eu) {
  if (subsystem < 0 || subsystem >= net.num_subsystems())
    throw std::invalid_argument("worst_case_disturbance_set: subsystem out of range");
  return coupling_sum(net, subsystem, allowable, E, Eu);
}

DwellState remaining_dwell_update(const DwellState& s, int next_mode,
                                  const SwitchGraph& graph) {
  if (next_mode < 0 || next_mode >= graph.num_modes)
    throw std::invalid_argument("remaining_dwell_update: mode out of range");
  DwellState out;
  out.mode = next_mode;
  if (next_mode == s.mode)
    out.remaining = std::max(s.remaining - 1, 0);
  else
    out.remaining = graph.dwell[next_mode];
  return out;
}

SignalCheck validate_signal(const std::vector<int>& modes, const SwitchGraph& graph) {
  SignalCheck out;
  const int T = static_cast<int>(modes.size());
  if (T == 0) return out;
  for (int t = 0; t < T; ++t) {
    if (modes[t] < 0 || modes[t] >= graph.num_modes) {
      out.valid = false;
      out.index = t;
      out.reason = "undeclared_mode";
      return out;
    }
  }
  int run_start = 0;
  for (int t = 1; t < T; ++t) {
    if (modes[t] == modes[t - 1]) continue;
    if (!graph.has_edge(modes[t - 1], modes[t])) {
      out.valid = false;
      out.index = t;
      out.reason = "transition_not_allowed";
      return out;
    }
    const int run_len = t - run_start;
    if (run_len < graph.dwell[modes[t - 1]]) {
      out.valid = false;
      out.index = t;
      out.reason = "dwell_violated";
      return out;
    }
    run_start = t;
  }
  return out;
}

} // namespace swmpc
