#include "swmpc/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace swmpc {

namespace {

using nlohmann::json;

struct Reader {
  std::vector<std::string>& errors;

  void fail(const std::string& where, const std::string& what) {
    errors.push_back(where + ": " + what);
  }

  bool get_int(const json& j, const std::string& where, int& out) {
    if (!j.is_number_integer()) {
      fail(where, "expected an integer");
      return false;
    }
    out = j.get<int>();
    return true;
  }

  bool get_double(const json& j, const std::string& where, double& out) {
    if (!j.is_number()) {
      fail(where, "expected a number");
      return false;
    }
    out = j.get<double>();
    return true;
  }

  bool get_vector(const json& j, const std::string& where, Vector& out) {
    if (!j.is_array()) {
      fail(where, "expected an array of numbers");
      return false;
    }
    out.resize(static_cast<int>(j.size()));
    for (size_t k = 0; k < j.size(); ++k) {
      if (!j[k].is_number()) {
        fail(where + "[" + std::to_string(k) + "]", "expected a number");
        return false;
      }
      out(static_cast<int>(k)) = j[k].get<double>();
    }
    return true;
  }

  bool get_matrix(const json& j, const std::string& where, Matrix& out) {
    if (!j.is_array() || j.empty()) {
      fail(where, "expected a non-empty array of rows");
      return false;
    }
    const size_t cols = j[0].is_array() ? j[0].size() : 0;
    out.resize(static_cast<int>(j.size()), static_cast<int>(cols));
    for (size_t r = 0; r < j.size(); ++r) {
      if (!j[r].is_array() || j[r].size() != cols) {
        fail(where, "rows must be arrays of equal length");
        return false;
      }
      for (size_t c = 0; c < cols; ++c) {
        if (!j[r][c].is_number()) {
          fail(where + " row " + std::to_string(r + 1), "expected numbers");
          return false;
        }
        out(static_cast<int>(r), static_cast<int>(c)) = j[r][c].get<double>();
      }
    }
    return true;
  }

  // Box bounds or explicit inequality form.
  bool get_set(const json& obj, const std::string& where, const std::string& key,
               const std::string& lo_key, const std::string& hi_key, Polytope& out) {
    if (obj.contains(key)) {
      const json& js = obj[key];
      if (!js.is_object() || !js.contains("A") || !js.contains("b")) {
        fail(where + "." + key, "expected an object with A and b");
        return false;
      }
      Matrix A;
      Vector b;
      if (!get_matrix(js["A"], where + "." + key + ".A", A)) return false;
      if (!get_vector(js["b"], where + "." + key + ".b", b)) return false;
      if (A.rows() != b.size()) {
        fail(where + "." + key, "A and b row counts differ");
        return false;
      }
      out = Polytope::from_inequalities(A, b);
      return true;
    }
    if (obj.contains(lo_key) && obj.contains(hi_key)) {
      Vector lo, hi;
      if (!get_vector(obj[lo_key], where + "." + lo_key, lo)) return false;
      if (!get_vector(obj[hi_key], where + "." + hi_key, hi)) return false;
      if (lo.size() != hi.size() || (hi - lo).minCoeff() < 0) {
        fail(where, lo_key + "/" + hi_key + " must align with " + lo_key +
                        " <= " + hi_key);
        return false;
      }
      out = Polytope::box(lo, hi);
      return true;
    }
    fail(where, "missing constraint set (" + key + " or " + lo_key + "/" + hi_key + ")");
    return false;
  }

  // 1-based index from file to 0-based in memory.
  bool get_index(const json& j, const std::string& where, int count, int& out) {
    int v = 0;
    if (!get_int(j, where, v)) return false;
    if (v < 1 || v > count) {
      fail(where, "index " + std::to_string(v) + " out of range 1.." +
                      std::to_string(count));
      return false;
    }
    out = v - 1;
    return true;
  }
};

bool parse_visibility(const std::string& s, Visibility& out) {
  if (s == "times_and_modes_known") out = Visibility::times_and_modes_known;
  else if (s == "modes_restricted") out = Visibility::modes_restricted;
  else if (s == "fully_unknown") out = Visibility::fully_unknown;
  else return false;
  return true;
}

std::string visibility_name(Visibility v) {
  switch (v) {
    case Visibility::times_and_modes_known: return "times_and_modes_known";
    case Visibility::modes_restricted: return "modes_restricted";
    case Visibility::fully_unknown: return "fully_unknown";
  }
  return "?";
}

json matrix_json(const Matrix& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (int k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

json set_json(const Polytope& P) {
  return json{{"A", matrix_json(P.normals())}, {"b", vector_json(P.offsets())}};
}

} // namespace

LoadResult parse_experiment(const std::string& json_text) {
  LoadResult res;
  Reader rd{res.errors};
  json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    rd.fail("document", "not a JSON object");
    return res;
  }
  ExperimentSpec& spec = res.spec;
  if (root.contains("name") && root["name"].is_string())
    spec.name = root["name"].get<std::string>();

  if (!root.contains("subsystems") || !root["subsystems"].is_array() ||
      root["subsystems"].empty()) {
    rd.fail("subsystems", "expected a non-empty array");
    return res;
  }
  const json& jsubs = root["subsystems"];
  const int S = static_cast<int>(jsubs.size());
  spec.network.subsystems.resize(S);
  for (int i = 0; i < S; ++i) {
    const std::string where = "subsystems[" + std::to_string(i + 1) + "]";
    const json& js = jsubs[i];
    if (!js.is_object()) {
      rd.fail(where, "expected an object");
      continue;
    }
    Subsystem& sub = spec.network.subsystems[i];
    if (js.contains("A")) rd.get_matrix(js["A"], where + ".A", sub.A);
    else rd.fail(where, "missing A");
    if (js.contains("B")) rd.get_matrix(js["B"], where + ".B", sub.B);
    else rd.fail(where, "missing B");
    rd.get_set(js, where, "X", "x_min", "x_max", sub.X);
    rd.get_set(js, where, "U", "u_min", "u_max", sub.U);
    if (js.contains("couplings")) {
      if (!js["couplings"].is_array()) {
        rd.fail(where + ".couplings", "expected an array");
        continue;
      }
      for (size_t k = 0; k < js["couplings"].size(); ++k) {
        const std::string cw = where + ".couplings[" + std::to_string(k + 1) + "]";
        const json& jc = js["couplings"][k];
        if (!jc.is_object() || !jc.contains("from")) {
          rd.fail(cw, "expected an object with a 'from' index");
          continue;
        }
        int src = 0;
        if (!rd.get_index(jc["from"], cw + ".from", S, src)) continue;
        Coupling c;
        if (jc.contains("A")) rd.get_matrix(jc["A"], cw + ".A", c.A);
        if (jc.contains("B")) rd.get_matrix(jc["B"], cw + ".B", c.B);
        if (c.A.size() == 0 && c.B.size() == 0) {
          rd.fail(cw, "coupling carries neither A nor B");
          continue;
        }
        sub.couplings[src] = std::move(c);
      }
    }
  }

  if (!root.contains("topologies") || !root["topologies"].is_array() ||
      root["topologies"].empty()) {
    rd.fail("topologies", "expected a non-empty array");
  } else {
    const json& jt = root["topologies"];
    spec.network.topologies.resize(jt.size());
    for (size_t m = 0; m < jt.size(); ++m) {
      const std::string where = "topologies[" + std::to_string(m + 1) + "]";
      ModeTopology& topo = spec.network.topologies[m];
      topo.neighbors.assign(S, {});
      const json& jn = jt[m].is_object() && jt[m].contains("neighbors")
                           ? jt[m]["neighbors"]
                           : jt[m];
      if (!jn.is_array() || static_cast<int>(jn.size()) != S) {
        rd.fail(where, "expected one neighbor list per subsystem");
        continue;
      }
      for (int i = 0; i < S; ++i) {
        if (!jn[i].is_array()) {
          rd.fail(where + "[" + std::to_string(i + 1) + "]", "expected an array");
          continue;
        }
        for (const json& e : jn[i]) {
          int j = 0;
          if (rd.get_index(e, where + "[" + std::to_string(i + 1) + "]", S, j))
            topo.neighbors[i].push_back(j);
        }
      }
    }
  }

  if (!root.contains("signal") || !root["signal"].is_object()) {
    rd.fail("signal", "expected an object");
  } else {
    const json& jsig = root["signal"];
    SwitchingSignal& sig = spec.signal;
    if (jsig.contains("visibility") && jsig["visibility"].is_string()) {
      if (!parse_visibility(jsig["visibility"].get<std::string>(), sig.visibility))
        rd.fail("signal.visibility", "unknown value");
    } else {
      rd.fail("signal", "missing visibility");
    }
    if (!jsig.contains("graph") || !jsig["graph"].is_object()) {
      rd.fail("signal.graph", "expected an object");
    } else {
      const json& jg = jsig["graph"];
      if (jg.contains("modes")) rd.get_int(jg["modes"], "signal.graph.modes",
                                           sig.graph.num_modes);
      else rd.fail("signal.graph", "missing modes");
      if (jg.contains("dwell")) {
        Vector d;
        if (rd.get_vector(jg["dwell"], "signal.graph.dwell", d)) {
          sig.graph.dwell.resize(d.size());
          for (int k = 0; k < d.size(); ++k) sig.graph.dwell[k] = static_cast<int>(d(k));
        }
      } else {
        rd.fail("signal.graph", "missing dwell");
      }
      if (jg.contains("edges") && jg["edges"].is_array()) {
        for (size_t k = 0; k < jg["edges"].size(); ++k) {
          const json& je = jg["edges"][k];
          const std::string ew = "signal.graph.edges[" + std::to_string(k + 1) + "]";
          if (!je.is_array() || je.size() != 2) {
            rd.fail(ew, "expected a pair");
            continue;
          }
          int a = 0, b = 0;
          if (rd.get_index(je[0], ew, sig.graph.num_modes, a) &&
              rd.get_index(je[1], ew, sig.graph.num_modes, b))
            sig.graph.edges.emplace_back(a, b);
        }
      }
    }
    if (!jsig.contains("schedule") || !jsig["schedule"].is_array() ||
        jsig["schedule"].empty()) {
      rd.fail("signal.schedule", "expected a non-empty array of [t, mode] pairs");
    } else {
      for (size_t k = 0; k < jsig["schedule"].size(); ++k) {
        const json& je = jsig["schedule"][k];
        const std::string ew = "signal.schedule[" + std::to_string(k + 1) + "]";
        if (!je.is_array() || je.size() != 2) {
          rd.fail(ew, "expected a [t, mode] pair");
          continue;
        }
        int t = 0, m = 0;
        if (rd.get_int(je[0], ew, t) &&
            rd.get_index(je[1], ew, std::max(1, sig.graph.num_modes), m))
          sig.schedule.emplace_back(t, m);
      }
    }
    if (jsig.contains("allowable_neighbors")) {
      const json& ja = jsig["allowable_neighbors"];
      if (!ja.is_array() || static_cast<int>(ja.size()) != S) {
        rd.fail("signal.allowable_neighbors", "expected one list per subsystem");
      } else {
        sig.allowable_neighbors.assign(S, {});
        for (int i = 0; i < S; ++i) {
          const std::string aw =
              "signal.allowable_neighbors[" + std::to_string(i + 1) + "]";
          if (!ja[i].is_array()) {
            rd.fail(aw, "expected an array");
            continue;
          }
          for (const json& e : ja[i]) {
            int j = 0;
            if (rd.get_index(e, aw, S, j)) sig.allowable_neighbors[i].push_back(j);
          }
        }
      }
    }
  }

  if (root.contains("controller")) {
    const json& jc = root["controller"];
    if (!jc.is_object()) {
      rd.fail("controller", "expected an object");
    } else {
      ControllerParams& p = spec.params;
      if (jc.contains("horizon")) rd.get_int(jc["horizon"], "controller.horizon",
                                             p.horizon);
      if (jc.contains("mrpi_eps"))
        rd.get_double(jc["mrpi_eps"], "controller.mrpi_eps", p.mrpi_eps);
      if (jc.contains("set_tol"))
        rd.get_double(jc["set_tol"], "controller.set_tol", p.set_tol);
      if (jc.contains("max_set_iter"))
        rd.get_int(jc["max_set_iter"], "controller.max_set_iter", p.max_set_iter);
      auto tube = [&](const char* key, std::vector<double>& out) {
        if (!jc.contains(key)) return;
        Vector v;
        if (rd.get_vector(jc[key], std::string("controller.") + key, v)) {
          if (v.size() != S && v.size() != 1) {
            rd.fail(std::string("controller.") + key,
                    "expected one entry per subsystem");
            return;
          }
          out.assign(S, v(0));
          if (v.size() == S)
            for (int i = 0; i < S; ++i) out[i] = v(i);
        }
      };
      tube("state_tube", p.state_tube);
      tube("input_tube", p.input_tube);
      auto weights = [&](const char* key, std::vector<Matrix>& out) {
        if (!jc.contains(key)) return;
        if (!jc[key].is_array() || static_cast<int>(jc[key].size()) != S) {
          rd.fail(std::string("controller.") + key,
                  "expected one matrix per subsystem");
          return;
        }
        out.resize(S);
        for (int i = 0; i < S; ++i)
          rd.get_matrix(jc[key][i],
                        std::string("controller.") + key + "[" +
                            std::to_string(i + 1) + "]",
                        out[i]);
      };
      weights("Q", p.Q);
      weights("R", p.R);
      weights("decentralized_R", p.decentralized_R);
      if (jc.contains("neighbor_envelope")) {
        rd.get_double(jc["neighbor_envelope"], "controller.neighbor_envelope",
                      p.neighbor_envelope);
        if (p.neighbor_envelope <= 0.0 || p.neighbor_envelope > 1.0)
          rd.fail("controller.neighbor_envelope", "expected a value in (0, 1]");
      }
    }
  }

  if (root.contains("run") && root["run"].is_object() &&
      root["run"].contains("steps"))
    rd.get_int(root["run"]["steps"], "run.steps", spec.steps);
  else
    rd.fail("run.steps", "missing");

  if (!root.contains("initial_states") || !root["initial_states"].is_array() ||
      static_cast<int>(root["initial_states"].size()) != S) {
    rd.fail("initial_states", "expected one vector per subsystem");
  } else {
    spec.x0.resize(S);
    for (int i = 0; i < S; ++i)
      rd.get_vector(root["initial_states"][i],
                    "initial_states[" + std::to_string(i + 1) + "]", spec.x0[i]);
  }

  if (!res.errors.empty()) return res;

  // Structural checks shared with the run entry points.
  try {
    spec.network.validate();
    spec.signal.graph.validate();
    spec.signal.validate(spec.network.num_modes());
  } catch (const std::exception& e) {
    rd.fail("document", e.what());
  }
  for (int i = 0; i < S && res.errors.empty(); ++i) {
    const Subsystem& sub = spec.network.subsystems[i];
    if (spec.x0[i].size() != sub.nx())
      rd.fail("initial_states[" + std::to_string(i + 1) + "]",
              "dimension does not match the subsystem state");
  }
  if (spec.steps < 1) rd.fail("run.steps", "must be at least 1");
  if (spec.params.horizon < 1) rd.fail("controller.horizon", "must be at least 1");
  return res;
}

LoadResult load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    LoadResult res;
    res.errors.push_back("cannot open " + path);
    return res;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str());
}

std::string dump_experiment(const ExperimentSpec& spec) {
  json root;
  root["name"] = spec.name;
  json jsubs = json::array();
  for (const Subsystem& sub : spec.network.subsystems) {
    json js;
    js["A"] = matrix_json(sub.A);
    js["B"] = matrix_json(sub.B);
    js["X"] = set_json(sub.X);
    js["U"] = set_json(sub.U);
    if (!sub.couplings.empty()) {
      json jcs = json::array();
      for (const auto& [src, c] : sub.couplings) {
        json jc;
        jc["from"] = src + 1;
        if (c.A.size() > 0) jc["A"] = matrix_json(c.A);
        if (c.B.size() > 0) jc["B"] = matrix_json(c.B);
        jcs.push_back(std::move(jc));
      }
      js["couplings"] = std::move(jcs);
    }
    jsubs.push_back(std::move(js));
  }
  root["subsystems"] = std::move(jsubs);

  json jtopos = json::array();
  for (const ModeTopology& topo : spec.network.topologies) {
    json lists = json::array();
    for (const auto& nb : topo.neighbors) {
      json l = json::array();
      for (int j : nb) l.push_back(j + 1);
      lists.push_back(std::move(l));
    }
    jtopos.push_back(json{{"neighbors", std::move(lists)}});
  }
  root["topologies"] = std::move(jtopos);

  json jsig;
  jsig["visibility"] = visibility_name(spec.signal.visibility);
  json jsched = json::array();
  for (const auto& [t, m] : spec.signal.schedule)
    jsched.push_back(json::array({t, m + 1}));
  jsig["schedule"] = std::move(jsched);
  json jg;
  jg["modes"] = spec.signal.graph.num_modes;
  json jedges = json::array();
  for (const auto& [a, b] : spec.signal.graph.edges)
    jedges.push_back(json::array({a + 1, b + 1}));
  jg["edges"] = std::move(jedges);
  jg["dwell"] = spec.signal.graph.dwell;
  jsig["graph"] = std::move(jg);
  if (!spec.signal.allowable_neighbors.empty()) {
    json ja = json::array();
    for (const auto& lst : spec.signal.allowable_neighbors) {
      json l = json::array();
      for (int j : lst) l.push_back(j + 1);
      ja.push_back(std::move(l));
    }
    jsig["allowable_neighbors"] = std::move(ja);
  }
  root["signal"] = std::move(jsig);

  json jc;
  jc["horizon"] = spec.params.horizon;
  jc["mrpi_eps"] = spec.params.mrpi_eps;
  jc["set_tol"] = spec.params.set_tol;
  jc["max_set_iter"] = spec.params.max_set_iter;
  if (!spec.params.state_tube.empty()) jc["state_tube"] = spec.params.state_tube;
  if (!spec.params.input_tube.empty()) jc["input_tube"] = spec.params.input_tube;
  if (!spec.params.Q.empty()) {
    json q = json::array();
    for (const Matrix& M : spec.params.Q) q.push_back(matrix_json(M));
    jc["Q"] = std::move(q);
  }
  if (!spec.params.R.empty()) {
    json r = json::array();
    for (const Matrix& M : spec.params.R) r.push_back(matrix_json(M));
    jc["R"] = std::move(r);
  }
  if (!spec.params.decentralized_R.empty()) {
    json r = json::array();
    for (const Matrix& M : spec.params.decentralized_R) r.push_back(matrix_json(M));
    jc["decentralized_R"] = std::move(r);
  }
  if (spec.params.neighbor_envelope != 1.0)
    jc["neighbor_envelope"] = spec.params.neighbor_envelope;
  root["controller"] = std::move(jc);
  root["run"] = json{{"steps", spec.steps}};
  json jx0 = json::array();
  for (const Vector& v : spec.x0) jx0.push_back(vector_json(v));
  root["initial_states"] = std::move(jx0);
  return root.dump(2) + "\n";
}

} // namespace swmpc
