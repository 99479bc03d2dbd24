#include "swmpc/outputs.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace swmpc {

namespace {

using nlohmann::json;

// Shortest exact decimal form; %.17g round-trips IEEE doubles.
std::string num_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string num_12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

double finite_or_cap(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? 1e300 : -1e300;
}

json sse_to_json(const SseReport& rep) {
  json per_state = json::array();
  for (const Vector& v : rep.per_state) {
    json row = json::array();
    for (int k = 0; k < v.size(); ++k) row.push_back(v(k));
    per_state.push_back(std::move(row));
  }
  return json{{"per_state", std::move(per_state)},
              {"per_subsystem", rep.per_subsystem},
              {"total", rep.total}};
}

json audit_to_json(const AuditReport& rep) {
  json issues = json::array();
  for (const AuditIssue& is : rep.issues)
    issues.push_back(json{{"t", is.t},
                          {"subsystem", is.subsystem + 1}, // 0 marks network level
                          {"check", is.check},
                          {"magnitude", finite_or_cap(is.magnitude)}});
  return json{{"ok", rep.ok}, {"issues", std::move(issues)}};
}

} // namespace

std::string trace_csv(const SimulationTrace& trace) {
  const int S = static_cast<int>(trace.nx.size());
  int K = 0, L = 0;
  for (int i = 0; i < S; ++i) {
    K = std::max(K, trace.nx[i]);
    L = std::max(L, trace.nu[i]);
  }
  std::ostringstream os;
  os << "t,subsystem,mode,delta";
  for (int k = 1; k <= K; ++k) os << ",x" << k;
  for (int k = 1; k <= L; ++k) os << ",u" << k;
  for (int k = 1; k <= K; ++k) os << ",xhat" << k;
  os << ",feasible,cost,solve_ms\n";
  const int final_t = trace.steps.empty() ? -1 : trace.steps.back().t;
  for (const Step& st : trace.steps) {
    const bool final_row = st.t == final_t && st.t > 0;
    for (int i = 0; i < S; ++i) {
      const SubsystemStep& rec = st.subs[i];
      os << st.t << ',' << (i + 1) << ',' << (st.mode + 1) << ',' << st.delta;
      for (int k = 0; k < K; ++k)
        os << ',' << (k < rec.x.size() ? num_exact(rec.x(k)) : "");
      for (int k = 0; k < L; ++k)
        os << ',' << (k < rec.u.size() ? num_exact(rec.u(k)) : "");
      for (int k = 0; k < K; ++k)
        os << ',' << (k < rec.xhat.size() ? num_exact(rec.xhat(k)) : "");
      if (final_row) {
        os << ",,,\n";
        continue;
      }
      os << ',' << (rec.feasible ? 1 : 0);
      os << ',' << (std::isnan(rec.cost) ? "" : num_exact(rec.cost));
      os << ',' << num_exact(rec.solve_ms) << '\n';
    }
  }
  return os.str();
}

std::string sse_json(const SseReport& rep) { return sse_to_json(rep).dump(2) + "\n"; }

std::string audit_json(const AuditReport& rep) {
  return audit_to_json(rep).dump(2) + "\n";
}

std::string run_report_json(const RunResult& run, const AuditReport& audit) {
  json root;
  root["strategy"] = to_string(run.strategy);
  root["outcome"] = to_string(run.outcome);
  root["detail"] = run.detail;
  root["design_seconds"] = run.design_seconds;
  root["first_infeasible_t"] = run.trace.first_infeasible_t;
  if (!run.locals.empty()) {
    json entry = json::array();
    json cons = json::array();
    for (const LocalArtifacts& a : run.locals) {
      entry.push_back(a.entry_ok);
      cons.push_back(a.consistency);
    }
    root["entry_ok"] = std::move(entry);
    root["consistency"] = std::move(cons);
  }
  if (run.central) root["entry_ok"] = run.central->entry_ok;
  if (!run.trace.steps.empty()) {
    root["sse"] = sse_to_json(run.sse);
    root["audit"] = audit_to_json(audit);
  }
  return root.dump(2) + "\n";
}

std::string comparison_csv(const std::vector<RunResult>& runs) {
  int S = 0;
  for (const RunResult& r : runs)
    S = std::max(S, static_cast<int>(r.sse.per_subsystem.size()));
  std::ostringstream os;
  os << "strategy,outcome";
  for (int i = 1; i <= S; ++i) os << ",sse_" << i;
  os << ",sse_total,first_infeasible_t,detail\n";
  for (const RunResult& r : runs) {
    os << to_string(r.strategy) << ',' << to_string(r.outcome);
    const bool ran = !r.trace.steps.empty();
    // A score is only comparable when the run finished cleanly; aborted or
    // infeasible runs get dashes even if a partial trace exists.
    const bool scored = ran && r.outcome == RunOutcome::ok;
    for (int i = 0; i < S; ++i) {
      os << ',';
      if (scored && i < static_cast<int>(r.sse.per_subsystem.size()))
        os << num_exact(r.sse.per_subsystem[i]);
      else
        os << '-';
    }
    os << ',' << (scored ? num_exact(r.sse.total) : std::string("-"));
    os << ',';
    if (ran && r.trace.first_infeasible_t >= 0)
      os << r.trace.first_infeasible_t;
    else
      os << '-';
    os << ',' << csv_quote(r.detail) << '\n';
  }
  return os.str();
}

std::string comparison_json(const std::vector<RunResult>& runs) {
  json rows = json::array();
  for (const RunResult& r : runs) {
    json row;
    row["strategy"] = to_string(r.strategy);
    row["outcome"] = to_string(r.outcome);
    row["detail"] = r.detail;
    if (r.outcome == RunOutcome::ok && !r.trace.steps.empty())
      row["sse"] = sse_to_json(r.sse);
    else
      row["sse"] = nullptr;
    if (!r.trace.steps.empty())
      row["first_infeasible_t"] = r.trace.first_infeasible_t;
    else
      row["first_infeasible_t"] = nullptr;
    rows.push_back(std::move(row));
  }
  return rows.dump(2) + "\n";
}

std::string polytope_text(const Polytope& P) {
  std::ostringstream os;
  os << "dim " << P.dim() << '\n';
  if (P.is_empty()) {
    for (int k = 0; k < P.dim(); ++k) os << "0 ";
    os << "-1\n";
    return os.str();
  }
  for (int r = 0; r < P.num_rows(); ++r) {
    for (int c = 0; c < P.dim(); ++c) os << num_12(P.normals()(r, c)) << ' ';
    os << num_12(P.offsets()(r)) << '\n';
  }
  return os.str();
}

std::string loop_text(const Polytope& P) {
  if (P.dim() != 2) throw std::invalid_argument("vertex loops need a 2-D set");
  if (P.is_empty() || !P.is_bounded())
    throw std::invalid_argument("vertex loops need a bounded nonempty set");
  std::ostringstream os;
  for (const Vector& v : vertices_2d(P))
    os << num_12(v(0)) << ' ' << num_12(v(1)) << '\n';
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("short write on " + path);
}

std::string certificates_json(const RunResult& run, const ExperimentSpec& spec,
                              bool* all_ok) {
  bool ok = true;
  json root;
  json jsubs = json::array();
  for (size_t i = 0; i < run.locals.size(); ++i) {
    const LocalArtifacts& a = run.locals[i];
    const Subsystem& sub = spec.network.subsystems[i];
    const Matrix F = sub.A + sub.B * a.K;
    json js;
    js["subsystem"] = static_cast<int>(i + 1);
    json jmodes = json::array();
    std::vector<ModeDynamics> tight;
    std::vector<Polytope> terms, reach;
    for (size_t m = 0; m < a.sets.size(); ++m) {
      const ModeSets& s = a.sets[m];
      json jm;
      jm["mode"] = a.per_mode ? json(static_cast<int>(m + 1)) : json("any");
      const bool rpi =
          is_subset(minkowski_sum(affine_image(s.Z, F), s.W), s.Z, tol::rpi_certificate);
      const bool tx = is_subset(minkowski_sum(s.Xhat, s.Z), sub.X, tol::set_equality);
      const bool tu = is_subset(minkowski_sum(s.Uhat, affine_image(s.Z, a.K)), sub.U,
                                tol::set_equality);
      jm["rpi"] = rpi;
      jm["state_tightening"] = tx;
      jm["input_tightening"] = tu;
      ok = ok && rpi && tx && tu;
      if (a.consistency) {
        const bool cx = is_subset(minkowski_sum(s.dE, s.Z), a.E, tol::set_equality);
        const bool cu = is_subset(minkowski_sum(s.dU, affine_image(s.Z, a.K)), a.Eu,
                                  tol::set_equality);
        jm["deviation_state"] = cx;
        jm["deviation_input"] = cu;
        ok = ok && cx && cu;
      }
      jmodes.push_back(std::move(jm));
      tight.push_back(ModeDynamics{sub.A, sub.B, s.Xhat, s.Uhat});
      terms.push_back(s.T);
    }
    reach = a.rci;
    js["modes"] = std::move(jmodes);
    bool term_ok = false, reach_ok = false;
    if (a.per_mode) {
      term_ok = switch_rci_certificate(tight, spec.signal.graph, terms);
      reach_ok = reach.size() == tight.size() &&
                 switch_rci_certificate(tight, spec.signal.graph, reach);
    } else {
      term_ok = !terms[0].is_empty() && is_subset(terms[0], tight[0].X) &&
                is_subset(terms[0], pre_set(terms[0], tight[0]));
      reach_ok = !reach.empty() && !reach[0].is_empty() &&
                 is_subset(reach[0], tight[0].X) &&
                 is_subset(reach[0], pre_set(reach[0], tight[0]));
    }
    js["terminal_family"] = term_ok;
    js["reach_family"] = reach_ok;
    js["entry_ok"] = a.entry_ok;
    ok = ok && term_ok && reach_ok;
    jsubs.push_back(std::move(js));
  }
  if (!jsubs.empty()) root["subsystems"] = std::move(jsubs);
  if (run.central) {
    const bool term_ok = switch_rci_certificate(run.central->global_modes,
                                                spec.signal.graph, run.central->T);
    root["global"] =
        json{{"terminal_family", term_ok}, {"entry_ok", run.central->entry_ok}};
    ok = ok && term_ok;
  }
  root["all_ok"] = ok;
  if (all_ok) *all_ok = ok;
  return root.dump(2) + "\n";
}

std::vector<std::string> export_sets(const std::string& dir, const RunResult& run) {
  std::vector<std::string> written;
  auto emit = [&](const std::string& stem, const Polytope& P) {
    const std::string base = dir + "/" + stem;
    write_text_file(base + ".txt", polytope_text(P));
    written.push_back(base + ".txt");
    if (P.dim() == 2 && !P.is_empty() && P.is_bounded()) {
      write_text_file(base + ".loop", loop_text(P));
      written.push_back(base + ".loop");
    }
  };

  for (size_t i = 0; i < run.locals.size(); ++i) {
    const LocalArtifacts& a = run.locals[i];
    const std::string sub = "sub" + std::to_string(i + 1);
    emit(sub + "_E", a.E);
    emit(sub + "_Eu", a.Eu);
    for (size_t m = 0; m < a.sets.size(); ++m) {
      const std::string tag =
          a.per_mode ? sub + "_mode" + std::to_string(m + 1) : sub + "_any";
      const ModeSets& s = a.sets[m];
      emit(tag + "_W", s.W);
      emit(tag + "_Z", s.Z);
      emit(tag + "_dE", s.dE);
      emit(tag + "_dU", s.dU);
      emit(tag + "_Xhat", s.Xhat);
      emit(tag + "_Uhat", s.Uhat);
      emit(tag + "_Xf", s.Xf);
      emit(tag + "_T", s.T);
    }
    for (size_t m = 0; m < a.rci.size(); ++m) {
      const std::string tag =
          a.per_mode ? sub + "_mode" + std::to_string(m + 1) : sub + "_any";
      emit(tag + "_C", a.rci[m]);
    }
  }
  if (run.central)
    for (size_t m = 0; m < run.central->T.size(); ++m)
      emit("global_mode" + std::to_string(m + 1) + "_T", run.central->T[m]);
  return written;
}

} // namespace swmpc
