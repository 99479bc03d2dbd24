#pragma once

#include "swmpc/simulation.hpp"

#include <string>
#include <vector>

namespace swmpc {

// Closed-loop trace in CSV form. One row per subsystem per time step with
// columns t, subsystem, mode, delta, x1..., u1..., xhat1..., feasible, cost,
// solve_ms. Column counts follow the widest subsystem; unused and final-row
// fields stay empty. Subsystem and mode indices are 1-based like the
// experiment files.
std::string trace_csv(const SimulationTrace& trace);

std::string sse_json(const SseReport& rep);
std::string audit_json(const AuditReport& rep);

// Full run record: outcome, detail, timings, entry flags, squared-error
// summary and the audit verdict in one JSON document.
std::string run_report_json(const RunResult& run, const AuditReport& audit);

// Side-by-side strategy comparison. Rows for runs that never produced a
// trace carry a dash in the numeric fields.
std::string comparison_csv(const std::vector<RunResult>& runs);
std::string comparison_json(const std::vector<RunResult>& runs);

// Plain-text H-form: first line "dim <n>", then one row "a_1 ... a_n b" per
// inequality a'x <= b. The empty set is a single all-zero row with b = -1.
std::string polytope_text(const Polytope& P);

// Closed vertex loop of a bounded 2-D set, one "x y" pair per line,
// counterclockwise.
std::string loop_text(const Polytope& P);

// Writes the design sets of a finished design under dir: one .txt per set
// (and a .loop next to it for bounded 2-D sets). Returns the files written.
std::vector<std::string> export_sets(const std::string& dir, const RunResult& run);

// Re-verifies the design obligations from scratch and renders the verdicts:
// tube invariance, constraint tightening, deviation budgets, and the
// switch-invariance of the terminal and reach families. Sets *all_ok when
// requested.
std::string certificates_json(const RunResult& run, const ExperimentSpec& spec,
                              bool* all_ok = nullptr);

void write_text_file(const std::string& path, const std::string& content);

} // namespace swmpc
