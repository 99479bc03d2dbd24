#pragma once

namespace swmpc::tol {

// Pinned numeric tolerances. Row normals are unit length, so absolute and
// relative tolerances coincide up to the offset scale.
inline constexpr double dedupe = 1e-10;        // row deduplication
inline constexpr double redundancy = 1e-9;     // LP slack for redundant rows
inline constexpr double emptiness = 1e-9;      // Chebyshev radius threshold
inline constexpr double set_equality = 1e-7;   // is_subset / set_equal default
inline constexpr double membership = 1e-9;     // point containment
inline constexpr double zero_norm = 1e-12;     // row normal treated as zero
inline constexpr double fm_zero = 1e-10;       // coefficient treated as zero in elimination
inline constexpr double schur_margin = 1e-9;   // |eig| < 1 - margin
inline constexpr double rpi_certificate = 1e-7;
inline constexpr double ocp_constraint = 1e-6; // solution feasibility audit
inline constexpr double qp_kkt = 1e-8;
inline constexpr int max_set_iterations = 100;

} // namespace swmpc::tol
