#pragma once

// Property suites shared by the unit tests and the acceptance binary. Each
// returns a verdict plus human-readable notes with the measured numbers.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace absrl::testing {

struct PropertyResult {
  bool pass = true;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "ok:   " : "FAIL: ") + what);
  }
};

/// pi_1 equals the product of level ratios times pi_n on random ensembles
/// with n in 1..5 and |A| in {2, 5, 17}.
PropertyResult check_telescoping(std::uint64_t seed, std::size_t trials = 1000, double tol = 1e-10);

/// Sum and residual updates leave identical parameters when n = 1.
PropertyResult check_single_level_equivalence(std::uint64_t seed, std::size_t trials = 100,
                                              double tol = 1e-12);

/// Policy, value and Q gradients against central finite differences of
/// independently written losses (f64, hidden (16, 8), dim-8 inputs).
PropertyResult check_trainer_gradients(std::uint64_t seed, double tol = 1e-5);

/// Coarsening, composition to the root and collapse preservation on random
/// trees (depth <= 6, branching <= 4).
PropertyResult check_abstraction_suite(std::uint64_t seed, std::size_t trees = 200);

/// Suffix identity, single-level target equivalence, target formula and the
/// 2-level tabular fixed point.
PropertyResult check_q_decomposition(std::uint64_t seed, double fixed_point_tol = 1e-3);

/// Chain-file round trip, ConceptNet replay filters and, when `dumps` holds
/// the offline game dumps, their tree statistics.
PropertyResult check_kg_ingestion(const std::filesystem::path& fixtures,
                                  const std::optional<std::filesystem::path>& dumps);

}  // namespace absrl::testing
