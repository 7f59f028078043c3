#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ynet {

struct GradCheckRow {
  std::string op;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  bool all_pass() const {
    for (const auto& r : rows)
      if (!r.pass) return false;
    return !rows.empty();
  }
};

// Central finite differences in double precision against every reverse-mode
// op and a miniature full model, over the given number of seeds. `sabotage`
// injects a deliberate gradient error (test hook for the failure path).
GradCheckReport run_gradcheck(uint64_t seed, int n_seeds = 10, bool sabotage = false);

}  // namespace ynet
