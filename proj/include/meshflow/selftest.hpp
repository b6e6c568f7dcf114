#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace meshflow {

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick gradient checks, round trips and oracle comparisons at toy sizes.
std::vector<SelftestResult> run_selftest(std::uint64_t seed = 0);

}  // namespace meshflow
