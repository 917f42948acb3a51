#include <gtest/gtest.h>

#include "sffnet/audit.hpp"

namespace sffnet {
namespace {

TEST(Audit, EveryCasePassesAtItsTolerance) {
  for (const auto& r : run_audit("all", 2024)) {
    EXPECT_TRUE(r.report.passed) << r.name << " max rel err " << r.report.max_rel_error;
    EXPECT_EQ(r.tolerance, r.group == "network" ? 1e-3 : 1e-4) << r.name;
  }
}

TEST(Audit, InjectedFaultIsCaught) {
  for (const auto& r : run_audit("op", 1, true)) EXPECT_FALSE(r.report.passed) << r.name;
  EXPECT_FALSE(run_audit("mdaf", 1, true).front().report.passed);
}

TEST(Audit, SelectsByNameOrGroupAndRejectsUnknown) {
  EXPECT_EQ(run_audit("local", 0).size(), 1u);
  EXPECT_EQ(run_audit("branch", 0).size(), 4u);
  EXPECT_THROW(run_audit("backbone", 0), ConfigError);
}

TEST(Audit, SeedIsReproducible) {
  const auto a = run_audit("conv2d", 9), b = run_audit("conv2d", 9);
  EXPECT_EQ(a.front().report.max_rel_error, b.front().report.max_rel_error);
}

}  // namespace
}  // namespace sffnet
