#include <gtest/gtest.h>

#include "vpfb/verify.hpp"

using namespace vpfb;

TEST(Verify, AllChecksPassOnCleanBuild) {
  for (const CheckResult& c : run_verification()) EXPECT_TRUE(c.passed) << c.id << ": " << c.detail;
}

TEST(Verify, CorruptedScheduleFailsNamedCheck) {
  VerifyOptions opt;
  opt.include_poisson = false;
  opt.schedule = [](double t, const ScheduleParams& p) {
    ScheduleEval e = eval_schedule(t, p);
    e.sigma *= 1.0 + 1e-6;
    return e;
  };
  const auto results = run_verification(opt);
  bool found = false;
  for (const CheckResult& c : results) {
    if (c.id == "schedule.identity") {
      found = true;
      EXPECT_FALSE(c.passed);
    }
  }
  EXPECT_TRUE(found);
}
