#include <gtest/gtest.h>

#include <set>

#include "gradcheck_suite.hpp"

using namespace wvad;

TEST(GradCheckSuite, EveryCheckPassesOnTwoSeeds) {
  SuiteOptions opts;
  opts.seeds = 2;
  SuiteReport r = run_gradcheck_suite(opts);
  EXPECT_TRUE(r.passed);
  for (const auto& e : r.entries) EXPECT_TRUE(e.passed) << format_suite_entry(e);
}

TEST(GradCheckSuite, ReportListsEveryCheckedOp) {
  SuiteOptions opts;
  opts.seeds = 1;
  SuiteReport r = run_gradcheck_suite(opts);
  std::set<std::string> seen;
  for (const auto& e : r.entries) seen.insert(e.name);
  for (const auto& name : gradcheck_suite_names())
    EXPECT_TRUE(seen.count(name)) << name;
  for (const char* required : {"matmul", "add", "sigmoid", "exp", "log", "layer_norm", "softmax_rows", "mean",
                               "dws_conv1d", "topk_mean", "multi_head_self_attention", "full_objective"})
    EXPECT_TRUE(seen.count(required)) << required;
}

TEST(GradCheckSuite, InjectedFaultyOpFails) {
  SuiteOptions opts;
  opts.seeds = 1;
  opts.inject_faulty_op = true;
  SuiteReport r = run_gradcheck_suite(opts);
  EXPECT_FALSE(r.passed);
  bool faulty_failed = false;
  for (const auto& e : r.entries) {
    if (e.name == "faulty_square") faulty_failed = !e.passed;
    else EXPECT_TRUE(e.passed) << format_suite_entry(e);
  }
  EXPECT_TRUE(faulty_failed);
}
