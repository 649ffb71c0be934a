#include <gtest/gtest.h>

#include "calprune/metrics.hpp"
#include "oracles.hpp"

using namespace calprune;
using namespace calprune::testing;

namespace {

EvalRecord rec(double c, bool correct) { return EvalRecord{c, correct, 0, correct ? 0u : 1u}; }

std::vector<EvalRecord> repeated(double c, std::size_t correct, std::size_t wrong) {
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < correct; ++i) out.push_back(rec(c, true));
  for (std::size_t i = 0; i < wrong; ++i) out.push_back(rec(c, false));
  return out;
}

}  // namespace

TEST(MakeRecord, CorrectnessFollowsLabels) {
  EXPECT_TRUE(make_record(0.5, 2, 2).correct);
  EXPECT_FALSE(make_record(0.5, 1, 2).correct);
}

TEST(BinIndex, HalfOpenEdges) {
  EXPECT_EQ(bin_index(0.0, 10), 0u);
  EXPECT_EQ(bin_index(0.1, 10), 0u);
  EXPECT_EQ(bin_index(0.10000001, 10), 1u);
  EXPECT_EQ(bin_index(0.3, 10), 2u);
  EXPECT_EQ(bin_index(1.0, 10), 9u);
  EXPECT_EQ(bin_index(0.7, 1), 0u);
  for (std::size_t m = 1; m <= 15; ++m) {
    for (std::size_t b = 1; b <= m; ++b) {
      const double edge = static_cast<double>(b) / static_cast<double>(m);
      EXPECT_EQ(bin_index(edge, m), b - 1) << b << "/" << m;
    }
  }
}

TEST(BinnedEce, SingleBin) {
  const auto r = binned_ece(repeated(0.8, 3, 1), 10);
  EXPECT_NEAR(r.ece, 0.05, 1e-15);
}

TEST(BinnedEce, PerfectlyCalibratedConstruction) {
  std::vector<EvalRecord> recs;
  for (std::size_t b = 0; b < 10; ++b) {
    const double omega = (b + 0.5) / 10.0;
    // 20 records at the bin centre, exactly omega * 20 of them correct
    const auto n_correct = static_cast<std::size_t>(std::lround(omega * 20));
    const auto part = repeated(n_correct / 20.0, n_correct, 20 - n_correct);
    recs.insert(recs.end(), part.begin(), part.end());
  }
  EXPECT_NEAR(binned_ece(recs, 10).ece, 0.0, 1e-15);
}

TEST(BinnedEce, EmptyRejected) {
  EXPECT_THROW(binned_ece({}, 10), std::invalid_argument);
  EXPECT_THROW(binned_ece(repeated(0.5, 1, 0), 0), std::invalid_argument);
}

TEST(BinnedEce, BinsCoverAllRecords) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto recs = random_records(rng, 1 + rng.below(300), 10);
    const auto r = binned_ece(recs, 10);
    std::size_t total = 0;
    double ece = 0;
    for (const auto& b : r.bins) {
      total += b.count;
      ece += static_cast<double>(b.count) / static_cast<double>(recs.size()) * std::abs(b.accuracy - b.mean_confidence);
    }
    EXPECT_EQ(total, recs.size());
    EXPECT_NEAR(r.ece, ece, 1e-12);
    EXPECT_GE(r.ece, 0.0);
    EXPECT_LE(r.ece, 1.0);
  }
}

TEST(BinnedEce, MatchesOracle) {
  Rng rng(2024);
  for (int t = 0; t < 300; ++t) {
    const std::size_t m = std::vector<std::size_t>{1, 10, 15}[rng.below(3)];
    const auto recs = random_records(rng, 1 + rng.below(500), m);
    EXPECT_NEAR(binned_ece(recs, m).ece, oracle_ece(recs, m), 1e-12);
    for (double delta : {0.5, 0.95, 0.99, 1.0}) {
      const auto got = ece_on_subset(recs, delta, m);
      const auto want = oracle_subset_ece(recs, delta, m);
      ASSERT_EQ(got.has_value(), want.has_value());
      if (got) {
        EXPECT_NEAR(*got, *want, 1e-12);
      }
    }
  }
}

TEST(BinnedEce, SingleRecord) {
  EXPECT_NEAR(binned_ece({rec(0.7, true)}, 10).ece, 0.3, 1e-15);
  EXPECT_NEAR(binned_ece({rec(0.7, false)}, 10).ece, 0.7, 1e-15);
}

TEST(BinnedEce, OneBinIsGlobalGap) {
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    const auto recs = random_records(rng, 1 + rng.below(200), 1);
    double acc = 0, conf = 0;
    for (const auto& r : recs) {
      acc += r.correct;
      conf += r.confidence;
    }
    const double n = static_cast<double>(recs.size());
    EXPECT_NEAR(binned_ece(recs, 1).ece, std::abs(acc / n - conf / n), 1e-12);
  }
}

TEST(BinnedEce, PermutationInvariant) {
  Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    auto recs = random_records(rng, 2 + rng.below(200), 10);
    const auto a = calibration_report(recs, 10, {0.9});
    rng.shuffle(recs);
    const auto b = calibration_report(recs, 10, {0.9});
    EXPECT_NEAR(a.ece, b.ece, 1e-12);
    EXPECT_NEAR(a.test_error, b.test_error, 1e-12);
    ASSERT_EQ(a.auroc.has_value(), b.auroc.has_value());
    if (a.auroc) {
      EXPECT_NEAR(*a.auroc, *b.auroc, 1e-12);
    }
    ASSERT_EQ(a.subsets[0].ece.has_value(), b.subsets[0].ece.has_value());
    if (a.subsets[0].ece) {
      EXPECT_NEAR(*a.subsets[0].ece, *b.subsets[0].ece, 1e-12);
    }
  }
}

TEST(HighConfidence, Examples) {
  EXPECT_EQ(high_confidence_subset({rec(1.0, true)}, 1.0).size(), 1u);
  const std::vector<EvalRecord> two{rec(0.96, true), rec(0.94, true)};
  EXPECT_EQ(high_confidence_subset(two, 0.95).size(), 1u);
  EXPECT_DOUBLE_EQ(high_confidence_fraction(two, 0.95), 50.0);
  EXPECT_NO_THROW(high_confidence_subset(two, 0.99));
}

TEST(HighConfidence, DeltaRangeEnforced) {
  EXPECT_THROW(high_confidence_subset({rec(0.5, true)}, 0.0), std::invalid_argument);
  EXPECT_THROW(high_confidence_subset({rec(0.5, true)}, 1.5), std::invalid_argument);
}

TEST(SubsetEce, Examples) {
  EXPECT_NEAR(*ece_on_subset(repeated(0.96, 24, 1), 0.95, 10), 0.0, 1e-15);
  EXPECT_NEAR(*ece_on_subset(repeated(0.99, 5, 5), 0.95, 10), 0.49, 1e-15);
}

TEST(SubsetEce, EmptyIsFlagged) {
  EXPECT_FALSE(ece_on_subset(repeated(0.5, 3, 3), 0.95, 10).has_value());
  const auto e = subset_entry(repeated(0.5, 3, 3), 0.95, 10);
  EXPECT_EQ(e.count, 0u);
  EXPECT_FALSE(e.ece.has_value());
}

TEST(SubsetEce, TinyDeltaEqualsFullEce) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    auto recs = random_records(rng, 1 + rng.below(100), 10);
    for (auto& r : recs) r.confidence = std::max(r.confidence, 1e-6);
    EXPECT_NEAR(*ece_on_subset(recs, 1e-9, 10), binned_ece(recs, 10).ece, 1e-15);
  }
}

TEST(Auroc, Examples) {
  EXPECT_DOUBLE_EQ(*refinement_auroc({rec(0.9, true), rec(0.8, true), rec(0.2, false), rec(0.1, false)}), 1.0);
  EXPECT_DOUBLE_EQ(*refinement_auroc({rec(0.5, true), rec(0.5, false), rec(0.5, true)}), 0.5);
  EXPECT_DOUBLE_EQ(*refinement_auroc({rec(0.9, true), rec(0.3, true), rec(0.5, false)}), 0.5);
}

TEST(Auroc, DegenerateIsUndefined) {
  EXPECT_FALSE(refinement_auroc({rec(0.9, true), rec(0.3, true)}).has_value());
  EXPECT_FALSE(refinement_auroc({rec(0.9, false)}).has_value());
  EXPECT_FALSE(refinement_auroc({}).has_value());
}

TEST(Auroc, MatchesPairCountOracle) {
  Rng rng(10);
  for (int t = 0; t < 300; ++t) {
    const auto recs = random_records(rng, 1 + rng.below(300), 10);
    const auto got = refinement_auroc(recs);
    const auto want = oracle_auroc(recs);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (got) {
      EXPECT_NEAR(*got, *want, 1e-12);
    }
  }
}

TEST(TestError, Examples) {
  EXPECT_DOUBLE_EQ(test_error({rec(1, true), rec(1, true), rec(1, true), rec(1, false)}), 25.0);
  EXPECT_DOUBLE_EQ(test_error(repeated(0.5, 4, 0)), 0.0);
  EXPECT_DOUBLE_EQ(test_error(repeated(0.5, 0, 4)), 100.0);
  EXPECT_THROW(test_error({}), std::invalid_argument);
}

TEST(Report, AssemblesSubsetsInOrder) {
  const auto r = calibration_report(repeated(0.97, 9, 1), 10, {0.95, 0.99});
  ASSERT_EQ(r.subsets.size(), 2u);
  EXPECT_DOUBLE_EQ(r.subsets[0].delta, 0.95);
  EXPECT_EQ(r.subsets[0].count, 10u);
  EXPECT_DOUBLE_EQ(r.subsets[0].fraction_percent, 100.0);
  EXPECT_EQ(r.subsets[1].count, 0u);
  EXPECT_DOUBLE_EQ(r.test_error, 10.0);
  EXPECT_TRUE(calibration_report(repeated(0.97, 9, 1), 10, {}).subsets.empty());
}

TEST(Reliability, RowsMatchBins) {
  const auto r = calibration_report({rec(0.85, true), rec(0.82, false), rec(0.33, true)}, 10, {});
  const auto rows = export_reliability_data(r);
  ASSERT_EQ(rows.size(), 10u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].count == 0) {
      EXPECT_FALSE(rows[i].confidence.has_value());
      EXPECT_FALSE(rows[i].accuracy.has_value());
      EXPECT_FALSE(rows[i].gap.has_value());
    } else {
      EXPECT_DOUBLE_EQ(*rows[i].gap, *rows[i].accuracy - *rows[i].confidence);
    }
  }
  EXPECT_EQ(rows[8].count, 2u);
  EXPECT_DOUBLE_EQ(*rows[8].accuracy, 0.5);
  EXPECT_NEAR(*rows[8].gap, 0.5 - 0.835, 1e-15);
}

TEST(Histogram, FractionsSumToOne) {
  Rng rng(12);
  const auto recs = random_records(rng, 123, 15);
  const auto rows = confidence_histogram(calibration_report(recs, 15, {}));
  ASSERT_EQ(rows.size(), 15u);
  double s = 0;
  for (const auto& r : rows) s += r.fraction;
  EXPECT_NEAR(s, 1.0, 1e-12);
}
