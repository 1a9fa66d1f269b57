#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "plreg/errors.hpp"
#include "plreg/protocols.hpp"

using namespace plreg;

namespace {

SyntheticSpec small_spec(std::size_t k = 4, std::size_t known = 2, std::size_t per_class = 10) {
  SyntheticSpec s;
  s.num_classes = k;
  s.num_known = known;
  s.samples_per_class_max = per_class;
  return s;
}

std::map<int, std::size_t> class_counts(const std::vector<Sample>& samples) {
  std::map<int, std::size_t> m;
  for (const Sample& s : samples) ++m[s.class_id];
  return m;
}

// identity of a sample under continuous noise
std::vector<double> key(const Sample& s) { return s.features; }

}  // namespace

TEST(LongTail, Profiles) {
  EXPECT_EQ(long_tail_counts(5, 100, 0.01), (std::vector<std::size_t>{100, 32, 10, 3, 1}));
  EXPECT_EQ(long_tail_counts(4, 7, 1.0), (std::vector<std::size_t>(4, 7)));
  // independent evaluation of n_max * rho^(c/(K-1))
  const auto c = long_tail_counts(10, 500, 0.01);
  for (std::size_t i = 0; i < 10; ++i) {
    const double want = std::max(1.0, std::round(500 * std::pow(0.01, i / 9.0)));
    EXPECT_EQ(c[i], static_cast<std::size_t>(want));
    if (i) EXPECT_LE(c[i], c[i - 1]);
  }
  EXPECT_EQ(long_tail_counts(3, 1, 0.01), (std::vector<std::size_t>(3, 1)));
}

TEST(SpecValidation, RejectsBadSpecs) {
  SyntheticSpec s = small_spec();
  EXPECT_NO_THROW(s.validate());
  s.num_known = 4;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.imbalance_ratio = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.input_dim = s.min_input_dim() - 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s.input_dim = s.min_input_dim() + 3;
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.resolved_input_dim(), s.min_input_dim() + 3);
}

TEST(Generate, NoiseFreeSamplesEqualPrototypes) {
  SyntheticSpec s = small_spec();
  s.noise_sigma = 0.0;
  s.domain_dims = 3;
  s.num_domains = 2;
  s.domain_shift = 2.0;
  for (const Sample& x : generate(s)) EXPECT_EQ(x.features, prototype(s, x.class_id, x.domain_id));
}

TEST(Generate, PrototypeLayout) {
  SyntheticSpec s = small_spec();
  s.domain_dims = 2;
  s.num_domains = 3;
  s.domain_shift = 1.5;
  s.input_dim = s.min_input_dim() + 1;
  const auto p = prototype(s, 2, 1);
  ASSERT_EQ(p.size(), s.input_dim);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(p[k], (k == 4 || k == 5) ? 1.0 : 0.0);
  for (std::size_t k = 8; k < 12; ++k) EXPECT_EQ(p[k], 0.0);  // noise dims
  EXPECT_NEAR(std::hypot(p[12], p[13]), 1.5, 1e-12);
  EXPECT_EQ(p[14], 0.0);  // padding
  EXPECT_NE(prototype(s, 2, 0)[12], p[12]);
}

TEST(Generate, CountsPerClassAndDomain) {
  SyntheticSpec s = small_spec(5, 2, 100);
  s.imbalance_ratio = 0.01;
  s.num_domains = 2;
  s.domain_dims = 1;
  const auto counts = class_counts(generate(s));
  const std::vector<std::size_t> want{100, 32, 10, 3, 1};
  for (int c = 0; c < 5; ++c) EXPECT_EQ(counts.at(c), 2 * want[static_cast<std::size_t>(c)]);
}

TEST(Generate, Deterministic) {
  SyntheticSpec s = small_spec();
  s.seed = 17;
  const auto a = generate(s), b = generate(s);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].features, b[i].features);
  s.seed = 18;
  EXPECT_NE(generate(s)[0].features, a[0].features);
}

TEST(GcdSplit, CountBookkeeping) {
  const auto pool = generate(small_spec(4, 2, 10));
  const TaskSplit split = make_gcd_split(pool, 2, 3);
  EXPECT_EQ(split.labeled.size(), 10u);
  EXPECT_EQ(split.unlabeled.size(), 30u);
  EXPECT_EQ(split.known_classes, (std::set<int>{0, 1}));
  for (const Sample& s : split.labeled) {
    EXPECT_LT(s.class_id, 2);
    EXPECT_TRUE(s.labeled);
  }
  for (const Sample& s : split.unlabeled) EXPECT_FALSE(s.labeled);
  const auto lc = class_counts(split.labeled);
  EXPECT_EQ(lc.at(0), 5u);
  EXPECT_EQ(lc.at(1), 5u);
}

TEST(GcdSplit, DisjointCoveringAndDeterministic) {
  const auto pool = generate(small_spec(6, 3, 15));
  const TaskSplit a = make_gcd_split(pool, 3, 9), b = make_gcd_split(pool, 3, 9);
  std::multiset<std::vector<double>> all, labeled;
  for (const Sample& s : a.labeled) {
    all.insert(key(s));
    labeled.insert(key(s));
  }
  for (const Sample& s : a.unlabeled) {
    all.insert(key(s));
    EXPECT_EQ(labeled.count(key(s)), 0u);
  }
  std::multiset<std::vector<double>> original;
  for (const Sample& s : pool) original.insert(key(s));
  EXPECT_EQ(all, original);
  ASSERT_EQ(a.labeled.size(), b.labeled.size());
  for (std::size_t i = 0; i < a.labeled.size(); ++i) EXPECT_EQ(a.labeled[i].features, b.labeled[i].features);
  const TaskSplit c = make_gcd_split(pool, 3, 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.labeled.size(); ++i) differs |= a.labeled[i].features != c.labeled[i].features;
  EXPECT_TRUE(differs);
}

TEST(GcdSplit, SingleSampleClassGoesUnlabeled) {
  SyntheticSpec s = small_spec(5, 3, 100);
  s.imbalance_ratio = 0.01;
  // known class 1 trimmed to a single sample
  std::vector<Sample> pool = generate(s);
  std::vector<Sample> trimmed;
  bool kept = false;
  for (const Sample& x : pool) {
    if (x.class_id == 1) {
      if (kept) continue;
      kept = true;
    }
    trimmed.push_back(x);
  }
  const TaskSplit split = make_gcd_split(trimmed, 3, 1);
  EXPECT_EQ(class_counts(split.labeled).count(1), 0u);
  EXPECT_EQ(class_counts(split.unlabeled).at(1), 1u);
}

TEST(GcdTask, FreshBalancedTestSet) {
  SyntheticSpec s = small_spec(4, 2, 20);
  s.imbalance_ratio = 0.1;
  const TaskSplit t = build_gcd_task(s, 5);
  EXPECT_EQ(t.total_class_count, 4u);
  const auto tc = class_counts(t.test);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(tc.at(c), 20u);
  std::set<std::vector<double>> train;
  for (const Sample& x : t.labeled) train.insert(key(x));
  for (const Sample& x : t.unlabeled) train.insert(key(x));
  for (const Sample& x : t.test) EXPECT_EQ(train.count(key(x)), 0u);
}

TEST(MdgSplits, LeaveOneDomainOut) {
  SyntheticSpec s = small_spec(4, 2, 6);
  s.num_domains = 3;
  s.domain_dims = 2;
  s.domain_shift = 1.0;
  const auto pool = generate(s);
  std::multiset<std::vector<double>> union_of_tests;
  for (int d = 0; d < 3; ++d) {
    const TaskSplit split = make_mdg_gcd_splits(pool, 2, d, 4);
    EXPECT_EQ(split.test.size(), pool.size() / 3);
    for (const Sample& x : split.test) {
      EXPECT_EQ(x.domain_id, d);
      union_of_tests.insert(key(x));
    }
    for (const Sample& x : split.labeled) EXPECT_NE(x.domain_id, d);
    for (const Sample& x : split.unlabeled) EXPECT_NE(x.domain_id, d);
    EXPECT_EQ(split.labeled.size() + split.unlabeled.size() + split.test.size(), pool.size());
  }
  std::multiset<std::vector<double>> all;
  for (const Sample& x : pool) all.insert(key(x));
  EXPECT_EQ(union_of_tests, all);
}

TEST(MdgSplits, Errors) {
  const auto single = generate(small_spec());
  EXPECT_THROW(make_mdg_gcd_splits(single, 2, 0, 0), ContractError);
  SyntheticSpec s = small_spec();
  s.num_domains = 2;
  const auto two = generate(s);
  EXPECT_THROW(make_mdg_gcd_splits(two, 2, 2, 0), ContractError);
  EXPECT_THROW(make_mdg_gcd_splits(two, 2, -1, 0), ContractError);
}

TEST(CilSchedule, SessionSizesAndOrdering) {
  SyntheticSpec s = small_spec(10, 5, 100);
  s.imbalance_ratio = 0.01;
  const CilSchedule sch = make_cil_schedule(s, 5, CilStyle::Ordered, 0);
  std::vector<std::size_t> sizes;
  for (const auto& sess : sch.sessions) sizes.push_back(sess.classes.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{5, 1, 1, 1, 1, 1}));
  // sort oracle: the five largest counts land in session 0
  auto counts = long_tail_counts(10, 100, 0.01);
  std::vector<std::size_t> sorted = counts;
  std::sort(sorted.rbegin(), sorted.rend());
  std::multiset<std::size_t> top(sorted.begin(), sorted.begin() + 5), first(
      sch.sessions[0].counts.begin(), sch.sessions[0].counts.end());
  EXPECT_EQ(first, top);
  for (const auto& sess : sch.sessions)
    for (std::size_t i = 0; i < sess.classes.size(); ++i)
      EXPECT_EQ(sess.counts[i], counts[static_cast<std::size_t>(sess.classes[i])]);
}

TEST(CilSchedule, DisjointAndComplete) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SyntheticSpec s = small_spec(12, 6, 50);
    s.imbalance_ratio = 0.05;
    for (const CilStyle style : {CilStyle::Ordered, CilStyle::Shuffled}) {
      const CilSchedule sch = make_cil_schedule(s, seed % 2 ? 3 : 2, style, seed);
      std::multiset<int> seen;
      for (const auto& sess : sch.sessions) seen.insert(sess.classes.begin(), sess.classes.end());
      ASSERT_EQ(seen.size(), 12u);
      for (int c = 0; c < 12; ++c) ASSERT_EQ(seen.count(c), 1u);
    }
  }
}

TEST(CilSchedule, ShuffledDependsOnSeed) {
  SyntheticSpec s = small_spec(10, 5, 100);
  const auto a = make_cil_schedule(s, 5, CilStyle::Shuffled, 1);
  const auto b = make_cil_schedule(s, 5, CilStyle::Shuffled, 2);
  const auto a2 = make_cil_schedule(s, 5, CilStyle::Shuffled, 1);
  EXPECT_NE(a.sessions[0].classes, b.sessions[0].classes);
  EXPECT_EQ(a.sessions[0].classes, a2.sessions[0].classes);
}

TEST(CilSchedule, IndivisibleSessionsNameValidCounts) {
  SyntheticSpec s = small_spec(10, 5, 100);
  try {
    make_cil_schedule(s, 3, CilStyle::Ordered, 0);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("1, 5"), std::string::npos) << e.what();
  }
  const auto single = make_cil_schedule(s, 0, CilStyle::Ordered, 0);
  ASSERT_EQ(single.sessions.size(), 1u);
  EXPECT_EQ(single.sessions[0].classes.size(), 10u);
}

TEST(CilStyleNames, RoundTrip) {
  EXPECT_EQ(parse_cil_style(to_string(CilStyle::Ordered)), CilStyle::Ordered);
  EXPECT_EQ(parse_cil_style(to_string(CilStyle::Shuffled)), CilStyle::Shuffled);
  EXPECT_THROW(parse_cil_style("random"), ConfigError);
}

TEST(DefinedDims, Blocks) {
  const SyntheticSpec s = small_spec();
  const std::vector<int> c0{0};
  EXPECT_EQ(ground_truth_defined_dims(s, c0), (std::set<std::size_t>{0, 1}));
  const std::vector<int> all{0, 1, 2, 3};
  const auto dims = ground_truth_defined_dims(s, all);
  EXPECT_EQ(dims.size(), 8u);
  EXPECT_EQ(*dims.rbegin(), 7u);
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      const std::vector<int> ca{a}, cb{b};
      const auto da = ground_truth_defined_dims(s, ca), db = ground_truth_defined_dims(s, cb);
      for (std::size_t d : da) EXPECT_EQ(db.count(d), 0u);
    }
}

TEST(Serialization, SamplesCsvAndScheduleManifest) {
  std::vector<Sample> samples{{{1.0, -0.5}, 2, 1, true}, {{0.25, 3.0}, 0, 0, false}};
  std::ostringstream os;
  write_samples_csv(os, samples);
  EXPECT_EQ(os.str(), "class_id,domain_id,labeled,f0,f1\n2,1,1,1,-0.5\n0,0,0,0.25,3\n");
  CilSchedule sch;
  sch.sessions = {{{0, 1}, {5, 3}}, {{2}, {1}}};
  std::ostringstream ms;
  write_schedule_manifest(ms, sch);
  EXPECT_EQ(ms.str(),
            "style: ordered\nsessions: 2\nsession 0\n  class 0 count 5\n  class 1 count 3\n"
            "session 1\n  class 2 count 1\n");
}

TEST(FeaturesOf, StacksRows) {
  std::vector<Sample> samples{{{1.0, 2.0}, 0, 0, false}, {{3.0, 4.0}, 1, 0, false}};
  EXPECT_EQ(features_of(samples), Tensor(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(labels_of(samples), (std::vector<int>{0, 1}));
  samples.push_back({{1.0}, 0, 0, false});
  EXPECT_THROW(features_of(samples), ShapeError);
}
