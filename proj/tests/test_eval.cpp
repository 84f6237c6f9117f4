#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "qarm/errors.hpp"
#include "qarm/metrics.hpp"
#include "qarm/report.hpp"
#include "qarm/rng.hpp"

using namespace qarm;

namespace {

// O(n^2) pairwise-counting oracle: share of positive-negative pairs the
// positive wins, ties worth one half.
double auc_pairwise(const std::vector<double>& s, const std::vector<int>& y) {
  double credit = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      if (s[i] > s[j]) credit += 1.0;
      else if (s[i] == s[j]) credit += 0.5;
    }
  }
  return credit / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("auc: perfect, inverted, and the tied worked example") {
  const std::vector<double> s1{0.9, 0.1};
  const std::vector<int> y1{1, 0};
  CHECK(auc(s1, y1) == doctest::Approx(1.0));

  const std::vector<double> s2{0.1, 0.9};
  CHECK(auc(s2, y1) == doctest::Approx(0.0));

  const std::vector<double> s3{0.8, 0.8, 0.3, 0.1};
  const std::vector<int> y3{1, 0, 1, 0};
  CHECK(auc(s3, y3) == doctest::Approx(0.875));
  CHECK(auc_pairwise(s3, y3) == doctest::Approx(0.875));
}

TEST_CASE("auc: undefined on single-class input") {
  const std::vector<double> s{0.5, 0.6};
  const std::vector<int> ones{1, 1}, zeros{0, 0};
  CHECK_THROWS_AS(auc(s, ones), UndefinedMetric);
  CHECK_THROWS_AS(auc(s, zeros), UndefinedMetric);
}

TEST_CASE("auc: rank-sum equals the pairwise oracle to 1e-12") {
  Rng rng(7);
  for (int inst = 0; inst < 40; ++inst) {
    const std::size_t n = 20 + rng.uniform_index(480);
    std::vector<double> s(n);
    std::vector<int> y(n);
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid so ties actually occur.
      s[i] = std::floor(rng.uniform() * 20.0) / 20.0;
      y[i] = rng.uniform() < 0.4 ? 1 : 0;
      (y[i] ? pos : neg) = true;
    }
    if (!pos) y[0] = 1;
    if (!neg) y[n - 1] = 0;
    CHECK(auc(s, y) == doctest::Approx(auc_pairwise(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("auc: invariant under strictly monotone transforms") {
  Rng rng(9);
  std::vector<double> s(200);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    s[i] = rng.uniform(-3.0, 3.0);
    y[i] = rng.uniform() < 0.5 ? 1 : 0;
  }
  y[0] = 1;
  y[1] = 0;
  const double base = auc(s, y);
  std::vector<double> t = s;
  for (double& v : t) v = std::exp(0.7 * v) + 5.0;
  CHECK(auc(t, y) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("uauc: mean of per-user AUC, skips single-class users") {
  std::vector<UserGroup> users(3);
  users[0].scores = {0.9, 0.1};
  users[0].labels = {1, 0};  // AUC 1.0
  users[1].scores = {0.2, 0.5, 0.5, 0.8};
  users[1].labels = {0, 1, 0, 1};  // ties -> 0.875? compute: pairs (1@0.5,0@0.2)=1,(1@0.5,0@0.5)=.5,(1@0.8,*)=2 -> 3.5/4
  users[2].scores = {0.4, 0.6};
  users[2].labels = {1, 1};  // skipped

  std::size_t skipped = 0;
  const double u = uauc(users, &skipped);
  CHECK(skipped == 1);
  CHECK(u == doctest::Approx((1.0 + 0.875) / 2.0));

  std::vector<UserGroup> one(1);
  one[0].scores = {0.3, 0.7};
  one[0].labels = {0, 1};
  CHECK(uauc(one) == doctest::Approx(1.0));

  std::vector<UserGroup> none(1);
  none[0].scores = {0.3, 0.7};
  none[0].labels = {1, 1};
  CHECK_THROWS_AS(uauc(none), UndefinedMetric);
}

TEST_CASE("uauc: matches a brute-force mean over 50 random users") {
  Rng rng(11);
  std::vector<UserGroup> users;
  double expect = 0.0;
  std::size_t valid = 0;
  for (int u = 0; u < 50; ++u) {
    UserGroup g;
    const std::size_t n = 4 + rng.uniform_index(30);
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      g.scores.push_back(std::floor(rng.uniform() * 10.0) / 10.0);
      g.labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
      (g.labels.back() ? pos : neg) = true;
    }
    if (pos && neg) {
      expect += auc_pairwise(g.scores, g.labels);
      ++valid;
    }
    users.push_back(std::move(g));
  }
  expect /= static_cast<double>(valid);
  CHECK(uauc(users) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("gauc: sample-count weighting and the 0.625 worked example") {
  std::vector<UserGroup> users(2);
  users[0].scores = {0.9, 0.1};  // AUC 1.0, 10 samples
  users[0].labels = {1, 0};
  for (int i = 0; i < 4; ++i) {
    users[0].scores.push_back(0.9);
    users[0].labels.push_back(1);
    users[0].scores.push_back(0.1);
    users[0].labels.push_back(0);
  }
  users[1].scores.assign(30, 0.5);  // AUC 0.5 via all-tied scores
  users[1].labels.assign(30, 0);
  for (int i = 0; i < 15; ++i) users[1].labels[static_cast<std::size_t>(i)] = 1;

  CHECK(users[0].scores.size() == 10);
  CHECK(gauc(users) == doctest::Approx((10.0 * 1.0 + 30.0 * 0.5) / 40.0));

  std::vector<UserGroup> one(1, users[0]);
  CHECK(gauc(one) == doctest::Approx(1.0));
}

TEST_CASE("gauc equals uauc under equal per-user sample counts") {
  Rng rng(13);
  std::vector<UserGroup> users;
  for (int u = 0; u < 20; ++u) {
    UserGroup g;
    for (int i = 0; i < 12; ++i) {
      g.scores.push_back(rng.uniform());
      g.labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
    }
    g.labels[0] = 1;
    g.labels[1] = 0;
    users.push_back(std::move(g));
  }
  CHECK(gauc(users) == doctest::Approx(uauc(users)).epsilon(1e-15));
}

TEST_CASE("metrics: permutation-invariant in input order") {
  Rng rng(15);
  std::vector<double> s(100);
  std::vector<int> y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    s[i] = rng.uniform();
    y[i] = rng.uniform() < 0.5 ? 1 : 0;
  }
  y[0] = 1;
  y[1] = 0;
  const double base = auc(s, y);
  std::vector<double> s2;
  std::vector<int> y2;
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t j = (i * 37 + 11) % 100;
    s2.push_back(s[j]);
    y2.push_back(y[j]);
  }
  CHECK(auc(s2, y2) == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("groups: purchase-count sextiles partition the catalog") {
  InteractionLog log;
  std::vector<std::string> items;
  for (int i = 0; i < 60; ++i) {
    const std::string id = "i" + std::to_string(100 + i);
    items.push_back(id);
    for (int p = 0; p < i / 3; ++p)
      log.rows.push_back(LogRow{"u0", id, p, 1, 1});
  }
  const auto groups = popularity_groups(log, items);
  REQUIRE(groups.size() == 60);
  std::vector<int> counts(6, 0);
  for (int g : groups) {
    REQUIRE(g >= 0);
    REQUIRE(g < 6);
    ++counts[static_cast<std::size_t>(g)];
  }
  for (int c : counts) CHECK(c == 10);
  // Least purchased items land in L1 (group 0).
  CHECK(groups[0] == 0);
  CHECK(groups[59] == 5);

  const auto again = popularity_groups(log, items);
  CHECK(groups == again);
}

TEST_CASE("report: identical model against itself has zero deltas") {
  std::vector<RankingExample> examples;
  std::vector<std::array<double, 2>> probs;
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    RankingExample ex;
    ex.user_row = 1 + rng.uniform_index(5);
    ex.item_row = 1 + rng.uniform_index(20);
    ex.y_ctr = rng.uniform() < 0.4 ? 1 : 0;
    ex.y_cvr = ex.y_ctr && rng.uniform() < 0.4 ? 1 : 0;
    examples.push_back(ex);
    probs.push_back({rng.uniform(), rng.uniform()});
  }
  std::vector<int> groups(20);
  for (std::size_t i = 0; i < 20; ++i) groups[i] = static_cast<int>(i / 4);

  const MetricReport rep = evaluate_predictions(examples, probs, probs, groups,
                                                {"ctr", "cvr"});
  for (const auto& g : rep.groups) CHECK(g.delta == doctest::Approx(0.0));
  REQUIRE(rep.per_task.count("ctr"));
  CHECK(rep.per_task.at("ctr").auc >= 0.0);
  CHECK(rep.per_task.at("ctr").auc <= 1.0);

  const auto c = ctcvr_auc(examples, probs);
  if (c) {
    CHECK(*c >= 0.0);
    CHECK(*c <= 1.0);
  }

  const auto path = std::filesystem::temp_directory_path() / "qarm_report.tsv";
  save_report(path, rep, c);
  const auto kv = load_report_summary(path);
  CHECK(kv.count("ctr.auc") == 1);
  CHECK(kv.count("group.ALL.delta") == 1);
  std::filesystem::remove(path);
}

TEST_CASE("report: single-class groups are marked undefined") {
  std::vector<RankingExample> examples;
  std::vector<std::array<double, 2>> probs;
  for (int i = 0; i < 10; ++i) {
    RankingExample ex;
    ex.user_row = 1;
    ex.item_row = static_cast<std::size_t>(1 + i % 2);  // items 1, 2
    ex.y_ctr = i % 2;  // item 1 always 0, item 2 always 1
    examples.push_back(ex);
    probs.push_back({0.5, 0.5});
  }
  const std::vector<int> groups{0, 1};
  const MetricReport rep =
      evaluate_predictions(examples, probs, probs, groups, {"ctr"});
  for (const auto& g : rep.groups) {
    if (g.group == "ALL") CHECK(g.defined);
    else CHECK_FALSE(g.defined);
  }
}
