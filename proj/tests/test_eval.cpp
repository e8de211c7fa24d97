#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "varcon/eval.hpp"

using namespace varcon;

namespace {

// Every reference scored, sorted by (distance, label), votes counted by hand.
int brute_force_vote(const EmbeddingBatch& refs, std::span<const double> q, std::size_t k) {
  std::vector<std::pair<double, int>> all;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    double s = 0;
    for (std::size_t j = 0; j < q.size(); ++j) s += refs.vectors(r, j) * q[j];
    all.emplace_back(1.0 - s, refs.labels[r]);
  }
  std::sort(all.begin(), all.end());
  std::map<int, std::pair<int, double>> tally;
  for (std::size_t i = 0; i < k; ++i) {
    tally[all[i].second].first += 1;
    tally[all[i].second].second += all[i].first;
  }
  int best = -1, best_votes = -1;
  double best_dist = 0;
  for (const auto& [label, t] : tally)
    if (t.first > best_votes || (t.first == best_votes && t.second < best_dist)) {
      best = label;
      best_votes = t.first;
      best_dist = t.second;
    }
  return best;
}

EmbeddingBatch unit_batch(std::size_t n, std::size_t d, int classes, std::mt19937_64& rng) {
  EmbeddingBatch b{oracle::random_unit_rows(n, d, rng), {}};
  std::uniform_int_distribution<int> lab(0, classes - 1);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(lab(rng));
  return b;
}

EmbeddingBatch rows(std::initializer_list<std::initializer_list<double>> r, std::vector<int> labels) {
  EmbeddingBatch b{Matrix(r.size(), r.begin()->size()), std::move(labels)};
  std::size_t i = 0;
  for (const auto& row : r) std::copy(row.begin(), row.end(), b.vectors.row(i++).begin());
  return b;
}

void check_against_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  const auto r = clustering_metrics(a, b);
  const auto o = oracle::metrics(a, b);
  CHECK(std::abs(r.ari - o.ari) <= 1e-12);
  CHECK(std::abs(r.nmi - o.nmi) <= 1e-12);
  CHECK(std::abs(r.homogeneity - o.homogeneity) <= 1e-12);
  CHECK(std::abs(r.completeness - o.completeness) <= 1e-12);
  CHECK(std::abs(r.v_measure - o.v_measure) <= 1e-12);
  CHECK(std::abs(r.purity - o.purity) <= 1e-12);
}

}  // namespace

TEST_CASE("knn") {
  SUBCASE("k = 1 returns the label of an identical reference") {
    const auto refs = rows({{1, 0}, {0, 1}, {0.6, 0.8}}, {4, 7, 2});
    const auto queries = rows({{0.6, 0.8}, {0, 1}}, {2, 1});
    const auto r = knn_classify(refs, queries, KnnConfig{1});
    CHECK(r.predictions == std::vector<int>{2, 7});
    CHECK(r.accuracy == 0.5);
  }
  SUBCASE("vote tie goes to the smaller cumulative distance") {
    const auto refs = rows({{1, 0}, {0.96, 0.28}, {0, 1}}, {5, 7, 5});
    const auto q = rows({{0.96, 0.28}}, {5});
    // distances 0.04 (label 5) and 0 (label 7): one vote each
    CHECK(knn_classify(refs, q, KnnConfig{2}).predictions[0] == 7);
  }
  SUBCASE("vote and distance tie goes to the smaller label") {
    const auto refs = rows({{1, 0}, {-1, 0}}, {3, 2});
    const auto q = rows({{0, 1}}, {3});
    CHECK(knn_classify(refs, q, KnnConfig{2}).predictions[0] == 2);
  }
  SUBCASE("neighbour tie at the cutoff prefers the smaller label") {
    const auto refs = rows({{1, 0}, {-1, 0}, {0, 1}}, {8, 6, 9});
    const auto q = rows({{0, -1}}, {6});
    CHECK(knn_classify(refs, q, KnnConfig{1}).predictions[0] == 6);
  }
  SUBCASE("matches a brute-force vote and ignores reference order") {
    std::mt19937_64 rng(81);
    for (int trial = 0; trial < 30; ++trial) {
      const auto refs = unit_batch(20, 3, 3, rng);
      const auto queries = unit_batch(15, 3, 3, rng);
      const std::size_t k = 1 + trial % 7;
      const auto r = knn_classify(refs, queries, KnnConfig{k});
      std::size_t correct = 0;
      for (std::size_t q = 0; q < queries.size(); ++q) {
        CHECK(r.predictions[q] == brute_force_vote(refs, queries.vectors.row(q), k));
        correct += r.predictions[q] == queries.labels[q];
      }
      CHECK(r.accuracy == doctest::Approx(static_cast<double>(correct) / 15));

      std::vector<std::size_t> perm(20);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      EmbeddingBatch shuffled{Matrix(20, 3), {}};
      for (std::size_t i = 0; i < 20; ++i) {
        std::copy_n(refs.vectors.row(perm[i]).begin(), 3, shuffled.vectors.row(i).begin());
        shuffled.labels.push_back(refs.labels[perm[i]]);
      }
      CHECK(knn_classify(shuffled, queries, KnnConfig{k}).predictions == r.predictions);
    }
  }
  SUBCASE("errors") {
    const auto refs = rows({{1, 0}}, {0});
    CHECK_THROWS_AS(knn_classify(refs, rows({{1, 0, 0}}, {0}), KnnConfig{1}), DimMismatch);
    CHECK_THROWS_AS(knn_classify(refs, rows({{1, 0}}, {0}), KnnConfig{2}), InvalidArgument);
    CHECK_THROWS_AS(knn_classify(EmbeddingBatch{}, rows({{1, 0}}, {0}), KnnConfig{1}), InvalidArgument);
  }
}

TEST_CASE("ward") {
  SUBCASE("six-point instance matches the naive oracle") {
    Matrix x(6, 2);
    const double pts[6][2] = {{0, 0}, {0.1, 0}, {5, 5}, {5.3, 5}, {0, 2}, {9, 0}};
    for (std::size_t i = 0; i < 6; ++i) {
      x(i, 0) = pts[i][0];
      x(i, 1) = pts[i][1];
    }
    const auto merges = ward_linkage(x);
    const auto ref = oracle::naive_ward(x);
    REQUIRE(merges.size() == 5);
    for (std::size_t m = 0; m < 5; ++m) {
      CHECK(merges[m].left == ref[m].left);
      CHECK(merges[m].right == ref[m].right);
    }
    // first merge: 0.5 * 0.1^2
    CHECK(merges[0].cost == doctest::Approx(0.005));
  }
  SUBCASE("random instances match the naive oracle") {
    std::mt19937_64 rng(83);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t n = 2 + trial % 11, d = 1 + trial % 4;
      Matrix x(n, d);
      for (double& v : x.flat()) v = normal(rng);
      const auto merges = ward_linkage(x);
      const auto ref = oracle::naive_ward(x);
      REQUIRE(merges.size() == n - 1);
      for (std::size_t m = 0; m + 1 < n; ++m) {
        CHECK(merges[m].left == ref[m].left);
        CHECK(merges[m].right == ref[m].right);
      }
      for (std::size_t m = 1; m + 1 < n; ++m) CHECK(merges[m].cost >= merges[m - 1].cost - 1e-12);
    }
  }
  SUBCASE("exact ties merge the smallest pair") {
    Matrix x(4, 1);
    x(0, 0) = 0;
    x(1, 0) = 1;
    x(2, 0) = 10;
    x(3, 0) = 11;
    const auto merges = ward_linkage(x);
    CHECK(merges[0].left == 0);
    CHECK(merges[0].right == 1);
    CHECK(merges[1].left == 2);
    CHECK(merges[1].right == 3);
  }
  SUBCASE("cuts") {
    std::mt19937_64 rng(89);
    std::normal_distribution<double> noise(0.0, 0.1);
    Matrix x(10, 3);
    std::vector<int> blob(10);
    for (std::size_t i = 0; i < 10; ++i) {
      blob[i] = (i * 7) % 10 < 5 ? 0 : 1;
      for (std::size_t j = 0; j < 3; ++j) x(i, j) = noise(rng) + (blob[i] ? 10.0 : 0.0);
    }
    const auto two = ward_cluster(x, 2);
    CHECK(clustering_metrics(blob, two).ari == 1.0);
    CHECK(two[0] == 0);
    const auto each = ward_cluster(x, 10);
    std::vector<int> identity(10);
    std::iota(identity.begin(), identity.end(), 0);
    CHECK(each == identity);
    CHECK(ward_cluster(x, 1) == std::vector<int>(10, 0));
    CHECK_THROWS_AS(ward_cluster(x, 0), InvalidArgument);
    CHECK_THROWS_AS(ward_cluster(x, 11), InvalidArgument);
  }
}

TEST_CASE("clustering metrics") {
  SUBCASE("identical labelings") {
    const std::vector<int> a{0, 0, 1, 2, 2, 2};
    const auto r = clustering_metrics(a, a);
    CHECK(r.ari == doctest::Approx(1.0));
    CHECK(r.nmi == doctest::Approx(1.0));
    CHECK(r.purity == 1.0);
    CHECK(r.v_measure == doctest::Approx(1.0));
  }
  SUBCASE("[0,0,1,1] against [0,0,0,1]") {
    const std::vector<int> t{0, 0, 1, 1}, c{0, 0, 0, 1};
    const auto r = clustering_metrics(t, c);
    // pair counts: both 1, only-true 1, only-cluster 2, neither 2
    CHECK(std::abs(r.ari - 0.0) < 1e-12);
    CHECK(std::abs(r.purity - 0.75) < 1e-12);
    // H(T) = log 2, H(C) = H(0.75, 0.25), I = H(C) - H(C|T) = H(C) - 0.5 log 2
    const double hc = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
    const double mi = hc - 0.5 * std::log(2.0);
    CHECK(std::abs(r.nmi - 2 * mi / (std::log(2.0) + hc)) < 1e-12);
    CHECK(std::abs(r.homogeneity - mi / std::log(2.0)) < 1e-12);
    CHECK(std::abs(r.completeness - mi / hc) < 1e-12);
    check_against_oracle(t, c);
  }
  SUBCASE("degenerate labelings") {
    check_against_oracle({0, 0, 0}, {0, 0, 0});
    check_against_oracle({0, 0, 0}, {0, 1, 2});
    check_against_oracle({0, 1, 2}, {0, 0, 0});
    check_against_oracle({5}, {9});
  }
  SUBCASE("exhaustive sweep up to five points") {
    for (std::size_t n = 1; n <= 5; ++n) {
      const auto parts = oracle::all_partitions(n);
      for (const auto& a : parts)
        for (const auto& b : parts) check_against_oracle(a, b);
    }
  }
  SUBCASE("symmetries") {
    std::mt19937_64 rng(97);
    std::uniform_int_distribution<int> lab(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<int> a(30), b(30);
      for (auto& v : a) v = lab(rng);
      for (auto& v : b) v = lab(rng);
      const auto ab = clustering_metrics(a, b), ba = clustering_metrics(b, a);
      CHECK(std::abs(ab.nmi - ba.nmi) < 1e-12);
      CHECK(std::abs(ab.ari - ba.ari) < 1e-12);
      CHECK(std::abs(ab.homogeneity - ba.completeness) < 1e-12);
      CHECK(std::abs(ab.completeness - ba.homogeneity) < 1e-12);
      const double hm = ab.homogeneity + ab.completeness == 0
                            ? 0.0
                            : 2 * ab.homogeneity * ab.completeness / (ab.homogeneity + ab.completeness);
      CHECK(std::abs(ab.v_measure - hm) < 1e-12);
      std::vector<int> relabeled(b);
      for (auto& v : relabeled) v = 10 - v;
      CHECK(std::abs(clustering_metrics(a, relabeled).purity - ab.purity) < 1e-12);
      CHECK(ab.ari >= -0.5);
      CHECK(ab.ari <= 1.0);
      for (double m : {ab.nmi, ab.homogeneity, ab.completeness, ab.v_measure, ab.purity}) {
        CHECK(m >= 0.0);
        CHECK(m <= 1.0 + 1e-12);
      }
    }
  }
  SUBCASE("ARI against a random permutation is zero on average") {
    std::vector<int> labels(200);
    for (std::size_t i = 0; i < 200; ++i) labels[i] = static_cast<int>(i % 5);
    double total = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto shuffled = labels;
      std::mt19937_64 rng(seed);
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      total += clustering_metrics(labels, shuffled).ari;
    }
    CHECK(std::abs(total / 50) < 0.05);
  }
  SUBCASE("errors") {
    const std::vector<int> a{0, 1}, b{0};
    CHECK_THROWS_AS(clustering_metrics(a, b), ShapeMismatch);
    CHECK_THROWS_AS(clustering_metrics(std::vector<int>{}, std::vector<int>{}), InvalidArgument);
  }
}

TEST_CASE("few-shot protocol") {
  const auto summary = summarize_few_shot(5, {0.5});
  CHECK(summary.mean == 0.5);
  CHECK(summary.stderr_ == 0.0);
  const auto three = summarize_few_shot(5, {0.2, 0.4, 0.6});
  CHECK(three.mean == doctest::Approx(0.4));
  CHECK(three.stderr_ == doctest::Approx(0.2 / std::sqrt(3.0)));
  CHECK(three.repeats == 3);

  // A "model" here is the labelled subset itself, scored by KNN on the raw
  // directions of a held-out draw.
  const auto all = gaussian_mixture(5, 100, 8, 2.5, 4);
  std::vector<std::size_t> pool_idx, held_idx;
  for (std::size_t i = 0; i < all.size(); ++i) (i % 100 < 60 ? pool_idx : held_idx).push_back(i);
  const auto pool = subset(all, pool_idx);
  const auto held_out = subset(all, held_idx);
  const auto as_unit = [](const LabeledDataset& ds) {
    EmbeddingBatch b{ds.samples, ds.labels};
    normalize_rows(b.vectors);
    return b;
  };
  const auto queries = as_unit(held_out);
  const auto run = [&](std::size_t n) {
    return few_shot_eval(
        pool, n, 5, 11, [](const LabeledDataset& part, std::uint64_t) { return part; },
        [&](const LabeledDataset& part) {
          return knn_classify(as_unit(part), queries, KnnConfig{std::min<std::size_t>(5, part.size())})
              .accuracy;
        });
  };
  const auto small = run(5), large = run(50), full = run(60);
  CHECK(small.accuracies.size() == 5);
  CHECK(small.per_class_n == 5);
  CHECK(large.mean >= small.mean);
  const double full_acc =
      knn_classify(as_unit(pool), queries, KnnConfig{5}).accuracy;
  for (double a : full.accuracies) CHECK(a == full_acc);
  CHECK(full.stderr_ < 1e-12);
  CHECK_THROWS_AS(run(61), InsufficientSamples);
}
