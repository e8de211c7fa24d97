#include "varcon/eval.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

namespace varcon {

KnnResult knn_classify(const EmbeddingBatch& refs, const EmbeddingBatch& queries,
                       const KnnConfig& cfg) {
  if (refs.size() == 0) throw InvalidArgument("KNN needs a nonempty reference set");
  if (cfg.k == 0 || cfg.k > refs.size())
    throw InvalidArgument("k must lie in [1, reference count]");
  if (refs.dim() != queries.dim()) throw DimMismatch("reference and query widths differ");

  KnnResult out;
  out.predictions.resize(queries.size());
  std::vector<double> dist(refs.size());
  std::vector<std::size_t> order(refs.size());
  std::size_t correct = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto z = queries.vectors.row(q);
    for (std::size_t r = 0; r < refs.size(); ++r) dist[r] = 1.0 - dot(z, refs.vectors.row(r));
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + cfg.k, order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (dist[a] != dist[b]) return dist[a] < dist[b];
                        return refs.labels[a] < refs.labels[b];
                      });
    // label -> (votes, cumulative distance)
    std::map<int, std::pair<std::size_t, double>> votes;
    for (std::size_t m = 0; m < cfg.k; ++m) {
      auto& v = votes[refs.labels[order[m]]];
      ++v.first;
      v.second += dist[order[m]];
    }
    int best = votes.begin()->first;
    auto best_vote = votes.begin()->second;
    for (const auto& [label, vote] : votes) {
      if (vote.first > best_vote.first ||
          (vote.first == best_vote.first && vote.second < best_vote.second)) {
        best = label;
        best_vote = vote;
      }
    }
    out.predictions[q] = best;
    if (q < queries.labels.size() && queries.labels[q] == best) ++correct;
  }
  out.accuracy = queries.size() == 0 ? 0.0
                                     : static_cast<double>(correct) /
                                           static_cast<double>(queries.size());
  return out;
}

std::vector<WardMerge> ward_linkage(const Matrix& points) {
  const std::size_t n = points.rows();
  std::vector<WardMerge> merges;
  if (n < 2) return merges;
  merges.reserve(n - 1);

  // Lance-Williams on squared Euclidean distances; D(I,J) = 2 * delta ESS.
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      const auto a = points.row(i);
      const auto b = points.row(j);
      for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
      d[i * n + j] = d[j * n + i] = s;
    }

  std::vector<char> active(n, 1);
  std::vector<double> size(n, 1.0);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Nearest active partner with a larger index, ties to the smaller index.
  std::vector<std::size_t> nn(n, n);
  std::vector<double> nn_dist(n, kInf);
  auto refresh = [&](std::size_t i) {
    nn[i] = n;
    nn_dist[i] = kInf;
    for (std::size_t j = i + 1; j < n; ++j)
      if (active[j] && d[i * n + j] < nn_dist[i]) {
        nn_dist[i] = d[i * n + j];
        nn[i] = j;
      }
  };
  for (std::size_t i = 0; i < n; ++i) refresh(i);

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t i = n;
    for (std::size_t k = 0; k < n; ++k)
      if (active[k] && nn[k] < n && (i == n || nn_dist[k] < nn_dist[i])) i = k;
    const std::size_t j = nn[i];
    merges.push_back({i, j, 0.5 * nn_dist[i]});

    const double ni = size[i], nj = size[j], dij = d[i * n + j];
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == i || k == j) continue;
      const double nk = size[k];
      const double updated =
          ((ni + nk) * d[i * n + k] + (nj + nk) * d[j * n + k] - nk * dij) / (ni + nj + nk);
      d[i * n + k] = d[k * n + i] = updated;
    }
    active[j] = 0;
    size[i] = ni + nj;

    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k]) continue;
      if (k == i || nn[k] == i || nn[k] == j) {
        refresh(k);
      } else if (k < i) {
        const double dk = d[k * n + i];
        if (dk < nn_dist[k] || (dk == nn_dist[k] && i < nn[k])) {
          nn_dist[k] = dk;
          nn[k] = i;
        }
      }
    }
  }
  return merges;
}

std::vector<int> ward_cluster(const Matrix& points, std::size_t num_clusters) {
  const std::size_t n = points.rows();
  if (num_clusters < 1 || num_clusters > n)
    throw InvalidArgument("num_clusters must lie in [1, N]");
  const auto merges = ward_linkage(points);
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t m = 0; m < n - num_clusters; ++m)
    parent[find(merges[m].right)] = find(merges[m].left);

  std::vector<int> labels(n, -1);
  std::map<std::size_t, int> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [it, inserted] = ids.try_emplace(find(i), static_cast<int>(ids.size()));
    labels[i] = it->second;
  }
  return labels;
}

ClusteringReport clustering_metrics(std::span<const int> true_labels,
                                    std::span<const int> cluster_labels) {
  if (true_labels.size() != cluster_labels.size())
    throw ShapeMismatch("labelings differ in length");
  if (true_labels.empty()) throw InvalidArgument("labelings are empty");
  const double n = static_cast<double>(true_labels.size());

  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> class_sizes, cluster_sizes;
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    joint[{true_labels[i], cluster_labels[i]}] += 1.0;
    class_sizes[true_labels[i]] += 1.0;
    cluster_sizes[cluster_labels[i]] += 1.0;
  }

  auto pairs = [](double m) { return m * (m - 1.0) / 2.0; };
  auto entropy = [n](const std::map<int, double>& sizes) {
    double h = 0.0;
    for (const auto& [_, m] : sizes) h -= (m / n) * std::log(m / n);
    return h;
  };

  ClusteringReport r;
  double index = 0.0, class_pairs = 0.0, cluster_pairs = 0.0;
  for (const auto& [_, m] : joint) index += pairs(m);
  for (const auto& [_, m] : class_sizes) class_pairs += pairs(m);
  for (const auto& [_, m] : cluster_sizes) cluster_pairs += pairs(m);
  const double total_pairs = pairs(n);
  if (total_pairs == 0.0) {
    r.ari = 1.0;
  } else {
    const double expected = class_pairs * cluster_pairs / total_pairs;
    const double max_index = 0.5 * (class_pairs + cluster_pairs);
    r.ari = max_index == expected ? 1.0 : (index - expected) / (max_index - expected);
  }

  const double h_class = entropy(class_sizes);
  const double h_cluster = entropy(cluster_sizes);
  double mutual = 0.0;
  for (const auto& [key, m] : joint)
    mutual += (m / n) * std::log(m * n / (class_sizes[key.first] * cluster_sizes[key.second]));
  const double h_class_given_cluster = h_class - mutual;
  const double h_cluster_given_class = h_cluster - mutual;

  r.nmi = (h_class + h_cluster) == 0.0 ? 1.0 : mutual / (0.5 * (h_class + h_cluster));
  r.homogeneity = h_class == 0.0 ? 1.0 : 1.0 - h_class_given_cluster / h_class;
  r.completeness = h_cluster == 0.0 ? 1.0 : 1.0 - h_cluster_given_class / h_cluster;
  r.v_measure = (r.homogeneity + r.completeness) == 0.0
                    ? 0.0
                    : 2.0 * r.homogeneity * r.completeness / (r.homogeneity + r.completeness);

  std::map<int, double> majority;
  for (const auto& [key, m] : joint) majority[key.second] = std::max(majority[key.second], m);
  double majority_total = 0.0;
  for (const auto& [_, m] : majority) majority_total += m;
  r.purity = majority_total / n;
  return r;
}

FewShotReport summarize_few_shot(std::size_t per_class_n, std::vector<double> accuracies) {
  FewShotReport r;
  r.per_class_n = per_class_n;
  r.repeats = accuracies.size();
  r.accuracies = std::move(accuracies);
  if (r.accuracies.empty()) return r;
  const double count = static_cast<double>(r.repeats);
  r.mean = std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / count;
  if (r.repeats > 1) {
    double ss = 0.0;
    for (double a : r.accuracies) ss += (a - r.mean) * (a - r.mean);
    r.stderr_ = std::sqrt(ss / (count - 1.0)) / std::sqrt(count);
  }
  return r;
}

}  // namespace varcon
