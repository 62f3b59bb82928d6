#include "mphil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mphil {

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty() || predictions.size() != labels.size()) {
    throw std::invalid_argument("accuracy: need equal-length nonempty inputs");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw std::invalid_argument("roc_auc: need equal-length nonempty inputs");
  }
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("roc_auc: labels must be 0/1");
    pos += y;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("roc_auc: both classes must be present");
  }

  // average ranks (ties share the midrank), then the Mann-Whitney statistic
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] == 1) rank_sum += rank[k];
  const double u = rank_sum - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double wasserstein1(std::vector<double> samples_a, std::vector<double> samples_b,
                    std::uint64_t resample_seed) {
  if (samples_a.empty() || samples_b.empty()) {
    throw std::invalid_argument("wasserstein1: empty sample set");
  }
  RngStream rng(resample_seed);
  auto downsample = [&rng](std::vector<double>& big, std::size_t target) {
    std::vector<double> out(target);
    for (std::size_t i = 0; i < target; ++i) out[i] = big[rng.uniform_index(big.size())];
    big = std::move(out);
  };
  if (samples_a.size() > samples_b.size()) downsample(samples_a, samples_b.size());
  if (samples_b.size() > samples_a.size()) downsample(samples_b, samples_a.size());
  std::sort(samples_a.begin(), samples_a.end());
  std::sort(samples_b.begin(), samples_b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < samples_a.size(); ++i)
    acc += std::abs(samples_a[i] - samples_b[i]);
  return acc / static_cast<double>(samples_a.size());
}

namespace {

double cosine_distance(const Tensor& embeddings, std::size_t a, std::size_t b) {
  double dot = 0.0;
  for (std::size_t j = 0; j < embeddings.cols(); ++j)
    dot += embeddings.at(a, j) * embeddings.at(b, j);
  return 1.0 - dot;
}

}  // namespace

SeparabilityStats separability_report(const Tensor& embeddings,
                                      const std::vector<int>& labels,
                                      std::uint64_t seed, std::size_t max_pairs) {
  const std::size_t n = embeddings.rows();
  if (labels.size() != n) {
    throw std::invalid_argument("separability_report: label count mismatch");
  }
  int max_label = -1;
  for (int y : labels) max_label = std::max(max_label, y);
  const std::size_t num_classes = static_cast<std::size_t>(max_label) + 1;
  if (num_classes < 2) {
    throw std::invalid_argument("separability_report: need at least 2 classes");
  }

  SeparabilityStats stats;
  stats.per_class_counts.assign(num_classes, 0);
  for (int y : labels) ++stats.per_class_counts[static_cast<std::size_t>(y)];

  // enumerate pairs; above max_pairs switch to seeded uniform pair sampling
  std::vector<double> intra, inter;
  std::size_t intra_total = 0, inter_total = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t m = stats.per_class_counts[c];
    intra_total += m * (m - 1) / 2;
  }
  inter_total = n * (n - 1) / 2 - intra_total;

  RngStream rng(seed);
  if (intra_total <= max_pairs && inter_total <= max_pairs) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        const double d = cosine_distance(embeddings, a, b);
        (labels[a] == labels[b] ? intra : inter).push_back(d);
      }
  } else {
    const std::size_t want_intra = intra_total == 0 ? 0 : max_pairs;
    const std::size_t want_inter = inter_total == 0 ? 0 : max_pairs;
    while (intra.size() < want_intra || inter.size() < want_inter) {
      const std::size_t a = rng.uniform_index(n);
      const std::size_t b = rng.uniform_index(n);
      if (a == b) continue;
      const bool same = labels[a] == labels[b];
      auto& bucket = same ? intra : inter;
      if (bucket.size() >= (same ? want_intra : want_inter)) continue;
      bucket.push_back(cosine_distance(embeddings, a, b));
    }
  }

  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;  // single-point classes: intra undefined-as-0
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
  };
  stats.intra_mean = mean(intra);
  stats.inter_mean = mean(inter);
  if (!intra.empty() && !inter.empty()) {
    stats.distribution_w1 = wasserstein1(intra, inter, seed);
  } else {
    stats.distribution_w1 = stats.inter_mean;
  }
  return stats;
}

}  // namespace mphil
