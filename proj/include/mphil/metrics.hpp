#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mphil/rng.hpp"
#include "mphil/tensor.hpp"

namespace mphil {

/// Exact-match fraction; throws on empty or mismatched inputs.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Rank-based (Mann-Whitney) ROC-AUC with ties counted 1/2. Labels are 0/1;
/// throws if only one class is present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// 1-D empirical 1-Wasserstein distance: mean |a_(i) - b_(i)| over order
/// statistics. Unequal sample counts are reconciled by uniform-with-
/// replacement resampling of the larger set (seeded).
double wasserstein1(std::vector<double> samples_a, std::vector<double> samples_b,
                    std::uint64_t resample_seed = 0);

/// Cosine-distance separation statistics over unit-norm embeddings:
/// intra_mean / inter_mean are the mean cosine distances over same-class and
/// cross-class pairs (each subsampled to at most `max_pairs`, seeded), and
/// distribution_w1 is the 1-Wasserstein distance between the two empirical
/// distance distributions.
struct SeparabilityStats {
  double intra_mean = 0.0;
  double inter_mean = 0.0;
  double distribution_w1 = 0.0;
  std::vector<std::size_t> per_class_counts;
};

SeparabilityStats separability_report(const Tensor& embeddings,
                                      const std::vector<int>& labels,
                                      std::uint64_t seed = 0,
                                      std::size_t max_pairs = 100000);

/// Evaluation summary serialized by the CLI; roc_auc only for binary tasks.
struct EvalReport {
  std::string split;
  double accuracy = 0.0;
  std::optional<double> roc_auc;
  double intra_class_w1 = 0.0;
  double inter_class_w1 = 0.0;
  std::vector<std::size_t> per_class_counts;
};

}  // namespace mphil
