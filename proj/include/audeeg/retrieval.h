#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "audeeg/linalg.h"
#include "audeeg/nn.h"
#include "audeeg/optim.h"

namespace audeeg::retrieval {

/// Rows of feature vectors with an id and a class label each.
struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  linalg::Matrix vectors;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return vectors.cols(); }
  /// Throws if ids repeat or the columns do not line up.
  void validate() const;
  /// Rows at the given positions, in that order.
  FeatureTable subset(std::span<const std::size_t> rows) const;
};

enum class Similarity { cosine, neg_euclidean };
Similarity parse_similarity(const std::string& name);
std::string similarity_name(Similarity s);

struct RetrievalConfig {
  std::vector<std::size_t> layer_dims{512, 256, 128, 64};
  std::size_t canonical_k = 32;
  std::size_t epochs = 500;
  std::size_t batch_size = 1000;
  double reg = 1e-4;
  double eigen_floor = 1e-12;
  optim::OptimizerConfig optimizer;
  Similarity similarity = Similarity::cosine;
  std::uint64_t seed = 1;

  bool operator==(const RetrievalConfig&) const = default;
};

/// Dense branch: layer_dims with ReLU between layers and a linear last layer.
std::vector<nn::LayerSpec> dense_branch(std::span<const std::size_t> layer_dims);

struct RetrievalModel {
  nn::ParamStore<double> branch_a;
  nn::ParamStore<double> branch_b;
  /// Per-feature standardization fitted on the training tables.
  linalg::Vector mean_a, scale_a, mean_b, scale_b;
  linalg::CcaModel cca;
  RetrievalConfig config;
  std::vector<double> loss_history;  ///< mean training loss per epoch
};

enum class Side { a, b };

/// Trains both branches on the DCCA loss over row-aligned tables, then fits
/// a linear CCA with canonical_k components on the training outputs.
RetrievalModel retrieval_train(const FeatureTable& a, const FeatureTable& b,
                               const RetrievalConfig& config);

/// Canonical coordinates (n×k) of raw features from one side.
linalg::Matrix project(const RetrievalModel& model, const linalg::Matrix& features, Side side);

/// One query's ranked candidate list. Candidates with the query's id are
/// its instance pair; candidates with its label are class relevant.
struct RankedResult {
  std::string query_id;
  std::string query_label;
  std::vector<std::string> ranked_ids;
  std::vector<std::string> ranked_labels;
  std::vector<double> scores;
};

enum class MrrMode { instance, class_label };
MrrMode parse_mrr_mode(const std::string& name);

double similarity(std::span<const double> a, std::span<const double> b, Similarity s);

/// Candidates sorted by descending similarity, ties by ascending id.
RankedResult rank_canonical(std::span<const double> query, const std::string& query_id,
                            const std::string& query_label, const linalg::Matrix& candidates,
                            std::span<const std::string> candidate_ids,
                            std::span<const std::string> candidate_labels, Similarity s);

/// Projects the query (a raw `query_side` feature vector) and the candidate
/// table (raw features of the other side) and ranks.
RankedResult rank(const RetrievalModel& model, std::span<const double> query,
                  const std::string& query_id, const std::string& query_label, Side query_side,
                  const FeatureTable& candidates);

/// 1/position of the first relevant candidate; throws when none is relevant.
double reciprocal_rank(const RankedResult& r, MrrMode mode);
double mrr(std::span<const RankedResult> results, MrrMode mode);

/// Expected instance MRR when the single relevant item is uniformly placed
/// among n candidates: H_n / n.
double random_mrr(std::size_t n);

struct EvalReport {
  double instance_a_to_b = 0.0;
  double instance_b_to_a = 0.0;
  double class_a_to_b = 0.0;
  double class_b_to_a = 0.0;
  std::size_t n = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
};

/// Rankings of every row of `a` against all of `b` and vice versa.
struct Rankings {
  std::vector<RankedResult> a_to_b;
  std::vector<RankedResult> b_to_a;
};

Rankings rank_all(const RetrievalModel& model, const FeatureTable& a, const FeatureTable& b);
EvalReport evaluate(const Rankings& rankings, std::size_t k, std::uint64_t seed);

}  // namespace audeeg::retrieval
