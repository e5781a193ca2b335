#include "audeeg/retrieval.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "audeeg/dcca.h"
#include "audeeg/error.h"
#include "audeeg/rng.h"

namespace audeeg::retrieval {

using linalg::Matrix;

void FeatureTable::validate() const {
  if (labels.size() != ids.size() || vectors.rows() != ids.size()) {
    throw DimensionError("feature table has " + std::to_string(ids.size()) + " ids, " +
                         std::to_string(labels.size()) + " labels and " +
                         std::to_string(vectors.rows()) + " rows");
  }
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw ValidationError("duplicate feature id '" + id + "'");
  linalg::require_finite(vectors, "feature table");
}

FeatureTable FeatureTable::subset(std::span<const std::size_t> rows) const {
  FeatureTable out;
  out.vectors = Matrix(rows.size(), dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw ValidationError("subset row out of range");
    out.ids.push_back(ids[rows[i]]);
    out.labels.push_back(labels[rows[i]]);
    std::copy(vectors.row(rows[i]).begin(), vectors.row(rows[i]).end(), out.vectors.row(i).begin());
  }
  return out;
}

Similarity parse_similarity(const std::string& name) {
  if (name == "cosine") return Similarity::cosine;
  if (name == "neg_euclidean") return Similarity::neg_euclidean;
  throw ParseError("unknown similarity '" + name + "' (expected cosine or neg_euclidean)");
}

std::string similarity_name(Similarity s) {
  return s == Similarity::cosine ? "cosine" : "neg_euclidean";
}

MrrMode parse_mrr_mode(const std::string& name) {
  if (name == "instance") return MrrMode::instance;
  if (name == "class") return MrrMode::class_label;
  throw ParseError("unknown MRR mode '" + name + "' (expected instance or class)");
}

std::vector<nn::LayerSpec> dense_branch(std::span<const std::size_t> dims) {
  if (dims.empty()) throw ValidationError("retrieval branch needs at least one layer");
  std::vector<nn::LayerSpec> specs;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i > 0) specs.push_back(nn::LayerSpec::relu());
    specs.push_back(nn::LayerSpec::dense(dims[i]));
  }
  return specs;
}

namespace {

void standardizer(const Matrix& x, linalg::Vector& mean, linalg::Vector& scale) {
  mean = linalg::column_means(x);
  scale.assign(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double d = x(r, c) - mean[c];
      scale[c] += d * d;
    }
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(std::max<std::size_t>(1, x.rows() - 1)));
    s = s > 0.0 ? 1.0 / s : 1.0;
  }
}

nn::Tensor3<double> standardized(const Matrix& x, const linalg::Vector& mean,
                                 const linalg::Vector& scale) {
  if (x.cols() != mean.size()) {
    throw DimensionError("features have " + std::to_string(x.cols()) + " columns, model expects " +
                         std::to_string(mean.size()));
  }
  nn::Tensor3<double> t(x.rows(), 1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) t.at(r, 0, c) = (x(r, c) - mean[c]) * scale[c];
  return t;
}

nn::Tensor3<double> rows_of(const nn::Tensor3<double>& t, std::span<const std::size_t> rows) {
  nn::Tensor3<double> out(rows.size(), t.length, t.channels);
  const std::size_t n = t.example_size();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(t.example(rows[i]).begin(), n, out.example(i).begin());
  return out;
}

Matrix as_matrix(const nn::Tensor3<double>& t) {
  Matrix m(t.batch, t.example_size());
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

nn::Tensor3<double> as_tensor(const Matrix& m) {
  nn::Tensor3<double> t(m.rows(), 1, m.cols());
  std::copy(m.data(), m.data() + m.size(), t.data.begin());
  return t;
}

Matrix branch_forward(const nn::ParamStore<double>& params, const nn::Tensor3<double>& x) {
  nn::Network<double> net(params);
  return as_matrix(net.forward(x, nn::Mode::infer));
}

}  // namespace

RetrievalModel retrieval_train(const FeatureTable& a, const FeatureTable& b,
                               const RetrievalConfig& config) {
  a.validate();
  b.validate();
  if (a.ids != b.ids) throw ValidationError("retrieval views must list the same ids in the same order");
  if (a.size() < 2) throw ValidationError("retrieval training needs at least 2 items");
  if (config.layer_dims.empty() || config.canonical_k < 1 ||
      config.canonical_k > config.layer_dims.back()) {
    throw ValidationError("canonical_k must be between 1 and the last layer dimension");
  }
  if (config.batch_size < 2) throw ValidationError("batch_size must be >= 2");

  RetrievalModel model;
  model.config = config;
  standardizer(a.vectors, model.mean_a, model.scale_a);
  standardizer(b.vectors, model.mean_b, model.scale_b);
  const auto xa = standardized(a.vectors, model.mean_a, model.scale_a);
  const auto xb = standardized(b.vectors, model.mean_b, model.scale_b);

  const auto specs = dense_branch(config.layer_dims);
  nn::Network<double> net_a(specs, {1, a.dim()}, mix_seed(config.seed, 1));
  nn::Network<double> net_b(specs, {1, b.dim()}, mix_seed(config.seed, 2));
  optim::Optimizer<double> opt_a(config.optimizer), opt_b(config.optimizer);

  std::vector<std::size_t> order(a.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng(mix_seed(config.seed, 3, epoch)).shuffle(order);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
      const auto part = std::span<const std::size_t>(order).subspan(
          s, std::min(config.batch_size, order.size() - s));
      if (part.size() < 2) continue;
      const auto ya = net_a.forward(rows_of(xa, part), nn::Mode::train);
      const auto yb = net_b.forward(rows_of(xb, part), nn::Mode::train);
      const auto r = dcca::dcca_loss(as_matrix(ya), as_matrix(yb), config.reg, config.eigen_floor);
      if (!std::isfinite(r.loss)) {
        throw NumericError("non-finite retrieval loss at epoch " + std::to_string(epoch));
      }
      net_a.zero_grad();
      net_b.zero_grad();
      net_a.backward(as_tensor(r.grad_x));
      net_b.backward(as_tensor(r.grad_y));
      opt_a.step(net_a);
      opt_b.step(net_b);
      sum += r.loss * static_cast<double>(part.size());
      count += part.size();
    }
    model.loss_history.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }
  net_a.release_cache();
  net_b.release_cache();
  model.branch_a = net_a.params();
  model.branch_b = net_b.params();

  linalg::CcaOptions opts;
  opts.eigen_floor = config.eigen_floor;
  model.cca = linalg::cca_fit(branch_forward(model.branch_a, xa), branch_forward(model.branch_b, xb),
                              config.canonical_k, config.reg, opts);
  return model;
}

Matrix project(const RetrievalModel& model, const Matrix& features, Side side) {
  const bool is_a = side == Side::a;
  const auto x = standardized(features, is_a ? model.mean_a : model.mean_b,
                              is_a ? model.scale_a : model.scale_b);
  const Matrix out = branch_forward(is_a ? model.branch_a : model.branch_b, x);
  return linalg::cca_transform(model.cca, out, is_a ? linalg::View::x : linalg::View::y);
}

double similarity(std::span<const double> a, std::span<const double> b, Similarity s) {
  if (a.size() != b.size()) {
    throw DimensionError("similarity between vectors of length " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()));
  }
  if (s == Similarity::neg_euclidean) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return -std::sqrt(d);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

RankedResult rank_canonical(std::span<const double> query, const std::string& query_id,
                            const std::string& query_label, const Matrix& candidates,
                            std::span<const std::string> ids, std::span<const std::string> labels,
                            Similarity s) {
  if (ids.size() != candidates.rows() || labels.size() != candidates.rows()) {
    throw DimensionError("candidate ids/labels do not match candidate rows");
  }
  if (query.size() != candidates.cols()) {
    throw DimensionError("query has " + std::to_string(query.size()) +
                         " canonical dimensions, candidates have " + std::to_string(candidates.cols()));
  }
  std::vector<double> score(candidates.rows());
  for (std::size_t i = 0; i < candidates.rows(); ++i) score[i] = similarity(query, candidates.row(i), s);
  std::vector<std::size_t> order(candidates.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (score[x] != score[y]) return score[x] > score[y];
    return ids[x] < ids[y];
  });
  RankedResult r;
  r.query_id = query_id;
  r.query_label = query_label;
  for (auto i : order) {
    r.ranked_ids.push_back(ids[i]);
    r.ranked_labels.push_back(labels[i]);
    r.scores.push_back(score[i]);
  }
  return r;
}

RankedResult rank(const RetrievalModel& model, std::span<const double> query,
                  const std::string& query_id, const std::string& query_label, Side query_side,
                  const FeatureTable& candidates) {
  candidates.validate();
  const Matrix q = project(model, Matrix(1, query.size(), std::vector<double>(query.begin(), query.end())),
                           query_side);
  const Matrix c = project(model, candidates.vectors, query_side == Side::a ? Side::b : Side::a);
  return rank_canonical(q.row(0), query_id, query_label, c, candidates.ids, candidates.labels,
                        model.config.similarity);
}

double reciprocal_rank(const RankedResult& r, MrrMode mode) {
  for (std::size_t i = 0; i < r.ranked_ids.size(); ++i) {
    const bool hit = mode == MrrMode::instance ? r.ranked_ids[i] == r.query_id
                                               : r.ranked_labels[i] == r.query_label;
    if (hit) return 1.0 / static_cast<double>(i + 1);
  }
  throw ValidationError("query '" + r.query_id + "' has no relevant candidate");
}

double mrr(std::span<const RankedResult> results, MrrMode mode) {
  if (results.empty()) throw ValidationError("mrr of an empty result list");
  double sum = 0.0;
  for (const auto& r : results) sum += reciprocal_rank(r, mode);
  return sum / static_cast<double>(results.size());
}

double random_mrr(std::size_t n) {
  if (n == 0) throw ValidationError("random_mrr needs n >= 1");
  double h = 0.0;
  for (std::size_t k = n; k >= 1; --k) h += 1.0 / static_cast<double>(k);
  return h / static_cast<double>(n);
}

Rankings rank_all(const RetrievalModel& model, const FeatureTable& a, const FeatureTable& b) {
  a.validate();
  b.validate();
  const Matrix pa = project(model, a.vectors, Side::a);
  const Matrix pb = project(model, b.vectors, Side::b);
  Rankings out;
  for (std::size_t i = 0; i < a.size(); ++i)
    out.a_to_b.push_back(rank_canonical(pa.row(i), a.ids[i], a.labels[i], pb, b.ids, b.labels,
                                        model.config.similarity));
  for (std::size_t i = 0; i < b.size(); ++i)
    out.b_to_a.push_back(rank_canonical(pb.row(i), b.ids[i], b.labels[i], pa, a.ids, a.labels,
                                        model.config.similarity));
  return out;
}

EvalReport evaluate(const Rankings& r, std::size_t k, std::uint64_t seed) {
  EvalReport e;
  e.instance_a_to_b = mrr(r.a_to_b, MrrMode::instance);
  e.instance_b_to_a = mrr(r.b_to_a, MrrMode::instance);
  e.class_a_to_b = mrr(r.a_to_b, MrrMode::class_label);
  e.class_b_to_a = mrr(r.b_to_a, MrrMode::class_label);
  e.n = r.a_to_b.size();
  e.k = k;
  e.seed = seed;
  return e;
}

}  // namespace audeeg::retrieval
