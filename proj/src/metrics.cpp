#include "protmd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace protmd::metrics {

namespace {

void require_same_nonzero(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* op) {
  if (a.size() != b.size()) throw ShapeError(std::string(op) + ": length mismatch");
  if (a.size() == 0) throw EmptyInput(std::string(op) + ": empty input");
}

double pearson_of(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double sa = std::sqrt((da * da).sum());
  const double sb = std::sqrt((db * db).sum());
  if (sa == 0.0 || sb == 0.0) throw DegenerateInput("correlation needs nonzero variance");
  return (da * db).sum() / (sa * sb);
}

}  // namespace

double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  require_same_nonzero(pred, truth, "rmse");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

Eigen::VectorXd average_ranks(const Eigen::VectorXd& values) {
  const Eigen::Index n = values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
  Eigen::VectorXd ranks(n);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values(order[j + 1]) == values(order[i])) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks(order[k]) = mean_rank;
    i = j + 1;
  }
  return ranks;
}

Correlations correlations(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  require_same_nonzero(pred, truth, "correlations");
  if (pred.size() < 2) throw DegenerateInput("correlations need at least 2 samples");
  Correlations c;
  c.pearson = pearson_of(pred, truth);
  c.spearman = pearson_of(average_ranks(pred), average_ranks(truth));
  return c;
}

ClassificationReport ranking_metrics(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(scores.size()) != labels.size())
    throw ShapeError("ranking_metrics: length mismatch");
  ClassificationReport report;
  for (int y : labels) {
    if (y != 0 && y != 1) throw InvalidParameter("labels must be 0/1");
    if (y == 1)
      ++report.positives;
    else
      ++report.negatives;
  }
  if (report.positives == 0 || report.negatives == 0)
    throw DegenerateInput("ranking metrics need both classes");

  // AUROC via the rank-sum statistic; averaged ranks give ties half credit.
  const Eigen::VectorXd ranks = average_ranks(scores);
  double positive_rank_sum = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (labels[static_cast<std::size_t>(i)] == 1) positive_rank_sum += ranks(i);
  const double p = report.positives, q = report.negatives;
  report.auroc = (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);

  // AUPRC: walk distinct scores in descending order; one threshold per
  // distinct value, rectangle rule on recall increments.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return scores(a) > scores(b); });
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores(order[j + 1]) == scores(order[i])) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[static_cast<std::size_t>(order[k])] == 1)
        tp += 1.0;
      else
        fp += 1.0;
    }
    const double recall = tp / p;
    const double precision = tp / (tp + fp);
    area += precision * (recall - prev_recall);
    prev_recall = recall;
    i = j + 1;
  }
  report.auprc = area;
  return report;
}

double davies_bouldin(const Eigen::MatrixXd& points, const std::vector<int>& cluster_labels) {
  if (static_cast<std::size_t>(points.rows()) != cluster_labels.size())
    throw ShapeError("davies_bouldin: one label per point required");
  std::map<int, std::vector<Eigen::Index>> clusters;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    clusters[cluster_labels[static_cast<std::size_t>(i)]].push_back(i);
  if (clusters.size() < 2) throw DegenerateInput("davies_bouldin needs >= 2 clusters");

  std::vector<Eigen::RowVectorXd> centroids;
  std::vector<double> scatter;
  for (const auto& [label, members] : clusters) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(points.cols());
    for (Eigen::Index i : members) c += points.row(i);
    c /= static_cast<double>(members.size());
    double s = 0.0;
    for (Eigen::Index i : members) s += (points.row(i) - c).norm();
    s /= static_cast<double>(members.size());
    centroids.push_back(c);
    scatter.push_back(s);
  }

  const std::size_t k = centroids.size();
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double d = (centroids[i] - centroids[j]).norm();
      if (d == 0.0) throw DegenerateInput("davies_bouldin: coincident centroids");
      worst = std::max(worst, (scatter[i] + scatter[j]) / d);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

double space_shift(const Eigen::MatrixXd& x_in, const Eigen::MatrixXd& x_out) {
  if (x_in.rows() != x_out.rows() || x_in.cols() != x_out.cols())
    throw ShapeError("space_shift: coordinate shapes differ");
  if (x_in.rows() == 0) throw EmptyInput("space_shift: no atoms");
  return (x_out - x_in).squaredNorm() / static_cast<double>(x_in.rows());
}

LinearFit least_squares_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  require_same_nonzero(x, y, "least_squares_fit");
  if (x.size() < 2) throw DegenerateInput("least_squares_fit needs >= 2 samples");
  const double x_mean = x.mean(), y_mean = y.mean();
  const Eigen::ArrayXd dx = x.array() - x_mean;
  const Eigen::ArrayXd dy = y.array() - y_mean;
  const double sxx = (dx * dx).sum();
  if (sxx == 0.0) throw DegenerateInput("least_squares_fit: constant x");
  LinearFit fit;
  fit.slope = (dx * dy).sum() / sxx;
  fit.intercept = y_mean - fit.slope * x_mean;
  const double ss_tot = (dy * dy).sum();
  const Eigen::ArrayXd residual = y.array() - (fit.slope * x.array() + fit.intercept);
  const double ss_res = (residual * residual).sum();
  fit.r_squared = ss_tot == 0.0 ? 0.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

Eigen::MatrixXd pca_project(const Eigen::MatrixXd& points, int dims) {
  if (points.rows() < 2) throw InvalidParameter("pca_project needs >= 2 points");
  if (dims < 1 || dims > points.cols()) throw InvalidParameter("pca_project: bad target dimension");
  const Eigen::MatrixXd centered = points.rowwise() - points.colwise().mean();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(points.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("pca eigendecomposition failed");

  // Eigen returns ascending eigenvalues; take the top `dims` in reverse.
  Eigen::MatrixXd basis(points.cols(), dims);
  for (int d = 0; d < dims; ++d) {
    Eigen::VectorXd v = solver.eigenvectors().col(points.cols() - 1 - d);
    Eigen::Index at = 0;
    v.cwiseAbs().maxCoeff(&at);
    if (v(at) < 0.0) v = -v;
    basis.col(d) = v;
  }
  return centered * basis;
}

RegressionReport regression_report(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  RegressionReport report;
  report.rmse = rmse(pred, truth);
  const Correlations c = correlations(pred, truth);
  report.pearson = c.pearson;
  report.spearman = c.spearman;
  report.sample_count = static_cast<int>(pred.size());
  return report;
}

}  // namespace protmd::metrics
