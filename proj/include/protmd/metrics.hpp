#pragma once

#include <Eigen/Dense>
#include <vector>

#include "protmd/errors.hpp"

namespace protmd::metrics {

struct RegressionReport {
  double rmse = 0.0;
  double pearson = 0.0;
  double spearman = 0.0;
  int sample_count = 0;
};

struct ClassificationReport {
  double auroc = 0.0;
  double auprc = 0.0;
  int positives = 0;
  int negatives = 0;
};

double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

struct Correlations {
  double pearson = 0.0;
  double spearman = 0.0;
};
// Pearson on values; Spearman as Pearson on averaged ranks.
Correlations correlations(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

// Averaged ("fractional") ranks, 1-based; ties share the mean of their ranks.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& values);

// AUROC with half credit for score ties; AUPRC by stepwise non-interpolated
// integration over distinct descending scores.
ClassificationReport ranking_metrics(const Eigen::VectorXd& scores, const std::vector<int>& labels);

double davies_bouldin(const Eigen::MatrixXd& points, const std::vector<int>& cluster_labels);

// ||x_out - x_in||_2^2 / atom count; the predicted-motion statistic.
double space_shift(const Eigen::MatrixXd& x_in, const Eigen::MatrixXd& x_out);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};
LinearFit least_squares_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Mean-centered projection onto the top principal components, ordered by
// descending eigenvalue; each component's largest-magnitude loading is made
// positive so the output is sign-deterministic.
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& points, int dims = 2);

RegressionReport regression_report(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

}  // namespace protmd::metrics
