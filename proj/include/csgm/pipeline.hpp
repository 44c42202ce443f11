#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csgm/manifold.hpp"
#include "csgm/sample_set.hpp"
#include "csgm/schedule.hpp"
#include "csgm/score_mcs.hpp"
#include "csgm/score_nn.hpp"
#include "csgm/sde.hpp"
#include "json.hpp"

namespace csgm {

enum class ScoreBackend { Nn, Mcs };

std::string to_string(ScoreBackend b);
ScoreBackend backend_from_string(const std::string& s);

/// End-to-end generation recipe: pick conditioning labels (named columns or
/// leading non-harmonic diffusion-map coordinates), optionally restrict
/// generation to a reduced coordinate set lifted back through Geometric
/// Harmonics, and sample a score backend at each condition value.
struct PipelineConfig {
  std::vector<std::string> label_columns;
  int dmaps_labels = 0;  // > 0: labels = leading non-harmonic dmaps coordinates
  double dmaps_epsilon_factor = 1.0;
  int dmaps_k = 8;
  NonharmonicConfig nonharmonic;

  bool reduce = false;
  std::vector<std::string> reduced_columns;  // includes the label columns
  double gh_epsilon_factor = 0.05;
  double gh_delta = 1e-3;

  ScoreBackend backend = ScoreBackend::Mcs;
  int n_samples = 1000;
  std::vector<Eigen::VectorXd> conditions;
  std::uint64_t seed = 0;

  NoiseSchedule sched = NoiseSchedule::linear();
  SdeConfig sde;
  TrainConfig train;  // NN backend
  McsConfig mcs;      // MCS backend
};

struct GeneratedEnsemble {
  /// Generated columns first (reduced or ambient), then any lifted columns;
  /// conditioning values re-attached as labels.
  SampleSet samples;
  Eigen::MatrixXd reduced;  // rows in reduced coordinates; empty unless reduce
  std::vector<std::string> reduced_names;
  std::vector<Eigen::VectorXd> conditions;
  std::vector<int> condition_of_row;
  std::vector<bool> extrapolated;  // per condition: outside the training label range
  std::string backend;
  std::optional<GhInterpolant> lift;

  /// Named columns (state or label) stacked in the order given.
  Eigen::MatrixXd columns(const std::vector<std::string>& names) const;
};

/// Pass-through when `data` already carries labels; otherwise labels are the
/// leading non-harmonic diffusion-map coordinates (dmaps_labels > 0, named
/// phi1..phik) or moved out of the named state columns.
SampleSet resolve_labels(const SampleSet& data, const PipelineConfig& cfg);

/// Select labels; optionally truncate to reduced coordinates and fit a GH
/// lift back to the remaining ambient columns; fit/sample the score backend
/// at every condition value; lift. Out-of-range conditions are flagged, not
/// rejected.
GeneratedEnsemble run_algorithm1(const SampleSet& data, const PipelineConfig& cfg);

struct ResidualStats {
  double median = 0.0, p95 = 0.0;
};
ResidualStats residual_stats(Eigen::VectorXd r);

/// |x^3 - lambda x - mu| per row of (x, lambda, mu) columns.
Eigen::VectorXd cusp_residuals(const Eigen::MatrixXd& xlm);

/// Distance of the trailing columns from the GH lift of the leading in_dim.
Eigen::VectorXd lift_residuals(const Eigen::MatrixXd& modes, const GhInterpolant& lift,
                               int in_dim);

struct ClusterResult {
  Eigen::VectorXd centers;  // ascending
  std::vector<int> counts;
  int k = 0;
  double silhouette = 0.0;  // 0 when k == 1
};

/// 1-D k-means; k chosen by mean silhouette over 2..k_max, collapsing to a
/// single cluster when even the best split scores below 0.5.
ClusterResult cluster_modes(const Eigen::VectorXd& values, int k_max);

/// Histogram mode locations: centers of bins (edges at multiples of
/// bin_width) that strictly exceed both neighbors and hold at least 10% of
/// the tallest bin.
std::vector<double> histogram_modes(const Eigen::VectorXd& v, double bin_width, double lo,
                                    double hi);

/// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(Eigen::VectorXd a, Eigen::VectorXd b);

struct HistogramSummary {
  double ks = 0.0;
  std::vector<double> modes_a, modes_b;
};
HistogramSummary histogram_compare(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                   double bin_width = 0.25);

/// Per-row high-mode energy fraction sum_{k>=first_high_mode} c_k^2 / sum c_k^2
/// (1-based mode index over the columns).
Eigen::VectorXd smoothness_metric(const Eigen::MatrixXd& profiles, int first_high_mode = 7);

const std::vector<std::string>& experiment_names();

/// Runs a registered experiment, writing <out_dir>/<name>/{samples.csv,
/// metrics.json, provenance.json} (plus per-backend sample files when the
/// experiment runs more than one backend). Returns the metrics document.
nlohmann::json run_experiment(const std::string& name, const std::string& out_dir,
                              std::uint64_t seed = 0);

/// FNV-1a content hash, hex-encoded.
std::string file_hash(const std::string& path);

}  // namespace csgm
