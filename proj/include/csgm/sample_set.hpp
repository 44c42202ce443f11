#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace csgm {

/// Universal dataset container: an N x m state matrix plus an optional
/// N x M label matrix, both with named columns.
struct SampleSet {
  Eigen::MatrixXd states;
  std::optional<Eigen::MatrixXd> labels;
  std::vector<std::string> state_names;
  std::vector<std::string> label_names;

  Eigen::Index rows() const { return states.rows(); }
  Eigen::Index dim() const { return states.cols(); }
  Eigen::Index label_dim() const { return labels ? labels->cols() : 0; }

  int state_index(const std::string& name) const;
  int label_index(const std::string& name) const;

  /// Throws std::invalid_argument on non-finite entries, empty data, or a
  /// label/state row-count mismatch.
  void validate() const;

  /// Returns a copy in which the named columns have been moved from states
  /// to labels. Unknown names throw, listing the available columns.
  SampleSet with_labels(const std::vector<std::string>& cols) const;
};

/// Reads a header CSV. Columns named in `label_cols` become labels.
SampleSet read_sample_csv(const std::string& path,
                          const std::vector<std::string>& label_cols = {});

/// Writes state columns then label columns, 17 significant digits.
void write_sample_csv(const SampleSet& set, const std::string& path);

std::string format_double(double v);

}  // namespace csgm
