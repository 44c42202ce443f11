#include "csgm/sample_set.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace csgm {

int SampleSet::state_index(const std::string& name) const {
  auto it = std::find(state_names.begin(), state_names.end(), name);
  return it == state_names.end() ? -1 : static_cast<int>(it - state_names.begin());
}

int SampleSet::label_index(const std::string& name) const {
  auto it = std::find(label_names.begin(), label_names.end(), name);
  return it == label_names.end() ? -1 : static_cast<int>(it - label_names.begin());
}

void SampleSet::validate() const {
  if (states.rows() < 1) throw std::invalid_argument("SampleSet: empty state matrix");
  if (!states.allFinite()) throw std::invalid_argument("SampleSet: non-finite state entry");
  if (labels) {
    if (labels->rows() != states.rows())
      throw std::invalid_argument("SampleSet: label row count does not match states");
    if (!labels->allFinite()) throw std::invalid_argument("SampleSet: non-finite label entry");
  }
}

SampleSet SampleSet::with_labels(const std::vector<std::string>& cols) const {
  std::vector<int> label_idx;
  for (const auto& c : cols) {
    int i = state_index(c);
    if (i < 0) {
      std::ostringstream msg;
      msg << "unknown label column '" << c << "'; available columns:";
      for (const auto& n : state_names) msg << " " << n;
      throw std::invalid_argument(msg.str());
    }
    label_idx.push_back(i);
  }
  SampleSet out;
  std::vector<int> keep;
  for (int i = 0; i < static_cast<int>(state_names.size()); ++i)
    if (std::find(label_idx.begin(), label_idx.end(), i) == label_idx.end()) keep.push_back(i);
  out.states.resize(states.rows(), keep.size());
  for (size_t k = 0; k < keep.size(); ++k) {
    out.states.col(k) = states.col(keep[k]);
    out.state_names.push_back(state_names[keep[k]]);
  }
  Eigen::MatrixXd lab(states.rows(), label_idx.size());
  for (size_t k = 0; k < label_idx.size(); ++k) {
    lab.col(k) = states.col(label_idx[k]);
    out.label_names.push_back(state_names[label_idx[k]]);
  }
  out.labels = lab;
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

static std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

SampleSet read_sample_csv(const std::string& path, const std::vector<std::string>& label_cols) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV file: " + path);
  std::vector<std::string> header = split_csv_line(line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("CSV row width mismatch in " + path);
    std::vector<double> row(cells.size());
    for (size_t i = 0; i < cells.size(); ++i) {
      try {
        row[i] = std::stod(cells[i]);
      } catch (const std::exception&) {
        throw std::runtime_error("bad numeric cell '" + cells[i] + "' in " + path);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("CSV has no data rows: " + path);
  SampleSet all;
  all.states.resize(rows.size(), header.size());
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < header.size(); ++c) all.states(r, c) = rows[r][c];
  all.state_names = header;
  if (label_cols.empty()) return all;
  return all.with_labels(label_cols);
}

void write_sample_csv(const SampleSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write CSV file: " + path);
  bool first = true;
  for (const auto& n : set.state_names) {
    if (!first) out << ',';
    out << n;
    first = false;
  }
  for (const auto& n : set.label_names) {
    if (!first) out << ',';
    out << n;
    first = false;
  }
  out << '\n';
  for (Eigen::Index r = 0; r < set.rows(); ++r) {
    for (Eigen::Index c = 0; c < set.dim(); ++c) {
      if (c) out << ',';
      out << format_double(set.states(r, c));
    }
    if (set.labels)
      for (Eigen::Index c = 0; c < set.labels->cols(); ++c)
        out << ',' << format_double((*set.labels)(r, c));
    out << '\n';
  }
}

}  // namespace csgm
