#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "astro/errors.hpp"
#include "astro/rng.hpp"
#include "astro/tensor.hpp"

namespace astro {

constexpr double kStdFloor = 1e-6;

// Labeled multivariate sensor log: L rows by N numeric sensor columns plus a
// binary label per row. Timestamps are carried through verbatim.
struct SeriesTable {
  std::vector<std::string> timestamps;   // length L
  std::vector<double> values;            // L x N row-major
  std::vector<int> labels;               // length L, 0 normal / 1 attack
  std::vector<std::string> column_names; // length N
  size_t filled_cells = 0;               // gaps repaired by forward-fill, if enabled

  size_t rows() const { return labels.size(); }
  size_t cols() const { return column_names.size(); }
  double value(size_t r, size_t c) const { return values[r * cols() + c]; }
  double& value(size_t r, size_t c) { return values[r * cols() + c]; }
};

enum class MissingPolicy { Reject, ForwardFill };

struct CsvOptions {
  std::string label_column;
  std::map<std::string, int> label_mapping;  // e.g. {"Normal":0, "Attack":1}
  std::string timestamp_column;              // empty = first column
  MissingPolicy missing = MissingPolicy::Reject;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Loads the documented CSV layout: header row, one timestamp column, N numeric
// sensor columns, one label column mapped to {0,1} via options.label_mapping.
// Blank sensor cells are rejected (error naming row and column) or repaired by
// forward-fill, per options.missing; repaired cell count is reported on the
// returned table.
inline SeriesTable load_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("load_csv: '" + path + "' is empty");

  const auto header = detail::split_csv_line(line);
  std::vector<std::string> names;
  for (const auto& h : header) names.push_back(detail::trim(h));

  auto find_col = [&](const std::string& name) -> std::optional<size_t> {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    return std::nullopt;
  };

  const size_t ts_col = opt.timestamp_column.empty()
                            ? 0
                            : find_col(opt.timestamp_column)
                                  .value_or(names.size());
  if (ts_col >= names.size())
    throw ValidationError("load_csv: timestamp column '" + opt.timestamp_column + "' not found");
  auto label_col_opt = find_col(opt.label_column);
  if (!label_col_opt)
    throw ValidationError("load_csv: label column '" + opt.label_column + "' not found");
  const size_t label_col = *label_col_opt;
  if (label_col == ts_col)
    throw ValidationError("load_csv: label column and timestamp column coincide");

  SeriesTable t;
  std::vector<size_t> sensor_cols;
  for (size_t i = 0; i < names.size(); ++i) {
    if (i == ts_col || i == label_col) continue;
    sensor_cols.push_back(i);
    t.column_names.push_back(names[i]);
  }
  if (sensor_cols.empty()) throw ValidationError("load_csv: no sensor columns in '" + path + "'");

  const size_t n = sensor_cols.size();
  std::vector<std::string> bad_labels;
  size_t row_number = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != names.size()) {
      std::ostringstream os;
      os << "load_csv: row " << row_number << " has " << cells.size()
         << " fields, header has " << names.size();
      throw ValidationError(os.str());
    }
    t.timestamps.push_back(detail::trim(cells[ts_col]));

    const std::string label_raw = detail::trim(cells[label_col]);
    auto it = opt.label_mapping.find(label_raw);
    if (it == opt.label_mapping.end()) {
      if (bad_labels.size() < 5)
        bad_labels.push_back("row " + std::to_string(row_number) + ": '" + label_raw + "'");
      t.labels.push_back(0);
    } else {
      if (it->second != 0 && it->second != 1)
        throw ValidationError("load_csv: label mapping must map onto {0,1}");
      t.labels.push_back(it->second);
    }

    const size_t r = t.labels.size() - 1;
    t.values.resize(t.values.size() + n);
    for (size_t k = 0; k < n; ++k) {
      const std::string cell = detail::trim(cells[sensor_cols[k]]);
      if (cell.empty()) {
        if (opt.missing == MissingPolicy::Reject || r == 0) {
          std::ostringstream os;
          os << "load_csv: missing value at row " << row_number << ", column '"
             << t.column_names[k] << "'";
          throw ValidationError(os.str());
        }
        t.values[r * n + k] = t.values[(r - 1) * n + k];
        ++t.filled_cells;
        continue;
      }
      try {
        size_t pos = 0;
        const double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        t.values[r * n + k] = v;
      } catch (const std::exception&) {
        std::ostringstream os;
        os << "load_csv: non-numeric value '" << cell << "' at row " << row_number
           << ", column '" << t.column_names[k] << "'";
        throw ValidationError(os.str());
      }
    }
  }
  if (!bad_labels.empty()) {
    std::ostringstream os;
    os << "load_csv: " << bad_labels.size() << "+ rows with unmapped label values (";
    for (size_t i = 0; i < bad_labels.size(); ++i) os << (i ? "; " : "") << bad_labels[i];
    os << ")";
    throw ValidationError(os.str());
  }
  if (t.rows() == 0) throw ValidationError("load_csv: '" + path + "' has no data rows");
  return t;
}

// Per-column affine transform fitted on a caller-chosen row subset. Population
// std (divide by n), floored at kStdFloor so constant channels map to zero.
struct Standardizer {
  std::vector<double> means;
  std::vector<double> stds;

  static Standardizer identity(size_t n_cols) {
    Standardizer s;
    s.means.assign(n_cols, 0.0);
    s.stds.assign(n_cols, 1.0);
    return s;
  }

  double transform(double v, size_t col) const { return (v - means[col]) / stds[col]; }
};

inline Standardizer fit_standardizer(const SeriesTable& t, const std::vector<size_t>& rows) {
  if (rows.empty()) throw ValidationError("fit_standardizer: empty row set");
  const size_t n = t.cols();
  Standardizer s;
  s.means.assign(n, 0.0);
  s.stds.assign(n, 0.0);
  for (size_t r : rows) {
    if (r >= t.rows()) throw ValidationError("fit_standardizer: row index out of range");
    for (size_t c = 0; c < n; ++c) s.means[c] += t.value(r, c);
  }
  for (size_t c = 0; c < n; ++c) s.means[c] /= static_cast<double>(rows.size());
  for (size_t r : rows)
    for (size_t c = 0; c < n; ++c) {
      const double d = t.value(r, c) - s.means[c];
      s.stds[c] += d * d;
    }
  for (size_t c = 0; c < n; ++c) {
    s.stds[c] = std::sqrt(s.stds[c] / static_cast<double>(rows.size()));
    if (s.stds[c] < kStdFloor) s.stds[c] = kStdFloor;
  }
  return s;
}

// Contiguous row-range convenience form, [begin, end).
inline Standardizer fit_standardizer(const SeriesTable& t, size_t begin, size_t end) {
  if (begin >= end) throw ValidationError("fit_standardizer: empty row range");
  std::vector<size_t> rows(end - begin);
  for (size_t i = begin; i < end; ++i) rows[i - begin] = i;
  return fit_standardizer(t, rows);
}

enum class WindowLabelRule { FinalStep, AnyStep };

inline WindowLabelRule window_label_rule_from_string(const std::string& s) {
  if (s == "final") return WindowLabelRule::FinalStep;
  if (s == "any") return WindowLabelRule::AnyStep;
  throw ValidationError("window label rule must be 'final' or 'any', got '" + s + "'");
}

// One materialized mini-batch: x is B x N x F x T, standardized.
struct WindowBatch {
  Tensor x;
  std::vector<int> y;
  std::vector<size_t> origin_indices;  // start row of each window
};

// Lazily materialized sliding-window view over a standardized copy of the
// table. Window i covers rows [starts[i], starts[i] + T); its label follows
// the configured rule. gather() builds a WindowBatch for any index subset.
class WindowStream {
 public:
  WindowStream(const SeriesTable& t, const Standardizer& std, size_t window_len,
               size_t stride, WindowLabelRule rule, size_t features_per_node = 1)
      : window_len_(window_len), features_(features_per_node) {
    if (window_len == 0) throw ValidationError("make_windows: window length must be >= 1");
    if (stride == 0) throw ValidationError("make_windows: stride must be >= 1");
    if (t.cols() % features_per_node != 0)
      throw ValidationError("make_windows: column count not divisible by features per node");
    if (std.means.size() != t.cols() || std.stds.size() != t.cols())
      throw ValidationError("make_windows: standardizer width does not match table");
    if (t.rows() < window_len) {
      std::ostringstream os;
      os << "make_windows: table has " << t.rows() << " rows, window length is " << window_len;
      throw ValidationError(os.str());
    }
    nodes_ = t.cols() / features_per_node;
    cols_ = t.cols();
    rows_ = t.rows();
    values_.resize(rows_ * cols_);
    for (size_t r = 0; r < rows_; ++r)
      for (size_t c = 0; c < cols_; ++c)
        values_[r * cols_ + c] = std.transform(t.value(r, c), c);
    for (size_t start = 0; start + window_len <= t.rows(); start += stride) {
      starts_.push_back(start);
      int label = 0;
      if (rule == WindowLabelRule::FinalStep) {
        label = t.labels[start + window_len - 1];
      } else {
        for (size_t k = 0; k < window_len; ++k) label |= t.labels[start + k];
      }
      labels_.push_back(label);
    }
  }

  size_t size() const { return starts_.size(); }
  size_t window_len() const { return window_len_; }
  size_t nodes() const { return nodes_; }
  size_t features() const { return features_; }
  int label(size_t i) const { return labels_[i]; }
  size_t origin(size_t i) const { return starts_[i]; }
  const std::vector<int>& labels() const { return labels_; }

  // Rows of the source table covered by the given windows, deduplicated.
  std::vector<size_t> covered_rows(const std::vector<size_t>& window_ids) const {
    std::vector<char> mark(rows_, 0);
    for (size_t w : window_ids)
      for (size_t k = 0; k < window_len_; ++k) mark[starts_[w] + k] = 1;
    std::vector<size_t> rows;
    for (size_t r = 0; r < rows_; ++r)
      if (mark[r]) rows.push_back(r);
    return rows;
  }

  WindowBatch gather(const std::vector<size_t>& ids) const {
    WindowBatch b;
    const size_t bsz = ids.size();
    b.x = Tensor({bsz, nodes_, features_, window_len_});
    b.y.resize(bsz);
    b.origin_indices.resize(bsz);
    double* x = b.x.ptr();
    for (size_t bi = 0; bi < bsz; ++bi) {
      const size_t w = ids[bi];
      b.y[bi] = labels_[w];
      b.origin_indices[bi] = starts_[w];
      for (size_t nidx = 0; nidx < nodes_; ++nidx)
        for (size_t f = 0; f < features_; ++f) {
          const size_t col = nidx * features_ + f;
          double* dst = x + ((bi * nodes_ + nidx) * features_ + f) * window_len_;
          for (size_t t = 0; t < window_len_; ++t)
            dst[t] = values_[(starts_[w] + t) * cols_ + col];
        }
    }
    return b;
  }

  WindowBatch gather_all() const {
    std::vector<size_t> ids(size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    return gather(ids);
  }

 private:
  size_t window_len_, features_, nodes_ = 0, cols_ = 0, rows_ = 0;
  std::vector<double> values_;  // standardized, L x (N*F)
  std::vector<size_t> starts_;
  std::vector<int> labels_;
};

inline WindowStream make_windows(const SeriesTable& t, const Standardizer& std,
                                 size_t window_len, size_t stride = 1,
                                 WindowLabelRule rule = WindowLabelRule::FinalStep,
                                 size_t features_per_node = 1) {
  return WindowStream(t, std, window_len, stride, rule, features_per_node);
}

struct SplitIndices {
  std::vector<size_t> train, val, test;
};

struct SplitRatios {
  double train = 0.70, val = 0.15, test = 0.15;
};

// Class-balanced split: subsample min(#attack, #normal) windows from each
// class (seeded), then partition each class train/val/test by the ratios.
// Deterministic under seed; the three parts are disjoint and exhaust the
// balanced subsample.
inline SplitIndices balanced_split(const std::vector<int>& labels, SplitRatios ratios,
                                   uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("balanced_split: ratios must sum to 1");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
    throw ValidationError("balanced_split: ratios must be non-negative");

  std::vector<size_t> pos, neg;
  for (size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    throw ValidationError("balanced_split: both classes must be present to balance");

  const size_t m = std::min(pos.size(), neg.size());
  Rng rng(seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  pos.resize(m);
  neg.resize(m);

  const size_t n_train = static_cast<size_t>(std::llround(ratios.train * static_cast<double>(m)));
  const size_t n_val = std::min(
      m - n_train, static_cast<size_t>(std::llround(ratios.val * static_cast<double>(m))));

  SplitIndices out;
  auto take = [&](const std::vector<size_t>& cls) {
    for (size_t i = 0; i < m; ++i) {
      if (i < n_train)
        out.train.push_back(cls[i]);
      else if (i < n_train + n_val)
        out.val.push_back(cls[i]);
      else
        out.test.push_back(cls[i]);
    }
  };
  take(pos);
  take(neg);
  // interleaved class order is fine; training shuffles per epoch anyway
  return out;
}

inline SplitIndices balanced_split(const WindowStream& windows, SplitRatios ratios,
                                   uint64_t seed) {
  return balanced_split(windows.labels(), ratios, seed);
}

}  // namespace astro
