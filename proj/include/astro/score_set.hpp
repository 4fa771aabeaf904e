#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "astro/errors.hpp"

namespace astro {

// Per-window anomaly probabilities paired with ground-truth labels; the input
// to threshold tuning and evaluation. origin_indices are optional row offsets
// back into the source table.
struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<size_t> origin_indices;

  size_t size() const { return scores.size(); }

  bool has_both_classes() const {
    bool pos = false, neg = false;
    for (int y : labels) (y ? pos : neg) = true;
    return pos && neg;
  }
};

// File format: header "score,label", one pair per line. Lets the tuner run
// standalone on any classifier's outputs.
inline ScoreSet load_score_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("score set: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("score set: '" + path + "' is empty");
  ScoreSet s;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::istringstream is(line);
    std::string a, b;
    if (!std::getline(is, a, ',') || !std::getline(is, b)) {
      throw ValidationError("score set: malformed row " + std::to_string(row) + " in '" +
                            path + "'");
    }
    try {
      s.scores.push_back(std::stod(a));
      const int y = std::stoi(b);
      if (y != 0 && y != 1) throw std::invalid_argument(b);
      s.labels.push_back(y);
    } catch (const std::exception&) {
      throw ValidationError("score set: bad values at row " + std::to_string(row) + " in '" +
                            path + "'");
    }
  }
  if (s.size() == 0) throw ValidationError("score set: '" + path + "' has no rows");
  return s;
}

inline void save_score_set(const ScoreSet& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("score set: cannot write '" + path + "'");
  out << "score,label\n";
  out << std::setprecision(17);
  for (size_t i = 0; i < s.size(); ++i) out << s.scores[i] << ',' << s.labels[i] << '\n';
}

}  // namespace astro
