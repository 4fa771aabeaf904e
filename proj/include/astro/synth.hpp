#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "astro/errors.hpp"
#include "astro/ingest.hpp"
#include "astro/rng.hpp"
#include "astro/topology.hpp"

// Deterministic synthetic plant generator. Normal operation: each subsystem
// follows a shared latent signal (sine plus a slow random walk) with weak
// coupling to adjacent subsystems, so nodes within a subsystem correlate
// strongly while non-adjacent subsystems stay decorrelated. Attacks overwrite
// contiguous segments on 1-3 nodes of one subsystem and label those rows 1.
namespace astro {

enum class AttackType { Spike, Drift, Stuck };

inline std::string to_string(AttackType a) {
  switch (a) {
    case AttackType::Spike: return "spike";
    case AttackType::Drift: return "drift";
    case AttackType::Stuck: return "stuck";
  }
  return "?";
}

inline AttackType attack_type_from_string(const std::string& s) {
  if (s == "spike") return AttackType::Spike;
  if (s == "drift") return AttackType::Drift;
  if (s == "stuck") return AttackType::Stuck;
  throw ValidationError("synth: unknown attack type '" + s + "'");
}

struct SynthConfig {
  size_t n_subsystems = 4;
  size_t nodes_per_subsystem = 2;
  size_t series_length = 30000;
  double attack_fraction = 0.10;
  std::vector<AttackType> attack_types = {AttackType::Spike, AttackType::Drift,
                                          AttackType::Stuck};
  double noise_std = 0.25;
  double coupling_strength = 0.3;
  uint64_t seed = 7;

  void validate() const {
    if (n_subsystems == 0 || nodes_per_subsystem == 0)
      throw ValidationError("synth: empty plant");
    if (!(attack_fraction >= 0.0 && attack_fraction < 1.0))
      throw ValidationError("synth: attack_fraction must lie in [0,1)");
    if (series_length < 2) throw ValidationError("synth: series too short");
    if (!(noise_std > 0.0)) throw ValidationError("synth: noise_std must be > 0");
    if (attack_fraction > 0.0 && attack_types.empty())
      throw ValidationError("synth: attacks requested but no attack types enabled");
  }
};

struct SynthResult {
  SeriesTable table;
  PlantSpec plant;
};

namespace detail {

struct AttackSegment {
  size_t begin, end;  // rows [begin, end)
  size_t subsystem;
  std::vector<size_t> nodes;  // node indices within the plant
  AttackType type;
};

}  // namespace detail

inline SynthResult generate(const SynthConfig& cfg) {
  cfg.validate();
  const size_t n_sub = cfg.n_subsystems;
  const size_t per = cfg.nodes_per_subsystem;
  const size_t n = n_sub * per;
  const size_t len = cfg.series_length;

  SynthResult out;
  for (size_t s = 0; s < n_sub; ++s) {
    Subsystem sub;
    sub.name = "P" + std::to_string(s + 1);
    for (size_t k = 0; k < per; ++k)
      sub.nodes.push_back(sub.name + "_n" + std::to_string(k + 1));
    out.plant.subsystems.push_back(std::move(sub));
  }
  for (size_t s = 0; s + 1 < n_sub; ++s)
    out.plant.adjacencies.emplace_back("P" + std::to_string(s + 1),
                                       "P" + std::to_string(s + 2));
  out.plant.intra_weight = 1.0;
  out.plant.inter_weight = 0.5;

  // Per-subsystem latents; seeds derived from the master by fixed offsets so
  // subsystems could be generated independently.
  std::vector<std::vector<double>> latent(n_sub, std::vector<double>(len));
  for (size_t s = 0; s < n_sub; ++s) {
    Rng rng(derive_seed(cfg.seed, 100 + s));
    const double period = 40.0 + 30.0 * static_cast<double>(s);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    double walk = 0.0;
    for (size_t t = 0; t < len; ++t) {
      walk += rng.normal(0.0, 0.01);
      walk *= 0.999;  // mean-reverting so the walk stays bounded
      latent[s][t] =
          std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(t) / period + phase) +
          walk;
    }
  }

  SeriesTable& table = out.table;
  table.column_names = out.plant.node_names();
  table.values.assign(len * n, 0.0);
  table.labels.assign(len, 0);
  table.timestamps.resize(len);
  for (size_t t = 0; t < len; ++t) table.timestamps[t] = std::to_string(t);

  for (size_t s = 0; s < n_sub; ++s) {
    Rng rng(derive_seed(cfg.seed, 200 + s));
    // coupled drive: own latent plus the mean of adjacent latents
    for (size_t k = 0; k < per; ++k) {
      const size_t col = s * per + k;
      for (size_t t = 0; t < len; ++t) {
        double coupled = 0.0;
        int n_adj = 0;
        if (s > 0) {
          coupled += latent[s - 1][t];
          ++n_adj;
        }
        if (s + 1 < n_sub) {
          coupled += latent[s + 1][t];
          ++n_adj;
        }
        if (n_adj) coupled /= static_cast<double>(n_adj);
        table.values[t * n + col] =
            latent[s][t] + cfg.coupling_strength * coupled + rng.normal(0.0, cfg.noise_std);
      }
    }
  }

  // --- attack placement -----------------------------------------------------
  if (cfg.attack_fraction > 0.0) {
    Rng rng(derive_seed(cfg.seed, 999));
    const auto target_rows =
        static_cast<size_t>(std::llround(cfg.attack_fraction * static_cast<double>(len)));
    std::vector<char> occupied(len, 0);
    std::vector<detail::AttackSegment> segments;
    size_t attacked_rows = 0;
    size_t attempts = 0;
    const size_t max_attempts = 50000;
    while (attacked_rows < target_rows && attempts < max_attempts) {
      ++attempts;
      const AttackType type =
          cfg.attack_types[rng.below(cfg.attack_types.size())];
      // stuck segments run longer so the frozen node visibly diverges
      const size_t seg_min = type == AttackType::Stuck ? 30 : 20;
      const size_t seg_max = type == AttackType::Stuck ? 60 : 50;
      size_t seg_len = seg_min + rng.below(seg_max - seg_min + 1);
      seg_len = std::min(seg_len, target_rows - attacked_rows + seg_min);
      if (seg_len >= len) continue;
      const size_t begin = rng.below(len - seg_len);
      bool clash = false;
      // keep one clean row between segments
      const size_t lo = begin == 0 ? 0 : begin - 1;
      const size_t hi = std::min(len, begin + seg_len + 1);
      for (size_t t = lo; t < hi && !clash; ++t) clash = occupied[t];
      if (clash) continue;

      detail::AttackSegment seg;
      seg.begin = begin;
      seg.end = begin + seg_len;
      seg.subsystem = rng.below(n_sub);
      const size_t n_nodes_hit = 1 + rng.below(std::min<size_t>(3, per));
      std::vector<size_t> pool(per);
      for (size_t k = 0; k < per; ++k) pool[k] = seg.subsystem * per + k;
      rng.shuffle(pool);
      seg.nodes.assign(pool.begin(), pool.begin() + n_nodes_hit);
      seg.type = type;
      for (size_t t = seg.begin; t < seg.end; ++t) {
        occupied[t] = 1;
        table.labels[t] = 1;
      }
      attacked_rows += seg_len;
      segments.push_back(std::move(seg));
    }

    // Attack magnitudes are expressed in units of each node's own signal std
    // (measured on the untouched series) so a z-score rule sees them at the
    // stated scale regardless of coupling or noise settings.
    std::vector<double> node_std(n, 0.0);
    {
      std::vector<double> mean(n, 0.0);
      for (size_t t = 0; t < len; ++t)
        for (size_t col = 0; col < n; ++col) mean[col] += table.values[t * n + col];
      for (size_t col = 0; col < n; ++col) mean[col] /= static_cast<double>(len);
      for (size_t t = 0; t < len; ++t)
        for (size_t col = 0; col < n; ++col) {
          const double d = table.values[t * n + col] - mean[col];
          node_std[col] += d * d;
        }
      for (size_t col = 0; col < n; ++col)
        node_std[col] = std::sqrt(node_std[col] / static_cast<double>(len));
    }

    Rng app_rng(derive_seed(cfg.seed, 1000));
    for (const auto& seg : segments) {
      for (size_t col : seg.nodes) {
        const double sigma = node_std[col];
        switch (seg.type) {
          case AttackType::Spike:
            // dense impulse train, +6 sigma with +-10% jitter
            for (size_t t = seg.begin; t < seg.end; ++t)
              table.values[t * n + col] +=
                  6.0 * sigma * (1.0 + 0.1 * app_rng.uniform(-1.0, 1.0));
            break;
          case AttackType::Drift: {
            // linear ramp from 0 to +4 sigma across the segment
            const double span = static_cast<double>(seg.end - seg.begin - 1);
            for (size_t t = seg.begin; t < seg.end; ++t) {
              const double frac =
                  span > 0.0 ? static_cast<double>(t - seg.begin) / span : 1.0;
              table.values[t * n + col] += 4.0 * sigma * frac;
            }
            break;
          }
          case AttackType::Stuck: {
            const double frozen = table.values[seg.begin * n + col];
            for (size_t t = seg.begin; t < seg.end; ++t) table.values[t * n + col] = frozen;
            break;
          }
        }
      }
    }
  }
  return out;
}

// Writes the standard ingest CSV next to a matching plant spec file.
inline void save_series_csv(const SeriesTable& t, const std::string& path,
                            const std::string& label_name = "Normal/Attack") {
  std::ofstream out(path);
  if (!out) throw ValidationError("synth: cannot write '" + path + "'");
  out << "Timestamp";
  for (const auto& c : t.column_names) out << ',' << c;
  out << ',' << label_name << '\n';
  out << std::setprecision(17);
  for (size_t r = 0; r < t.rows(); ++r) {
    out << t.timestamps[r];
    for (size_t c = 0; c < t.cols(); ++c) out << ',' << t.value(r, c);
    out << ',' << (t.labels[r] ? "Attack" : "Normal") << '\n';
  }
}

}  // namespace astro
