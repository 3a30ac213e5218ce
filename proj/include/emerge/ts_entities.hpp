#pragma once

// Abnormal-feature extraction from time-series data. Per-feature statistics
// (population or per-patient), z-scores, and threshold flagging into entity
// mentions with natural-language surfaces for the KG matcher.

#include <optional>
#include <string>
#include <vector>

#include "emerge/ehr.hpp"

namespace emerge {

enum class StatsSource { population, per_patient };

struct FeatureStat {
  double mean = 0.0;
  double std = 0.0;  // population formula (divide by n)
  long n_observations = 0;
  bool available = false;  // false when a feature had zero non-missing cells
};

struct FeatureStats {
  StatsSource source = StatsSource::population;
  std::vector<FeatureStat> per_feature;

  const FeatureStat& at(int f) const { return per_feature.at(static_cast<size_t>(f)); }
};

// Pools all visits of all records per feature. Missing cells are excluded.
inline FeatureStats compute_feature_stats(const std::vector<PatientRecord>& records,
                                          StatsSource mode = StatsSource::population) {
  if (records.empty()) throw ValidationError("compute_feature_stats: empty cohort");
  if (mode == StatsSource::per_patient) {
    throw ValidationError("per-patient statistics are computed per record; use patient_feature_stats");
  }
  int f_count = records.front().ts.features();
  std::vector<long> n(f_count, 0);
  std::vector<double> mean(f_count, 0.0), m2(f_count, 0.0);
  for (const auto& r : records) {
    for (int t = 0; t < r.ts.visits; ++t) {
      for (int f = 0; f < f_count; ++f) {
        const auto& cell = r.ts.at(t, f);
        if (!cell) continue;
        // Welford update
        ++n[f];
        double delta = *cell - mean[f];
        mean[f] += delta / static_cast<double>(n[f]);
        m2[f] += delta * (*cell - mean[f]);
      }
    }
  }
  FeatureStats stats;
  stats.source = StatsSource::population;
  stats.per_feature.resize(f_count);
  for (int f = 0; f < f_count; ++f) {
    FeatureStat& s = stats.per_feature[f];
    s.n_observations = n[f];
    s.available = n[f] >= 1;
    if (s.available) {
      s.mean = mean[f];
      s.std = std::sqrt(m2[f] / static_cast<double>(n[f]));
    }
  }
  return stats;
}

inline FeatureStats patient_feature_stats(const PatientRecord& record) {
  FeatureStats stats = compute_feature_stats({record});
  stats.source = StatsSource::per_patient;
  return stats;
}

struct ZScore {
  double value = 0.0;
  bool degenerate = false;  // std was zero; z defined as 0
};

inline ZScore zscore(double value, const FeatureStat& stat) {
  if (!stat.available) throw ValidationError("zscore: statistics unavailable for feature");
  if (stat.std == 0.0) return {0.0, true};
  return {(value - stat.mean) / stat.std, false};
}

// ---------------------------------------------------------------------------
// entity mentions

enum class Direction { high, low };
enum class MentionSource { timeseries, note };

inline std::string to_string(Direction d) { return d == Direction::high ? "high" : "low"; }
inline std::string to_string(MentionSource s) {
  return s == MentionSource::timeseries ? "timeseries" : "note";
}

struct EntityMention {
  std::string surface;
  MentionSource source = MentionSource::timeseries;
  std::optional<Direction> direction;  // timeseries only
  std::optional<int> feature_index;    // timeseries only
  std::optional<double> zscore;        // timeseries only

  static EntityMention from_note(std::string surface) {
    EntityMention m;
    m.surface = std::move(surface);
    m.source = MentionSource::note;
    return m;
  }
};

// One mention per flagged feature, carrying the extremal z-score. A feature
// is flagged when any non-missing cell has |z| >= epsilon (inclusive, so the
// documented epsilon=2 boundary is itself flaggable). Categorical features
// are skipped. Output is ordered by feature index.
inline std::vector<EntityMention> extract_ts_entities(const TimeSeriesMatrix& ts,
                                                      const FeatureStats& stats,
                                                      double epsilon) {
  if (epsilon <= 0) throw ValidationError("extract_ts_entities: epsilon must be positive");
  if (static_cast<int>(stats.per_feature.size()) != ts.features()) {
    throw ValidationError("extract_ts_entities: stats dimension mismatch");
  }
  std::vector<EntityMention> out;
  for (int f = 0; f < ts.features(); ++f) {
    const FeatureSpec& spec = ts.feature_specs[f];
    if (spec.kind == FeatureKind::categorical) {
      logging::emit(R"({"event":"skip_categorical_feature","feature":")" + spec.name + "\"}");
      continue;
    }
    const FeatureStat& stat = stats.at(f);
    if (!stat.available) continue;
    bool flagged = false;
    double extremal = 0.0;
    for (int t = 0; t < ts.visits; ++t) {
      const auto& cell = ts.at(t, f);
      if (!cell) continue;
      ZScore z = zscore(*cell, stat);
      if (z.degenerate) continue;
      if (std::abs(z.value) > std::abs(extremal)) extremal = z.value;
      if (std::abs(z.value) >= epsilon) flagged = true;
    }
    if (!flagged) continue;
    EntityMention m;
    m.source = MentionSource::timeseries;
    m.feature_index = f;
    m.zscore = extremal;
    m.direction = extremal > 0 ? Direction::high : Direction::low;
    m.surface = spec.name + (extremal > 0 ? " too high" : " too low");
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL serialization for the extract stage

inline ojson ts_mentions_to_json(const std::string& patient_id,
                                 const std::vector<EntityMention>& mentions) {
  ojson j;
  j["patient_id"] = patient_id;
  ojson arr = ojson::array();
  for (const auto& m : mentions) {
    arr.push_back({{"surface", m.surface},
                   {"direction", to_string(*m.direction)},
                   {"feature_index", *m.feature_index},
                   {"zscore", *m.zscore}});
  }
  j["mentions"] = std::move(arr);
  return j;
}

inline std::vector<EntityMention> ts_mentions_from_json(const json& j) {
  std::vector<EntityMention> out;
  for (const auto& mj : j.at("mentions")) {
    EntityMention m;
    m.surface = mj.at("surface").get<std::string>();
    m.source = MentionSource::timeseries;
    m.direction = mj.at("direction").get<std::string>() == "high" ? Direction::high : Direction::low;
    m.feature_index = mj.at("feature_index").get<int>();
    m.zscore = mj.at("zscore").get<double>();
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace emerge
