#pragma once

// Patient data model and ingestion: feature specs, time-series grids with
// explicit missingness, normalized clinical notes, JSONL load/store, the
// 12-hour style event consolidation transform, and deterministic cohort
// splitting.

#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emerge/common.hpp"

namespace emerge {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr int kDefaultMaxVisits = 48;

enum class FeatureKind { numeric, categorical };

inline std::string to_string(FeatureKind k) {
  return k == FeatureKind::numeric ? "numeric" : "categorical";
}

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "numeric") return FeatureKind::numeric;
  if (s == "categorical") return FeatureKind::categorical;
  throw ValidationError("unknown feature kind '" + s + "'");
}

struct FeatureSpec {
  int index = 0;
  std::string name;
  FeatureKind kind = FeatureKind::numeric;

  bool operator==(const FeatureSpec&) const = default;
};

// T x F grid; a missing cell is nullopt, never 0.
struct TimeSeriesMatrix {
  int visits = 0;    // T
  std::vector<FeatureSpec> feature_specs;
  std::vector<std::optional<double>> cells;  // row-major T x F

  int features() const { return static_cast<int>(feature_specs.size()); }

  std::optional<double>& at(int t, int f) { return cells[static_cast<size_t>(t) * feature_specs.size() + f]; }
  const std::optional<double>& at(int t, int f) const {
    return cells[static_cast<size_t>(t) * feature_specs.size() + f];
  }

  static TimeSeriesMatrix zeros(int t, std::vector<FeatureSpec> specs) {
    TimeSeriesMatrix m;
    m.visits = t;
    m.feature_specs = std::move(specs);
    m.cells.assign(static_cast<size_t>(t) * m.feature_specs.size(), std::optional<double>{});
    return m;
  }
};

struct ClinicalNote {
  std::string text;    // normalized: lowercase, single-spaced, placeholder-free
  int raw_length = 0;  // characters before normalization
};

struct PatientRecord {
  std::string id;
  TimeSeriesMatrix ts;
  ClinicalNote note;
  int label_mortality = 0;
  int label_readmission = 0;
};

enum class PredictionTask { mortality, readmission };

inline int label_for(const PatientRecord& r, PredictionTask task) {
  return task == PredictionTask::mortality ? r.label_mortality : r.label_readmission;
}

inline std::string to_string(PredictionTask t) {
  return t == PredictionTask::mortality ? "mortality" : "readmission";
}

inline PredictionTask task_from_string(const std::string& s) {
  if (s == "mortality") return PredictionTask::mortality;
  if (s == "readmission") return PredictionTask::readmission;
  throw ConfigError("unknown task '" + s + "'");
}

// ---------------------------------------------------------------------------
// note normalization

inline const std::vector<std::string>& default_placeholder_patterns() {
  static const std::vector<std::string> patterns = {R"(\[\*\*.*?\*\*\])"};
  return patterns;
}

// Lowercase, strip de-identification placeholders, collapse punctuation to
// spaces, squeeze whitespace. Idempotent for placeholder patterns that cannot
// match plain lowercase alphanumeric text (all the usual bracketed markers).
inline ClinicalNote normalize_note(const std::string& raw,
                                   const std::vector<std::string>& placeholder_patterns =
                                       default_placeholder_patterns()) {
  std::string text = to_lower(raw);
  for (const auto& pat : placeholder_patterns) {
    std::regex re(pat, std::regex::ECMAScript | std::regex::icase);
    text = std::regex_replace(text, re, " ");
  }
  for (char& c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (!std::isalnum(u)) c = ' ';
  }
  ClinicalNote note;
  note.text = squeeze_spaces(text);
  note.raw_length = static_cast<int>(raw.size());
  return note;
}

// ---------------------------------------------------------------------------
// JSONL ingestion

struct LoadResult {
  std::vector<PatientRecord> records;
  std::vector<std::string> warnings;  // e.g. visit truncation notices
};

namespace detail {

inline PatientRecord record_from_json(const json& j, int line_no, int max_visits,
                                      const std::vector<std::string>& placeholder_patterns,
                                      std::vector<std::string>* warnings) {
  auto fail = [line_no](const std::string& what) -> ParseError {
    return ParseError("line " + std::to_string(line_no) + ": " + what);
  };
  for (const char* field : {"id", "features", "values", "note", "label_mortality",
                            "label_readmission"}) {
    if (!j.contains(field)) throw fail(std::string("missing field '") + field + "'");
  }
  PatientRecord r;
  if (!j["id"].is_string()) throw fail("'id' must be a string");
  r.id = j["id"].get<std::string>();

  std::vector<FeatureSpec> specs;
  std::set<std::string> names;
  for (const auto& fj : j["features"]) {
    FeatureSpec fs;
    fs.index = fj.at("index").get<int>();
    fs.name = fj.at("name").get<std::string>();
    fs.kind = feature_kind_from_string(fj.at("kind").get<std::string>());
    if (!names.insert(fs.name).second) throw fail("duplicate feature name '" + fs.name + "'");
    specs.push_back(fs);
  }
  for (size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].index != static_cast<int>(i)) {
      throw fail("feature indices must be contiguous 0..F-1");
    }
  }
  if (specs.empty()) throw fail("at least one feature is required");

  const auto& rows = j["values"];
  if (!rows.is_array() || rows.empty()) throw fail("'values' must be a non-empty array of rows");
  int t_total = static_cast<int>(rows.size());
  int t_keep = std::min(t_total, max_visits);
  if (t_total > max_visits && warnings) {
    warnings->push_back("patient " + r.id + ": " + std::to_string(t_total) + " visits truncated to first " +
                        std::to_string(max_visits));
  }
  r.ts = TimeSeriesMatrix::zeros(t_keep, specs);
  for (int t = 0; t < t_keep; ++t) {
    const auto& row = rows[t];
    if (!row.is_array() || row.size() != specs.size()) {
      throw fail("row " + std::to_string(t) + " must have exactly F=" + std::to_string(specs.size()) +
                 " entries");
    }
    for (size_t f = 0; f < specs.size(); ++f) {
      if (row[f].is_null()) continue;
      if (!row[f].is_number()) throw fail("cell (" + std::to_string(t) + "," + std::to_string(f) +
                                          ") must be a number or null");
      r.ts.at(t, static_cast<int>(f)) = row[f].get<double>();
    }
  }

  if (!j["note"].is_string()) throw fail("'note' must be a string");
  r.note = normalize_note(j["note"].get<std::string>(), placeholder_patterns);

  for (const char* field : {"label_mortality", "label_readmission"}) {
    const auto& lv = j[field];
    if (!lv.is_number_integer() || (lv.get<int>() != 0 && lv.get<int>() != 1)) {
      throw fail(std::string("'") + field + "' must be 0 or 1");
    }
  }
  r.label_mortality = j["label_mortality"].get<int>();
  r.label_readmission = j["label_readmission"].get<int>();
  return r;
}

}  // namespace detail

inline LoadResult load_patients(const std::filesystem::path& path, int max_visits = kDefaultMaxVisits,
                                const std::vector<std::string>& placeholder_patterns =
                                    default_placeholder_patterns()) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open patients file: " + path.string());
  LoadResult result;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    PatientRecord r =
        detail::record_from_json(j, line_no, max_visits, placeholder_patterns, &result.warnings);
    if (!seen_ids.insert(r.id).second) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate patient id '" + r.id + "'");
    }
    if (!result.records.empty() &&
        result.records.front().ts.feature_specs != r.ts.feature_specs) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": feature table differs from previous records");
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

inline ojson patient_to_json(const PatientRecord& r) {
  ojson j;
  j["id"] = r.id;
  ojson feats = ojson::array();
  for (const auto& fs : r.ts.feature_specs) {
    feats.push_back({{"index", fs.index}, {"name", fs.name}, {"kind", to_string(fs.kind)}});
  }
  j["features"] = std::move(feats);
  ojson rows = ojson::array();
  for (int t = 0; t < r.ts.visits; ++t) {
    ojson row = ojson::array();
    for (int f = 0; f < r.ts.features(); ++f) {
      const auto& c = r.ts.at(t, f);
      if (c) {
        row.push_back(*c);
      } else {
        row.push_back(nullptr);
      }
    }
    rows.push_back(std::move(row));
  }
  j["values"] = std::move(rows);
  j["note"] = r.note.text;
  j["label_mortality"] = r.label_mortality;
  j["label_readmission"] = r.label_readmission;
  return j;
}

inline void write_patients(const std::filesystem::path& path,
                           const std::vector<PatientRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += patient_to_json(r).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// per-event consolidation (the 12-hour window ingestion transform)

struct RawEvent {
  double time_hours = 0.0;
  int feature_index = 0;
  double value = 0.0;
};

// Means per (window, feature); windows with no event for a feature stay
// missing. Events beyond max_visits windows are dropped.
inline TimeSeriesMatrix consolidate_events(const std::vector<RawEvent>& events,
                                           double window_hours,
                                           std::vector<FeatureSpec> specs,
                                           int max_visits = kDefaultMaxVisits) {
  if (window_hours <= 0) throw ValidationError("window_hours must be positive");
  int f_count = static_cast<int>(specs.size());
  int last_window = -1;
  for (const auto& ev : events) {
    if (ev.time_hours < 0) throw ValidationError("event time must be non-negative");
    if (ev.feature_index < 0 || ev.feature_index >= f_count) {
      throw ValidationError("event feature index out of range");
    }
    int w = static_cast<int>(ev.time_hours / window_hours);
    if (w < max_visits) last_window = std::max(last_window, w);
  }
  int t = std::max(last_window + 1, 1);
  TimeSeriesMatrix m = TimeSeriesMatrix::zeros(t, std::move(specs));
  std::vector<double> sums(static_cast<size_t>(t) * f_count, 0.0);
  std::vector<int> counts(static_cast<size_t>(t) * f_count, 0);
  for (const auto& ev : events) {
    int w = static_cast<int>(ev.time_hours / window_hours);
    if (w >= max_visits) continue;
    size_t idx = static_cast<size_t>(w) * f_count + ev.feature_index;
    sums[idx] += ev.value;
    counts[idx] += 1;
  }
  for (int w = 0; w < t; ++w) {
    for (int f = 0; f < f_count; ++f) {
      size_t idx = static_cast<size_t>(w) * f_count + f;
      if (counts[idx] > 0) m.at(w, f) = sums[idx] / counts[idx];
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// cohort splitting

struct CohortSplit {
  std::vector<PatientRecord> train, val, test;
  uint64_t seed = 0;
};

struct SplitRatios {
  double train = 0.7, val = 0.1, test = 0.2;
};

// Deterministic patient-level split; largest-remainder apportionment keeps
// every part within one patient of its exact share.
inline CohortSplit split_cohort(const std::vector<PatientRecord>& cohort, SplitRatios ratios,
                                uint64_t seed) {
  if (cohort.size() < 3) throw ValidationError("cohort must have at least 3 patients to split");
  double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");

  size_t n = cohort.size();
  double shares[3] = {ratios.train * n, ratios.val * n, ratios.test * n};
  size_t counts[3];
  double rema[3];
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    counts[i] = static_cast<size_t>(shares[i]);
    rema[i] = shares[i] - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rema[i] > rema[best]) best = i;
    }
    counts[best] += 1;
    rema[best] = -1;
    ++assigned;
  }
  // all three parts must be non-empty
  while (counts[0] == 0 || counts[1] == 0 || counts[2] == 0) {
    int empty = counts[0] == 0 ? 0 : (counts[1] == 0 ? 1 : 2);
    int largest = 0;
    for (int i = 1; i < 3; ++i) {
      if (counts[i] > counts[largest]) largest = i;
    }
    counts[largest] -= 1;
    counts[empty] += 1;
  }

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  CohortSplit out;
  out.seed = seed;
  size_t pos = 0;
  for (size_t i = 0; i < counts[0]; ++i) out.train.push_back(cohort[order[pos++]]);
  for (size_t i = 0; i < counts[1]; ++i) out.val.push_back(cohort[order[pos++]]);
  for (size_t i = 0; i < counts[2]; ++i) out.test.push_back(cohort[order[pos++]]);
  return out;
}

}  // namespace emerge
