#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "skillstep/common.hpp"

namespace skillstep {

/// One logging event. Score fields hold -1 on rows without an evaluation.
struct MetricsRecord {
  int iteration = 0;
  int epoch = 0;
  float skill_loss = 0.0f;
  float prior_loss = 0.0f;
  float model_loss = 0.0f;
  float sg_loss = 0.0f;
  float total_loss = 0.0f;
  int goal_coverage = 0;
  float score_mean = -1.0f;
  float score_std = -1.0f;
  double wall_clock_s = 0.0;
};

inline const char* metrics_header() {
  return "iteration,epoch,skill_loss,prior_loss,model_loss,sg_loss,total_loss,"
         "goal_coverage,score_mean,score_std,wall_clock_s";
}

inline std::string format_metrics_row(const MetricsRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%.9g,%.9g,%.6f",
                r.iteration, r.epoch, static_cast<double>(r.skill_loss),
                static_cast<double>(r.prior_loss), static_cast<double>(r.model_loss),
                static_cast<double>(r.sg_loss), static_cast<double>(r.total_loss),
                r.goal_coverage, static_cast<double>(r.score_mean),
                static_cast<double>(r.score_std), r.wall_clock_s);
  return buf;
}

/// Rewrites the whole file; emission is idempotent for identical records.
inline void emit_metrics(const std::vector<MetricsRecord>& records,
                         const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("emit_metrics: cannot open " + path);
  os << metrics_header() << "\n";
  for (const MetricsRecord& r : records) os << format_metrics_row(r) << "\n";
  if (!os) throw DataError("emit_metrics: write failure on " + path);
}

}  // namespace skillstep
