#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptforge/data.hpp"
#include "promptforge/engine.hpp"

namespace pf::metrics {

struct EvalReport {
  double base_acc = 0.0;               // percent
  double new_acc = 0.0;                // percent
  double hm = 0.0;                     // percent
  std::vector<double> per_iter_acc;    // n = 0..N, over all test episodes
  std::int64_t episodes = 0;
};

// 2*base*new / (base + new). Both operands must be non-negative and not both
// zero.
double harmonic_mean(double base_acc, double new_acc);

// Accuracy of the final iteration's argmax per split, plus per-iteration
// accuracies over the combined test set. Episodes are independent and fan out
// across threads; results merge in episode order, so the report does not
// depend on the thread count. PROMPTFORGE_THREADS caps the parallelism.
EvalReport evaluate(const engine::Model& model, const data::SyntheticTask& task, std::int64_t N);

// Per-episode, per-iteration class probabilities for the first `episodes`
// test samples (base split first).
struct TraceRow {
  std::int64_t episode, n, cls;
  double prob;
};
std::vector<TraceRow> collect_traces(const engine::Model& model, const data::SyntheticTask& task,
                                     std::int64_t N, std::int64_t episodes);

// CSV emitters: comma-separated, LF endings, '.' decimals; accuracies to two
// decimals, other reals to six significant digits.
void write_report_csv(const EvalReport& report, const std::string& path);
void write_history_csv(const engine::TrainHistory& history, const std::string& path);
void write_trace_csv(const std::vector<TraceRow>& rows, const std::string& path);

struct SweepRow {
  std::string param;
  double value;
  EvalReport report;
};
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace pf::metrics
