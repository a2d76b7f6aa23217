#include "promptforge/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <thread>

namespace pf::metrics {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

unsigned thread_limit() {
  unsigned n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("PROMPTFORGE_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1 && static_cast<unsigned>(cap) < n) n = static_cast<unsigned>(cap);
  }
  return n;
}

// Runs fn(i) for i in [0, count) across workers; fn must write only results
// slotted by i.
void parallel_for(std::int64_t count, unsigned threads, const std::function<void(std::int64_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  const unsigned workers = std::min<unsigned>(threads, static_cast<unsigned>(count));
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (std::int64_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

double harmonic_mean(double base_acc, double new_acc) {
  if (base_acc < 0.0 || new_acc < 0.0) {
    throw std::invalid_argument("harmonic_mean: accuracies must be non-negative");
  }
  if (base_acc + new_acc <= 0.0) {
    throw std::invalid_argument("harmonic_mean: undefined when both accuracies are zero");
  }
  return 2.0 * base_acc * new_acc / (base_acc + new_acc);
}

EvalReport evaluate(const engine::Model& model, const data::SyntheticTask& task, std::int64_t N) {
  if (task.test_base.empty() || task.test_novel.empty()) {
    throw std::invalid_argument("evaluate: task has an empty test split");
  }
  std::vector<const data::Sample*> episodes;
  for (const auto& s : task.test_base) episodes.push_back(&s);
  for (const auto& s : task.test_novel) episodes.push_back(&s);
  const std::int64_t total = static_cast<std::int64_t>(episodes.size());
  const std::int64_t n_base = static_cast<std::int64_t>(task.test_base.size());

  // predictions[i][n] = argmax at iteration n for episode i.
  std::vector<std::vector<std::int64_t>> predictions(static_cast<std::size_t>(total));
  parallel_for(total, thread_limit(), [&](std::int64_t i) {
    const data::Sample& s = *episodes[static_cast<std::size_t>(i)];
    engine::EpisodeTrace trace = engine::forward_episode(s.image, task.class_tokens, model, N);
    auto& preds = predictions[static_cast<std::size_t>(i)];
    preds.reserve(trace.states.size());
    for (const auto& st : trace.states) preds.push_back(st.predicted());
  });

  EvalReport report;
  report.episodes = total;
  std::int64_t base_hits = 0, novel_hits = 0;
  std::vector<std::int64_t> iter_hits(static_cast<std::size_t>(N + 1), 0);
  for (std::int64_t i = 0; i < total; ++i) {
    const std::int64_t label = episodes[static_cast<std::size_t>(i)]->label;
    const auto& preds = predictions[static_cast<std::size_t>(i)];
    if (preds.back() == label) (i < n_base ? base_hits : novel_hits)++;
    for (std::int64_t n = 0; n <= N; ++n) {
      if (preds[static_cast<std::size_t>(n)] == label) iter_hits[static_cast<std::size_t>(n)]++;
    }
  }
  report.base_acc = 100.0 * static_cast<double>(base_hits) / static_cast<double>(task.test_base.size());
  report.new_acc = 100.0 * static_cast<double>(novel_hits) / static_cast<double>(task.test_novel.size());
  report.hm = (report.base_acc + report.new_acc > 0.0) ? harmonic_mean(report.base_acc, report.new_acc) : 0.0;
  for (std::int64_t n = 0; n <= N; ++n) {
    report.per_iter_acc.push_back(100.0 * static_cast<double>(iter_hits[static_cast<std::size_t>(n)]) /
                                  static_cast<double>(total));
  }
  return report;
}

std::vector<TraceRow> collect_traces(const engine::Model& model, const data::SyntheticTask& task,
                                     std::int64_t N, std::int64_t episodes) {
  std::vector<const data::Sample*> all;
  for (const auto& s : task.test_base) all.push_back(&s);
  for (const auto& s : task.test_novel) all.push_back(&s);
  episodes = std::min<std::int64_t>(episodes, static_cast<std::int64_t>(all.size()));
  std::vector<TraceRow> rows;
  for (std::int64_t e = 0; e < episodes; ++e) {
    engine::EpisodeTrace trace = engine::forward_episode(all[static_cast<std::size_t>(e)]->image,
                                                         task.class_tokens, model, N);
    for (const auto& st : trace.states) {
      for (std::int64_t k = 0; k < st.probs.probs.size(); ++k) {
        rows.push_back(TraceRow{e, st.n, k, st.probs.probs.at(k)});
      }
    }
  }
  return rows;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_report_csv: cannot open '" + path + "'");
  out << "base_acc,new_acc,hm,episodes";
  for (std::size_t n = 0; n < report.per_iter_acc.size(); ++n) out << ",acc_n" << n;
  out << "\n";
  out << fmt("%.2f", report.base_acc) << "," << fmt("%.2f", report.new_acc) << "," << fmt("%.2f", report.hm)
      << "," << report.episodes;
  for (double acc : report.per_iter_acc) out << "," << fmt("%.2f", acc);
  out << "\n";
}

void write_history_csv(const engine::TrainHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_history_csv: cannot open '" + path + "'");
  out << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < history.epoch_mean_loss.size(); ++e) {
    out << e << "," << fmt("%.6g", history.epoch_mean_loss[e]) << "\n";
  }
}

void write_trace_csv(const std::vector<TraceRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open '" + path + "'");
  // 12 significant digits: per-(episode, n) rows must still sum to 1 within
  // 1e-9 after printing, which 6 digits cannot guarantee.
  out << "episode,n,class,prob\n";
  for (const TraceRow& r : rows) {
    out << r.episode << "," << r.n << "," << r.cls << "," << fmt("%.12g", r.prob) << "\n";
  }
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_sweep_csv: cannot open '" + path + "'");
  out << "param,value,base_acc,new_acc,hm\n";
  for (const SweepRow& r : rows) {
    out << r.param << "," << fmt("%.6g", r.value) << "," << fmt("%.2f", r.report.base_acc) << ","
        << fmt("%.2f", r.report.new_acc) << "," << fmt("%.2f", r.report.hm) << "\n";
  }
}

}  // namespace pf::metrics
