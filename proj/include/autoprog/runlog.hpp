#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "autoprog/space.hpp"

namespace autoprog {

inline constexpr const char* kMetricsHeader = "step,stage,spec,loss,flops_cum,wall_ms_cum,h_kappa,h_zico,t_proxy,chosen";
inline constexpr const char* kTraceHeader = "stage,candidate,spec,params,eval_loss,t_proxy,wall_ms,alpha,score,chosen";
inline constexpr const char* kProxyHeader = "stage,candidate,h_kappa,h_zico,t_proxy,rank_score,chosen";

struct MetricsRow {
  std::size_t step = 0;
  std::size_t stage = 0;
  std::string spec;
  double loss = 0.0;
  double flops_cum = 0.0;
  double wall_ms_cum = 0.0;
  std::optional<double> h_kappa;
  std::optional<double> h_zico;
  double t_proxy = 0.0;
  bool chosen = true;
};

struct TraceRow {
  std::size_t stage = 0;
  std::size_t candidate = 0;
  std::string spec;
  std::size_t params = 0;
  double eval_loss = 0.0;
  double t_proxy = 0.0;
  double wall_ms = 0.0;
  double alpha = 0.0;
  double score = 0.0;
  bool chosen = false;
};

struct ProxyRow {
  std::size_t stage = 0;
  std::size_t candidate = 0;
  double h_kappa = 0.0;
  double h_zico = 0.0;
  double t_proxy = 0.0;
  double rank_score = 0.0;
  bool chosen = false;
};

// "n=4,l=3,u=1.00"
std::string spec_string(std::size_t n, std::size_t l, double learnable_ratio);

std::string format_metrics(const MetricsRow& row);
std::string format_trace(const TraceRow& row);
std::string format_proxy(const ProxyRow& row);

// Append-only CSV logs under one run directory.
class RunLog {
 public:
  // Creates the directory and writes header-only files.
  explicit RunLog(const std::string& dir);
  // Reopens for a resumed run, keeping metrics rows up to `step` and the
  // first trace/proxy rows counted at checkpoint time.
  static RunLog resume(const std::string& dir, std::size_t step, std::size_t trace_rows, std::size_t proxy_rows);

  void metrics(const MetricsRow& row);
  void trace(const TraceRow& row);
  void proxy(const ProxyRow& row);
  void flush();

  const std::string& dir() const { return dir_; }
  std::optional<std::size_t> last_step() const { return last_step_; }
  std::size_t trace_rows() const { return trace_rows_; }
  std::size_t proxy_rows() const { return proxy_rows_; }

 private:
  struct Resume {};
  RunLog(const std::string& dir, Resume);
  void open_append();

  std::string dir_;
  std::ofstream metrics_;
  std::ofstream trace_;
  std::ofstream proxy_;
  std::optional<std::size_t> last_step_;
  std::size_t trace_rows_ = 0;
  std::size_t proxy_rows_ = 0;
};

// Writes key = value lines in insertion order.
void write_summary(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries);
std::map<std::string, std::string> read_summary(const std::string& path);

std::string format_g17(double v);

}  // namespace autoprog
