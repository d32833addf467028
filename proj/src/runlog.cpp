#include "autoprog/runlog.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace autoprog {

namespace fs = std::filesystem;

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

std::string opt(const std::optional<double>& v) { return v ? format_g17(*v) : ""; }

std::vector<std::string> read_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::size_t leading_number(const std::string& line) { return static_cast<std::size_t>(std::stoull(line.substr(0, line.find(',')))); }

// Keeps rows for which keep(row index, line) holds.
void rewrite(const fs::path& p, const std::string& header,
             const std::function<bool(std::size_t, const std::string&)>& keep) {
  auto lines = read_lines(p);
  std::ofstream out(p, std::ios::trunc);
  out << header << '\n';
  std::size_t row = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    if (keep(row, lines[i])) out << lines[i] << '\n';
    ++row;
  }
}

}  // namespace

std::string spec_string(std::size_t n, std::size_t l, double learnable_ratio) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "n=%zu,l=%zu,u=%.2f", n, l, learnable_ratio);
  return buf;
}

std::string format_metrics(const MetricsRow& r) {
  return std::to_string(r.step) + "," + std::to_string(r.stage) + "," + quoted(r.spec) + "," + format_g17(r.loss) +
         "," + format_g17(r.flops_cum) + "," + fixed3(r.wall_ms_cum) + "," + opt(r.h_kappa) + "," + opt(r.h_zico) +
         "," + format_g17(r.t_proxy) + "," + (r.chosen ? "1" : "0");
}

std::string format_trace(const TraceRow& r) {
  return std::to_string(r.stage) + "," + std::to_string(r.candidate) + "," + quoted(r.spec) + "," +
         std::to_string(r.params) + "," + format_g17(r.eval_loss) + "," + format_g17(r.t_proxy) + "," +
         fixed3(r.wall_ms) + "," + format_g17(r.alpha) + "," + format_g17(r.score) + "," + (r.chosen ? "1" : "0");
}

std::string format_proxy(const ProxyRow& r) {
  return std::to_string(r.stage) + "," + std::to_string(r.candidate) + "," + format_g17(r.h_kappa) + "," +
         format_g17(r.h_zico) + "," + format_g17(r.t_proxy) + "," + format_g17(r.rank_score) + "," +
         (r.chosen ? "1" : "0");
}

RunLog::RunLog(const std::string& dir) : dir_(dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create run directory " + dir + ": " + ec.message());
  for (const auto& [file, header] : {std::pair{"metrics.csv", kMetricsHeader}, std::pair{"trace.csv", kTraceHeader},
                                     std::pair{"proxy.csv", kProxyHeader}}) {
    std::ofstream out(fs::path(dir) / file, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / file).string());
    out << header << '\n';
  }
  open_append();
}

RunLog::RunLog(const std::string& dir, Resume) : dir_(dir) {}

RunLog RunLog::resume(const std::string& dir, std::size_t step, std::size_t trace_rows, std::size_t proxy_rows) {
  RunLog log(dir, Resume{});
  const fs::path d(dir);
  if (!fs::exists(d / "metrics.csv")) throw std::runtime_error("no run log to resume in " + dir);
  rewrite(d / "metrics.csv", kMetricsHeader, [&](std::size_t, const std::string& line) { return leading_number(line) <= step; });
  rewrite(d / "trace.csv", kTraceHeader, [&](std::size_t row, const std::string&) { return row < trace_rows; });
  rewrite(d / "proxy.csv", kProxyHeader, [&](std::size_t row, const std::string&) { return row < proxy_rows; });
  log.open_append();
  if (step > 0) log.last_step_ = step;
  log.trace_rows_ = trace_rows;
  log.proxy_rows_ = proxy_rows;
  return log;
}

void RunLog::open_append() {
  const fs::path d(dir_);
  metrics_.open(d / "metrics.csv", std::ios::app);
  trace_.open(d / "trace.csv", std::ios::app);
  proxy_.open(d / "proxy.csv", std::ios::app);
  if (!metrics_ || !trace_ || !proxy_) throw std::runtime_error("cannot append to run log in " + dir_);
}

void RunLog::metrics(const MetricsRow& row) {
  if (last_step_ && row.step <= *last_step_) throw std::logic_error("run log steps must strictly increase");
  last_step_ = row.step;
  metrics_ << format_metrics(row) << '\n';
}

void RunLog::trace(const TraceRow& row) {
  trace_ << format_trace(row) << '\n';
  ++trace_rows_;
}

void RunLog::proxy(const ProxyRow& row) {
  proxy_ << format_proxy(row) << '\n';
  ++proxy_rows_;
}

void RunLog::flush() {
  metrics_.flush();
  trace_.flush();
  proxy_.flush();
}

void write_summary(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
}

std::map<std::string, std::string> read_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::map<std::string, std::string> out;
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

}  // namespace autoprog
