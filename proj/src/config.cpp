#include "autoprog/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "autoprog/rng.hpp"

namespace autoprog {

Mode parse_mode(const std::string& text) {
  if (text == "pretrain-auto") return Mode::PretrainAuto;
  if (text == "finetune-auto") return Mode::FinetuneAuto;
  if (text == "baseline") return Mode::Baseline;
  if (text == "proxy-report") return Mode::ProxyReport;
  if (text == "gradcheck") return Mode::Gradcheck;
  throw ConfigError("unknown mode '" + text + "'");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::PretrainAuto: return "pretrain-auto";
    case Mode::FinetuneAuto: return "finetune-auto";
    case Mode::Baseline: return "baseline";
    case Mode::ProxyReport: return "proxy-report";
    case Mode::Gradcheck: return "gradcheck";
  }
  return "?";
}

ViTConfig ExperimentConfig::model_config() const {
  ViTConfig c;
  c.kind = data.kind == DatasetKind::ClassificationBlobs ? ModelKind::Classifier : ModelKind::Denoiser;
  c.depth = depth;
  c.patch_grid = patch_grid;
  c.embed_dim = embed_dim;
  c.heads = heads;
  c.num_classes = data.classes;
  c.patch_size = patch_size;
  c.mlp_ratio = mlp_ratio;
  c.channels = data.channels;
  c.timesteps = timesteps;
  return c;
}

DatasetSpec ExperimentConfig::dataset_spec() const {
  DatasetSpec s = data;
  s.side = patch_grid * patch_size;
  return s;
}

ConfigErrors::ConfigErrors(std::vector<ConfigIssue> issues)
    : ConfigError([&] {
        std::string msg;
        for (const auto& i : issues) {
          if (!msg.empty()) msg += '\n';
          msg += i.line ? "line " + std::to_string(i.line) + ": " + i.message : i.message;
        }
        return msg;
      }()),
      issues_(std::move(issues)) {}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("not a number");
  return v;
}

std::uint64_t to_uint(const std::string& s) {
  if (s.empty() || s[0] == '-') throw std::invalid_argument("not a non-negative integer");
  std::size_t pos = 0;
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("not an integer");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("not a boolean");
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename T>
Field size_field(const std::string& key, T ExperimentConfig::*member) {
  return {key, [member](const ExperimentConfig& c) { return std::to_string(c.*member); },
          [member](ExperimentConfig& c, const std::string& v) { c.*member = static_cast<T>(to_uint(v)); }};
}

Field double_field(const std::string& key, double ExperimentConfig::*member) {
  return {key, [member](const ExperimentConfig& c) { return fmt_double(c.*member); },
          [member](ExperimentConfig& c, const std::string& v) { c.*member = to_double(v); }};
}

Field bool_field(const std::string& key, bool ExperimentConfig::*member) {
  return {key, [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member](ExperimentConfig& c, const std::string& v) { c.*member = to_bool(v); }};
}

Field string_field(const std::string& key, std::string ExperimentConfig::*member) {
  return {key, [member](const ExperimentConfig& c) { return c.*member; },
          [member](ExperimentConfig& c, const std::string& v) { c.*member = v; }};
}

template <typename T>
Field data_size(const std::string& key, T DatasetSpec::*member) {
  return {key, [member](const ExperimentConfig& c) { return std::to_string(c.data.*member); },
          [member](ExperimentConfig& c, const std::string& v) { c.data.*member = static_cast<T>(to_uint(v)); }};
}

Field data_double(const std::string& key, double DatasetSpec::*member) {
  return {key, [member](const ExperimentConfig& c) { return fmt_double(c.data.*member); },
          [member](ExperimentConfig& c, const std::string& v) { c.data.*member = to_double(v); }};
}

Field opt_double(const std::string& key, double OptimizerConfig::*member) {
  return {key, [member](const ExperimentConfig& c) { return fmt_double(c.optimizer.*member); },
          [member](ExperimentConfig& c, const std::string& v) { c.optimizer.*member = to_double(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"mode", [](const ExperimentConfig& c) { return to_string(c.mode); },
                 [](ExperimentConfig& c, const std::string& v) { c.mode = parse_mode(v); }});
    f.push_back(size_field("seed", &ExperimentConfig::seed));
    f.push_back(string_field("out_dir", &ExperimentConfig::out_dir));
    f.push_back({"dataset", [](const ExperimentConfig& c) { return to_string(c.data.kind); },
                 [](ExperimentConfig& c, const std::string& v) { c.data.kind = parse_dataset_kind(v); }});
    f.push_back(size_field("data_seed", &ExperimentConfig::data_seed));
    f.push_back(data_size("classes", &DatasetSpec::classes));
    f.push_back(data_size("channels", &DatasetSpec::channels));
    f.push_back(data_size("train_size", &DatasetSpec::train_size));
    f.push_back(data_size("eval_size", &DatasetSpec::eval_size));
    f.push_back(data_double("shift", &DatasetSpec::shift));
    f.push_back(data_double("pixel_noise", &DatasetSpec::pixel_noise));
    f.push_back(data_double("position_std", &DatasetSpec::position_std));
    f.push_back(data_double("radius", &DatasetSpec::radius));
    f.push_back(data_double("blob_width", &DatasetSpec::blob_width));
    f.push_back(size_field("depth", &ExperimentConfig::depth));
    f.push_back(size_field("patch_grid", &ExperimentConfig::patch_grid));
    f.push_back(size_field("embed_dim", &ExperimentConfig::embed_dim));
    f.push_back(size_field("heads", &ExperimentConfig::heads));
    f.push_back(size_field("patch_size", &ExperimentConfig::patch_size));
    f.push_back(size_field("mlp_ratio", &ExperimentConfig::mlp_ratio));
    f.push_back(size_field("timesteps", &ExperimentConfig::timesteps));
    f.push_back(double_field("beta_start", &ExperimentConfig::beta_start));
    f.push_back(double_field("beta_end", &ExperimentConfig::beta_end));
    f.push_back(size_field("steps", &ExperimentConfig::steps));
    f.push_back(size_field("stages", &ExperimentConfig::stages));
    f.push_back(size_field("batch_size", &ExperimentConfig::batch_size));
    f.push_back(double_field("s1", &ExperimentConfig::s1));
    f.push_back(size_field("ladder_steps", &ExperimentConfig::ladder_steps));
    f.push_back(bool_field("search_depth", &ExperimentConfig::search_depth));
    f.push_back(bool_field("search_resolution", &ExperimentConfig::search_resolution));
    f.push_back(size_field("search_steps", &ExperimentConfig::search_steps));
    f.push_back(size_field("eval_samples", &ExperimentConfig::eval_samples));
    f.push_back({"growth", [](const ExperimentConfig& c) { return to_string(c.growth); },
                 [](ExperimentConfig& c, const std::string& v) { c.growth = parse_growth_kind(v); }});
    f.push_back(double_field("ema_momentum", &ExperimentConfig::ema_momentum));
    f.push_back({"optimizer",
                 [](const ExperimentConfig& c) {
                   return std::string(c.optimizer.kind == OptimizerKind::AdamW ? "adamw" : "sgd");
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "adamw") c.optimizer.kind = OptimizerKind::AdamW;
                   else if (v == "sgd") c.optimizer.kind = OptimizerKind::Sgd;
                   else throw std::invalid_argument("optimizer must be adamw or sgd");
                 }});
    f.push_back(opt_double("lr", &OptimizerConfig::lr));
    f.push_back(opt_double("beta1", &OptimizerConfig::beta1));
    f.push_back(opt_double("beta2", &OptimizerConfig::beta2));
    f.push_back(opt_double("adam_eps", &OptimizerConfig::eps));
    f.push_back(opt_double("momentum", &OptimizerConfig::momentum));
    f.push_back(opt_double("weight_decay", &OptimizerConfig::weight_decay));
    f.push_back({"lr_schedule",
                 [](const ExperimentConfig& c) {
                   return std::string(c.optimizer.schedule == LrSchedule::Cosine ? "cosine" : "constant");
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "cosine") c.optimizer.schedule = LrSchedule::Cosine;
                   else if (v == "constant") c.optimizer.schedule = LrSchedule::Constant;
                   else throw std::invalid_argument("lr_schedule must be cosine or constant");
                 }});
    f.push_back({"warmup_steps", [](const ExperimentConfig& c) { return std::to_string(c.optimizer.warmup_steps); },
                 [](ExperimentConfig& c, const std::string& v) { c.optimizer.warmup_steps = to_uint(v); }});
    f.push_back(bool_field("adareg", &ExperimentConfig::adareg));
    f.push_back(double_field("drop_path_min", &ExperimentConfig::drop_path_min));
    f.push_back(double_field("drop_path_max", &ExperimentConfig::drop_path_max));
    f.push_back(double_field("noise_aug_min", &ExperimentConfig::noise_aug_min));
    f.push_back(double_field("noise_aug_max", &ExperimentConfig::noise_aug_max));
    f.push_back(bool_field("sid_enabled", &ExperimentConfig::sid_enabled));
    f.push_back(string_field("pretrained", &ExperimentConfig::pretrained));
    f.push_back(size_field("proxy_batch", &ExperimentConfig::proxy_batch));
    f.push_back(size_field("proxy_batches", &ExperimentConfig::proxy_batches));
    f.push_back(size_field("checkpoint_every", &ExperimentConfig::checkpoint_every));
    f.push_back(bool_field("log_wall_time", &ExperimentConfig::log_wall_time));
    f.push_back(string_field("baseline_summary", &ExperimentConfig::baseline_summary));
    f.push_back(size_field("gradcheck_models", &ExperimentConfig::gradcheck_models));
    f.push_back(size_field("gradcheck_coords", &ExperimentConfig::gradcheck_coords));
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void set_value(ExperimentConfig& c, const std::string& key, const std::string& value, std::size_t line,
               std::vector<ConfigIssue>& issues) {
  const Field* f = find_field(key);
  if (f == nullptr) {
    issues.push_back({line, "unknown key '" + key + "'"});
    return;
  }
  try {
    f->set(c, value);
  } catch (const std::exception& e) {
    issues.push_back({line, "bad value for '" + key + "': '" + value + "' (" + e.what() + ")"});
  }
}

}  // namespace

bool ExperimentConfig::operator==(const ExperimentConfig& o) const { return to_text(*this) == to_text(o); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

std::string to_text(const ExperimentConfig& c) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(c) + "\n";
  return out;
}

std::vector<ConfigIssue> validate(const ExperimentConfig& c) {
  std::vector<ConfigIssue> issues;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) issues.push_back({0, msg});
  };
  need(c.stages >= 1, "stages must be >= 1");
  need(c.steps >= 1, "steps must be >= 1");
  need(c.stages == 0 || c.steps % c.stages == 0,
       "steps (" + std::to_string(c.steps) + ") must be divisible by stages (" + std::to_string(c.stages) + ")");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.s1 > 0.0 && c.s1 <= 1.0, "s1 must lie in (0, 1]");
  need(c.depth >= 1 && c.patch_grid >= 1 && c.patch_size >= 1, "depth, patch_grid and patch_size must be >= 1");
  need(c.heads >= 1 && c.embed_dim % std::max<std::size_t>(c.heads, 1) == 0, "embed_dim must be divisible by heads");
  need(c.data.kind == DatasetKind::ClassificationBlobs || c.embed_dim % 2 == 0, "denoiser embed_dim must be even");
  need(c.data.classes >= 1 && c.data.channels >= 1, "classes and channels must be >= 1");
  need(c.data.train_size >= 1 && c.data.eval_size >= 1, "train_size and eval_size must be >= 1");
  need(c.eval_samples >= 1, "eval_samples must be >= 1");
  need(c.ema_momentum > 0.0 && c.ema_momentum < 1.0, "ema_momentum must lie in (0, 1)");
  need(c.optimizer.lr > 0.0, "lr must be positive");
  need(c.drop_path_min <= c.drop_path_max, "drop_path_min must not exceed drop_path_max");
  need(c.noise_aug_min <= c.noise_aug_max, "noise_aug_min must not exceed noise_aug_max");
  need(c.drop_path_min >= 0.0 && c.drop_path_max < 1.0, "drop path probabilities must lie in [0, 1)");
  need(c.timesteps >= 1, "timesteps must be >= 1");
  need(0.0 < c.beta_start && c.beta_start <= c.beta_end && c.beta_end < 1.0, "need 0 < beta_start <= beta_end < 1");
  need(c.proxy_batch >= 2, "proxy_batch must be >= 2");
  need(c.proxy_batches >= 1, "proxy_batches must be >= 1");
  return issues;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::vector<ConfigIssue> issues;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      issues.push_back({line, "expected 'key = value'"});
      continue;
    }
    set_value(c, trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line, issues);
  }
  auto more = validate(c);
  issues.insert(issues.end(), more.begin(), more.end());
  if (!issues.empty()) throw ConfigErrors(std::move(issues));
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_overrides(ExperimentConfig& c, const std::vector<std::string>& overrides) {
  std::vector<ConfigIssue> issues;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      issues.push_back({0, "override '" + o + "' is not key=value"});
      continue;
    }
    set_value(c, trim(o.substr(0, eq)), trim(o.substr(eq + 1)), 0, issues);
  }
  auto more = validate(c);
  issues.insert(issues.end(), more.begin(), more.end());
  if (!issues.empty()) throw ConfigErrors(std::move(issues));
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  ExperimentConfig located = c;
  located.out_dir.clear();
  return fnv1a(to_text(located));
}

}  // namespace autoprog
