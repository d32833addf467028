#include "autoprog/runs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "autoprog/checkpoint.hpp"
#include "autoprog/errors.hpp"
#include "autoprog/flops.hpp"
#include "autoprog/growth.hpp"
#include "autoprog/runlog.hpp"
#include "autoprog/selection.hpp"
#include "autoprog/supernet.hpp"

namespace autoprog {

namespace fs = std::filesystem;

Task make_task(const ExperimentConfig& config, const Dataset& data) {
  Task task;
  task.kind = config.model_config().kind;
  task.data = &data;
  task.schedule = NoiseSchedule(config.timesteps, config.beta_start, config.beta_end);
  return task;
}

NamePredicate unfreeze_mask(const ViTConfig& config, std::size_t learnable_blocks) {
  if (learnable_blocks == 0 || learnable_blocks > config.depth) {
    throw std::invalid_argument("learnable block count outside 1..depth");
  }
  if (learnable_blocks == config.depth) return [](const std::string&) { return true; };
  const std::size_t first = config.depth - learnable_blocks;
  return [first](const std::string& name) {
    if (auto b = block_of(name)) return *b >= first;
    return name.rfind("norm.", 0) == 0 || name.rfind("head.", 0) == 0 || name.rfind("sid.", 0) == 0;
  };
}

VisionTransformer with_sid(VisionTransformer model, std::size_t stages) {
  if (stages == 0) throw std::invalid_argument("SID needs at least one stage");
  model.mutable_config().sid_stages = stages;
  Parameter p;
  p.value = Tensor({stages, model.config().embed_dim});
  p.value.set_requires_grad(true);
  p.m = Tensor(p.value.shape());
  p.v = Tensor(p.value.shape());
  model.params()["sid.table"] = std::move(p);
  return model;
}

std::vector<CandidateProxy> evaluate_proxies(const VisionTransformer& model, const Task& task,
                                             const ExperimentConfig& config, const std::vector<SubNetworkSpec>& candidates,
                                             std::size_t stage) {
  const ViTConfig& mc = model.config();
  const auto everything = [](const std::string&) { return true; };
  ForwardOptions opts;
  if (mc.sid_stages > 0) opts.sid_stage = stage - 1;
  std::vector<CandidateProxy> out;
  for (const auto& c : candidates) {
    VisionTransformer m = model;
    const auto mask = unfreeze_mask(mc, c.second);
    m.set_learnable(mask);
    std::vector<ad::GradientMap> all;
    double kappa = 0.0;
    for (std::size_t b = 0; b < config.proxy_batches; ++b) {
      const auto rows = sample_batch(task.data->train_x.dim(0), config.proxy_batch, Rng(config.seed, "proxy").derive(stage).derive(b));
      auto g = per_sample_task_gradients(m, task, rows, c.n, opts, Rng(config.seed, "proxy-noise").derive(stage).derive(b));
      kappa += condition_number(empirical_ntk(g, everything));
      for (auto& x : g) all.push_back(std::move(x));
    }
    CandidateProxy cp;
    cp.spec = c;
    cp.scores.h_kappa = kappa / static_cast<double>(config.proxy_batches);
    cp.scores.h_zico = zico(all, everything);
    cp.scores.t = flops_account(mc, config.batch_size, c.n, mc.depth, mask).train();
    cp.cost = static_cast<double>(all.size()) * flops_account(mc, 1, c.n, mc.depth, mask).train();
    out.push_back(cp);
  }
  std::vector<ProxyScores> scores;
  for (const auto& cp : out) scores.push_back(cp.scores);
  const auto r = rank_scores(scores);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank_score = r[i];
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream in(s);
  for (std::string part; std::getline(in, part, sep);) out.push_back(part);
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string opt_text(const std::optional<double>& v) { return v ? format_g17(*v) : ""; }
std::optional<double> opt_parse(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

ViTConfig at_spec(ViTConfig c, const SubNetworkSpec& s) {
  c.depth = s.second;
  c.patch_grid = s.n;
  return c;
}

std::uint64_t growth_seed(std::uint64_t seed, std::size_t stage) { return Rng(seed, "grow-stage").derive(stage).next_u64(); }

// Bookkeeping shared by every training loop: data, step counter, cumulative
// cost, run log and checkpoints.
class Session {
 public:
  Session(const ExperimentConfig& config, const RunOptions& options)
      : cfg_(config), ro_(options), data_(make_dataset(config.dataset_spec(), config.data_seed)), task_(make_task(config, data_)) {}

  // Opens the run log; returns the checkpoint when resuming.
  std::optional<Checkpoint> begin() {
    const fs::path dir(cfg_.out_dir);
    if (!ro_.resume) {
      log_.emplace(cfg_.out_dir);
      std::ofstream(dir / "config.txt", std::ios::trunc) << to_text(cfg_);
      return std::nullopt;
    }
    Checkpoint ck = load_checkpoint((dir / "checkpoint.bin").string());
    const auto& h = ck.header;
    if (h.at("mode") != to_string(cfg_.mode)) throw CheckpointError("checkpoint was written by mode " + h.at("mode"));
    if (h.at("config_hash") != hex64(config_hash(cfg_))) {
      std::cerr << "warning: checkpoint config hash differs from the current config\n";
    }
    step_ = std::stoull(h.at("step"));
    flops_ = std::stod(h.at("flops_cum"));
    wall_ = std::stod(h.at("wall_ms_cum"));
    schedule_ = split(h.at("schedule"), ';');
    log_.emplace(RunLog::resume(cfg_.out_dir, step_, std::stoull(h.at("trace_rows")), std::stoull(h.at("proxy_rows"))));
    return ck;
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  const Task& task() const { return task_; }
  const Dataset& data() const { return data_; }
  RunLog& log() { return *log_; }
  std::size_t step() const { return step_; }
  std::vector<std::string>& schedule() { return schedule_; }
  void add_cost(double flops, double wall_ms) {
    flops_ += flops;
    wall_ += wall_ms;
  }

  double elapsed_ms(Clock::time_point t0) const {
    if (!cfg_.log_wall_time) return 0.0;
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }

  std::size_t stage_of_step() const { return step_ / cfg_.steps_per_stage() + 1; }

  // One optimizer update at the current step.
  double train(VisionTransformer& model, std::size_t stage, std::size_t grid, ForwardOptions opts, MomentumNetwork* mn) {
    StepInput in;
    in.rows = sample_batch(data_.train_x.dim(0), cfg_.batch_size, Rng(cfg_.seed, "batch").derive(step_));
    in.grid = grid;
    in.rng = Rng(cfg_.seed, "noise").derive(step_);
    Rng drop(cfg_.seed, "drop");
    drop = drop.derive(step_);
    if (cfg_.adareg) {
      const double r = cfg_.stages > 1 ? static_cast<double>(stage - 1) / static_cast<double>(cfg_.stages - 1) : 1.0;
      opts.drop_path = adaptive_regularization(r, cfg_.drop_path_min, cfg_.drop_path_max);
      opts.drop_rng = &drop;
      in.noise_aug = adaptive_regularization(r, cfg_.noise_aug_min, cfg_.noise_aug_max);
    }
    in.opts = opts;
    const double lr = learning_rate(cfg_.optimizer, step_, cfg_.steps);
    const double loss = train_step(model, task_, in, cfg_.optimizer, lr);
    if (mn != nullptr) momentum_update(*mn, model);
    return loss;
  }

  void record(std::size_t stage, const std::string& spec, double loss, double step_flops, double wall_ms, bool chosen,
              std::optional<double> h_kappa = std::nullopt, std::optional<double> h_zico = std::nullopt) {
    ++step_;
    add_cost(step_flops, wall_ms);
    MetricsRow row;
    row.step = step_;
    row.stage = stage;
    row.spec = spec;
    row.loss = loss;
    row.flops_cum = flops_;
    row.wall_ms_cum = wall_;
    row.h_kappa = h_kappa;
    row.h_zico = h_zico;
    row.t_proxy = step_flops;
    row.chosen = chosen;
    log_->metrics(row);
  }

  // Checkpoints when due. Returns true when the run should stop here.
  bool after_step(const std::function<void()>& save) {
    if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0) save();
    return ro_.stop_after_step && step_ >= *ro_.stop_after_step;
  }

  void save(const VisionTransformer& model, const MomentumNetwork* mn, std::map<std::string, std::string> header) {
    log_->flush();
    header["mode"] = to_string(cfg_.mode);
    header["seed"] = std::to_string(cfg_.seed);
    header["config_hash"] = hex64(config_hash(cfg_));
    header["step"] = std::to_string(step_);
    header["flops_cum"] = format_g17(flops_);
    header["wall_ms_cum"] = format_g17(wall_);
    header["schedule"] = join(schedule_, ";");
    header["trace_rows"] = std::to_string(log_->trace_rows());
    header["proxy_rows"] = std::to_string(log_->proxy_rows());
    header["rng"] = "streams derived from seed and step";
    std::map<std::string, Tensor> extra;
    if (mn != nullptr) {
      for (const auto& [name, t] : mn->shadow) extra.emplace("ema/" + name, t);
    }
    save_checkpoint((fs::path(cfg_.out_dir) / "checkpoint.bin").string(), model, header, extra);
  }

  RunResult interrupted(const VisionTransformer& model) {
    log_->flush();
    RunResult r;
    r.model = model;
    r.steps = step_;
    r.total_flops = flops_;
    r.wall_ms = wall_;
    r.schedule = schedule_;
    return r;
  }

  RunResult finish(const VisionTransformer& model, const ForwardOptions& opts) {
    log_->flush();
    RunResult r = interrupted(model);
    r.completed = true;
    r.final_loss = evaluate(model, task_, data_.eval_x, data_.eval_y, model.config().patch_grid, opts,
                            Rng(cfg_.data_seed, "final-eval"));
    std::vector<std::pair<std::string, std::string>> entries = {
        {"mode", to_string(cfg_.mode)},
        {"seed", std::to_string(cfg_.seed)},
        {"config_hash", hex64(config_hash(cfg_))},
        {"steps", std::to_string(step_)},
        {"final_loss", format_g17(r.final_loss)},
        {"total_flops", format_g17(r.total_flops)},
        {"wall_ms", format_g17(r.wall_ms)},
        {"schedule", join(r.schedule, ";")},
    };
    if (!cfg_.baseline_summary.empty()) {
      const auto base = read_summary(cfg_.baseline_summary);
      const double bf = std::stod(base.at("total_flops")), bl = std::stod(base.at("final_loss"));
      entries.push_back({"baseline_total_flops", format_g17(bf)});
      entries.push_back({"baseline_final_loss", format_g17(bl)});
      entries.push_back({"speedup", format_g17(bf / r.total_flops)});
      entries.push_back({"loss_ratio", format_g17(r.final_loss / bl)});
    }
    write_summary((fs::path(cfg_.out_dir) / "summary.txt").string(), entries);
    return r;
  }

  void stage_event(std::size_t stage, bool begin, const VisionTransformer& model, const ForwardOptions& opts,
                   std::size_t grid) const {
    if (!ro_.on_stage) return;
    StageEvent e;
    e.stage = stage;
    e.begin = begin;
    e.model = &model;
    e.opts = opts;
    e.grid = grid;
    ro_.on_stage(e);
  }

 private:
  ExperimentConfig cfg_;
  RunOptions ro_;
  Dataset data_;
  Task task_;
  std::optional<RunLog> log_;
  std::size_t step_ = 0;
  double flops_ = 0.0;
  double wall_ = 0.0;
  std::vector<std::string> schedule_;
};

VisionTransformer starting_model(const ExperimentConfig& cfg, const RunOptions& ro, bool require_pretrained) {
  std::optional<VisionTransformer> m;
  if (ro.pretrained != nullptr) {
    m = *ro.pretrained;
  } else if (!cfg.pretrained.empty()) {
    m = load_checkpoint(cfg.pretrained).model;
  }
  if (!m) {
    if (require_pretrained) throw ConfigError("fine-tuning needs a pretrained checkpoint (key pretrained)");
    return build_vit(cfg.model_config(), cfg.seed);
  }
  if (m->config().kind != cfg.model_config().kind) throw ConfigError("pretrained model kind does not match the dataset");
  if (m->config().sid_stages > 0) {
    m->mutable_config().sid_stages = 0;
    m->params().erase("sid.table");
  }
  m->reset_optimizer_state();
  m->unfreeze_all();
  return *m;
}

}  // namespace

RunResult run_baseline(const ExperimentConfig& cfg, const RunOptions& ro) {
  Session s(cfg, ro);
  auto ck = s.begin();
  VisionTransformer model = ck ? ck->model : starting_model(cfg, ro, false);
  const ViTConfig& mc = model.config();
  const double step_flops = flops_account(mc, cfg.batch_size, mc.patch_grid, mc.depth, all_learnable()).train();
  const std::string spec = spec_string(mc.patch_grid, mc.depth, 1.0);
  if (!ck) s.schedule().push_back(spec);
  while (s.step() < cfg.steps) {
    const auto t0 = Clock::now();
    const std::size_t k = s.stage_of_step();
    const double loss = s.train(model, k, mc.patch_grid, {}, nullptr);
    s.record(k, spec, loss, step_flops, s.elapsed_ms(t0), true);
    if (s.after_step([&] { s.save(model, nullptr, {{"phase", "train"}, {"stage", std::to_string(k)}}); })) {
      return s.interrupted(model);
    }
  }
  return s.finish(model, {});
}

RunResult run_autoprog_one(const ExperimentConfig& cfg, const RunOptions& ro) {
  Session s(cfg, ro);
  auto ck = s.begin();
  const ViTConfig full = cfg.model_config();
  const GrowthSpace space = build_growth_space(
      {cfg.s1, cfg.stages, cfg.steps, cfg.ladder_steps, cfg.search_resolution, cfg.search_depth}, full.patch_grid, full.depth);
  const std::size_t tau = space.steps_per_stage;
  const std::size_t epoch_steps = (cfg.data.train_size + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t search_steps = std::min(cfg.search_steps ? cfg.search_steps : 2 * epoch_steps, tau);
  const bool ema = cfg.growth == GrowthKind::MoGrow;

  VisionTransformer model{full};
  std::optional<ElasticSupernet> net;
  std::optional<MomentumNetwork> mn;
  SubNetworkSpec cur = space.smallest(), prev = space.smallest();
  std::string phase = "train";
  std::size_t start_stage = 1;
  if (ck) {
    const auto& h = ck->header;
    phase = h.at("phase");
    start_stage = std::stoull(h.at("stage"));
    cur = space.spec(std::stoull(h.at("cur_n_index")), std::stoull(h.at("cur_second_index")));
    prev = space.spec(std::stoull(h.at("prev_n_index")), std::stoull(h.at("prev_second_index")));
    if (ema) {
      MomentumNetwork m;
      m.config = ck->model.config();
      m.momentum = cfg.ema_momentum;
      for (auto& [name, t] : ck->extra) {
        if (name.rfind("ema/", 0) == 0) m.shadow.emplace(name.substr(4), t);
      }
      mn = std::move(m);
    }
    if (phase == "search") {
      net.emplace(ck->model, representative_blocks(cfg.growth, prev.second, ck->model.config().depth),
                  stage_candidates(space, prev, start_stage));
    } else {
      model = ck->model;
    }
  }

  auto save = [&](std::size_t k) {
    std::map<std::string, std::string> h = {
        {"phase", phase},
        {"stage", std::to_string(k)},
        {"cur_n_index", std::to_string(cur.n_index)},
        {"cur_second_index", std::to_string(cur.second_index)},
        {"prev_n_index", std::to_string(prev.n_index)},
        {"prev_second_index", std::to_string(prev.second_index)},
    };
    s.save(phase == "search" ? net->store() : model, mn ? &*mn : nullptr, h);
  };
  auto spec_text = [](const SubNetworkSpec& sp) { return spec_string(sp.n, sp.second, 1.0); };

  for (std::size_t k = start_stage; k <= cfg.stages; ++k) {
    const std::size_t stage_begin = (k - 1) * tau, stage_end = k * tau;
    const bool resumed_here = ck && k == start_stage;
    if (!resumed_here) {
      const auto cands = stage_candidates(space, cur, k);
      if (k == 1) {
        cur = *std::min_element(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
          return std::pair(a.n_index, a.second_index) < std::pair(b.n_index, b.second_index);
        });
        model = build_vit(at_spec(full, cur), cfg.seed);
        if (ema) mn = make_momentum_network(model, cfg.ema_momentum);
      }
      if (cands.size() > 1) {
        prev = cur;
        net.emplace(build_supernet(model, cands, cfg.growth, mn ? &*mn : nullptr, growth_seed(cfg.seed, k)));
        if (ema) mn = make_momentum_network(net->store(), cfg.ema_momentum);
        phase = "search";
      } else {
        const SubNetworkSpec target = cands.front();
        if (!(target == cur)) {
          const ViTConfig tc = at_spec(model.config(), target);
          model = ema ? mogrow(*mn, model, tc, growth_seed(cfg.seed, k)) : grow(model, tc, cfg.growth, growth_seed(cfg.seed, k));
          if (ema) mn = make_momentum_network(model, cfg.ema_momentum);
          cur = target;
        }
        phase = "train";
        s.schedule().push_back(spec_text(cur));
        s.stage_event(k, true, model, {}, cur.n);
      }
    }

    if (phase == "search") {
      while (s.step() < stage_begin + search_steps) {
        const auto t0 = Clock::now();
        Rng pick = Rng(cfg.seed, "sample").derive(s.step());
        const SubNetworkSpec sp = net->sample(pick);
        const double loss = s.train(net->store(), k, sp.n, net->options(sp), mn ? &*mn : nullptr);
        const double f = flops_account(net->store().config(), cfg.batch_size, sp.n, sp.second, all_learnable()).train();
        s.record(k, spec_text(sp), loss, f, s.elapsed_ms(t0), false);
        if (s.after_step([&] { save(k); })) return s.interrupted(net->store());
      }
      // Score every candidate on the same fixed training subset.
      const std::size_t ne = std::min(cfg.eval_samples, s.data().train_x.dim(0));
      std::vector<std::size_t> rows(ne);
      for (std::size_t i = 0; i < ne; ++i) rows[i] = i;
      const Tensor ex = gather_rows(s.data().train_x, rows);
      const auto ey = gather_labels(s.data().train_y, rows);
      const auto& cands = net->candidates();
      std::vector<CandidateResult> results;
      std::vector<double> walls;
      for (const auto& c : cands) {
        const auto t0 = Clock::now();
        CandidateResult r;
        r.loss = evaluate(net->store(), s.task(), ex, ey, c.n, net->options(c), Rng(cfg.seed, "search-eval").derive(k));
        r.t = flops_account(at_spec(net->store().config(), c), cfg.batch_size, c.n, c.second, all_learnable()).train();
        r.params = net->parameter_count(c);
        results.push_back(r);
        walls.push_back(s.elapsed_ms(t0));
        s.add_cost(forward_flops(net->store().config(), ne, c.n, c.second), walls.back());
      }
      const double alpha = balance_alpha(results);
      const std::size_t best = select_candidate(results, alpha);
      for (std::size_t i = 0; i < cands.size(); ++i) {
        TraceRow row;
        row.stage = k;
        row.candidate = i;
        row.spec = spec_text(cands[i]);
        row.params = results[i].params;
        row.eval_loss = results[i].loss;
        row.t_proxy = results[i].t;
        row.wall_ms = walls[i];
        row.alpha = alpha;
        row.score = score_candidate(results[i].loss, results[i].t, alpha);
        row.chosen = i == best;
        s.log().trace(row);
      }
      cur = cands[best];
      model = net->extract(cur);
      if (mn) mn = net->extract_momentum(*mn, cur);
      net.reset();
      phase = "train";
      s.schedule().push_back(spec_text(cur));
      s.stage_event(k, true, model, {}, cur.n);
    }

    const double step_flops = flops_account(model.config(), cfg.batch_size, cur.n, cur.second, all_learnable()).train();
    while (s.step() < stage_end) {
      const auto t0 = Clock::now();
      const double loss = s.train(model, k, cur.n, {}, mn ? &*mn : nullptr);
      s.record(k, spec_text(cur), loss, step_flops, s.elapsed_ms(t0), true);
      if (s.after_step([&] { save(k); })) return s.interrupted(model);
    }
    s.stage_event(k, false, model, {}, cur.n);
  }
  return s.finish(model, {});
}

RunResult run_autoprog_zero(const ExperimentConfig& cfg, const RunOptions& ro) {
  Session s(cfg, ro);
  auto ck = s.begin();
  VisionTransformer model = ck ? ck->model : starting_model(cfg, ro, true);
  if (!ck && cfg.sid_enabled && model.config().kind == ModelKind::Denoiser) model = with_sid(std::move(model), cfg.stages);
  const ViTConfig mc = model.config();
  const bool sid = mc.sid_stages > 0;
  const GrowthSpace space = build_growth_space(
      {cfg.s1, cfg.stages, cfg.steps, cfg.ladder_steps, cfg.search_resolution, cfg.search_depth}, mc.patch_grid, mc.depth);
  const std::size_t tau = space.steps_per_stage;

  SubNetworkSpec cur = space.smallest();
  std::optional<double> hk, hz;
  std::size_t start_stage = 1;
  if (ck) {
    const auto& h = ck->header;
    start_stage = std::stoull(h.at("stage"));
    cur = space.spec(std::stoull(h.at("cur_n_index")), std::stoull(h.at("cur_second_index")));
    hk = opt_parse(h.at("h_kappa"));
    hz = opt_parse(h.at("h_zico"));
  }
  auto save = [&](std::size_t k) {
    s.save(model, nullptr,
           {{"phase", "train"},
            {"stage", std::to_string(k)},
            {"cur_n_index", std::to_string(cur.n_index)},
            {"cur_second_index", std::to_string(cur.second_index)},
            {"h_kappa", opt_text(hk)},
            {"h_zico", opt_text(hz)}});
  };

  for (std::size_t k = start_stage; k <= cfg.stages; ++k) {
    ForwardOptions opts;
    if (sid) opts.sid_stage = k - 1;
    if (!(ck && k == start_stage)) {
      const auto cands = stage_candidates(space, cur, k);
      if (cands.size() > 1) {
        const auto t0 = Clock::now();
        const auto proxies = evaluate_proxies(model, s.task(), cfg, cands, k);
        std::vector<ProxyScores> scores;
        double cost = 0.0;
        for (const auto& p : proxies) {
          scores.push_back(p.scores);
          cost += p.cost;
        }
        const std::size_t best = ranked_vote(scores);
        s.add_cost(cost, s.elapsed_ms(t0));
        for (std::size_t i = 0; i < proxies.size(); ++i) {
          ProxyRow row;
          row.stage = k;
          row.candidate = i;
          row.h_kappa = proxies[i].scores.h_kappa;
          row.h_zico = proxies[i].scores.h_zico;
          row.t_proxy = proxies[i].scores.t;
          row.rank_score = proxies[i].rank_score;
          row.chosen = i == best;
          s.log().proxy(row);
        }
        cur = cands[best];
        hk = proxies[best].scores.h_kappa;
        hz = proxies[best].scores.h_zico;
      } else {
        cur = cands.front();
        hk.reset();
        hz.reset();
      }
      model.set_learnable(unfreeze_mask(mc, cur.second));
      s.schedule().push_back(spec_string(cur.n, mc.depth, static_cast<double>(cur.second) / static_cast<double>(mc.depth)));
      s.stage_event(k, true, model, opts, cur.n);
    }
    const std::string spec = spec_string(cur.n, mc.depth, static_cast<double>(cur.second) / static_cast<double>(mc.depth));
    const double step_flops = flops_account(mc, cfg.batch_size, cur.n, mc.depth, unfreeze_mask(mc, cur.second)).train();
    while (s.step() < k * tau) {
      const auto t0 = Clock::now();
      const double loss = s.train(model, k, cur.n, opts, nullptr);
      s.record(k, spec, loss, step_flops, s.elapsed_ms(t0), true, hk, hz);
      if (s.after_step([&] { save(k); })) return s.interrupted(model);
    }
    s.stage_event(k, false, model, opts, cur.n);
  }
  ForwardOptions final_opts;
  if (sid) final_opts.sid_stage = cfg.stages - 1;
  return s.finish(model, final_opts);
}

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  switch (config.mode) {
    case Mode::Baseline:
      return run_baseline(config, options);
    case Mode::PretrainAuto:
      return run_autoprog_one(config, options);
    case Mode::FinetuneAuto:
      return run_autoprog_zero(config, options);
    default:
      throw ConfigError("mode " + to_string(config.mode) + " does not train");
  }
}

}  // namespace autoprog
