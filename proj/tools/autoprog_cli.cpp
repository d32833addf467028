#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "autoprog/checkpoint.hpp"
#include "autoprog/config.hpp"
#include "autoprog/errors.hpp"
#include "autoprog/gradcheck.hpp"
#include "autoprog/runlog.hpp"
#include "autoprog/runs.hpp"

using namespace autoprog;

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  bool resume = false;
};

ExperimentConfig resolve(Mode mode, const Args& a) {
  ExperimentConfig cfg = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
  cfg.mode = mode;
  std::vector<std::string> overrides;
  if (a.seed) overrides.push_back("seed=" + std::to_string(*a.seed));
  if (!a.out.empty()) overrides.push_back("out_dir=" + a.out);
  overrides.insert(overrides.end(), a.sets.begin(), a.sets.end());
  apply_overrides(cfg, overrides);
  return cfg;
}

int train(const ExperimentConfig& cfg, bool resume) {
  RunOptions ro;
  ro.resume = resume;
  const RunResult r = run_experiment(cfg, ro);
  std::printf("steps %zu\nfinal_loss %.6g\ntotal_flops %.6g\nschedule", r.steps, r.final_loss, r.total_flops);
  for (const auto& s : r.schedule) std::printf(" [%s]", s.c_str());
  std::printf("\nlogs in %s\n", cfg.out_dir.c_str());
  return 0;
}

int proxy_report(const ExperimentConfig& cfg) {
  const Dataset data = make_dataset(cfg.dataset_spec(), cfg.data_seed);
  const Task task = make_task(cfg, data);
  VisionTransformer model = cfg.pretrained.empty() ? build_vit(cfg.model_config(), cfg.seed) : load_checkpoint(cfg.pretrained).model;
  if (cfg.sid_enabled && model.config().kind == ModelKind::Denoiser) model = with_sid(std::move(model), cfg.stages);
  const GrowthSpace space =
      build_growth_space({cfg.s1, cfg.stages, cfg.steps, cfg.ladder_steps, cfg.search_resolution, cfg.search_depth},
                         model.config().patch_grid, model.config().depth);
  const auto cands = stage_candidates(space, space.smallest(), 1);
  const auto proxies = evaluate_proxies(model, task, cfg, cands, 1);
  std::vector<ProxyScores> scores;
  for (const auto& p : proxies) scores.push_back(p.scores);
  const std::size_t best = ranked_vote(scores);
  RunLog log(cfg.out_dir);
  std::printf("%-24s %14s %14s %14s %6s\n", "spec", "h_kappa", "h_zico", "t_proxy", "rank");
  for (std::size_t i = 0; i < proxies.size(); ++i) {
    const auto& p = proxies[i];
    log.proxy({1, i, p.scores.h_kappa, p.scores.h_zico, p.scores.t, p.rank_score, i == best});
    const double u = static_cast<double>(p.spec.second) / static_cast<double>(model.config().depth);
    std::printf("%-24s %14.6g %14.6g %14.6g %6.1f%s\n", spec_string(p.spec.n, model.config().depth, u).c_str(),
                p.scores.h_kappa, p.scores.h_zico, p.scores.t, p.rank_score, i == best ? "  *" : "");
  }
  log.flush();
  return 0;
}

int gradcheck(const ExperimentConfig& cfg) {
  const auto results = run_gradcheck(cfg.gradcheck_models, cfg.gradcheck_coords, cfg.seed);
  double worst = 0.0;
  for (const auto& r : results) {
    std::printf("%-16s coords %4zu  max rel error %.3e\n", r.model.c_str(), r.coordinates, r.max_relative_error);
    worst = std::max(worst, r.max_relative_error);
  }
  std::printf("worst %.3e (%s at 1e-4)\n", worst, worst <= 1e-4 ? "pass" : "FAIL");
  return worst <= 1e-4 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Automated progressive training of tiny vision transformers"};
  app.require_subcommand(1);
  Args args;
  const std::vector<std::pair<std::string, Mode>> modes = {{"pretrain-auto", Mode::PretrainAuto},
                                                           {"finetune-auto", Mode::FinetuneAuto},
                                                           {"baseline", Mode::Baseline},
                                                           {"proxy-report", Mode::ProxyReport},
                                                           {"gradcheck", Mode::Gradcheck}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, mode] : modes) {
    CLI::App* sub = app.add_subcommand(name, "run " + name);
    sub->add_option("--config", args.config, "flat key = value config file");
    sub->add_option("--seed", args.seed, "root seed");
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--set", args.sets, "override key=value (repeatable)");
    sub->add_flag("--resume", args.resume, "continue from <out>/checkpoint.bin");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Mode mode = Mode::Baseline;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) mode = modes[i].second;
  }
  try {
    const ExperimentConfig cfg = resolve(mode, args);
    switch (mode) {
      case Mode::ProxyReport:
        return proxy_report(cfg);
      case Mode::Gradcheck:
        return gradcheck(cfg);
      default:
        return train(cfg, args.resume);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
