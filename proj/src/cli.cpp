#include "duc/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "duc/baselines.hpp"
#include "duc/dataset.hpp"
#include "duc/duc_core.hpp"
#include "duc/erm.hpp"
#include "duc/errors.hpp"
#include "duc/sampling_opt.hpp"
#include "duc/shift_sim.hpp"
#include "duc/stats.hpp"
#include "duc/summaries.hpp"

namespace duc::cli {

namespace {

using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write: " + path);
  f << text;
}

std::string stem_of(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

Marginal marginal_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "bernoulli") return {Marginal::Kind::Bernoulli, j.value("p", 0.5), 0.0};
  if (type == "normal") return {Marginal::Kind::Normal, 0.0, 0.0};
  if (type == "uniform")
    return {Marginal::Kind::Uniform, j.value("a", -1.0), j.value("b", 1.0)};
  throw ConfigError("unknown marginal type: " + type);
}

json marginal_to_json(const Marginal& m) {
  switch (m.kind) {
    case Marginal::Kind::Bernoulli: return {{"type", "bernoulli"}, {"p", m.a}};
    case Marginal::Kind::Normal: return {{"type", "normal"}};
    case Marginal::Kind::Uniform:
      return {{"type", "uniform"}, {"a", m.a}, {"b", m.b}};
  }
  throw ConfigError("unknown marginal kind");
}

WeightLaw law_from_json(const json& j) {
  return make_weight_law(j.value("family", std::string("shifted-exponential")),
                         j.value("variance", 0.0));
}

SourceLawSpec source_spec_from_json(const json& j) {
  SourceLawSpec s;
  s.law = law_from_json(j);
  s.shared_lambda = j.value("lambda", 0.0);
  s.n = j.at("n").get<std::size_t>();
  if (s.n == 0) throw ConfigError("source sample size must be positive");
  return s;
}

TaskConfig task_from_json(const json& j, std::uint64_t seed) {
  if (j.is_string()) {
    if (j.get<std::string>() == "benchmark") return benchmark_task_config(seed);
    throw ConfigError("unknown named task: " + j.get<std::string>());
  }
  TaskConfig cfg;
  cfg.master_seed = seed;
  cfg.m = j.value("m", std::size_t{100});
  for (const auto& cj : j.at("covariates")) cfg.covariates.push_back(marginal_from_json(cj));
  cfg.noise = j.contains("noise") ? marginal_from_json(j.at("noise"))
                                  : Marginal{Marginal::Kind::Uniform, -1.0, 1.0};
  if (j.contains("outcome")) {
    const json& oj = j.at("outcome");
    cfg.outcome.enabled = true;
    const auto lin = oj.at("linear").get<std::vector<double>>();
    cfg.outcome.linear = Eigen::Map<const Eigen::VectorXd>(
        lin.data(), static_cast<Eigen::Index>(lin.size()));
    if (oj.contains("squared"))
      cfg.outcome.squared_idx = oj.at("squared").get<std::vector<std::uint32_t>>();
  }
  cfg.target = source_spec_from_json(j.at("target"));
  if (j.contains("sources"))
    for (const auto& sj : j.at("sources")) cfg.sources.push_back(source_spec_from_json(sj));
  for (const auto& sj : j.at("candidates"))
    cfg.candidates.push_back(source_spec_from_json(sj));
  cfg.shared_law = j.contains("shared_law") ? law_from_json(j.at("shared_law"))
                                            : shifted_exponential_law(0.0);
  cfg.test_n = j.value("test_n", std::size_t{20000});
  cfg.oracle_n = j.value("oracle_n", std::size_t{50000});
  return cfg;
}

json estimate_to_json(const std::string& id, const DucEstimate& e) {
  return json{{"source_id", id},
              {"rho2", e.rho2},
              {"ci", {e.ci_low, e.ci_high}},
              {"L", e.length},
              {"alpha", e.alpha},
              {"method", method_name(e.method)},
              {"trials", e.trials}};
}

json plan_to_json(const SamplingPlan& plan) {
  json beta = json::array();
  for (Eigen::Index i = 0; i < plan.beta.beta.size(); ++i)
    beta.push_back(plan.beta.beta(i));
  json ncont = json::array();
  for (Eigen::Index i = 0; i < plan.n_continuous.size(); ++i)
    ncont.push_back(plan.n_continuous(i));
  json nint = json::array();
  for (long v : plan.n_integer) nint.push_back(v);
  json diagnostics;
  diagnostics["mixed_sign"] = plan.mixed_sign;
  diagnostics["feasibility_warning"] = plan.feasibility_warning;
  return json{{"schema_version", 1},
              {"constraint",
               plan.constraint == SamplingPlan::Constraint::Size ? "size" : "budget"},
              {"n_continuous", ncont},
              {"n_integer", nint},
              {"beta", beta},
              {"objective_value", plan.objective_value},
              {"diagnostics", diagnostics}};
}

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<double> alpha;
  std::optional<std::string> out;
};

// Config wins over defaults, flags win over config.
std::uint64_t pick_seed(const json& cfg, const CommonArgs& a) {
  if (a.seed) return *a.seed;
  return cfg.value("master_seed", std::uint64_t{1});
}
int pick_trials(const json& cfg, const CommonArgs& a, int def) {
  const int t = a.trials ? *a.trials : cfg.value("trials", def);
  if (t < 1) throw ConfigError("trials must be >= 1");
  return t;
}
double pick_alpha(const json& cfg, const CommonArgs& a) {
  const double v = a.alpha ? *a.alpha : cfg.value("alpha", 0.05);
  if (!(v > 0.0 && v < 1.0)) throw ConfigError("alpha must be in (0,1)");
  return v;
}
std::string pick_out(const json& cfg, const CommonArgs& a, const char* def) {
  if (a.out) return *a.out;
  return cfg.value("out", std::string(def));
}

Dataset load_covariate_csv(const std::string& path) {
  Dataset d = read_csv(path);
  if (d.dropped_rows > 0)
    std::cerr << "note: dropped " << d.dropped_rows
              << " rows with missing values from " << path << "\n";
  return d;
}

int cmd_rank(const json& cfg, const CommonArgs& common) {
  const Dataset target = load_covariate_csv(cfg.at("target").get<std::string>());
  std::vector<Dataset> existing;
  if (cfg.contains("existing"))
    for (const auto& p : cfg.at("existing"))
      existing.push_back(load_covariate_csv(p.get<std::string>()));
  std::vector<Dataset> candidates;
  std::vector<std::string> ids;
  for (const auto& p : cfg.at("candidates")) {
    candidates.push_back(load_covariate_csv(p.get<std::string>()));
    ids.push_back(stem_of(p.get<std::string>()));
  }
  if (candidates.empty()) throw ConfigError("rank: no candidates configured");

  RankInputs in;
  in.target = &target;
  for (const auto& d : existing) in.existing.push_back(&d);
  for (const auto& d : candidates) in.candidates.push_back(&d);
  in.candidate_ids = ids;
  in.whiten_target_only = cfg.value("whiten", std::string("pooled")) == "target-only";

  SubsampleSpec spec;
  spec.seed = pick_seed(cfg, common);
  spec.trials = pick_trials(cfg, common, 1000);
  if (cfg.contains("subsample")) {
    const json& sj = cfg.at("subsample");
    spec.target_rows = sj.value("target_rows", std::size_t{0});
    spec.source_rows = sj.value("source_rows", std::size_t{0});
  }

  if (cfg.contains("target_moments")) {
    const json& mj = cfg.at("target_moments");
    json moments = mj.is_string() ? load_json(mj.get<std::string>()) : mj;
    const auto means = moments.at("means").get<std::vector<double>>();
    in.target_moments_raw = Eigen::Map<const Eigen::VectorXd>(
        means.data(), static_cast<Eigen::Index>(means.size()));
  } else if (cfg.contains("estimate_moments_from_split")) {
    spec.moment_rows =
        cfg.at("estimate_moments_from_split").at("moment_rows").get<std::size_t>();
    if (spec.moment_rows == 0)
      throw ConfigError("rank: moment_rows must be positive");
  } else {
    throw ConfigError("rank: target_moments missing and "
                      "estimate_moments_from_split unset");
  }

  const double alpha = pick_alpha(cfg, common);
  const auto ranked = rank_candidates(in, alpha, spec);

  json out;
  out["schema_version"] = 1;
  out["command"] = "rank";
  out["alpha"] = alpha;
  out["trials"] = spec.trials;
  out["seed"] = spec.seed;
  json arr = json::array();
  for (const auto& r : ranked) arr.push_back(estimate_to_json(r.source_id, r.estimate));
  out["candidates"] = arr;

  if (cfg.value("with_baselines", false)) {
    const Whitener wh = fit_whitener(target.x);
    const SourceSummary ts = summarize(target, wh, "target", true);
    json base = json::array();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const SourceSummary cs = summarize(candidates[i], wh, ids[i], true);
      const BaselineScore kl = kl_gaussian(cs, ts);
      const BaselineScore dc =
          domain_classifier_score(candidates[i], target, ids[i]);
      base.push_back(json{{"source_id", ids[i]},
                          {"kl_gaussian", kl.value},
                          {"domain_classifier", dc.value},
                          {"domain_classifier_converged", dc.converged}});
    }
    out["baselines"] = base;
  }

  write_text(pick_out(cfg, common, "rank_report.json"), out.dump(2) + "\n");
  return 0;
}

int cmd_simulate(const json& cfg, const CommonArgs& common) {
  const std::uint64_t seed = pick_seed(cfg, common);
  const TaskConfig task_cfg = task_from_json(cfg.at("task"), seed);
  const SyntheticTask task = make_synthetic_task(task_cfg);
  const std::string dir = pick_out(cfg, common, "simulated");
  std::filesystem::create_directories(dir);

  write_csv(task.target, dir + "/target.csv");
  for (std::size_t s = 0; s < task.sources.size(); ++s)
    write_csv(task.sources[s], dir + "/s" + std::to_string(s + 2) + ".csv");
  for (std::size_t c = 0; c < task.candidates.size(); ++c) {
    std::string id = std::to_string(c + 1);
    if (task.candidates.size() >= 10 && c + 1 < 10) id = "0" + id;
    write_csv(task.candidates[c], dir + "/c" + id + ".csv");
  }
  if (task.test.rows() > 0) write_csv(task.test, dir + "/test.csv");

  // Ground truth for oracle workflows: law-level weight covariance, sample
  // sizes and the base-population covariate means.
  const WeightCov wc = true_weight_cov(task_cfg);
  json truth;
  truth["schema_version"] = 1;
  truth["m"] = task_cfg.m;
  truth["seed"] = seed;
  json mat = json::array();
  for (Eigen::Index i = 0; i < wc.matrix.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < wc.matrix.cols(); ++j) row.push_back(wc.matrix(i, j));
    mat.push_back(row);
  }
  truth["sigma_w"] = mat;
  json sizes = json::array();
  sizes.push_back(task_cfg.target.n);
  for (const auto& s : task_cfg.sources) sizes.push_back(s.n);
  for (const auto& c : task_cfg.candidates) sizes.push_back(c.n);
  truth["n"] = sizes;
  json means = json::array();
  for (const auto& m : task_cfg.covariates) means.push_back(m.mean());
  truth["target_moments"] = json{{"means", means}};
  write_text(dir + "/ground_truth.json", truth.dump(2) + "\n");
  write_text(dir + "/moments.json",
             json{{"means", means}}.dump(2) + "\n");
  return 0;
}

int cmd_validate(const json& cfg, const CommonArgs& common) {
  const std::uint64_t seed = pick_seed(cfg, common);
  const int trials = pick_trials(cfg, common, 200);
  const double alpha = pick_alpha(cfg, common);
  const TaskConfig task_cfg = task_from_json(cfg.at("task"), seed);

  const auto t0 = std::chrono::steady_clock::now();
  const ValidationResult res = validate_duc(task_cfg, trials, alpha, seed);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string prefix = pick_out(cfg, common, "validate");
  std::string csv = "candidate_id,duc,duc_ci_low,duc_ci_high,empirical_fraction,trials\n";
  for (const auto& row : res.rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%d\n",
                  row.candidate_id.c_str(), row.duc, row.ci_low, row.ci_high,
                  row.empirical_fraction, row.trials);
    csv += buf;
  }
  write_text(prefix + ".csv", csv);

  json summary;
  summary["schema_version"] = 1;
  summary["command"] = "validate";
  summary["trials"] = res.trials;
  summary["seed"] = seed;
  summary["alpha"] = alpha;
  summary["mean_excess_without"] = res.mean_excess_without;
  if (res.correlation_valid) {
    summary["pearson"] = res.pearson;
    summary["spearman"] = res.spearman;
    summary["pearson_at_least_0.9"] = res.pearson >= 0.9;
  } else {
    summary["correlation"] = "insufficient trials";
  }
  summary["mean_abs_dev"] = res.mean_abs_dev;
  write_text(prefix + ".json", summary.dump(2) + "\n");
  std::cerr << "validate: " << trials << " trials in " << secs << " s\n";
  return 0;
}

int cmd_plan_size(const json& cfg, const CommonArgs& common) {
  const auto rows = cfg.at("sigma_w").get<std::vector<std::vector<double>>>();
  const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
  WeightCov wc;
  wc.matrix.resize(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != k)
      throw ConfigError("plan-size: sigma_w must be square");
    for (Eigen::Index j = 0; j < k; ++j)
      wc.matrix(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  const double n = cfg.at("N").get<double>();
  const SamplingPlan plan = size_constrained_plan(wc, n);
  write_text(pick_out(cfg, common, "plan_size.json"), plan_to_json(plan).dump(2) + "\n");
  return 0;
}

int cmd_plan_budget(const json& cfg, const CommonArgs& common) {
  BudgetSpec spec;
  spec.kappa1 = cfg.at("kappa1").get<double>();
  spec.kappa2 = cfg.at("kappa2").get<double>();
  spec.budget = cfg.at("budget").get<double>();
  const double v = cfg.at("v").get<double>();
  const SamplingPlan plan = budget_plan(v, spec);
  json out = plan_to_json(plan);
  if (cfg.contains("incremental")) {
    const json& ij = cfg.at("incremental");
    const IncrementalDecision d =
        incremental_value(spec.kappa1, spec.kappa2, ij.at("sigma22").get<double>(),
                          ij.at("n2").get<double>());
    out["incremental"] = json{
        {"decision", d.decision == BuyDecision::BuySource ? "buy-source" : "buy-target"},
        {"quantity", d.quantity},
        {"margin", d.margin}};
  }
  write_text(pick_out(cfg, common, "plan_budget.json"), out.dump(2) + "\n");
  return 0;
}

int cmd_baselines(const json& cfg, const CommonArgs& common) {
  const Dataset target = load_covariate_csv(cfg.at("target").get<std::string>());
  std::vector<Dataset> candidates;
  std::vector<std::string> ids;
  for (const auto& p : cfg.at("candidates")) {
    candidates.push_back(load_covariate_csv(p.get<std::string>()));
    ids.push_back(stem_of(p.get<std::string>()));
  }
  if (candidates.empty()) throw ConfigError("baselines: no candidates");

  const Whitener wh = fit_whitener(target.x);
  const SourceSummary ts = summarize(target, wh, "target", true);
  json arr = json::array();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const SourceSummary cs = summarize(candidates[i], wh, ids[i], true);
    const BaselineScore kl = kl_gaussian(cs, ts);
    const BaselineScore dc = domain_classifier_score(candidates[i], target, ids[i]);
    arr.push_back(json{{"source_id", ids[i]},
                       {"kl_gaussian", kl.value},
                       {"domain_classifier", dc.value},
                       {"domain_classifier_converged", dc.converged}});
  }
  json out;
  out["schema_version"] = 1;
  out["command"] = "baselines";
  out["scores"] = arr;
  write_text(pick_out(cfg, common, "baselines_report.json"), out.dump(2) + "\n");
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"data-source ranking by predicted excess-risk reduction"};
  app.require_subcommand(1);

  CommonArgs common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config path")->required();
    sub->add_option("--seed", [&](const CLI::results_t& r) {
      common.seed = std::stoull(r.at(0));
      return true;
    }, "master seed override");
    sub->add_option("--trials", [&](const CLI::results_t& r) {
      common.trials = std::stoi(r.at(0));
      return true;
    }, "trial count override");
    sub->add_option("--alpha", [&](const CLI::results_t& r) {
      common.alpha = std::stod(r.at(0));
      return true;
    }, "confidence level override");
    sub->add_option("--out", [&](const CLI::results_t& r) {
      common.out = r.at(0);
      return true;
    }, "output path override");
  };

  CLI::App* rank = app.add_subcommand("rank", "rank candidate sources");
  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic task");
  CLI::App* validate = app.add_subcommand("validate", "Monte Carlo validation run");
  CLI::App* plan_size = app.add_subcommand("plan-size", "size-constrained sampling plan");
  CLI::App* plan_budget = app.add_subcommand("plan-budget", "budget-constrained sampling plan");
  CLI::App* baselines = app.add_subcommand("baselines", "baseline similarity scores");
  for (CLI::App* sub : {rank, simulate, validate, plan_size, plan_budget, baselines})
    add_common(sub);

  std::vector<const char*> argv;
  argv.push_back("duc");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help and friends.
      return app.exit(e);
    }
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    const json cfg = load_json(common.config_path);
    if (rank->parsed()) return cmd_rank(cfg, common);
    if (simulate->parsed()) return cmd_simulate(cfg, common);
    if (validate->parsed()) return cmd_validate(cfg, common);
    if (plan_size->parsed()) return cmd_plan_size(cfg, common);
    if (plan_budget->parsed()) return cmd_plan_budget(cfg, common);
    if (baselines->parsed()) return cmd_baselines(cfg, common);
    std::cerr << "error: no command\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace duc::cli
