#include "duc/shift_sim.hpp"

#include <algorithm>
#include <cmath>

#include "duc/errors.hpp"
#include "duc/stats.hpp"

namespace duc {

namespace {

void validate_law(const WeightLaw& law) {
  if (!(law.variance >= 0.0) || !std::isfinite(law.variance))
    throw ConfigError("weight law: variance must be nonnegative");
  if (!(law.lower_bound > 0.0))
    throw ConfigError("weight law: lower bound must be positive; variance " +
                      std::to_string(law.variance) + " is too large for " +
                      family_name(law.family));
  if (law.lower_bound > 1.0)
    throw ConfigError("weight law: lower bound above the mean");
}

}  // namespace

double WeightLaw::sample(Rng& rng) const {
  if (variance == 0.0) return 1.0;
  switch (family) {
    case Family::ShiftedExponential:
      return lower_bound + (1.0 - lower_bound) * rng.exponential();
    case Family::TwoPoint: {
      const double s = std::sqrt(variance);
      return rng.bernoulli(0.5) ? 1.0 + s : 1.0 - s;
    }
    case Family::UniformAroundOne: {
      const double h = std::sqrt(3.0 * variance);
      return rng.uniform(1.0 - h, 1.0 + h);
    }
  }
  throw ConfigError("weight law: unknown family");
}

WeightLaw shifted_exponential_law(double variance) {
  WeightLaw law;
  law.family = WeightLaw::Family::ShiftedExponential;
  law.variance = variance;
  law.lower_bound = variance == 0.0 ? 1.0 : 1.0 - std::sqrt(variance);
  validate_law(law);
  return law;
}

WeightLaw two_point_law(double variance) {
  WeightLaw law;
  law.family = WeightLaw::Family::TwoPoint;
  law.variance = variance;
  law.lower_bound = variance == 0.0 ? 1.0 : 1.0 - std::sqrt(variance);
  validate_law(law);
  return law;
}

WeightLaw uniform_around_one_law(double variance) {
  WeightLaw law;
  law.family = WeightLaw::Family::UniformAroundOne;
  law.variance = variance;
  law.lower_bound = variance == 0.0 ? 1.0 : 1.0 - std::sqrt(3.0 * variance);
  validate_law(law);
  return law;
}

WeightLaw make_weight_law(const std::string& family, double variance) {
  if (family == "shifted-exponential") return shifted_exponential_law(variance);
  if (family == "two-point") return two_point_law(variance);
  if (family == "uniform-around-one") return uniform_around_one_law(variance);
  throw ConfigError("unknown weight law family: " + family);
}

std::string family_name(WeightLaw::Family f) {
  switch (f) {
    case WeightLaw::Family::ShiftedExponential: return "shifted-exponential";
    case WeightLaw::Family::TwoPoint: return "two-point";
    case WeightLaw::Family::UniformAroundOne: return "uniform-around-one";
  }
  return "unknown";
}

Eigen::VectorXd draw_weights(const WeightLaw& law, const PartitionSpec& part,
                             std::uint64_t seed) {
  validate_law(law);
  if (part.m < 2) throw ConfigError("partition: m must be >= 2");
  Rng rng(seed);
  Eigen::VectorXd w(static_cast<Eigen::Index>(part.m));
  for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = law.sample(rng);
  return w;
}

double Marginal::quantile(double u) const {
  u = std::clamp(u, 1e-16, 1.0 - 1e-16);
  switch (kind) {
    case Kind::Bernoulli: return u <= 1.0 - a ? 0.0 : 1.0;
    case Kind::Normal: return stats::normal_quantile(u);
    case Kind::Uniform: return a + (b - a) * u;
  }
  throw ConfigError("marginal: unknown kind");
}

double Marginal::mean() const {
  switch (kind) {
    case Kind::Bernoulli: return a;
    case Kind::Normal: return 0.0;
    case Kind::Uniform: return 0.5 * (a + b);
  }
  throw ConfigError("marginal: unknown kind");
}

double OutcomeSpec::value(const Eigen::VectorXd& x, double eps) const {
  double y = linear.size() > 0 ? linear.dot(x) : 0.0;
  for (const std::uint32_t i : squared_idx) y += x(i) * x(i);
  return y + eps;
}

std::shared_ptr<const BaseTransform> make_base_transform(
    std::vector<Marginal> covariates, Marginal noise, OutcomeSpec outcome,
    std::size_t m, std::uint64_t structure_seed) {
  if (covariates.empty()) throw ConfigError("base transform: no covariates");
  if (m < 2) throw ConfigError("base transform: m must be >= 2");
  if (outcome.enabled &&
      outcome.linear.size() != static_cast<Eigen::Index>(covariates.size()))
    throw ConfigError("base transform: outcome coefficient count mismatch");
  for (const std::uint32_t i : outcome.squared_idx)
    if (i >= covariates.size())
      throw ConfigError("base transform: squared index out of range");
  auto bt = std::make_shared<BaseTransform>();
  bt->m = m;
  bt->covariates = std::move(covariates);
  bt->noise = noise;
  bt->outcome = std::move(outcome);
  const std::size_t nvars = bt->covariates.size() + 1;
  bt->perms.reserve(nvars);
  for (std::size_t v = 0; v < nvars; ++v) {
    Rng rng(derive_seed(structure_seed, 0xBA5E, v));
    bt->perms.push_back(rng.permutation(m));
  }
  return bt;
}

Dataset sample_perturbed(const PerturbedSource& src, std::size_t n) {
  if (n == 0) throw DataError("sample_perturbed: empty dataset requested");
  if (!src.base_transform) throw ConfigError("sample_perturbed: no transform");
  const BaseTransform& bt = *src.base_transform;
  const std::size_t m = bt.m;
  if (src.weights.size() != static_cast<Eigen::Index>(m))
    throw ConfigError("sample_perturbed: weight count != m");
  if ((src.weights.array() <= 0.0).any())
    throw ConfigError("sample_perturbed: weights must be positive");

  // Cumulative table for region sampling.
  std::vector<double> cum(m);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    total += src.weights(static_cast<Eigen::Index>(j));
    cum[j] = total;
  }

  Rng rng(src.seed);
  const Eigen::Index l = bt.dim();
  Dataset ds;
  ds.has_outcome = bt.outcome.enabled;
  ds.x.resize(static_cast<Eigen::Index>(n), l);
  if (ds.has_outcome) ds.y.resize(static_cast<Eigen::Index>(n));

  const double inv_m = 1.0 / static_cast<double>(m);
  Eigen::VectorXd row(l);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    const std::size_t j = static_cast<std::size_t>(
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    const std::size_t region = std::min(j, m - 1);
    for (Eigen::Index v = 0; v < l; ++v) {
      const double bin = static_cast<double>(bt.perms[static_cast<std::size_t>(v)][region]);
      row(v) = bt.covariates[static_cast<std::size_t>(v)].quantile(
          (bin + rng.uniform()) * inv_m);
    }
    ds.x.row(static_cast<Eigen::Index>(i)) = row;
    if (ds.has_outcome) {
      const double bin = static_cast<double>(bt.perms[static_cast<std::size_t>(l)][region]);
      const double eps = bt.noise.quantile((bin + rng.uniform()) * inv_m);
      ds.y(static_cast<Eigen::Index>(i)) = bt.outcome.value(row, eps);
    }
  }
  return ds;
}

TaskConfig benchmark_task_config(std::uint64_t master_seed) {
  TaskConfig cfg;
  cfg.master_seed = master_seed;
  cfg.m = 100;
  for (int i = 0; i < 15; ++i)
    cfg.covariates.push_back({Marginal::Kind::Bernoulli, 0.5, 0.0});
  for (int i = 0; i < 15; ++i)
    cfg.covariates.push_back({Marginal::Kind::Normal, 0.0, 0.0});
  cfg.noise = {Marginal::Kind::Uniform, -1.0, 1.0};
  cfg.outcome.enabled = true;
  cfg.outcome.linear = Eigen::VectorXd::Ones(30);
  cfg.outcome.linear(15) = 0.0;
  cfg.outcome.linear(16) = 0.0;
  cfg.outcome.squared_idx = {15, 16};

  cfg.target = {shifted_exponential_law(0.0), 0.0, 300};
  cfg.sources = {{shifted_exponential_law(0.5), 0.0, 400}};
  const double variances[15] = {0.0, 0.9, 0.05, 0.7, 0.15, 0.45, 0.85, 0.3,
                                0.6, 0.02, 0.75, 0.2, 0.55, 0.1, 0.4};
  const std::size_t sizes[15] = {2000, 150, 1200, 250, 900, 400, 120, 700,
                                 300, 1600, 200, 1000, 350, 1400, 500};
  for (int i = 0; i < 15; ++i)
    cfg.candidates.push_back(
        {shifted_exponential_law(variances[i]), 0.0, sizes[i]});
  cfg.shared_law = shifted_exponential_law(0.25);
  cfg.test_n = 20000;
  cfg.oracle_n = 50000;
  return cfg;
}

namespace {

Eigen::VectorXd mix_weights(const SourceLawSpec& spec,
                            const Eigen::VectorXd& shared,
                            const PartitionSpec& part, std::uint64_t seed) {
  const Eigen::VectorXd own = draw_weights(spec.law, part, seed);
  if (spec.shared_lambda == 0.0) return own;
  if (!(spec.shared_lambda >= 0.0 && spec.shared_lambda <= 1.0))
    throw ConfigError("shared lambda must be in [0,1]");
  return (1.0 - spec.shared_lambda) * own + spec.shared_lambda * shared;
}

}  // namespace

SyntheticTask make_synthetic_task(const TaskConfig& cfg) {
  if (cfg.target.n == 0) throw ConfigError("task: target sample size missing");
  const PartitionSpec part{cfg.m};
  const auto bt = make_base_transform(cfg.covariates, cfg.noise, cfg.outcome,
                                      cfg.m, derive_seed(cfg.master_seed, 0x57));

  const Eigen::VectorXd shared =
      draw_weights(cfg.shared_law, part, derive_seed(cfg.master_seed, 0x5A));

  SyntheticTask task;
  std::uint64_t idx = 0;
  auto realize = [&](const SourceLawSpec& spec) {
    PerturbedSource src;
    src.weights = mix_weights(spec, shared, part,
                              derive_seed(cfg.master_seed, 0xE1, idx));
    src.base_transform = bt;
    src.seed = derive_seed(cfg.master_seed, 0xD2, idx);
    ++idx;
    return src;
  };

  task.target_source = realize(cfg.target);
  task.target = sample_perturbed(task.target_source, cfg.target.n);
  for (const auto& spec : cfg.sources) {
    task.source_sources.push_back(realize(spec));
    task.sources.push_back(sample_perturbed(task.source_sources.back(), spec.n));
  }
  for (const auto& spec : cfg.candidates) {
    task.candidate_sources.push_back(realize(spec));
    task.candidates.push_back(
        sample_perturbed(task.candidate_sources.back(), spec.n));
  }

  // Held-out and oracle rows come from the same realized target distribution
  // but fresh sampling streams.
  PerturbedSource test_src = task.target_source;
  test_src.seed = derive_seed(cfg.master_seed, 0x7E57);
  if (cfg.test_n > 0) task.test = sample_perturbed(test_src, cfg.test_n);
  PerturbedSource oracle_src = task.target_source;
  oracle_src.seed = derive_seed(cfg.master_seed, 0x0AC1);
  if (cfg.oracle_n > 0) task.oracle = sample_perturbed(oracle_src, cfg.oracle_n);
  return task;
}

WeightCov true_weight_cov(const std::vector<SourceLawSpec>& specs,
                          const WeightLaw& shared_law) {
  const Eigen::Index k = static_cast<Eigen::Index>(specs.size());
  WeightCov wc;
  wc.per_m = false;
  wc.matrix = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double li = specs[static_cast<std::size_t>(i)].shared_lambda;
    const double vi = specs[static_cast<std::size_t>(i)].law.variance;
    wc.matrix(i, i) =
        (1.0 - li) * (1.0 - li) * vi + li * li * shared_law.variance;
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double lj = specs[static_cast<std::size_t>(j)].shared_lambda;
      const double cov = li * lj * shared_law.variance;
      wc.matrix(i, j) = cov;
      wc.matrix(j, i) = cov;
    }
  }
  return wc;
}

WeightCov true_weight_cov(const TaskConfig& cfg) {
  std::vector<SourceLawSpec> specs;
  specs.push_back(cfg.target);
  specs.insert(specs.end(), cfg.sources.begin(), cfg.sources.end());
  specs.insert(specs.end(), cfg.candidates.begin(), cfg.candidates.end());
  return true_weight_cov(specs, cfg.shared_law);
}

}  // namespace duc
