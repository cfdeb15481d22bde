#pragma once

// Experiment orchestration: train on one set of episodic factor values,
// switch to unseen values at a fixed step, keep training, and log returns,
// losses and disentanglement scores.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <thread>

#include "ted/agent.hpp"
#include "ted/config.hpp"
#include "ted/csv.hpp"
#include "ted/dismetric.hpp"

namespace ted {

namespace fs = std::filesystem;

struct RunConfig {
  std::size_t total_steps = 20000;
  std::size_t switch_step = 10000;
  std::size_t eval_period = 1000;
  std::size_t eval_episodes = 10;
  std::size_t metric_period = 5000;  // 0 disables the periodic score
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::uint64_t master_seed = 2023;
  std::string out_dir = "out";
  bool zero_shot_probe = false;
  bool save_checkpoints = true;
};

struct ExperimentConfig {
  EnvSpec env;
  EncoderConfig encoder;
  AgentConfig agent;
  std::optional<TedConfig> ted;
  MetricConfig metric;
  std::size_t replay_capacity = 100000;
  RunConfig run;
  std::vector<double> ablation_alphas{0.1, 1.0, 10.0};
  Config source;

  static ExperimentConfig from_config(const Config& c);
};

namespace detail {

inline std::vector<Interval> intervals(const Config& c, const std::string& key, std::size_t count, Interval fallback) {
  auto v = c.get_doubles(key, {fallback.lo, fallback.hi});
  if (v.size() == 2) return std::vector<Interval>(count, Interval{v[0], v[1]});
  if (v.size() != 2 * count) throw ConfigError(key, "expected lo,hi or one lo,hi pair per factor");
  std::vector<Interval> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back({v[2 * i], v[2 * i + 1]});
  return out;
}

inline std::vector<double> broadcast(const Config& c, const std::string& key, std::size_t count, double fallback) {
  auto v = c.get_doubles(key, {fallback});
  if (v.size() == 1) return std::vector<double>(count, v[0]);
  if (v.size() != count) throw ConfigError(key, "expected one value or one per factor");
  return v;
}

inline SampleKinds parse_sample_kinds(const std::string& s) {
  if (s == "both") return {true, true};
  if (s == "x_prime") return {true, false};
  if (s == "x_dprime") return {false, true};
  throw ConfigError("ted.samples", "expected both|x_prime|x_dprime, got '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_config(const Config& c) {
  const auto ne = c.get_size("factors.num_episodic", 2);
  const auto nd = c.get_size("factors.num_dynamic", 2);
  if (ne < 1) throw ConfigError("factors.num_episodic", "must be >= 1");
  if (nd < 1) throw ConfigError("factors.num_dynamic", "must be >= 1");
  FactorSpec factors(detail::intervals(c, "factors.episodic_train", ne, {-1.0, -0.2}),
                     detail::intervals(c, "factors.episodic_test", ne, {0.2, 1.0}),
                     detail::broadcast(c, "factors.dynamic_init", nd, 0.0),
                     detail::intervals(c, "factors.dynamic_bounds", nd, {-1.0, 1.0}));

  const auto mode_s = c.get_string("mixer.mode", "nonlinear");
  MixMode mode;
  if (mode_s == "linear")
    mode = MixMode::linear;
  else if (mode_s == "nonlinear")
    mode = MixMode::nonlinear;
  else
    throw ConfigError("mixer.mode", "expected linear|nonlinear");
  const std::size_t K = ne + nd;
  std::size_t obs_dim = c.get_size("mixer.obs_dim", 0);
  if (obs_dim == 0) obs_dim = 4 * K;
  Rng mixer_rng(c.get_size("mixer.seed", 7));
  auto mixer = MixerSpec::random(mode, K, obs_dim, mixer_rng, c.get_double("mixer.gain", 1.0),
                                 c.get_size("mixer.frame_stack", 3));

  ExperimentConfig e{EnvSpec(std::move(factors), std::move(mixer))};
  e.env.horizon = c.get_size("env.horizon", 50);
  e.env.step_size = c.get_double("env.step_size", 0.1);
  const auto goal_s = c.get_string("env.goal_source", "fixed");
  if (goal_s == "fixed")
    e.env.goal_source = GoalSource::fixed;
  else if (goal_s == "episodic_factor")
    e.env.goal_source = GoalSource::episodic_factor;
  else
    throw ConfigError("env.goal_source", "expected fixed|episodic_factor");
  e.env.fixed_goal = detail::broadcast(c, "env.goal", nd, 0.0);
  e.env.goal_factors = c.get_sizes("env.goal_factors", {});
  e.env.validate();

  e.encoder.hidden = c.get_sizes("encoder.hidden", e.encoder.hidden);
  e.encoder.latent = c.get_size("encoder.latent", 0);
  e.encoder.layer_norm = c.get_bool("encoder.layer_norm", true);
  e.encoder.learning_rate = c.get_double("encoder.lr", 1e-3);
  e.encoder.tau = c.get_double("encoder.tau", 0.01);
  if (!(e.encoder.tau > 0.0 && e.encoder.tau <= 1.0)) throw ConfigError("encoder.tau", "must lie in (0, 1]");
  if (e.encoder.latent != 0 && e.encoder.latent < K)
    throw ConfigError("encoder.latent", "latent dimension must be >= number of factors");

  auto& a = e.agent;
  a.gamma = c.get_double("agent.gamma", a.gamma);
  a.epsilon_start = c.get_double("agent.epsilon_start", a.epsilon_start);
  a.epsilon_end = c.get_double("agent.epsilon_end", a.epsilon_end);
  a.epsilon_decay_steps = c.get_size("agent.epsilon_decay", a.epsilon_decay_steps);
  a.target_sync_period = c.get_size("agent.target_sync", a.target_sync_period);
  a.updates_per_step = c.get_size("agent.updates_per_step", a.updates_per_step);
  a.initial_steps = c.get_size("agent.initial_steps", a.initial_steps);
  a.batch_size = c.get_size("agent.batch_size", a.batch_size);
  a.q_hidden = c.get_sizes("agent.q_hidden", a.q_hidden);
  a.learning_rate = c.get_double("agent.lr", a.learning_rate);
  a.validate();

  e.replay_capacity = c.get_size("replay.capacity", 100000);
  if (e.replay_capacity == 0) throw ConfigError("replay.capacity", "must be positive");

  if (c.get_bool("ted.enabled", true)) {
    TedConfig t;
    t.alpha = c.get_double("ted.alpha", 1.0);
    t.positive_weight = c.get_double("ted.positive_weight", 2.0);
    const auto cls = c.get_string("ted.classifier", "ted");
    if (cls == "ted")
      t.classifier = ClassifierVariant::ted;
    else if (cls == "linear")
      t.classifier = ClassifierVariant::linear;
    else
      throw ConfigError("ted.classifier", "expected ted|linear");
    t.samples = detail::parse_sample_kinds(c.get_string("ted.samples", "both"));
    t.validate();
    e.ted = t;
  } else {
    // Consume the keys so a disabled section does not count as unknown.
    for (auto k : {"ted.alpha", "ted.positive_weight", "ted.classifier", "ted.samples"}) c.get_string(k, "");
  }

  e.metric.pairs_per_sample = c.get_size("metric.pairs", 32);
  e.metric.total_samples = c.get_size("metric.samples", 2000);
  e.metric.train_fraction = c.get_double("metric.train_fraction", 0.8);
  e.metric.l1_strength = c.get_double("metric.l1", 1e-3);
  e.metric.probe_iterations = c.get_size("metric.iterations", 500);
  e.metric.validate();

  auto& r = e.run;
  r.total_steps = c.get_size("run.total_steps", r.total_steps);
  r.switch_step = c.get_size("run.switch_step", r.switch_step);
  r.eval_period = c.get_size("run.eval_period", r.eval_period);
  r.eval_episodes = c.get_size("run.eval_episodes", r.eval_episodes);
  r.metric_period = c.get_size("run.metric_period", r.metric_period);
  r.master_seed = c.get_size("run.master_seed", r.master_seed);
  r.out_dir = c.get_string("run.out", r.out_dir);
  r.save_checkpoints = c.get_bool("run.save_checkpoints", true);
  r.zero_shot_probe = c.get_bool("eval.zero_shot_probe", false);
  if (c.has("run.seeds")) r.seeds = parse_seed_range(c.get_string("run.seeds", "0"));
  if (!(r.switch_step > 0 && r.switch_step < r.total_steps))
    throw ConfigError("run.switch_step", "need 0 < switch_step < total_steps");
  if (r.eval_period == 0 || r.switch_step % r.eval_period != 0 || r.total_steps % r.eval_period != 0)
    throw ConfigError("run.eval_period", "must be positive and divide switch_step and total_steps");
  if (r.eval_episodes < 1) throw ConfigError("run.eval_episodes", "must be >= 1");
  if (r.seeds.empty()) throw ConfigError("run.seeds", "need at least one seed");

  e.ablation_alphas = c.get_doubles("ablate.alphas", e.ablation_alphas);
  c.reject_unused();
  e.source = c;
  return e;
}

struct ExperimentLogRow {
  std::uint64_t seed = 0;
  std::size_t step = 0;
  std::string phase;  // train | test | error
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  std::optional<double> td_loss;
  std::optional<double> ted_loss;
  std::optional<double> disentanglement_score;
  std::optional<double> zero_shot_return_mean;
  std::string error;
};

inline std::vector<std::string> log_header(bool zero_shot) {
  std::vector<std::string> h{"seed",    "step",    "phase",   "eval_return_mean", "eval_return_std",
                             "td_loss", "ted_loss", "disentanglement_score"};
  if (zero_shot) h.push_back("zero_shot_return_mean");
  return h;
}

inline std::string format_row(const ExperimentLogRow& r, bool zero_shot) {
  std::vector<std::string> f{std::to_string(r.seed), std::to_string(r.step), r.phase};
  if (r.phase == "error") {
    // Error text goes into the first free column with commas stripped.
    std::string msg = r.error;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    f.push_back(msg);
    while (f.size() < log_header(zero_shot).size()) f.emplace_back();
    return csv::join(f);
  }
  f.push_back(csv::number(r.eval_return_mean));
  f.push_back(csv::number(r.eval_return_std));
  f.push_back(csv::number(r.td_loss));
  f.push_back(csv::number(r.ted_loss));
  f.push_back(csv::number(r.disentanglement_score));
  if (zero_shot) f.push_back(csv::number(r.zero_shot_return_mean));
  return csv::join(f);
}

struct EvalStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

/// Greedy returns over `episodes` fresh episodes of a private environment.
inline EvalStats evaluate_policy(const EnvSpec& spec, const AgentParams& p, Phase phase, std::size_t episodes, Rng rng) {
  Env env(spec);
  std::vector<double> returns;
  for (std::size_t e = 0; e < episodes; ++e) {
    auto obs = env.reset(phase, rng);
    double total = 0.0;
    for (;;) {
      const auto a = act(p.encoder, p.q_head, obs.data, 0.0, rng);
      auto r = env.step(a);
      total += r.reward;
      obs = std::move(r.observation);
      if (r.done) break;
    }
    returns.push_back(total);
  }
  EvalStats s;
  for (double v : returns) s.mean += v;
  s.mean /= static_cast<double>(returns.size());
  for (double v : returns) s.stddev += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(returns.size()));
  return s;
}

inline MetricReport score_encoder(const ExperimentConfig& cfg, const DenseNetParams& encoder, Phase phase, Rng rng) {
  EncoderFn f = [&](const Matrix& x) { return forward(encoder, x); };
  return disentanglement_score(f, cfg.env, phase, cfg.metric, rng);
}

/// RNG stream tags. Each consumer owns a stream so that enabling TED does not
/// perturb environment, exploration or batch sampling draws.
enum class Stream : std::uint64_t { env = 1, explore = 2, batch = 3, ted = 4, init = 5, eval = 6, metric = 7 };

inline Rng stream(const ExperimentConfig& cfg, std::uint64_t seed, Stream s, std::uint64_t extra = 0) {
  return Rng::derive(cfg.run.master_seed, {seed, static_cast<std::uint64_t>(s), extra});
}

struct ExperimentResult {
  std::string csv_path;
  std::vector<ExperimentLogRow> rows;
  AgentParams final_params;
  std::optional<DenseNetParams> pre_switch_encoder;
};

/// Called after every learner update with (env step, params).
using UpdateObserver = std::function<void(std::size_t, const AgentParams&)>;

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                                       const UpdateObserver& observer = {}) {
  const auto& run = cfg.run;
  fs::create_directories(run.out_dir);
  ExperimentResult result;
  result.csv_path = (fs::path(run.out_dir) / ("seed_" + std::to_string(seed) + ".csv")).string();
  std::ofstream out(result.csv_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + result.csv_path + "'");
  out << csv::join(log_header(run.zero_shot_probe)) << "\n";
  out.flush();

  Rng env_rng = stream(cfg, seed, Stream::env);
  Rng explore_rng = stream(cfg, seed, Stream::explore);
  Rng batch_rng = stream(cfg, seed, Stream::batch);
  Rng ted_rng = stream(cfg, seed, Stream::ted);
  Rng init_rng = stream(cfg, seed, Stream::init);

  const ClassifierVariant variant = cfg.ted ? cfg.ted->classifier : ClassifierVariant::ted;
  AgentParams params = AgentParams::init(cfg.env, cfg.encoder, cfg.agent, variant, init_rng);
  Env env(cfg.env);
  ReplayBuffer buffer(cfg.replay_capacity);
  const std::size_t num_actions = cfg.env.num_actions();

  Phase phase = Phase::train;
  Observation obs = env.reset(phase, env_rng);
  double td_sum = 0.0, ted_sum = 0.0;
  std::size_t loss_count = 0;
  std::size_t step = 0;

  auto emit = [&](Phase row_phase) {
    ExperimentLogRow row;
    row.seed = seed;
    row.step = step;
    row.phase = to_string(row_phase);
    auto ev = evaluate_policy(cfg.env, params, row_phase, run.eval_episodes, stream(cfg, seed, Stream::eval, step));
    row.eval_return_mean = ev.mean;
    row.eval_return_std = ev.stddev;
    if (run.zero_shot_probe && row_phase == Phase::train)
      row.zero_shot_return_mean =
          evaluate_policy(cfg.env, params, Phase::test, run.eval_episodes, stream(cfg, seed, Stream::eval, step + (1ull << 40)))
              .mean;
    if (loss_count) {
      row.td_loss = td_sum / static_cast<double>(loss_count);
      if (cfg.ted) row.ted_loss = ted_sum / static_cast<double>(loss_count);
    }
    td_sum = ted_sum = 0.0;
    loss_count = 0;
    const bool periodic = run.metric_period && step % run.metric_period == 0;
    if (periodic || step == run.switch_step || step == run.total_steps)
      row.disentanglement_score = score_encoder(cfg, params.encoder, row_phase, stream(cfg, seed, Stream::metric, step)).accuracy;
    if (step == run.switch_step) {
      result.pre_switch_encoder = params.encoder;
      if (run.save_checkpoints)
        save_checkpoint((fs::path(run.out_dir) / ("seed_" + std::to_string(seed) + "_preswitch.ckpt")).string(),
                        params.encoder);
    }
    out << format_row(row, run.zero_shot_probe) << "\n";
    out.flush();
    result.rows.push_back(std::move(row));
  };

  try {
    emit(phase);
    while (step < run.total_steps) {
      const std::size_t a = step < cfg.agent.initial_steps
                                ? explore_rng.index(num_actions)
                                : act(params.encoder, params.q_head, obs.data, cfg.agent.epsilon(step), explore_rng);
      auto sr = env.step(a);
      buffer.push({obs, a, sr.reward, sr.observation, sr.done, obs.episode_id, obs.timestep});
      obs = sr.observation;
      ++step;
      if (step > cfg.agent.initial_steps) {
        for (std::size_t u = 0; u < cfg.agent.updates_per_step; ++u) {
          auto batch = sample_batch(buffer, cfg.agent.batch_size, batch_rng);
          auto losses = joint_update(batch, buffer, params, cfg.encoder, cfg.agent, cfg.ted ? &*cfg.ted : nullptr, ted_rng);
          td_sum += losses.td;
          if (losses.ted) ted_sum += *losses.ted;
          ++loss_count;
          if (observer) observer(step, params);
        }
      }
      const Phase step_phase = phase;
      if (sr.done) {
        if (step >= run.switch_step) phase = Phase::test;
        obs = env.reset(phase, env_rng);
      }
      if (step % run.eval_period == 0) emit(step_phase);
    }
  } catch (const Error& err) {
    ExperimentLogRow row;
    row.seed = seed;
    row.step = step;
    row.phase = "error";
    row.error = err.what();
    out << format_row(row, run.zero_shot_probe) << "\n";
    out.flush();
    throw;
  }
  if (run.save_checkpoints)
    save_checkpoint((fs::path(run.out_dir) / ("seed_" + std::to_string(seed) + "_final.ckpt")).string(), params.encoder);
  result.final_params = std::move(params);
  return result;
}

/// Summary statistics of one return curve around the switch step.
struct CurveSummary {
  double final_train_return = 0.0;
  double dip_depth = 0.0;
  std::optional<double> recovery_step;
  double post_switch_auc = 0.0;
  std::optional<double> pre_switch_score;
  std::optional<double> final_score;
};

struct CurvePoint {
  double step = 0.0;
  std::string phase;
  double value = 0.0;
  std::optional<double> score;
};

/// Pre-switch level P is the return at the last train-phase point. Recovery
/// is the switch step when the first test-phase point is within 5% of P,
/// otherwise the first later test point that is; empty if none is. The area
/// is the trapezoid integral of the return over steps >= the switch step.
inline CurveSummary summarize_curve(const std::vector<CurvePoint>& pts, double switch_step) {
  CurveSummary s;
  std::optional<std::size_t> last_train;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (pts[i].phase == "train") last_train = i;
  if (!last_train) return s;
  const double pre = pts[*last_train].value;
  s.final_train_return = pre;
  s.pre_switch_score = pts[*last_train].score;
  const double threshold = pre - 0.05 * std::abs(pre);
  double lowest = pre;
  bool first = true;
  for (const auto& p : pts) {
    if (p.phase != "test") continue;
    lowest = std::min(lowest, p.value);
    if (!s.recovery_step && p.value >= threshold) s.recovery_step = first ? switch_step : p.step;
    first = false;
  }
  s.dip_depth = std::max(0.0, pre - lowest);
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i - 1].step >= switch_step)
      s.post_switch_auc += 0.5 * (pts[i].value + pts[i - 1].value) * (pts[i].step - pts[i - 1].step);
  for (auto it = pts.rbegin(); it != pts.rend(); ++it)
    if (it->score) {
      s.final_score = it->score;
      break;
    }
  return s;
}

inline std::vector<CurvePoint> curve_from_rows(const std::vector<ExperimentLogRow>& rows) {
  std::vector<CurvePoint> out;
  for (const auto& r : rows)
    if (r.phase != "error")
      out.push_back({static_cast<double>(r.step), r.phase, r.eval_return_mean, r.disentanglement_score});
  return out;
}

struct AggregateRow {
  std::size_t step = 0;
  std::string phase;
  std::size_t seeds = 0;
  EvalStats eval_return;
  std::optional<EvalStats> td_loss, ted_loss, score;
};

namespace detail {
inline std::optional<EvalStats> mean_std(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  EvalStats s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.stddev += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(v.size()));
  return s;
}
}  // namespace detail

/// Per-step mean and population stddev across seeds.
inline std::vector<AggregateRow> aggregate(const std::vector<std::vector<ExperimentLogRow>>& runs) {
  std::map<std::size_t, std::vector<const ExperimentLogRow*>> by_step;
  for (const auto& rows : runs)
    for (const auto& r : rows)
      if (r.phase != "error") by_step[r.step].push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [step, rows] : by_step) {
    AggregateRow a;
    a.step = step;
    a.phase = rows.front()->phase;
    a.seeds = rows.size();
    std::vector<double> ret, td, tl, sc;
    for (const auto* r : rows) {
      ret.push_back(r->eval_return_mean);
      if (r->td_loss) td.push_back(*r->td_loss);
      if (r->ted_loss) tl.push_back(*r->ted_loss);
      if (r->disentanglement_score) sc.push_back(*r->disentanglement_score);
    }
    a.eval_return = *detail::mean_std(ret);
    a.td_loss = detail::mean_std(td);
    a.ted_loss = detail::mean_std(tl);
    a.score = detail::mean_std(sc);
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<std::string> aggregate_header() {
  return {"step",         "phase",       "seeds",         "eval_return_mean",     "eval_return_std",
          "td_loss_mean", "td_loss_std", "ted_loss_mean", "ted_loss_std",         "disentanglement_mean",
          "disentanglement_std"};
}

inline void write_aggregate(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << csv::join(aggregate_header()) << "\n";
  auto pair = [](const std::optional<EvalStats>& s) {
    return std::pair{s ? csv::number(s->mean) : std::string(), s ? csv::number(s->stddev) : std::string()};
  };
  for (const auto& r : rows) {
    auto [tdm, tds] = pair(r.td_loss);
    auto [tlm, tls] = pair(r.ted_loss);
    auto [scm, scs] = pair(r.score);
    out << csv::join({std::to_string(r.step), r.phase, std::to_string(r.seeds), csv::number(r.eval_return.mean),
                      csv::number(r.eval_return.stddev), tdm, tds, tlm, tls, scm, scs})
        << "\n";
  }
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<ExperimentLogRow> rows;
  CurveSummary summary;
  std::optional<DenseNetParams> pre_switch_encoder;
};

struct SuiteResult {
  std::vector<SeedOutcome> seeds;
  std::vector<AggregateRow> aggregate;
  CurveSummary mean_summary;
  std::string aggregate_path;
  std::string summary_path;

  std::size_t succeeded() const {
    return static_cast<std::size_t>(std::count_if(seeds.begin(), seeds.end(), [](const auto& s) { return s.ok; }));
  }
};

inline std::vector<std::string> summary_header() {
  return {"seed",           "status",           "final_train_return", "dip_depth", "recovery_step",
          "post_switch_auc", "pre_switch_score", "final_score"};
}

inline std::string summary_row(const std::string& seed, const std::string& status, const CurveSummary& s) {
  return csv::join({seed, status, csv::number(s.final_train_return), csv::number(s.dip_depth),
                    csv::number(s.recovery_step), csv::number(s.post_switch_auc), csv::number(s.pre_switch_score),
                    csv::number(s.final_score)});
}

/// Runs every seed (in parallel up to the hardware thread count), then writes
/// aggregate.csv and summary.csv to the output directory.
inline SuiteResult run_suite(const ExperimentConfig& cfg) {
  const auto& seeds = cfg.run.seeds;
  if (seeds.empty()) throw ConfigError("run.seeds", "need at least one seed");
  fs::create_directories(cfg.run.out_dir);
  SuiteResult res;
  res.seeds.resize(seeds.size());
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t begin = 0; begin < seeds.size(); begin += workers) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = begin; i < std::min(seeds.size(), begin + workers); ++i) {
      jobs.push_back(std::async(std::launch::async, [&, i] {
        auto& o = res.seeds[i];
        o.seed = seeds[i];
        try {
          auto r = run_experiment(cfg, seeds[i]);
          o.rows = std::move(r.rows);
          o.pre_switch_encoder = std::move(r.pre_switch_encoder);
          o.summary = summarize_curve(curve_from_rows(o.rows), static_cast<double>(cfg.run.switch_step));
          o.ok = true;
        } catch (const Error& e) {
          o.error = e.what();
        }
      }));
    }
    for (auto& j : jobs) j.get();
  }

  std::vector<std::vector<ExperimentLogRow>> ok_rows;
  for (const auto& s : res.seeds)
    if (s.ok) ok_rows.push_back(s.rows);
  res.aggregate = aggregate(ok_rows);
  res.aggregate_path = (fs::path(cfg.run.out_dir) / "aggregate.csv").string();
  write_aggregate(res.aggregate_path, res.aggregate);

  std::vector<CurvePoint> mean_curve;
  for (const auto& a : res.aggregate)
    mean_curve.push_back({static_cast<double>(a.step), a.phase, a.eval_return.mean,
                          a.score ? std::optional<double>(a.score->mean) : std::nullopt});
  res.mean_summary = summarize_curve(mean_curve, static_cast<double>(cfg.run.switch_step));

  res.summary_path = (fs::path(cfg.run.out_dir) / "summary.csv").string();
  std::ofstream out(res.summary_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + res.summary_path + "'");
  out << csv::join(summary_header()) << "\n";
  for (const auto& s : res.seeds) {
    if (s.ok) {
      out << summary_row(std::to_string(s.seed), "ok", s.summary) << "\n";
    } else {
      std::string msg = s.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      out << summary_row(std::to_string(s.seed), "failed: " + msg, CurveSummary{}) << "\n";
    }
  }
  out << summary_row("mean", "aggregate", res.mean_summary) << "\n";
  return res;
}

struct AblationVariant {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
  Config config;
};

/// Full TED, X'-only, X''-only, linear classifier, then one arm per alpha.
inline std::vector<AblationVariant> ablation_variants(const Config& base, const std::vector<double>& alphas) {
  std::vector<AblationVariant> out;
  auto add = [&](std::string name, std::vector<std::pair<std::string, std::string>> ov) {
    Config c = base;
    c.set("ted.enabled", "true");
    for (const auto& [k, v] : ov) c.set(k, v);
    out.push_back({std::move(name), std::move(ov), std::move(c)});
  };
  add("full", {});
  add("x_prime_only", {{"ted.samples", "x_prime"}});
  add("x_dprime_only", {{"ted.samples", "x_dprime"}});
  add("linear_classifier", {{"ted.classifier", "linear"}});
  for (double a : alphas) add("alpha_" + csv::number(a), {{"ted.alpha", csv::number(a)}});
  return out;
}

struct AblationRow {
  std::string name;
  std::string overrides;
  std::size_t seeds_ok = 0;
  double post_switch_auc = 0.0;
  std::optional<double> final_score;
  std::vector<double> per_seed_final_score;
  std::size_t auc_rank = 0;
  std::size_t score_rank = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // sorted by auc_rank
  std::string summary_path;
};

inline AblationResult run_ablations(const Config& base, const std::string& out_dir) {
  const auto probe = ExperimentConfig::from_config(base);
  AblationResult res;
  for (auto& v : ablation_variants(base, probe.ablation_alphas)) {
    Config c = v.config;
    c.set("run.out", (fs::path(out_dir) / v.name).string());
    auto suite = run_suite(ExperimentConfig::from_config(c));
    AblationRow row;
    row.name = v.name;
    for (const auto& [k, val] : v.overrides) row.overrides += (row.overrides.empty() ? "" : ";") + k + "=" + val;
    row.seeds_ok = suite.succeeded();
    double auc = 0.0;
    std::vector<double> finals;
    for (const auto& s : suite.seeds)
      if (s.ok) {
        auc += s.summary.post_switch_auc;
        if (s.summary.final_score) finals.push_back(*s.summary.final_score);
      }
    row.post_switch_auc = row.seeds_ok ? auc / static_cast<double>(row.seeds_ok) : 0.0;
    row.per_seed_final_score = finals;
    if (!finals.empty()) {
      double m = 0.0;
      for (double f : finals) m += f;
      row.final_score = m / static_cast<double>(finals.size());
    }
    res.rows.push_back(std::move(row));
  }
  std::vector<std::size_t> order(res.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return res.rows[a].final_score.value_or(-1.0) > res.rows[b].final_score.value_or(-1.0);
  });
  for (std::size_t r = 0; r < order.size(); ++r) res.rows[order[r]].score_rank = r + 1;
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return res.rows[a].post_switch_auc > res.rows[b].post_switch_auc; });
  for (std::size_t r = 0; r < order.size(); ++r) res.rows[order[r]].auc_rank = r + 1;
  std::sort(res.rows.begin(), res.rows.end(), [](const auto& a, const auto& b) { return a.auc_rank < b.auc_rank; });

  fs::create_directories(out_dir);
  res.summary_path = (fs::path(out_dir) / "ablation_summary.csv").string();
  std::ofstream out(res.summary_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + res.summary_path + "'");
  out << "variant,overrides,seeds_ok,post_switch_auc_mean,final_score_mean,auc_rank,score_rank\n";
  for (const auto& r : res.rows)
    out << csv::join({r.name, r.overrides, std::to_string(r.seeds_ok), csv::number(r.post_switch_auc),
                      csv::number(r.final_score), std::to_string(r.auc_rank), std::to_string(r.score_rank)})
        << "\n";
  return res;
}

}  // namespace ted
