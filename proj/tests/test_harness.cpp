#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "support.hpp"

using namespace ted;

namespace {

Config tiny(const std::string& out) {
  auto c = Config::parse_string(R"(
factors.num_episodic = 1
factors.num_dynamic = 1
mixer.obs_dim = 6
mixer.frame_stack = 2
env.horizon = 10
env.goal = 0.3
encoder.hidden = 8
agent.q_hidden = 8
agent.batch_size = 16
agent.initial_steps = 50
agent.epsilon_decay = 100
agent.target_sync = 20
run.total_steps = 400
run.switch_step = 200
run.eval_period = 100
run.eval_episodes = 2
run.metric_period = 0
run.save_checkpoints = false
metric.samples = 100
metric.iterations = 50
run.seeds = 0..2
)");
  c.set("run.out", out);
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<double> parse_attr(const std::string& svg, const std::string& group, const std::string& attr) {
  std::regex re("class=\"" + group + "\"[^>]*" + attr + "=\"([^\"]*)\"");
  std::smatch m;
  if (!std::regex_search(svg, m, re)) return {};
  std::istringstream is(m[1].str());
  std::vector<double> out;
  for (double v; is >> v;) out.push_back(v);
  return out;
}

ExperimentLogRow row(std::uint64_t seed, std::size_t step, const std::string& phase, double ret,
                     std::optional<double> td = std::nullopt, std::optional<double> score = std::nullopt) {
  ExperimentLogRow r;
  r.seed = seed;
  r.step = step;
  r.phase = phase;
  r.eval_return_mean = ret;
  r.td_loss = td;
  r.disentanglement_score = score;
  return r;
}

}  // namespace

TEST(Harness, ConfigDefaultsAndValidation) {
  auto e = ExperimentConfig::from_config(Config());
  EXPECT_EQ(e.env.factors.num_factors(), 4u);
  EXPECT_EQ(e.env.observation_dim(), 16u * 3u);
  EXPECT_EQ(e.agent.batch_size, 128u);
  EXPECT_EQ(e.run.seeds.size(), 5u);
  EXPECT_EQ(e.run.eval_episodes, 10u);
  EXPECT_TRUE(e.ted.has_value());
  EXPECT_EQ(e.ablation_alphas, (std::vector<double>{0.1, 1.0, 10.0}));
  EXPECT_EQ(e.replay_capacity, 100000u);

  auto bad = Config();
  bad.set("run.switch_step", "20000");
  try {
    ExperimentConfig::from_config(bad);
    FAIL();
  } catch (const ConfigError& err) {
    EXPECT_EQ(err.key(), "run.switch_step");
    EXPECT_EQ(err.exit_code(), 2);
  }
  auto unknown = Config();
  unknown.set("ted.alhpa", "1");
  EXPECT_THROW(ExperimentConfig::from_config(unknown), ConfigError);
  EXPECT_THROW(Config::parse_string("a = 1\nno equals here\n"), ParseError);
  EXPECT_EQ(parse_seed_range("2..4"), (std::vector<std::uint64_t>{2, 3, 4}));
}

TEST(Harness, RunIsReproducibleByteForByte) {
  auto a = test::scratch_dir("det_a"), b = test::scratch_dir("det_b");
  auto ca = ExperimentConfig::from_config(tiny(a));
  auto cb = ExperimentConfig::from_config(tiny(b));
  run_experiment(ca, 1);
  run_experiment(cb, 1);
  const auto la = slurp(a + "/seed_1.csv");
  EXPECT_FALSE(la.empty());
  EXPECT_EQ(la, slurp(b + "/seed_1.csv"));
}

TEST(Harness, LogSchemaAndStrictlyIncreasingSteps) {
  auto dir = test::scratch_dir("schema");
  auto c = tiny(dir);
  c.set("run.metric_period", "200");
  auto res = run_experiment(ExperimentConfig::from_config(c), 0);
  auto t = csv::read(res.csv_path);
  EXPECT_EQ(t.header, log_header(false));
  ASSERT_EQ(t.rows.size(), 5u);
  for (std::size_t r = 1; r < t.rows.size(); ++r) EXPECT_GT(*t.value(r, 1), *t.value(r - 1, 1));
  // Score at metric multiples, the switch step and the final step.
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto step = static_cast<std::size_t>(*t.value(r, 1));
    EXPECT_EQ(t.value(r, t.column("disentanglement_score")).has_value(), step % 200 == 0) << step;
  }
  EXPECT_FALSE(t.value(0, t.column("td_loss")).has_value());
  EXPECT_TRUE(t.value(2, t.column("td_loss")).has_value());
}

TEST(Harness, PhaseFlipsAtFirstResetAfterSwitch) {
  auto dir = test::scratch_dir("phase");
  auto c = tiny(dir);
  c.set("env.horizon", "30");
  c.set("run.eval_period", "10");
  c.set("run.total_steps", "300");
  c.set("run.eval_episodes", "1");
  auto res = run_experiment(ExperimentConfig::from_config(c), 0);
  // Episodes end at multiples of 30, so the first reset at or after 200 is
  // at 210; the row for step 210 still reports the train episode it closed.
  for (const auto& r : res.rows) EXPECT_EQ(r.phase, r.step <= 210 ? "train" : "test") << r.step;
}

TEST(Harness, NoTestValueObservedBeforeSwitch) {
  auto dir = test::scratch_dir("protocol");
  auto c = tiny(dir);
  c.set("mixer.mode", "linear");
  auto cfg = ExperimentConfig::from_config(c);
  // Recover the episodic factor of every stored anchor from the linear mixer.
  const Matrix pinv = cfg.env.mixer.mixing().completeOrthogonalDecomposition().pseudoInverse();
  const auto& test_range = cfg.env.factors.episodic_test()[0];
  std::size_t checked = 0;
  Env env(cfg.env);
  Rng env_rng = stream(cfg, 0, Stream::env);
  // Replays the harness's env stream: the phase switches only at resets.
  Phase phase = Phase::train;
  auto obs = env.reset(phase, env_rng);
  for (std::size_t step = 1; step <= cfg.run.total_steps; ++step) {
    auto r = env.step(0);
    const Vector frame = r.observation.data.tail(static_cast<Eigen::Index>(cfg.env.mixer.obs_dim()));
    const double episodic = (pinv * frame)[0];
    if (step <= cfg.run.switch_step) {
      EXPECT_FALSE(test_range.contains(episodic + 1e-9) && test_range.contains(episodic - 1e-9)) << step;
      ++checked;
    }
    if (r.done) {
      if (step >= cfg.run.switch_step) phase = Phase::test;
      obs = env.reset(phase, env_rng);
    }
  }
  EXPECT_EQ(checked, cfg.run.switch_step);
}

TEST(Harness, AlphaZeroMatchesDisabledRun) {
  auto a = test::scratch_dir("alpha0_a"), b = test::scratch_dir("alpha0_b");
  auto ca = tiny(a);
  ca.set("ted.enabled", "false");
  auto cb = tiny(b);
  cb.set("ted.alpha", "0");
  std::vector<DenseNetParams> ta, tb;
  auto ra = run_experiment(ExperimentConfig::from_config(ca), 2, [&](std::size_t, const AgentParams& p) { ta.push_back(p.encoder); });
  auto rb = run_experiment(ExperimentConfig::from_config(cb), 2, [&](std::size_t, const AgentParams& p) { tb.push_back(p.encoder); });
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) ASSERT_TRUE(ta[i] == tb[i]) << "update " << i;
  ASSERT_EQ(ra.rows.size(), rb.rows.size());
  for (std::size_t i = 0; i < ra.rows.size(); ++i) {
    EXPECT_EQ(ra.rows[i].eval_return_mean, rb.rows[i].eval_return_mean);
    EXPECT_EQ(ra.rows[i].td_loss, rb.rows[i].td_loss);
  }
}

TEST(Harness, FailureAppendsErrorRowAndKeepsLog) {
  auto dir = test::scratch_dir("failure");
  auto c = tiny(dir);
  c.set("replay.capacity", "8");
  c.set("agent.batch_size", "4");
  c.set("agent.initial_steps", "20");
  auto cfg = ExperimentConfig::from_config(c);
  EXPECT_THROW(run_experiment(cfg, 0), InsufficientDiversityError);
  auto t = csv::read(dir + "/seed_0.csv");
  ASSERT_GE(t.rows.size(), 2u);
  EXPECT_EQ(t.rows.front()[2], "train");
  EXPECT_EQ(t.rows.back()[2], "error");
  EXPECT_EQ(t.rows.back().size(), t.header.size());
}

TEST(Harness, SingletonAggregateEqualsRun) {
  std::vector<ExperimentLogRow> rows{row(0, 0, "train", -3.0, std::nullopt, 0.5), row(0, 100, "train", -2.0, 0.4),
                                     row(0, 200, "test", -4.0, 0.3, 0.6)};
  auto agg = aggregate({rows});
  ASSERT_EQ(agg.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(agg[i].step, rows[i].step);
    EXPECT_EQ(agg[i].eval_return.mean, rows[i].eval_return_mean);
    EXPECT_EQ(agg[i].eval_return.stddev, 0.0);
    EXPECT_EQ(agg[i].seeds, 1u);
  }
  EXPECT_FALSE(agg[0].td_loss.has_value());
  EXPECT_EQ(agg[2].score->mean, 0.6);
}

TEST(Harness, AggregateMatchesIndependentRecomputation) {
  const double ret[3][3] = {{-5.0, -3.5, -2.25}, {-4.0, -3.0, -1.0}, {-6.5, -2.0, -2.75}};
  const double td[3][3] = {{0.0, 0.8, 0.3}, {0.0, 0.6, 0.2}, {0.0, 0.7, 0.7}};
  std::vector<std::vector<ExperimentLogRow>> runs(3);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < 3; ++i)
      runs[s].push_back(row(s, 100 * i, i < 2 ? "train" : "test", ret[s][i], i ? std::optional<double>(td[s][i]) : std::nullopt));
  auto dir = test::scratch_dir("agg");
  write_aggregate(dir + "/aggregate.csv", aggregate(runs));
  auto t = csv::read(dir + "/aggregate.csv");
  EXPECT_EQ(t.header, aggregate_header());
  ASSERT_EQ(t.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    // Spreadsheet-style: AVERAGE and STDEV.P over the three seeds.
    const double m = (ret[0][i] + ret[1][i] + ret[2][i]) / 3.0;
    const double sd = std::sqrt(((ret[0][i] - m) * (ret[0][i] - m) + (ret[1][i] - m) * (ret[1][i] - m) +
                                 (ret[2][i] - m) * (ret[2][i] - m)) / 3.0);
    EXPECT_NEAR(*t.value(i, t.column("eval_return_mean")), m, 1e-8);
    EXPECT_NEAR(*t.value(i, t.column("eval_return_std")), sd, 1e-8);
    EXPECT_EQ(*t.value(i, t.column("seeds")), 3.0);
    if (i) {
      const double tm = (td[0][i] + td[1][i] + td[2][i]) / 3.0;
      EXPECT_NEAR(*t.value(i, t.column("td_loss_mean")), tm, 1e-8);
    } else {
      EXPECT_FALSE(t.value(i, t.column("td_loss_mean")).has_value());
    }
  }
}

TEST(Harness, RecoveryStepDefinition) {
  std::vector<CurvePoint> never_dips{{0, "train", -10.0, {}}, {100, "train", -5.0, 0.7}, {200, "test", -4.9, {}},
                                     {300, "test", -4.0, 0.8}};
  auto s = summarize_curve(never_dips, 100);
  ASSERT_TRUE(s.recovery_step.has_value());
  EXPECT_EQ(*s.recovery_step, 100.0);
  EXPECT_EQ(s.dip_depth, 0.0);
  EXPECT_EQ(*s.pre_switch_score, 0.7);
  EXPECT_EQ(*s.final_score, 0.8);
  EXPECT_DOUBLE_EQ(s.post_switch_auc, 0.5 * (-5.0 - 4.9) * 100 + 0.5 * (-4.9 - 4.0) * 100);

  std::vector<CurvePoint> dips{{100, "train", -5.0, {}}, {200, "test", -9.0, {}}, {300, "test", -5.3, {}},
                               {400, "test", -5.2, {}}};
  auto d = summarize_curve(dips, 100);
  EXPECT_EQ(*d.recovery_step, 400.0);  // threshold -5.25
  EXPECT_DOUBLE_EQ(d.dip_depth, 4.0);

  std::vector<CurvePoint> never{{100, "train", -5.0, {}}, {200, "test", -9.0, {}}};
  EXPECT_FALSE(summarize_curve(never, 100).recovery_step.has_value());
}

TEST(Harness, SuiteWritesAggregateAndSummary) {
  auto dir = test::scratch_dir("suite");
  auto res = run_suite(ExperimentConfig::from_config(tiny(dir)));
  EXPECT_EQ(res.succeeded(), 3u);
  auto agg = csv::read(res.aggregate_path);
  EXPECT_EQ(agg.rows.size(), 5u);
  auto sum = csv::read(res.summary_path);
  EXPECT_EQ(sum.header, summary_header());
  ASSERT_EQ(sum.rows.size(), 4u);
  EXPECT_EQ(sum.rows.back()[0], "mean");
  // Independent per-seed logs reproduce the aggregate.
  for (std::size_t r = 0; r < agg.rows.size(); ++r) {
    double m = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s) m += *csv::read(dir + "/seed_" + std::to_string(s) + ".csv").value(r, 3);
    EXPECT_NEAR(*agg.value(r, agg.column("eval_return_mean")), m / 3.0, 1e-8);
  }
}

TEST(Harness, AblationVariantsDifferOnlyInIntendedKeys) {
  auto base = tiny("unused");
  const std::vector<double> alphas{0.1, 1.0, 10.0};
  auto v = ablation_variants(base, alphas);
  ASSERT_EQ(v.size(), 4u + alphas.size());
  std::vector<std::string> names;
  for (const auto& x : v) names.push_back(x.name);
  EXPECT_EQ(names, (std::vector<std::string>{"full", "x_prime_only", "x_dprime_only", "linear_classifier", "alpha_0.1",
                                             "alpha_1", "alpha_10"}));
  const auto base_text = base.to_string();
  for (const auto& x : v) {
    Config expect = base;
    expect.set("ted.enabled", "true");
    for (const auto& [k, val] : x.overrides) expect.set(k, val);
    EXPECT_EQ(x.config.to_string(), expect.to_string()) << x.name;
    EXPECT_LE(x.overrides.size(), 1u);
  }
  EXPECT_EQ(v[1].overrides.front(), (std::pair<std::string, std::string>{"ted.samples", "x_prime"}));
  EXPECT_EQ(v[3].overrides.front(), (std::pair<std::string, std::string>{"ted.classifier", "linear"}));
}

TEST(Harness, SampleKindVariantsShareTrajectoryUntilFirstUpdate) {
  auto a = test::scratch_dir("shared_a"), b = test::scratch_dir("shared_b");
  auto ca = tiny(a);
  auto cb = tiny(b);
  cb.set("ted.samples", "x_prime");
  std::vector<DenseNetParams> ea, eb;
  run_experiment(ExperimentConfig::from_config(ca), 0, [&](std::size_t, const AgentParams& p) { ea.push_back(p.encoder); });
  run_experiment(ExperimentConfig::from_config(cb), 0, [&](std::size_t, const AgentParams& p) { eb.push_back(p.encoder); });
  const auto la = slurp(a + "/seed_0.csv"), lb = slurp(b + "/seed_0.csv");
  // Identical step-0 rows (same init, same eval stream) but diverged later.
  EXPECT_EQ(la.substr(0, la.find('\n', la.find('\n') + 1)), lb.substr(0, lb.find('\n', lb.find('\n') + 1)));
  ASSERT_FALSE(ea.empty());
  EXPECT_FALSE(ea.front() == eb.front());
}

TEST(Harness, RunAblationsWritesRankedSummary) {
  auto dir = test::scratch_dir("ablate");
  auto c = tiny(dir);
  c.set("run.seeds", "0");
  c.set("ablate.alphas", "0.5");
  auto res = run_ablations(c, dir);
  ASSERT_EQ(res.rows.size(), 5u);
  auto t = csv::read(res.summary_path);
  EXPECT_EQ(t.rows.size(), 5u);
  std::vector<std::size_t> ranks;
  for (const auto& r : res.rows) ranks.push_back(r.score_rank);
  std::sort(ranks.begin(), ranks.end());
  EXPECT_EQ(ranks, (std::vector<std::size_t>{1, 2, 3, 4, 5}));
}

TEST(Harness, PlotsParseBackToAggregate) {
  auto dir = test::scratch_dir("plot");
  const std::string path = dir + "/aggregate.csv";
  std::vector<std::vector<ExperimentLogRow>> runs(2);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < 5; ++i)
      runs[s].push_back(row(s, 100 * i, i <= 2 ? "train" : "test", -1.0 * i - 0.3 * s, 0.1 * i + 0.01 * s,
                            i % 2 ? std::optional<double>(0.5 + 0.1 * s) : std::nullopt));
  const auto agg = aggregate(runs);
  write_aggregate(path, agg);
  auto files = emit_plots(path, dir + "/plots", 200.0);
  ASSERT_EQ(files.size(), 2u);  // no TED loss column values
  const auto svg = slurp(dir + "/plots/return.svg");
  const auto steps = parse_attr(svg, "band", "data-steps");
  const auto upper = parse_attr(svg, "band", "data-upper");
  const auto lower = parse_attr(svg, "band", "data-lower");
  ASSERT_EQ(steps.size(), agg.size());
  for (std::size_t i = 0; i < agg.size(); ++i) {
    EXPECT_EQ(steps[i], static_cast<double>(agg[i].step));
    EXPECT_NEAR(upper[i], agg[i].eval_return.mean + agg[i].eval_return.stddev, 1e-8);
    EXPECT_NEAR(lower[i], agg[i].eval_return.mean - agg[i].eval_return.stddev, 1e-8);
  }
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(svg.find("data-step=\"200\""), std::string::npos);
  const auto score_svg = slurp(dir + "/plots/disentanglement.svg");
  EXPECT_EQ(parse_attr(score_svg, "mean", "data-steps"), (std::vector<double>{100, 300}));
}

TEST(Harness, EmptyOrMalformedAggregateIsRejected) {
  auto dir = test::scratch_dir("plot_err");
  {
    std::ofstream os(dir + "/empty.csv");
    os << csv::join(aggregate_header()) << "\n";
  }
  EXPECT_THROW(emit_plots(dir + "/empty.csv", dir + "/out"), ParseError);
  EXPECT_FALSE(std::filesystem::exists(dir + "/out/return.svg"));
  {
    std::ofstream os(dir + "/bad.csv");
    os << csv::join(aggregate_header()) << "\n0,train,1,-1,0,,,,,,\n100,train,1\n";
  }
  try {
    emit_plots(dir + "/bad.csv", dir + "/out");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}
