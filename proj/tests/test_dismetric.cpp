#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace ted;

namespace {

// Observations of the identity env are the raw factors.
Matrix identity(const Matrix& x) { return x; }

Matrix random_rotation(Eigen::Index k, Rng& rng) {
  Matrix g(k, k);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ();
}

std::vector<MetricSample> blobs(std::size_t per_class, Rng& rng) {
  const double cx[3] = {0.0, 2.0, 0.0};
  const double cy[3] = {0.0, 0.0, 2.0};
  std::vector<MetricSample> out;
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      Vector x(2);
      x << cx[c] + 0.9 * rng.normal(), cy[c] + 0.9 * rng.normal();
      out.push_back({x, c});
    }
  return out;
}

// Multinomial logistic regression by coordinate-wise grid search with a
// shrinking step: class 0 pinned at zero, six free parameters.
struct GridFit {
  Eigen::Matrix<double, 3, 3> w = Eigen::Matrix<double, 3, 3>::Zero();  // rows: class; cols: x, y, bias

  std::size_t predict(const Vector& x) const {
    Eigen::Vector3d s = w.leftCols(2) * x + w.col(2);
    Eigen::Index best;
    s.maxCoeff(&best);
    return static_cast<std::size_t>(best);
  }

  double objective(const std::vector<MetricSample>& d, double l1) const {
    double loss = 0.0;
    for (const auto& s : d) {
      Eigen::Vector3d v = w.leftCols(2) * s.z_diff + w.col(2);
      const double m = v.maxCoeff();
      loss += m + std::log((v.array() - m).exp().sum()) - v[static_cast<Eigen::Index>(s.fixed_factor)];
    }
    return loss / static_cast<double>(d.size()) + l1 * w.leftCols(2).cwiseAbs().sum();
  }

  static GridFit fit(const std::vector<MetricSample>& d, double l1) {
    GridFit g;
    for (double step = 2.0; step > 1e-3; step /= 2.0)
      for (int sweep = 0; sweep < 6; ++sweep)
        for (int r = 1; r < 3; ++r)
          for (int c = 0; c < 3; ++c) {
            const double centre = g.w(r, c);
            double best = std::numeric_limits<double>::infinity();
            double arg = centre;
            for (int k = -8; k <= 8; ++k) {
              g.w(r, c) = centre + k * step / 8.0;
              const double o = g.objective(d, l1);
              if (o < best) {
                best = o;
                arg = g.w(r, c);
              }
            }
            g.w(r, c) = arg;
          }
    return g;
  }
};

}  // namespace

TEST(Dismetric, FixedFactorAgreesAndOthersDiffer) {
  auto spec = test::nonlinear_env(2, 2);
  Rng rng(1);
  std::size_t differ = 0, total = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = rng.index(4);
    auto p = gen_fixed_factor_pair(spec, Phase::train, k, rng);
    ASSERT_EQ(p.first_factors.size(), spec.mixer.frame_stack());
    for (std::size_t j = 0; j < p.first_factors.size(); ++j) {
      EXPECT_EQ(p.first_factors[j][static_cast<Eigen::Index>(k)], p.second_factors[j][static_cast<Eigen::Index>(k)]);
      for (Eigen::Index f = 0; f < 4; ++f)
        if (f != static_cast<Eigen::Index>(k)) {
          ++total;
          differ += p.first_factors[j][f] != p.second_factors[j][f];
        }
    }
    EXPECT_EQ(p.first.data, render_stack(p.first_factors, spec.mixer));
  }
  EXPECT_EQ(differ, total);
}

TEST(Dismetric, EpisodicFactorsConstantAcrossPairTrajectory) {
  auto spec = test::nonlinear_env(2, 2);
  Rng rng(2);
  auto p = gen_fixed_factor_pair(spec, Phase::test, 3, rng);
  for (const auto& f : p.first_factors) {
    EXPECT_EQ(f.head(2), p.first_factors.back().head(2));
    EXPECT_TRUE(spec.factors.episodic_test()[0].contains(f[0]));
  }
  EXPECT_THROW(gen_fixed_factor_pair(spec, Phase::train, 4, rng), ShapeError);
}

TEST(Dismetric, ZDiffExamples) {
  Vector a(2), b(2);
  a << 0.2, 0.5;
  b << 0.2, 0.9;
  const Vector z = z_diff(identity, {{a, b}});
  EXPECT_EQ(z[0], 0.0);
  EXPECT_NEAR(z[1], 0.4, 1e-15);
  EXPECT_EQ(z_diff(identity, {{a, a}, {b, b}}), Vector::Zero(2));
  Vector c(2);
  c << -0.3, 0.1;
  const Vector one = z_diff(identity, {{a, b}, {c, a}});
  const Vector two = z_diff(identity, {{a, b}, {c, a}, {a, b}, {c, a}});
  EXPECT_EQ(two, 2.0 * one);
  EXPECT_THROW(z_diff(identity, {}), ShapeError);
}

TEST(Dismetric, SeparableFeaturesTrainPerfectly) {
  std::vector<MetricSample> s;
  for (int i = 0; i < 60; ++i) s.push_back({Vector::Unit(3, i % 3), static_cast<std::size_t>(i % 3)});
  MetricConfig cfg;
  auto probe = train_probe(s, 3, cfg);
  EXPECT_EQ(evaluate_probe(probe, s, 3).accuracy, 1.0);
}

TEST(Dismetric, UninformativeFeaturesGiveMajorityPrior) {
  std::vector<MetricSample> s;
  for (int i = 0; i < 100; ++i) s.push_back({Vector::Ones(2), static_cast<std::size_t>(i < 60 ? 0 : (i < 80 ? 1 : 2))});
  auto probe = train_probe(s, 3, MetricConfig{});
  EXPECT_NEAR(evaluate_probe(probe, s, 3).accuracy, 0.6, 1e-12);
}

TEST(Dismetric, MissingClassIsDegenerate) {
  std::vector<MetricSample> s{{Vector::Ones(2), 0}, {Vector::Zero(2), 1}};
  EXPECT_THROW(train_probe(s, 3, MetricConfig{}), DegenerateSplitError);
}

TEST(Dismetric, ProbeMatchesGridSearchFit) {
  Rng rng(3);
  auto train = blobs(60, rng);
  auto test_set = blobs(200, rng);
  MetricConfig cfg;
  cfg.probe_iterations = 2000;
  auto probe = train_probe(train, 3, cfg);
  auto grid = GridFit::fit(train, cfg.l1_strength);
  double grid_hits = 0.0;
  for (const auto& s : test_set) grid_hits += grid.predict(s.z_diff) == s.fixed_factor;
  const double grid_acc = grid_hits / static_cast<double>(test_set.size());
  const double probe_acc = evaluate_probe(probe, test_set, 3).accuracy;
  EXPECT_NEAR(probe_acc, grid_acc, 0.02);
  EXPECT_GT(probe_acc, 0.7);
}

TEST(Dismetric, ReportAccuracyIsCountWeightedMean) {
  Rng rng(4);
  auto data = blobs(40, rng);
  data.resize(100);
  auto probe = train_probe(data, 3, MetricConfig{});
  auto rep = evaluate_probe(probe, data, 3);
  double weighted = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    weighted += rep.per_factor_accuracy[c] * static_cast<double>(rep.per_factor_count[c]);
    n += rep.per_factor_count[c];
  }
  EXPECT_NEAR(rep.accuracy, weighted / static_cast<double>(n), 1e-12);
}

TEST(Dismetric, IdentityEncoderScoresHigh) {
  auto spec = test::identity_env(2, 3, 1);
  MetricConfig cfg;
  Rng rng(5);
  auto rep = disentanglement_score(identity, spec, Phase::train, cfg, rng);
  EXPECT_GE(rep.accuracy, 0.95);
  EXPECT_LE(rep.accuracy, 1.0);
}

TEST(Dismetric, FixedCoordinateOfDisentangledCodeIsExactlyZero) {
  auto spec = test::identity_env(2, 2, 1);
  Rng rng(6);
  MetricConfig cfg;
  cfg.total_samples = 50;
  cfg.train_fraction = 0.8;
  for (const auto& s : generate_metric_samples(identity, spec, Phase::train, cfg, rng)) {
    for (Eigen::Index k = 0; k < 4; ++k) {
      if (k == static_cast<Eigen::Index>(s.fixed_factor))
        EXPECT_EQ(s.z_diff[k], 0.0);
      else
        EXPECT_GT(s.z_diff[k], 0.0);
    }
  }
}

TEST(Dismetric, ShuffledLabelsGiveChance) {
  auto spec = test::identity_env(2, 3, 1);
  MetricConfig cfg;
  cfg.shuffle_labels = true;
  Rng rng(7);
  auto rep = disentanglement_score(identity, spec, Phase::train, cfg, rng);
  EXPECT_NEAR(rep.accuracy, 0.2, 0.1);
}

TEST(Dismetric, RotationScoresWellBelowIdentity) {
  auto spec = test::identity_env(2, 3, 1);
  Rng rot_rng(8);
  const Matrix q = random_rotation(5, rot_rng);
  EncoderFn rotated = [&](const Matrix& x) { return Matrix(q * x); };
  MetricConfig cfg;
  Rng a(9), b(9);
  const double id = disentanglement_score(identity, spec, Phase::train, cfg, a).accuracy;
  const double rot = disentanglement_score(rotated, spec, Phase::train, cfg, b).accuracy;
  EXPECT_GE(id - rot, 0.2);
}

TEST(Dismetric, ScoreIsPermutationInvariantAndReproducible) {
  auto spec = test::identity_env(2, 2, 1);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  EncoderFn permuted = [&](const Matrix& x) { return Matrix(perm * x); };
  MetricConfig cfg;
  cfg.total_samples = 500;
  Rng a(10), b(10), c(10);
  const auto r1 = disentanglement_score(identity, spec, Phase::train, cfg, a);
  const auto r2 = disentanglement_score(identity, spec, Phase::train, cfg, b);
  const auto r3 = disentanglement_score(permuted, spec, Phase::train, cfg, c);
  EXPECT_EQ(r1.accuracy, r2.accuracy);
  EXPECT_EQ(r1.probe.weights, r2.probe.weights);
  EXPECT_NEAR(r1.accuracy, r3.accuracy, 0.01);
}

TEST(Dismetric, ConfigValidation) {
  MetricConfig cfg;
  cfg.total_samples = 7;
  EXPECT_THROW(cfg.validate(), ConfigError);
  MetricConfig zero_b;
  zero_b.pairs_per_sample = 0;
  EXPECT_THROW(zero_b.validate(), ConfigError);
  auto spec = test::identity_env(1, 1, 1);
  MetricConfig ok;
  ok.total_samples = 100;
  Rng rng(11);
  EXPECT_NO_THROW(disentanglement_score(identity, spec, Phase::train, ok, rng));
}

TEST(Dismetric, MatchedCorrelationRecoversPermutedScaledFactors) {
  Rng rng(12);
  Matrix f(3, 400);
  for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = rng.uniform(-1.0, 1.0);
  Matrix z(5, 400);
  z.row(0) = -2.0 * f.row(2);
  z.row(1) = Eigen::RowVectorXd::Random(400) * 0.01;
  z.row(2) = f.row(0).array().tanh();
  z.row(3) = 0.5 * f.row(1).array() + 3.0;
  z.row(4) = Eigen::RowVectorXd::Random(400);
  auto m = matched_correlation(f, z);
  EXPECT_EQ(m.latent_for_factor, (std::vector<std::size_t>{2, 3, 0}));
  EXPECT_NEAR(m.abs_correlation[1], 1.0, 1e-12);
  EXPECT_NEAR(m.abs_correlation[2], 1.0, 1e-12);
  EXPECT_GT(m.mean_abs_correlation, 0.99);
  EXPECT_THROW(matched_correlation(f, z.topRows(2)), ShapeError);
}
