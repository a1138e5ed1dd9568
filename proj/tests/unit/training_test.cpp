#include <gtest/gtest.h>

#include <cmath>

#include "tsdiff/errors.hpp"
#include "tsdiff/parallel.hpp"
#include "tsdiff/training.hpp"

using namespace tsdiff;

TEST(Adam, MatchesScalarOracle) {
  // Textbook Adam written out for one coordinate.
  AdamState adam(2, 0.9, 0.999, 1e-8);
  std::vector<double> p{1.0, -2.0};
  double m = 0, v = 0, x = 1.0;
  for (int t = 1; t <= 50; ++t) {
    const std::vector<double> g{2.0 * p[0], 2.0 * p[1]};
    const double gx = 2.0 * x;
    m = 0.9 * m + 0.1 * gx;
    v = 0.999 * v + 0.001 * gx * gx;
    x -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    adam.step(p, g, 0.05);
    EXPECT_NEAR(p[0], x, 1e-14);
  }
  EXPECT_LT(std::abs(p[1]), 2.0);
}

TEST(Clip, GlobalNorm) {
  std::vector<double> g{3.0, 4.0};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
  std::vector<double> small{0.1, 0.1};
  clip_global_norm(small, 1.0);
  EXPECT_EQ(small, (std::vector<double>{0.1, 0.1}));
}

namespace {

struct Toy {
  Dataset data;
  DenoiserConfig cfg;
  NoiseSchedule sched = build_linear_schedule(100, 1e-4, 0.1);
  TrainConfig tc;

  Toy() {
    SynthParams sp;
    sp.periods = {12.0};
    sp.noise_std = 0.05;
    data = synth_generate(SynthKind::SineMixture, sp, 8, 200, 5);
    cfg.length = 16;
    cfg.hidden = 8;
    cfg.time_emb_dim = 8;
    cfg.residual_layers = 2;
    tc.batch_size = 16;
    tc.epochs = 6;
    tc.batches_per_epoch = 10;
    tc.learning_rate = 3e-3;
    tc.seed = 11;
  }
};

}  // namespace

TEST(Train, LossDecreasesAndRunIsReproducible) {
  Toy s;
  const WindowSampler sampler(s.data, 16, 0, {});
  const auto a = train(s.cfg, init_params(s.cfg, 1), sampler, s.sched, s.tc);
  ASSERT_EQ(a.loss_history.size(), 6u);
  // Zero head predicts eps = 0, so the first epoch starts near E||eps||^2 = 1.
  EXPECT_GT(a.loss_history.front(), 0.5);
  EXPECT_LT(a.loss_history.back(), 0.8 * a.loss_history.front());

  const int before = num_threads();
  set_num_threads(3);
  const auto b = train(s.cfg, init_params(s.cfg, 1), sampler, s.sched, s.tc);
  set_num_threads(before);
  EXPECT_EQ(a.params.values, b.params.values);
  EXPECT_EQ(a.loss_history, b.loss_history);
  for (double v : a.params.values) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
}

TEST(Train, RejectsBadInput) {
  Toy s;
  const WindowSampler sampler(s.data, 16, 0, {});
  auto bad = s.tc;
  bad.learning_rate = 0;
  EXPECT_THROW(train(s.cfg, init_params(s.cfg, 1), sampler, s.sched, bad), ParameterError);
  auto p = init_params(s.cfg, 1);
  p.values.pop_back();
  EXPECT_THROW(train(s.cfg, p, sampler, s.sched, s.tc), ShapeError);
  const WindowSampler wrong(s.data, 20, 0, {});
  EXPECT_THROW(train(s.cfg, init_params(s.cfg, 1), wrong, s.sched, s.tc), ShapeError);
}

TEST(Train, DivergenceIsReported) {
  Toy s;
  auto data = s.data;
  for (auto& ts : data.series) ts.values.assign(ts.values.size(), std::nan(""));
  const WindowSampler sampler(data, 16, 0, {});
  EXPECT_THROW(train(s.cfg, init_params(s.cfg, 1), sampler, s.sched, s.tc), NumericError);
}
