#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "avdet/errors.hpp"
#include "avdet/rng.hpp"
#include "avdet/teacher.hpp"

using namespace avdet;

namespace {

TeacherConfig tiny_config() {
  TeacherConfig cfg;
  cfg.input_h = 16;
  cfg.input_w = 16;  // feature grid collapses to 1x1: max cell is unambiguous
  cfg.embed_dim = 4;
  cfg.image_trunk_channels = {6, 6, 6, 6};
  cfg.audio_trunk_channels = {6, 6, 6, 6};
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.seed = 5;
  return cfg;
}

Image random_image(int w, int h, Rng& rng) {
  Image img(w, h);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

SpectrogramStack random_spec(int channels, int f, int t, Rng& rng) {
  SpectrogramStack s;
  s.channels = channels;
  s.freq_bins = f;
  s.time_frames = t;
  s.grid.resize(static_cast<std::size_t>(channels) * f * t);
  for (float& v : s.grid) v = static_cast<float>(rng.uniform(0.0, 2.0));
  return s;
}

TrainPair random_pair(PairLabel label, Rng& rng, int hw = 16, int spec_f = 16,
                      int spec_t = 32) {
  TrainPair p;
  p.image = random_image(hw, hw, rng);
  p.spec = random_spec(1, spec_f, spec_t, rng);
  p.label = label;
  return p;
}

}  // namespace

TEST_CASE("embeddings are unit-normalized per spatial column") {
  TeacherConfig cfg = tiny_config();
  cfg.input_h = 32;
  cfg.input_w = 48;  // 2x3 feature grid
  TeacherModel m = build_teacher(1, cfg);
  Rng rng(1);
  const nn::Tensor3 f_img = m.embed_image(random_image(48, 32, rng));
  CHECK(f_img.c == 4);
  CHECK(f_img.h == 2);
  CHECK(f_img.w == 3);
  for (int i = 0; i < f_img.h * f_img.w; ++i) {
    double s = 0.0;
    for (int c = 0; c < f_img.c; ++c) {
      const double v = f_img.data[static_cast<std::size_t>(c) * f_img.h * f_img.w + i];
      s += v * v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
  const nn::Tensor3 f_aud = m.embed_audio(random_spec(1, 16, 32, rng));
  CHECK(f_aud.c == 4);
  CHECK(f_aud.h == 1);
  CHECK(f_aud.w == 1);
  double s = 0.0;
  for (double v : f_aud.data) s += v * v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("heatmap scores follow sigmoid(b - w*dist) and decrease with distance") {
  nn::Tensor3 f_aud(2, 1, 1);
  f_aud.data = {1.0, 0.0};
  nn::Tensor3 f_img(2, 1, 4);
  // columns at increasing angle from the audio embedding, all unit length
  const double angles[4] = {0.0, 0.5, 1.2, 2.5};
  for (int i = 0; i < 4; ++i) {
    f_img.data[i] = std::cos(angles[i]);
    f_img.data[4 + i] = std::sin(angles[i]);
  }
  const double w = 1.7, b = 2.0;
  const Heatmap hm = compute_heatmap(f_img, f_aud, w, b);
  REQUIRE(hm.scores.size() == 4);
  for (int i = 0; i < 4; ++i) {
    const double d = 2.0 - 2.0 * std::cos(angles[i]);  // |u-v|^2 on the unit circle
    CHECK(hm.raw_dist[i] == doctest::Approx(d).epsilon(1e-12));
    CHECK(hm.scores[i] == doctest::Approx(1.0 / (1.0 + std::exp(-(b - w * d)))));
    if (i > 0) CHECK(hm.scores[i] < hm.scores[i - 1]);
    CHECK(hm.scores[i] > 0.0);
    CHECK(hm.scores[i] < 1.0);
  }
  CHECK(hm.max_score() == doctest::Approx(hm.scores[0]));
  CHECK(hm.min_dist() == doctest::Approx(0.0));
}

TEST_CASE("contrastive loss is ln 2 when every max score is one half") {
  Heatmap h;
  h.h = h.w = 1;
  h.raw_dist = {1.0};
  h.scores = {0.5};
  CHECK(contrastive_loss({h}, {h}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // perfect separation drives the loss toward zero
  Heatmap hi = h, lo = h;
  hi.scores = {1.0 - 1e-9};
  lo.scores = {1e-9};
  CHECK(contrastive_loss({hi}, {lo}) < 1e-5);
  CHECK_THROWS_AS(contrastive_loss({}, {}), Error);
}

TEST_CASE("analytic gradients match central finite differences") {
  TeacherModel model = build_teacher(1, tiny_config());
  Rng rng(9);
  const TrainPair pos = random_pair(PairLabel::Positive, rng);
  const TrainPair neg = random_pair(PairLabel::Negative, rng);
  const std::vector<const TrainPair*> batch = {&pos, &neg};

  auto params = model.parameters();
  for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);
  teacher_loss_and_grad(model, batch);
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(*p.grad);

  const double eps = 1e-6;
  int checked = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double orig = (*p.value)[i];
      (*p.value)[i] = orig + eps;
      const double lp = teacher_loss_and_grad(model, batch);
      (*p.value)[i] = orig - eps;
      const double lm = teacher_loss_and_grad(model, batch);
      (*p.value)[i] = orig;

      const double fd = (lp - lm) / (2.0 * eps);
      const double an = analytic[pi][i];
      const double denom = std::max(1e-4, std::abs(fd) + std::abs(an));
      CHECK(std::abs(fd - an) / denom < 1e-3);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("upsample_bilinear: align-corners endpoints and interior averages") {
  const std::vector<double> grid = {0.0, 1.0, 2.0, 3.0};  // 2x2
  const ScoreMap up = upsample_bilinear(grid, 2, 2, 3, 3);
  CHECK(up.at(0, 0) == doctest::Approx(0.0));
  CHECK(up.at(2, 0) == doctest::Approx(1.0));
  CHECK(up.at(0, 2) == doctest::Approx(2.0));
  CHECK(up.at(2, 2) == doctest::Approx(3.0));
  CHECK(up.at(1, 1) == doctest::Approx(1.5));  // center = mean of the four corners
  CHECK(up.at(1, 0) == doctest::Approx(0.5));

  // identity when sizes match; range preserved on random grids
  Rng rng(3);
  std::vector<double> g(5 * 7);
  for (double& v : g) v = rng.uniform();
  const ScoreMap same = upsample_bilinear(g, 5, 7, 5, 7);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) CHECK(same.at(x, y) == doctest::Approx(g[y * 7 + x]));
  const ScoreMap big = upsample_bilinear(g, 5, 7, 33, 65);
  const double lo = *std::min_element(g.begin(), g.end());
  const double hi = *std::max_element(g.begin(), g.end());
  for (double v : big.scores) {
    CHECK(v >= lo - 1e-12);
    CHECK(v <= hi + 1e-12);
  }
  CHECK_THROWS_AS(upsample_bilinear(g, 4, 7, 10, 10), Error);
}

TEST_CASE("training is deterministic and refuses degenerate datasets") {
  Rng rng(21);
  std::vector<TrainPair> pairs;
  for (int i = 0; i < 3; ++i) pairs.push_back(random_pair(PairLabel::Positive, rng));
  for (int i = 0; i < 3; ++i) pairs.push_back(random_pair(PairLabel::Negative, rng));
  pairs.push_back(random_pair(PairLabel::Inconclusive, rng));
  const VectorPairSource src(pairs);

  const TeacherConfig cfg = tiny_config();
  TeacherTrainResult a = train_teacher(src, cfg);
  TeacherTrainResult b = train_teacher(src, cfg);
  REQUIRE(a.loss_curve.size() == 2);
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.model.squash == b.model.squash);
  CHECK(a.model.trained);
  for (double l : a.loss_curve) CHECK(std::isfinite(l));

  std::vector<TrainPair> only_pos(pairs.begin(), pairs.begin() + 3);
  CHECK_THROWS_AS(train_teacher(VectorPairSource(only_pos), cfg), Error);
}

TEST_CASE("batch construction rejects inconclusive pairs; untrained predict refuses") {
  TeacherModel model = build_teacher(1, tiny_config());
  Rng rng(4);
  const TrainPair inc = random_pair(PairLabel::Inconclusive, rng);
  CHECK_THROWS_AS(teacher_loss_and_grad(model, {&inc}), Error);
  CHECK_THROWS_AS(teacher_loss_and_grad(model, {}), Error);

  try {
    model.predict_heatmap(random_image(16, 16, rng), random_spec(1, 16, 32, rng));
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == errc::model_state);
  }
  CHECK_THROWS_AS(model.embed_audio(random_spec(2, 16, 32, rng)), Error);
  CHECK_THROWS_AS(build_teacher(3, tiny_config()), Error);
}

TEST_CASE("checkpoint round trip preserves predictions") {
  Rng rng(33);
  std::vector<TrainPair> pairs;
  for (int i = 0; i < 2; ++i) pairs.push_back(random_pair(PairLabel::Positive, rng));
  for (int i = 0; i < 2; ++i) pairs.push_back(random_pair(PairLabel::Negative, rng));
  TeacherConfig cfg = tiny_config();
  cfg.epochs = 1;
  TeacherTrainResult r = train_teacher(VectorPairSource(pairs), cfg);

  const std::string path =
      (std::filesystem::temp_directory_path() / "avdet_teacher.ckpt").string();
  save_teacher(r.model, path);
  TeacherModel back = load_teacher(path);
  CHECK(back.trained);
  CHECK(back.audio_in_channels == 1);

  const Image img = random_image(16, 16, rng);
  const SpectrogramStack spec = random_spec(1, 16, 32, rng);
  const ScoreMap a = r.model.predict_heatmap(img, spec);
  const ScoreMap b = back.predict_heatmap(img, spec);
  REQUIRE(a.scores.size() == b.scores.size());
  // weights round-trip at float32, so predictions agree only approximately
  for (std::size_t i = 0; i < a.scores.size(); ++i)
    CHECK(std::abs(a.scores[i] - b.scores[i]) < 1e-4);
}

TEST_CASE("config JSON round trip") {
  TeacherConfig cfg = tiny_config();
  cfg.lr = 0.02;
  cfg.steps_per_epoch = 9;
  const TeacherConfig back = teacher_config_from_json(teacher_config_to_json(cfg));
  CHECK(back.input_h == cfg.input_h);
  CHECK(back.embed_dim == cfg.embed_dim);
  CHECK(back.image_trunk_channels == cfg.image_trunk_channels);
  CHECK(back.lr == cfg.lr);
  CHECK(back.steps_per_epoch == 9);
  CHECK(back.seed == cfg.seed);
}
