#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "avdet/errors.hpp"
#include "avdet/nn.hpp"
#include "avdet/rng.hpp"
#include "avdet/student.hpp"

using namespace avdet;

namespace {

StudentHyper tiny_hyper() {
  StudentHyper h;
  h.trunk_channels = {4, 4, 4, 4, 4};
  h.batch_size = 2;
  h.epochs = 2;
  h.seed = 11;
  return h;
}

SpectrogramStack random_spec(int channels, Rng& rng) {
  SpectrogramStack s;
  s.channels = channels;
  s.freq_bins = 128;
  s.time_frames = 512;
  s.grid.resize(static_cast<std::size_t>(channels) * 128 * 512);
  for (float& v : s.grid) v = static_cast<float>(rng.uniform(0.0, 2.0));
  return s;
}

std::size_t param_count(StudentModel& m) {
  std::size_t n = 0;
  for (const auto& p : m.parameters()) n += p.value->size();
  return n;
}

}  // namespace

TEST_CASE("head output shape is (5, grid_h, grid_w)") {
  StudentModel m = build_student(2, tiny_hyper());
  Rng rng(1);
  const nn::Tensor3 out = m.forward(random_spec(2, rng));
  CHECK(out.c == 5);
  CHECK(out.h == 4);
  CHECK(out.w == 16);
}

TEST_CASE("channel count changes only the first conv's parameters") {
  StudentModel m1 = build_student(1, tiny_hyper());
  StudentModel m6 = build_student(6, tiny_hyper());
  // 3x3 kernels, 4 output channels: (6-1)*3*3*4 extra weights
  CHECK(param_count(m6) - param_count(m1) == 5u * 3 * 3 * 4);
}

TEST_CASE("build_student validates its configuration") {
  CHECK_THROWS_AS(build_student(3, tiny_hyper()), Error);
  StudentHyper h = tiny_hyper();
  h.gamma = -1.0;
  CHECK_THROWS_AS(build_student(1, h), Error);
  h = tiny_hyper();
  h.trunk_channels = {4, 4, 4, 4};  // stride 16 no longer matches the 4x16 grid
  CHECK_THROWS_AS(build_student(1, h), Error);
  StudentModel m = build_student(1, tiny_hyper());
  Rng rng(2);
  CHECK_THROWS_AS(m.forward(random_spec(2, rng)), Error);
}

TEST_CASE("focal loss: worked values and limits") {
  // p_t = 0.5, gamma = 2: -(0.5)^2 ln(0.5) per cell
  CHECK(focal_loss({0.5}, {1.0}, 2.0) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(focal_loss({0.5}, {0.0}, 2.0) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));

  // gamma = 0 reduces to cross-entropy
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double p = rng.uniform(0.01, 0.99);
    const double t = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const double ce = t > 0.5 ? -std::log(p) : -std::log(1.0 - p);
    CHECK(focal_loss({p}, {t}, 0.0) == doctest::Approx(ce).epsilon(1e-8));
    // the modulating factor only ever shrinks the loss
    CHECK(focal_loss({p}, {t}, 2.0) <= ce + 1e-12);
  }
  CHECK_THROWS_AS(focal_loss({0.5}, {1.0, 0.0}, 2.0), Error);
  CHECK_THROWS_AS(focal_loss({}, {}, 2.0), Error);
}

TEST_CASE("target assignment: cell choice, offsets, first-wins collisions") {
  // 300x100 image on a 4x16 grid: cells are 18.75 x 25 px
  const BBox b{30, 40, 70, 80};  // center (50, 60) -> gx=2, gy=2
  StudentTargets t = assign_targets({b}, 300, 100, 4, 16);
  REQUIRE(t.obj.size() == 64);
  CHECK(std::count(t.obj.begin(), t.obj.end(), 1.0) == 1);
  const std::size_t cell = 2 * 16 + 2;
  CHECK(t.obj[cell] == 1.0);
  CHECK(t.boxes[cell][0] == doctest::Approx(50.0 / 300.0 * 16 - 2));
  CHECK(t.boxes[cell][1] == doctest::Approx(60.0 / 100.0 * 4 - 2));
  CHECK(t.boxes[cell][2] == doctest::Approx(40.0 / 300.0));
  CHECK(t.boxes[cell][3] == doctest::Approx(40.0 / 100.0));

  // a second box with the same center cell is dropped
  const BBox b2{40, 45, 60, 75};
  StudentTargets t2 = assign_targets({b, b2}, 300, 100, 4, 16);
  CHECK(std::count(t2.obj.begin(), t2.obj.end(), 1.0) == 1);
  CHECK(t2.boxes[cell][2] == doctest::Approx(40.0 / 300.0));  // first box kept

  CHECK_THROWS_AS(assign_targets({b}, 0, 100, 4, 16), Error);
}

TEST_CASE("assign/decode round trip recovers box centers exactly") {
  Rng rng(13);
  for (int iter = 0; iter < 200; ++iter) {
    const double cx = rng.uniform(5.0, 295.0), cy = rng.uniform(5.0, 95.0);
    const double w = rng.uniform(2.0, 60.0), h = rng.uniform(2.0, 40.0);
    const BBox b{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
    const StudentTargets t = assign_targets({b}, 300, 100, 4, 16);
    for (int gy = 0; gy < 4; ++gy)
      for (int gx = 0; gx < 16; ++gx) {
        const std::size_t i = static_cast<std::size_t>(gy) * 16 + gx;
        if (t.obj[i] < 0.5) continue;
        const double dec_cx = (gx + t.boxes[i][0]) / 16.0 * 300.0;
        const double dec_cy = (gy + t.boxes[i][1]) / 4.0 * 100.0;
        CHECK(dec_cx == doctest::Approx(cx).epsilon(1e-9));
        CHECK(dec_cy == doctest::Approx(cy).epsilon(1e-9));
        CHECK(t.boxes[i][2] * 300.0 == doctest::Approx(w).epsilon(1e-9));
        CHECK(t.boxes[i][3] * 100.0 == doctest::Approx(h).epsilon(1e-9));
      }
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  StudentHyper hyper = tiny_hyper();
  StudentModel model = build_student(1, hyper);
  Rng rng(17);
  StudentTrainSample pos;
  pos.spec = random_spec(1, rng);
  pos.boxes = {{40, 20, 120, 70}, {200, 50, 260, 95}};
  pos.img_w = 300;
  pos.img_h = 100;
  StudentTrainSample neg;
  neg.spec = random_spec(1, rng);
  neg.img_w = 300;
  neg.img_h = 100;
  const std::vector<const StudentTrainSample*> batch = {&pos, &neg};

  auto params = model.parameters();
  for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);
  student_loss_and_grad(model, batch);
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(*p.grad);

  const double eps = 1e-6;
  int checked = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double orig = (*p.value)[i];
      (*p.value)[i] = orig + eps;
      const double lp = student_loss_and_grad(model, batch);
      (*p.value)[i] = orig - eps;
      const double lm = student_loss_and_grad(model, batch);
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

TEST_CASE("training is deterministic per seed and refuses empty datasets") {
  Rng rng(23);
  std::vector<StudentTrainSample> samples;
  for (int i = 0; i < 2; ++i) {
    StudentTrainSample s;
    s.spec = random_spec(1, rng);
    if (i == 0) s.boxes = {{10, 10, 60, 60}};
    s.img_w = 300;
    s.img_h = 100;
    samples.push_back(std::move(s));
  }
  const VectorSampleSource src(samples);
  const StudentHyper hyper = tiny_hyper();
  StudentTrainResult a = train_student(src, hyper);
  StudentTrainResult b = train_student(src, hyper);
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.model.trained);
  for (double l : a.loss_curve) CHECK(std::isfinite(l));

  CHECK_THROWS_AS(train_student(VectorSampleSource({}), hyper), Error);
}

TEST_CASE("training on empty boxes drives objectness to zero") {
  Rng rng(29);
  std::vector<StudentTrainSample> samples;
  for (int i = 0; i < 4; ++i) {
    StudentTrainSample s;
    s.spec = random_spec(1, rng);
    s.img_w = 300;
    s.img_h = 100;
    samples.push_back(std::move(s));
  }
  StudentHyper hyper = tiny_hyper();
  hyper.lr = 0.01;
  hyper.epochs = 80;
  hyper.batch_size = 4;
  StudentTrainResult r = train_student(VectorSampleSource(samples), hyper);
  CHECK(r.loss_curve.back() < r.loss_curve.front());
  double max_obj = 0.0;
  for (auto& s : samples) {
    const nn::Tensor3 out = r.model.forward(s.spec);
    for (int i = 0; i < out.h * out.w; ++i)
      max_obj = std::max(max_obj, 1.0 / (1.0 + std::exp(-out.data[i])));
  }
  CHECK(max_obj < 0.1);
  for (auto& s : samples) CHECK(predict_boxes(r.model, s.spec, 300, 100).empty());
}

TEST_CASE("a memorized sample decodes near its training box") {
  StudentTrainSample s;
  // bright patch over the receptive field of the target cell, silence elsewhere
  s.spec.channels = 1;
  s.spec.freq_bins = 128;
  s.spec.time_frames = 512;
  s.spec.grid.assign(128 * 512, 0.0f);
  for (int f = 64; f < 96; ++f)
    for (int t = 256; t < 288; ++t) s.spec.at(0, f, t) = 3.0f;
  s.boxes = {{120, 30, 180, 80}};  // center (150, 55) -> cell (2, 8)
  s.img_w = 300;
  s.img_h = 100;
  StudentHyper hyper = tiny_hyper();
  hyper.lr = 0.01;
  hyper.epochs = 200;
  hyper.batch_size = 1;
  StudentTrainResult r = train_student(VectorSampleSource({s}), hyper);
  const auto boxes = predict_boxes(r.model, s.spec, 300, 100);
  REQUIRE(!boxes.empty());
  const auto best = std::max_element(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) {
    return a.confidence < b.confidence;
  });
  CHECK(best->confidence > 0.5);
  CHECK(std::abs(best->box.center_x() - 150.0) < 30.0);
  CHECK(std::abs(best->box.center_y() - 55.0) < 15.0);
}

TEST_CASE("predict_boxes refuses untrained models") {
  StudentModel m = build_student(1, tiny_hyper());
  Rng rng(3);
  const SpectrogramStack spec = random_spec(1, rng);
  try {
    predict_boxes(m, spec, 300, 100);
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == errc::model_state);
  }
}

TEST_CASE("checkpoint round trip preserves predictions") {
  Rng rng(37);
  StudentTrainSample s;
  s.spec = random_spec(2, rng);
  s.boxes = {{50, 20, 150, 70}};
  s.img_w = 300;
  s.img_h = 100;
  StudentHyper hyper = tiny_hyper();
  hyper.epochs = 3;
  hyper.batch_size = 1;
  StudentTrainResult r = train_student(VectorSampleSource({s}), hyper);

  const std::string path =
      (std::filesystem::temp_directory_path() / "avdet_student.ckpt").string();
  save_student(r.model, path);
  StudentModel back = load_student(path);
  CHECK(back.trained);
  CHECK(back.in_channels == 2);

  const nn::Tensor3 a = r.model.forward(s.spec);
  const nn::Tensor3 b = back.forward(s.spec);
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(std::abs(a.data[i] - b.data[i]) < 1e-3);  // float32 round trip
}

TEST_CASE("hyper JSON round trip") {
  StudentHyper h = tiny_hyper();
  h.gamma = 1.5;
  h.lambda_box = 2.0;
  h.obj_threshold = 0.4;
  const StudentHyper back = student_hyper_from_json(student_hyper_to_json(h));
  CHECK(back.gamma == h.gamma);
  CHECK(back.trunk_channels == h.trunk_channels);
  CHECK(back.lambda_box == h.lambda_box);
  CHECK(back.obj_threshold == h.obj_threshold);
  CHECK(back.seed == h.seed);
}
