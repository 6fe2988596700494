#include "avdet/student.hpp"

#include <algorithm>
#include <cmath>

#include "avdet/checkpoint.hpp"
#include "avdet/errors.hpp"
#include "avdet/rng.hpp"

namespace avdet {

using nn::Tensor3;

namespace {

constexpr double kEps = 1e-7;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double smooth_l1(double d) { return std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5; }
double smooth_l1_grad(double d) { return std::abs(d) < 1.0 ? d : (d > 0 ? 1.0 : -1.0); }

// Spectrogram channels plus two coordinate planes in [-1, 1]. The array cues
// (inter-channel level/delay ratios) are constant across the grid, so a purely
// weight-shared head could not vary its objectness by cell without them.
// Channels are standardized jointly (one mean/std per stack), which keeps the
// inter-channel differences intact while removing the large log-offset.
Tensor3 spec_to_tensor(const SpectrogramStack& spec) {
  const int h = spec.freq_bins, w = spec.time_frames;
  Tensor3 t(spec.channels + 2, h, w);
  const std::size_t n = spec.grid.size();
  double mean = 0.0;
  for (float v : spec.grid) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float v : spec.grid) var += (v - mean) * (v - mean);
  const double inv_std = 1.0 / std::sqrt(var / static_cast<double>(n) + 1e-6);
  for (std::size_t i = 0; i < n; ++i) t.data[i] = (spec.grid[i] - mean) * inv_std;
  const std::size_t base = static_cast<std::size_t>(spec.channels) * h * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      t.data[base + i] = w > 1 ? 2.0 * x / (w - 1) - 1.0 : 0.0;
      t.data[base + h * static_cast<std::size_t>(w) + i] = h > 1 ? 2.0 * y / (h - 1) - 1.0 : 0.0;
    }
  return t;
}

// d(focal)/d(logit) for one cell; pred and target are probabilities.
double focal_logit_grad(double p, double target, double gamma) {
  const bool pos = target > 0.5;
  const double pt = std::clamp(pos ? p : 1.0 - p, kEps, 1.0 - kEps);
  if (pt <= kEps || pt >= 1.0 - kEps) return 0.0;
  const double one_m = 1.0 - pt;
  // d/dpt of -(1-pt)^g log(pt)
  const double dfdpt = gamma * std::pow(one_m, gamma - 1.0) * std::log(pt) -
                       std::pow(one_m, gamma) / pt;
  const double dptdl = pos ? p * (1.0 - p) : -p * (1.0 - p);
  return dfdpt * dptdl;
}

}  // namespace

std::vector<nn::ParamRef> StudentModel::parameters() {
  std::vector<nn::ParamRef> out;
  net.collect_params("net", out);
  return out;
}

Tensor3 StudentModel::forward(const SpectrogramStack& spec) {
  require(spec.channels == in_channels, errc::shape,
          "student forward: spectrogram has " + std::to_string(spec.channels) +
              " channels, model expects " + std::to_string(in_channels));
  require(spec.freq_bins == in_h && spec.time_frames == in_w, errc::shape,
          "student forward: spectrogram grid shape mismatch");
  Tensor3 out = net.forward(spec_to_tensor(spec));
  nn::check_finite(out, "student head output");
  return out;
}

StudentModel build_student(int n_channels, const StudentHyper& hyper) {
  require(n_channels == 1 || n_channels == 2 || n_channels == 4 || n_channels == 6,
          errc::config, "student channel count must be one of {1,2,4,6}");
  require(hyper.gamma >= 0.0, errc::config, "focal gamma must be >= 0");
  const int n_blocks = static_cast<int>(hyper.trunk_channels.size());
  const int stride = 1 << n_blocks;
  require(128 % stride == 0 && 512 % stride == 0, errc::config,
          "student trunk stride must divide the input grid");
  require(128 / stride == hyper.grid_h && 512 / stride == hyper.grid_w, errc::config,
          "student grid dims must equal input dims / trunk stride");

  StudentModel m;
  m.hyper = hyper;
  m.in_channels = n_channels;
  Rng rng(hyper.seed);
  int prev = n_channels + 2;  // spectrogram channels + coordinate planes
  for (int ch : hyper.trunk_channels) {
    m.net.add(std::make_unique<nn::Conv2d>(prev, ch, 3, 3, 2, 2, rng));
    m.net.add(std::make_unique<nn::Relu>());
    prev = ch;
  }
  m.net.add(std::make_unique<nn::Conv2d>(prev, 5, 1, 1, 1, 1, rng));
  return m;
}

double focal_loss(const std::vector<double>& pred_obj, const std::vector<double>& target_obj,
                  double gamma) {
  require(pred_obj.size() == target_obj.size() && !pred_obj.empty(), errc::shape,
          "focal_loss: prediction/target size mismatch");
  require(gamma >= 0.0, errc::config, "focal gamma must be >= 0");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred_obj.size(); ++i) {
    const double pt =
        std::clamp(target_obj[i] > 0.5 ? pred_obj[i] : 1.0 - pred_obj[i], kEps, 1.0 - kEps);
    acc += -std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return acc / static_cast<double>(pred_obj.size());
}

StudentTargets assign_targets(const std::vector<BBox>& boxes, int img_w, int img_h, int grid_h,
                              int grid_w) {
  require(img_w > 0 && img_h > 0, errc::config, "assign_targets: image dims must be positive");
  StudentTargets t;
  t.grid_h = grid_h;
  t.grid_w = grid_w;
  t.obj.assign(static_cast<std::size_t>(grid_h) * grid_w, 0.0);
  t.boxes.assign(t.obj.size(), {0.0, 0.0, 0.0, 0.0});
  for (const BBox& b : boxes) {
    const double cx = b.center_x() / img_w;  // normalized [0,1)
    const double cy = b.center_y() / img_h;
    int gx = std::clamp(static_cast<int>(cx * grid_w), 0, grid_w - 1);
    int gy = std::clamp(static_cast<int>(cy * grid_h), 0, grid_h - 1);
    const std::size_t cell = static_cast<std::size_t>(gy) * grid_w + gx;
    if (t.obj[cell] > 0.5) continue;  // one box per cell, first wins
    t.obj[cell] = 1.0;
    t.boxes[cell] = {cx * grid_w - gx, cy * grid_h - gy, b.width() / img_w,
                     b.height() / img_h};
  }
  return t;
}

double student_loss_and_grad(StudentModel& model,
                             const std::vector<const StudentTrainSample*>& batch) {
  require(!batch.empty(), errc::config, "student_loss_and_grad: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double gamma = model.hyper.gamma;
  double loss = 0.0;

  for (const StudentTrainSample* s : batch) {
    const Tensor3 out = model.net.forward(spec_to_tensor(s->spec));
    const int gh = out.h, gw = out.w, n = gh * gw;
    const StudentTargets tgt = assign_targets(s->boxes, s->img_w, s->img_h, gh, gw);

    std::vector<double> probs(n);
    for (int i = 0; i < n; ++i) probs[i] = sigmoid(out.data[i]);
    loss += focal_loss(probs, tgt.obj, gamma);

    Tensor3 grad(5, gh, gw);
    for (int i = 0; i < n; ++i)
      grad.data[i] = focal_logit_grad(probs[i], tgt.obj[i], gamma) / n * inv_b;

    int n_pos = 0;
    for (int i = 0; i < n; ++i)
      if (tgt.obj[i] > 0.5) ++n_pos;
    if (n_pos > 0) {
      const double box_scale = model.hyper.lambda_box / n_pos;
      double box_loss = 0.0;
      for (int i = 0; i < n; ++i) {
        if (tgt.obj[i] <= 0.5) continue;
        for (int k = 0; k < 4; ++k) {
          const double logit = out.data[static_cast<std::size_t>(k + 1) * n + i];
          const double pred = sigmoid(logit);
          const double d = pred - tgt.boxes[i][k];
          box_loss += smooth_l1(d);
          grad.data[static_cast<std::size_t>(k + 1) * n + i] =
              box_scale * smooth_l1_grad(d) * pred * (1.0 - pred) * inv_b;
        }
      }
      loss += box_scale * box_loss;
    }
    model.net.backward(grad);
  }
  return loss * inv_b;
}

StudentTrainResult train_student(const StudentSampleSource& samples,
                                 const StudentHyper& hyper) {
  require(samples.size() > 0, errc::config, "train_student: empty dataset");
  StudentTrainResult result{build_student(samples.audio_channels(), hyper), {}};
  StudentModel& model = result.model;
  nn::AdamOptimizer opt(model.parameters(), hyper.lr);
  Rng rng = Rng(hyper.seed).stream(2);

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t bs = static_cast<std::size_t>(std::max(1, hyper.batch_size));
  const std::size_t per_pass = (order.size() + bs - 1) / bs;
  const std::size_t steps = hyper.steps_per_epoch > 0
                                ? static_cast<std::size_t>(hyper.steps_per_epoch)
                                : per_pass;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    std::size_t cursor = 0;
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<StudentTrainSample> storage;
      storage.reserve(bs);
      for (std::size_t i = 0; i < bs; ++i)
        storage.push_back(samples.get(order[cursor++ % order.size()]));
      std::vector<const StudentTrainSample*> batch;
      for (const auto& s : storage) batch.push_back(&s);
      opt.zero_grad();
      epoch_loss += student_loss_and_grad(model, batch);
      opt.step();
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(steps));
  }
  model.trained = true;
  return result;
}

std::vector<ScoredBox> predict_boxes(StudentModel& model, const SpectrogramStack& spec,
                                     int img_w, int img_h) {
  require(model.trained, errc::model_state, "predict_boxes: model is untrained");
  require(img_w > 0 && img_h > 0, errc::config, "predict_boxes: image dims must be positive");
  const Tensor3 out = model.forward(spec);
  const int gh = out.h, gw = out.w, n = gh * gw;
  std::vector<ScoredBox> boxes;
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const int i = gy * gw + gx;
      const double obj = sigmoid(out.data[i]);
      if (obj <= model.hyper.obj_threshold) continue;
      const double cx = (gx + sigmoid(out.data[static_cast<std::size_t>(1) * n + i])) / gw;
      const double cy = (gy + sigmoid(out.data[static_cast<std::size_t>(2) * n + i])) / gh;
      const double w = sigmoid(out.data[static_cast<std::size_t>(3) * n + i]);
      const double h = sigmoid(out.data[static_cast<std::size_t>(4) * n + i]);
      BBox b{(cx - w / 2) * img_w, (cy - h / 2) * img_h, (cx + w / 2) * img_w,
             (cy + h / 2) * img_h};
      b = b.clamped(img_w, img_h);
      if (!b.valid()) continue;
      boxes.push_back({b, obj});
    }
  }
  return boxes;
}

// ---------------------------------------------------------------------------
// checkpoints

nlohmann::ordered_json student_hyper_to_json(const StudentHyper& h) {
  return {{"gamma", h.gamma},
          {"grid_h", h.grid_h},
          {"grid_w", h.grid_w},
          {"trunk_channels", h.trunk_channels},
          {"lambda_box", h.lambda_box},
          {"lr", h.lr},
          {"batch_size", h.batch_size},
          {"epochs", h.epochs},
          {"steps_per_epoch", h.steps_per_epoch},
          {"obj_threshold", h.obj_threshold},
          {"seed", h.seed}};
}

StudentHyper student_hyper_from_json(const nlohmann::ordered_json& j) {
  StudentHyper h;
  h.gamma = j.at("gamma").get<double>();
  h.grid_h = j.at("grid_h").get<int>();
  h.grid_w = j.at("grid_w").get<int>();
  h.trunk_channels = j.at("trunk_channels").get<std::vector<int>>();
  h.lambda_box = j.at("lambda_box").get<double>();
  h.lr = j.at("lr").get<double>();
  h.batch_size = j.at("batch_size").get<int>();
  h.epochs = j.at("epochs").get<int>();
  h.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  h.obj_threshold = j.at("obj_threshold").get<double>();
  h.seed = j.at("seed").get<std::uint64_t>();
  return h;
}

void save_student(const StudentModel& model, const std::string& path) {
  StudentModel& m = const_cast<StudentModel&>(model);
  std::vector<std::pair<std::string, const std::vector<double>*>> arrays;
  for (const auto& p : m.parameters()) arrays.emplace_back(p.name, p.value);
  nlohmann::ordered_json meta{{"kind", "student"},
                              {"audio_channels", model.in_channels},
                              {"trained", model.trained},
                              {"hyper", student_hyper_to_json(model.hyper)}};
  save_checkpoint(path, meta, arrays);
}

StudentModel load_student(const std::string& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  require(ck.meta.at("kind").get<std::string>() == "student", errc::io,
          "load_student: checkpoint is not a student model");
  StudentModel m = build_student(ck.meta.at("audio_channels").get<int>(),
                                 student_hyper_from_json(ck.meta.at("hyper")));
  for (const auto& p : m.parameters()) {
    const std::vector<double>& src = ck.find(p.name);
    require(src.size() == p.value->size(), errc::io,
            "load_student: size mismatch for array " + p.name);
    *p.value = src;
  }
  m.trained = ck.meta.at("trained").get<bool>();
  return m;
}

}  // namespace avdet
