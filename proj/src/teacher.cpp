#include "avdet/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avdet/checkpoint.hpp"
#include "avdet/errors.hpp"

namespace avdet {

using nn::Tensor3;

namespace {

constexpr double kScoreEps = 1e-7;
constexpr double kNormEps = 1e-12;

Tensor3 image_to_tensor(const Image& img, int h, int w) {
  const Image resized = (img.width == w && img.height == h) ? img : resize_bilinear(img, w, h);
  Tensor3 t(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = resized.at(x, y, c);
  return t;
}

Tensor3 spec_to_tensor(const SpectrogramStack& spec) {
  Tensor3 t(spec.channels, spec.freq_bins, spec.time_frames);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = spec.grid[i];
  return t;
}

// L2-normalizes each spatial column across channels in place; returns the
// pre-normalization norms sqrt(|v|^2 + eps) for the backward pass.
std::vector<double> normalize_columns(Tensor3& t) {
  const int n = t.h * t.w;
  std::vector<double> norms(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int c = 0; c < t.c; ++c) {
      const double v = t.data[static_cast<std::size_t>(c) * n + i];
      s += v * v;
    }
    const double r = std::sqrt(s + kNormEps);
    norms[i] = r;
    for (int c = 0; c < t.c; ++c) t.data[static_cast<std::size_t>(c) * n + i] /= r;
  }
  return norms;
}

// grad wrt the unnormalized column: g/r - (n . g) n / r
void normalize_backward_column(const Tensor3& normalized, const std::vector<double>& norms,
                               int col, const std::vector<double>& g_col,
                               Tensor3& grad_raw) {
  const int n = normalized.h * normalized.w;
  double dot = 0.0;
  for (int c = 0; c < normalized.c; ++c)
    dot += normalized.data[static_cast<std::size_t>(c) * n + col] * g_col[c];
  const double r = norms[col];
  for (int c = 0; c < normalized.c; ++c) {
    const double nc = normalized.data[static_cast<std::size_t>(c) * n + col];
    grad_raw.data[static_cast<std::size_t>(c) * n + col] += (g_col[c] - dot * nc) / r;
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double Heatmap::max_score() const { return *std::max_element(scores.begin(), scores.end()); }
double Heatmap::min_dist() const { return *std::min_element(raw_dist.begin(), raw_dist.end()); }

double TeacherModel::squash_w() const { return std::exp(squash[0]); }
double TeacherModel::squash_b() const { return squash[1]; }

std::vector<nn::ParamRef> TeacherModel::parameters() {
  std::vector<nn::ParamRef> out;
  image_trunk.collect_params("image", out);
  audio_trunk.collect_params("audio", out);
  out.push_back({"squash", &squash, &squash_grad});
  return out;
}

TeacherModel build_teacher(int audio_channels, const TeacherConfig& cfg) {
  require(audio_channels == 1 || audio_channels == 2 || audio_channels == 4 ||
              audio_channels == 6,
          errc::config, "teacher audio channel count must be one of {1,2,4,6}");
  require(cfg.input_h % 16 == 0 && cfg.input_w % 16 == 0, errc::config,
          "teacher input dims must be divisible by the trunk stride 16");
  require(cfg.image_trunk_channels.size() == 4 && cfg.audio_trunk_channels.size() == 4,
          errc::config, "teacher trunks use four blocks");

  TeacherModel m;
  m.cfg = cfg;
  m.audio_in_channels = audio_channels;
  Rng rng(cfg.seed);

  int prev = 3;
  for (int ch : cfg.image_trunk_channels) {
    m.image_trunk.add(std::make_unique<nn::Conv2d>(prev, ch, 3, 3, 2, 2, rng));
    m.image_trunk.add(std::make_unique<nn::Relu>());
    prev = ch;
  }
  m.image_trunk.add(std::make_unique<nn::Conv2d>(prev, cfg.embed_dim, 1, 1, 1, 1, rng));

  prev = audio_channels;
  for (std::size_t i = 0; i < cfg.audio_trunk_channels.size(); ++i) {
    const int ch = cfg.audio_trunk_channels[i];
    const int sw = i == 0 ? 4 : 2;  // extra time-axis stride on the 512-wide input
    m.audio_trunk.add(std::make_unique<nn::Conv2d>(prev, ch, 3, 3, 2, sw, rng));
    m.audio_trunk.add(std::make_unique<nn::Relu>());
    prev = ch;
  }
  m.audio_trunk.add(std::make_unique<nn::GlobalAvgPool>());
  m.audio_trunk.add(std::make_unique<nn::Dense>(prev, cfg.embed_dim, rng));

  m.squash = {std::log(cfg.squash_w_init), cfg.squash_b_init};
  m.squash_grad = {0.0, 0.0};
  return m;
}

Tensor3 TeacherModel::embed_image(const Image& frame) {
  Tensor3 out = image_trunk.forward(image_to_tensor(frame, cfg.input_h, cfg.input_w));
  nn::check_finite(out, "image trunk output");
  normalize_columns(out);
  return out;
}

Tensor3 TeacherModel::embed_audio(const SpectrogramStack& spec) {
  require(spec.channels == audio_in_channels, errc::shape,
          "embed_audio: spectrogram channel count " + std::to_string(spec.channels) +
              " does not match encoder " + std::to_string(audio_in_channels));
  Tensor3 out = audio_trunk.forward(spec_to_tensor(spec));
  nn::check_finite(out, "audio trunk output");
  normalize_columns(out);
  return out;
}

Heatmap compute_heatmap(const Tensor3& f_img, const Tensor3& f_aud, double squash_w,
                        double squash_b) {
  require(f_img.c == f_aud.c, errc::shape, "compute_heatmap: embedding dim mismatch");
  Heatmap hm;
  hm.h = f_img.h;
  hm.w = f_img.w;
  const int n = hm.h * hm.w;
  hm.raw_dist.resize(n);
  hm.scores.resize(n);
  for (int i = 0; i < n; ++i) {
    double d = 0.0;
    for (int c = 0; c < f_img.c; ++c) {
      const double diff = f_img.data[static_cast<std::size_t>(c) * n + i] - f_aud.data[c];
      d += diff * diff;
    }
    hm.raw_dist[i] = d;
    hm.scores[i] = sigmoid(squash_b - squash_w * d);
  }
  return hm;
}

double contrastive_loss(const std::vector<Heatmap>& positives,
                        const std::vector<Heatmap>& negatives) {
  const std::size_t total = positives.size() + negatives.size();
  require(total >= 1, errc::config, "contrastive_loss: empty batch");
  double loss = 0.0;
  for (const Heatmap& h : positives) {
    const double s = std::clamp(h.max_score(), kScoreEps, 1.0 - kScoreEps);
    loss += -std::log(s);
  }
  for (const Heatmap& h : negatives) {
    const double s = std::clamp(h.max_score(), kScoreEps, 1.0 - kScoreEps);
    loss += -std::log(1.0 - s);
  }
  return loss / static_cast<double>(total);
}

double teacher_loss_and_grad(TeacherModel& model, const std::vector<const TrainPair*>& batch) {
  require(!batch.empty(), errc::config, "teacher_loss_and_grad: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double w = model.squash_w();
  const double b = model.squash_b();
  double loss = 0.0;

  for (const TrainPair* pair : batch) {
    require(pair->label != PairLabel::Inconclusive, errc::config,
            "inconclusive pair in training batch");
    const bool positive = pair->label == PairLabel::Positive;

    Tensor3 f_img =
        model.image_trunk.forward(image_to_tensor(pair->image, model.cfg.input_h,
                                                  model.cfg.input_w));
    const std::vector<double> img_norms = normalize_columns(f_img);
    Tensor3 f_aud = model.audio_trunk.forward(spec_to_tensor(pair->spec));
    const std::vector<double> aud_norms = normalize_columns(f_aud);

    const Heatmap hm = compute_heatmap(f_img, f_aud, w, b);
    const int n = hm.h * hm.w;
    const int best =
        static_cast<int>(std::max_element(hm.scores.begin(), hm.scores.end()) -
                         hm.scores.begin());
    const double s = hm.scores[best];
    const double sc = std::clamp(s, kScoreEps, 1.0 - kScoreEps);
    loss += positive ? -std::log(sc) : -std::log(1.0 - sc);

    double dl_ds = 0.0;
    if (s > kScoreEps && s < 1.0 - kScoreEps)
      dl_ds = (positive ? -1.0 / sc : 1.0 / (1.0 - sc)) * inv_b;

    const double sig_prime = s * (1.0 - s);
    const double d = hm.raw_dist[best];
    model.squash_grad[1] += dl_ds * sig_prime;            // b
    model.squash_grad[0] += dl_ds * sig_prime * (-d) * w;  // log w
    const double dl_dd = dl_ds * sig_prime * (-w);

    // distance backward at the max cell only
    std::vector<double> g_img_col(f_img.c), g_aud(f_aud.c);
    for (int c = 0; c < f_img.c; ++c) {
      const double diff = f_img.data[static_cast<std::size_t>(c) * n + best] - f_aud.data[c];
      g_img_col[c] = 2.0 * diff * dl_dd;
      g_aud[c] = -2.0 * diff * dl_dd;
    }

    Tensor3 g_img_raw(f_img.c, f_img.h, f_img.w);
    normalize_backward_column(f_img, img_norms, best, g_img_col, g_img_raw);
    model.image_trunk.backward(g_img_raw);

    Tensor3 g_aud_raw(f_aud.c, 1, 1);
    normalize_backward_column(f_aud, aud_norms, 0, g_aud, g_aud_raw);
    model.audio_trunk.backward(g_aud_raw);
  }
  return loss * inv_b;
}

TeacherTrainResult train_teacher(const PairSource& pairs, const TeacherConfig& cfg) {
  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    switch (pairs.label(i)) {
      case PairLabel::Positive: pos_idx.push_back(i); break;
      case PairLabel::Negative: neg_idx.push_back(i); break;
      case PairLabel::Inconclusive: break;  // omitted from training entirely
    }
  }
  require(!pos_idx.empty(), errc::config, "train_teacher: no positive pairs");
  require(!neg_idx.empty(), errc::config, "train_teacher: no negative pairs");

  TeacherTrainResult result{build_teacher(pairs.audio_channels(), cfg), {}};
  TeacherModel& model = result.model;
  nn::SgdOptimizer opt(model.parameters(), cfg.lr, cfg.momentum);
  Rng shuffle_rng = Rng(cfg.seed).stream(1);

  const int half = std::max(1, cfg.batch_size / 2);
  const std::size_t per_epoch_default =
      (std::max(pos_idx.size(), neg_idx.size()) + half - 1) / half;
  const std::size_t steps = cfg.steps_per_epoch > 0
                                ? static_cast<std::size_t>(cfg.steps_per_epoch)
                                : per_epoch_default;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(pos_idx);
    shuffle_rng.shuffle(neg_idx);
    std::size_t pos_cursor = 0, neg_cursor = 0;
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<TrainPair> storage;
      storage.reserve(2 * half);
      for (int i = 0; i < half; ++i) {
        storage.push_back(pairs.get(pos_idx[pos_cursor++ % pos_idx.size()]));
        storage.push_back(pairs.get(neg_idx[neg_cursor++ % neg_idx.size()]));
      }
      std::vector<const TrainPair*> batch;
      for (const auto& p : storage) batch.push_back(&p);
      opt.zero_grad();
      epoch_loss += teacher_loss_and_grad(model, batch);
      opt.step();
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(steps));
  }
  model.trained = true;
  return result;
}

ScoreMap upsample_bilinear(const std::vector<double>& grid, int gh, int gw, int out_h,
                           int out_w) {
  require(static_cast<int>(grid.size()) == gh * gw, errc::shape,
          "upsample_bilinear: grid size mismatch");
  ScoreMap out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const double fy = out_h == 1 ? 0.0 : static_cast<double>(y) * (gh - 1) / (out_h - 1);
    const int y0 = std::min(static_cast<int>(fy), gh - 1);
    const int y1 = std::min(y0 + 1, gh - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = out_w == 1 ? 0.0 : static_cast<double>(x) * (gw - 1) / (out_w - 1);
      const int x0 = std::min(static_cast<int>(fx), gw - 1);
      const int x1 = std::min(x0 + 1, gw - 1);
      const double wx = fx - x0;
      const double top = grid[y0 * gw + x0] * (1 - wx) + grid[y0 * gw + x1] * wx;
      const double bot = grid[y1 * gw + x0] * (1 - wx) + grid[y1 * gw + x1] * wx;
      out.at(x, y) = top * (1 - wy) + bot * wy;
    }
  }
  return out;
}

ScoreMap TeacherModel::predict_heatmap(const Image& frame, const SpectrogramStack& spec) {
  require(trained, errc::model_state, "predict_heatmap: model is untrained");
  for (const auto& p : parameters())
    for (double v : *p.value)
      require(std::isfinite(v), errc::model_state,
              "predict_heatmap: non-finite parameter in " + p.name);
  const Tensor3 f_img = embed_image(frame);
  const Tensor3 f_aud = embed_audio(spec);
  const Heatmap hm = compute_heatmap(f_img, f_aud, squash_w(), squash_b());
  return upsample_bilinear(hm.scores, hm.h, hm.w, frame.height, frame.width);
}

// ---------------------------------------------------------------------------
// checkpoints

nlohmann::ordered_json teacher_config_to_json(const TeacherConfig& c) {
  return {{"input_h", c.input_h},
          {"input_w", c.input_w},
          {"embed_dim", c.embed_dim},
          {"image_trunk_channels", c.image_trunk_channels},
          {"audio_trunk_channels", c.audio_trunk_channels},
          {"squash_w_init", c.squash_w_init},
          {"squash_b_init", c.squash_b_init},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"steps_per_epoch", c.steps_per_epoch},
          {"seed", c.seed}};
}

TeacherConfig teacher_config_from_json(const nlohmann::ordered_json& j) {
  TeacherConfig c;
  c.input_h = j.at("input_h").get<int>();
  c.input_w = j.at("input_w").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.image_trunk_channels = j.at("image_trunk_channels").get<std::vector<int>>();
  c.audio_trunk_channels = j.at("audio_trunk_channels").get<std::vector<int>>();
  c.squash_w_init = j.at("squash_w_init").get<double>();
  c.squash_b_init = j.at("squash_b_init").get<double>();
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void save_teacher(const TeacherModel& model, const std::string& path) {
  TeacherModel& m = const_cast<TeacherModel&>(model);
  std::vector<std::pair<std::string, const std::vector<double>*>> arrays;
  for (const auto& p : m.parameters()) arrays.emplace_back(p.name, p.value);
  nlohmann::ordered_json meta{{"kind", "teacher"},
                              {"audio_channels", model.audio_in_channels},
                              {"trained", model.trained},
                              {"config", teacher_config_to_json(model.cfg)}};
  save_checkpoint(path, meta, arrays);
}

TeacherModel load_teacher(const std::string& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  require(ck.meta.at("kind").get<std::string>() == "teacher", errc::io,
          "load_teacher: checkpoint is not a teacher model");
  TeacherModel m = build_teacher(ck.meta.at("audio_channels").get<int>(),
                                 teacher_config_from_json(ck.meta.at("config")));
  for (const auto& p : m.parameters()) {
    const std::vector<double>& src = ck.find(p.name);
    require(src.size() == p.value->size(), errc::io,
            "load_teacher: size mismatch for array " + p.name);
    *p.value = src;
  }
  m.trained = ck.meta.at("trained").get<bool>();
  return m;
}

}  // namespace avdet
