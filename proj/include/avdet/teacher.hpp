#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avdet/audio_frontend.hpp"
#include "avdet/boxes.hpp"
#include "avdet/image.hpp"
#include "avdet/nn.hpp"

namespace avdet {

struct TeacherConfig {
  int input_h = 128;
  int input_w = 384;  // 1:3 aspect preserved from the recording resolution
  int embed_dim = 64;
  std::vector<int> image_trunk_channels = {16, 32, 64, 64};  // four stride-2 blocks
  std::vector<int> audio_trunk_channels = {16, 32, 64, 64};
  double squash_w_init = 1.0;  // score = sigmoid(b - w * dist), w > 0
  double squash_b_init = 2.0;
  double lr = 1e-3;
  double momentum = 0.9;
  int batch_size = 16;  // half positive, half negative
  int epochs = 50;
  int steps_per_epoch = 0;  // 0 = as many steps as the smaller class allows
  std::uint64_t seed = 0;
};

// Correspondence grid at feature-map resolution. scores = sigmoid(b - w*dist),
// strictly decreasing in the squared feature distance.
struct Heatmap {
  int h = 0, w = 0;
  std::vector<double> raw_dist;  // squared embedding distances, >= 0
  std::vector<double> scores;    // in (0,1)

  double max_score() const;
  double min_dist() const;
};

struct TeacherModel {
  TeacherConfig cfg;
  int audio_in_channels = 6;
  nn::Sequential image_trunk;  // image -> (embed_dim, H/16, W/16), unnormalized
  nn::Sequential audio_trunk;  // spectrogram stack -> (embed_dim, 1, 1)
  std::vector<double> squash;  // {log w, b}
  std::vector<double> squash_grad;
  bool trained = false;

  double squash_w() const;
  double squash_b() const;
  std::vector<nn::ParamRef> parameters();

  // Inference caches layer activations, so a model instance is not reentrant;
  // clone per thread for concurrent use.
  nn::Tensor3 embed_image(const Image& frame);
  nn::Tensor3 embed_audio(const SpectrogramStack& spec);
  ScoreMap predict_heatmap(const Image& frame, const SpectrogramStack& spec);
};

TeacherModel build_teacher(int audio_channels, const TeacherConfig& cfg);

Heatmap compute_heatmap(const nn::Tensor3& f_img, const nn::Tensor3& f_aud, double squash_w,
                        double squash_b);

// Per-batch loss: mean of -log(max H) over positives and -log(1 - max H) over
// negatives; scores clamped to [eps, 1-eps], eps = 1e-7.
double contrastive_loss(const std::vector<Heatmap>& positives,
                        const std::vector<Heatmap>& negatives);

struct TrainPair {
  Image image;
  SpectrogramStack spec;
  PairLabel label = PairLabel::Inconclusive;
};

// Lazily-loaded labeled dataset; get() may decode from disk.
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual std::size_t size() const = 0;
  virtual PairLabel label(std::size_t idx) const = 0;
  virtual TrainPair get(std::size_t idx) const = 0;
  virtual int audio_channels() const = 0;
};

class VectorPairSource : public PairSource {
 public:
  explicit VectorPairSource(std::vector<TrainPair> pairs) : pairs_(std::move(pairs)) {}
  std::size_t size() const override { return pairs_.size(); }
  PairLabel label(std::size_t idx) const override { return pairs_[idx].label; }
  TrainPair get(std::size_t idx) const override { return pairs_[idx]; }
  int audio_channels() const override {
    return pairs_.empty() ? 0 : pairs_.front().spec.channels;
  }

 private:
  std::vector<TrainPair> pairs_;
};

struct TeacherTrainResult {
  TeacherModel model;
  std::vector<double> loss_curve;  // per-epoch mean batch loss
};

// Trains on Positive/Negative pairs only; Inconclusive pairs never enter a
// batch. Deterministic for a fixed seed.
TeacherTrainResult train_teacher(const PairSource& pairs, const TeacherConfig& cfg);

// Forward + backward of the contrastive objective on one batch; accumulates
// parameter gradients and returns the batch loss. Exposed for gradient checks.
double teacher_loss_and_grad(TeacherModel& model, const std::vector<const TrainPair*>& batch);

// Bilinear upsampling with align-corners endpoint mapping; values stay within
// the source range.
ScoreMap upsample_bilinear(const std::vector<double>& grid, int gh, int gw, int out_h, int out_w);

void save_teacher(const TeacherModel& model, const std::string& path);
TeacherModel load_teacher(const std::string& path);

nlohmann::ordered_json teacher_config_to_json(const TeacherConfig& cfg);
TeacherConfig teacher_config_from_json(const nlohmann::ordered_json& j);

}  // namespace avdet
