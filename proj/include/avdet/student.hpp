#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avdet/audio_frontend.hpp"
#include "avdet/nn.hpp"
#include "avdet/types.hpp"

namespace avdet {

struct StudentHyper {
  double gamma = 2.0;
  int grid_h = 4;
  int grid_w = 16;
  std::vector<int> trunk_channels = {16, 32, 64, 64, 64};  // one stride-2 block each
  double lambda_box = 1.0;  // weight of the smooth-L1 box term
  double lr = 1e-3;
  int batch_size = 16;
  int epochs = 30;
  int steps_per_epoch = 0;  // 0 = one pass over the dataset
  double obj_threshold = 0.2;
  std::uint64_t seed = 0;
};

struct StudentModel {
  StudentHyper hyper;
  int in_channels = 6;
  int in_h = 128, in_w = 512;
  nn::Sequential net;  // stack -> (5, grid_h, grid_w): objectness logit + 4 box logits
  bool trained = false;

  std::vector<nn::ParamRef> parameters();
  nn::Tensor3 forward(const SpectrogramStack& spec);
};

StudentModel build_student(int n_channels, const StudentHyper& hyper);

// Mean over cells of -(1-p_t)^gamma * log(p_t); probabilities clamped to
// [1e-7, 1-1e-7]. Classification term only; the box term lives in
// student_loss_and_grad.
double focal_loss(const std::vector<double>& pred_obj, const std::vector<double>& target_obj,
                  double gamma);

// Per-cell regression targets in cell-relative / normalized coordinates.
struct StudentTargets {
  int grid_h = 0, grid_w = 0;
  std::vector<double> obj;                    // {0,1} per cell
  std::vector<std::array<double, 4>> boxes;  // (cx_off, cy_off, w_norm, h_norm), valid where obj=1
};

// A cell is positive iff a box center falls inside it; at most one box per
// cell (first wins in input order).
StudentTargets assign_targets(const std::vector<BBox>& boxes, int img_w, int img_h, int grid_h,
                              int grid_w);

struct StudentTrainSample {
  SpectrogramStack spec;
  std::vector<BBox> boxes;  // teacher pseudo-labels, possibly empty
  int img_w = 0, img_h = 0;
};

class StudentSampleSource {
 public:
  virtual ~StudentSampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual StudentTrainSample get(std::size_t idx) const = 0;
  virtual int audio_channels() const = 0;
};

class VectorSampleSource : public StudentSampleSource {
 public:
  explicit VectorSampleSource(std::vector<StudentTrainSample> samples)
      : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  StudentTrainSample get(std::size_t idx) const override { return samples_[idx]; }
  int audio_channels() const override {
    return samples_.empty() ? 0 : samples_.front().spec.channels;
  }

 private:
  std::vector<StudentTrainSample> samples_;
};

struct StudentTrainResult {
  StudentModel model;
  std::vector<double> loss_curve;
};

StudentTrainResult train_student(const StudentSampleSource& samples, const StudentHyper& hyper);

// Focal + smooth-L1 objective on one batch; accumulates gradients, returns the
// batch loss. Exposed for gradient checks.
double student_loss_and_grad(StudentModel& model,
                             const std::vector<const StudentTrainSample*>& batch);

std::vector<ScoredBox> predict_boxes(StudentModel& model, const SpectrogramStack& spec,
                                     int img_w, int img_h);

void save_student(const StudentModel& model, const std::string& path);
StudentModel load_student(const std::string& path);

nlohmann::ordered_json student_hyper_to_json(const StudentHyper& hyper);
StudentHyper student_hyper_from_json(const nlohmann::ordered_json& j);

}  // namespace avdet
