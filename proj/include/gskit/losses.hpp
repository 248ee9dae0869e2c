// Training losses with analytic gradients.
//
// Every loss returns its value together with the gradient with respect to
// the prediction it consumes. Logarithms are floored at kLogFloor; a floored
// term sets `floored` so callers can log it.

#pragma once

#include "gskit/grasp.hpp"
#include "gskit/tensor.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace gskit {

inline constexpr double kLogFloor = 1e-12;

using OffsetMatrix = Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor>;
using LogitMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LossWeights {
  double grasp = 1.0;
  double sem = 1.0;
  double inst = 1.0;

  void validate() const;
};

/// 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise.
double smooth_l1(double d);
/// clamp(d, -1, 1).
double smooth_l1_grad(double d);

struct MatrixLoss {
  double value = 0;
  LogitMatrix grad;
  bool floored = false;
};

struct TensorLoss {
  double value = 0;
  Tensor grad;
  bool floored = false;
};

/// Mean over rows (positive proposals) of the summed smooth-L1 over the four
/// offsets. No rows: value 0.
MatrixLoss loss_box(const OffsetMatrix& pred, const OffsetMatrix& target);

/// Rows are proposals (positive and negative), columns the 19 orientation
/// classes (0 = invalid). Value -(1/|R|) sum_r log softmax(z_r)[c_r]; the
/// gradient is taken with respect to the logits.
MatrixLoss loss_rot(const LogitMatrix& logits, std::span<const int> classes);

/// Hardest-quarter cross entropy for one image.
///
/// `probs` is N x H x W with per-pixel distributions, `labels` holds class
/// indices in [0, N). The floor(HW/4) pixels with the smallest probability of
/// their label (ties: lower row-major index first) get weight 1/floor(HW/4),
/// which is 4/(HW) when HW is divisible by 4. The gradient is with respect
/// to `probs` with the selection held fixed.
struct SemLoss : TensorLoss {
  std::vector<Index> selected;  // row-major pixel indices, ascending
};
/// A non-null `fixed_selection` replaces the hardest-quarter choice.
SemLoss loss_sem(const Tensor& probs, const LabelImage& labels, const std::vector<Index>* fixed_selection = nullptr);
/// As above with softmax logits (N x H x W) as input; gradient w.r.t. logits.
SemLoss loss_sem_logits(const Tensor& logits, const LabelImage& labels);

/// Normalized focal loss for one binary mask.
///
/// `logits` is 2 x H x W (channel 0 = not instance, 1 = instance). With Q the
/// softmax probability of the correct label, the value is
/// -(1/Z) sum (1 - Q)^gamma log Q with Z = sum (1 - Q)^gamma, and the
/// gradient treats Z as a constant. Z = 0 gives value 0 and zero gradient.
/// `normalizer` is set to Z; a positive `fixed_normalizer` is used instead of Z.
TensorLoss loss_nfl(const Tensor& logits, const MaskImage& mask, double gamma, double fixed_normalizer = 0,
                    double* normalizer = nullptr);
/// Value only, from the correct-label probabilities Q directly.
double nfl_value(const Image& q, double gamma);

struct LossTerms {
  double box = 0;
  double rot = 0;
  double sem = 0;
  double inst = 0;
};

struct LossBundle {
  LossTerms terms;
  double total = 0;
};

/// lambda_grasp (L_box + L_rot) + lambda_sem L_sem + lambda_inst L_inst.
LossBundle composite(const LossTerms& terms, const LossWeights& weights);

/// Channel softmax for C x H x W (or N x C x H x W) logits.
Tensor softmax_channels(const Tensor& logits);

}  // namespace gskit
