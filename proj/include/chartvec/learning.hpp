#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chartvec/encoder.hpp"
#include "chartvec/hyper.hpp"

namespace chartvec {

struct LossBreakdown {
  double interp_term = 0.0;  // sum of d(mid, midpoint(prev, next))
  double pair_term = 0.0;    // sum of the three pairwise distances in each triple
  double l1 = 0.0;           // interp_term + alpha * pair_term
  double l2 = 0.0;           // sum of per-sample triplet hinges
  double total = 0.0;        // l1 + beta * l2 (masked terms excluded)

  LossBreakdown& operator+=(const LossBreakdown& o);
};

double euclidean(std::span<const double> a, std::span<const double> b);

/// Gradient of d(a, b) with respect to a; zero when a == b.
Eigen::VectorXd euclidean_grad(std::span<const double> a, std::span<const double> b);

struct InterpolationLoss {
  double interp_term = 0.0;
  double pair_term = 0.0;
  double value = 0.0;  // interp_term + alpha * pair_term
};

/// d(mid, (prev + next) / 2) + alpha * [d(prev, mid) + d(mid, next) + d(prev, next)].
InterpolationLoss interpolation_loss(std::span<const double> prev, std::span<const double> mid,
                                     std::span<const double> next, double alpha);

/// max(0, d(anchor, positive) - d(anchor, negative) + margin).
double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin);

/// Loss over a batch of embedded quadruples. Row 4k holds the previous chart of
/// sample k, then middle, next and negative. When `d_embeddings` is given it
/// receives d(total)/d(embeddings).
LossBreakdown quadruple_loss(const Eigen::MatrixXd& embeddings, const HyperParams& hyper,
                             Eigen::MatrixXd* d_embeddings = nullptr);

/// One training example: three consecutive charts and a negative from
/// another visualization. Pointers refer to inputs owned by the caller.
struct TrainingSample {
  const ChartInput* prev = nullptr;
  const ChartInput* mid = nullptr;
  const ChartInput* next = nullptr;
  const ChartInput* negative = nullptr;
};

struct BatchLoss {
  LossBreakdown loss;
  ForwardTrace trace;
  Eigen::MatrixXd d_embeddings;
};

/// Shared-parameter train-mode forward of all four charts of every sample,
/// followed by the combined loss. Throws Error{diverged} on a non-finite loss.
BatchLoss combined_loss(std::span<const TrainingSample> batch, const EncoderParams& params,
                        const EncoderConfig& config, const HyperParams& hyper,
                        std::optional<std::uint64_t> dropout_seed);

struct AdamState {
  EncoderParams first_moment;
  EncoderParams second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState adam_init(const EncoderParams& params);

/// Bias-corrected Adam update of every trainable tensor.
void adam_step(EncoderParams& params, const EncoderParams& grads, AdamState& state, double lr);

struct GradCheckOptions {
  std::uint64_t seed = 7;
  double epsilon = 1e-5;
  std::size_t coords_per_tensor = 20;
  std::size_t samples = 3;
  bool inject_fault = false;  // scales the conv1 weight gradient to test the check
  // Coordinates where both gradients are below this magnitude agree at zero
  // and are counted in `near_zero` instead of the relative error.
  double zero_floor = 1e-8;
};

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t near_zero = 0;
  double max_relative_error = 0.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t near_zero = 0;  // included in `checked`
  std::size_t skipped = 0;    // probes that crossed a ReLU or hinge kink
  std::vector<TensorCheck> tensors;
};

/// Compares analytic gradients with central differences over a stratified
/// random subset of coordinates (dropout off, batch-norm in train mode).
/// Probes whose +-epsilon evaluations change any ReLU or hinge branch are
/// redrawn, since the finite difference is undefined across a kink.
GradCheckResult grad_check(std::span<const TrainingSample> batch, const EncoderParams& params,
                           const EncoderConfig& config, const HyperParams& hyper,
                           const GradCheckOptions& options);

/// Gradient check on freshly initialized parameters and synthetic inputs.
GradCheckResult grad_check_random(const GradCheckOptions& options,
                                  const EncoderConfig& config = {},
                                  const HyperParams& hyper = {});

struct EpochRecord {
  std::uint32_t epoch = 0;
  LossBreakdown loss;
  double wall_ms = 0.0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<EpochRecord> history;
  std::uint64_t steps = 0;
  std::size_t peak_bytes = 0;  // parameters, Adam moments, gradients and the largest trace
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded shuffle per epoch, constant learning rate, Adam updates.
TrainResult train(std::span<const TrainingSample> samples, const EncoderConfig& config,
                  const HyperParams& hyper, const EpochCallback& on_epoch = {});

/// Optimizer steps for a run: epochs * ceil(samples / batch).
std::uint64_t planned_steps(std::size_t samples, std::uint32_t batch_size, std::uint32_t epochs);

/// `epoch,interp_term,pair_term,l1,l2,total,wall_ms` with a header line.
std::string history_csv(std::span<const EpochRecord> history);

}  // namespace chartvec
