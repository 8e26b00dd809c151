#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chartvec/grammar.hpp"
#include "chartvec/hyper.hpp"
#include "chartvec/semantics.hpp"

namespace chartvec {

struct EncoderConfig {
  std::vector<std::size_t> conv_channels{60, 30, 15, 8};
  std::size_t kernel = 3;
  std::size_t sequence_length = grammar::kMaxRules;
  SemanticOptions semantics{};
  bool use_schema = true;
  bool use_semantics = true;
  bool use_fc = true;
  bool hidden_batch_norm = true;  // normalize fc1 before its ReLU
  std::size_t hidden_dim = 540;
  std::size_t output_dim = 540;
  double dropout = 0.1;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  std::size_t structural_dim() const { return sequence_length * conv_channels.back(); }
  std::size_t semantic_dim() const {
    return semantic_rows(semantics) * semantic_width(semantics);
  }
  std::size_t fusion_dim() const { return structural_dim() + semantic_dim(); }
  std::size_t embedding_dim() const { return use_fc ? output_dim : fusion_dim(); }

  /// Throws Error{invalid_argument}.
  void validate() const;

  bool operator==(const EncoderConfig& o) const;
};

struct ConvLayer {
  Eigen::MatrixXd weight;  // out x (kernel * in); column k * in + c
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // empty when the layer feeds batch normalization
};

struct NormLayer {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

/// Layers that feed batch normalization directly carry no bias.
struct EncoderParams {
  std::vector<ConvLayer> conv;
  DenseLayer fc1;
  NormLayer fc1_norm;  // empty unless config.hidden_batch_norm
  DenseLayer fc2;
};

bool operator==(const EncoderParams& a, const EncoderParams& b);

/// Fan-in uniform init: weights and dense biases in +-1/sqrt(fan_in), gamma 1,
/// beta 0, running mean 0, running variance 1.
EncoderParams init_params(std::uint64_t seed, const EncoderConfig& config);

/// Same shapes, all zero (used as a gradient accumulator).
EncoderParams zeros_like(const EncoderParams& p);

/// Visits every trainable tensor in checkpoint order. Running statistics are
/// not trainable and are skipped.
void for_each_trainable(EncoderParams& p,
                        const std::function<void(std::string_view, std::span<double>)>& fn);
void for_each_trainable(const EncoderParams& p,
                        const std::function<void(std::string_view, std::span<const double>)>& fn);

std::size_t trainable_count(const EncoderParams& p);

/// Throws Error{shape} when tensor shapes disagree with the config.
void check_shapes(const EncoderParams& p, const EncoderConfig& config);

bool all_finite(const EncoderParams& p);

/// Model-ready encoding of one chart.
struct ChartInput {
  grammar::SchemaMatrix schema;
  SemanticBlock semantics;
};

ChartInput encode_chart(const ChartFact& fact, const VectorStore& store,
                        const EncoderConfig& config);

using ChartVector = Eigen::VectorXd;

struct ConvTrace {
  Eigen::MatrixXd patches;  // (N*L) x (kernel*in)
  Eigen::MatrixXd xhat;     // normalized pre-activation, (N*L) x out
  Eigen::MatrixXd y;        // after scale/shift, before ReLU
  Eigen::VectorXd batch_mean;
  Eigen::VectorXd batch_var;
  Eigen::VectorXd inv_std;
};

/// Cached activations of a train-mode forward pass.
struct ForwardTrace {
  std::size_t batch = 0;
  std::vector<ConvTrace> conv;
  Eigen::MatrixXd fused;    // N x fusion_dim
  ConvTrace hidden_norm;    // batch-norm statistics of fc1 (no patches)
  Eigen::MatrixXd hidden;   // input to the fc1 ReLU
  Eigen::MatrixXd dropout;  // per-unit multiplier (0 or 1/(1-p)); empty when off
  Eigen::MatrixXd output;   // N x embedding_dim
};

/// Infer mode: running batch-norm statistics, no dropout. One row per chart.
Eigen::MatrixXd forward_infer(std::span<const ChartInput* const> batch,
                              const EncoderParams& params, const EncoderConfig& config);

ChartVector forward(const ChartInput& input, const EncoderParams& params,
                    const EncoderConfig& config);

/// Train mode: batch statistics, dropout drawn from `dropout_seed` when set.
/// Does not touch the running statistics; see update_running_stats.
ForwardTrace forward_train(std::span<const ChartInput* const> batch, const EncoderParams& params,
                           const EncoderConfig& config,
                           std::optional<std::uint64_t> dropout_seed);

void update_running_stats(EncoderParams& params, const ForwardTrace& trace,
                          const EncoderConfig& config);

/// Reverse pass for d(loss)/d(output). Returns gradients shaped like params.
EncoderParams backward(const ForwardTrace& trace, const Eigen::MatrixXd& d_output,
                       const EncoderParams& params, const EncoderConfig& config);

/// Fingerprint of every piecewise-linear branch taken (ReLU signs). Equal
/// fingerprints mean the two passes lie on the same linear piece.
std::uint64_t activation_pattern(const ForwardTrace& trace);

// Checkpoint files: little-endian, magic "C2V1", config block, hyperparameter
// block, parameter count, then raw float64 payloads.
struct Checkpoint {
  EncoderConfig config;
  HyperParams hyper;
  EncoderParams params;
};

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     const EncoderConfig& config, const HyperParams& hyper);

/// Throws Error{io}, Error{version} for a wrong magic, Error{shape} when the
/// payload disagrees with the embedded config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// As above, additionally requiring the embedded config to equal `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected);

}  // namespace chartvec
