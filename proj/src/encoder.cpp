#include "chartvec/encoder.hpp"

#include <cmath>

#include "chartvec/error.hpp"
#include "chartvec/rng.hpp"

namespace chartvec {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void fill_uniform(MatrixXd& m, Rng& rng, double bound) {
  // Row-major draw order so the stream does not depend on Eigen's storage.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
  }
}

void fill_uniform(VectorXd& v, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-bound, bound);
}

// Stacks every chart's L x in block and returns the (N*L) x (kernel*in) patch matrix.
MatrixXd im2col(const MatrixXd& x, std::size_t batch, std::size_t length, std::size_t kernel) {
  const auto in = x.cols();
  const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
  MatrixXd patches = MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(kernel) * in);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < length; ++t) {
      const auto row = static_cast<Eigen::Index>(n * length + t);
      for (std::size_t k = 0; k < kernel; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(length)) continue;
        patches.block(row, static_cast<Eigen::Index>(k) * in, 1, in) =
            x.row(static_cast<Eigen::Index>(n * length) + src);
      }
    }
  }
  return patches;
}

MatrixXd col2im(const MatrixXd& d_patches, std::size_t batch, std::size_t length,
                std::size_t kernel) {
  const auto in = d_patches.cols() / static_cast<Eigen::Index>(kernel);
  const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
  MatrixXd dx = MatrixXd::Zero(d_patches.rows(), in);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < length; ++t) {
      const auto row = static_cast<Eigen::Index>(n * length + t);
      for (std::size_t k = 0; k < kernel; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(length)) continue;
        dx.row(static_cast<Eigen::Index>(n * length) + src) +=
            d_patches.block(row, static_cast<Eigen::Index>(k) * in, 1, in);
      }
    }
  }
  return dx;
}

MatrixXd schema_rows(std::span<const ChartInput* const> batch, const EncoderConfig& config) {
  const auto length = static_cast<Eigen::Index>(config.sequence_length);
  const auto width = static_cast<Eigen::Index>(config.conv_channels.front());
  MatrixXd x = MatrixXd::Zero(static_cast<Eigen::Index>(batch.size()) * length, width);
  if (!config.use_schema) return x;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& s = batch[n]->schema;
    for (Eigen::Index t = 0; t < length; ++t) {
      for (Eigen::Index c = 0; c < width; ++c) {
        x(static_cast<Eigen::Index>(n) * length + t, c) =
            s.at(static_cast<std::size_t>(t), static_cast<std::size_t>(c));
      }
    }
  }
  return x;
}

// Concatenates [flattened conv output | flattened semantics] per chart.
// Conv output is flattened channel-major: index c * L + t.
MatrixXd fuse(const MatrixXd& conv_out, std::span<const ChartInput* const> batch,
              const EncoderConfig& config) {
  const std::size_t length = config.sequence_length;
  const auto channels = conv_out.cols();
  const auto structural = static_cast<Eigen::Index>(config.structural_dim());
  const auto semantic = static_cast<Eigen::Index>(config.semantic_dim());
  MatrixXd fused = MatrixXd::Zero(static_cast<Eigen::Index>(batch.size()), structural + semantic);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto row = static_cast<Eigen::Index>(n);
    for (Eigen::Index c = 0; c < channels; ++c) {
      for (std::size_t t = 0; t < length; ++t) {
        fused(row, c * static_cast<Eigen::Index>(length) + static_cast<Eigen::Index>(t)) =
            conv_out(static_cast<Eigen::Index>(n * length + t), c);
      }
    }
    if (!config.use_semantics) continue;
    const auto& cells = batch[n]->semantics.cells;
    if (static_cast<Eigen::Index>(cells.size()) != semantic) {
      throw Error(ErrorCode::shape, "semantic block has " + std::to_string(cells.size()) +
                                        " cells, config expects " + std::to_string(semantic));
    }
    for (Eigen::Index i = 0; i < semantic; ++i) {
      fused(row, structural + i) = cells[static_cast<std::size_t>(i)];
    }
  }
  return fused;
}

MatrixXd unfuse_structural(const MatrixXd& d_fused, std::size_t batch,
                           const EncoderConfig& config) {
  const std::size_t length = config.sequence_length;
  const auto channels = static_cast<Eigen::Index>(config.conv_channels.back());
  MatrixXd d = MatrixXd::Zero(static_cast<Eigen::Index>(batch * length), channels);
  for (std::size_t n = 0; n < batch; ++n) {
    for (Eigen::Index c = 0; c < channels; ++c) {
      for (std::size_t t = 0; t < length; ++t) {
        d(static_cast<Eigen::Index>(n * length + t), c) =
            d_fused(static_cast<Eigen::Index>(n),
                    c * static_cast<Eigen::Index>(length) + static_cast<Eigen::Index>(t));
      }
    }
  }
  return d;
}

void check_batch(std::span<const ChartInput* const> batch, const EncoderParams& params,
                 const EncoderConfig& config) {
  check_shapes(params, config);
  if (!all_finite(params)) throw Error(ErrorCode::domain, "non-finite parameter detected");
  for (const auto* in : batch) {
    if (in == nullptr) throw Error(ErrorCode::invalid_argument, "null chart input");
  }
}

MatrixXd add_bias(MatrixXd m, const VectorXd& bias) {
  if (bias.size() != 0) m.rowwise() += bias.transpose();
  return m;
}

// Batch normalization over rows with batch statistics. Fills everything in
// `t` except the patch matrix.
void norm_train(MatrixXd z, const VectorXd& gamma, const VectorXd& beta, double eps,
                ConvTrace& t) {
  const double rows = static_cast<double>(z.rows());
  t.batch_mean = z.colwise().mean().transpose();
  z.rowwise() -= t.batch_mean.transpose();
  t.batch_var = (z.array().square().colwise().sum() / rows).matrix().transpose();
  t.inv_std = (t.batch_var.array() + eps).rsqrt().matrix();
  t.xhat = z.array().rowwise() * t.inv_std.array().transpose();
  t.y = t.xhat.array().rowwise() * gamma.array().transpose();
  t.y.rowwise() += beta.transpose();
}

MatrixXd norm_infer(MatrixXd z, const VectorXd& gamma, const VectorXd& beta,
                    const VectorXd& running_mean, const VectorXd& running_var, double eps) {
  const VectorXd inv_std = (running_var.array() + eps).rsqrt().matrix();
  z.rowwise() -= running_mean.transpose();
  z = z.array().rowwise() * (inv_std.array() * gamma.array()).transpose();
  z.rowwise() += beta.transpose();
  return z;
}

// Gradient through a train-mode batch norm: takes d(loss)/d(y), returns
// d(loss)/d(z) and writes the scale and shift gradients.
MatrixXd norm_backward(const MatrixXd& dy, const ConvTrace& t, const VectorXd& gamma,
                       VectorXd& d_gamma, VectorXd& d_beta) {
  d_gamma = dy.cwiseProduct(t.xhat).colwise().sum().transpose();
  d_beta = dy.colwise().sum().transpose();
  const MatrixXd dxhat = dy.array().rowwise() * gamma.array().transpose();
  const double m = static_cast<double>(dxhat.rows());
  const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
  const Eigen::RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(t.xhat).colwise().sum();
  MatrixXd dz = (m * dxhat).rowwise() - sum_dxhat;
  dz -= (t.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  return dz.array().rowwise() * (t.inv_std.array() / m).transpose();
}

void norm_update(VectorXd& running_mean, VectorXd& running_var, const ConvTrace& t,
                 double momentum) {
  const double count = static_cast<double>(t.xhat.rows());
  const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
  running_mean = (1.0 - momentum) * running_mean + momentum * t.batch_mean;
  running_var = (1.0 - momentum) * running_var + (momentum * unbias) * t.batch_var;
}

}  // namespace

void EncoderConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::invalid_argument, "encoder config: " + what);
  };
  require(conv_channels.size() >= 2, "at least one conv layer is required");
  require(conv_channels.front() == grammar::kRuleCount, "first conv layer must take 60 channels");
  for (auto c : conv_channels) require(c > 0, "conv channels must be positive");
  require(kernel % 2 == 1, "kernel must be odd for same-length padding");
  require(sequence_length == grammar::kMaxRules, "sequence length must be 16");
  require(semantics.slots > 0, "semantic slots must be positive");
  require(hidden_dim > 0 && output_dim > 0, "dense widths must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(bn_momentum > 0.0 && bn_momentum <= 1.0, "batch-norm momentum must be in (0, 1]");
  require(bn_epsilon > 0.0, "batch-norm epsilon must be positive");
}

bool EncoderConfig::operator==(const EncoderConfig& o) const {
  return conv_channels == o.conv_channels && kernel == o.kernel &&
         sequence_length == o.sequence_length && semantics.pooling == o.semantics.pooling &&
         semantics.use_positions == o.semantics.use_positions &&
         semantics.slots == o.semantics.slots && use_schema == o.use_schema &&
         use_semantics == o.use_semantics && use_fc == o.use_fc &&
         hidden_batch_norm == o.hidden_batch_norm && hidden_dim == o.hidden_dim &&
         output_dim == o.output_dim && dropout == o.dropout && bn_momentum == o.bn_momentum &&
         bn_epsilon == o.bn_epsilon;
}

bool operator==(const EncoderParams& a, const EncoderParams& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  if (a.conv.size() != b.conv.size()) return false;
  for (std::size_t i = 0; i < a.conv.size(); ++i) {
    const auto& l = a.conv[i];
    const auto& r = b.conv[i];
    if (!same(l.weight, r.weight) || !same(l.gamma, r.gamma) || !same(l.beta, r.beta) ||
        !same(l.running_mean, r.running_mean) || !same(l.running_var, r.running_var)) {
      return false;
    }
  }
  return same(a.fc1.weight, b.fc1.weight) && same(a.fc1.bias, b.fc1.bias) &&
         same(a.fc1_norm.gamma, b.fc1_norm.gamma) && same(a.fc1_norm.beta, b.fc1_norm.beta) &&
         same(a.fc1_norm.running_mean, b.fc1_norm.running_mean) &&
         same(a.fc1_norm.running_var, b.fc1_norm.running_var) &&
         same(a.fc2.weight, b.fc2.weight) && same(a.fc2.bias, b.fc2.bias);
}

EncoderParams init_params(std::uint64_t seed, const EncoderConfig& config) {
  config.validate();
  Rng rng(seed);
  EncoderParams p;
  for (std::size_t i = 0; i + 1 < config.conv_channels.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(config.conv_channels[i]);
    const auto out = static_cast<Eigen::Index>(config.conv_channels[i + 1]);
    const auto fan_in = static_cast<double>(in) * static_cast<double>(config.kernel);
    ConvLayer layer;
    layer.weight.resize(out, in * static_cast<Eigen::Index>(config.kernel));
    fill_uniform(layer.weight, rng, 1.0 / std::sqrt(fan_in));
    layer.gamma = VectorXd::Ones(out);
    layer.beta = VectorXd::Zero(out);
    layer.running_mean = VectorXd::Zero(out);
    layer.running_var = VectorXd::Ones(out);
    p.conv.push_back(std::move(layer));
  }
  auto dense = [&](std::size_t in, std::size_t out, bool with_bias) {
    DenseLayer d;
    d.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    const double fan_in = static_cast<double>(in);
    fill_uniform(d.weight, rng, 1.0 / std::sqrt(fan_in));
    if (with_bias) {
      d.bias.resize(static_cast<Eigen::Index>(out));
      fill_uniform(d.bias, rng, 1.0 / std::sqrt(fan_in));
    }
    return d;
  };
  if (config.use_fc) {
    p.fc1 = dense(config.fusion_dim(), config.hidden_dim, !config.hidden_batch_norm);
    if (config.hidden_batch_norm) {
      const auto h = static_cast<Eigen::Index>(config.hidden_dim);
      p.fc1_norm = {VectorXd::Ones(h), VectorXd::Zero(h), VectorXd::Zero(h), VectorXd::Ones(h)};
    }
    p.fc2 = dense(config.hidden_dim, config.output_dim, true);
  }
  return p;
}

EncoderParams zeros_like(const EncoderParams& p) {
  EncoderParams z = p;
  for (auto& l : z.conv) {
    l.weight.setZero();
    l.gamma.setZero();
    l.beta.setZero();
    l.running_mean.setZero();
    l.running_var.setZero();
  }
  z.fc1.weight.setZero();
  z.fc1.bias.setZero();
  z.fc1_norm.gamma.setZero();
  z.fc1_norm.beta.setZero();
  z.fc1_norm.running_mean.setZero();
  z.fc1_norm.running_var.setZero();
  z.fc2.weight.setZero();
  z.fc2.bias.setZero();
  return z;
}

namespace {

template <typename Params, typename Fn>
void visit_trainable(Params& p, Fn&& fn) {
  for (std::size_t i = 0; i < p.conv.size(); ++i) {
    const std::string prefix = "conv" + std::to_string(i + 1) + ".";
    auto& l = p.conv[i];
    fn(prefix + "weight", l.weight.data(), l.weight.size());
    fn(prefix + "gamma", l.gamma.data(), l.gamma.size());
    fn(prefix + "beta", l.beta.data(), l.beta.size());
  }
  if (p.fc1.weight.size() == 0) return;
  fn(std::string("fc1.weight"), p.fc1.weight.data(), p.fc1.weight.size());
  if (p.fc1.bias.size() != 0) fn(std::string("fc1.bias"), p.fc1.bias.data(), p.fc1.bias.size());
  if (p.fc1_norm.gamma.size() != 0) {
    fn(std::string("fc1.gamma"), p.fc1_norm.gamma.data(), p.fc1_norm.gamma.size());
    fn(std::string("fc1.beta"), p.fc1_norm.beta.data(), p.fc1_norm.beta.size());
  }
  fn(std::string("fc2.weight"), p.fc2.weight.data(), p.fc2.weight.size());
  fn(std::string("fc2.bias"), p.fc2.bias.data(), p.fc2.bias.size());
}

}  // namespace

void for_each_trainable(EncoderParams& p,
                        const std::function<void(std::string_view, std::span<double>)>& fn) {
  visit_trainable(p, [&](const std::string& name, double* data, Eigen::Index n) {
    fn(name, std::span<double>(data, static_cast<std::size_t>(n)));
  });
}

void for_each_trainable(
    const EncoderParams& p,
    const std::function<void(std::string_view, std::span<const double>)>& fn) {
  visit_trainable(p, [&](const std::string& name, const double* data, Eigen::Index n) {
    fn(name, std::span<const double>(data, static_cast<std::size_t>(n)));
  });
}

std::size_t trainable_count(const EncoderParams& p) {
  std::size_t n = 0;
  for_each_trainable(p, [&](std::string_view, std::span<const double> t) { n += t.size(); });
  return n;
}

void check_shapes(const EncoderParams& p, const EncoderConfig& config) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::shape, what); };
  if (p.conv.size() + 1 != config.conv_channels.size()) fail("conv layer count mismatch");
  for (std::size_t i = 0; i < p.conv.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(config.conv_channels[i]);
    const auto out = static_cast<Eigen::Index>(config.conv_channels[i + 1]);
    const auto& l = p.conv[i];
    if (l.weight.rows() != out || l.weight.cols() != in * static_cast<Eigen::Index>(config.kernel) ||
        l.gamma.size() != out || l.beta.size() != out || l.running_mean.size() != out ||
        l.running_var.size() != out) {
      fail("conv" + std::to_string(i + 1) + " shape mismatch");
    }
  }
  if (config.use_fc) {
    const auto fusion = static_cast<Eigen::Index>(config.fusion_dim());
    const auto hidden = static_cast<Eigen::Index>(config.hidden_dim);
    const auto out = static_cast<Eigen::Index>(config.output_dim);
    const auto norm = config.hidden_batch_norm ? hidden : 0;
    if (p.fc1.weight.rows() != hidden || p.fc1.weight.cols() != fusion ||
        p.fc1.bias.size() != hidden - norm) {
      fail("fc1 shape mismatch");
    }
    const auto& n = p.fc1_norm;
    if (n.gamma.size() != norm || n.beta.size() != norm || n.running_mean.size() != norm ||
        n.running_var.size() != norm) {
      fail("fc1 batch-norm shape mismatch");
    }
    if (p.fc2.weight.rows() != out || p.fc2.weight.cols() != hidden || p.fc2.bias.size() != out) {
      fail("fc2 shape mismatch");
    }
  } else if (p.fc1.weight.size() != 0 || p.fc2.weight.size() != 0 ||
             p.fc1_norm.gamma.size() != 0) {
    fail("dense layers present in a no-fc config");
  }
}

bool all_finite(const EncoderParams& p) {
  for (const auto& l : p.conv) {
    if (!l.weight.allFinite() || !l.gamma.allFinite() || !l.beta.allFinite() ||
        !l.running_mean.allFinite() || !l.running_var.allFinite()) {
      return false;
    }
  }
  const auto& n = p.fc1_norm;
  return p.fc1.weight.allFinite() && p.fc1.bias.allFinite() && n.gamma.allFinite() &&
         n.beta.allFinite() && n.running_mean.allFinite() && n.running_var.allFinite() &&
         p.fc2.weight.allFinite() && p.fc2.bias.allFinite();
}

ChartInput encode_chart(const ChartFact& fact, const VectorStore& store,
                        const EncoderConfig& config) {
  ChartInput input;
  input.schema = grammar::encode_one_hot(grammar::derive_rules(fact));
  const auto tokens = extract_tokens(fact);
  input.semantics = build_semantic_block(tokens, store, config.semantics);
  return input;
}

Eigen::MatrixXd forward_infer(std::span<const ChartInput* const> batch,
                              const EncoderParams& params, const EncoderConfig& config) {
  check_batch(batch, params, config);
  const std::size_t n = batch.size();
  MatrixXd x = schema_rows(batch, config);
  for (const auto& layer : params.conv) {
    const MatrixXd z =
        im2col(x, n, config.sequence_length, config.kernel) * layer.weight.transpose();
    x = norm_infer(z, layer.gamma, layer.beta, layer.running_mean, layer.running_var,
                   config.bn_epsilon)
            .cwiseMax(0.0);
  }
  MatrixXd fused = fuse(x, batch, config);
  if (!config.use_fc) return fused;
  MatrixXd hidden = add_bias(fused * params.fc1.weight.transpose(), params.fc1.bias);
  if (config.hidden_batch_norm) {
    const auto& nl = params.fc1_norm;
    hidden = norm_infer(std::move(hidden), nl.gamma, nl.beta, nl.running_mean, nl.running_var,
                        config.bn_epsilon);
  }
  return add_bias(hidden.cwiseMax(0.0) * params.fc2.weight.transpose(), params.fc2.bias);
}

ChartVector forward(const ChartInput& input, const EncoderParams& params,
                    const EncoderConfig& config) {
  const ChartInput* one[] = {&input};
  return forward_infer(one, params, config).row(0).transpose();
}

ForwardTrace forward_train(std::span<const ChartInput* const> batch, const EncoderParams& params,
                           const EncoderConfig& config,
                           std::optional<std::uint64_t> dropout_seed) {
  check_batch(batch, params, config);
  if (batch.empty()) throw Error(ErrorCode::invalid_argument, "empty batch");
  ForwardTrace trace;
  trace.batch = batch.size();
  MatrixXd x = schema_rows(batch, config);
  for (const auto& layer : params.conv) {
    ConvTrace t;
    t.patches = im2col(x, trace.batch, config.sequence_length, config.kernel);
    norm_train(t.patches * layer.weight.transpose(), layer.gamma, layer.beta, config.bn_epsilon,
               t);
    x = t.y.cwiseMax(0.0);
    trace.conv.push_back(std::move(t));
  }
  trace.fused = fuse(x, batch, config);
  if (!config.use_fc) {
    trace.output = trace.fused;
    return trace;
  }
  trace.hidden = add_bias(trace.fused * params.fc1.weight.transpose(), params.fc1.bias);
  if (config.hidden_batch_norm) {
    norm_train(std::move(trace.hidden), params.fc1_norm.gamma, params.fc1_norm.beta,
               config.bn_epsilon, trace.hidden_norm);
    trace.hidden = trace.hidden_norm.y;
  }
  MatrixXd activated = trace.hidden.cwiseMax(0.0);
  if (dropout_seed && config.dropout > 0.0) {
    Rng rng(*dropout_seed);
    const double keep_scale = 1.0 / (1.0 - config.dropout);
    trace.dropout.resize(activated.rows(), activated.cols());
    for (Eigen::Index r = 0; r < activated.rows(); ++r) {
      for (Eigen::Index c = 0; c < activated.cols(); ++c) {
        trace.dropout(r, c) = rng.uniform() < config.dropout ? 0.0 : keep_scale;
      }
    }
    activated = activated.cwiseProduct(trace.dropout);
  }
  trace.output = add_bias(activated * params.fc2.weight.transpose(), params.fc2.bias);
  return trace;
}

void update_running_stats(EncoderParams& params, const ForwardTrace& trace,
                          const EncoderConfig& config) {
  const double m = config.bn_momentum;
  for (std::size_t i = 0; i < params.conv.size(); ++i) {
    auto& layer = params.conv[i];
    norm_update(layer.running_mean, layer.running_var, trace.conv.at(i), m);
  }
  if (config.use_fc && config.hidden_batch_norm) {
    norm_update(params.fc1_norm.running_mean, params.fc1_norm.running_var, trace.hidden_norm, m);
  }
}

EncoderParams backward(const ForwardTrace& trace, const Eigen::MatrixXd& d_output,
                       const EncoderParams& params, const EncoderConfig& config) {
  if (d_output.rows() != trace.output.rows() || d_output.cols() != trace.output.cols()) {
    throw Error(ErrorCode::shape, "upstream gradient does not match the traced output");
  }
  if (trace.conv.size() != params.conv.size()) {
    throw Error(ErrorCode::shape, "trace does not match parameters");
  }
  EncoderParams grads = zeros_like(params);
  MatrixXd d_fused;
  if (config.use_fc) {
    MatrixXd activated = trace.hidden.cwiseMax(0.0);
    if (trace.dropout.size() != 0) activated = activated.cwiseProduct(trace.dropout);
    grads.fc2.weight = d_output.transpose() * activated;
    grads.fc2.bias = d_output.colwise().sum().transpose();
    MatrixXd d_hidden = d_output * params.fc2.weight;
    if (trace.dropout.size() != 0) d_hidden = d_hidden.cwiseProduct(trace.dropout);
    d_hidden = (trace.hidden.array() > 0.0).select(d_hidden, 0.0);
    if (config.hidden_batch_norm) {
      d_hidden = norm_backward(d_hidden, trace.hidden_norm, params.fc1_norm.gamma,
                               grads.fc1_norm.gamma, grads.fc1_norm.beta);
    } else {
      grads.fc1.bias = d_hidden.colwise().sum().transpose();
    }
    grads.fc1.weight = d_hidden.transpose() * trace.fused;
    d_fused = d_hidden * params.fc1.weight.leftCols(
                             static_cast<Eigen::Index>(config.structural_dim()));
  } else {
    d_fused = d_output.leftCols(static_cast<Eigen::Index>(config.structural_dim()));
  }

  MatrixXd d_act = unfuse_structural(d_fused, trace.batch, config);
  for (std::size_t li = params.conv.size(); li-- > 0;) {
    const auto& t = trace.conv[li];
    const auto& layer = params.conv[li];
    auto& g = grads.conv[li];
    const MatrixXd dy = (t.y.array() > 0.0).select(d_act, 0.0);
    const MatrixXd dz = norm_backward(dy, t, layer.gamma, g.gamma, g.beta);
    g.weight = dz.transpose() * t.patches;
    if (li > 0) {
      d_act = col2im(dz * layer.weight, trace.batch, config.sequence_length, config.kernel);
    }
  }
  return grads;
}

std::uint64_t activation_pattern(const ForwardTrace& trace) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      h ^= m.data()[i] > 0.0 ? 0x9dULL : 0x3bULL;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& c : trace.conv) mix(c.y);
  mix(trace.hidden);
  return h;
}

}  // namespace chartvec
