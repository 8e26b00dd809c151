#include "chartvec/learning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "chartvec/error.hpp"
#include "chartvec/rng.hpp"

namespace chartvec {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum SeedStream : std::uint64_t { kInitStream = 1, kShuffleStream = 2, kDropoutStream = 3 };

// Rows of a column-major matrix are strided; copy them into contiguous vectors.
std::vector<VectorXd> rows_of(const MatrixXd& m) {
  std::vector<VectorXd> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).transpose());
  return out;
}

std::span<const double> view(const VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

std::size_t matrix_bytes(const MatrixXd& m) {
  return static_cast<std::size_t>(m.size()) * sizeof(double);
}

std::size_t trace_bytes(const ForwardTrace& t) {
  std::size_t n = matrix_bytes(t.fused) + matrix_bytes(t.hidden) + matrix_bytes(t.dropout) +
                  matrix_bytes(t.output);
  for (const auto& c : t.conv) {
    n += matrix_bytes(c.patches) + matrix_bytes(c.xhat) + matrix_bytes(c.y);
  }
  return n;
}

void check_same_size(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::shape, "vector dimensions differ");
}

// Bits recording which side of every hinge and distance singularity the loss is on.
std::uint64_t loss_pattern(const MatrixXd& embeddings, const HyperParams& hyper) {
  const auto rows = rows_of(embeddings);
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  auto mix = [&](bool bit) {
    h ^= bit ? 0x5bULL : 0xa7ULL;
    h *= 0x100000001b3ULL;
  };
  for (std::size_t k = 0; 4 * k + 3 < rows.size(); ++k) {
    const auto& p = rows[4 * k];
    const auto& m = rows[4 * k + 1];
    const auto& n = rows[4 * k + 2];
    const auto& q = rows[4 * k + 3];
    mix(triplet_loss(view(p), view(n), view(q), hyper.margin) > 0.0);
    mix(euclidean(view(p), view(m)) == 0.0);
    mix(euclidean(view(m), view(n)) == 0.0);
    mix(euclidean(view(p), view(n)) == 0.0);
    mix(euclidean(view(p), view(q)) == 0.0);
  }
  return h;
}

}  // namespace

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  interp_term += o.interp_term;
  pair_term += o.pair_term;
  l1 += o.l1;
  l2 += o.l2;
  total += o.total;
  return *this;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  check_same_size(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

Eigen::VectorXd euclidean_grad(std::span<const double> a, std::span<const double> b) {
  check_same_size(a, b);
  VectorXd g(static_cast<Eigen::Index>(a.size()));
  const double d = euclidean(a, b);
  if (d == 0.0) return VectorXd::Zero(g.size());
  for (std::size_t i = 0; i < a.size(); ++i) g(static_cast<Eigen::Index>(i)) = (a[i] - b[i]) / d;
  return g;
}

InterpolationLoss interpolation_loss(std::span<const double> prev, std::span<const double> mid,
                                     std::span<const double> next, double alpha) {
  check_same_size(prev, mid);
  check_same_size(mid, next);
  std::vector<double> midpoint(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i) midpoint[i] = (prev[i] + next[i]) / 2.0;
  InterpolationLoss out;
  out.interp_term = euclidean(mid, midpoint);
  out.pair_term = euclidean(prev, mid) + euclidean(mid, next) + euclidean(prev, next);
  out.value = out.interp_term + alpha * out.pair_term;
  return out;
}

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin) {
  return std::max(0.0, euclidean(anchor, positive) - euclidean(anchor, negative) + margin);
}

LossBreakdown quadruple_loss(const Eigen::MatrixXd& embeddings, const HyperParams& hyper,
                             Eigen::MatrixXd* d_embeddings) {
  if (embeddings.rows() % 4 != 0) {
    throw Error(ErrorCode::shape, "embedding rows must come in groups of four");
  }
  const auto rows = rows_of(embeddings);
  if (d_embeddings != nullptr) d_embeddings->setZero(embeddings.rows(), embeddings.cols());
  LossBreakdown total;
  const double w1 = hyper.use_interpolation ? 1.0 : 0.0;
  const double w2 = hyper.use_triplet ? hyper.beta : 0.0;

  for (std::size_t k = 0; 4 * k < rows.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(4 * k);
    const VectorXd& prev = rows[4 * k];
    const VectorXd& mid = rows[4 * k + 1];
    const VectorXd& next = rows[4 * k + 2];
    const VectorXd& neg = rows[4 * k + 3];

    const auto il = interpolation_loss(view(prev), view(mid), view(next), hyper.alpha);
    const double hinge = triplet_loss(view(prev), view(next), view(neg), hyper.margin);
    LossBreakdown s;
    s.interp_term = il.interp_term;
    s.pair_term = il.pair_term;
    s.l1 = il.value;
    s.l2 = hinge;
    s.total = w1 * s.l1 + w2 * s.l2;
    total += s;

    if (d_embeddings == nullptr) continue;
    auto& d = *d_embeddings;
    if (w1 != 0.0) {
      const VectorXd midpoint = (prev + next) / 2.0;
      const VectorXd g_interp = euclidean_grad(view(mid), view(midpoint));
      d.row(r + 1) += w1 * g_interp.transpose();
      d.row(r) -= (0.5 * w1) * g_interp.transpose();
      d.row(r + 2) -= (0.5 * w1) * g_interp.transpose();
      const double a = w1 * hyper.alpha;
      if (a != 0.0) {
        const VectorXd g_pm = euclidean_grad(view(prev), view(mid));
        const VectorXd g_mn = euclidean_grad(view(mid), view(next));
        const VectorXd g_pn = euclidean_grad(view(prev), view(next));
        d.row(r) += a * (g_pm + g_pn).transpose();
        d.row(r + 1) += a * (g_mn - g_pm).transpose();
        d.row(r + 2) -= a * (g_mn + g_pn).transpose();
      }
    }
    if (w2 != 0.0 && hinge > 0.0) {
      const VectorXd g_pos = euclidean_grad(view(prev), view(next));
      const VectorXd g_neg = euclidean_grad(view(prev), view(neg));
      d.row(r) += w2 * (g_pos - g_neg).transpose();
      d.row(r + 2) -= w2 * g_pos.transpose();
      d.row(r + 3) += w2 * g_neg.transpose();
    }
  }
  return total;
}

BatchLoss combined_loss(std::span<const TrainingSample> batch, const EncoderParams& params,
                        const EncoderConfig& config, const HyperParams& hyper,
                        std::optional<std::uint64_t> dropout_seed) {
  if (batch.empty()) throw Error(ErrorCode::invalid_argument, "empty batch");
  std::vector<const ChartInput*> inputs;
  inputs.reserve(batch.size() * 4);
  for (const auto& s : batch) {
    inputs.insert(inputs.end(), {s.prev, s.mid, s.next, s.negative});
  }
  BatchLoss out;
  out.trace = forward_train(inputs, params, config, dropout_seed);
  out.loss = quadruple_loss(out.trace.output, hyper, &out.d_embeddings);
  if (!std::isfinite(out.loss.total)) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "non-finite loss (l1=%g, l2=%g) over %zu samples",
                  out.loss.l1, out.loss.l2, batch.size());
    throw Error(ErrorCode::diverged, buf);
  }
  return out;
}

AdamState adam_init(const EncoderParams& params) {
  AdamState s;
  s.first_moment = zeros_like(params);
  s.second_moment = zeros_like(params);
  return s;
}

void adam_step(EncoderParams& params, const EncoderParams& grads, AdamState& state, double lr) {
  ++state.step;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  std::vector<std::span<double>> p;
  std::vector<std::span<const double>> g;
  std::vector<std::span<double>> m;
  std::vector<std::span<double>> v;
  for_each_trainable(params, [&](std::string_view, std::span<double> t) { p.push_back(t); });
  for_each_trainable(grads, [&](std::string_view, std::span<const double> t) { g.push_back(t); });
  for_each_trainable(state.first_moment,
                     [&](std::string_view, std::span<double> t) { m.push_back(t); });
  for_each_trainable(state.second_moment,
                     [&](std::string_view, std::span<double> t) { v.push_back(t); });
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw Error(ErrorCode::shape, "optimizer state does not match parameters");
  }
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (g[t].size() != p[t].size() || m[t].size() != p[t].size() || v[t].size() != p[t].size()) {
      throw Error(ErrorCode::shape, "optimizer state does not match parameters");
    }
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      const double gi = g[t][i];
      m[t][i] = b1 * m[t][i] + (1.0 - b1) * gi;
      v[t][i] = b2 * v[t][i] + (1.0 - b2) * gi * gi;
      const double m_hat = m[t][i] / correction1;
      const double v_hat = v[t][i] / correction2;
      p[t][i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

GradCheckResult grad_check(std::span<const TrainingSample> batch, const EncoderParams& params,
                           const EncoderConfig& config, const HyperParams& hyper,
                           const GradCheckOptions& options) {
  const auto base = combined_loss(batch, params, config, hyper, std::nullopt);
  EncoderParams analytic = backward(base.trace, base.d_embeddings, params, config);
  if (options.inject_fault && !analytic.conv.empty()) analytic.conv.front().weight *= 1.5;
  const std::uint64_t base_pattern =
      activation_pattern(base.trace) ^ loss_pattern(base.trace.output, hyper);

  EncoderParams probe = params;
  std::vector<std::pair<std::string, std::span<double>>> probe_tensors;
  std::vector<std::span<const double>> grad_tensors;
  for_each_trainable(probe, [&](std::string_view name, std::span<double> t) {
    probe_tensors.emplace_back(std::string(name), t);
  });
  for_each_trainable(analytic,
                     [&](std::string_view, std::span<const double> t) { grad_tensors.push_back(t); });

  auto evaluate = [&](double& loss) {
    const auto r = combined_loss(batch, probe, config, hyper, std::nullopt);
    loss = r.loss.total;
    return activation_pattern(r.trace) ^ loss_pattern(r.trace.output, hyper);
  };

  Rng rng(options.seed);
  GradCheckResult result;
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    auto& [name, tensor] = probe_tensors[t];
    TensorCheck tc{name, 0, 0, 0.0};
    const std::size_t want = std::min(options.coords_per_tensor, tensor.size());
    std::vector<std::size_t> candidates(tensor.size());
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(candidates));
    for (std::size_t c = 0; c < candidates.size() && tc.checked < want; ++c) {
      const std::size_t i = candidates[c];
      const double saved = tensor[i];
      double plus = 0.0;
      double minus = 0.0;
      tensor[i] = saved + options.epsilon;
      const auto pattern_plus = evaluate(plus);
      tensor[i] = saved - options.epsilon;
      const auto pattern_minus = evaluate(minus);
      tensor[i] = saved;
      if (pattern_plus != base_pattern || pattern_minus != base_pattern) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double exact = grad_tensors[t][i];
      const double scale = std::max(std::abs(numeric), std::abs(exact));
      ++tc.checked;
      if (scale < options.zero_floor) {
        ++tc.near_zero;
        continue;
      }
      tc.max_relative_error = std::max(tc.max_relative_error, std::abs(numeric - exact) / scale);
    }
    result.checked += tc.checked;
    result.near_zero += tc.near_zero;
    result.max_relative_error = std::max(result.max_relative_error, tc.max_relative_error);
    result.tensors.push_back(std::move(tc));
  }
  return result;
}

GradCheckResult grad_check_random(const GradCheckOptions& options, const EncoderConfig& config,
                                  const HyperParams& hyper) {
  Rng rng(derive_seed(options.seed, 11));
  const std::size_t charts = options.samples * 4;
  std::vector<ChartInput> inputs(charts);
  for (auto& in : inputs) {
    const std::size_t length =
        grammar::kMinDerivation + rng.below(grammar::kMaxDerivation - grammar::kMinDerivation + 1);
    grammar::RuleSequence seq;
    for (std::size_t r = 0; r < length; ++r) {
      seq.push_back(static_cast<std::uint8_t>(rng.below(grammar::kRuleCount)));
    }
    in.schema = grammar::encode_one_hot(seq);
    in.semantics.rows = semantic_rows(config.semantics);
    in.semantics.width = semantic_width(config.semantics);
    in.semantics.cells.assign(in.semantics.rows * in.semantics.width, 0.0);
    const std::size_t used = 1 + rng.below(in.semantics.rows);
    const std::size_t feat = in.semantics.width - kLocationCount;
    for (std::size_t r = 0; r < used; ++r) {
      double* row = in.semantics.cells.data() + r * in.semantics.width;
      for (std::size_t c = 0; c < feat; ++c) row[c] = 0.5 * rng.normal();
      row[feat + rng.below(kLocationCount)] = 1.0;
    }
  }
  std::vector<TrainingSample> batch(options.samples);
  for (std::size_t k = 0; k < options.samples; ++k) {
    batch[k] = {&inputs[4 * k], &inputs[4 * k + 1], &inputs[4 * k + 2], &inputs[4 * k + 3]};
  }
  const EncoderParams params = init_params(derive_seed(options.seed, 12), config);
  return grad_check(batch, params, config, hyper, options);
}

std::uint64_t planned_steps(std::size_t samples, std::uint32_t batch_size, std::uint32_t epochs) {
  if (batch_size == 0) throw Error(ErrorCode::invalid_argument, "batch size must be positive");
  const std::uint64_t per_epoch = (samples + batch_size - 1) / batch_size;
  return per_epoch * epochs;
}

TrainResult train(std::span<const TrainingSample> samples, const EncoderConfig& config,
                  const HyperParams& hyper, const EpochCallback& on_epoch) {
  validate(hyper);
  config.validate();
  if (samples.empty()) throw Error(ErrorCode::invalid_argument, "empty sample set");

  TrainResult result;
  result.params = init_params(derive_seed(hyper.seed, kInitStream), config);
  AdamState adam = adam_init(result.params);
  Rng shuffle_rng(derive_seed(hyper.seed, kShuffleStream));
  Rng dropout_rng(derive_seed(hyper.seed, kDropoutStream));
  const std::size_t param_bytes = trainable_count(result.params) * sizeof(double);
  std::size_t peak_trace = 0;

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TrainingSample> batch;
  batch.reserve(hyper.batch_size);

  for (std::uint32_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    EpochRecord record;
    record.epoch = epoch;
    for (std::size_t first = 0; first < order.size(); first += hyper.batch_size) {
      const std::size_t last = std::min(order.size(), first + hyper.batch_size);
      batch.clear();
      for (std::size_t i = first; i < last; ++i) batch.push_back(samples[order[i]]);
      BatchLoss step;
      try {
        step = combined_loss(batch, result.params, config, hyper, dropout_rng.next());
      } catch (const Error& e) {
        if (e.code() != ErrorCode::diverged) throw;
        throw Error(ErrorCode::diverged, "epoch " + std::to_string(epoch) + ", step " +
                                             std::to_string(result.steps + 1) + ": " + e.what());
      }
      const EncoderParams grads = backward(step.trace, step.d_embeddings, result.params, config);
      update_running_stats(result.params, step.trace, config);
      adam_step(result.params, grads, adam, hyper.learning_rate);
      ++result.steps;
      record.loss += step.loss;
      peak_trace = std::max(peak_trace, trace_bytes(step.trace));
    }
    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  if (!all_finite(result.params)) {
    throw Error(ErrorCode::diverged, "training produced non-finite parameters");
  }
  result.peak_bytes = 4 * param_bytes + peak_trace;
  return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::string out = "epoch,interp_term,pair_term,l1,l2,total,wall_ms\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.epoch,
                  r.loss.interp_term, r.loss.pair_term, r.loss.l1, r.loss.l2, r.loss.total,
                  r.wall_ms);
    out += buf;
  }
  return out;
}

}  // namespace chartvec
