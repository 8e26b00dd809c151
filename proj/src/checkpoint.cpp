#include <bit>
#include <cstring>
#include <fstream>

#include "chartvec/encoder.hpp"
#include "chartvec/error.hpp"

namespace chartvec {

namespace {

constexpr char kMagic[4] = {'C', '2', 'V', '1'};

enum ConfigFlags : std::uint32_t {
  kPositions = 1u << 0,
  kSchema = 1u << 1,
  kSemantics = 1u << 2,
  kDense = 1u << 3,
  kHiddenNorm = 1u << 4,
};

enum LossFlags : std::uint32_t {
  kInterpolation = 1u << 0,
  kTriplet = 1u << 1,
};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void put(T v) {
    v = to_little(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void u32(std::size_t v) { put(static_cast<std::uint32_t>(v)); }

  // Row-major, matching the documented payload order.
  void matrix(const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put(m(r, c));
    }
  }
  void vector(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put(v(i));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
      throw Error(ErrorCode::shape, name_ + ": truncated checkpoint");
    }
    return to_little(v);
  }
  std::size_t u32() { return get<std::uint32_t>(); }

  void matrix(Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>();
    }
  }
  void vector(Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = get<double>();
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  std::string name_;
};

// Every payload scalar, trainable or not, in file order.
std::size_t payload_count(const EncoderParams& p) {
  std::size_t n = 0;
  for (const auto& l : p.conv) {
    n += static_cast<std::size_t>(l.weight.size() + 4 * l.gamma.size());
  }
  n += static_cast<std::size_t>(p.fc1.weight.size() + p.fc1.bias.size() +
                                4 * p.fc1_norm.gamma.size() + p.fc2.weight.size() +
                                p.fc2.bias.size());
  return n;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     const EncoderConfig& config, const HyperParams& hyper) {
  config.validate();
  check_shapes(params, config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write checkpoint " + path.string());
  Writer w(out);
  out.write(kMagic, sizeof(kMagic));

  w.u32(config.conv_channels.size());
  for (auto c : config.conv_channels) w.u32(c);
  w.u32(config.kernel);
  w.u32(config.sequence_length);
  w.u32(static_cast<std::size_t>(config.semantics.pooling));
  w.u32(config.semantics.slots);
  std::uint32_t flags = 0;
  if (config.semantics.use_positions) flags |= kPositions;
  if (config.use_schema) flags |= kSchema;
  if (config.use_semantics) flags |= kSemantics;
  if (config.use_fc) flags |= kDense;
  if (config.hidden_batch_norm) flags |= kHiddenNorm;
  w.put(flags);
  w.u32(config.hidden_dim);
  w.u32(config.output_dim);
  w.put(config.dropout);
  w.put(config.bn_momentum);
  w.put(config.bn_epsilon);

  w.put(hyper.alpha);
  w.put(hyper.beta);
  w.put(hyper.margin);
  w.put(hyper.learning_rate);
  w.put(hyper.batch_size);
  w.put(hyper.epochs);
  w.put(hyper.seed);
  std::uint32_t loss_flags = 0;
  if (hyper.use_interpolation) loss_flags |= kInterpolation;
  if (hyper.use_triplet) loss_flags |= kTriplet;
  w.put(loss_flags);
  w.put(hyper.negatives_per_window);
  w.u32(static_cast<std::size_t>(hyper.negative_policy));

  w.put(static_cast<std::uint64_t>(payload_count(params)));
  for (const auto& l : params.conv) {
    w.matrix(l.weight);
    w.vector(l.gamma);
    w.vector(l.beta);
    w.vector(l.running_mean);
    w.vector(l.running_var);
  }
  if (config.use_fc) {
    w.matrix(params.fc1.weight);
    w.vector(params.fc1.bias);
    w.vector(params.fc1_norm.gamma);
    w.vector(params.fc1_norm.beta);
    w.vector(params.fc1_norm.running_mean);
    w.vector(params.fc1_norm.running_var);
    w.matrix(params.fc2.weight);
    w.vector(params.fc2.bias);
  }
  out.flush();
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open checkpoint " + path.string());
  char magic[4] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorCode::version, path.string() + ": not a C2V1 checkpoint");
  }
  Reader r(in, path.string());
  Checkpoint ck;
  auto& config = ck.config;
  const std::size_t layers = r.u32();
  if (layers < 2 || layers > 64) throw Error(ErrorCode::shape, "implausible conv layer count");
  config.conv_channels.clear();
  for (std::size_t i = 0; i < layers; ++i) config.conv_channels.push_back(r.u32());
  config.kernel = r.u32();
  config.sequence_length = r.u32();
  const std::size_t pooling = r.u32();
  if (pooling > static_cast<std::size_t>(Pooling::words_max)) {
    throw Error(ErrorCode::shape, "unknown pooling mode in checkpoint");
  }
  config.semantics.pooling = static_cast<Pooling>(pooling);
  config.semantics.slots = r.u32();
  const auto flags = r.get<std::uint32_t>();
  config.semantics.use_positions = (flags & kPositions) != 0;
  config.use_schema = (flags & kSchema) != 0;
  config.use_semantics = (flags & kSemantics) != 0;
  config.use_fc = (flags & kDense) != 0;
  config.hidden_batch_norm = (flags & kHiddenNorm) != 0;
  config.hidden_dim = r.u32();
  config.output_dim = r.u32();
  config.dropout = r.get<double>();
  config.bn_momentum = r.get<double>();
  config.bn_epsilon = r.get<double>();
  try {
    config.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::shape, path.string() + ": " + e.what());
  }

  auto& h = ck.hyper;
  h.alpha = r.get<double>();
  h.beta = r.get<double>();
  h.margin = r.get<double>();
  h.learning_rate = r.get<double>();
  h.batch_size = r.get<std::uint32_t>();
  h.epochs = r.get<std::uint32_t>();
  h.seed = r.get<std::uint64_t>();
  const auto loss_flags = r.get<std::uint32_t>();
  h.use_interpolation = (loss_flags & kInterpolation) != 0;
  h.use_triplet = (loss_flags & kTriplet) != 0;
  h.negatives_per_window = r.get<std::uint32_t>();
  h.negative_policy = r.u32() == 0 ? NegativePolicy::same_dataset_first : NegativePolicy::any;

  // Shapes come from the config; the stored count must agree with them.
  ck.params = init_params(0, config);
  const auto count = r.get<std::uint64_t>();
  if (count != payload_count(ck.params)) {
    throw Error(ErrorCode::shape, path.string() + ": parameter count " + std::to_string(count) +
                                      " does not match the embedded config (" +
                                      std::to_string(payload_count(ck.params)) + ")");
  }
  for (auto& l : ck.params.conv) {
    r.matrix(l.weight);
    r.vector(l.gamma);
    r.vector(l.beta);
    r.vector(l.running_mean);
    r.vector(l.running_var);
  }
  if (config.use_fc) {
    r.matrix(ck.params.fc1.weight);
    r.vector(ck.params.fc1.bias);
    r.vector(ck.params.fc1_norm.gamma);
    r.vector(ck.params.fc1_norm.beta);
    r.vector(ck.params.fc1_norm.running_mean);
    r.vector(ck.params.fc1_norm.running_var);
    r.matrix(ck.params.fc2.weight);
    r.vector(ck.params.fc2.bias);
  }
  if (!r.at_end()) throw Error(ErrorCode::shape, path.string() + ": trailing bytes");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.config == expected)) {
    throw Error(ErrorCode::shape,
                path.string() + ": checkpoint config does not match the expected encoder");
  }
  return ck;
}

}  // namespace chartvec
