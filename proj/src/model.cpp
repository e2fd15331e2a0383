#include "qccnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "qccnn/errors.hpp"
#include "qccnn/io.hpp"

namespace qccnn::train {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

void fill_uniform(std::vector<double>& v, RunRng& rng, double lo, double hi) {
  for (auto& x : v) x = uniform(rng, lo, hi);
}

std::string join_arrow(int a, int b) { return std::to_string(a) + "->" + std::to_string(b); }

}  // namespace

std::string arch_kind_name(ArchKind kind) {
  switch (kind) {
    case ArchKind::Classical2D: return "classical2d";
    case ArchKind::QCCNN2D: return "qccnn2d";
    case ArchKind::Classical3D: return "classical3d";
    case ArchKind::QCCNN3D: return "qccnn3d";
  }
  return "?";
}

ArchKind arch_kind_from_name(const std::string& name) {
  if (name == "classical2d") return ArchKind::Classical2D;
  if (name == "qccnn2d") return ArchKind::QCCNN2D;
  if (name == "classical3d") return ArchKind::Classical3D;
  if (name == "qccnn3d") return ArchKind::QCCNN3D;
  throw ConfigError("unknown architecture '" + name +
                    "' (expected classical2d|qccnn2d|classical3d|qccnn3d)");
}

std::string encoding_name(const qfilter::Encoding& enc) {
  switch (enc.kind) {
    case qfilter::EncodingKind::Threshold: return "threshold";
    case qfilter::EncodingKind::Angle: return "angle";
    case qfilter::EncodingKind::HigherOrder: return "higher-order";
  }
  return "?";
}

qfilter::Encoding encoding_from_name(const std::string& name, double threshold) {
  if (name == "threshold") return qfilter::Encoding::threshold_at(threshold);
  if (name == "angle") return qfilter::Encoding::angle();
  if (name == "higher-order") return qfilter::Encoding::higher_order();
  throw ConfigError("unknown encoding '" + name + "' (expected threshold|angle|higher-order)");
}

std::string ansatz_kind_name(qfilter::AnsatzKind kind) {
  return kind == qfilter::AnsatzKind::BasicEntangling ? "basic" : "strong";
}

qfilter::AnsatzKind ansatz_kind_from_name(const std::string& name) {
  if (name == "basic") return qfilter::AnsatzKind::BasicEntangling;
  if (name == "strong") return qfilter::AnsatzKind::StronglyEntangling;
  throw ConfigError("unknown ansatz '" + name + "' (expected basic|strong)");
}

void Layer::collect_params(const std::string&, std::vector<ParamBlock>&) {}
void Layer::save_state(io::Writer&) const {}
void Layer::load_state(io::Reader&) {}

// ------------------------------------------------------------------- layers

namespace {

class ConvLayer final : public Layer {
 public:
  ConvLayer(const nn::ConvSpec& spec, RunRng& rng) : spec_(spec) {
    weights_.assign(static_cast<std::size_t>(nn::shape_numel(nn::conv_weight_shape(spec_))), 0.0);
    bias_.assign(static_cast<std::size_t>(spec_.out_channels), 0.0);
    std::int64_t k = spec_.kernel;
    for (int i = 1; i < spec_.dims; ++i) k *= spec_.kernel;
    const double bound = std::sqrt(1.0 / static_cast<double>(k * spec_.in_channels / spec_.groups));
    fill_uniform(weights_, rng, -bound, bound);
    fill_uniform(bias_, rng, -bound, bound);
    grad_weights_.assign(weights_.size(), 0.0);
    grad_bias_.assign(bias_.size(), 0.0);
  }

  nn::Tensor forward(const nn::Tensor& x, RunContext& ctx) override {
    input_ = x;
    return nn::conv_forward(spec_, weight_tensor(), bias_, x, ctx.workers);
  }

  nn::Tensor backward(const nn::Tensor& grad_out, RunContext& ctx, bool need_input_grad) override {
    auto grads = nn::conv_backward(spec_, weight_tensor(), input_, grad_out, ctx.workers,
                                   need_input_grad);
    auto gw = grads.weights.values();
    std::copy(gw.begin(), gw.end(), grad_weights_.begin());
    grad_bias_ = std::move(grads.bias);
    return need_input_grad ? std::move(grads.input) : nn::Tensor{};
  }

  void collect_params(const std::string& prefix, std::vector<ParamBlock>& out) override {
    out.push_back({prefix + ".weight", &weights_, &grad_weights_});
    out.push_back({prefix + ".bias", &bias_, &grad_bias_});
  }

  std::int64_t param_count() const override { return nn::conv_param_count(spec_); }

  std::string describe() const override {
    std::string s = "conv" + std::to_string(spec_.dims) + "d(k=" + std::to_string(spec_.kernel) +
                    ", s=" + std::to_string(spec_.stride);
    if (spec_.groups != 1) s += ", g=" + std::to_string(spec_.groups);
    return s + ", " + join_arrow(spec_.in_channels, spec_.out_channels) + ")";
  }

 private:
  nn::Tensor weight_tensor() const {
    return nn::Tensor(nn::conv_weight_shape(spec_), weights_);
  }

  nn::ConvSpec spec_;
  std::vector<double> weights_, bias_, grad_weights_, grad_bias_;
  nn::Tensor input_;
};

class QuantumConvLayer final : public Layer {
 public:
  QuantumConvLayer(const qconv::QuantumConvSpec& spec, RunRng& rng) : spec_(spec) {
    params_.assign(static_cast<std::size_t>(qconv::param_count(spec_)), 0.0);
    fill_uniform(params_, rng, 0.0, kTwoPi);
    grads_.assign(params_.size(), 0.0);
  }

  nn::Tensor forward(const nn::Tensor& x, RunContext& ctx) override {
    input_ = x;
    return qconv::forward(spec_, params_, x, ctx.workers, ctx.range_stats);
  }

  nn::Tensor backward(const nn::Tensor& grad_out, RunContext& ctx, bool need_input_grad) override {
    auto grads = qconv::backward(spec_, params_, input_, grad_out, ctx.workers, need_input_grad);
    grads_ = std::move(grads.params);
    return need_input_grad ? std::move(grads.input) : nn::Tensor{};
  }

  void collect_params(const std::string& prefix, std::vector<ParamBlock>& out) override {
    out.push_back({prefix + ".angles", &params_, &grads_});
  }

  std::int64_t param_count() const override { return qconv::param_count(spec_); }

  std::string describe() const override {
    const auto& f = spec_.filter;
    return "quantum_conv" + std::to_string(spec_.dims) + "d(k=" + std::to_string(spec_.kernel) +
           ", s=" + std::to_string(spec_.stride) + ", " + encoding_name(f.encoding) + ", " +
           ansatz_kind_name(f.ansatz.kind) + "x" + std::to_string(f.ansatz.n_layers) + ", " +
           join_arrow(spec_.in_channels, spec_.in_channels * f.n_qubits) + ")";
  }

 private:
  qconv::QuantumConvSpec spec_;
  std::vector<double> params_, grads_;
  nn::Tensor input_;
};

class BatchNormLayer final : public Layer {
 public:
  explicit BatchNormLayer(int channels) : channels_(channels) {
    scale_.assign(static_cast<std::size_t>(channels), 1.0);
    offset_.assign(static_cast<std::size_t>(channels), 0.0);
    grad_scale_.assign(scale_.size(), 0.0);
    grad_offset_.assign(offset_.size(), 0.0);
  }

  nn::Tensor forward(const nn::Tensor& x, RunContext& ctx) override {
    return nn::batchnorm_forward(x, scale_, offset_, running_, ctx.mode == Mode::Train, &cache_);
  }

  nn::Tensor backward(const nn::Tensor& grad_out, RunContext&, bool need_input_grad) override {
    auto grads = nn::batchnorm_backward(cache_, scale_, grad_out);
    grad_scale_ = std::move(grads.scale);
    grad_offset_ = std::move(grads.offset);
    return need_input_grad ? std::move(grads.input) : nn::Tensor{};
  }

  void collect_params(const std::string& prefix, std::vector<ParamBlock>& out) override {
    out.push_back({prefix + ".scale", &scale_, &grad_scale_});
    out.push_back({prefix + ".offset", &offset_, &grad_offset_});
  }

  std::int64_t param_count() const override { return 2 * channels_; }

  std::string describe() const override { return "batchnorm(" + std::to_string(channels_) + ")"; }

  void save_state(io::Writer& w) const override;
  void load_state(io::Reader& r) override;

 private:
  int channels_;
  std::vector<double> scale_, offset_, grad_scale_, grad_offset_;
  nn::BatchNormRunning running_;
  nn::BatchNormCache cache_;
};

void BatchNormLayer::save_state(io::Writer& w) const {
  w.u64(static_cast<std::uint64_t>(running_.batches_seen));
  w.u64(running_.mean.size());
  for (double v : running_.mean) w.f64(v);
  w.u64(running_.var.size());
  for (double v : running_.var) w.f64(v);
}

void BatchNormLayer::load_state(io::Reader& r) {
  running_.batches_seen = static_cast<std::int64_t>(r.u64());
  const std::uint64_t nm = r.u64();
  running_.mean.resize(static_cast<std::size_t>(nm));
  for (auto& v : running_.mean) v = r.f64();
  const std::uint64_t nv = r.u64();
  running_.var.resize(static_cast<std::size_t>(nv));
  for (auto& v : running_.var) v = r.f64();
  if (!running_.mean.empty() && static_cast<int>(running_.mean.size()) != channels_) {
    throw FormatError("batchnorm state length mismatch");
  }
}

class ReluLayer final : public Layer {
 public:
  nn::Tensor forward(const nn::Tensor& x, RunContext&) override {
    input_ = x;
    return nn::relu_forward(x);
  }
  nn::Tensor backward(const nn::Tensor& grad_out, RunContext&, bool need_input_grad) override {
    return need_input_grad ? nn::relu_backward(input_, grad_out) : nn::Tensor{};
  }
  std::string describe() const override { return "relu"; }

 private:
  nn::Tensor input_;
};

class MaxPoolLayer final : public Layer {
 public:
  MaxPoolLayer(int dims, int kernel, int stride) : dims_(dims), kernel_(kernel), stride_(stride) {}

  nn::Tensor forward(const nn::Tensor& x, RunContext&) override {
    input_shape_ = x.shape();
    cache_ = nn::maxpool_forward(x, dims_, kernel_, stride_);
    return cache_.output;
  }
  nn::Tensor backward(const nn::Tensor& grad_out, RunContext&, bool need_input_grad) override {
    return need_input_grad ? nn::maxpool_backward(cache_, input_shape_, grad_out) : nn::Tensor{};
  }
  std::string describe() const override {
    return "maxpool" + std::to_string(dims_) + "d(k=" + std::to_string(kernel_) +
           ", s=" + std::to_string(stride_) + ")";
  }

 private:
  int dims_, kernel_, stride_;
  std::vector<std::int64_t> input_shape_;
  nn::MaxPoolResult cache_;
};

class DropoutLayer final : public Layer {
 public:
  explicit DropoutLayer(double rate) : rate_(rate) {}

  nn::Tensor forward(const nn::Tensor& x, RunContext& ctx) override {
    const bool training = ctx.mode == Mode::Train;
    if (training && !ctx.rng) throw UsageError("dropout needs a generator in training mode");
    static RunRng unused(0);
    return nn::dropout_forward(x, rate_, training, training ? *ctx.rng : unused, &cache_);
  }
  nn::Tensor backward(const nn::Tensor& grad_out, RunContext&, bool need_input_grad) override {
    return need_input_grad ? nn::dropout_backward(cache_, grad_out) : nn::Tensor{};
  }
  std::string describe() const override {
    char buf[32];
    std::snprintf(buf, sizeof buf, "dropout(%.2g)", rate_);
    return buf;
  }

 private:
  double rate_;
  nn::DropoutCache cache_;
};

class FlattenLayer final : public Layer {
 public:
  nn::Tensor forward(const nn::Tensor& x, RunContext&) override {
    input_shape_ = x.shape();
    return x.reshaped({x.dim(0), x.numel() / x.dim(0)});
  }
  nn::Tensor backward(const nn::Tensor& grad_out, RunContext&, bool need_input_grad) override {
    return need_input_grad ? grad_out.reshaped(std::vector<std::int64_t>(input_shape_))
                           : nn::Tensor{};
  }
  std::string describe() const override { return "flatten"; }

 private:
  std::vector<std::int64_t> input_shape_;
};

class LinearLayer final : public Layer {
 public:
  LinearLayer(std::int64_t in, std::int64_t out, RunRng& rng) : in_(in), out_(out) {
    weights_.assign(static_cast<std::size_t>(in * out), 0.0);
    bias_.assign(static_cast<std::size_t>(out), 0.0);
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    fill_uniform(weights_, rng, -bound, bound);
    fill_uniform(bias_, rng, -bound, bound);
    grad_weights_.assign(weights_.size(), 0.0);
    grad_bias_.assign(bias_.size(), 0.0);
  }

  nn::Tensor forward(const nn::Tensor& x, RunContext& ctx) override {
    input_ = x;
    return nn::linear_forward(nn::Tensor({out_, in_}, weights_), bias_, x, ctx.workers);
  }

  nn::Tensor backward(const nn::Tensor& grad_out, RunContext& ctx, bool need_input_grad) override {
    auto grads = nn::linear_backward(nn::Tensor({out_, in_}, weights_), input_, grad_out,
                                     ctx.workers, need_input_grad);
    auto gw = grads.weights.values();
    std::copy(gw.begin(), gw.end(), grad_weights_.begin());
    grad_bias_ = std::move(grads.bias);
    return need_input_grad ? std::move(grads.input) : nn::Tensor{};
  }

  void collect_params(const std::string& prefix, std::vector<ParamBlock>& out) override {
    out.push_back({prefix + ".weight", &weights_, &grad_weights_});
    out.push_back({prefix + ".bias", &bias_, &grad_bias_});
  }

  std::int64_t param_count() const override { return nn::linear_param_count(in_, out_); }

  std::string describe() const override {
    return "linear(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
  }

 private:
  std::int64_t in_, out_;
  std::vector<double> weights_, bias_, grad_weights_, grad_bias_;
  nn::Tensor input_;
};

}  // namespace

// -------------------------------------------------------------------- model

nn::Tensor Model::forward(const nn::Tensor& x, RunContext& ctx) {
  nn::Tensor cur = x;
  for (auto& layer : layers_) cur = layer->forward(cur, ctx);
  return cur;
}

void Model::backward(const nn::Tensor& grad_logits, RunContext& ctx) {
  nn::Tensor grad = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    grad = layers_[i]->backward(grad, ctx, i > 0);
  }
}

std::vector<ParamBlock> Model::param_blocks() {
  std::vector<ParamBlock> blocks;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->collect_params("layer" + std::to_string(i), blocks);
  }
  return blocks;
}

std::int64_t Model::total_params() const {
  std::int64_t n = 0;
  for (const auto& layer : layers_) n += layer->param_count();
  return n;
}

std::vector<LayerAudit> Model::audit() const {
  std::vector<LayerAudit> rows;
  for (const auto& layer : layers_) rows.push_back({layer->describe(), layer->param_count()});
  return rows;
}

// -------------------------------------------------------------- architecture

namespace {

struct Shape3 {
  std::int64_t d, h, w;
  bool valid(std::int64_t k) const { return d >= k && h >= k && w >= k; }
  Shape3 after(std::int64_t k, std::int64_t s) const {
    return {(d - k) / s + 1, (h - k) / s + 1, (w - k) / s + 1};
  }
};

// Simulates the four-layer 3D stack with a given pool keep-mask.
// Returns the flattened feature count, or -1 if any layer is infeasible.
std::int64_t simulate_3d(Shape3 in, const std::array<bool, 3>& pools, int conv4_stride) {
  struct Step {
    std::int64_t k, s;
  };
  const Step convs[4] = {{5, 2}, {2, 1}, {2, 1}, {2, conv4_stride}};
  Shape3 cur = in;
  for (int i = 0; i < 4; ++i) {
    if (!cur.valid(convs[i].k)) return -1;
    cur = cur.after(convs[i].k, convs[i].s);
    if (i < 3 && pools[static_cast<std::size_t>(i)]) {
      if (!cur.valid(2)) return -1;
      cur = cur.after(2, 2);
    }
  }
  return 64 * cur.d * cur.h * cur.w;
}

}  // namespace

std::array<bool, 3> plan_3d_pools(std::span<const std::int64_t> item_shape, int conv4_stride) {
  if (item_shape.size() != 4) {
    throw ConfigError("3D architectures need a (C, D, H, W) item shape, got " +
                      nn::shape_str(item_shape));
  }
  const Shape3 in{item_shape[1], item_shape[2], item_shape[3]};
  int best_mask = -1, best_count = -1;
  for (int mask = 0; mask < 8; ++mask) {
    const std::array<bool, 3> pools{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
    if (simulate_3d(in, pools, conv4_stride) < 0) continue;
    const int count = (mask & 1) + ((mask >> 1) & 1) + ((mask >> 2) & 1);
    // Prefer more pools; on ties prefer keeping earlier pools.
    const int pref = ((mask & 1) << 2) | (mask & 2) | ((mask >> 2) & 1);
    const int best_pref =
        best_mask < 0 ? -1 : (((best_mask & 1) << 2) | (best_mask & 2) | ((best_mask >> 2) & 1));
    if (count > best_count || (count == best_count && pref > best_pref)) {
      best_count = count;
      best_mask = mask;
    }
  }
  if (best_mask < 0) {
    throw ConfigError("input " + nn::shape_str(item_shape) +
                      " is too small for the 3D stack (first conv needs 5 per axis)");
  }
  return {(best_mask & 1) != 0, (best_mask & 2) != 0, (best_mask & 4) != 0};
}

Model build_model(const ArchSpec& arch, std::span<const std::int64_t> item_shape, int n_classes,
                  RunRng& rng) {
  if (n_classes < 2) throw ConfigError("need at least 2 classes");
  Model model;
  model.item_shape.assign(item_shape.begin(), item_shape.end());
  model.n_classes = n_classes;

  const bool is2d = arch.kind == ArchKind::Classical2D || arch.kind == ArchKind::QCCNN2D;
  if (is2d) {
    if (item_shape.size() != 3) {
      throw ConfigError("2D architectures need a (C, H, W) item shape, got " +
                        nn::shape_str(item_shape));
    }
    const int c = static_cast<int>(item_shape[0]);
    const std::int64_t h = item_shape[1], w = item_shape[2];
    if (h < 2 || w < 2) {
      throw ConfigError("layer conv2d(k=2, s=2) infeasible for input " + nn::shape_str(item_shape));
    }
    const std::int64_t oh = (h - 2) / 2 + 1, ow = (w - 2) / 2 + 1;
    const std::int64_t features = 4ll * c * oh * ow;
    if (arch.kind == ArchKind::Classical2D) {
      nn::ConvSpec conv{2, c, 4 * c, 2, 2, 1};
      model.add(std::make_unique<ConvLayer>(conv, rng));
    } else {
      qconv::QuantumConvSpec q;
      q.dims = 2;
      q.kernel = 2;
      q.stride = 2;
      q.in_channels = c;
      q.filter = {4, arch.encoding, arch.ansatz};
      model.add(std::make_unique<QuantumConvLayer>(q, rng));
    }
    model.add(std::make_unique<FlattenLayer>());
    model.add(std::make_unique<LinearLayer>(features, n_classes, rng));
    return model;
  }

  // 3D stacks.
  const auto pools = plan_3d_pools(item_shape, arch.conv4_stride);
  const int c = static_cast<int>(item_shape[0]);
  Shape3 cur{item_shape[1], item_shape[2], item_shape[3]};
  const int chans[4] = {2, 4, 8, 64};

  int in_ch = c;
  for (int i = 0; i < 3; ++i) {
    const std::int64_t k = i == 0 ? 5 : 2;
    const std::int64_t s = i == 0 ? 2 : 1;
    if (!cur.valid(k)) {
      throw ConfigError("layer conv3d #" + std::to_string(i + 1) + " infeasible");
    }
    nn::ConvSpec conv{3, in_ch, chans[i], static_cast<int>(k), static_cast<int>(s), 1};
    model.add(std::make_unique<ConvLayer>(conv, rng));
    cur = cur.after(k, s);
    model.add(std::make_unique<BatchNormLayer>(chans[i]));
    model.add(std::make_unique<ReluLayer>());
    if (pools[static_cast<std::size_t>(i)]) {
      model.add(std::make_unique<MaxPoolLayer>(3, 2, 2));
      cur = cur.after(2, 2);
    }
    model.add(std::make_unique<DropoutLayer>(0.2));
    in_ch = chans[i];
  }

  if (!cur.valid(2)) throw ConfigError("layer 4 (k=2) infeasible");
  if (arch.kind == ArchKind::Classical3D) {
    nn::ConvSpec conv{3, 8, 64, 2, arch.conv4_stride, 8};
    model.add(std::make_unique<ConvLayer>(conv, rng));
  } else {
    qconv::QuantumConvSpec q;
    q.dims = 3;
    q.kernel = 2;
    q.stride = arch.conv4_stride;
    q.in_channels = 8;
    q.filter = {8, arch.encoding, arch.ansatz};
    model.add(std::make_unique<QuantumConvLayer>(q, rng));
  }
  cur = cur.after(2, arch.conv4_stride);
  model.add(std::make_unique<BatchNormLayer>(64));
  model.add(std::make_unique<DropoutLayer>(0.5));
  model.add(std::make_unique<FlattenLayer>());
  model.add(std::make_unique<LinearLayer>(64 * cur.d * cur.h * cur.w, n_classes, rng));
  return model;
}

}  // namespace qccnn::train
