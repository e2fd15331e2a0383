#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qccnn/nn.hpp"
#include "qccnn/qconv.hpp"
#include "qccnn/qfilter.hpp"
#include "qccnn/rng.hpp"
#include "qccnn/tensor.hpp"

namespace qccnn::io {
class Writer;
class Reader;
}  // namespace qccnn::io

namespace qccnn::train {

enum class ArchKind { Classical2D, QCCNN2D, Classical3D, QCCNN3D };

struct ArchSpec {
  ArchKind kind = ArchKind::Classical2D;
  // QCCNN2D: any encoding/ansatz. QCCNN3D: angle encoding with strong layers.
  qfilter::Encoding encoding = qfilter::Encoding::higher_order();
  qfilter::Ansatz ansatz{qfilter::AnsatzKind::BasicEntangling, 1};
  int conv4_stride = 1;  // fourth 3D layer (classical or quantum)
};

std::string arch_kind_name(ArchKind kind);
ArchKind arch_kind_from_name(const std::string& name);
std::string encoding_name(const qfilter::Encoding& enc);
qfilter::Encoding encoding_from_name(const std::string& name, double threshold);
std::string ansatz_kind_name(qfilter::AnsatzKind kind);
qfilter::AnsatzKind ansatz_kind_from_name(const std::string& name);

enum class Mode { Train, Eval };

struct RunContext {
  Mode mode = Mode::Eval;
  RunRng* rng = nullptr;  // required in Train mode (dropout masks)
  int workers = 1;
  qconv::RangeStats* range_stats = nullptr;  // set to audit quantum outputs
};

// A view of one trainable vector plus its gradient, in a fixed model order.
struct ParamBlock {
  std::string name;
  std::vector<double>* values;
  std::vector<double>* grads;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual nn::Tensor forward(const nn::Tensor& x, RunContext& ctx) = 0;
  virtual nn::Tensor backward(const nn::Tensor& grad_out, RunContext& ctx,
                              bool need_input_grad) = 0;
  virtual void collect_params(const std::string& prefix, std::vector<ParamBlock>& out);
  virtual std::int64_t param_count() const { return 0; }
  virtual std::string describe() const = 0;
  // Named state beyond parameters (e.g. batchnorm running statistics).
  virtual void save_state(io::Writer& w) const;
  virtual void load_state(io::Reader& r);
};

struct LayerAudit {
  std::string description;
  std::int64_t params = 0;
};

class Model {
 public:
  nn::Tensor forward(const nn::Tensor& x, RunContext& ctx);
  // Returns the gradient w.r.t. the model input (layer 0 input grads are
  // skipped internally; the returned tensor is empty).
  void backward(const nn::Tensor& grad_logits, RunContext& ctx);

  std::vector<ParamBlock> param_blocks();
  std::int64_t total_params() const;
  std::vector<LayerAudit> audit() const;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::size_t n_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  std::vector<std::int64_t> item_shape;  // (C, spatial...)
  int n_classes = 0;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Constructs the requested architecture with seeded initialization.
// Classical weights are uniform +-sqrt(1/fan_in); quantum angles uniform
// [0, 2pi). Draw order: layers in order, each layer weights then bias.
//
// The 3D stacks keep the maximal subset of their three pooling layers that
// leaves every downstream layer shape-feasible (earlier pools preferred on
// ties); at common resolutions (>= 47 per axis) all three survive.
Model build_model(const ArchSpec& arch, std::span<const std::int64_t> item_shape, int n_classes,
                  RunRng& rng);

// Which 3D pools build_model would keep for this input; exposed for audits.
std::array<bool, 3> plan_3d_pools(std::span<const std::int64_t> item_shape, int conv4_stride);

}  // namespace qccnn::train
