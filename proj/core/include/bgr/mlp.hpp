#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "bgr/tensor.hpp"

namespace bgr {

enum class Precision { f64, f32 };

// Multi-head MLP: rectified hidden layers shared across tasks (the trunk)
// plus one linear output layer per task (the heads). Single-head streams are
// the special case of one head used by every task.
struct MlpArchitecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::map<int, std::size_t> heads;  // task id -> class count

  void validate() const;
  std::size_t head_classes(int task) const;  // throws "unknown head"
};

// One contiguous slice of the flat parameter vector: a weight matrix or a
// bias of one layer. head_task < 0 marks trunk segments.
struct ParamSegment {
  int layer = 0;
  bool bias = false;
  int head_task = -1;
  std::size_t offset = 0;
  std::size_t length = 0;
  std::size_t rows = 0;  // fan-in for weights, 1 for biases
  std::size_t cols = 0;
};

struct ParamLayout {
  std::vector<ParamSegment> segments;
  std::size_t total_size = 0;
  // architecture signature, used for cheap compatibility checks
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::map<int, std::size_t> heads;

  bool operator==(const ParamLayout& o) const;
  bool matches(const MlpArchitecture& arch) const;
  std::vector<const ParamSegment*> head_segments(int task) const;
};

std::shared_ptr<const ParamLayout> make_layout(const MlpArchitecture& arch);

// Flat parameter vector with its layout descriptor.
struct ParamVector {
  std::vector<double> values;
  std::shared_ptr<const ParamLayout> layout;

  static ParamVector zeros(std::shared_ptr<const ParamLayout> layout);
  std::size_t size() const { return values.size(); }
  void require_layout(const ParamVector& other) const;
};

// Per-segment flags (true = segment participates); sized like layout.segments.
using SegmentMask = std::vector<bool>;

// dst += scale * src (layouts must match)
void add_scaled(ParamVector& dst, const ParamVector& src, double scale);

// zeroes every segment whose mask flag is false
void zero_unmasked(ParamVector& v, const SegmentMask& mask);

// Logits of the selected head for a batch of inputs. Pure; rectifier
// subgradient at 0 is 0, the output layer is linear.
Tensor forward(const ParamVector& params, const MlpArchitecture& arch,
               const Tensor& x, int task, Precision prec = Precision::f64);

// Gradient of sum(upstream . logits) with respect to every parameter.
// Heads other than `task` receive exactly zero. Batch contributions are
// plain sums; callers own any 1/N scaling.
ParamVector backward_params(const ParamVector& params, const MlpArchitecture& arch,
                            const Tensor& x, int task, const Tensor& upstream,
                            Precision prec = Precision::f64);

// Gradient of y^T f(x) with respect to the input, per batch row. y one-hot.
Tensor grad_input(const ParamVector& params, const MlpArchitecture& arch,
                  const Tensor& x, int task, const Tensor& y,
                  Precision prec = Precision::f64);

// One forward pass with cached activations, so the training loop can run
// several backward passes (different upstreams) without re-running forward.
class MlpBatch {
 public:
  MlpBatch(const ParamVector& params, const MlpArchitecture& arch,
           const Tensor& x, int task, Precision prec = Precision::f64);
  ~MlpBatch();
  MlpBatch(MlpBatch&&) noexcept;
  MlpBatch& operator=(MlpBatch&&) noexcept;

  const Tensor& logits() const;
  ParamVector backward(const Tensor& upstream) const;
  Tensor input_grad(const Tensor& y) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bgr
