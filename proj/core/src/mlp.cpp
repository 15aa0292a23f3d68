#include "bgr/mlp.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <variant>

namespace bgr {
namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ConstMap = Eigen::Map<const Mat<S>>;

}  // namespace

void MlpArchitecture::validate() const {
  if (input_dim == 0) throw std::runtime_error("dimension mismatch: input_dim must be positive");
  // hidden_dims may be empty: the heads then act directly on the input
  for (std::size_t h : hidden_dims)
    if (h == 0) throw std::runtime_error("dimension mismatch: zero hidden width");
  if (heads.empty()) throw std::runtime_error("unknown head: architecture has no heads");
  for (const auto& [task, classes] : heads)
    if (classes < 2) throw std::runtime_error("unknown head: head needs >= 2 classes");
}

std::size_t MlpArchitecture::head_classes(int task) const {
  auto it = heads.find(task);
  if (it == heads.end()) throw std::runtime_error("unknown head");
  return it->second;
}

bool ParamLayout::operator==(const ParamLayout& o) const {
  return input_dim == o.input_dim && hidden_dims == o.hidden_dims && heads == o.heads;
}

bool ParamLayout::matches(const MlpArchitecture& arch) const {
  return input_dim == arch.input_dim && hidden_dims == arch.hidden_dims &&
         heads == arch.heads;
}

std::vector<const ParamSegment*> ParamLayout::head_segments(int task) const {
  std::vector<const ParamSegment*> out;
  for (const auto& s : segments)
    if (s.head_task == task) out.push_back(&s);
  return out;
}

std::shared_ptr<const ParamLayout> make_layout(const MlpArchitecture& arch) {
  arch.validate();
  auto layout = std::make_shared<ParamLayout>();
  layout->input_dim = arch.input_dim;
  layout->hidden_dims = arch.hidden_dims;
  layout->heads = arch.heads;

  std::size_t offset = 0;
  auto push = [&](int layer, bool bias, int head, std::size_t r, std::size_t c) {
    ParamSegment seg;
    seg.layer = layer;
    seg.bias = bias;
    seg.head_task = head;
    seg.offset = offset;
    seg.length = r * c;
    seg.rows = r;
    seg.cols = c;
    offset += seg.length;
    layout->segments.push_back(seg);
  };

  std::size_t prev = arch.input_dim;
  int layer = 0;
  for (std::size_t width : arch.hidden_dims) {
    push(layer, false, -1, prev, width);
    push(layer, true, -1, 1, width);
    prev = width;
    ++layer;
  }
  for (const auto& [task, classes] : arch.heads) {
    push(layer, false, task, prev, classes);
    push(layer, true, task, 1, classes);
  }
  layout->total_size = offset;
  return layout;
}

ParamVector ParamVector::zeros(std::shared_ptr<const ParamLayout> layout) {
  ParamVector p;
  p.values.assign(layout->total_size, 0.0);
  p.layout = std::move(layout);
  return p;
}

void ParamVector::require_layout(const ParamVector& other) const {
  if (!layout || !other.layout || !(*layout == *other.layout))
    throw std::runtime_error("layout mismatch");
}

void add_scaled(ParamVector& dst, const ParamVector& src, double scale) {
  dst.require_layout(src);
  for (std::size_t i = 0; i < dst.values.size(); ++i)
    dst.values[i] += scale * src.values[i];
}

void zero_unmasked(ParamVector& v, const SegmentMask& mask) {
  const auto& segs = v.layout->segments;
  if (mask.size() != segs.size())
    throw std::runtime_error("dimension mismatch: segment mask");
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (mask[s]) continue;
    std::fill(v.values.begin() + static_cast<std::ptrdiff_t>(segs[s].offset),
              v.values.begin() + static_cast<std::ptrdiff_t>(segs[s].offset + segs[s].length),
              0.0);
  }
}

namespace {

struct SegRef {
  const ParamSegment* w = nullptr;
  const ParamSegment* b = nullptr;
};

// Resolves the per-layer weight/bias segments for one (arch, task) dispatch.
struct Plan {
  std::vector<SegRef> trunk;  // one per hidden layer
  SegRef head;
  std::size_t classes = 0;

  Plan(const ParamLayout& layout, const MlpArchitecture& arch, int task) {
    classes = arch.head_classes(task);
    trunk.resize(arch.hidden_dims.size());
    for (const auto& s : layout.segments) {
      if (s.head_task < 0) {
        auto& slot = trunk[static_cast<std::size_t>(s.layer)];
        (s.bias ? slot.b : slot.w) = &s;
      } else if (s.head_task == task) {
        (s.bias ? head.b : head.w) = &s;
      }
    }
  }
};

template <typename S>
struct Trace {
  std::vector<S> cast;          // cast of the full param vector when S != double
  const double* raw = nullptr;  // direct view when S == double
  std::vector<Mat<S>> acts;     // acts[0] = input, acts[i+1] = relu output of trunk layer i
  Mat<S> logits;

  const S* seg_ptr(const ParamSegment& s) const {
    if constexpr (std::is_same_v<S, double>)
      return raw + s.offset;
    else
      return cast.data() + s.offset;
  }
};

template <typename S>
Trace<S> run_forward(const ParamVector& params, const Plan& plan,
                     const MlpArchitecture& arch, const Tensor& x) {
  Trace<S> tr;
  if constexpr (std::is_same_v<S, double>) {
    tr.raw = params.values.data();
  } else {
    tr.cast.resize(params.values.size());
    for (std::size_t i = 0; i < tr.cast.size(); ++i)
      tr.cast[i] = static_cast<S>(params.values[i]);
  }

  const auto batch = static_cast<Eigen::Index>(x.rows());
  tr.acts.reserve(arch.hidden_dims.size() + 1);
  Mat<S> a0(batch, static_cast<Eigen::Index>(arch.input_dim));
  for (Eigen::Index i = 0; i < a0.size(); ++i)
    a0.data()[i] = static_cast<S>(x.data[static_cast<std::size_t>(i)]);
  tr.acts.push_back(std::move(a0));

  for (std::size_t l = 0; l < arch.hidden_dims.size(); ++l) {
    const SegRef& seg = plan.trunk[l];
    ConstMap<S> w(tr.seg_ptr(*seg.w), static_cast<Eigen::Index>(seg.w->rows),
                  static_cast<Eigen::Index>(seg.w->cols));
    Eigen::Map<const RowVec<S>> b(tr.seg_ptr(*seg.b),
                                  static_cast<Eigen::Index>(seg.b->cols));
    Mat<S> z = tr.acts.back() * w;
    z.rowwise() += b;
    tr.acts.push_back(z.cwiseMax(S(0)));
  }

  ConstMap<S> hw(tr.seg_ptr(*plan.head.w), static_cast<Eigen::Index>(plan.head.w->rows),
                 static_cast<Eigen::Index>(plan.head.w->cols));
  Eigen::Map<const RowVec<S>> hb(tr.seg_ptr(*plan.head.b),
                                 static_cast<Eigen::Index>(plan.head.b->cols));
  tr.logits = tr.acts.back() * hw;
  tr.logits.rowwise() += hb;
  return tr;
}

template <typename S>
void store_segment(ParamVector& out, const ParamSegment& seg, const Mat<S>& m) {
  double* dst = out.values.data() + seg.offset;
  for (Eigen::Index i = 0; i < m.size(); ++i) dst[static_cast<std::size_t>(i)] = static_cast<double>(m.data()[i]);
}

template <typename S>
ParamVector run_backward(const Trace<S>& tr, const Plan& plan,
                         const MlpArchitecture& arch, const ParamVector& params,
                         const Tensor& upstream) {
  const auto batch = static_cast<Eigen::Index>(upstream.rows());
  Mat<S> g(batch, static_cast<Eigen::Index>(upstream.cols()));
  for (Eigen::Index i = 0; i < g.size(); ++i)
    g.data()[i] = static_cast<S>(upstream.data[static_cast<std::size_t>(i)]);

  ParamVector grad = ParamVector::zeros(params.layout);

  // head
  {
    Mat<S> dw = tr.acts.back().transpose() * g;
    Mat<S> db = g.colwise().sum();
    store_segment(grad, *plan.head.w, dw);
    store_segment(grad, *plan.head.b, db);
    ConstMap<S> hw(tr.seg_ptr(*plan.head.w), static_cast<Eigen::Index>(plan.head.w->rows),
                   static_cast<Eigen::Index>(plan.head.w->cols));
    g = g * hw.transpose();
  }

  for (std::size_t li = arch.hidden_dims.size(); li-- > 0;) {
    const SegRef& seg = plan.trunk[li];
    // rectifier mask; subgradient at 0 is 0
    g = g.cwiseProduct((tr.acts[li + 1].array() > S(0)).template cast<S>().matrix());
    Mat<S> dw = tr.acts[li].transpose() * g;
    Mat<S> db = g.colwise().sum();
    store_segment(grad, *seg.w, dw);
    store_segment(grad, *seg.b, db);
    if (li > 0) {
      ConstMap<S> w(tr.seg_ptr(*seg.w), static_cast<Eigen::Index>(seg.w->rows),
                    static_cast<Eigen::Index>(seg.w->cols));
      g = g * w.transpose();
    }
  }
  return grad;
}

template <typename S>
Tensor run_input_grad(const Trace<S>& tr, const Plan& plan,
                      const MlpArchitecture& arch, const Tensor& y) {
  const auto batch = static_cast<Eigen::Index>(y.rows());
  Mat<S> g(batch, static_cast<Eigen::Index>(y.cols()));
  for (Eigen::Index i = 0; i < g.size(); ++i)
    g.data()[i] = static_cast<S>(y.data[static_cast<std::size_t>(i)]);

  ConstMap<S> hw(tr.seg_ptr(*plan.head.w), static_cast<Eigen::Index>(plan.head.w->rows),
                 static_cast<Eigen::Index>(plan.head.w->cols));
  g = g * hw.transpose();
  for (std::size_t li = arch.hidden_dims.size(); li-- > 0;) {
    const SegRef& seg = plan.trunk[li];
    g = g.cwiseProduct((tr.acts[li + 1].array() > S(0)).template cast<S>().matrix());
    ConstMap<S> w(tr.seg_ptr(*seg.w), static_cast<Eigen::Index>(seg.w->rows),
                  static_cast<Eigen::Index>(seg.w->cols));
    g = g * w.transpose();
  }

  Tensor out = Tensor::zeros({static_cast<std::size_t>(batch), arch.input_dim});
  for (Eigen::Index i = 0; i < g.size(); ++i)
    out.data[static_cast<std::size_t>(i)] = static_cast<double>(g.data()[i]);
  return out;
}

void check_inputs(const ParamVector& params, const MlpArchitecture& arch,
                  const Tensor& x, int task) {
  arch.validate();
  arch.head_classes(task);  // throws "unknown head"
  if (!params.layout || !params.layout->matches(arch))
    throw std::runtime_error("dimension mismatch: params do not match architecture");
  if (x.rank() != 2 || x.cols() != arch.input_dim)
    throw std::runtime_error("dimension mismatch: input width");
  x.require_finite("forward input");
}

Tensor logits_to_tensor(const Mat<double>& m) {
  Tensor t = Tensor::zeros({static_cast<std::size_t>(m.rows()),
                            static_cast<std::size_t>(m.cols())});
  std::memcpy(t.data.data(), m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  return t;
}

template <typename S>
Tensor logits_tensor(const Trace<S>& tr) {
  if constexpr (std::is_same_v<S, double>) {
    return logits_to_tensor(tr.logits);
  } else {
    Tensor t = Tensor::zeros({static_cast<std::size_t>(tr.logits.rows()),
                              static_cast<std::size_t>(tr.logits.cols())});
    for (Eigen::Index i = 0; i < tr.logits.size(); ++i)
      t.data[static_cast<std::size_t>(i)] = static_cast<double>(tr.logits.data()[i]);
    return t;
  }
}

}  // namespace

struct MlpBatch::Impl {
  MlpArchitecture arch;
  Plan plan;
  std::variant<Trace<double>, Trace<float>> trace;
  ParamVector params_copy;  // keeps the f64 view alive for backward calls
  Tensor logits;

  Impl(const ParamVector& params, const MlpArchitecture& a, const Tensor& x,
       int task, Precision prec)
      : arch(a), plan(*params.layout, a, task), params_copy(params) {
    if (prec == Precision::f64) {
      auto tr = run_forward<double>(params_copy, plan, arch, x);
      logits = logits_tensor(tr);
      trace = std::move(tr);
    } else {
      auto tr = run_forward<float>(params_copy, plan, arch, x);
      logits = logits_tensor(tr);
      trace = std::move(tr);
    }
    logits.require_finite("forward logits");
  }
};

MlpBatch::MlpBatch(const ParamVector& params, const MlpArchitecture& arch,
                   const Tensor& x, int task, Precision prec) {
  check_inputs(params, arch, x, task);
  impl_ = std::make_unique<Impl>(params, arch, x, task, prec);
}

MlpBatch::~MlpBatch() = default;
MlpBatch::MlpBatch(MlpBatch&&) noexcept = default;
MlpBatch& MlpBatch::operator=(MlpBatch&&) noexcept = default;

const Tensor& MlpBatch::logits() const { return impl_->logits; }

ParamVector MlpBatch::backward(const Tensor& upstream) const {
  if (upstream.rank() != 2 || upstream.rows() != impl_->logits.rows() ||
      upstream.cols() != impl_->logits.cols())
    throw std::runtime_error("dimension mismatch: upstream shape");
  return std::visit(
      [&](const auto& tr) {
        return run_backward(tr, impl_->plan, impl_->arch, impl_->params_copy, upstream);
      },
      impl_->trace);
}

Tensor MlpBatch::input_grad(const Tensor& y) const {
  if (y.rank() != 2 || y.rows() != impl_->logits.rows() ||
      y.cols() != impl_->logits.cols())
    throw std::runtime_error("dimension mismatch: label shape");
  if (!is_one_hot(y)) throw std::runtime_error("labels must be one-hot");
  return std::visit(
      [&](const auto& tr) { return run_input_grad(tr, impl_->plan, impl_->arch, y); },
      impl_->trace);
}

Tensor forward(const ParamVector& params, const MlpArchitecture& arch,
               const Tensor& x, int task, Precision prec) {
  return MlpBatch(params, arch, x, task, prec).logits();
}

ParamVector backward_params(const ParamVector& params, const MlpArchitecture& arch,
                            const Tensor& x, int task, const Tensor& upstream,
                            Precision prec) {
  return MlpBatch(params, arch, x, task, prec).backward(upstream);
}

Tensor grad_input(const ParamVector& params, const MlpArchitecture& arch,
                  const Tensor& x, int task, const Tensor& y, Precision prec) {
  return MlpBatch(params, arch, x, task, prec).input_grad(y);
}

}  // namespace bgr
