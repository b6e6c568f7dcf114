#include "meshflow/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "meshflow/error.hpp"
#include "meshflow/tensor.hpp"

namespace meshflow {

namespace {

constexpr std::size_t kChunk = 128;
constexpr std::size_t kLanes = 8;

template <typename T>
std::vector<T> cast(const std::vector<double>& v) {
  return {v.begin(), v.end()};
}

template <typename T>
std::vector<T> flatten(const PointCloud& cloud) {
  std::vector<T> out(cloud.size() * 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) out[3 * i + k] = static_cast<T>(cloud.points[i][k]);
  }
  return out;
}

// out[j] = sum_p a[p] * m[p, j] accumulated in p order, for a (1 x P) and m (P x H).
std::vector<double> row_times(std::span<const double> a, const Tensor& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t p = 0; p < m.rows(); ++p) {
    const double ap = a[p];
    const double* row = m.data() + p * m.cols();
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] = kernels::madd(ap, row[j], out[j]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
EncoderEngine<T>::EncoderEngine(const Encoder& encoder, double bn_eps) {
  for (std::size_t i = 0; i < encoder.convs().size(); ++i) {
    const LinearLayer& conv = encoder.convs()[i];
    const BatchNormLayer& bn = encoder.norms()[i];
    Layer l;
    l.in = conv.in_dim();
    l.out = conv.out_dim();
    l.w.resize(l.in * l.out);
    l.b.resize(l.out);
    for (std::size_t j = 0; j < l.out; ++j) {
      const double a = bn.gamma.value[j] / std::sqrt(bn.stats.running_var[j] + bn_eps);
      for (std::size_t k = 0; k < l.in; ++k) {
        l.w[k * l.out + j] = static_cast<T>(conv.weight.value(k, j) * a);
      }
      l.b[j] = static_cast<T>((conv.bias.value[j] - bn.stats.running_mean[j]) * a +
                              bn.beta.value[j]);
    }
    max_width_ = std::max(max_width_, l.out);
    layers_.push_back(std::move(l));
  }
}

template <typename T>
Encoding EncoderEngine<T>::encode(const T* points, std::size_t n) const {
  if (n == 0) throw ShapeError("cannot encode an empty cloud");
  const std::size_t width = std::max<std::size_t>(max_width_, 3);
  std::vector<T> a(kChunk * width);
  std::vector<T> b(kChunk * width);
  std::vector<T> code(code_dim(), std::numeric_limits<T>::lowest());
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t rows = std::min(kChunk, n - start);
    std::copy(points + 3 * start, points + 3 * (start + rows), a.begin());
    for (const Layer& l : layers_) {
      kernels::linear_rows<T>(a.data(), l.w.data(), l.b.data(), b.data(), rows, l.in, l.out);
      for (std::size_t i = 0; i < rows * l.out; ++i) b[i] = b[i] > T(0) ? b[i] : T(0);
      std::swap(a, b);
    }
    const std::size_t d = code.size();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = a.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) code[j] = row[j] > code[j] ? row[j] : code[j];
    }
  }
  Encoding out(code.begin(), code.end());
  for (double v : out) {
    if (!std::isfinite(v)) throw NumericError("encoder produced a non-finite value");
  }
  return out;
}

template <typename T>
Encoding EncoderEngine<T>::encode(const PointCloud& cloud) const {
  validate_cloud(cloud);
  const auto flat = flatten<T>(cloud);
  return encode(flat.data(), cloud.size());
}

// ---------------------------------------------------------------------------

template <typename T>
FlowEngine<T>::FlowEngine(const FlowModel& model)
    : code_dim_(model.code_dim()), limit_(model.config().max_abs_log_scale) {
  for (std::size_t k = 0; k < model.size(); ++k) add_block(model.blocks()[k], k);
}

template <typename T>
FlowEngine<T>::FlowEngine(const CouplingBlock& block, std::size_t index, double max_abs_log_scale)
    : code_dim_(block.map_s.w_enc.value.rows()), limit_(max_abs_log_scale) {
  add_block(block, index);
}

template <typename T>
void FlowEngine<T>::add_block(const CouplingBlock& cb, std::size_t index) {
  const Tensor& pw = cb.proj.weight.value;  // 3 x P
  const auto pb = cb.proj.bias.value.values();
  Block b;
  b.index = index;
  b.dim = cb.masked_dim;
  b.hidden = cb.map_s.w_feat.value.cols();

  b.fold_s.resize(3 * b.hidden);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto row = row_times(pw.row(k), cb.map_s.w_feat.value);
    std::copy(row.begin(), row.end(), b.fold_s.begin() + k * b.hidden);
  }
  b.base_s = row_times(pb, cb.map_s.w_feat.value);
  for (std::size_t j = 0; j < b.hidden; ++j) b.base_s[j] += cb.map_s.bias.value[j];
  b.w_enc_s.assign(cb.map_s.w_enc.value.values().begin(), cb.map_s.w_enc.value.values().end());
  b.w_out_s = cast<T>({cb.map_s.out.weight.value.values().begin(),
                       cb.map_s.out.weight.value.values().end()});
  b.b_out_s = static_cast<T>(cb.map_s.out.bias.value[0]);

  // map_t is linear end to end, so it collapses to a 3-vector and a constant.
  const Tensor& w2 = cb.map_t.out.weight.value;  // H x 1
  const Tensor& wf = cb.map_t.w_feat.value;
  std::vector<double> wf_w2(wf.rows(), 0.0);     // P
  for (std::size_t p = 0; p < wf.rows(); ++p) {
    double acc = 0.0;
    for (std::size_t j = 0; j < wf.cols(); ++j) acc = kernels::madd(wf(p, j), w2[j], acc);
    wf_w2[p] = acc;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    double acc = 0.0;
    for (std::size_t p = 0; p < pw.cols(); ++p) acc = kernels::madd(pw(k, p), wf_w2[p], acc);
    b.g_t[k] = static_cast<T>(acc);
  }
  double base = cb.map_t.out.bias.value[0];
  for (std::size_t p = 0; p < pb.size(); ++p) base = kernels::madd(pb[p], wf_w2[p], base);
  for (std::size_t j = 0; j < w2.rows(); ++j) {
    base = kernels::madd(cb.map_t.bias.value[j], w2[j], base);
  }
  b.base_t = base;
  const Tensor& we = cb.map_t.w_enc.value;
  b.u_t.assign(we.rows(), 0.0);
  for (std::size_t d = 0; d < we.rows(); ++d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < we.cols(); ++j) acc = kernels::madd(we(d, j), w2[j], acc);
    b.u_t[d] = acc;
  }
  blocks_.push_back(std::move(b));
}

template <typename T>
ConditionedFlow<T> FlowEngine<T>::condition(const Encoding& enc) const {
  if (enc.size() != code_dim_) {
    throw ConfigError("encoding has " + std::to_string(enc.size()) + " entries, flow expects " +
                      std::to_string(code_dim_));
  }
  for (double v : enc) {
    if (!std::isfinite(v)) throw NumericError("non-finite encoding");
  }
  ConditionedFlow<T> out(*this);
  for (const Block& b : blocks_) {
    std::vector<double> shift = b.base_s;
    for (std::size_t d = 0; d < enc.size(); ++d) {
      const double e = enc[d];
      const double* row = b.w_enc_s.data() + d * b.hidden;
      for (std::size_t j = 0; j < b.hidden; ++j) shift[j] = kernels::madd(e, row[j], shift[j]);
    }
    double t = b.base_t;
    for (std::size_t d = 0; d < enc.size(); ++d) t = kernels::madd(enc[d], b.u_t[d], t);
    out.shift_s_.push_back(cast<T>(shift));
    out.shift_t_.push_back(static_cast<T>(t));
  }
  return out;
}

template <typename T>
void FlowEngine<T>::scale_shift(const Block& b, const T* x, const std::vector<T>& shift_s,
                                T shift_t, T& s, T& t) const {
  const std::size_t h = b.hidden;
  // The masked coordinate is zero on this path, so it is skipped outright.
  const std::size_t k0 = b.dim == 0 ? 1 : 0;
  const std::size_t k1 = b.dim == 2 ? 1 : 2;
  const T x0 = x[k0];
  const T x1 = x[k1];
  const T* f0 = b.fold_s.data() + k0 * h;
  const T* f1 = b.fold_s.data() + k1 * h;
  const T* w = b.w_out_s.data();
  const T* c = shift_s.data();

  T acc[kLanes] = {};
  std::size_t j = 0;
  for (; j + kLanes <= h; j += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      T v = kernels::madd(x1, f1[j + l], kernels::madd(x0, f0[j + l], c[j + l]));
      v = v > T(0) ? v : T(0);
      acc[l] = kernels::madd(v, w[j + l], acc[l]);
    }
  }
  for (std::size_t l = 0; j < h; ++j, ++l) {
    T v = kernels::madd(x1, f1[j], kernels::madd(x0, f0[j], c[j]));
    v = v > T(0) ? v : T(0);
    acc[l] = kernels::madd(v, w[j], acc[l]);
  }
  const T raw = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) +
                b.b_out_s;
  s = T(2) * std::tanh(raw);
  t = kernels::madd(x1, b.g_t[k1], kernels::madd(x0, b.g_t[k0], shift_t));
  if (!(std::abs(static_cast<double>(s)) <= limit_) || !std::isfinite(t)) {
    throw NumericError("coupling block " + std::to_string(b.index) +
                       ": log-scale out of range or non-finite shift");
  }
}

template <typename T>
void ConditionedFlow<T>::forward(T* xyz, std::size_t n) const {
  const auto& blocks = engine_->blocks_;
  for (std::size_t i = 0; i < n; ++i) {
    T* x = xyz + 3 * i;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      T s, t;
      engine_->scale_shift(blocks[k], x, shift_s_[k], shift_t_[k], s, t);
      x[blocks[k].dim] = x[blocks[k].dim] * std::exp(s) + t;
    }
  }
}

template <typename T>
void ConditionedFlow<T>::inverse(T* xyz, std::size_t n) const {
  const auto& blocks = engine_->blocks_;
  for (std::size_t i = 0; i < n; ++i) {
    T* x = xyz + 3 * i;
    for (std::size_t k = blocks.size(); k-- > 0;) {
      T s, t;
      engine_->scale_shift(blocks[k], x, shift_s_[k], shift_t_[k], s, t);
      x[blocks[k].dim] = (x[blocks[k].dim] - t) * std::exp(-s);
    }
  }
}

// ---------------------------------------------------------------------------

template <typename T>
InferenceModel<T>::InferenceModel(const Encoder& encoder, const FlowModel& flow)
    : encoder_(encoder), flow_(flow) {
  if (encoder_.code_dim() != flow_.code_dim()) {
    throw ConfigError("encoder code size " + std::to_string(encoder_.code_dim()) +
                      " does not match flow conditioning size " +
                      std::to_string(flow_.code_dim()));
  }
}

template <typename T>
void InferenceModel<T>::run(const T* cloud, std::size_t n_points, const T* templ, T* out,
                            std::size_t n_vertices) const {
  const Encoding enc = encoder_.encode(cloud, n_points);
  std::copy(templ, templ + 3 * n_vertices, out);
  flow_.condition(enc).forward(out, n_vertices);
}

template <typename T>
Mesh InferenceModel<T>::deform(const Mesh& templ, const Encoding& enc) const {
  validate_mesh(templ);
  auto flat = flatten<T>({templ.vertices});
  flow_.condition(enc).forward(flat.data(), templ.vertices.size());
  Mesh out;
  out.faces = templ.faces;
  out.vertices.resize(templ.vertices.size());
  for (std::size_t i = 0; i < out.vertices.size(); ++i) {
    out.vertices[i] = {static_cast<double>(flat[3 * i]), static_cast<double>(flat[3 * i + 1]),
                       static_cast<double>(flat[3 * i + 2])};
  }
  return out;
}

template <typename T>
Mesh InferenceModel<T>::deform(const Mesh& templ, const PointCloud& cloud) const {
  return deform(templ, encoder_.encode(cloud));
}

template class EncoderEngine<float>;
template class EncoderEngine<double>;
template class FlowEngine<float>;
template class FlowEngine<double>;
template class ConditionedFlow<float>;
template class ConditionedFlow<double>;
template class InferenceModel<float>;
template class InferenceModel<double>;

}  // namespace meshflow
