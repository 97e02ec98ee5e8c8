#include "flowprune/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flowprune {

namespace {

std::vector<double> masked_weight(const LayerParams& p, const std::vector<std::uint8_t>& keep) {
  std::vector<double> w = p.weight.data;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (!keep[i]) w[i] = 0.0;
  return w;
}

struct ConvGeometry {
  std::size_t in_c, in_h, in_w, out_c, out_h, out_w, k, stride, pad;

  explicit ConvGeometry(const LayerSpec& l)
      : in_c(l.input_shape[0]), in_h(l.input_shape[1]), in_w(l.input_shape[2]),
        out_c(l.output_shape[0]), out_h(l.output_shape[1]), out_w(l.output_shape[2]),
        k(l.kernel), stride(l.stride), pad(l.padding) {}

  // Valid output range [lo, hi) along one axis for kernel offset `kk`.
  void range(std::size_t kk, std::size_t in_len, std::size_t out_len, std::size_t& lo,
             std::size_t& hi) const {
    // input index = o * stride + kk - pad must lie in [0, in_len)
    lo = 0;
    if (kk < pad) lo = (pad - kk + stride - 1) / stride;
    const std::ptrdiff_t last = std::ptrdiff_t(in_len) - 1 + std::ptrdiff_t(pad) - std::ptrdiff_t(kk);
    hi = last < 0 ? 0 : std::min(out_len, std::size_t(last) / stride + 1);
    if (hi < lo) hi = lo;
  }
};

// Unfolds one sample into cols[(ci·k + kh)·k + kw][output position]; padding reads as zero.
void im2col(const ConvGeometry& g, const double* x, std::vector<double>& cols) {
  const std::size_t out_plane = g.out_h * g.out_w;
  cols.assign(g.in_c * g.k * g.k * out_plane, 0.0);
  for (std::size_t ci = 0; ci < g.in_c; ++ci) {
    const double* xc = x + ci * g.in_h * g.in_w;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      std::size_t oh0, oh1;
      g.range(kh, g.in_h, g.out_h, oh0, oh1);
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        std::size_t ow0, ow1;
        g.range(kw, g.in_w, g.out_w, ow0, ow1);
        double* row = &cols[((ci * g.k + kh) * g.k + kw) * out_plane];
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const double* xr = xc + (oh * g.stride + kh - g.pad) * g.in_w;
          for (std::size_t ow = ow0; ow < ow1; ++ow) row[oh * g.out_w + ow] = xr[ow * g.stride + kw - g.pad];
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const std::vector<double>& cols, double* gx) {
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t ci = 0; ci < g.in_c; ++ci) {
    double* gc = gx + ci * g.in_h * g.in_w;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      std::size_t oh0, oh1;
      g.range(kh, g.in_h, g.out_h, oh0, oh1);
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        std::size_t ow0, ow1;
        g.range(kw, g.in_w, g.out_w, ow0, ow1);
        const double* row = &cols[((ci * g.k + kh) * g.k + kw) * out_plane];
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          double* gr = gc + (oh * g.stride + kh - g.pad) * g.in_w;
          for (std::size_t ow = ow0; ow < ow1; ++ow) gr[ow * g.stride + kw - g.pad] += row[oh * g.out_w + ow];
        }
      }
    }
  }
}

void conv_forward(const LayerSpec& l, const std::vector<double>& w, const Tensor& bias,
                  const Tensor& in, Tensor& out) {
  const ConvGeometry g(l);
  const std::size_t in_plane = g.in_h * g.in_w, out_plane = g.out_h * g.out_w;
  const std::size_t taps = g.in_c * g.k * g.k;
  std::vector<double> cols;
  for (std::size_t b = 0; b < in.rows(); ++b) {
    im2col(g, &in.data[b * g.in_c * in_plane], cols);
    for (std::size_t co = 0; co < g.out_c; ++co) {
      double* o = &out.data[(b * g.out_c + co) * out_plane];
      std::fill(o, o + out_plane, bias.empty() ? 0.0 : bias[co]);
      const double* wr = &w[co * taps];
      for (std::size_t r = 0; r < taps; ++r) {
        const double wv = wr[r];
        if (wv == 0.0) continue;
        const double* c = &cols[r * out_plane];
        for (std::size_t p = 0; p < out_plane; ++p) o[p] += wv * c[p];
      }
    }
  }
}

void conv_backward(const LayerSpec& l, const std::vector<double>& w, const Tensor& in,
                   const Tensor& gout, Tensor& gw, Tensor* gbias, Tensor& gin) {
  const ConvGeometry g(l);
  const std::size_t in_plane = g.in_h * g.in_w, out_plane = g.out_h * g.out_w;
  const std::size_t taps = g.in_c * g.k * g.k;
  std::vector<double> cols, gcols;
  for (std::size_t b = 0; b < in.rows(); ++b) {
    im2col(g, &in.data[b * g.in_c * in_plane], cols);
    gcols.assign(cols.size(), 0.0);
    for (std::size_t co = 0; co < g.out_c; ++co) {
      const double* go = &gout.data[(b * g.out_c + co) * out_plane];
      if (gbias) {
        double s = 0.0;
        for (std::size_t p = 0; p < out_plane; ++p) s += go[p];
        (*gbias)[co] += s;
      }
      const double* wr = &w[co * taps];
      double* gwr = &gw.data[co * taps];
      for (std::size_t r = 0; r < taps; ++r) {
        const double* c = &cols[r * out_plane];
        double acc = 0.0;
        for (std::size_t p = 0; p < out_plane; ++p) acc += go[p] * c[p];
        gwr[r] += acc;
        const double wv = wr[r];
        if (wv == 0.0) continue;
        double* gc = &gcols[r * out_plane];
        for (std::size_t p = 0; p < out_plane; ++p) gc[p] += wv * go[p];
      }
    }
    col2im_add(g, gcols, &gin.data[b * g.in_c * in_plane]);
  }
}

void dense_forward(const LayerSpec& l, const std::vector<double>& w, const Tensor& bias,
                   const Tensor& in, Tensor& out) {
  const std::size_t n_in = l.input_shape[0], n_out = l.units, batch = in.rows();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = &in.data[b * n_in];
    for (std::size_t i = 0; i < n_out; ++i) {
      const double* wr = &w[i * n_in];
      double acc = bias.empty() ? 0.0 : bias[i];
      for (std::size_t j = 0; j < n_in; ++j) acc += wr[j] * x[j];
      out.data[b * n_out + i] = acc;
    }
  }
}

void dense_backward(const LayerSpec& l, const std::vector<double>& w, const Tensor& in,
                    const Tensor& gout, Tensor& gw, Tensor* gbias, Tensor& gin) {
  const std::size_t n_in = l.input_shape[0], n_out = l.units, batch = in.rows();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = &in.data[b * n_in];
    double* gx = &gin.data[b * n_in];
    for (std::size_t i = 0; i < n_out; ++i) {
      const double go = gout.data[b * n_out + i];
      if (gbias) (*gbias)[i] += go;
      if (go == 0.0) continue;
      double* gwr = &gw.data[i * n_in];
      const double* wr = &w[i * n_in];
      for (std::size_t j = 0; j < n_in; ++j) {
        gwr[j] += go * x[j];
        gx[j] += go * wr[j];
      }
    }
  }
}

// Channel count and per-channel spatial extent of a batch-norm input.
std::pair<std::size_t, std::size_t> bn_layout(const LayerSpec& l) {
  const std::size_t c = l.input_shape[0];
  return {c, element_count(l.input_shape) / c};
}

void batchnorm_forward(std::size_t index, const LayerSpec& l, const LayerParams& p,
                       const Tensor& in, Mode mode, Tensor& out, BatchNormCache& cache) {
  const auto [channels, spatial] = bn_layout(l);
  const std::size_t batch = in.rows();
  const double n = double(batch * spatial);
  cache.mean.assign(channels, 0.0);
  cache.var.assign(channels, 0.0);
  cache.inv_std.assign(channels, 0.0);
  cache.normalized = Tensor(in.shape);
  for (std::size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < spatial; ++i) s += in.data[(b * channels + c) * spatial + i];
      mean = s / n;
      double q = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < spatial; ++i) {
          const double d = in.data[(b * channels + c) * spatial + i] - mean;
          q += d * d;
        }
      var = q / n;
    } else {
      mean = p.running_mean[c];
      var = p.running_var[c];
    }
    const double denom = var + l.bn_eps;
    if (!(denom > 0.0))
      throw NumericError("batch-norm layer " + std::to_string(index) + " channel " +
                         std::to_string(c) + ": zero variance with eps " +
                         std::to_string(l.bn_eps));
    cache.mean[c] = mean;
    cache.var[c] = var;
    cache.inv_std[c] = 1.0 / std::sqrt(denom);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < spatial; ++i) {
        const std::size_t at = (b * channels + c) * spatial + i;
        const double xhat = (in.data[at] - mean) * cache.inv_std[c];
        cache.normalized.data[at] = xhat;
        out.data[at] = p.gamma[c] * xhat + p.beta[c];
      }
  }
  if (!all_finite(out.values()))
    throw NumericError("batch-norm layer " + std::to_string(index) + " produced non-finite output");
}

void batchnorm_backward(const LayerSpec& l, const LayerParams& p, const BatchNormCache& cache,
                        Mode mode, const Tensor& gout, LayerParams& g, Tensor& gin) {
  const auto [channels, spatial] = bn_layout(l);
  const std::size_t batch = gout.rows();
  const double n = double(batch * spatial);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < spatial; ++i) {
        const std::size_t at = (b * channels + c) * spatial + i;
        sum_g += gout.data[at];
        sum_gx += gout.data[at] * cache.normalized.data[at];
      }
    g.gamma[c] += sum_gx;
    g.beta[c] += sum_g;
    const double scale = p.gamma[c] * cache.inv_std[c];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < spatial; ++i) {
        const std::size_t at = (b * channels + c) * spatial + i;
        if (mode == Mode::Train) {
          gin.data[at] += scale * (gout.data[at] - sum_g / n -
                                   cache.normalized.data[at] * sum_gx / n);
        } else {
          gin.data[at] += scale * gout.data[at];
        }
      }
  }
}

void maxpool_forward(const LayerSpec& l, const Tensor& in, Tensor& out,
                     std::vector<std::size_t>& argmax) {
  const std::size_t c = l.input_shape[0], h = l.input_shape[1], w = l.input_shape[2];
  const std::size_t oh = l.output_shape[1], ow = l.output_shape[2];
  const std::size_t batch = in.rows();
  argmax.assign(out.size(), 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * h * w;
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          std::size_t best = base + (i * l.stride) * w + j * l.stride;
          for (std::size_t u = 0; u < l.kernel; ++u)
            for (std::size_t v = 0; v < l.kernel; ++v) {
              const std::size_t at = base + (i * l.stride + u) * w + j * l.stride + v;
              if (in.data[at] > in.data[best]) best = at;  // first maximum wins ties
            }
          const std::size_t o = ((b * c + ch) * oh + i) * ow + j;
          out.data[o] = in.data[best];
          argmax[o] = best;
        }
    }
}

}  // namespace

Shape batch_shape(std::size_t batch, const Shape& sample) {
  Shape s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

ForwardTrace forward(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                     const Tensor& input, Mode mode) {
  check_congruent(spec, params);
  check_congruent(spec, mask);
  if (input.shape.size() != spec.input_shape.size() + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(), input.shape.begin() + 1))
    throw StructuralError("input shape " + shape_string(input.shape) +
                          " does not match network input " + shape_string(spec.input_shape));
  const std::size_t batch = input.rows();
  ForwardTrace trace;
  trace.mode = mode;
  trace.activations.reserve(spec.layers.size() + 1);
  trace.activations.push_back(input);
  trace.pool_argmax.resize(spec.layers.size());
  trace.batchnorm.resize(spec.layers.size());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& layer = spec.layers[l];
    const Tensor& in = trace.activations[l];
    Tensor out(batch_shape(batch, layer.output_shape));
    switch (layer.kind) {
      case LayerKind::Dense:
        dense_forward(layer, masked_weight(params.layers[l], mask.keep[l]), params.layers[l].bias,
                      in, out);
        break;
      case LayerKind::Conv2d:
        conv_forward(layer, masked_weight(params.layers[l], mask.keep[l]), params.layers[l].bias,
                     in, out);
        break;
      case LayerKind::MaxPool:
        maxpool_forward(layer, in, out, trace.pool_argmax[l]);
        break;
      case LayerKind::Relu:
        for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = in.data[i] > 0.0 ? in.data[i] : 0.0;
        break;
      case LayerKind::BatchNorm:
        batchnorm_forward(l, layer, params.layers[l], in, mode, out, trace.batchnorm[l]);
        break;
      case LayerKind::Flatten:
        out.data = in.data;
        break;
      case LayerKind::ResidualAdd: {
        const Tensor& skip = trace.activations[layer.skip_from];
        for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = in.data[i] + skip.data[i];
        break;
      }
    }
    trace.activations.push_back(std::move(out));
  }
  return trace;
}

GradientSet backward(const NetworkSpec& spec, const ForwardTrace& trace, const ParamSet& params,
                     const Mask& mask, const Tensor& output_grad) {
  check_congruent(spec, params);
  check_congruent(spec, mask);
  if (trace.activations.size() != spec.layers.size() + 1)
    throw StructuralError("trace has " + std::to_string(trace.activations.size()) +
                          " activations, network expects " +
                          std::to_string(spec.layers.size() + 1));
  if (output_grad.shape != trace.output().shape)
    throw StructuralError("output gradient shape " + shape_string(output_grad.shape) +
                          " does not match output " + shape_string(trace.output().shape));
  GradientSet grads = zeros_like(params);
  grads.activations.reserve(trace.activations.size());
  for (const auto& a : trace.activations) grads.activations.emplace_back(a.shape);
  grads.activations.back() = output_grad;

  for (std::size_t l = spec.layers.size(); l-- > 0;) {
    const LayerSpec& layer = spec.layers[l];
    const Tensor& in = trace.activations[l];
    const Tensor& gout = grads.activations[l + 1];
    Tensor& gin = grads.activations[l];
    LayerParams& g = grads.layers[l];
    switch (layer.kind) {
      case LayerKind::Dense:
        dense_backward(layer, masked_weight(params.layers[l], mask.keep[l]), in, gout, g.weight,
                       layer.has_bias() ? &g.bias : nullptr, gin);
        break;
      case LayerKind::Conv2d:
        conv_backward(layer, masked_weight(params.layers[l], mask.keep[l]), in, gout, g.weight,
                      layer.has_bias() ? &g.bias : nullptr, gin);
        break;
      case LayerKind::MaxPool: {
        const auto& argmax = trace.pool_argmax[l];
        for (std::size_t o = 0; o < argmax.size(); ++o) gin.data[argmax[o]] += gout.data[o];
        break;
      }
      case LayerKind::Relu:
        for (std::size_t i = 0; i < in.size(); ++i)
          if (in.data[i] > 0.0) gin.data[i] += gout.data[i];
        break;
      case LayerKind::BatchNorm:
        batchnorm_backward(layer, params.layers[l], trace.batchnorm[l], trace.mode, gout, g, gin);
        break;
      case LayerKind::Flatten:
        for (std::size_t i = 0; i < gout.size(); ++i) gin.data[i] += gout.data[i];
        break;
      case LayerKind::ResidualAdd: {
        Tensor& gskip = grads.activations[layer.skip_from];
        for (std::size_t i = 0; i < gout.size(); ++i) {
          gin.data[i] += gout.data[i];
          gskip.data[i] += gout.data[i];
        }
        break;
      }
    }
  }
  return grads;
}

Batch Batch::slice(std::size_t begin, std::size_t end) const {
  Batch out;
  const std::size_t stride = inputs.row_size();
  Shape shape = inputs.shape;
  shape[0] = end - begin;
  out.inputs = Tensor(shape, std::vector<double>(inputs.data.begin() + begin * stride,
                                                 inputs.data.begin() + end * stride));
  if (!labels.empty()) out.labels.assign(labels.begin() + begin, labels.begin() + end);
  if (!targets.empty()) {
    const std::size_t ts = targets.row_size();
    Shape tshape = targets.shape;
    tshape[0] = end - begin;
    out.targets = Tensor(tshape, std::vector<double>(targets.data.begin() + begin * ts,
                                                     targets.data.begin() + end * ts));
  }
  return out;
}

LossValue evaluate_loss(const Tensor& output, const Batch& batch, LossKind kind,
                        Reduction reduction) {
  const std::size_t n = output.rows(), classes = output.row_size();
  if (n == 0) throw DomainError("loss over an empty batch");
  LossValue result;
  result.output_grad = Tensor(output.shape);
  const double scale = reduction == Reduction::Mean ? 1.0 / double(n) : 1.0;
  auto label_at = [&](std::size_t b) {
    if (b >= batch.labels.size()) throw DomainError("batch has no label for sample " + std::to_string(b));
    const int y = batch.labels[b];
    if (y < 0 || std::size_t(y) >= classes)
      throw DomainError("label " + std::to_string(y) + " out of range for " +
                        std::to_string(classes) + " outputs");
    return std::size_t(y);
  };
  if (kind == LossKind::CrossEntropy) {
    for (std::size_t b = 0; b < n; ++b) {
      const double* z = &output.data[b * classes];
      const std::size_t y = label_at(b);
      const double m = *std::max_element(z, z + classes);
      double s = 0.0;
      for (std::size_t c = 0; c < classes; ++c) s += std::exp(z[c] - m);
      const double log_z = m + std::log(s);
      result.value += (log_z - z[y]) * scale;
      for (std::size_t c = 0; c < classes; ++c) {
        const double p = std::exp(z[c] - log_z);
        result.output_grad.data[b * classes + c] = (p - (c == y ? 1.0 : 0.0)) * scale;
      }
    }
  } else {
    const bool one_hot = batch.targets.empty();
    if (!one_hot && batch.targets.size() != output.size())
      throw StructuralError("mse targets shape " + shape_string(batch.targets.shape) +
                            " does not match output " + shape_string(output.shape));
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t y = one_hot ? label_at(b) : 0;
      for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t at = b * classes + c;
        const double t = one_hot ? (c == y ? 1.0 : 0.0) : batch.targets.data[at];
        const double d = output.data[at] - t;
        result.value += 0.5 * d * d * scale;
        result.output_grad.data[at] = d * scale;
      }
    }
  }
  return result;
}

LossGradient loss_and_grad(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                           const Batch& batch, LossKind kind, Mode mode, Reduction reduction) {
  if (batch.size() == 0) throw DomainError("loss_and_grad needs a nonempty batch");
  const ForwardTrace trace = forward(spec, params, mask, batch.inputs, mode);
  LossValue loss = evaluate_loss(trace.output(), batch, kind, reduction);
  return {loss.value, backward(spec, trace, params, mask, loss.output_grad)};
}

namespace {
Tensor zeros_of(const Tensor& t) { return t.empty() ? Tensor() : Tensor(t.shape); }
}  // namespace

GradientSet zeros_like(const ParamSet& params) {
  GradientSet g;
  g.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams& p = params.layers[l];
    g.layers[l].weight = zeros_of(p.weight);
    g.layers[l].bias = zeros_of(p.bias);
    g.layers[l].gamma = zeros_of(p.gamma);
    g.layers[l].beta = zeros_of(p.beta);
  }
  return g;
}

namespace {

template <typename Fn>
void each_slot(LayerParams& a, const LayerParams& b, Fn&& fn) {
  fn(a.weight, b.weight);
  fn(a.bias, b.bias);
  fn(a.gamma, b.gamma);
  fn(a.beta, b.beta);
}

template <typename Fn>
void each_slot(const LayerParams& a, const LayerParams& b, Fn&& fn) {
  fn(a.weight, b.weight);
  fn(a.bias, b.bias);
  fn(a.gamma, b.gamma);
  fn(a.beta, b.beta);
}

void axpy(Tensor& target, const Tensor& g, double scale) {
  if (g.empty()) return;
  if (target.size() != g.size())
    throw StructuralError("parameter-shaped arithmetic on mismatched tensors " +
                          shape_string(target.shape) + " vs " + shape_string(g.shape));
  for (std::size_t i = 0; i < g.size(); ++i) target.data[i] += scale * g.data[i];
}

}  // namespace

void for_each_trainable(ParamSet& params, const GradientSet& grads,
                        const std::function<void(std::size_t, Tensor&, const Tensor&)>& fn) {
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    each_slot(params.layers[l], grads.layers.at(l),
              [&](Tensor& p, const Tensor& g) { fn(l, p, g); });
}

void add_scaled(GradientSet& target, const GradientSet& g, double scale) {
  for (std::size_t l = 0; l < target.layers.size(); ++l)
    each_slot(target.layers[l], g.layers.at(l),
              [&](Tensor& t, const Tensor& s) { axpy(t, s, scale); });
}

void add_scaled(ParamSet& target, const GradientSet& g, double scale) {
  for (std::size_t l = 0; l < target.layers.size(); ++l)
    each_slot(target.layers[l], g.layers.at(l),
              [&](Tensor& t, const Tensor& s) { axpy(t, s, scale); });
}

double inf_norm(const GradientSet& g) {
  double m = 0.0;
  for (const auto& layer : g.layers)
    each_slot(layer, layer, [&](const Tensor& t, const Tensor&) { m = std::max(m, max_abs(t.values())); });
  return m;
}

double dot(const GradientSet& a, const GradientSet& b) {
  double s = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    each_slot(a.layers[l], b.layers.at(l), [&](const Tensor& x, const Tensor& y) {
      if (!x.empty() && !y.empty()) s += dot(x.values(), y.values());
    });
  return s;
}

GradientSet hvp(const ParamSet& params, const GradientFn& gradient, const GradientSet& v,
                double delta) {
  const double eps = delta / std::max(1.0, inf_norm(v));
  ParamSet plus = params, minus = params;
  add_scaled(plus, v, eps);
  add_scaled(minus, v, -eps);
  GradientSet result = gradient(plus);
  const GradientSet lower = gradient(minus);
  result.activations.clear();
  add_scaled(result, lower, -1.0);
  for (std::size_t l = 0; l < result.layers.size(); ++l) {
    bool finite = true;
    each_slot(result.layers[l], result.layers[l], [&](Tensor& t, const Tensor&) {
      for (double& x : t.data) {
        x /= 2.0 * eps;
        finite = finite && std::isfinite(x);
      }
    });
    if (!finite) throw NumericError("Hessian-vector product is non-finite at layer " + std::to_string(l));
  }
  return result;
}

GradientSet hvp(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                const Batch& batch, LossKind kind, Mode mode, const GradientSet& v,
                Reduction reduction) {
  return hvp(
      params,
      [&](const ParamSet& p) { return loss_and_grad(spec, p, mask, batch, kind, mode, reduction).grad; },
      v);
}

}  // namespace flowprune
