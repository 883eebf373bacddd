#pragma once

// The learnable label denoiser: a three-layer 3x3 convolutional network over
// channel-concatenated inputs (one-hot labels + target frame + warped frame),
// with hand-derived backpropagation, SGD-with-momentum training on cyclic
// label samples, gradient verification against central differences, and a
// versioned binary parameter container.
//
// Everything numeric is templated on the scalar type: float in production,
// double for gradient checking.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "labelprop/errors.hpp"
#include "labelprop/flow_io.hpp"
#include "labelprop/grid.hpp"
#include "labelprop/propagation.hpp"
#include "labelprop/rng.hpp"

namespace labelprop {

inline constexpr double kProbClampEps = 1e-7;
inline constexpr int kRefinerHiddenChannels = 16;

// Channel-planar activation block: data[(c*H + y)*W + x].
template <typename T>
struct PlaneStack {
    int channels = 0, width = 0, height = 0;
    std::vector<T> data;

    PlaneStack() = default;
    PlaneStack(int ch, int w, int h)
        : channels(ch), width(w), height(h),
          data(static_cast<std::size_t>(ch) * w * h, T(0)) {}

    T* plane(int c) { return data.data() + static_cast<std::size_t>(c) * width * height; }
    const T* plane(int c) const {
        return data.data() + static_cast<std::size_t>(c) * width * height;
    }
    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
};

template <typename T>
struct ConvLayer {
    int in_ch = 0, out_ch = 0;
    std::vector<T> w; // [out][in][ky][kx], 3x3 kernels
    std::vector<T> b; // [out]

    T& weight(int oc, int ic, int ky, int kx) {
        return w[((static_cast<std::size_t>(oc) * in_ch + ic) * 3 + ky) * 3 + kx];
    }
    T weight(int oc, int ic, int ky, int kx) const {
        return w[((static_cast<std::size_t>(oc) * in_ch + ic) * 3 + ky) * 3 + kx];
    }
};

template <typename T>
struct RefinerParamsT {
    int num_classes = 0;
    int hidden = kRefinerHiddenChannels;
    std::uint64_t init_seed = 0;
    std::uint64_t step_counter = 0;
    std::string config_echo; // training configuration, echoed on save
    ConvLayer<T> conv1, conv2, conv3;

    int input_channels() const { return num_classes + 6; }
};

using RefinerParams = RefinerParamsT<float>;

namespace detail {

template <typename T>
ConvLayer<T> make_layer(int in_ch, int out_ch) {
    ConvLayer<T> layer;
    layer.in_ch = in_ch;
    layer.out_ch = out_ch;
    layer.w.assign(static_cast<std::size_t>(out_ch) * in_ch * 9, T(0));
    layer.b.assign(out_ch, T(0));
    return layer;
}

} // namespace detail

// He-style seeded initialization for the hidden layers; the output layer
// starts at zero so the untrained refiner emits the uniform distribution.
template <typename T>
RefinerParamsT<T> init_refiner_params(int num_classes, std::uint64_t seed,
                                      int hidden = kRefinerHiddenChannels) {
    detail::require(num_classes >= 2, "init_refiner_params: need at least two classes");
    RefinerParamsT<T> p;
    p.num_classes = num_classes;
    p.hidden = hidden;
    p.init_seed = seed;
    p.conv1 = detail::make_layer<T>(num_classes + 6, hidden);
    p.conv2 = detail::make_layer<T>(hidden, hidden);
    p.conv3 = detail::make_layer<T>(hidden, num_classes);
    Rng rng(mix_seed(seed, 0x1217ull));
    for (ConvLayer<T>* layer : {&p.conv1, &p.conv2}) {
        const double std_dev = std::sqrt(2.0 / (layer->in_ch * 9.0));
        for (T& w : layer->w) w = static_cast<T>(rng.gaussian(0.0, std_dev));
    }
    return p;
}

namespace detail {

// y[oc] = b[oc] + sum_ic sum_k w * x[ic] under zero padding, written as
// shifted-window accumulations so the inner loops stay branch-free.
template <typename T>
PlaneStack<T> conv_forward(const PlaneStack<T>& x, const ConvLayer<T>& layer) {
    require(x.channels == layer.in_ch, "conv_forward: channel mismatch");
    const int W = x.width, H = x.height;
    PlaneStack<T> y(layer.out_ch, W, H);
    for (int oc = 0; oc < layer.out_ch; ++oc) {
        T* yp = y.plane(oc);
        const T bias = layer.b[oc];
        for (std::size_t i = 0; i < y.plane_size(); ++i) yp[i] = bias;
        for (int ic = 0; ic < layer.in_ch; ++ic) {
            const T* xp = x.plane(ic);
            for (int ky = -1; ky <= 1; ++ky) {
                for (int kx = -1; kx <= 1; ++kx) {
                    const T wv = layer.weight(oc, ic, ky + 1, kx + 1);
                    if (wv == T(0)) continue;
                    const int y0 = std::max(0, -ky), y1 = H - std::max(0, ky);
                    const int x0 = std::max(0, -kx), x1 = W - std::max(0, kx);
                    for (int yy = y0; yy < y1; ++yy) {
                        T* dst = yp + static_cast<std::size_t>(yy) * W;
                        const T* src = xp + static_cast<std::size_t>(yy + ky) * W + kx;
                        for (int xx = x0; xx < x1; ++xx) dst[xx] += wv * src[xx];
                    }
                }
            }
        }
    }
    return y;
}

// Accumulates dW/dB for the layer and returns dX.
template <typename T>
PlaneStack<T> conv_backward(const PlaneStack<T>& x, const ConvLayer<T>& layer,
                            const PlaneStack<T>& dy, ConvLayer<T>& grad) {
    const int W = x.width, H = x.height;
    PlaneStack<T> dx(layer.in_ch, W, H);
    for (int oc = 0; oc < layer.out_ch; ++oc) {
        const T* dyp = dy.plane(oc);
        T db = T(0);
        for (std::size_t i = 0; i < dy.plane_size(); ++i) db += dyp[i];
        grad.b[oc] += db;
        for (int ic = 0; ic < layer.in_ch; ++ic) {
            const T* xp = x.plane(ic);
            T* dxp = dx.plane(ic);
            for (int ky = -1; ky <= 1; ++ky) {
                for (int kx = -1; kx <= 1; ++kx) {
                    const int y0 = std::max(0, -ky), y1 = H - std::max(0, ky);
                    const int x0 = std::max(0, -kx), x1 = W - std::max(0, kx);
                    T dw = T(0);
                    const T wv = layer.weight(oc, ic, ky + 1, kx + 1);
                    for (int yy = y0; yy < y1; ++yy) {
                        const T* drow = dyp + static_cast<std::size_t>(yy) * W;
                        const T* xrow = xp + static_cast<std::size_t>(yy + ky) * W + kx;
                        T* dxrow = dxp + static_cast<std::size_t>(yy + ky) * W + kx;
                        for (int xx = x0; xx < x1; ++xx) {
                            dw += drow[xx] * xrow[xx];
                            dxrow[xx] += wv * drow[xx];
                        }
                    }
                    grad.weight(oc, ic, ky + 1, kx + 1) += dw;
                }
            }
        }
    }
    return dx;
}

template <typename T>
void relu_inplace(PlaneStack<T>& x) {
    for (T& v : x.data)
        if (v < T(0)) v = T(0);
}

// dz = dy where the pre-activation was positive, else 0.
template <typename T>
void relu_backward_inplace(const PlaneStack<T>& pre, PlaneStack<T>& dy) {
    for (std::size_t i = 0; i < dy.data.size(); ++i)
        if (pre.data[i] <= T(0)) dy.data[i] = T(0);
}

// Per-pixel softmax across channel planes, numerically shifted by the max.
template <typename T>
PlaneStack<T> softmax_planes(const PlaneStack<T>& logits) {
    PlaneStack<T> probs(logits.channels, logits.width, logits.height);
    const std::size_t n = logits.plane_size();
    const int C = logits.channels;
    for (std::size_t p = 0; p < n; ++p) {
        T max_logit = logits.data[p];
        for (int c = 1; c < C; ++c)
            max_logit = std::max(max_logit, logits.data[c * n + p]);
        T sum = T(0);
        for (int c = 0; c < C; ++c) {
            const T e = std::exp(logits.data[c * n + p] - max_logit);
            probs.data[c * n + p] = e;
            sum += e;
        }
        for (int c = 0; c < C; ++c) probs.data[c * n + p] /= sum;
    }
    return probs;
}

template <typename T>
PlaneStack<T> assemble_input(const SoftLabelMap& labels, const Image& target,
                             const Image& warped) {
    require(labels.width == target.width && labels.height == target.height &&
                target.same_shape(warped) && target.channels == 3,
            "refiner input: shape mismatch");
    const int C = labels.num_classes, W = labels.width, H = labels.height;
    PlaneStack<T> input(C + 6, W, H);
    const std::size_t n = input.plane_size();
    for (std::size_t p = 0; p < n; ++p) {
        for (int c = 0; c < C; ++c) input.data[c * n + p] = static_cast<T>(labels.data[p * C + c]);
        for (int c = 0; c < 3; ++c) {
            input.data[(C + c) * n + p] = static_cast<T>(target.data[p * 3 + c]);
            input.data[(C + 3 + c) * n + p] = static_cast<T>(warped.data[p * 3 + c]);
        }
    }
    return input;
}

template <typename T>
struct ForwardCache {
    PlaneStack<T> input, z1, h1, z2, h2, logits, probs;
};

template <typename T>
ForwardCache<T> forward_cached(const RefinerParamsT<T>& params, PlaneStack<T> input) {
    require(input.channels == params.input_channels(), "refiner_forward: channel mismatch");
    ForwardCache<T> cache;
    cache.input = std::move(input);
    cache.z1 = conv_forward(cache.input, params.conv1);
    cache.h1 = cache.z1;
    relu_inplace(cache.h1);
    cache.z2 = conv_forward(cache.h1, params.conv2);
    cache.h2 = cache.z2;
    relu_inplace(cache.h2);
    cache.logits = conv_forward(cache.h2, params.conv3);
    cache.probs = softmax_planes(cache.logits);
    return cache;
}

// Mean over non-ignore pixels of -log p[target], with probabilities clamped
// to [eps, 1-eps]. Throws if every pixel is ignore.
template <typename T>
double loss_from_probs(const PlaneStack<T>& probs, const LabelMap& target) {
    require(probs.width == target.width && probs.height == target.height &&
                probs.channels == target.num_classes,
            "refiner_loss: shape mismatch");
    const std::size_t n = probs.plane_size();
    double sum = 0.0;
    std::size_t valid = 0;
    for (std::size_t p = 0; p < n; ++p) {
        const ClassId c = target.data[p];
        if (c == target.ignore_id) continue;
        double pt = static_cast<double>(probs.data[static_cast<std::size_t>(c) * n + p]);
        pt = std::min(std::max(pt, kProbClampEps), 1.0 - kProbClampEps);
        sum += -std::log(pt);
        ++valid;
    }
    if (valid == 0) throw DegenerateError("refiner_loss: target is all ignore");
    return sum / static_cast<double>(valid);
}

// Gradient of the masked mean cross-entropy w.r.t. the logits. Pixels whose
// target probability sits in a clamped region contribute zero (the loss is
// locally constant there).
template <typename T>
PlaneStack<T> loss_backward(const PlaneStack<T>& probs, const LabelMap& target) {
    const std::size_t n = probs.plane_size();
    const int C = probs.channels;
    std::size_t valid = 0;
    for (std::size_t p = 0; p < n; ++p)
        if (target.data[p] != target.ignore_id) ++valid;
    PlaneStack<T> dlogits(C, probs.width, probs.height);
    if (valid == 0) return dlogits;
    const T inv = T(1) / static_cast<T>(valid);
    for (std::size_t p = 0; p < n; ++p) {
        const ClassId c = target.data[p];
        if (c == target.ignore_id) continue;
        const double pt = static_cast<double>(probs.data[static_cast<std::size_t>(c) * n + p]);
        if (pt <= kProbClampEps || pt >= 1.0 - kProbClampEps) continue;
        for (int k = 0; k < C; ++k) {
            const T y = (k == static_cast<int>(c)) ? T(1) : T(0);
            dlogits.data[static_cast<std::size_t>(k) * n + p] =
                (probs.data[static_cast<std::size_t>(k) * n + p] - y) * inv;
        }
    }
    return dlogits;
}

} // namespace detail

template <typename T>
struct RefinerGradientsT {
    ConvLayer<T> conv1, conv2, conv3;
};

using RefinerGradients = RefinerGradientsT<float>;

template <typename T>
RefinerGradientsT<T> zero_gradients(const RefinerParamsT<T>& params) {
    RefinerGradientsT<T> g;
    g.conv1 = detail::make_layer<T>(params.conv1.in_ch, params.conv1.out_ch);
    g.conv2 = detail::make_layer<T>(params.conv2.in_ch, params.conv2.out_ch);
    g.conv3 = detail::make_layer<T>(params.conv3.in_ch, params.conv3.out_ch);
    return g;
}

// One training sample: refiner inputs plus the supervision target.
struct RefinerSample {
    SoftLabelMap input_labels;
    Image target_image;
    Image warped_image;
    LabelMap target_labels;
};

// Softmax output of the denoiser; per-pixel distributions sum to one.
template <typename T>
SoftLabelMap refiner_forward(const RefinerParamsT<T>& params, const SoftLabelMap& input_labels,
                             const Image& target_image, const Image& warped_image) {
    const auto cache = detail::forward_cached(
        params, detail::assemble_input<T>(input_labels, target_image, warped_image));
    SoftLabelMap out(input_labels.width, input_labels.height, params.num_classes);
    const std::size_t n = cache.probs.plane_size();
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < params.num_classes; ++c)
            out.data[p * params.num_classes + c] =
                static_cast<float>(cache.probs.data[static_cast<std::size_t>(c) * n + p]);
    return out;
}

// Mean masked cross-entropy of a soft prediction against hard targets.
inline double refiner_loss(const SoftLabelMap& pred, const LabelMap& target) {
    detail::require(pred.width == target.width && pred.height == target.height &&
                        pred.num_classes == target.num_classes,
                    "refiner_loss: dimensions differ");
    PlaneStack<double> probs(pred.num_classes, pred.width, pred.height);
    const std::size_t n = probs.plane_size();
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < pred.num_classes; ++c)
            probs.data[static_cast<std::size_t>(c) * n + p] = pred.data[p * pred.num_classes + c];
    return detail::loss_from_probs(probs, target);
}

namespace detail {

template <typename T>
double backward_sample(const RefinerParamsT<T>& params, const RefinerSample& sample,
                       RefinerGradientsT<T>& grads) {
    auto cache = forward_cached(
        params, assemble_input<T>(sample.input_labels, sample.target_image, sample.warped_image));
    const double loss = loss_from_probs(cache.probs, sample.target_labels);
    PlaneStack<T> dlogits = loss_backward(cache.probs, sample.target_labels);
    PlaneStack<T> dh2 = conv_backward(cache.h2, params.conv3, dlogits, grads.conv3);
    relu_backward_inplace(cache.z2, dh2);
    PlaneStack<T> dh1 = conv_backward(cache.h1, params.conv2, dh2, grads.conv2);
    relu_backward_inplace(cache.z1, dh1);
    conv_backward(cache.input, params.conv1, dh1, grads.conv1);
    return loss;
}

} // namespace detail

// Exact analytic gradients of the summed per-sample losses over a batch.
template <typename T>
RefinerGradientsT<T> refiner_backward(const RefinerParamsT<T>& params,
                                      const std::vector<RefinerSample>& batch) {
    RefinerGradientsT<T> grads = zero_gradients(params);
    for (const RefinerSample& sample : batch) detail::backward_sample(params, sample, grads);
    return grads;
}

// Adapter exposing trained parameters through the propagation-side interface.
class ConvRefiner final : public LabelRefiner {
public:
    explicit ConvRefiner(RefinerParams params) : params_(std::move(params)) {}

    SoftLabelMap refine(const SoftLabelMap& input_labels, const Image& target_image,
                        const Image& warped_image) const override {
        return refiner_forward(params_, input_labels, target_image, warped_image);
    }

    const RefinerParams& params() const { return params_; }

private:
    RefinerParams params_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int steps = 500;
    int batch_size = 1;       // cycle samples per step
    int max_cycle_length = 6; // l drawn uniformly from {1..max}, direction +-
    GateConfig gate;
    std::uint64_t seed = 0;
};

struct TrainResult {
    RefinerParams params;
    std::vector<double> loss_trace; // mean batch loss per step
};

// SGD with momentum over cycle-propagated samples. Single-threaded and a
// pure function of (initial params, dataset, config, seed).
inline TrainResult train(RefinerParams params, const std::vector<Sequence>& dataset,
                         const TrainConfig& cfg, const OracleSet& oracles) {
    if (cfg.learning_rate < 0.0 || cfg.momentum < 0.0 || cfg.steps < 0 || cfg.batch_size < 1 ||
        cfg.max_cycle_length < 1)
        throw ConfigError("train: invalid hyperparameters");

    std::vector<const Sequence*> usable;
    for (const Sequence& seq : dataset) {
        const int t = seq.annotated_index;
        if (t - cfg.max_cycle_length >= 0 && t + cfg.max_cycle_length < seq.frame_count())
            usable.push_back(&seq);
    }
    if (usable.empty())
        throw ConfigError("train: no sequence has enough frames around the annotated index");

    RefinerGradientsT<float> velocity = zero_gradients(params);
    Rng rng(mix_seed(cfg.seed, 0x7EA1Cull));
    TrainResult result;
    result.loss_trace.reserve(cfg.steps);

    auto update = [&](std::vector<float>& w, std::vector<float>& v, const std::vector<float>& g,
                      double scale) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = static_cast<float>(cfg.momentum * v[i] + g[i] * scale);
            w[i] -= static_cast<float>(cfg.learning_rate) * v[i];
        }
    };

    for (int step = 0; step < cfg.steps; ++step) {
        RefinerGradientsT<float> grads = zero_gradients(params);
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Sequence& seq =
                *usable[static_cast<std::size_t>(rng.uniform_int(0, usable.size() - 1))];
            const int l = static_cast<int>(rng.uniform_int(1, cfg.max_cycle_length));
            const int dir = rng.bernoulli(0.5) ? +1 : -1;
            OracleSet seq_oracles = oracles;
            seq_oracles.motion.seed = mix_seed(oracles.motion.seed, seq.config.seed);
            seq_oracles.semantic.seed = mix_seed(oracles.semantic.seed, seq.config.seed);
            const CycleSample cycle =
                cycle_propagate(seq, seq.annotated_index, l, dir, cfg.gate, seq_oracles);
            RefinerSample sample{onehot_encode(cycle.cyclic_labels), cycle.annotated_image,
                                 cycle.cyclic_warped_image, cycle.target_labels};
            batch_loss += detail::backward_sample(params, sample, grads);
        }
        const double scale = 1.0 / cfg.batch_size;
        update(params.conv1.w, velocity.conv1.w, grads.conv1.w, scale);
        update(params.conv1.b, velocity.conv1.b, grads.conv1.b, scale);
        update(params.conv2.w, velocity.conv2.w, grads.conv2.w, scale);
        update(params.conv2.b, velocity.conv2.b, grads.conv2.b, scale);
        update(params.conv3.w, velocity.conv3.w, grads.conv3.w, scale);
        update(params.conv3.b, velocity.conv3.b, grads.conv3.b, scale);
        params.step_counter += 1;
        result.loss_trace.push_back(batch_loss / cfg.batch_size);
    }
    result.params = std::move(params);
    return result;
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

struct GradCheckEntry {
    std::string tensor;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries; // one entry per parameter tensor
    double tolerance = 1e-3;
    bool passed = false;
};

namespace detail {

template <typename T>
double tensor_max_rel_error(const std::vector<T>& analytic, const std::vector<T>& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = static_cast<double>(analytic[i]);
        const double n = static_cast<double>(numeric[i]);
        const double denom = std::max({std::fabs(a), std::fabs(n), 1e-8});
        worst = std::max(worst, std::fabs(a - n) / denom);
    }
    return worst;
}

} // namespace detail

// Compares a set of analytic gradients against an independently computed
// numeric set; used by gradient_check and directly by mutation tests.
template <typename T>
GradCheckReport compare_gradients(const RefinerGradientsT<T>& analytic,
                                  const RefinerGradientsT<T>& numeric, double tolerance) {
    GradCheckReport report;
    report.tolerance = tolerance;
    report.entries = {
        {"conv1.w", detail::tensor_max_rel_error(analytic.conv1.w, numeric.conv1.w)},
        {"conv1.b", detail::tensor_max_rel_error(analytic.conv1.b, numeric.conv1.b)},
        {"conv2.w", detail::tensor_max_rel_error(analytic.conv2.w, numeric.conv2.w)},
        {"conv2.b", detail::tensor_max_rel_error(analytic.conv2.b, numeric.conv2.b)},
        {"conv3.w", detail::tensor_max_rel_error(analytic.conv3.w, numeric.conv3.w)},
        {"conv3.b", detail::tensor_max_rel_error(analytic.conv3.b, numeric.conv3.b)},
    };
    report.passed = true;
    for (const GradCheckEntry& e : report.entries)
        if (!(e.max_rel_error <= tolerance)) report.passed = false;
    return report;
}

// Central-difference gradients (step h) of the mean loss on one sample.
template <typename T>
RefinerGradientsT<T> numeric_gradients(RefinerParamsT<T> params, const RefinerSample& sample,
                                       T h) {
    RefinerGradientsT<T> numeric = zero_gradients(params);
    auto eval = [&]() {
        const auto cache = detail::forward_cached(
            params,
            detail::assemble_input<T>(sample.input_labels, sample.target_image,
                                      sample.warped_image));
        return detail::loss_from_probs(cache.probs, sample.target_labels);
    };
    auto sweep = [&](std::vector<T>& w, std::vector<T>& out) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            const T keep = w[i];
            w[i] = keep + h;
            const double up = eval();
            w[i] = keep - h;
            const double down = eval();
            w[i] = keep;
            out[i] = static_cast<T>((up - down) / (2.0 * static_cast<double>(h)));
        }
    };
    sweep(params.conv1.w, numeric.conv1.w);
    sweep(params.conv1.b, numeric.conv1.b);
    sweep(params.conv2.w, numeric.conv2.w);
    sweep(params.conv2.b, numeric.conv2.b);
    sweep(params.conv3.w, numeric.conv3.w);
    sweep(params.conv3.b, numeric.conv3.b);
    return numeric;
}

// Parameters with every layer randomized. The production initializer zeroes
// the output layer, which would silence the gradients of the hidden layers
// and make two thirds of the check vacuous.
template <typename T>
RefinerParamsT<T> make_gradcheck_params(int num_classes, std::uint64_t seed,
                                        int hidden = kRefinerHiddenChannels) {
    RefinerParamsT<T> p = init_refiner_params<T>(num_classes, seed, hidden);
    Rng rng(mix_seed(seed, 0xFEEDull));
    const double std3 = std::sqrt(2.0 / (p.conv3.in_ch * 9.0));
    for (T& w : p.conv3.w) w = static_cast<T>(rng.gaussian(0.0, std3));
    for (ConvLayer<T>* layer : {&p.conv1, &p.conv2, &p.conv3})
        for (T& b : layer->b) b = static_cast<T>(rng.gaussian(0.0, 0.05));
    return p;
}

// Deterministic random sample for gradient checking: soft labels from random
// hard ids (with a sprinkle of ignore), random images, random targets.
inline RefinerSample make_gradcheck_sample(int width, int height, int num_classes,
                                           std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x9CADull));
    LabelMap in_labels(width, height, num_classes);
    LabelMap target(width, height, num_classes);
    for (std::size_t p = 0; p < in_labels.pixels(); ++p) {
        in_labels.data[p] = static_cast<ClassId>(rng.uniform_int(0, num_classes - 1));
        target.data[p] = rng.bernoulli(0.1) ? target.ignore_id
                                            : static_cast<ClassId>(
                                                  rng.uniform_int(0, num_classes - 1));
    }
    Image target_img(width, height, 3), warped_img(width, height, 3);
    for (float& v : target_img.data) v = rng.uniform_f(0.0f, 1.0f);
    for (float& v : warped_img.data) v = rng.uniform_f(0.0f, 1.0f);
    return {onehot_encode(in_labels), std::move(target_img), std::move(warped_img),
            std::move(target)};
}

// Analytic vs central-difference gradients (64-bit), one entry per tensor.
inline GradCheckReport gradient_check(const RefinerParamsT<double>& params,
                                      const RefinerSample& sample, double tolerance = 1e-3,
                                      double step = 1e-4) {
    const RefinerGradientsT<double> analytic = refiner_backward(params, {sample});
    const RefinerGradientsT<double> numeric = numeric_gradients(params, sample, step);
    return compare_gradients(analytic, numeric, tolerance);
}

// ---------------------------------------------------------------------------
// Parameter container: versioned little-endian binary with a config echo.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kRefinerFileVersion = 1;

inline void save_refiner(const RefinerParams& params, const std::filesystem::path& path) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'L', 'P', 'R', 'F'});
    detail::put_u32_le(out, kRefinerFileVersion);
    detail::put_u32_le(out, static_cast<std::uint32_t>(params.num_classes));
    detail::put_u32_le(out, static_cast<std::uint32_t>(params.hidden));
    detail::put_u32_le(out, static_cast<std::uint32_t>(params.init_seed));
    detail::put_u32_le(out, static_cast<std::uint32_t>(params.init_seed >> 32));
    detail::put_u32_le(out, static_cast<std::uint32_t>(params.step_counter));
    detail::put_u32_le(out, static_cast<std::uint32_t>(params.step_counter >> 32));
    detail::put_u32_le(out, static_cast<std::uint32_t>(params.config_echo.size()));
    out.insert(out.end(), params.config_echo.begin(), params.config_echo.end());
    for (const ConvLayer<float>* layer : {&params.conv1, &params.conv2, &params.conv3}) {
        detail::put_u32_le(out, static_cast<std::uint32_t>(layer->out_ch));
        detail::put_u32_le(out, static_cast<std::uint32_t>(layer->in_ch));
        for (float w : layer->w) detail::put_f32_le(out, w);
        for (float b : layer->b) detail::put_f32_le(out, b);
    }
    detail::write_file_bytes(path, out);
}

inline RefinerParams load_refiner(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > bytes.size()) throw FormatError("refiner params: truncated: " + path.string());
    };
    need(8);
    if (std::memcmp(bytes.data(), "LPRF", 4) != 0)
        throw FormatError("refiner params: bad magic: " + path.string());
    pos = 4;
    const std::uint32_t version = detail::get_u32_le(bytes.data() + pos);
    pos += 4;
    if (version != kRefinerFileVersion)
        throw FormatError("refiner params: unsupported version: " + path.string());
    need(24);
    RefinerParams params;
    params.num_classes = static_cast<int>(detail::get_u32_le(bytes.data() + pos));
    params.hidden = static_cast<int>(detail::get_u32_le(bytes.data() + pos + 4));
    params.init_seed = static_cast<std::uint64_t>(detail::get_u32_le(bytes.data() + pos + 8)) |
                       (static_cast<std::uint64_t>(detail::get_u32_le(bytes.data() + pos + 12)) << 32);
    params.step_counter =
        static_cast<std::uint64_t>(detail::get_u32_le(bytes.data() + pos + 16)) |
        (static_cast<std::uint64_t>(detail::get_u32_le(bytes.data() + pos + 20)) << 32);
    pos += 24;
    need(4);
    const std::uint32_t echo_len = detail::get_u32_le(bytes.data() + pos);
    pos += 4;
    need(echo_len);
    params.config_echo.assign(bytes.begin() + pos, bytes.begin() + pos + echo_len);
    pos += echo_len;
    for (ConvLayer<float>* layer : {&params.conv1, &params.conv2, &params.conv3}) {
        need(8);
        const int out_ch = static_cast<int>(detail::get_u32_le(bytes.data() + pos));
        const int in_ch = static_cast<int>(detail::get_u32_le(bytes.data() + pos + 4));
        pos += 8;
        *layer = detail::make_layer<float>(in_ch, out_ch);
        need((layer->w.size() + layer->b.size()) * 4);
        for (float& w : layer->w) {
            w = detail::get_f32_le(bytes.data() + pos);
            pos += 4;
        }
        for (float& b : layer->b) {
            b = detail::get_f32_le(bytes.data() + pos);
            pos += 4;
        }
    }
    if (params.conv1.in_ch != params.num_classes + 6 || params.conv3.out_ch != params.num_classes)
        throw FormatError("refiner params: inconsistent channel counts: " + path.string());
    return params;
}

} // namespace labelprop
