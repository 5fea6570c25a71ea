#include "tiledefect/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tiledefect::nn {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double binary_cross_entropy(double p, int label) {
    p = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
    return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

struct Network::Workspace {
    std::vector<std::vector<double>> padded;   // conv input with a 1-px zero border
    std::vector<std::vector<double>> act;      // post-ReLU conv output
    std::vector<std::vector<double>> pooled;   // pooled output (pool layers only)
    std::vector<std::vector<int>> argmax;      // index into act per pooled cell
    std::vector<double> feat;

    explicit Workspace(const std::vector<LayerShape>& layers) {
        for (const auto& l : layers) {
            padded.emplace_back(static_cast<std::size_t>(l.in_c) * (l.h + 2) * (l.w + 2), 0.0);
            act.emplace_back(static_cast<std::size_t>(l.out_c) * l.h * l.w, 0.0);
            const auto pooled_size = l.pool ? static_cast<std::size_t>(l.out_c) * l.out_h * l.out_w : 0;
            pooled.emplace_back(pooled_size, 0.0);
            argmax.emplace_back(pooled_size, 0);
        }
    }

    const std::vector<double>& output(std::size_t l, bool pool) const { return pool ? pooled[l] : act[l]; }
};

Network::Network(Architecture arch) : arch_(std::move(arch)) {
    if (arch_.input_size < 1 || arch_.in_channels < 1) throw std::invalid_argument("bad network input shape");
    int c = arch_.in_channels;
    int s = arch_.input_size;
    std::size_t offset = 0;
    for (const auto& spec : arch_.convs) {
        if (spec.out_channels < 1) throw std::invalid_argument("conv layer needs at least one channel");
        LayerShape l{};
        l.in_c = c;
        l.out_c = spec.out_channels;
        l.h = l.w = s;
        l.pool = spec.pool && s >= 2;
        l.out_h = l.out_w = l.pool ? s / 2 : s;
        l.weight_offset = offset;
        offset += static_cast<std::size_t>(l.out_c) * l.in_c * 9;
        l.bias_offset = offset;
        offset += static_cast<std::size_t>(l.out_c);
        layers_.push_back(l);
        c = l.out_c;
        s = l.out_h;
    }
    head_offset_ = offset;
    params_.assign(offset + static_cast<std::size_t>(c) + 1, 0.0);
}

std::size_t Network::input_length() const {
    return static_cast<std::size_t>(arch_.in_channels) * arch_.input_size * arch_.input_size;
}

void Network::initialize(Rng& rng) {
    std::fill(params_.begin(), params_.end(), 0.0);
    for (const auto& l : layers_) {
        const double stddev = std::sqrt(2.0 / (l.in_c * 9.0));
        const std::size_t n = static_cast<std::size_t>(l.out_c) * l.in_c * 9;
        for (std::size_t i = 0; i < n; ++i) params_[l.weight_offset + i] = stddev * rng.normal();
    }
    const int c = arch_.feature_channels();
    const double limit = std::sqrt(6.0 / (c + 1.0));
    for (int i = 0; i < c; ++i) params_[head_offset_ + i] = rng.uniform(-limit, limit);
    params_.back() = 0.0;
}

void Network::zero_head() { std::fill(params_.begin() + static_cast<std::ptrdiff_t>(head_offset_), params_.end(), 0.0); }

void Network::forward(std::span<const double> input, Workspace& ws) const {
    if (input.size() != input_length()) throw std::invalid_argument("network input has the wrong length");
    const double* src = input.data();
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const auto& l = layers_[li];
        const int hp = l.h + 2;
        const int wp = l.w + 2;
        auto& pad = ws.padded[li];
        for (int c = 0; c < l.in_c; ++c) {
            for (int y = 0; y < l.h; ++y) {
                std::copy_n(src + (static_cast<std::size_t>(c) * l.h + y) * l.w, l.w,
                            pad.begin() + (static_cast<std::ptrdiff_t>(c) * hp + y + 1) * wp + 1);
            }
        }
        const double* weights = params_.data() + l.weight_offset;
        const double* bias = params_.data() + l.bias_offset;
        auto& act = ws.act[li];
        const std::size_t plane = static_cast<std::size_t>(l.h) * l.w;
        for (int oc = 0; oc < l.out_c; ++oc) {
            double* out = act.data() + oc * plane;
            std::fill(out, out + plane, bias[oc]);
            for (int ic = 0; ic < l.in_c; ++ic) {
                const double* in_plane = pad.data() + static_cast<std::size_t>(ic) * hp * wp;
                const double* k = weights + (static_cast<std::size_t>(oc) * l.in_c + ic) * 9;
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const double wv = k[ky * 3 + kx];
                        for (int y = 0; y < l.h; ++y) {
                            const double* s = in_plane + (y + ky) * wp + kx;
                            double* o = out + y * l.w;
                            for (int x = 0; x < l.w; ++x) o[x] += wv * s[x];
                        }
                    }
                }
            }
            for (std::size_t i = 0; i < plane; ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
        }
        if (l.pool) {
            auto& pooled = ws.pooled[li];
            auto& arg = ws.argmax[li];
            for (int c = 0; c < l.out_c; ++c) {
                const double* a = act.data() + c * plane;
                for (int y = 0; y < l.out_h; ++y) {
                    for (int x = 0; x < l.out_w; ++x) {
                        int best = (2 * y) * l.w + 2 * x;
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const int idx = (2 * y + dy) * l.w + 2 * x + dx;
                                if (a[idx] > a[best]) best = idx;
                            }
                        }
                        const std::size_t o = (static_cast<std::size_t>(c) * l.out_h + y) * l.out_w + x;
                        pooled[o] = a[best];
                        arg[o] = best;
                    }
                }
            }
        }
        src = ws.output(li, l.pool).data();
    }

    // Global average pooling.
    const int c = arch_.feature_channels();
    const int side = layers_.empty() ? arch_.input_size : layers_.back().out_h;
    const std::size_t plane = static_cast<std::size_t>(side) * side;
    ws.feat.assign(static_cast<std::size_t>(c), 0.0);
    for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) sum += src[ch * plane + i];
        ws.feat[ch] = sum / static_cast<double>(plane);
    }
}

double Network::head_logit(const std::vector<double>& feat, const DropoutMask* mask) const {
    const double* w = params_.data() + head_offset_;
    double z = params_.back();
    for (std::size_t i = 0; i < feat.size(); ++i) z += w[i] * feat[i] * (mask ? (*mask)[i] : 1.0);
    return z;
}

double Network::logit(std::span<const double> input) const {
    Workspace ws(layers_);
    forward(input, ws);
    return head_logit(ws.feat, nullptr);
}

double Network::predict(std::span<const double> input) const { return sigmoid(logit(input)); }

std::vector<double> Network::features(std::span<const double> input) const {
    Workspace ws(layers_);
    forward(input, ws);
    return ws.feat;
}

BatchStats Network::loss(std::span<const double* const> inputs, std::span<const int> labels,
                         const std::vector<DropoutMask>* masks) const {
    BatchStats stats;
    Workspace ws(layers_);
    const std::size_t n = input_length();
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        forward({inputs[s], n}, ws);
        const double p = sigmoid(head_logit(ws.feat, masks ? &(*masks)[s] : nullptr));
        stats.probs.push_back(p);
        stats.loss += binary_cross_entropy(p, labels[s]);
    }
    if (!inputs.empty()) stats.loss /= static_cast<double>(inputs.size());
    return stats;
}

BatchStats Network::loss_and_gradient(std::span<const double* const> inputs, std::span<const int> labels,
                                      const std::vector<DropoutMask>* masks, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer has the wrong size");
    if (labels.size() != inputs.size()) throw std::invalid_argument("labels and inputs differ in length");
    std::fill(grad.begin(), grad.end(), 0.0);
    BatchStats stats;
    if (inputs.empty()) return stats;

    Workspace ws(layers_);
    const std::size_t n = input_length();
    const double inv_batch = 1.0 / static_cast<double>(inputs.size());
    const int feat_c = arch_.feature_channels();
    const double* head_w = params_.data() + head_offset_;

    // Gradient buffers w.r.t. each layer's output (post-pool) and act.
    std::vector<std::vector<double>> d_out(layers_.size());
    std::vector<std::vector<double>> d_act(layers_.size());
    std::vector<std::vector<double>> d_pad(layers_.size());
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const auto& l = layers_[li];
        d_out[li].resize(static_cast<std::size_t>(l.out_c) * l.out_h * l.out_w);
        d_act[li].resize(static_cast<std::size_t>(l.out_c) * l.h * l.w);
        d_pad[li].resize(static_cast<std::size_t>(l.in_c) * (l.h + 2) * (l.w + 2));
    }

    for (std::size_t s = 0; s < inputs.size(); ++s) {
        forward({inputs[s], n}, ws);
        const DropoutMask* mask = masks ? &(*masks)[s] : nullptr;
        const double p = sigmoid(head_logit(ws.feat, mask));
        stats.probs.push_back(p);
        stats.loss += binary_cross_entropy(p, labels[s]);

        // d(BCE)/d(logit) = p - y
        const double dz = (p - labels[s]) * inv_batch;
        for (int i = 0; i < feat_c; ++i) {
            const double m = mask ? (*mask)[i] : 1.0;
            grad[head_offset_ + i] += dz * ws.feat[i] * m;
        }
        grad.back() += dz;
        if (layers_.empty()) continue;

        {
            const auto& last = layers_.back();
            const std::size_t plane = static_cast<std::size_t>(last.out_h) * last.out_w;
            auto& d = d_out.back();
            for (int c = 0; c < feat_c; ++c) {
                const double m = mask ? (*mask)[c] : 1.0;
                const double g = dz * head_w[c] * m / static_cast<double>(plane);
                std::fill(d.begin() + c * plane, d.begin() + (c + 1) * plane, g);
            }
        }

        for (std::size_t li = layers_.size(); li-- > 0;) {
            const auto& l = layers_[li];
            const std::size_t plane = static_cast<std::size_t>(l.h) * l.w;
            auto& da = d_act[li];
            if (l.pool) {
                std::fill(da.begin(), da.end(), 0.0);
                const auto& arg = ws.argmax[li];
                const std::size_t pplane = static_cast<std::size_t>(l.out_h) * l.out_w;
                for (int c = 0; c < l.out_c; ++c) {
                    for (std::size_t i = 0; i < pplane; ++i) {
                        da[c * plane + arg[c * pplane + i]] += d_out[li][c * pplane + i];
                    }
                }
            } else {
                da = d_out[li];
            }
            const auto& act = ws.act[li];
            for (std::size_t i = 0; i < da.size(); ++i) {
                if (act[i] <= 0.0) da[i] = 0.0;
            }

            const int hp = l.h + 2;
            const int wp = l.w + 2;
            const auto& pad = ws.padded[li];
            const double* weights = params_.data() + l.weight_offset;
            double* gw = grad.data() + l.weight_offset;
            double* gb = grad.data() + l.bias_offset;
            const bool need_input_grad = li > 0;
            auto& dp = d_pad[li];
            if (need_input_grad) std::fill(dp.begin(), dp.end(), 0.0);

            for (int oc = 0; oc < l.out_c; ++oc) {
                const double* g = da.data() + oc * plane;
                double bsum = 0.0;
                for (std::size_t i = 0; i < plane; ++i) bsum += g[i];
                gb[oc] += bsum;
                for (int ic = 0; ic < l.in_c; ++ic) {
                    const double* in_plane = pad.data() + static_cast<std::size_t>(ic) * hp * wp;
                    double* dp_plane = dp.data() + static_cast<std::size_t>(ic) * hp * wp;
                    const std::size_t kbase = (static_cast<std::size_t>(oc) * l.in_c + ic) * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            const double wv = weights[kbase + ky * 3 + kx];
                            double acc = 0.0;
                            for (int y = 0; y < l.h; ++y) {
                                const double* sp = in_plane + (y + ky) * wp + kx;
                                const double* gr = g + y * l.w;
                                for (int x = 0; x < l.w; ++x) acc += gr[x] * sp[x];
                                if (need_input_grad) {
                                    double* dst = dp_plane + (y + ky) * wp + kx;
                                    for (int x = 0; x < l.w; ++x) dst[x] += wv * gr[x];
                                }
                            }
                            gw[kbase + ky * 3 + kx] += acc;
                        }
                    }
                }
            }
            if (need_input_grad) {
                auto& prev = d_out[li - 1];
                for (int c = 0; c < l.in_c; ++c) {
                    for (int y = 0; y < l.h; ++y) {
                        std::copy_n(dp.begin() + (static_cast<std::ptrdiff_t>(c) * hp + y + 1) * wp + 1, l.w,
                                    prev.begin() + (static_cast<std::ptrdiff_t>(c) * l.h + y) * l.w);
                    }
                }
            }
        }
    }
    stats.loss *= inv_batch;
    return stats;
}

}  // namespace tiledefect::nn
