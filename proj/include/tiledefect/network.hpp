#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tiledefect/rng.hpp"

namespace tiledefect::nn {

/// 3x3 same-padding convolution + ReLU, optionally followed by 2x2 max pooling.
struct ConvLayerSpec {
    int out_channels = 8;
    bool pool = true;
};

struct Architecture {
    int input_size = 32;  // square input side
    int in_channels = 1;
    std::vector<ConvLayerSpec> convs;

    int feature_channels() const { return convs.empty() ? in_channels : convs.back().out_channels; }
};

/// Inverted-dropout keep mask for the pooled feature vector of one sample:
/// every entry is 0 or 1/(1-rate).
using DropoutMask = std::vector<double>;

struct BatchStats {
    double loss = 0.0;            // mean binary cross-entropy
    std::vector<double> probs;    // one per sample
};

/// Convolutional feature extractor -> global average pooling -> dropout ->
/// single affine unit -> sigmoid.
///
/// All parameters live in one flat vector: per conv layer the weights
/// [out][in][3][3] followed by the biases, then the head weights and the
/// head bias. The head is the tail of the vector starting at head_offset().
class Network {
public:
    explicit Network(Architecture arch);

    const Architecture& architecture() const { return arch_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::size_t input_length() const;
    std::size_t head_offset() const { return head_offset_; }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    /// He-normal conv weights, Glorot-uniform head weights, zero biases.
    void initialize(Rng& rng);
    void zero_head();

    /// Pre-sigmoid output for one input, dropout disabled.
    double logit(std::span<const double> input) const;
    double predict(std::span<const double> input) const;

    /// Pooled feature vector (before dropout) for one input.
    std::vector<double> features(std::span<const double> input) const;

    /// Mean BCE over the batch and its gradient with respect to every
    /// parameter, written (not accumulated) into grad. masks, when given,
    /// holds one dropout mask per sample.
    BatchStats loss_and_gradient(std::span<const double* const> inputs, std::span<const int> labels,
                                 const std::vector<DropoutMask>* masks, std::span<double> grad) const;

    /// Same loss without the backward pass.
    BatchStats loss(std::span<const double* const> inputs, std::span<const int> labels,
                    const std::vector<DropoutMask>* masks = nullptr) const;

private:
    struct LayerShape {
        int in_c, out_c, h, w;  // h, w: spatial size of the conv input and output
        int out_h, out_w;       // after optional pooling
        bool pool;
        std::size_t weight_offset, bias_offset;
    };
    struct Workspace;

    void forward(std::span<const double> input, Workspace& ws) const;
    double head_logit(const std::vector<double>& feat, const DropoutMask* mask) const;

    Architecture arch_;
    std::vector<LayerShape> layers_;
    std::vector<double> params_;
    std::size_t head_offset_ = 0;
};

/// Numerically safe clamp used for the loss: predictions are kept inside
/// [eps, 1 - eps] before taking logs.
inline constexpr double kProbEpsilon = 1e-7;
double sigmoid(double z);
double binary_cross_entropy(double p, int label);

}  // namespace tiledefect::nn
