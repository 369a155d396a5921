#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

namespace kpda {

enum class Backbone { small, resnet50 };
enum class DcInput { features, multiscale };

std::string to_string(Backbone b);
std::string to_string(DcInput d);
Backbone backbone_from_string(const std::string& s);
DcInput dc_input_from_string(const std::string& s);

/// Network shape. The pose head is fixed: 1x1 conv, three stride-2 4x4 deconvolutions,
/// 1x1 conv to K channels, so the heatmap grid is 8x the backbone feature grid.
struct ModelConfig {
    int joints = 18;
    int input_size = 256;
    Backbone backbone = Backbone::small;
    std::vector<int> encoder_widths{24, 48, 96, 160};  // small backbone, one stride-2 stage each
    int stem_stride = 2;
    int decoder_width = 256;
    int refine_width = 64;  // inner width of the refinement bottleneck
    std::vector<int> dc_channels{64, 128, 256, 512, 1024, 1};
    DcInput dc_input = DcInput::multiscale;
    double leaky_slope = 0.2;

    int encoder_stride() const;
    int feature_size() const { return input_size / encoder_stride(); }
    int feature_channels() const;
    int output_size() const { return feature_size() * 8; }
    int multiscale_channels() const { return 3 * decoder_width; }

    /// Throws std::invalid_argument for an inconsistent shape.
    void validate() const;
    /// Stable hash of every architecture field; checkpoints record it.
    std::string fingerprint() const;
};

struct ForwardOutputs {
    torch::Tensor features;    // backbone output F
    torch::Tensor multiscale;  // decoder stages upsampled to the heatmap grid, concatenated
    torch::Tensor heatmaps;    // pose-head output, [B, K, h_o, w_o]
    torch::Tensor refined;     // refinement-block output, [B, K, h_o, w_o]
};

/// Feature extractor + pose head + refinement block.
class PoseNetImpl : public torch::nn::Module {
public:
    explicit PoseNetImpl(const ModelConfig& cfg);
    ForwardOutputs forward(const torch::Tensor& images);
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    torch::nn::Sequential extractor_{nullptr};
    torch::nn::Sequential reduce_{nullptr};
    torch::nn::ModuleList deconvs_{nullptr};
    torch::nn::Conv2d to_heatmaps_{nullptr};
    torch::nn::Sequential refine_bottleneck_{nullptr};
    torch::nn::Conv2d refine_out_{nullptr};
};
TORCH_MODULE(PoseNet);

/// Six fully-convolutional layers: five 4x4 stride-2 convolutions and a final 2x2
/// stride-1 convolution, leaky ReLU between them. The logit map is averaged to one
/// logit per image; sigmoid(logit) is the probability of "source".
class DomainClassifierImpl : public torch::nn::Module {
public:
    /// Throws std::invalid_argument if `input_size` does not survive the reductions.
    DomainClassifierImpl(int in_channels, int input_size, const std::vector<int>& channels,
                         double leaky_slope);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Conv2d final_layer() const { return last_; }

private:
    int in_channels_;
    int input_size_;
    torch::nn::Sequential body_{nullptr};
    torch::nn::Conv2d last_{nullptr};
};
TORCH_MODULE(DomainClassifier);

/// Identity forward; backward multiplies the incoming gradient by -lambda.
torch::Tensor gradient_reversal(const torch::Tensor& x, double lambda);

/// The trained network: pose network plus domain classifier.
class StudentNetImpl : public torch::nn::Module {
public:
    explicit StudentNetImpl(const ModelConfig& cfg);
    ForwardOutputs forward(const torch::Tensor& images) { return pose->forward(images); }
    /// Domain logits for the classifier input selected by `dc_input`.
    torch::Tensor classify(const ForwardOutputs& out, double lambda_adv);

    PoseNet pose{nullptr};
    DomainClassifier classifier{nullptr};
    ModelConfig cfg;
};
TORCH_MODULE(StudentNet);

/// Pose network whose parameters never require gradients and only change through
/// `ema_update`. Runs in eval mode.
class Teacher {
public:
    explicit Teacher(const ModelConfig& cfg);
    /// Copies every parameter and buffer of `student`.
    void copy_from(const PoseNet& student);
    /// Refined heatmaps, computed without recording a graph.
    torch::Tensor forward(const torch::Tensor& images);
    PoseNet& net() { return net_; }
    const PoseNet& net() const { return net_; }

private:
    PoseNet net_;
};

/// theta' <- alpha * theta' + (1 - alpha) * theta, for parameters and floating-point
/// buffers; integer buffers are copied. Throws std::invalid_argument on shape mismatch
/// or alpha outside [0, 1].
void ema_update(PoseNet& teacher, const PoseNet& student, double alpha);

std::size_t parameter_count(const torch::nn::Module& m);

} // namespace kpda
