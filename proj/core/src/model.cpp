#include "kpda/model.hpp"

#include <cstdint>
#include <sstream>
#include <stdexcept>

namespace kpda {

namespace nn = torch::nn;

std::string to_string(Backbone b) { return b == Backbone::small ? "small" : "resnet50"; }
std::string to_string(DcInput d) { return d == DcInput::features ? "features" : "multiscale"; }

Backbone backbone_from_string(const std::string& s) {
    if (s == "small") return Backbone::small;
    if (s == "resnet50") return Backbone::resnet50;
    throw std::invalid_argument("unknown backbone '" + s + "' (expected small|resnet50)");
}

DcInput dc_input_from_string(const std::string& s) {
    if (s == "features") return DcInput::features;
    if (s == "multiscale") return DcInput::multiscale;
    throw std::invalid_argument("unknown dc_input '" + s + "' (expected features|multiscale)");
}

int ModelConfig::encoder_stride() const {
    if (backbone == Backbone::resnet50) return 32;
    return stem_stride << encoder_widths.size();
}

int ModelConfig::feature_channels() const {
    if (backbone == Backbone::resnet50) return 2048;
    return encoder_widths.empty() ? 0 : encoder_widths.back();
}

void ModelConfig::validate() const {
    if (joints < 1) throw std::invalid_argument("model: need at least one joint");
    if (backbone == Backbone::small) {
        if (encoder_widths.empty()) throw std::invalid_argument("model: encoder_widths is empty");
        if (stem_stride != 1 && stem_stride != 2) throw std::invalid_argument("model: stem_stride must be 1 or 2");
    }
    if (input_size <= 0 || input_size % encoder_stride() != 0) {
        throw std::invalid_argument("model: input_size " + std::to_string(input_size) +
                                    " is not a multiple of the backbone stride " +
                                    std::to_string(encoder_stride()));
    }
    if (decoder_width < 1 || refine_width < 1) throw std::invalid_argument("model: widths must be positive");
    if (dc_channels.size() != 6 || dc_channels.back() != 1) {
        throw std::invalid_argument("model: dc_channels needs six entries ending in 1");
    }
}

std::string ModelConfig::fingerprint() const {
    std::ostringstream s;
    s << "joints=" << joints << ";input=" << input_size << ";backbone=" << to_string(backbone)
      << ";enc=";
    for (int w : encoder_widths) s << w << ",";
    s << ";stem=" << stem_stride << ";dec=" << decoder_width << ";refine=" << refine_width << ";dc=";
    for (int c : dc_channels) s << c << ",";
    s << ";dc_input=" << to_string(dc_input) << ";slope=" << leaky_slope;
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s.str()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream hex;
    hex << std::hex << h;
    return hex.str();
}

namespace {

void add_conv_bn_relu(nn::Sequential& seq, int in, int out, int kernel, int stride) {
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(false)));
    seq->push_back(nn::BatchNorm2d(out));
    seq->push_back(nn::ReLU(true));
}

// ResNet bottleneck: 1x1 reduce, 3x3, 1x1 expand, residual.
class BottleneckImpl : public nn::Module {
public:
    BottleneckImpl(int in, int mid, int out, int stride) {
        body_ = register_module(
            "body", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, mid, 1).bias(false)), nn::BatchNorm2d(mid),
                                   nn::ReLU(true),
                                   nn::Conv2d(nn::Conv2dOptions(mid, mid, 3).stride(stride).padding(1).bias(false)),
                                   nn::BatchNorm2d(mid), nn::ReLU(true),
                                   nn::Conv2d(nn::Conv2dOptions(mid, out, 1).bias(false)), nn::BatchNorm2d(out)));
        if (in != out || stride != 1) {
            shortcut_ = register_module(
                "shortcut", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                                           nn::BatchNorm2d(out)));
        }
    }

    torch::Tensor forward(const torch::Tensor& x) {
        auto identity = shortcut_ ? shortcut_->forward(x) : x;
        return torch::relu(body_->forward(x) + identity);
    }

private:
    nn::Sequential body_{nullptr};
    nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(Bottleneck);

nn::Sequential make_small_encoder(const ModelConfig& cfg) {
    nn::Sequential seq;
    const int stem = cfg.encoder_widths.front();
    add_conv_bn_relu(seq, 3, stem, 3, cfg.stem_stride);
    int in = stem;
    for (int w : cfg.encoder_widths) {
        add_conv_bn_relu(seq, in, w, 3, 2);
        add_conv_bn_relu(seq, w, w, 3, 1);
        in = w;
    }
    return seq;
}

nn::Sequential make_resnet50() {
    nn::Sequential seq;
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
    seq->push_back(nn::BatchNorm2d(64));
    seq->push_back(nn::ReLU(true));
    seq->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
    const int blocks[4] = {3, 4, 6, 3};
    const int mids[4] = {64, 128, 256, 512};
    int in = 64;
    for (int layer = 0; layer < 4; ++layer) {
        for (int b = 0; b < blocks[layer]; ++b) {
            const int stride = (b == 0 && layer > 0) ? 2 : 1;
            seq->push_back(Bottleneck(in, mids[layer], mids[layer] * 4, stride));
            in = mids[layer] * 4;
        }
    }
    return seq;
}

} // namespace

PoseNetImpl::PoseNetImpl(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    extractor_ = register_module(
        "extractor", cfg_.backbone == Backbone::small ? make_small_encoder(cfg_) : make_resnet50());
    const int w = cfg_.decoder_width;
    reduce_ = nn::Sequential();
    add_conv_bn_relu(reduce_, cfg_.feature_channels(), w, 1, 1);
    register_module("reduce", reduce_);
    deconvs_ = register_module("deconvs", nn::ModuleList());
    for (int i = 0; i < 3; ++i) {
        deconvs_->push_back(nn::Sequential(
            nn::ConvTranspose2d(nn::ConvTranspose2dOptions(w, w, 4).stride(2).padding(1).bias(false)),
            nn::BatchNorm2d(w), nn::ReLU(true)));
    }
    to_heatmaps_ = register_module("to_heatmaps", nn::Conv2d(nn::Conv2dOptions(w, cfg_.joints, 1)));
    const int ms = cfg_.multiscale_channels();
    refine_bottleneck_ = register_module("refine_bottleneck", nn::Sequential(Bottleneck(ms, cfg_.refine_width, ms, 1)));
    refine_out_ = register_module("refine_out", nn::Conv2d(nn::Conv2dOptions(ms, cfg_.joints, 3).padding(1)));

    // usual heatmap-head init: small normal weights on deconvs and output convs, zero bias
    torch::NoGradGuard no_grad;
    for (const auto& stage : *deconvs_) {
        for (auto& p : stage->named_parameters()) {
            if (p.value().dim() == 4) nn::init::normal_(p.value(), 0.0, 0.001);
        }
    }
    for (auto* conv : {&to_heatmaps_, &refine_out_}) {
        nn::init::normal_((*conv)->weight, 0.0, 0.001);
        nn::init::zeros_((*conv)->bias);
    }
}

ForwardOutputs PoseNetImpl::forward(const torch::Tensor& images) {
    if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != cfg_.input_size ||
        images.size(3) != cfg_.input_size) {
        throw std::invalid_argument("PoseNet: expected images of shape [B, 3, " + std::to_string(cfg_.input_size) +
                                    ", " + std::to_string(cfg_.input_size) + "]");
    }
    ForwardOutputs out;
    out.features = extractor_->forward(images);
    auto x = reduce_->forward(out.features);
    const int64_t ho = cfg_.output_size();
    std::vector<torch::Tensor> stages;
    for (const auto& stage : *deconvs_) {
        x = stage->as<nn::Sequential>()->forward(x);
        if (x.size(2) == ho) {
            stages.push_back(x);
        } else {
            namespace F = nn::functional;
            stages.push_back(F::interpolate(x, F::InterpolateFuncOptions()
                                                   .size(std::vector<int64_t>{ho, ho})
                                                   .mode(torch::kBilinear)
                                                   .align_corners(false)));
        }
    }
    out.heatmaps = to_heatmaps_->forward(x);
    out.multiscale = torch::cat(stages, 1);
    out.refined = refine_out_->forward(refine_bottleneck_->forward(out.multiscale));
    return out;
}

DomainClassifierImpl::DomainClassifierImpl(int in_channels, int input_size,
                                           const std::vector<int>& channels, double leaky_slope)
    : in_channels_(in_channels), input_size_(input_size) {
    if (channels.size() != 6 || channels.back() != 1) {
        throw std::invalid_argument("domain classifier: needs six channel entries ending in 1");
    }
    // Five halvings must leave at least the 2x2 window of the last layer.
    if (input_size % 32 != 0 || input_size / 32 < 2) {
        throw std::invalid_argument("domain classifier: input size " + std::to_string(input_size) +
                                    " incompatible with five stride-2 reductions and a 2x2 head "
                                    "(need a multiple of 32, at least 64)");
    }
    body_ = nn::Sequential();
    int in = in_channels;
    for (int i = 0; i < 5; ++i) {
        body_->push_back(nn::Conv2d(nn::Conv2dOptions(in, channels[i], 4).stride(2).padding(1)));
        body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(leaky_slope)));
        in = channels[i];
    }
    register_module("body", body_);
    last_ = register_module("last", nn::Conv2d(nn::Conv2dOptions(in, 1, 2).stride(1)));
}

torch::Tensor DomainClassifierImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != in_channels_ || x.size(2) != input_size_ || x.size(3) != input_size_) {
        throw std::invalid_argument("domain classifier: unexpected input shape");
    }
    return last_->forward(body_->forward(x)).mean({1, 2, 3});
}

namespace {

class GradientReversalFn : public torch::autograd::Function<GradientReversalFn> {
public:
    static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& x, double lambda) {
        ctx->saved_data["lambda"] = lambda;
        return x.clone();
    }

    static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                   torch::autograd::variable_list grad) {
        const double lambda = ctx->saved_data["lambda"].toDouble();
        return {grad[0] * -lambda, torch::Tensor()};
    }
};

} // namespace

torch::Tensor gradient_reversal(const torch::Tensor& x, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("gradient_reversal: lambda must be non-negative");
    return GradientReversalFn::apply(x, lambda);
}

StudentNetImpl::StudentNetImpl(const ModelConfig& c) : cfg(c) {
    pose = register_module("pose", PoseNet(cfg));
    const bool ms = cfg.dc_input == DcInput::multiscale;
    classifier = register_module(
        "classifier", DomainClassifier(ms ? cfg.multiscale_channels() : cfg.feature_channels(),
                                       ms ? cfg.output_size() : cfg.feature_size(), cfg.dc_channels,
                                       cfg.leaky_slope));
}

torch::Tensor StudentNetImpl::classify(const ForwardOutputs& out, double lambda_adv) {
    const auto& input = cfg.dc_input == DcInput::multiscale ? out.multiscale : out.features;
    return classifier->forward(gradient_reversal(input, lambda_adv));
}

Teacher::Teacher(const ModelConfig& cfg) : net_(cfg) {
    for (auto& p : net_->parameters()) p.set_requires_grad(false);
    net_->eval();
}

void Teacher::copy_from(const PoseNet& student) { ema_update(net_, student, 0.0); }

torch::Tensor Teacher::forward(const torch::Tensor& images) {
    torch::NoGradGuard no_grad;
    net_->eval();
    return net_->forward(images).refined;
}

void ema_update(PoseNet& teacher, const PoseNet& student, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("ema_update: alpha outside [0, 1]");
    torch::NoGradGuard no_grad;
    auto tp = teacher->named_parameters();
    auto sp = student->named_parameters();
    auto tb = teacher->named_buffers();
    auto sb = student->named_buffers();
    if (tp.size() != sp.size() || tb.size() != sb.size()) {
        throw std::invalid_argument("ema_update: teacher and student differ in structure");
    }
    auto blend = [alpha](torch::Tensor& t, const torch::Tensor& s) {
        if (t.sizes() != s.sizes()) throw std::invalid_argument("ema_update: parameter shape mismatch");
        if (!t.is_floating_point()) {
            t.copy_(s);
        } else if (alpha == 0.0) {
            t.copy_(s);
        } else if (alpha != 1.0) {
            t.mul_(alpha).add_(s, 1.0 - alpha);
        }
    };
    for (std::size_t i = 0; i < tp.size(); ++i) blend(tp[i].value(), sp[i].value());
    for (std::size_t i = 0; i < tb.size(); ++i) blend(tb[i].value(), sb[i].value());
}

std::size_t parameter_count(const torch::nn::Module& m) {
    std::size_t n = 0;
    for (const auto& p : m.parameters()) n += static_cast<std::size_t>(p.numel());
    return n;
}

} // namespace kpda
