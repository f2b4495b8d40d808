#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "c2f/autodiff.hpp"
#include "c2f/matrix.hpp"

namespace c2f {

struct ModelConfig {
    int d_in = 2048;
    std::array<int, 7> enc_widths{256, 256, 256, 128, 128, 128, 128};  // phi0..phi6 outputs
    int dec_width = 128;
    std::vector<int> tpp_windows{2, 3, 5, 6};
    int num_classes = 48;
    int num_activities = 10;
    int mlp_hidden = 256;

    void validate() const;
    int d0() const { return enc_widths[0]; }
    int bottleneck_channels() const { return enc_widths[6] + static_cast<int>(tpp_windows.size()); }
    // Input width of psi_{i+1}'s double_conv: upsampled decoder + skip phi_{5-i}.
    int psi_in(int i) const {
        return (i == 0 ? bottleneck_channels() : dec_width) + enc_widths[5 - i];
    }
    bool operator==(const ModelConfig&) const = default;
};

// conv(k3) -> BN -> ReLU -> conv(k3) -> BN -> ReLU
struct DoubleConv {
    int cin = 0, cout = 0;
    ag::NodePtr w1, b1, w2, b2;
    ag::BatchNormState bn1, bn2;
};

struct ModelParams {
    ModelConfig cfg;
    DoubleConv phi0;
    std::array<DoubleConv, 6> phi;  // phi[i] is block phi_{i+1}
    ag::NodePtr tpp_w, tpp_b;       // shared k=1 collapse conv, enc_widths[6] -> 1
    ag::NodePtr bott_w, bott_b;     // k=3 conv, bottleneck_channels -> bottleneck_channels
    std::array<DoubleConv, 6> psi;  // psi[i] is block psi_{i+1}
    std::array<ag::NodePtr, 6> head_w, head_b;  // k=1 convs, dec_width -> C
    ag::NodePtr mlp_w1, mlp_b1;     // C -> mlp_hidden
    ag::NodePtr mlp_w2, mlp_b2;     // mlp_hidden -> K

    ModelParams() = default;
    ModelParams(const ModelConfig& cfg, std::uint64_t seed);

    std::vector<std::pair<std::string, ag::NodePtr>> named_parameters() const;
    std::vector<ag::NodePtr> parameters() const;
    std::vector<ag::BatchNormState*> bn_states();

    long long core_param_count() const;   // phi + tpp + psi
    long long head_param_count() const;   // six classification heads
    long long total_param_count() const;  // everything incl. recognition MLP
};

struct Padded {
    Matrix features;  // T_pad x d, trailing frames replicate the last frame
    Mask mask;        // 1 for the original T frames
};

// T_pad = smallest multiple of 64 that is >= max(T, 64).
Padded pad_to_multiple(const Matrix& f);
int padded_length(int t);

// Halve a mask: pooled frame valid iff any source frame in its window is.
Mask pool_mask(const Mask& m, int window);

struct ForwardOutputs {
    // Index [video][level]: enc[v][0..6] are phi0..phi6 outputs.
    std::vector<std::array<ag::NodePtr, 7>> enc;
    std::vector<ag::NodePtr> bottleneck;              // Gamma output, T/64 x (enc6 + #windows)
    std::vector<std::array<ag::NodePtr, 6>> dec;      // decoder features, 128 channels
    std::vector<std::array<ag::NodePtr, 6>> probs;    // p^(1..6), softmaxed
    std::vector<std::array<Mask, 7>> level_masks;     // mask at T/2^i
};

// All feature matrices must share one padded length (multiple of 64).
// BatchNorm statistics pool the valid frames of every batch member.
ForwardOutputs forward_batch(ModelParams& params, const std::vector<Matrix>& features,
                             const std::vector<Mask>& masks, bool training);

// softmax(MLP(max over valid t of log p_t)) -> 1 x K.
ag::NodePtr recognition_forward(const ModelParams& params, const ag::NodePtr& p, const Mask& mask);

void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace c2f
