#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "spav/autodiff.hpp"
#include "spav/checkpoint.hpp"
#include "spav/rng.hpp"

namespace spav {

enum class Activation { None, Softplus, Sigmoid };

struct MlpSpec {
    std::int64_t in_dim = 0;
    std::int64_t out_dim = 0;
    int depth = 1;   // number of affine layers
    int width = 64;  // hidden width
    std::set<int> skip_layers;  // layers whose input is concat(hidden, net input)
    Activation activation = Activation::Softplus;
    Activation output_activation = Activation::None;

    void validate() const;
};

// Affine stack with optional input skip connections.
struct Mlp {
    MlpSpec spec;
    std::vector<Tensor> weights;  // [in, out] per layer
    std::vector<Tensor> biases;   // [1, out]

    // Xavier-uniform weights, zero biases; the final layer is scaled by
    // final_layer_scale (1.0 keeps plain Xavier).
    static Mlp init(const MlpSpec& spec, Rng& rng, double final_layer_scale = 1.0);

    Tape::NodeId forward(Tape& tape, Tape::NodeId input) const;
    Tape::NodeId forward(Tape& tape, Tape::NodeId input, std::vector<Tape::NodeId>& leaves) const;

    // Inference without a tape.
    Tensor forward_plain(const Tensor& input) const;

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    void zero_grad();
};

// concat(x, sin(2^l pi x), cos(2^l pi x)) for l in [0, levels).
// Output dimension: cols * (1 + 2*levels).
std::vector<double> positional_encoding(std::span<const double> x, int levels);
Tape::NodeId positional_encoding(Tape& tape, Tape::NodeId x, int levels);
std::int64_t positional_encoding_dim(std::int64_t in_dim, int levels);

// softmax(scale * logits), max-stabilized.
std::vector<double> scaled_softmax(std::span<const double> logits, double scale);

// Checkpoint sections "<prefix>spec", "<prefix>w<l>", "<prefix>b<l>".
void save_mlp(Checkpoint& ck, const std::string& prefix, const Mlp& mlp);
Mlp load_mlp(const Checkpoint& ck, const std::string& prefix);

// Adam with bias correction. One state per parameter tensor.
struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step_count = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;

    explicit AdamState(double lr = 1e-3) : learning_rate(lr) {}

    // Applies one update from each tensor's grad buffer; increments the step.
    void step(std::span<Tensor* const> params);
};

// Color autoencoder c -> D(E(c)); the decoder output is a sigmoid.
struct Autoencoder {
    Mlp encoder;  // 3 -> latent
    Mlp decoder;  // latent -> 3, sigmoid output

    static Autoencoder init(int latent_dim, int encoder_depth, int decoder_depth, int width, Rng& rng);

    // One row per color.
    Tensor encode(const Tensor& colors) const { return encoder.forward_plain(colors); }
    Tensor decode(const Tensor& latents) const { return decoder.forward_plain(latents); }
    Tensor forward(const Tensor& colors) const { return decode(encode(colors)); }
};

}  // namespace spav
