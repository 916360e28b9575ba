#include "spav/nn.hpp"

#include <cmath>

#include <json.hpp>

namespace spav {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;

double stable_softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void apply_activation_plain(Tensor& t, Activation act) {
    switch (act) {
        case Activation::None: break;
        case Activation::Softplus:
            for (auto& v : t.values) v = stable_softplus(v);
            break;
        case Activation::Sigmoid:
            for (auto& v : t.values) v = stable_sigmoid(v);
            break;
    }
}

Tape::NodeId apply_activation(Tape& tape, Tape::NodeId x, Activation act) {
    switch (act) {
        case Activation::None: return x;
        case Activation::Softplus: return tape.softplus(x);
        case Activation::Sigmoid: return tape.sigmoid(x);
    }
    return x;
}

}  // namespace

void MlpSpec::validate() const {
    if (depth < 1) throw ShapeMismatch("mlp: depth must be >= 1");
    if (in_dim < 1 || out_dim < 1) throw ShapeMismatch("mlp: dimensions must be >= 1");
    for (int s : skip_layers)
        if (s <= 0 || s >= depth) throw ShapeMismatch("mlp: skip layer index out of range");
}

Mlp Mlp::init(const MlpSpec& spec, Rng& rng, double final_layer_scale) {
    spec.validate();
    Mlp mlp;
    mlp.spec = spec;
    for (int l = 0; l < spec.depth; ++l) {
        std::int64_t in = l == 0 ? spec.in_dim : spec.width;
        if (spec.skip_layers.count(l)) in += spec.in_dim;
        const std::int64_t out = l == spec.depth - 1 ? spec.out_dim : spec.width;
        Tensor w({in, out});
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        const double s = l == spec.depth - 1 ? final_layer_scale : 1.0;
        for (auto& v : w.values) v = s * rng.uniform(-limit, limit);
        mlp.weights.push_back(std::move(w));
        mlp.biases.emplace_back(std::vector<std::int64_t>{1, out});
    }
    return mlp;
}

Tape::NodeId Mlp::forward(Tape& tape, Tape::NodeId input) const {
    std::vector<Tape::NodeId> leaves;
    return forward(tape, input, leaves);
}

Tape::NodeId Mlp::forward(Tape& tape, Tape::NodeId input, std::vector<Tape::NodeId>& leaves) const {
    if (tape.value(input).cols() != spec.in_dim) throw ShapeMismatch("mlp forward: input dim mismatch");
    Tape::NodeId h = input;
    for (int l = 0; l < spec.depth; ++l) {
        if (spec.skip_layers.count(l)) {
            const Tape::NodeId parts[2] = {h, input};
            h = tape.concat_cols(parts);
        }
        // const_cast: the tape only reads values; grads are accumulated into
        // the bound tensor, which the training loop owns mutably.
        const Tape::NodeId w = tape.leaf(const_cast<Tensor&>(weights[l]));
        const Tape::NodeId b = tape.leaf(const_cast<Tensor&>(biases[l]));
        leaves.push_back(w);
        leaves.push_back(b);
        h = tape.add_row_bias(tape.matmul(h, w), b);
        h = apply_activation(tape, h, l == spec.depth - 1 ? spec.output_activation : spec.activation);
    }
    return h;
}

Tensor Mlp::forward_plain(const Tensor& input) const {
    if (input.cols() != spec.in_dim) throw ShapeMismatch("mlp forward: input dim mismatch");
    const std::int64_t m = input.rows();
    Tensor h = input;
    for (int l = 0; l < spec.depth; ++l) {
        Tensor x;
        if (spec.skip_layers.count(l)) {
            x = Tensor({m, h.cols() + input.cols()});
            const std::int64_t hc = h.cols(), ic = input.cols();
            for (std::int64_t i = 0; i < m; ++i) {
                for (std::int64_t j = 0; j < hc; ++j) x.values[i * (hc + ic) + j] = h.values[i * hc + j];
                for (std::int64_t j = 0; j < ic; ++j) x.values[i * (hc + ic) + hc + j] = input.values[i * ic + j];
            }
        } else {
            x = std::move(h);
        }
        const Tensor& w = weights[l];
        const Tensor& b = biases[l];
        Tensor y({m, w.cols()});
        matmul_raw(x.values.data(), w.values.data(), y.values.data(), m, x.cols(), w.cols());
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < w.cols(); ++j) y.values[i * w.cols() + j] += b.values[j];
        apply_activation_plain(y, l == spec.depth - 1 ? spec.output_activation : spec.activation);
        h = std::move(y);
    }
    return h;
}

std::vector<Tensor*> Mlp::parameters() {
    std::vector<Tensor*> out;
    for (auto& w : weights) out.push_back(&w);
    for (auto& b : biases) out.push_back(&b);
    return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& w : weights) out.push_back(&w);
    for (const auto& b : biases) out.push_back(&b);
    return out;
}

void Mlp::zero_grad() {
    for (Tensor* t : parameters()) t->zero_grad();
}

std::int64_t positional_encoding_dim(std::int64_t in_dim, int levels) {
    return in_dim * (1 + 2 * static_cast<std::int64_t>(levels));
}

std::vector<double> positional_encoding(std::span<const double> x, int levels) {
    std::vector<double> out;
    out.reserve(x.size() * (1 + 2 * levels));
    out.assign(x.begin(), x.end());
    for (int l = 0; l < levels; ++l) {
        const double f = std::ldexp(kPi, l);  // 2^l * pi
        for (double v : x) out.push_back(std::sin(f * v));
        for (double v : x) out.push_back(std::cos(f * v));
    }
    return out;
}

Tape::NodeId positional_encoding(Tape& tape, Tape::NodeId x, int levels) {
    std::vector<Tape::NodeId> parts;
    parts.push_back(x);
    for (int l = 0; l < levels; ++l) {
        const double f = std::ldexp(kPi, l);
        const Tape::NodeId scaled = tape.scale(x, f);
        parts.push_back(tape.sin_elem(scaled));
        parts.push_back(tape.cos_elem(scaled));
    }
    return tape.concat_cols(parts);
}

std::vector<double> scaled_softmax(std::span<const double> logits, double scale) {
    std::vector<double> out(logits.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) mx = std::max(mx, scale * v);
    double sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(scale * logits[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

void AdamState::step(std::span<Tensor* const> params) {
    if (first_moment.empty()) {
        for (Tensor* p : params) {
            first_moment.emplace_back(p->values.size(), 0.0);
            second_moment.emplace_back(p->values.size(), 0.0);
        }
    }
    if (first_moment.size() != params.size()) throw ShapeMismatch("adam: parameter count changed");
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p];
        if (t.grad.empty()) continue;  // never touched this step
        if (t.grad.size() != t.values.size()) throw ShapeMismatch("adam: grad shape mismatch");
        auto& m = first_moment[p];
        auto& v = second_moment[p];
        if (m.size() != t.values.size()) throw ShapeMismatch("adam: state shape mismatch");
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            const double g = t.grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            t.values[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
        }
    }
}

void save_mlp(Checkpoint& ck, const std::string& prefix, const Mlp& mlp) {
    nlohmann::json spec{{"in_dim", mlp.spec.in_dim},
                        {"out_dim", mlp.spec.out_dim},
                        {"depth", mlp.spec.depth},
                        {"width", mlp.spec.width},
                        {"skip", std::vector<int>(mlp.spec.skip_layers.begin(), mlp.spec.skip_layers.end())},
                        {"activation", static_cast<int>(mlp.spec.activation)},
                        {"output_activation", static_cast<int>(mlp.spec.output_activation)}};
    ck.add_text(prefix + "spec", spec.dump());
    for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
        const auto& w = mlp.weights[l];
        ck.add_f32(prefix + "w" + std::to_string(l), w.values,
                   {static_cast<std::uint64_t>(w.rows()), static_cast<std::uint64_t>(w.cols())});
        const auto& b = mlp.biases[l];
        ck.add_f32(prefix + "b" + std::to_string(l), b.values, {1, static_cast<std::uint64_t>(b.cols())});
    }
}

Mlp load_mlp(const Checkpoint& ck, const std::string& prefix) {
    const auto spec_json = nlohmann::json::parse(ck.get_text(prefix + "spec"));
    Mlp mlp;
    mlp.spec.in_dim = spec_json.at("in_dim").get<std::int64_t>();
    mlp.spec.out_dim = spec_json.at("out_dim").get<std::int64_t>();
    mlp.spec.depth = spec_json.at("depth").get<int>();
    mlp.spec.width = spec_json.at("width").get<int>();
    for (int s : spec_json.at("skip").get<std::vector<int>>()) mlp.spec.skip_layers.insert(s);
    mlp.spec.activation = static_cast<Activation>(spec_json.at("activation").get<int>());
    mlp.spec.output_activation = static_cast<Activation>(spec_json.at("output_activation").get<int>());
    for (int l = 0; l < mlp.spec.depth; ++l) {
        const auto wshape = ck.get_shape(prefix + "w" + std::to_string(l));
        Tensor w({static_cast<std::int64_t>(wshape[0]), static_cast<std::int64_t>(wshape[1])});
        w.values = ck.get_f32_as_f64(prefix + "w" + std::to_string(l));
        mlp.weights.push_back(std::move(w));
        const auto bshape = ck.get_shape(prefix + "b" + std::to_string(l));
        Tensor b({1, static_cast<std::int64_t>(bshape[1])});
        b.values = ck.get_f32_as_f64(prefix + "b" + std::to_string(l));
        mlp.biases.push_back(std::move(b));
    }
    return mlp;
}

Autoencoder Autoencoder::init(int latent_dim, int encoder_depth, int decoder_depth, int width, Rng& rng) {
    Autoencoder ae;
    MlpSpec enc;
    enc.in_dim = 3;
    enc.out_dim = latent_dim;
    enc.depth = encoder_depth;
    enc.width = width;
    MlpSpec dec;
    dec.in_dim = latent_dim;
    dec.out_dim = 3;
    dec.depth = decoder_depth;
    dec.width = width;
    dec.output_activation = Activation::Sigmoid;
    ae.encoder = Mlp::init(enc, rng);
    ae.decoder = Mlp::init(dec, rng);
    return ae;
}

}  // namespace spav
