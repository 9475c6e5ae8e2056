#include "sbi/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "sbi/kernels.hpp"
#include "sbi/losses.hpp"

namespace sbi {

namespace {

std::vector<MlpNetwork::Layer> build_layout(const std::vector<int>& sizes) {
    if (sizes.size() < 2) {
        throw std::invalid_argument("MlpNetwork: need at least input and output sizes");
    }
    for (int s : sizes) {
        if (s <= 0) throw std::invalid_argument("MlpNetwork: layer sizes must be positive");
    }
    if (sizes.back() != 1) {
        throw std::invalid_argument("MlpNetwork: output dimension must be 1");
    }
    std::vector<MlpNetwork::Layer> layout;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        MlpNetwork::Layer layer;
        layer.in = sizes[l];
        layer.out = sizes[l + 1];
        layer.w_off = off;
        off += static_cast<std::size_t>(layer.in) * layer.out;
        layer.b_off = off;
        off += layer.out;
        layout.push_back(layer);
    }
    return layout;
}

}  // namespace

MlpNetwork MlpNetwork::zeros(const std::vector<int>& sizes) {
    MlpNetwork net;
    net.layer_sizes = sizes;
    net.layout = build_layout(sizes);
    const auto& last = net.layout.back();
    net.params.assign(last.b_off + last.out, 0.0);
    return net;
}

MlpNetwork MlpNetwork::random(const std::vector<int>& sizes, Rng& rng) {
    MlpNetwork net = zeros(sizes);
    for (const auto& layer : net.layout) {
        const double bound = std::sqrt(1.0 / layer.in);
        double* w = net.params.data() + layer.w_off;
        for (int i = 0; i < layer.out * layer.in; ++i) w[i] = rng.uniform(-bound, bound);
        double* b = net.params.data() + layer.b_off;
        for (int i = 0; i < layer.out; ++i) b[i] = rng.uniform(-bound, bound);
    }
    return net;
}

void MlpWorkspace::resize(const MlpNetwork& net, std::size_t b) {
    batch = b;
    act.resize(net.num_layers());
    delta.resize(net.num_layers());
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        act[l].resize(b * net.layout[l].out);
        delta[l].resize(b * net.layout[l].out);
    }
}

void forward_batch(const MlpNetwork& net, const double* inputs, std::size_t batch,
                   MlpWorkspace& ws, double* logits) {
    bool fits = ws.batch >= batch && ws.act.size() == net.num_layers();
    for (std::size_t l = 0; fits && l < net.num_layers(); ++l) {
        fits = ws.act[l].size() >= batch * static_cast<std::size_t>(net.layout[l].out);
    }
    if (!fits) ws.resize(net, std::max(batch, ws.batch));
    const auto& k = kernels::ops();
    const double* prev = inputs;
    const std::size_t n_layers = net.num_layers();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = net.layout[l];
        double* z = ws.act[l].data();
        k.gemm_nt(batch, layer.out, layer.in, prev, net.weights(l), z);
        const bool hidden = (l + 1 < n_layers);
        k.bias_elu(z, net.biases(l), batch, layer.out, hidden);
        prev = z;
    }
    const double* top = ws.act[n_layers - 1].data();
    for (std::size_t r = 0; r < batch; ++r) logits[r] = top[r];
}

void backward_batch(const MlpNetwork& net, const double* inputs, std::size_t batch,
                    MlpWorkspace& ws, const double* upstream,
                    double* grad_params, double* grad_inputs) {
    const auto& k = kernels::ops();
    const std::size_t n_layers = net.num_layers();

    double* d_top = ws.delta[n_layers - 1].data();
    for (std::size_t r = 0; r < batch; ++r) d_top[r] = upstream[r];

    for (std::size_t li = n_layers; li-- > 0;) {
        const auto& layer = net.layout[li];
        const double* a_prev = (li == 0) ? inputs : ws.act[li - 1].data();
        const double* d_cur = ws.delta[li].data();

        // dW = delta^T * A_prev, db = column sums of delta.
        k.gemm_tn(layer.out, layer.in, batch, d_cur, a_prev, grad_params + layer.w_off);
        double* db = grad_params + layer.b_off;
        for (int o = 0; o < layer.out; ++o) db[o] = 0.0;
        for (std::size_t r = 0; r < batch; ++r) {
            k.axpy(1.0, d_cur + r * layer.out, db, layer.out);
        }

        double* d_prev = (li == 0) ? grad_inputs : ws.delta[li - 1].data();
        if (!d_prev) continue;
        k.gemm_nn(batch, layer.in, layer.out, d_cur, net.weights(li), d_prev);
        if (li > 0) {
            // Through ELU: a = elu(z), so a' = 1 for z > 0 and a + 1 = e^z otherwise.
            k.elu_backward(d_prev, a_prev, batch * layer.in);
        }
    }
}

namespace {
void check_input(const MlpNetwork& net, std::span<const double> input) {
    if (static_cast<int>(input.size()) != net.input_dim()) {
        throw std::invalid_argument("MlpNetwork: input dimension mismatch");
    }
    for (double v : input) {
        if (!std::isfinite(v)) throw std::invalid_argument("MlpNetwork: non-finite input");
    }
}
}  // namespace

double forward(const MlpNetwork& net, std::span<const double> input) {
    check_input(net, input);
    thread_local MlpWorkspace ws;
    double logit = 0.0;
    forward_batch(net, input.data(), 1, ws, &logit);
    return logit;
}

void backward(const MlpNetwork& net, std::span<const double> input, double upstream,
              std::span<double> grad_params, std::span<double> grad_input) {
    check_input(net, input);
    if (grad_params.size() != net.num_params() ||
        grad_input.size() != input.size()) {
        throw std::invalid_argument("MlpNetwork: gradient buffer size mismatch");
    }
    thread_local MlpWorkspace ws;
    double logit = 0.0;
    forward_batch(net, input.data(), 1, ws, &logit);
    backward_batch(net, input.data(), 1, ws, &upstream, grad_params.data(),
                   grad_input.data());
}

}  // namespace sbi
