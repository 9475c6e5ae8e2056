#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sbi/rng.hpp"

namespace sbi {

// Fully connected network with ELU hidden activations and a single linear
// output unit. The pre-sigmoid output (logit) is used directly as the log
// ratio estimate; nothing in the toolkit round-trips it through a sigmoid.
struct MlpNetwork {
    struct Layer {
        std::size_t w_off = 0;  // into params, row-major (out x in)
        std::size_t b_off = 0;
        int in = 0;
        int out = 0;
    };

    std::vector<int> layer_sizes;  // [input, hidden..., 1]
    std::vector<double> params;    // flat [W0, b0, W1, b1, ...]
    std::vector<Layer> layout;

    static MlpNetwork zeros(const std::vector<int>& sizes);
    static MlpNetwork random(const std::vector<int>& sizes, Rng& rng);

    int input_dim() const { return layer_sizes.front(); }
    std::size_t num_params() const { return params.size(); }
    std::size_t num_layers() const { return layout.size(); }

    const double* weights(std::size_t l) const { return params.data() + layout[l].w_off; }
    const double* biases(std::size_t l) const { return params.data() + layout[l].b_off; }
};

// Reusable buffers for batched evaluation; one instance per thread.
class MlpWorkspace {
public:
    void resize(const MlpNetwork& net, std::size_t batch);

    // act[l]: batch x layer_sizes[l+1], post-activation (logit at the top).
    std::vector<std::vector<double>> act;
    std::vector<std::vector<double>> delta;
    std::size_t batch = 0;
};

// inputs: batch x input_dim row-major; logits: batch values.
void forward_batch(const MlpNetwork& net, const double* inputs, std::size_t batch,
                   MlpWorkspace& ws, double* logits);

// Gradients of sum_b upstream[b] * logit_b. Must follow a forward_batch on
// the same workspace and inputs. grad_params is overwritten (size
// net.num_params()); grad_inputs (batch x input_dim) may be null.
void backward_batch(const MlpNetwork& net, const double* inputs, std::size_t batch,
                    MlpWorkspace& ws, const double* upstream,
                    double* grad_params, double* grad_inputs);

// Single-sample wrappers with input validation; safe to call concurrently
// on a shared immutable network.
double forward(const MlpNetwork& net, std::span<const double> input);
void backward(const MlpNetwork& net, std::span<const double> input, double upstream,
              std::span<double> grad_params, std::span<double> grad_input);

}  // namespace sbi
