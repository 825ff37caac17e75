#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedlab/matrix.hpp"
#include "fedlab/rng.hpp"

namespace fedlab::nn {

enum class Activation { none, relu };

enum class Reduction { sum, mean };

// Feed-forward model. weights[i] maps dim_{i-1} -> dim_i; the last layer is
// the classifier head, the first depth()-1 layers produce representations.
// With activation == none and no biases this is exactly an (L+1)-layer linear
// network. biases[i] is dim_i x 1, or empty when the model has no bias terms.
struct Model {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
    Activation activation = Activation::none;

    size_t depth() const { return weights.size(); }
    size_t rep_depth() const { return weights.size() - 1; }
    bool has_bias() const { return !biases.empty() && !biases[0].empty(); }
};

// dims = [d_in, h_1, ..., h_k, C]. Weights uniform in +-1/sqrt(fan_in).
Model make_mlp(const std::vector<size_t>& dims, Activation act, bool bias, Rng& rng);

// Samples as columns: X is d_in x N.
struct Batch {
    Matrix x;
    std::vector<int> labels;
    int num_classes = 0;

    size_t size() const { return labels.size(); }
};

struct ForwardResult {
    Matrix reps;    // d x N, output of the first L layers (post-activation)
    Matrix logits;  // C x N
    Matrix probs;   // C x N, softmax per column
};

ForwardResult forward(const Model& model, const Matrix& x);

// Softmax with per-column max subtraction.
Matrix softmax_columns(const Matrix& logits);

double cross_entropy(const Matrix& probs, const std::vector<int>& labels, Reduction red);

struct ProxTerm {
    double mu = 0.0;
    Model anchor;  // round-start global weights
};

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
};

// Gradient of  cross_entropy(red) + beta * feddecorr_loss(reps) + prox  with
// respect to every parameter. The decorrelation term is evaluated on the
// representation layer (analytic gradient from the decorr module) and
// back-propagated through the first L layers; it is skipped entirely when
// beta == 0 or the batch has fewer than 2 samples.
Gradients backward(const Model& model, const Batch& batch, double beta,
                   const ProxTerm* prox, Reduction red);

// The scalar objective matching backward(); used by grad_check and reporting.
double total_objective(const Model& model, const Batch& batch, double beta,
                       const ProxTerm* prox, Reduction red);

struct OptState {
    std::vector<Matrix> vel_w;
    std::vector<Matrix> vel_b;
    double lr = 0.01;
    double momentum = 0.0;
    double weight_decay = 0.0;
};

OptState make_opt_state(const Model& model, double lr, double momentum, double weight_decay);

// v' = momentum*v + g + weight_decay*w;  w' = w - lr*v'  (coupled decay).
void sgd_step(Model& model, const Gradients& grads, OptState& state);

// Max over parameters of |analytic - central FD| / max(1e-8, |analytic|+|FD|).
double grad_check(const Model& model, const Batch& batch, double beta,
                  const ProxTerm* prox, Reduction red, double eps);

// Flat binary checkpoint format, stable across versions; layout documented in
// the README.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

// Test seam: when set, backward() routes the representation-regularizer
// gradient through this hook instead of decorr::feddecorr_grad.
using DecorrGradFn = Matrix (*)(const Matrix&, double);
void set_decorr_grad_impl(DecorrGradFn fn);  // nullptr restores the default

}  // namespace fedlab::nn
