// mlp.hpp — small fully connected network with tanh hidden layers, manual backpropagation
// and first/second-moment (Adam) or plain SGD updates. Column-major batches: one sample per column.

#pragma once

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

namespace spinsq {

using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

enum class OutputActivation { linear, tanh };

struct MLPGradients {
    std::vector<RMatrix> weights;
    std::vector<RVector> biases;
};

class MLP {
public:
    MLP() = default;
    /// dims = {in, hidden..., out}. Hidden layers are initialized uniformly in ±1/sqrt(fan_in),
    /// the output layer in ±final_scale.
    MLP(std::vector<int> dims, OutputActivation out, std::mt19937_64& rng, double final_scale = 3e-3);

    struct Cache {
        std::vector<RMatrix> activations;  // inputs to each layer, then the final output
    };

    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    const std::vector<int>& dims() const { return dims_; }
    OutputActivation output_activation() const { return out_; }

    RVector forward(const RVector& x) const;
    RMatrix forward_batch(const RMatrix& x, Cache* cache = nullptr) const;

    /// Gradients of sum_ij dY_ij * Y_ij with respect to all parameters; optionally dL/dX.
    MLPGradients backward(const Cache& cache, const RMatrix& d_out, RMatrix* d_in = nullptr) const;

    std::size_t parameter_count() const;
    RVector flatten() const;
    void unflatten(const RVector& p);
    static RVector flatten(const MLPGradients& g);

    /// this <- tau * source + (1 - tau) * this
    void soft_update(const MLP& source, double tau);

    std::vector<RMatrix> weights;
    std::vector<RVector> biases;

private:
    std::vector<int> dims_;
    OutputActivation out_{OutputActivation::linear};
};

enum class OptimizerKind { adam, sgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8), or plain SGD.
class Optimizer {
public:
    Optimizer() = default;
    Optimizer(const MLP& net, double lr, OptimizerKind kind = OptimizerKind::adam);

    /// Gradient-descent step: params -= lr * update(grad).
    void step(MLP& net, const MLPGradients& grad);

    double lr{1e-3};
    OptimizerKind kind{OptimizerKind::adam};
    double beta1{0.9}, beta2{0.999}, eps{1e-8};
    long t{0};
    RVector m, v;  // flattened first and second moments
};

}  // namespace spinsq
