#include "spinsq/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace spinsq {

MLP::MLP(std::vector<int> dims, OutputActivation out, std::mt19937_64& rng, double final_scale)
    : dims_(std::move(dims)), out_(out) {
    if (dims_.size() < 2) throw std::invalid_argument("MLP: need at least input and output dimensions");
    for (int d : dims_) {
        if (d < 1) throw std::invalid_argument("MLP: layer dimensions must be >= 1");
    }
    const std::size_t layers = dims_.size() - 1;
    weights.resize(layers);
    biases.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const int fan_in = dims_[l];
        const double bound = (l + 1 == layers) ? final_scale : 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        weights[l].resize(dims_[l + 1], fan_in);
        biases[l].resize(dims_[l + 1]);
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) {
            for (Eigen::Index r = 0; r < weights[l].rows(); ++r) weights[l](r, c) = u(rng);
        }
        for (Eigen::Index r = 0; r < biases[l].size(); ++r) biases[l](r) = u(rng);
    }
}

RVector MLP::forward(const RVector& x) const {
    RMatrix xm = x;
    return forward_batch(xm).col(0);
}

RMatrix MLP::forward_batch(const RMatrix& x, Cache* cache) const {
    if (x.rows() != input_dim()) {
        throw std::invalid_argument("MLP::forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                                    std::to_string(input_dim()));
    }
    RMatrix h = x;
    if (cache) {
        cache->activations.clear();
        cache->activations.push_back(h);
    }
    const std::size_t layers = weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        RMatrix z = weights[l] * h;
        z.colwise() += biases[l];
        const bool last = l + 1 == layers;
        if (!last || out_ == OutputActivation::tanh) z = z.array().tanh().matrix();
        h = std::move(z);
        if (cache) cache->activations.push_back(h);
    }
    return h;
}

MLPGradients MLP::backward(const Cache& cache, const RMatrix& d_out, RMatrix* d_in) const {
    const std::size_t layers = weights.size();
    if (cache.activations.size() != layers + 1) throw std::invalid_argument("MLP::backward: cache does not match");
    MLPGradients g;
    g.weights.resize(layers);
    g.biases.resize(layers);
    RMatrix delta = d_out;  // dL/d(output of layer l)
    for (std::size_t li = layers; li-- > 0;) {
        const RMatrix& y = cache.activations[li + 1];
        const bool last = li + 1 == layers;
        if (!last || out_ == OutputActivation::tanh) {
            delta = delta.cwiseProduct((1.0 - y.array().square()).matrix());  // through tanh
        }
        g.weights[li] = delta * cache.activations[li].transpose();
        g.biases[li] = delta.rowwise().sum();
        if (li > 0 || d_in != nullptr) {
            RMatrix prev = weights[li].transpose() * delta;
            if (li == 0) {
                *d_in = std::move(prev);
            } else {
                delta = std::move(prev);
            }
        }
    }
    return g;
}

std::size_t MLP::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

RVector MLP::flatten() const {
    RVector p(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        p.segment(k, weights[l].size()) = Eigen::Map<const RVector>(weights[l].data(), weights[l].size());
        k += weights[l].size();
        p.segment(k, biases[l].size()) = biases[l];
        k += biases[l].size();
    }
    return p;
}

void MLP::unflatten(const RVector& p) {
    if (static_cast<std::size_t>(p.size()) != parameter_count()) {
        throw std::invalid_argument("MLP::unflatten: parameter count mismatch");
    }
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Eigen::Map<RVector>(weights[l].data(), weights[l].size()) = p.segment(k, weights[l].size());
        k += weights[l].size();
        biases[l] = p.segment(k, biases[l].size());
        k += biases[l].size();
    }
}

RVector MLP::flatten(const MLPGradients& g) {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < g.weights.size(); ++l) n += g.weights[l].size() + g.biases[l].size();
    RVector p(n);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        p.segment(k, g.weights[l].size()) = Eigen::Map<const RVector>(g.weights[l].data(), g.weights[l].size());
        k += g.weights[l].size();
        p.segment(k, g.biases[l].size()) = g.biases[l];
        k += g.biases[l].size();
    }
    return p;
}

void MLP::soft_update(const MLP& source, double tau) {
    if (source.dims_ != dims_) throw std::invalid_argument("MLP::soft_update: architectures differ");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] = tau * source.weights[l] + (1.0 - tau) * weights[l];
        biases[l] = tau * source.biases[l] + (1.0 - tau) * biases[l];
    }
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw std::invalid_argument("unknown optimizer '" + s + "' (expected adam|sgd)");
}

Optimizer::Optimizer(const MLP& net, double lr_, OptimizerKind kind_) : lr(lr_), kind(kind_) {
    const auto n = static_cast<Eigen::Index>(net.parameter_count());
    m = RVector::Zero(n);
    v = RVector::Zero(n);
}

void Optimizer::step(MLP& net, const MLPGradients& grad) {
    const RVector g = MLP::flatten(grad);
    RVector p = net.flatten();
    if (g.size() != p.size()) throw std::invalid_argument("Optimizer::step: gradient size mismatch");
    if (kind == OptimizerKind::sgd) {
        p -= lr * g;
    } else {
        ++t;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
    net.unflatten(p);
}

}  // namespace spinsq
