#pragma once

// Small differentiable-network core. Every layer has a hand-written backward
// pass that accumulates into Parameter::grad. Batches are column-major: one
// sample per column.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>

#include "loopperf/rng.hpp"

namespace loopperf {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Fixed alignment keeps vectorized reductions bit-reproducible across runs.
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct NumArray {
    std::vector<std::size_t> shape;
    AlignedVector data;  // row-major

    NumArray() = default;
    explicit NumArray(std::vector<std::size_t> shape, double fill = 0.0);

    std::size_t size() const { return data.size(); }
    Eigen::Index rows() const { return shape.empty() ? 0 : static_cast<Eigen::Index>(shape[0]); }
    Eigen::Index cols() const;

    Eigen::Map<RowMatrix> matrix() { return {data.data(), rows(), cols()}; }
    Eigen::Map<const RowMatrix> matrix() const { return {data.data(), rows(), cols()}; }
    Eigen::Map<Eigen::VectorXd> vector() {
        return {data.data(), static_cast<Eigen::Index>(data.size())};
    }
    Eigen::Map<const Eigen::VectorXd> vector() const {
        return {data.data(), static_cast<Eigen::Index>(data.size())};
    }
    bool all_finite() const;
    bool operator==(const NumArray&) const = default;
};

struct Parameter {
    std::string name;
    NumArray value;
    NumArray grad;
    NumArray adam_m;
    NumArray adam_v;
    std::int64_t adam_steps = 0;
    bool frozen = false;
    double lr_scale = 1.0;
};

// Insertion-ordered, name-unique. Parameter addresses are stable.
class ParameterStore {
public:
    Parameter& add(const std::string& name, std::vector<std::size_t> shape);
    Parameter& at(std::string_view name);
    const Parameter& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;
    std::vector<Parameter*> with_prefix(std::string_view prefix);

    void set_frozen(std::string_view prefix, bool frozen);
    void set_lr_scale(std::string_view prefix, double scale);
    void zero_grad();
    std::size_t size() const { return params_.size(); }
    std::size_t element_count() const;

    // Values only, in store order.
    std::vector<AlignedVector> snapshot() const;
    void restore(const std::vector<AlignedVector>& values);

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class Activation { Relu, Tanh, Identity, Softplus };

std::string_view activation_name(Activation a);
Activation activation_from_name(std::string_view name);

class Dense {
public:
    Dense() = default;
    // Creates weight (out x in) and bias (out) under `name`/W and `name`/b,
    // weights uniform in +-sqrt(6/(in+out)), bias zero.
    Dense(ParameterStore& store, const std::string& name, int in, int out, Activation act, Rng& rng);

    int in() const { return in_; }
    int out() const { return out_; }
    Activation activation() const { return act_; }
    Parameter& weight() const { return *w_; }
    Parameter& bias() const { return *b_; }

    Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    // Accumulates parameter gradients (unless frozen); returns dx when asked.
    Eigen::MatrixXd backward(const Eigen::Ref<const Eigen::MatrixXd>& x,
                             const Eigen::Ref<const Eigen::MatrixXd>& y,
                             const Eigen::Ref<const Eigen::MatrixXd>& dy, bool need_dx = true) const;

private:
    Parameter* w_ = nullptr;
    Parameter* b_ = nullptr;
    int in_ = 0, out_ = 0;
    Activation act_ = Activation::Identity;
};

// Stack of dense layers with cached activations for backward.
class Mlp {
public:
    Mlp() = default;
    // widths = {in, h1, ..., out}; hidden layers use `hidden`, the last `last`.
    Mlp(ParameterStore& store, const std::string& name, const std::vector<int>& widths,
        Activation hidden, Activation last, Rng& rng);

    struct Trace {
        std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[k+1] = layer k output
    };

    int in() const { return layers_.front().in(); }
    int out() const { return layers_.back().out(); }
    const std::vector<Dense>& layers() const { return layers_; }

    Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x, Trace* trace = nullptr) const;
    Eigen::MatrixXd backward(const Trace& trace, const Eigen::Ref<const Eigen::MatrixXd>& dy,
                             bool need_dx = true) const;

private:
    std::vector<Dense> layers_;
};

// Gates ordered input, forget, cell, output; weight (4H x (D+H)).
class LstmCell {
public:
    LstmCell() = default;
    LstmCell(ParameterStore& store, const std::string& name, int input_size, int hidden_size,
             Rng& rng);

    int input_size() const { return d_; }
    int hidden_size() const { return h_; }
    Parameter& weight() const { return *w_; }
    Parameter& bias() const { return *b_; }

    // Batched over N sequences of possibly different lengths. Step t holds one
    // column per sequence; columns past a sequence's length are ignored.
    struct Trace {
        std::vector<int> lengths;
        Eigen::MatrixXd x;      // D x (T*N), step-major
        Eigen::MatrixXd gates;  // 4H x (T*N), post-nonlinearity
        Eigen::MatrixXd c;      // H x (T*N)
        Eigen::MatrixXd h;      // H x (T*N)
        int steps() const;
        int batch() const { return static_cast<int>(lengths.size()); }
    };

    // inputs: D x (T*N) step-major; returns H x N final states (h at step
    // lengths[n]-1), starting from zero state.
    Eigen::MatrixXd forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                  std::span<const int> lengths, Trace* trace = nullptr) const;
    // dh_final: H x N; returns d inputs, D x (T*N).
    Eigen::MatrixXd backward_batch(const Trace& trace,
                                   const Eigen::Ref<const Eigen::MatrixXd>& dh_final) const;

    // Single sequence, one column per step.
    Eigen::VectorXd forward(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                            Trace* trace = nullptr) const;
    Eigen::MatrixXd backward(const Trace& trace, const Eigen::Ref<const Eigen::VectorXd>& dh_last) const;

private:
    Parameter* w_ = nullptr;
    Parameter* b_ = nullptr;
    int d_ = 0, h_ = 0;
};

struct LossResult {
    double value = 0;
    Eigen::MatrixXd grad;
};

// Mean over all elements.
LossResult mse_loss(const Eigen::Ref<const Eigen::MatrixXd>& pred,
                    const Eigen::Ref<const Eigen::MatrixXd>& target);
// mean |A-P|/A; ContractError on non-positive targets. Subgradient 0 at P = A.
LossResult mape_loss(const Eigen::Ref<const Eigen::VectorXd>& pred,
                     const Eigen::Ref<const Eigen::VectorXd>& target);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Skips frozen parameters entirely; effective rate is lr * lr_scale.
void adam_step(ParameterStore& store, const AdamConfig& config);

struct GradCheckReport {
    double max_rel_error = 0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    bool passed = false;
};

// `loss(true)` must zero grads, run forward + backward and return the loss;
// `loss(false)` only evaluates. Central differences on up to `per_param`
// random entries of each parameter. Relative error is
// |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport grad_check(const std::function<double(bool)>& loss,
                           std::span<Parameter* const> params, double eps, double tol,
                           std::size_t per_param, std::uint64_t seed, double abs_floor = 1e-5);

}  // namespace loopperf
