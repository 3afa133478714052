#include "loopperf/tensornet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "loopperf/errors.hpp"

namespace loopperf {

NumArray::NumArray(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
    std::size_t n = 1;
    for (auto d : shape) {
        if (d == 0) throw ContractError("NumArray: zero-sized dimension");
        n *= d;
    }
    data.assign(n, fill);
}

Eigen::Index NumArray::cols() const {
    if (shape.empty()) return 0;
    std::size_t n = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
    return static_cast<Eigen::Index>(n);
}

bool NumArray::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

Parameter& ParameterStore::add(const std::string& name, std::vector<std::size_t> shape) {
    if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = NumArray(shape);
    p->grad = NumArray(shape);
    p->adam_m = NumArray(shape);
    p->adam_v = NumArray(std::move(shape));
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter& ParameterStore::at(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw LookupError("no parameter '" + std::string(name) + "'");
    return *params_[it->second];
}

const Parameter& ParameterStore::at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw LookupError("no parameter '" + std::string(name) + "'");
    return *params_[it->second];
}

bool ParameterStore::contains(std::string_view name) const {
    return index_.count(std::string(name)) != 0;
}

std::vector<Parameter*> ParameterStore::all() {
    std::vector<Parameter*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
    std::vector<const Parameter*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<Parameter*> ParameterStore::with_prefix(std::string_view prefix) {
    std::vector<Parameter*> out;
    for (auto& p : params_)
        if (std::string_view(p->name).substr(0, prefix.size()) == prefix) out.push_back(p.get());
    return out;
}

void ParameterStore::set_frozen(std::string_view prefix, bool frozen) {
    for (auto* p : with_prefix(prefix)) p->frozen = frozen;
}

void ParameterStore::set_lr_scale(std::string_view prefix, double scale) {
    if (!(scale > 0)) throw ContractError("lr_scale must be positive");
    for (auto* p : with_prefix(prefix)) p->lr_scale = scale;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

std::size_t ParameterStore::element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

std::vector<AlignedVector> ParameterStore::snapshot() const {
    std::vector<AlignedVector> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->value.data);
    return out;
}

void ParameterStore::restore(const std::vector<AlignedVector>& values) {
    if (values.size() != params_.size()) throw ContractError("snapshot size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != params_[i]->value.size())
            throw ContractError("snapshot shape mismatch for '" + params_[i]->name + "'");
        params_[i]->value.data = values[i];
    }
}

// ---------------------------------------------------------------------------

std::string_view activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
        case Activation::Softplus: return "softplus";
    }
    return "?";
}

Activation activation_from_name(std::string_view name) {
    for (auto a : {Activation::Relu, Activation::Tanh, Activation::Identity, Activation::Softplus})
        if (activation_name(a) == name) return a;
    throw FormatError("unknown activation '" + std::string(name) + "'");
}

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& z) {
    switch (act) {
        case Activation::Relu: z = z.cwiseMax(0.0); break;
        case Activation::Tanh: z = z.array().tanh(); break;
        case Activation::Identity: break;
        case Activation::Softplus:
            z = z.unaryExpr([](double v) {
                return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
            });
            break;
    }
}

// dz = dy * act'(z), written in terms of y = act(z).
Eigen::MatrixXd activation_backward(Activation act, const Eigen::Ref<const Eigen::MatrixXd>& y,
                                    const Eigen::Ref<const Eigen::MatrixXd>& dy) {
    switch (act) {
        case Activation::Relu: return (y.array() > 0.0).cast<double>() * dy.array();
        case Activation::Tanh: return (1.0 - y.array().square()) * dy.array();
        case Activation::Identity: return dy;
        case Activation::Softplus: return (1.0 - (-y.array()).exp()) * dy.array();
    }
    return dy;
}

void glorot_uniform(NumArray& w, int in, int out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : w.data) v = dist(rng);
}

}  // namespace

Dense::Dense(ParameterStore& store, const std::string& name, int in, int out, Activation act,
             Rng& rng)
    : in_(in), out_(out), act_(act) {
    if (in <= 0 || out <= 0) throw ContractError("dense layer sizes must be positive");
    w_ = &store.add(name + "/W", {static_cast<std::size_t>(out), static_cast<std::size_t>(in)});
    b_ = &store.add(name + "/b", {static_cast<std::size_t>(out)});
    glorot_uniform(w_->value, in, out, rng);
}

Eigen::MatrixXd Dense::forward(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    if (x.rows() != in_)
        throw ContractError("dense " + w_->name + ": input has " + std::to_string(x.rows()) +
                            " rows, expected " + std::to_string(in_));
    Eigen::MatrixXd z = w_->value.matrix() * x;
    z.colwise() += b_->value.vector();
    apply_activation(act_, z);
    return z;
}

Eigen::MatrixXd Dense::backward(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                const Eigen::Ref<const Eigen::MatrixXd>& y,
                                const Eigen::Ref<const Eigen::MatrixXd>& dy, bool need_dx) const {
    if (dy.rows() != out_ || dy.cols() != x.cols() || y.rows() != out_)
        throw ContractError("dense " + w_->name + ": gradient shape mismatch");
    const Eigen::MatrixXd dz = activation_backward(act_, y, dy);
    if (!w_->frozen) w_->grad.matrix().noalias() += dz * x.transpose();
    if (!b_->frozen) b_->grad.vector() += dz.rowwise().sum();
    if (!need_dx) return {};
    return w_->value.matrix().transpose() * dz;
}

// ---------------------------------------------------------------------------

Mlp::Mlp(ParameterStore& store, const std::string& name, const std::vector<int>& widths,
         Activation hidden, Activation last, Rng& rng) {
    if (widths.size() < 2) throw ContractError("mlp needs at least input and output widths");
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const bool is_last = k + 2 == widths.size();
        layers_.emplace_back(store, name + "/" + std::to_string(k), widths[k], widths[k + 1],
                             is_last ? last : hidden, rng);
    }
}

Eigen::MatrixXd Mlp::forward(const Eigen::Ref<const Eigen::MatrixXd>& x, Trace* trace) const {
    if (trace != nullptr) {
        trace->acts.clear();
        trace->acts.push_back(x);
        for (const auto& l : layers_) trace->acts.push_back(l.forward(trace->acts.back()));
        return trace->acts.back();
    }
    Eigen::MatrixXd a = layers_.front().forward(x);
    for (std::size_t k = 1; k < layers_.size(); ++k) a = layers_[k].forward(a);
    return a;
}

Eigen::MatrixXd Mlp::backward(const Trace& trace, const Eigen::Ref<const Eigen::MatrixXd>& dy,
                              bool need_dx) const {
    Eigen::MatrixXd g = dy;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const bool want = need_dx || k > 0;
        g = layers_[k].backward(trace.acts[k], trace.acts[k + 1], g, want);
    }
    return g;
}

// ---------------------------------------------------------------------------

LstmCell::LstmCell(ParameterStore& store, const std::string& name, int input_size,
                   int hidden_size, Rng& rng)
    : d_(input_size), h_(hidden_size) {
    if (input_size <= 0 || hidden_size <= 0) throw ContractError("lstm sizes must be positive");
    const auto rows = static_cast<std::size_t>(4 * hidden_size);
    w_ = &store.add(name + "/W", {rows, static_cast<std::size_t>(input_size + hidden_size)});
    b_ = &store.add(name + "/b", {rows});
    glorot_uniform(w_->value, input_size + hidden_size, 4 * hidden_size, rng);
    b_->value.vector().segment(hidden_size, hidden_size).setOnes();
}

namespace {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

int LstmCell::Trace::steps() const {
    return lengths.empty() ? 0 : static_cast<int>(x.cols() / static_cast<Eigen::Index>(lengths.size()));
}

Eigen::MatrixXd LstmCell::forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                        std::span<const int> lengths, Trace* trace) const {
    const auto N = static_cast<Eigen::Index>(lengths.size());
    if (N == 0) throw ContractError("lstm: empty batch");
    if (inputs.rows() != d_)
        throw ContractError("lstm " + w_->name + ": input has " + std::to_string(inputs.rows()) +
                            " rows, expected " + std::to_string(d_));
    if (inputs.cols() % N != 0) throw ContractError("lstm: input columns not a multiple of batch");
    const Eigen::Index T = inputs.cols() / N;
    for (int len : lengths)
        if (len < 1 || len > T) throw ContractError("lstm: sequence length out of range");

    const auto w = w_->value.matrix();
    Eigen::MatrixXd z = w.leftCols(d_) * inputs;
    z.colwise() += b_->value.vector();

    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(h_, N * T), h(h_, N * T);
    for (Eigen::Index t = 0; t < T; ++t) {
        auto zt = z.middleCols(t * N, N);
        if (t > 0) zt.noalias() += w.rightCols(h_) * h.middleCols((t - 1) * N, N);
        zt.topRows(2 * h_) = zt.topRows(2 * h_).unaryExpr(&sigmoid);
        zt.middleRows(2 * h_, h_) = zt.middleRows(2 * h_, h_).array().tanh();
        zt.bottomRows(h_) = zt.bottomRows(h_).unaryExpr(&sigmoid);
        auto ct = c.middleCols(t * N, N);
        ct = zt.topRows(h_).cwiseProduct(zt.middleRows(2 * h_, h_));
        if (t > 0) ct += zt.middleRows(h_, h_).cwiseProduct(c.middleCols((t - 1) * N, N));
        h.middleCols(t * N, N) = zt.bottomRows(h_).cwiseProduct(ct.array().tanh().matrix());
    }
    Eigen::MatrixXd out(h_, N);
    for (Eigen::Index n = 0; n < N; ++n) out.col(n) = h.col((lengths[n] - 1) * N + n);
    if (trace != nullptr) {
        trace->lengths.assign(lengths.begin(), lengths.end());
        trace->x = inputs;
        trace->gates = std::move(z);
        trace->c = std::move(c);
        trace->h = std::move(h);
    }
    return out;
}

Eigen::MatrixXd LstmCell::backward_batch(const Trace& tr,
                                         const Eigen::Ref<const Eigen::MatrixXd>& dh_final) const {
    const Eigen::Index N = tr.batch(), T = tr.steps();
    if (dh_final.rows() != h_ || dh_final.cols() != N)
        throw ContractError("lstm: gradient shape mismatch");
    const auto w = w_->value.matrix();
    Eigen::MatrixXd dz(4 * h_, T * N);
    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(h_, N), dc = Eigen::MatrixXd::Zero(h_, N);
    for (Eigen::Index t = T; t-- > 0;) {
        for (Eigen::Index n = 0; n < N; ++n)
            if (tr.lengths[n] - 1 == t) dh.col(n) += dh_final.col(n);
        const auto gt = tr.gates.middleCols(t * N, N);
        const auto i = gt.topRows(h_).array();
        const auto f = gt.middleRows(h_, h_).array();
        const auto g = gt.middleRows(2 * h_, h_).array();
        const auto o = gt.bottomRows(h_).array();
        const Eigen::ArrayXXd tc = tr.c.middleCols(t * N, N).array().tanh();
        const Eigen::ArrayXXd dct = dc.array() + dh.array() * o * (1.0 - tc.square());
        auto dzt = dz.middleCols(t * N, N);
        dzt.topRows(h_) = (dct * g * i * (1.0 - i)).matrix();
        if (t > 0)
            dzt.middleRows(h_, h_) =
                (dct * tr.c.middleCols((t - 1) * N, N).array() * f * (1.0 - f)).matrix();
        else
            dzt.middleRows(h_, h_).setZero();
        dzt.middleRows(2 * h_, h_) = (dct * i * (1.0 - g.square())).matrix();
        dzt.bottomRows(h_) = (dh.array() * tc * o * (1.0 - o)).matrix();
        dc = (dct * f).matrix();
        if (t > 0) dh.noalias() = w.rightCols(h_).transpose() * dzt;
    }
    if (!w_->frozen) {
        auto gw = w_->grad.matrix();
        gw.leftCols(d_).noalias() += dz * tr.x.transpose();
        if (T > 1)
            gw.rightCols(h_).noalias() +=
                dz.rightCols((T - 1) * N) * tr.h.leftCols((T - 1) * N).transpose();
    }
    if (!b_->frozen) b_->grad.vector() += dz.rowwise().sum();
    return w.leftCols(d_).transpose() * dz;
}

Eigen::VectorXd LstmCell::forward(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                  Trace* trace) const {
    if (inputs.cols() == 0) throw ContractError("lstm: empty input sequence");
    const int len = static_cast<int>(inputs.cols());
    return forward_batch(inputs, std::span<const int>(&len, 1), trace).col(0);
}

Eigen::MatrixXd LstmCell::backward(const Trace& trace,
                                   const Eigen::Ref<const Eigen::VectorXd>& dh_last) const {
    return backward_batch(trace, dh_last);
}

// ---------------------------------------------------------------------------

LossResult mse_loss(const Eigen::Ref<const Eigen::MatrixXd>& pred,
                    const Eigen::Ref<const Eigen::MatrixXd>& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw ContractError("mse: shape mismatch");
    const double n = static_cast<double>(pred.size());
    if (n == 0) throw ContractError("mse: empty input");
    LossResult r;
    r.grad = pred - target;
    r.value = r.grad.squaredNorm() / n;
    r.grad *= 2.0 / n;
    return r;
}

LossResult mape_loss(const Eigen::Ref<const Eigen::VectorXd>& pred,
                     const Eigen::Ref<const Eigen::VectorXd>& target) {
    if (pred.size() != target.size()) throw ContractError("mape: size mismatch");
    if (pred.size() == 0) throw ContractError("mape: empty input");
    const double n = static_cast<double>(pred.size());
    LossResult r;
    r.grad.resize(pred.size(), 1);
    for (Eigen::Index k = 0; k < pred.size(); ++k) {
        const double a = target(k), p = pred(k);
        if (!(a > 0)) throw ContractError("mape: non-positive target");
        r.value += std::abs(a - p) / a;
        r.grad(k, 0) = (p > a ? 1.0 : (p < a ? -1.0 : 0.0)) / (a * n);
    }
    r.value /= n;
    return r;
}

// ---------------------------------------------------------------------------

void adam_step(ParameterStore& store, const AdamConfig& cfg) {
    for (auto* p : store.all()) {
        if (p->frozen) continue;
        ++p->adam_steps;
        const double t = static_cast<double>(p->adam_steps);
        const double c1 = 1.0 - std::pow(cfg.beta1, t);
        const double c2 = 1.0 - std::pow(cfg.beta2, t);
        const double lr = cfg.lr * p->lr_scale;
        auto m = p->adam_m.vector();
        auto v = p->adam_v.vector();
        const auto g = p->grad.vector();
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
        p->value.vector().array() -=
            lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
    }
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<double(bool)>& loss,
                           std::span<Parameter* const> params, double eps, double tol,
                           std::size_t per_param, std::uint64_t seed, double abs_floor) {
    loss(true);
    std::vector<AlignedVector> analytic;
    for (auto* p : params) analytic.push_back(p->grad.data);

    GradCheckReport rep;
    Rng rng(seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        std::vector<std::size_t> idx(p.value.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (idx.size() > per_param) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(per_param);
        }
        for (auto k : idx) {
            const double saved = p.value.data[k];
            p.value.data[k] = saved + eps;
            const double up = loss(false);
            p.value.data[k] = saved - eps;
            const double down = loss(false);
            p.value.data[k] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[pi][k];
            const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            ++rep.checked;
            if (rel > rep.max_rel_error || !std::isfinite(rel)) {
                rep.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
                rep.worst_parameter = p.name;
                rep.worst_index = k;
            }
        }
    }
    rep.passed = rep.max_rel_error < tol;
    return rep;
}

}  // namespace loopperf
