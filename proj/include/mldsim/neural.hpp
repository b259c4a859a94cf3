#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mldsim/env.hpp"
#include "mldsim/rng.hpp"

namespace mldsim {

struct ParamSlice {
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 1;
    std::size_t size() const { return rows * cols; }
};

// Flat parameter storage with named, shaped views. Gradients live alongside
// values so optimizers can treat the whole block as one vector.
class ParameterBlock {
public:
    ParamSlice& register_slice(const std::string& name, std::size_t rows, std::size_t cols = 1) {
        if (has(name)) throw std::logic_error("ParameterBlock: duplicate slice " + name);
        ParamSlice s{value.size(), rows, cols};
        value.resize(value.size() + s.size(), 0.0);
        grad.resize(value.size(), 0.0);
        slices_.emplace_back(name, s);
        return slices_.back().second;
    }

    bool has(const std::string& name) const {
        for (const auto& [n, s] : slices_)
            if (n == name) return true;
        return false;
    }

    const ParamSlice& slice(const std::string& name) const {
        for (const auto& [n, s] : slices_)
            if (n == name) return s;
        throw std::logic_error("ParameterBlock: no slice named " + name);
    }

    double* val(const std::string& name) { return value.data() + slice(name).offset; }
    const double* val(const std::string& name) const { return value.data() + slice(name).offset; }
    double* grd(const std::string& name) { return grad.data() + slice(name).offset; }

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
    std::size_t size() const { return value.size(); }
    const std::vector<std::pair<std::string, ParamSlice>>& slices() const { return slices_; }

    std::vector<double> value;
    std::vector<double> grad;

private:
    std::vector<std::pair<std::string, ParamSlice>> slices_;
};

inline void glorot_uniform(double* w, std::size_t rows, std::size_t cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (std::size_t i = 0; i < rows * cols; ++i) w[i] = rng.uniform(-limit, limit);
}

// Orthonormalize the columns of a square matrix drawn from N(0,1) by modified
// Gram-Schmidt. Row-major n x n.
inline void orthogonal_init(double* m, std::size_t n, Rng& rng) {
    for (std::size_t i = 0; i < n * n; ++i) m[i] = rng.normal();
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            double dot = 0.0;
            for (std::size_t r = 0; r < n; ++r) dot += m[r * n + c] * m[r * n + p];
            for (std::size_t r = 0; r < n; ++r) m[r * n + c] -= dot * m[r * n + p];
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < n; ++r) norm += m[r * n + c] * m[r * n + c];
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < n; ++r) m[r * n + c] /= norm;
    }
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += M x, M row-major rows x cols
inline void matvec_acc(const double* m, std::size_t rows, std::size_t cols, const double* x,
                       double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* row = m + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// y += M^T x
inline void matvec_t_acc(const double* m, std::size_t rows, std::size_t cols, const double* x,
                         double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = m + r * cols;
        for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * x[r];
    }
}

// M += a b^T (outer product into row-major rows x cols)
inline void outer_acc(double* m, std::size_t rows, std::size_t cols, const double* a,
                      const double* b) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = m + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += a[r] * b[c];
    }
}

} // namespace detail

// Single recurrent layer with input, forget, cell and output gates. Gate
// pre-activations are stacked [i; f; g; o], each of hidden size H, so W is
// 4H x in, U is 4H x H and b is 4H. An empty sequence yields h = 0.
class Lstm {
public:
    Lstm() = default;
    Lstm(std::string prefix, std::size_t in, std::size_t hidden)
        : prefix_(std::move(prefix)), in_(in), hidden_(hidden) {}

    void register_params(ParameterBlock& p) const {
        p.register_slice(prefix_ + ".W", 4 * hidden_, in_);
        p.register_slice(prefix_ + ".U", 4 * hidden_, hidden_);
        p.register_slice(prefix_ + ".b", 4 * hidden_);
    }

    void init(ParameterBlock& p, Rng& rng) const {
        glorot_uniform(p.val(prefix_ + ".W"), 4 * hidden_, in_, rng);
        double* u = p.val(prefix_ + ".U");
        for (int gate = 0; gate < 4; ++gate) {
            std::vector<double> block(hidden_ * hidden_);
            orthogonal_init(block.data(), hidden_, rng);
            for (std::size_t r = 0; r < hidden_; ++r)
                for (std::size_t c = 0; c < hidden_; ++c)
                    u[(static_cast<std::size_t>(gate) * hidden_ + r) * hidden_ + c] =
                        block[r * hidden_ + c];
        }
        double* b = p.val(prefix_ + ".b");
        std::fill(b, b + 4 * hidden_, 0.0);
        for (std::size_t k = 0; k < hidden_; ++k) b[hidden_ + k] = 1.0; // forget gate bias
    }

    struct StepCache {
        std::vector<double> x, h_prev, c_prev, i, f, g, o, c, tanh_c;
    };
    struct Cache {
        std::vector<StepCache> steps;
        std::vector<double> h_final;
    };

    Cache forward(const ParameterBlock& p, const std::vector<std::vector<double>>& seq) const {
        const double* W = p.val(prefix_ + ".W");
        const double* U = p.val(prefix_ + ".U");
        const double* b = p.val(prefix_ + ".b");
        const std::size_t H = hidden_;

        Cache cache;
        std::vector<double> h(H, 0.0), c(H, 0.0), z(4 * H);
        for (const auto& x : seq) {
            if (x.size() != in_) throw std::logic_error("Lstm: input width mismatch");
            StepCache sc;
            sc.x = x;
            sc.h_prev = h;
            sc.c_prev = c;
            std::copy(b, b + 4 * H, z.begin());
            detail::matvec_acc(W, 4 * H, in_, x.data(), z.data());
            detail::matvec_acc(U, 4 * H, H, h.data(), z.data());
            sc.i.resize(H);
            sc.f.resize(H);
            sc.g.resize(H);
            sc.o.resize(H);
            sc.c.resize(H);
            sc.tanh_c.resize(H);
            for (std::size_t k = 0; k < H; ++k) {
                sc.i[k] = detail::sigmoid(z[k]);
                sc.f[k] = detail::sigmoid(z[H + k]);
                sc.g[k] = std::tanh(z[2 * H + k]);
                sc.o[k] = detail::sigmoid(z[3 * H + k]);
                sc.c[k] = sc.f[k] * c[k] + sc.i[k] * sc.g[k];
                sc.tanh_c[k] = std::tanh(sc.c[k]);
                h[k] = sc.o[k] * sc.tanh_c[k];
            }
            c = sc.c;
            cache.steps.push_back(std::move(sc));
        }
        cache.h_final = h;
        return cache;
    }

    // Backprop through time from the gradient of the final hidden state.
    void backward(ParameterBlock& p, const Cache& cache, const std::vector<double>& dh_final) const {
        const double* U = p.val(prefix_ + ".U");
        double* dW = p.grd(prefix_ + ".W");
        double* dU = p.grd(prefix_ + ".U");
        double* db = p.grd(prefix_ + ".b");
        const std::size_t H = hidden_;

        std::vector<double> dh = dh_final, dc(H, 0.0), dz(4 * H);
        for (std::size_t t = cache.steps.size(); t > 0; --t) {
            const StepCache& sc = cache.steps[t - 1];
            for (std::size_t k = 0; k < H; ++k) {
                const double d_o = dh[k] * sc.tanh_c[k];
                const double d_c = dc[k] + dh[k] * sc.o[k] * (1.0 - sc.tanh_c[k] * sc.tanh_c[k]);
                const double d_i = d_c * sc.g[k];
                const double d_f = d_c * sc.c_prev[k];
                const double d_g = d_c * sc.i[k];
                dz[k] = d_i * sc.i[k] * (1.0 - sc.i[k]);
                dz[H + k] = d_f * sc.f[k] * (1.0 - sc.f[k]);
                dz[2 * H + k] = d_g * (1.0 - sc.g[k] * sc.g[k]);
                dz[3 * H + k] = d_o * sc.o[k] * (1.0 - sc.o[k]);
                dc[k] = d_c * sc.f[k];
            }
            detail::outer_acc(dW, 4 * H, in_, dz.data(), sc.x.data());
            detail::outer_acc(dU, 4 * H, H, dz.data(), sc.h_prev.data());
            for (std::size_t k = 0; k < 4 * H; ++k) db[k] += dz[k];
            std::fill(dh.begin(), dh.end(), 0.0);
            detail::matvec_t_acc(U, 4 * H, H, dz.data(), dh.data());
        }
    }

    std::size_t hidden() const { return hidden_; }
    std::size_t input() const { return in_; }

private:
    std::string prefix_;
    std::size_t in_ = 0;
    std::size_t hidden_ = 0;
};

// Fully connected stack, tanh on hidden layers, linear output.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::string prefix, std::vector<std::size_t> dims)
        : prefix_(std::move(prefix)), dims_(std::move(dims)) {
        if (dims_.size() < 2) throw std::logic_error("Mlp: need at least input and output dims");
    }

    void register_params(ParameterBlock& p) const {
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            p.register_slice(layer_name(l) + ".W", dims_[l + 1], dims_[l]);
            p.register_slice(layer_name(l) + ".b", dims_[l + 1]);
        }
    }

    // zero_last makes the output layer start at exactly zero.
    void init(ParameterBlock& p, Rng& rng, bool zero_last) const {
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            double* w = p.val(layer_name(l) + ".W");
            double* b = p.val(layer_name(l) + ".b");
            const bool last = l + 2 == dims_.size();
            if (last && zero_last)
                std::fill(w, w + dims_[l + 1] * dims_[l], 0.0);
            else
                glorot_uniform(w, dims_[l + 1], dims_[l], rng);
            std::fill(b, b + dims_[l + 1], 0.0);
        }
    }

    struct Cache {
        std::vector<std::vector<double>> acts; // acts[0] = input, post-activation per layer
    };

    std::vector<double> forward(const ParameterBlock& p, const std::vector<double>& input,
                                Cache& cache) const {
        if (input.size() != dims_.front()) throw std::logic_error("Mlp: input width mismatch");
        cache.acts.clear();
        cache.acts.push_back(input);
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            const double* W = p.val(layer_name(l) + ".W");
            const double* b = p.val(layer_name(l) + ".b");
            std::vector<double> out(b, b + dims_[l + 1]);
            detail::matvec_acc(W, dims_[l + 1], dims_[l], cache.acts.back().data(), out.data());
            if (l + 2 < dims_.size())
                for (double& v : out) v = std::tanh(v);
            cache.acts.push_back(std::move(out));
        }
        return cache.acts.back();
    }

    // Returns the gradient with respect to the input.
    std::vector<double> backward(ParameterBlock& p, const Cache& cache,
                                 const std::vector<double>& dout) const {
        std::vector<double> d = dout;
        for (std::size_t l = dims_.size() - 1; l-- > 0;) {
            const bool last = l + 2 == dims_.size();
            std::vector<double> dpre = d;
            if (!last) {
                const auto& a = cache.acts[l + 1];
                for (std::size_t k = 0; k < dpre.size(); ++k) dpre[k] *= 1.0 - a[k] * a[k];
            }
            detail::outer_acc(p.grd(layer_name(l) + ".W"), dims_[l + 1], dims_[l], dpre.data(),
                              cache.acts[l].data());
            double* db = p.grd(layer_name(l) + ".b");
            for (std::size_t k = 0; k < dpre.size(); ++k) db[k] += dpre[k];
            std::vector<double> dprev(dims_[l], 0.0);
            detail::matvec_t_acc(p.val(layer_name(l) + ".W"), dims_[l + 1], dims_[l], dpre.data(),
                                 dprev.data());
            d = std::move(dprev);
        }
        return d;
    }

    const std::vector<std::size_t>& dims() const { return dims_; }

private:
    std::string layer_name(std::size_t l) const { return prefix_ + ".l" + std::to_string(l); }

    std::string prefix_;
    std::vector<std::size_t> dims_;
};

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;

struct NetSizes {
    std::size_t lstm_hidden = 32;
    std::size_t trunk_hidden = 64;
};

namespace detail {

inline std::vector<std::vector<double>> seq_rows(const EncodedObs& obs) {
    std::vector<std::vector<double>> rows;
    rows.reserve(obs.seq.size());
    for (const auto& r : obs.seq) rows.emplace_back(r.begin(), r.end());
    return rows;
}

inline std::vector<double> trunk_input(const EncodedObs& obs, const std::vector<double>& h) {
    std::vector<double> in;
    in.reserve(obs.extra.size() + h.size());
    in.insert(in.end(), obs.extra.begin(), obs.extra.end());
    in.insert(in.end(), h.begin(), h.end());
    return in;
}

} // namespace detail

// Diagonal Gaussian policy: obstacle sequence through the recurrent encoder,
// then joints + goal + encoding through the trunk to a 6-dim action mean.
// Log standard deviations are free parameters, clamped on read.
class PolicyNet {
public:
    explicit PolicyNet(NetSizes sizes = {})
        : lstm_("lstm", 12, sizes.lstm_hidden),
          trunk_("trunk", {9 + sizes.lstm_hidden, sizes.trunk_hidden, sizes.trunk_hidden, 6}) {
        lstm_.register_params(params);
        trunk_.register_params(params);
        params.register_slice("log_std", 6);
    }

    void init(Rng& rng, double log_std_init) {
        lstm_.init(params, rng);
        trunk_.init(params, rng, true);
        double* ls = params.val("log_std");
        std::fill(ls, ls + 6, log_std_init);
    }

    struct Cache {
        Lstm::Cache lstm;
        Mlp::Cache trunk;
    };

    struct Output {
        std::array<double, 6> mean{};
        std::array<double, 6> log_std{};
    };

    Output forward(const EncodedObs& obs, Cache& cache) const {
        cache.lstm = lstm_.forward(params, detail::seq_rows(obs));
        const auto out = trunk_.forward(params, detail::trunk_input(obs, cache.lstm.h_final),
                                        cache.trunk);
        Output o;
        std::copy(out.begin(), out.end(), o.mean.begin());
        const double* ls = params.val("log_std");
        for (int k = 0; k < 6; ++k) o.log_std[static_cast<std::size_t>(k)] = std::clamp(ls[k], kLogStdMin, kLogStdMax);
        return o;
    }

    Output forward(const EncodedObs& obs) const {
        Cache scratch;
        return forward(obs, scratch);
    }

    void backward(const Cache& cache, const std::array<double, 6>& dmean,
                  const std::array<double, 6>& dlog_std) {
        const double* ls = params.val("log_std");
        double* dls = params.grd("log_std");
        for (int k = 0; k < 6; ++k)
            if (ls[k] >= kLogStdMin && ls[k] <= kLogStdMax) dls[k] += dlog_std[static_cast<std::size_t>(k)];

        std::vector<double> dout(dmean.begin(), dmean.end());
        const auto dinput = trunk_.backward(params, cache.trunk, dout);
        std::vector<double> dh(dinput.begin() + 9, dinput.end());
        lstm_.backward(params, cache.lstm, dh);
    }

    ParameterBlock params;

private:
    Lstm lstm_;
    Mlp trunk_;
};

// Same construction as the policy, no shared parameters, scalar output.
class ValueNet {
public:
    explicit ValueNet(NetSizes sizes = {})
        : lstm_("lstm", 12, sizes.lstm_hidden),
          trunk_("trunk", {9 + sizes.lstm_hidden, sizes.trunk_hidden, sizes.trunk_hidden, 1}) {
        lstm_.register_params(params);
        trunk_.register_params(params);
    }

    void init(Rng& rng) {
        lstm_.init(params, rng);
        trunk_.init(params, rng, false);
    }

    struct Cache {
        Lstm::Cache lstm;
        Mlp::Cache trunk;
    };

    double forward(const EncodedObs& obs, Cache& cache) const {
        cache.lstm = lstm_.forward(params, detail::seq_rows(obs));
        return trunk_.forward(params, detail::trunk_input(obs, cache.lstm.h_final), cache.trunk)[0];
    }

    double forward(const EncodedObs& obs) const {
        Cache scratch;
        return forward(obs, scratch);
    }

    void backward(const Cache& cache, double dvalue) {
        const auto dinput = trunk_.backward(params, cache.trunk, {dvalue});
        std::vector<double> dh(dinput.begin() + 9, dinput.end());
        lstm_.backward(params, cache.lstm, dh);
    }

    ParameterBlock params;

private:
    Lstm lstm_;
    Mlp trunk_;
};

constexpr double kLogSqrt2Pi = 0.9189385332046727; // log(sqrt(2*pi))

inline double gaussian_logprob(const std::array<double, 6>& a, const std::array<double, 6>& mean,
                               const std::array<double, 6>& log_std) {
    double lp = 0.0;
    for (int k = 0; k < 6; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const double z = (a[i] - mean[i]) * std::exp(-log_std[i]);
        lp += -0.5 * z * z - log_std[i] - kLogSqrt2Pi;
    }
    return lp;
}

inline double gaussian_entropy(const std::array<double, 6>& log_std) {
    double h = 0.0;
    for (double ls : log_std) h += ls + 0.5 + kLogSqrt2Pi;
    return h;
}

// Accumulate d(logprob)/d(mean) and d(logprob)/d(log_std), scaled by upstream.
inline void gaussian_logprob_grad(const std::array<double, 6>& a, const std::array<double, 6>& mean,
                                  const std::array<double, 6>& log_std, double upstream,
                                  std::array<double, 6>& dmean, std::array<double, 6>& dlog_std) {
    for (int k = 0; k < 6; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const double inv_var = std::exp(-2.0 * log_std[i]);
        const double z2 = (a[i] - mean[i]) * (a[i] - mean[i]) * inv_var;
        dmean[i] += upstream * (a[i] - mean[i]) * inv_var;
        dlog_std[i] += upstream * (z2 - 1.0);
    }
}

inline void gaussian_entropy_grad(double upstream, std::array<double, 6>& dlog_std) {
    for (auto& d : dlog_std) d += upstream;
}

inline std::array<double, 6> sample_action(const PolicyNet::Output& out, Rng& rng) {
    std::array<double, 6> a{};
    for (int k = 0; k < 6; ++k) {
        const auto i = static_cast<std::size_t>(k);
        a[i] = out.mean[i] + std::exp(out.log_std[i]) * rng.normal();
    }
    return a;
}

} // namespace mldsim
