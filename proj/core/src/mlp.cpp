#include "deepccg/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

#include "deepccg/errors.hpp"
#include "deepccg/rng.hpp"

namespace deepccg {

namespace {

void validate_dims(const std::vector<int>& dims) {
    if (dims.size() < 2) throw ConfigError("mlp: dims needs at least input and output sizes");
    for (int d : dims)
        if (d <= 0) throw ConfigError("mlp: all layer sizes must be positive");
}

void check_coshaped(const MlpParams& params, const Gradient& grad) {
    if (grad.dims != params.dims) throw ShapeError("mlp: gradient not co-shaped with params");
}

}  // namespace

MlpParams init_mlp(const std::vector<int>& dims, std::uint64_t seed) {
    validate_dims(dims);
    Rng rng(seed);
    MlpParams p;
    p.dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto fan_in = static_cast<std::size_t>(dims[l]);
        const auto fan_out = static_cast<std::size_t>(dims[l + 1]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> w(fan_out * fan_in);
        for (auto& e : w) e = uniform_range(rng, -bound, bound);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(fan_out, 0.0);
    }
    return p;
}

Gradient zero_gradient(const MlpParams& params) {
    Gradient g;
    g.dims = params.dims;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        g.weights.emplace_back(params.weights[l].size(), 0.0);
        g.biases.emplace_back(params.biases[l].size(), 0.0);
    }
    return g;
}

std::pair<std::vector<Vec>, ForwardCache> forward(const MlpParams& params,
                                                  const std::vector<Vec>& xs) {
    for (const Vec& x : xs)
        if (static_cast<int>(x.size()) != params.input_dim())
            throw ShapeError("mlp: input has dimension " + std::to_string(x.size()) +
                             ", expected " + std::to_string(params.input_dim()));

    ForwardCache cache;
    cache.acts.resize(params.num_layers() + 1);
    cache.acts[0] = xs;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const auto in_dim = static_cast<std::size_t>(params.dims[l]);
        const auto out_dim = static_cast<std::size_t>(params.dims[l + 1]);
        const bool hidden = l + 1 < params.num_layers();
        const auto& w = params.weights[l];
        const auto& b = params.biases[l];
        cache.acts[l + 1].resize(xs.size());
        for (std::size_t n = 0; n < xs.size(); ++n) {
            const Vec& in = cache.acts[l][n];
            Vec out(out_dim);
            for (std::size_t i = 0; i < out_dim; ++i) {
                double acc = b[i];
                const double* row = &w[i * in_dim];
                for (std::size_t j = 0; j < in_dim; ++j) acc += row[j] * in[j];
                out[i] = hidden ? std::max(0.0, acc) : acc;
            }
            cache.acts[l + 1][n] = std::move(out);
        }
    }
    for (const Vec& z : cache.acts.back())
        for (double v : z)
            if (!std::isfinite(v))
                throw NumericError("mlp: non-finite embedding (diverged parameters?)");
    return {cache.acts.back(), std::move(cache)};
}

std::vector<Vec> embed(const MlpParams& params, const std::vector<Vec>& xs) {
    return forward(params, xs).first;
}

Gradient backward(const MlpParams& params, const ForwardCache& cache,
                  const std::vector<Vec>& dLdz) {
    if (cache.acts.size() != params.num_layers() + 1)
        throw ShapeError("mlp: cache does not match params");
    const std::size_t batch = cache.acts[0].size();
    if (dLdz.size() != batch) throw ShapeError("mlp: dLdz batch size mismatch");
    for (const Vec& g : dLdz)
        if (static_cast<int>(g.size()) != params.output_dim())
            throw ShapeError("mlp: dLdz dimension mismatch");

    Gradient grad = zero_gradient(params);
    std::vector<Vec> delta = dLdz;  // gradient w.r.t. layer output
    for (std::size_t l = params.num_layers(); l-- > 0;) {
        const auto in_dim = static_cast<std::size_t>(params.dims[l]);
        const auto out_dim = static_cast<std::size_t>(params.dims[l + 1]);
        const auto& w = params.weights[l];
        auto& gw = grad.weights[l];
        auto& gb = grad.biases[l];
        std::vector<Vec> next_delta(batch, Vec(in_dim, 0.0));
        for (std::size_t n = 0; n < batch; ++n) {
            const Vec& in = cache.acts[l][n];
            const Vec& d = delta[n];
            for (std::size_t i = 0; i < out_dim; ++i) {
                const double di = d[i];
                gb[i] += di;
                double* gw_row = &gw[i * in_dim];
                const double* w_row = &w[i * in_dim];
                for (std::size_t j = 0; j < in_dim; ++j) {
                    gw_row[j] += di * in[j];
                    next_delta[n][j] += w_row[j] * di;
                }
            }
            if (l > 0) {
                // ReLU mask of the producing hidden layer; subgradient at 0 is 0.
                const Vec& act = cache.acts[l][n];
                for (std::size_t j = 0; j < in_dim; ++j)
                    if (act[j] <= 0.0) next_delta[n][j] = 0.0;
            }
        }
        delta = std::move(next_delta);
    }
    return grad;
}

MlpParams sgd_step(const MlpParams& params, const Gradient& grad, double eta) {
    check_coshaped(params, grad);
    if (eta <= 0.0) throw ConfigError("mlp: learning rate must be positive");
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        for (double g : grad.weights[l])
            if (!std::isfinite(g)) throw NumericError("mlp: non-finite weight gradient");
        for (double g : grad.biases[l])
            if (!std::isfinite(g)) throw NumericError("mlp: non-finite bias gradient");
    }
    MlpParams out = params;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        for (std::size_t i = 0; i < out.weights[l].size(); ++i)
            out.weights[l][i] += eta * grad.weights[l][i];
        for (std::size_t i = 0; i < out.biases[l].size(); ++i)
            out.biases[l][i] += eta * grad.biases[l][i];
    }
    return out;
}

Gradient scaled(const Gradient& grad, double factor) {
    Gradient out = grad;
    for (auto& layer : out.weights)
        for (auto& e : layer) e *= factor;
    for (auto& layer : out.biases)
        for (auto& e : layer) e *= factor;
    return out;
}

Gradient add(const Gradient& a, const Gradient& b) {
    if (a.dims != b.dims) throw ShapeError("mlp: gradient shape mismatch");
    Gradient out = a;
    for (std::size_t l = 0; l < out.weights.size(); ++l) {
        for (std::size_t i = 0; i < out.weights[l].size(); ++i) out.weights[l][i] += b.weights[l][i];
        for (std::size_t i = 0; i < out.biases[l].size(); ++i) out.biases[l][i] += b.biases[l][i];
    }
    return out;
}

Gradient finite_diff_grad(const MlpParams& params,
                          const std::function<double(const MlpParams&)>& scalar_loss_fn,
                          double h) {
    if (h <= 0.0) throw ConfigError("mlp: finite-difference step must be positive");
    Gradient grad = zero_gradient(params);
    MlpParams probe = params;
    auto central = [&](double& slot, double& out) {
        const double saved = slot;
        slot = saved + h;
        const double hi = scalar_loss_fn(probe);
        slot = saved - h;
        const double lo = scalar_loss_fn(probe);
        slot = saved;
        out = (hi - lo) / (2.0 * h);
    };
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        for (std::size_t i = 0; i < params.weights[l].size(); ++i)
            central(probe.weights[l][i], grad.weights[l][i]);
        for (std::size_t i = 0; i < params.biases[l].size(); ++i)
            central(probe.biases[l][i], grad.biases[l][i]);
    }
    return grad;
}

void save_mlp(std::ostream& out, const MlpParams& params) {
    out << "mlp-checkpoint v1\n";
    out << "dims " << params.dims.size();
    for (int d : params.dims) out << ' ' << d;
    out << '\n';
    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%a", v);
        out << buf << '\n';
    };
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        for (double v : params.weights[l]) put(v);
        for (double v : params.biases[l]) put(v);
    }
}

MlpParams load_mlp(std::istream& in) {
    std::string magic, version;
    in >> magic >> version;
    if (magic != "mlp-checkpoint" || version != "v1")
        throw ParseError("checkpoint: unrecognized header");
    std::string tag;
    std::size_t ndims = 0;
    in >> tag >> ndims;
    if (tag != "dims" || ndims < 2) throw ParseError("checkpoint: bad dims line");
    std::vector<int> dims(ndims);
    for (auto& d : dims) {
        if (!(in >> d) || d <= 0) throw ParseError("checkpoint: bad layer size");
    }

    MlpParams p;
    p.dims = dims;
    auto take = [&]() {
        std::string token;
        if (!(in >> token)) throw ParseError("checkpoint: truncated value list");
        char* end = nullptr;
        const double v = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size())
            throw ParseError("checkpoint: bad value '" + token + "'");
        return v;
    };
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto in_dim = static_cast<std::size_t>(dims[l]);
        const auto out_dim = static_cast<std::size_t>(dims[l + 1]);
        std::vector<double> w(out_dim * in_dim);
        for (auto& v : w) v = take();
        std::vector<double> b(out_dim);
        for (auto& v : b) v = take();
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    return p;
}

}  // namespace deepccg
