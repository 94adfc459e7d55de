#include "siammm/net.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "siammm/binio.hpp"

namespace siammm::net {

namespace {

double activate(double z, Activation act) {
    switch (act) {
        case Activation::none: return z;
        case Activation::tanh_act: return std::tanh(z);
        case Activation::relu: return z > 0.0 ? z : 0.0;
    }
    throw std::logic_error("unknown activation");
}

double activate_deriv(double z, Activation act) {
    switch (act) {
        case Activation::none: return 1.0;
        case Activation::tanh_act: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    }
    throw std::logic_error("unknown activation");
}

Layer make_layer(std::size_t out, std::size_t in, Activation act, std::mt19937_64& rng) {
    Layer l;
    l.w = Matrix(out, in);
    l.b = Vec(out, 0.0);
    l.act = act;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (double& x : l.w.data) x = unif(rng);
    return l;
}

Vec normalize_output(std::span<const double> u, double* norm_out) {
    Vec y(u.begin(), u.end());
    const double n = normalize_in_place(y);
    if (norm_out) *norm_out = n;
    return y;
}

}  // namespace

SiameseNet make_net(const NetConfig& cfg, std::mt19937_64& rng) {
    if (cfg.in_dim < 1 || cfg.hidden < 1 || cfg.embed < 2)
        throw std::invalid_argument("make_net: bad layer sizes");
    if (!(cfg.m >= 0.0 && cfg.m <= 1.0))
        throw std::invalid_argument("make_net: EMA coefficient out of [0,1]");
    SiameseNet net;
    net.m = cfg.m;
    net.backbone.layers = {make_layer(cfg.hidden, cfg.in_dim, cfg.act, rng),
                           make_layer(cfg.hidden, cfg.hidden, cfg.act, rng)};
    net.projector.layers = {make_layer(cfg.hidden, cfg.hidden, cfg.act, rng),
                            make_layer(cfg.embed, cfg.hidden, Activation::none, rng)};
    net.predictor.layers = {make_layer(cfg.hidden, cfg.embed, cfg.act, rng),
                            make_layer(cfg.embed, cfg.hidden, Activation::none, rng)};
    net.m_backbone = net.backbone;
    net.m_projector = net.projector;
    return net;
}

Vec stack_forward(const MlpStack& stack, std::span<const double> x, Tape* tape) {
    Vec cur(x.begin(), x.end());
    for (const Layer& l : stack.layers) {
        if (cur.size() != l.w.cols)
            throw std::invalid_argument("stack_forward: input length mismatch");
        Vec z(l.w.rows);
        for (std::size_t i = 0; i < l.w.rows; ++i) z[i] = l.b[i] + dot(l.w.row_span(i), cur);
        if (tape) {
            tape->inputs.push_back(cur);
            tape->preacts.push_back(z);
        }
        Vec a(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(z[i], l.act);
        cur = std::move(a);
    }
    return cur;
}

Vec embed_online(const SiameseNet& net, std::span<const double> x, Tape* tape) {
    Vec h = stack_forward(net.backbone, x, tape);
    h = stack_forward(net.projector, h, tape);
    h = stack_forward(net.predictor, h, tape);
    double norm = 0.0;
    Vec y = normalize_output(h, &norm);
    if (tape) {
        tape->pre_norm = std::move(h);
        tape->norm = norm;
    }
    return y;
}

Vec embed_momentum(const SiameseNet& net, std::span<const double> x) {
    Vec h = stack_forward(net.m_backbone, x);
    h = stack_forward(net.m_projector, h);
    return normalize_output(h, nullptr);
}

ForwardResult forward(const SiameseNet& net, std::span<const double> x1,
                      std::span<const double> x2) {
    ForwardResult out;
    out.v1 = embed_online(net, x1, &out.tape1);
    out.v2 = embed_online(net, x2, &out.tape2);
    out.v1m = embed_momentum(net, x1);
    out.v2m = embed_momentum(net, x2);
    return out;
}

namespace {

StackGrads zero_like(const MlpStack& stack) {
    StackGrads g;
    for (const Layer& l : stack.layers) {
        g.w.emplace_back(l.w.rows, l.w.cols);
        g.b.emplace_back(l.b.size(), 0.0);
    }
    return g;
}

void accumulate_stack(StackGrads& into, const StackGrads& g) {
    for (std::size_t l = 0; l < into.w.size(); ++l) {
        for (std::size_t i = 0; i < into.w[l].data.size(); ++i)
            into.w[l].data[i] += g.w[l].data[i];
        for (std::size_t i = 0; i < into.b[l].size(); ++i) into.b[l][i] += g.b[l][i];
    }
}

// gradient through one stack given records [base, base + layers) in the tape;
// returns the gradient with respect to the stack input
Vec backward_stack(const MlpStack& stack, const Tape& tape, std::size_t base,
                   Vec grad_out, StackGrads& grads) {
    for (std::size_t li = stack.layers.size(); li-- > 0;) {
        const Layer& l = stack.layers[li];
        const Vec& x = tape.inputs[base + li];
        const Vec& z = tape.preacts[base + li];
        Vec dz(z.size());
        for (std::size_t i = 0; i < z.size(); ++i)
            dz[i] = grad_out[i] * activate_deriv(z[i], l.act);
        Matrix& gw = grads.w[li];
        Vec& gb = grads.b[li];
        for (std::size_t i = 0; i < l.w.rows; ++i) {
            gb[i] += dz[i];
            double* grow = gw.row(i);
            for (std::size_t j = 0; j < l.w.cols; ++j) grow[j] += dz[i] * x[j];
        }
        Vec dx(l.w.cols, 0.0);
        for (std::size_t i = 0; i < l.w.rows; ++i) {
            const double* wrow = l.w.row(i);
            for (std::size_t j = 0; j < l.w.cols; ++j) dx[j] += wrow[j] * dz[i];
        }
        grad_out = std::move(dx);
    }
    return grad_out;
}

}  // namespace

NetGrads zero_grads(const SiameseNet& net) {
    return {zero_like(net.backbone), zero_like(net.projector), zero_like(net.predictor)};
}

void accumulate(NetGrads& into, const NetGrads& g) {
    accumulate_stack(into.backbone, g.backbone);
    accumulate_stack(into.projector, g.projector);
    accumulate_stack(into.predictor, g.predictor);
}

void backward(const SiameseNet& net, const Tape& tape, std::span<const double> grad_v,
              NetGrads& grads) {
    const std::size_t n_layers = net.backbone.layers.size() + net.projector.layers.size() +
                                 net.predictor.layers.size();
    if (tape.inputs.size() != n_layers || tape.preacts.size() != n_layers ||
        tape.pre_norm.empty())
        throw std::invalid_argument("backward: tape does not match this net");
    if (grad_v.size() != tape.pre_norm.size())
        throw std::invalid_argument("backward: upstream gradient length mismatch");

    // y = u / ||u||  =>  dL/du = (g - (g.y) y) / ||u||
    const std::size_t d = grad_v.size();
    Vec y(d);
    for (std::size_t j = 0; j < d; ++j) y[j] = tape.pre_norm[j] / tape.norm;
    const double gy = dot(grad_v, y);
    Vec du(d);
    for (std::size_t j = 0; j < d; ++j) du[j] = (grad_v[j] - gy * y[j]) / tape.norm;

    const std::size_t nb = net.backbone.layers.size();
    const std::size_t np = net.projector.layers.size();
    Vec g = backward_stack(net.predictor, tape, nb + np, std::move(du), grads.predictor);
    g = backward_stack(net.projector, tape, nb, std::move(g), grads.projector);
    backward_stack(net.backbone, tape, 0, std::move(g), grads.backbone);
}

namespace {

void sgd_stack(MlpStack& stack, const StackGrads& g, StackGrads& vel, double lr,
               double momentum_coeff, double weight_decay) {
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        Layer& layer = stack.layers[l];
        for (std::size_t i = 0; i < layer.w.data.size(); ++i) {
            const double grad = g.w[l].data[i];
            if (!std::isfinite(grad)) throw std::runtime_error("sgd_step: non-finite gradient");
            double& v = vel.w[l].data[i];
            v = momentum_coeff * v + grad;
            layer.w.data[i] -= lr * v + lr * weight_decay * layer.w.data[i];
        }
        for (std::size_t i = 0; i < layer.b.size(); ++i) {
            const double grad = g.b[l][i];
            if (!std::isfinite(grad)) throw std::runtime_error("sgd_step: non-finite gradient");
            double& v = vel.b[l][i];
            v = momentum_coeff * v + grad;
            // biases are exempt from weight decay
            layer.b[i] -= lr * v;
        }
    }
}

void ema_stack(MlpStack& target, const MlpStack& online, double m) {
    for (std::size_t l = 0; l < target.layers.size(); ++l) {
        for (std::size_t i = 0; i < target.layers[l].w.data.size(); ++i)
            target.layers[l].w.data[i] =
                m * target.layers[l].w.data[i] + (1.0 - m) * online.layers[l].w.data[i];
        for (std::size_t i = 0; i < target.layers[l].b.size(); ++i)
            target.layers[l].b[i] = m * target.layers[l].b[i] + (1.0 - m) * online.layers[l].b[i];
    }
}

}  // namespace

void sgd_step(SiameseNet& net, const NetGrads& grads, SgdState& opt, double lr,
              double momentum_coeff, double weight_decay) {
    if (!(lr >= 0.0)) throw std::invalid_argument("sgd_step: lr must be >= 0");
    if (!opt.initialized) {
        opt.velocity = zero_grads(net);
        opt.initialized = true;
    }
    sgd_stack(net.backbone, grads.backbone, opt.velocity.backbone, lr, momentum_coeff,
              weight_decay);
    sgd_stack(net.projector, grads.projector, opt.velocity.projector, lr, momentum_coeff,
              weight_decay);
    sgd_stack(net.predictor, grads.predictor, opt.velocity.predictor, lr, momentum_coeff,
              weight_decay);
    ++net.step;
}

void momentum_update(SiameseNet& net) {
    ema_stack(net.m_backbone, net.backbone, net.m);
    ema_stack(net.m_projector, net.projector, net.m);
}

std::pair<Vec, Vec> augment(std::span<const double> x, double sigma_aug, double p_drop,
                            std::mt19937_64& rng) {
    if (sigma_aug < 0.0 || p_drop < 0.0 || p_drop > 1.0)
        throw std::invalid_argument("augment: bad noise parameters");
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto one_view = [&]() {
        Vec v(x.begin(), x.end());
        if (sigma_aug > 0.0)
            for (double& e : v) e += sigma_aug * gauss(rng);
        if (p_drop > 0.0)
            for (double& e : v)
                if (unif(rng) < p_drop) e = 0.0;
        return v;
    };
    Vec a = one_view();
    Vec b = one_view();
    return {std::move(a), std::move(b)};
}

namespace {

void write_stack(std::ostream& os, const MlpStack& stack) {
    binio::write_u32(os, static_cast<std::uint32_t>(stack.layers.size()));
    for (const Layer& l : stack.layers) {
        binio::write_u32(os, static_cast<std::uint32_t>(l.w.rows));
        binio::write_u32(os, static_cast<std::uint32_t>(l.w.cols));
        binio::write_u8(os, static_cast<std::uint8_t>(l.act));
        for (double x : l.w.data) binio::write_f64(os, x);
        for (double x : l.b) binio::write_f64(os, x);
    }
}

MlpStack read_stack(std::istream& is) {
    MlpStack stack;
    const std::uint32_t n = binio::read_u32(is, "layer count");
    if (n == 0 || n > 64) throw std::runtime_error("checkpoint: implausible layer count");
    for (std::uint32_t l = 0; l < n; ++l) {
        const std::uint32_t rows = binio::read_u32(is, "layer rows");
        const std::uint32_t cols = binio::read_u32(is, "layer cols");
        const std::uint8_t act = binio::read_u8(is, "activation");
        if (rows == 0 || cols == 0 || act > 2)
            throw std::runtime_error("checkpoint: invalid layer header");
        Layer layer;
        layer.w = Matrix(rows, cols);
        layer.b = Vec(rows);
        layer.act = static_cast<Activation>(act);
        for (double& x : layer.w.data) x = binio::read_f64(is, "weight");
        for (double& x : layer.b) x = binio::read_f64(is, "bias");
        stack.layers.push_back(std::move(layer));
    }
    return stack;
}

}  // namespace

void save_checkpoint(const std::string& path, const SiameseNet& net) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    binio::write_magic(os, "SMMC");
    binio::write_u32(os, 1);  // version
    write_stack(os, net.backbone);
    write_stack(os, net.projector);
    write_stack(os, net.predictor);
    write_stack(os, net.m_backbone);
    write_stack(os, net.m_projector);
    binio::write_f64(os, net.m);
    binio::write_u64(os, net.step);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

SiameseNet load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    binio::expect_magic(is, "SMMC", path.c_str());
    const std::uint32_t version = binio::read_u32(is, "checkpoint version");
    if (version != 1)
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(version));
    SiameseNet net;
    net.backbone = read_stack(is);
    net.projector = read_stack(is);
    net.predictor = read_stack(is);
    net.m_backbone = read_stack(is);
    net.m_projector = read_stack(is);
    net.m = binio::read_f64(is, "ema coefficient");
    net.step = binio::read_u64(is, "step counter");
    if (!(net.m >= 0.0 && net.m <= 1.0))
        throw std::runtime_error("load_checkpoint: EMA coefficient out of range");
    return net;
}

}  // namespace siammm::net
