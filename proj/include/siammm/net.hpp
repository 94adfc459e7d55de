#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "siammm/matrix.hpp"

namespace siammm::net {

enum class Activation : std::uint8_t { none = 0, tanh_act = 1, relu = 2 };

struct Layer {
    Matrix w;  // out x in
    Vec b;     // out
    Activation act = Activation::none;
};

struct MlpStack {
    std::vector<Layer> layers;

    std::size_t in_dim() const { return layers.front().w.cols; }
    std::size_t out_dim() const { return layers.back().w.rows; }
};

// Online chain: backbone -> projector -> predictor, output L2-normalized.
// Momentum chain: EMA copies of backbone and projector only, also normalized.
struct SiameseNet {
    MlpStack backbone;
    MlpStack projector;
    MlpStack predictor;
    MlpStack m_backbone;
    MlpStack m_projector;
    double m = 0.99;         // EMA coefficient
    std::uint64_t step = 0;  // optimizer steps taken
};

struct NetConfig {
    std::size_t in_dim = 16;
    std::size_t hidden = 64;
    std::size_t embed = 16;
    double m = 0.99;
    Activation act = Activation::tanh_act;
};

SiameseNet make_net(const NetConfig& cfg, std::mt19937_64& rng);

// Activation cache for one pass through the online chain. Layer records run
// backbone first, predictor last.
struct Tape {
    std::vector<Vec> inputs;    // input seen by each layer
    std::vector<Vec> preacts;   // w x + b per layer
    Vec pre_norm;               // chain output before normalization
    double norm = 0.0;
};

// Plain stack application without normalization; tape != nullptr records.
Vec stack_forward(const MlpStack& stack, std::span<const double> x, Tape* tape = nullptr);

struct ForwardResult {
    Vec v1, v2;    // online embeddings, unit
    Vec v1m, v2m;  // momentum embeddings, unit
    Tape tape1, tape2;
};

ForwardResult forward(const SiameseNet& net, std::span<const double> x1,
                      std::span<const double> x2);

// Single-view helpers. embed_online differentiably ends at the predictor;
// embed_momentum is the clustering embedding and never carries gradients.
Vec embed_online(const SiameseNet& net, std::span<const double> x, Tape* tape = nullptr);
Vec embed_momentum(const SiameseNet& net, std::span<const double> x);

struct StackGrads {
    std::vector<Matrix> w;
    std::vector<Vec> b;
};

struct NetGrads {
    StackGrads backbone;
    StackGrads projector;
    StackGrads predictor;
};

NetGrads zero_grads(const SiameseNet& net);
void accumulate(NetGrads& into, const NetGrads& g);

// Exact gradients of the online parameters for one view, chaining grad_v
// back through the normalization Jacobian and every layer. Results are
// accumulated into `grads`.
void backward(const SiameseNet& net, const Tape& tape, std::span<const double> grad_v,
              NetGrads& grads);

struct SgdState {
    NetGrads velocity;
    bool initialized = false;
};

// Momentum SGD with decoupled weight decay on the online stacks. Throws on
// non-finite gradients so divergence stops the run instead of corrupting it.
void sgd_step(SiameseNet& net, const NetGrads& grads, SgdState& opt, double lr,
              double momentum_coeff, double weight_decay);

// theta_m <- m * theta_m + (1 - m) * theta for backbone and projector.
void momentum_update(SiameseNet& net);

// Two views: additive Gaussian noise then coordinate dropout, both per view.
std::pair<Vec, Vec> augment(std::span<const double> x, double sigma_aug, double p_drop,
                            std::mt19937_64& rng);

void save_checkpoint(const std::string& path, const SiameseNet& net);
SiameseNet load_checkpoint(const std::string& path);

}  // namespace siammm::net
