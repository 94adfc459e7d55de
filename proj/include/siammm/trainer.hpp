#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "siammm/data.hpp"
#include "siammm/matrix.hpp"
#include "siammm/mixture.hpp"
#include "siammm/net.hpp"

namespace siammm::train {

// thrown when training hits a non-finite loss or gradient
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class KappaMode : std::uint8_t { plain = 0, pca = 1 };
enum class LossMode : std::uint8_t {
    siammm = 0,
    siammm_no_inst = 1,
    nce1 = 2,
    nce2 = 3,
    inst_only = 4
};
enum class AssignMode : std::uint8_t { hard_cosine = 0, posterior = 1 };
enum class WeightGrad : std::uint8_t { through_pi = 0, detached = 1 };
enum class CentroidMode : std::uint8_t { consistent = 0, reinit = 1 };
enum class EmbedBranch : std::uint8_t { momentum = 0, online = 1 };

struct TrainConfig {
    std::size_t k0 = 50;
    std::size_t h = 5;
    double tau = 0.02;
    mixture::MergeConfig::Mode merge_mode = mixture::MergeConfig::Mode::z_threshold;
    double zeta = -1.2;
    double percentile = 0.10;
    bool merge_enabled = true;
    double m = 0.99;
    double lr_base = 0.1;
    std::size_t batch_size = 256;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    double sigma_aug = 0.1;
    double p_drop = 0.1;
    KappaMode kappa_mode = KappaMode::plain;
    double pca_retention = 0.8;
    LossMode loss_mode = LossMode::siammm;
    AssignMode assign_mode = AssignMode::hard_cosine;
    WeightGrad weight_grad = WeightGrad::through_pi;
    CentroidMode centroid_mode = CentroidMode::consistent;
    EmbedBranch embed_branch = EmbedBranch::momentum;
    int em_iters = 1;
    double sgd_momentum = 0.9;
    double weight_decay = 1e-6;
    std::size_t hidden = 64;
    std::size_t embed_dim = 16;
    double kappa0 = 1.0;
    double kappa_max = 1e5;
    std::size_t min_count = 2;
};

struct EpochReport {
    std::size_t epoch = 0;
    std::size_t k = 0;
    double log_likelihood = 0.0;
    double mean_loss = 0.0;
    std::size_t merges = 0;
    double wall_seconds = 0.0;
};

// peak lr_base * batch_size / 256, cosine-decayed over the epoch budget
double cosine_lr(const TrainConfig& cfg, std::size_t epoch);

Matrix embed_all(const net::SiameseNet& nn, const Matrix& x, EmbedBranch branch);

// One epoch: E-step and M-step on full-data embeddings, the minibatch
// training loop, then a merge pass.
EpochReport run_epoch(const data::Dataset& ds, net::SiameseNet& nn,
                      mixture::MixtureState& state, const TrainConfig& cfg,
                      net::SgdState& opt, std::mt19937_64& rng, double lr);

struct FitResult {
    net::SiameseNet net;
    mixture::MixtureState state;
    std::vector<EpochReport> trajectory;
};

// Full training run. Centroids are initialized exactly once, before the
// first epoch. A non-empty out_dir receives trajectory.jsonl, clusters.csv,
// mixture.smm1, mixture.json, and net.smmc; progress, when given, gets one
// line per epoch.
FitResult fit(const data::Dataset& ds, const TrainConfig& cfg,
              const std::string& out_dir = "", std::ostream* progress = nullptr);

// Standalone EM on fixed embeddings (no encoder), soft or hard, with an
// optional merge pass per iteration.
struct ClusterEmConfig {
    std::size_t k0 = 10;
    int iters = 20;
    bool soft = true;
    bool merge = false;
    mixture::MergeConfig merge_cfg;
    std::uint64_t seed = 0;
    double kappa0 = 1.0;
};

struct ClusterEmResult {
    mixture::MixtureState state;
    std::vector<double> log_likelihoods;  // after each M-step
    std::vector<std::size_t> k_after;     // K at the end of each iteration
};

ClusterEmResult cluster_em(const Matrix& unit_rows, const ClusterEmConfig& cfg);

}  // namespace siammm::train
