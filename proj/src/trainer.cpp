#include "siammm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "siammm/losses.hpp"
#include "siammm/parallel.hpp"

namespace siammm::train {

namespace {

void validate(const TrainConfig& cfg, std::size_t n_samples) {
    if (cfg.k0 < 1) throw std::invalid_argument("k0 must be at least 1");
    if (cfg.k0 > n_samples) throw std::invalid_argument("k0 exceeds the sample count");
    if (cfg.h < 1) throw std::invalid_argument("h must be at least 1");
    if (!(cfg.tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (!(cfg.m >= 0.0 && cfg.m <= 1.0)) throw std::invalid_argument("m must be in [0, 1]");
    if (!(cfg.lr_base >= 0.0)) throw std::invalid_argument("lr_base must be non-negative");
    if (cfg.em_iters < 1) throw std::invalid_argument("em_iters must be at least 1");
    if (!(cfg.pca_retention > 0.0 && cfg.pca_retention <= 1.0))
        throw std::invalid_argument("pca_retention must be in (0, 1]");
    if (cfg.embed_dim < 2) throw std::invalid_argument("embed_dim must be at least 2");
    if (cfg.hidden < 1) throw std::invalid_argument("hidden must be at least 1");
    if (!(cfg.kappa_max > 0.0)) throw std::invalid_argument("kappa_max must be positive");
}

struct PairLoss {
    double value = 0.0;
    Vec g1;
    Vec g2;
};

// negatives for one sample under nce2: momentum embeddings of batch mates
// assigned to a different cluster, opposite view
Matrix gather_negatives(const std::vector<net::ForwardResult>& batch,
                        const std::vector<std::uint32_t>& assign, std::size_t self,
                        bool second_view) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < batch.size(); ++j)
        if (assign[j] != assign[self]) ++count;
    const std::size_t d = batch[self].v1.size();
    Matrix negs(count, d);
    std::size_t at = 0;
    for (std::size_t j = 0; j < batch.size(); ++j)
        if (assign[j] != assign[self])
            negs.set_row(at++, second_view ? batch[j].v2m : batch[j].v1m);
    return negs;
}

PairLoss sample_loss(const net::ForwardResult& f, const mixture::MixtureState& state,
                     std::uint32_t assigned, const TrainConfig& cfg, std::size_t h_eff,
                     const std::vector<net::ForwardResult>& batch,
                     const std::vector<std::uint32_t>& assign, std::size_t self) {
    losses::ClusterLossOptions opts;
    opts.detach_weights = cfg.weight_grad == WeightGrad::detached;

    PairLoss out;
    out.g1.assign(f.v1.size(), 0.0);
    out.g2.assign(f.v2.size(), 0.0);

    const bool want_instance = cfg.loss_mode == LossMode::siammm ||
                               cfg.loss_mode == LossMode::nce1 ||
                               cfg.loss_mode == LossMode::nce2 ||
                               cfg.loss_mode == LossMode::inst_only;
    if (want_instance) {
        losses::InstanceLossResult inst = losses::instance_loss(f.v1, f.v2, f.v1m, f.v2m);
        out.value += inst.value;
        for (std::size_t c = 0; c < out.g1.size(); ++c) {
            out.g1[c] += inst.grad_v1[c];
            out.g2[c] += inst.grad_v2[c];
        }
    }

    switch (cfg.loss_mode) {
        case LossMode::siammm:
        case LossMode::siammm_no_inst: {
            losses::LossValueGrad c1 = losses::cluster_loss(f.v1, state, h_eff, cfg.tau, opts);
            losses::LossValueGrad c2 = losses::cluster_loss(f.v2, state, h_eff, cfg.tau, opts);
            out.value += c1.value + c2.value;
            for (std::size_t c = 0; c < out.g1.size(); ++c) {
                out.g1[c] += c1.grad[c];
                out.g2[c] += c2.grad[c];
            }
            break;
        }
        case LossMode::nce1: {
            std::vector<std::uint32_t> neg_ids;
            neg_ids.reserve(state.k() - 1);
            for (const auto& comp : state.components)
                if (comp.id != assigned) neg_ids.push_back(comp.id);
            losses::LossValueGrad n1 =
                losses::nce_centroid_loss(f.v1, assigned, neg_ids, state);
            losses::LossValueGrad n2 =
                losses::nce_centroid_loss(f.v2, assigned, neg_ids, state);
            out.value += n1.value + n2.value;
            for (std::size_t c = 0; c < out.g1.size(); ++c) {
                out.g1[c] += n1.grad[c];
                out.g2[c] += n2.grad[c];
            }
            break;
        }
        case LossMode::nce2: {
            const auto& comp = state.components[state.index_of(assigned)];
            Matrix negs1 = gather_negatives(batch, assign, self, true);
            Matrix negs2 = gather_negatives(batch, assign, self, false);
            losses::LossValueGrad n1 = losses::nce_instance_loss(f.v1, negs1, comp);
            losses::LossValueGrad n2 = losses::nce_instance_loss(f.v2, negs2, comp);
            out.value += n1.value + n2.value;
            for (std::size_t c = 0; c < out.g1.size(); ++c) {
                out.g1[c] += n1.grad[c];
                out.g2[c] += n2.grad[c];
            }
            break;
        }
        case LossMode::inst_only:
            break;
    }
    return out;
}

}  // namespace

double cosine_lr(const TrainConfig& cfg, std::size_t epoch) {
    const double peak =
        cfg.lr_base * static_cast<double>(cfg.batch_size) / 256.0;
    if (cfg.epochs == 0) return peak;
    const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
    return peak * 0.5 * (1.0 + std::cos(t * 3.14159265358979323846));
}

Matrix embed_all(const net::SiameseNet& nn, const Matrix& x, EmbedBranch branch) {
    const std::size_t out_dim = nn.projector.layers.back().w.rows;
    Matrix out(x.rows, out_dim);
    parallel_for(x.rows, [&](std::size_t i) {
        Vec v = branch == EmbedBranch::momentum ? net::embed_momentum(nn, x.row_span(i))
                                                : net::embed_online(nn, x.row_span(i));
        out.set_row(i, v);
    });
    return out;
}

namespace {

// anything thrown while crunching numbers inside an epoch is a numeric
// failure, not a usage error; fit() validated the config up front
template <class F>
auto numeric_section(const char* phase, std::size_t epoch, F&& body) {
    try {
        return body();
    } catch (const numeric_error&) {
        throw;
    } catch (const std::exception& e) {
        std::ostringstream msg;
        msg << e.what() << " (" << phase << ", epoch " << epoch << ")";
        throw numeric_error(msg.str());
    }
}

}  // namespace

EpochReport run_epoch(const data::Dataset& ds, net::SiameseNet& nn,
                      mixture::MixtureState& state, const TrainConfig& cfg,
                      net::SgdState& opt, std::mt19937_64& rng, double lr) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochReport rep;
    rep.epoch = state.epoch;

    Matrix emb = numeric_section("embedding pass", rep.epoch,
                                 [&] { return embed_all(nn, ds.x, cfg.embed_branch); });

    if (cfg.centroid_mode == CentroidMode::reinit) {
        mixture::MixtureState fresh = mixture::init_centroids(emb, state.k(), rng, cfg.kappa0);
        fresh.epoch = state.epoch;
        state = std::move(fresh);
    }

    numeric_section("EM refit", rep.epoch, [&] {
        mixture::MStepConfig mcfg;
        mcfg.guards.kappa_max = cfg.kappa_max;
        mcfg.min_count = cfg.min_count;
        for (int it = 0; it < cfg.em_iters; ++it) {
            if (cfg.assign_mode == AssignMode::hard_cosine) {
                state.assignments = mixture::e_step_hard(emb, state);
                mixture::m_step_hard(emb, state, mcfg);
            } else {
                Matrix resp = mixture::responsibilities(emb, state);
                mixture::m_step_soft(emb, resp, state, mcfg);
            }
            if (cfg.kappa_mode == KappaMode::pca)
                mixture::kappa_pca(state, cfg.pca_retention, mcfg.guards);
        }
    });

    rep.log_likelihood = mixture::log_likelihood(emb, state);

    std::vector<std::size_t> order(ds.n());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t h_eff = std::min(cfg.h, state.k());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < ds.n(); start += cfg.batch_size) {
        numeric_section("minibatch update", rep.epoch, [&] {
            const std::size_t b = std::min(cfg.batch_size, ds.n() - start);
            std::vector<net::ForwardResult> batch(b);
            std::vector<std::uint32_t> assign(b);
            for (std::size_t j = 0; j < b; ++j) {
                const std::size_t i = order[start + j];
                auto [x1, x2] =
                    net::augment(ds.x.row_span(i), cfg.sigma_aug, cfg.p_drop, rng);
                batch[j] = net::forward(nn, x1, x2);
                assign[j] = state.assignments.cluster_of[i];
            }
            net::NetGrads grads = net::zero_grads(nn);
            const double inv_b = 1.0 / static_cast<double>(b);
            for (std::size_t j = 0; j < b; ++j) {
                PairLoss pl = sample_loss(batch[j], state, assign[j], cfg, h_eff, batch,
                                          assign, j);
                if (!std::isfinite(pl.value)) {
                    std::ostringstream msg;
                    msg << "non-finite loss " << pl.value << " at epoch " << rep.epoch
                        << ", batch " << start / cfg.batch_size << ", sample "
                        << order[start + j];
                    throw numeric_error(msg.str());
                }
                loss_sum += pl.value;
                for (double& g : pl.g1) g *= inv_b;
                for (double& g : pl.g2) g *= inv_b;
                net::backward(nn, batch[j].tape1, pl.g1, grads);
                net::backward(nn, batch[j].tape2, pl.g2, grads);
            }
            net::sgd_step(nn, grads, opt, lr, cfg.sgd_momentum, cfg.weight_decay);
            net::momentum_update(nn);
        });
    }
    rep.mean_loss = ds.n() > 0 ? loss_sum / static_cast<double>(ds.n()) : 0.0;

    if (cfg.merge_enabled && state.k() >= 2) {
        mixture::MergeConfig mc;
        mc.mode = cfg.merge_mode;
        mc.zeta = cfg.zeta;
        mc.percentile = cfg.percentile;
        rep.merges = mixture::merge_pass(state, mc).absorbed;
    }

    state.epoch += 1;
    rep.k = state.k();
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

FitResult fit(const data::Dataset& ds, const TrainConfig& cfg, const std::string& out_dir,
              std::ostream* progress) {
    validate(cfg, ds.n());
    std::mt19937_64 rng(cfg.seed);

    FitResult res;
    net::NetConfig ncfg;
    ncfg.in_dim = ds.dim();
    ncfg.hidden = cfg.hidden;
    ncfg.embed = cfg.embed_dim;
    ncfg.m = cfg.m;
    res.net = net::make_net(ncfg, rng);

    // the one-time centroid initialization
    Matrix emb0 = embed_all(res.net, ds.x, cfg.embed_branch);
    res.state = mixture::init_centroids(emb0, cfg.k0, rng, cfg.kappa0);

    std::ofstream traj;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        traj.open(out_dir + "/trajectory.jsonl");
        if (!traj) throw std::runtime_error("cannot open " + out_dir + "/trajectory.jsonl");
    }

    net::SgdState opt;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(cfg, epoch);
        EpochReport rep = run_epoch(ds, res.net, res.state, cfg, opt, rng, lr);
        res.trajectory.push_back(rep);
        if (traj.is_open()) {
            nlohmann::json j;
            j["epoch"] = rep.epoch;
            j["K"] = rep.k;
            j["log_likelihood"] = rep.log_likelihood;
            j["mean_loss"] = rep.mean_loss;
            j["merges"] = rep.merges;
            j["wall_seconds"] = rep.wall_seconds;
            traj << j.dump() << '\n' << std::flush;
        }
        if (progress) {
            (*progress) << "epoch " << rep.epoch << ": K=" << rep.k
                        << " ll=" << rep.log_likelihood << " loss=" << rep.mean_loss
                        << " merges=" << rep.merges << " (" << rep.wall_seconds << "s)\n";
        }
    }

    if (!out_dir.empty()) {
        std::ofstream curve(out_dir + "/clusters.csv");
        if (!curve) throw std::runtime_error("cannot open " + out_dir + "/clusters.csv");
        curve << "epoch,K\n";
        for (const EpochReport& r : res.trajectory) curve << r.epoch << ',' << r.k << '\n';
        mixture::save_snapshot(out_dir + "/mixture.smm1", res.state);
        mixture::save_snapshot_json(out_dir + "/mixture.json", res.state);
        net::save_checkpoint(out_dir + "/net.smmc", res.net);
    }
    return res;
}

ClusterEmResult cluster_em(const Matrix& unit_rows, const ClusterEmConfig& cfg) {
    if (cfg.k0 < 1) throw std::invalid_argument("k0 must be at least 1");
    if (cfg.k0 > unit_rows.rows) throw std::invalid_argument("k0 exceeds the sample count");
    if (cfg.iters < 0) throw std::invalid_argument("iters must be non-negative");
    std::mt19937_64 rng(cfg.seed);
    ClusterEmResult res;
    res.state = mixture::init_centroids(unit_rows, cfg.k0, rng, cfg.kappa0);
    for (int it = 0; it < cfg.iters; ++it) {
        if (cfg.soft) {
            Matrix resp = mixture::responsibilities(unit_rows, res.state);
            mixture::m_step_soft(unit_rows, resp, res.state);
        } else {
            res.state.assignments = mixture::e_step_hard(unit_rows, res.state);
            mixture::m_step_hard(unit_rows, res.state);
        }
        res.log_likelihoods.push_back(mixture::log_likelihood(unit_rows, res.state));
        if (cfg.merge && res.state.k() >= 2) mixture::merge_pass(res.state, cfg.merge_cfg);
        res.k_after.push_back(res.state.k());
        res.state.epoch += 1;
    }
    return res;
}

}  // namespace siammm::train
