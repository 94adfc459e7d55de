#include "siammm/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "siammm/binio.hpp"
#include "siammm/parallel.hpp"

namespace siammm::mixture {

namespace {

void check_dims(const Matrix& embeddings, const MixtureState& state, const char* what) {
    if (embeddings.cols != state.dim)
        throw std::invalid_argument(std::string(what) + ": embedding dimension mismatch");
    if (state.components.empty())
        throw std::invalid_argument(std::string(what) + ": mixture has no components");
}

// cosine argmax over components, ties to the lowest id (components are kept
// in ascending id order, so a strict > scan realizes the tie rule)
std::uint32_t assign_one(std::span<const double> v, const std::vector<VmfComponent>& comps) {
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t best_id = comps.front().id;
    for (const auto& c : comps) {
        const double s = dot(v, c.mu);
        if (s > best) {
            best = s;
            best_id = c.id;
        }
    }
    return best_id;
}

double log_sum_exp(std::span<const double> x) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) m = std::max(m, v);
    if (std::isinf(m)) return m;
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - m);
    return m + std::log(acc);
}

// log alpha_k + log c_d(kappa_k) per component, the embedding-independent
// part of each mixture log term
Vec component_log_prefix(const MixtureState& state) {
    Vec pre(state.k());
    for (std::size_t j = 0; j < state.k(); ++j) {
        const auto& c = state.components[j];
        pre[j] = std::log(c.alpha) + vmf::log_norm_const(static_cast<int>(state.dim), c.kappa);
    }
    return pre;
}

}  // namespace

std::size_t MixtureState::index_of(std::uint32_t id) const {
    for (std::size_t j = 0; j < components.size(); ++j)
        if (components[j].id == id) return j;
    throw std::out_of_range("MixtureState: component id " + std::to_string(id) +
                            " is not live");
}

MixtureState init_centroids(const Matrix& embeddings, std::size_t k0, std::mt19937_64& rng,
                            double kappa0) {
    const std::size_t n = embeddings.rows;
    const std::size_t d = embeddings.cols;
    if (k0 < 1) throw std::invalid_argument("init_centroids: k0 must be >= 1");
    if (k0 > n) throw std::invalid_argument("init_centroids: k0 exceeds sample count");
    if (d < 2) throw std::invalid_argument("init_centroids: dimension must be >= 2");

    // k-means++ on cosine distance: next seed drawn with probability
    // proportional to (1 - best cosine)^2. Hand-rolled CDF walk so the draw
    // sequence is identical across platforms.
    std::vector<std::size_t> seeds;
    seeds.reserve(k0);
    std::vector<char> chosen(n, 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    seeds.push_back(first(rng));
    chosen[seeds[0]] = 1;
    Vec best_sim(n, -1.0);
    Vec weight(n, 0.0);
    while (seeds.size() < k0) {
        const double* last_seed = embeddings.data.data() + seeds.back() * d;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s =
                dot(std::span(embeddings.data.data() + i * d, d), std::span(last_seed, d));
            best_sim[i] = std::max(best_sim[i], s);
            const double dist = std::max(0.0, 1.0 - best_sim[i]);
            weight[i] = chosen[i] ? 0.0 : dist * dist;
            total += weight[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            const double u = unif(rng) * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += weight[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {  // u landed on the last positive weight's edge
                for (std::size_t i = n; i-- > 0;)
                    if (weight[i] > 0.0) {
                        pick = i;
                        break;
                    }
            }
        } else {
            // duplicates only: pick uniformly among unchosen points
            std::vector<std::size_t> open;
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) open.push_back(i);
            pick = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
        }
        chosen[pick] = 1;
        seeds.push_back(pick);
    }

    MixtureState state;
    state.dim = d;
    state.components.resize(k0);
    for (std::size_t j = 0; j < k0; ++j) {
        auto& c = state.components[j];
        c.id = static_cast<std::uint32_t>(j);
        c.mu = Vec(embeddings.data.begin() + seeds[j] * d,
                   embeddings.data.begin() + (seeds[j] + 1) * d);
        c.kappa = kappa0;
        c.alpha = 1.0 / static_cast<double>(k0);
    }
    state.assignments = e_step_hard(embeddings, state);

    // refit each seed to the mean of its assigned points so that k0=1 lands
    // on the normalized data resultant
    Matrix rsum(k0, d);
    std::vector<std::size_t> counts(k0, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t id = state.assignments.cluster_of[i];
        double* dst = rsum.data.data() + id * d;
        const double* src = embeddings.data.data() + i * d;
        for (std::size_t jj = 0; jj < d; ++jj) dst[jj] += src[jj];
        ++counts[id];
    }
    for (std::size_t j = 0; j < k0; ++j) {
        auto& c = state.components[j];
        c.member_count = counts[j];
        if (counts[j] == 0) {
            c.r = c.mu;  // empty seed keeps its point; first m_step will drop it
            continue;
        }
        Vec r(rsum.data.begin() + j * d, rsum.data.begin() + (j + 1) * d);
        for (double& x : r) x /= static_cast<double>(counts[j]);
        const double rn = l2_norm(r);
        if (rn < vmf::Guards{}.eps_resultant) {
            c.r = c.mu;
            continue;
        }
        c.r = r;
        c.mu = Vec(d);
        for (std::size_t jj = 0; jj < d; ++jj) c.mu[jj] = r[jj] / rn;
    }
    return state;
}

AssignmentTable e_step_hard(const Matrix& embeddings, const MixtureState& state) {
    check_dims(embeddings, state, "e_step_hard");
    AssignmentTable table;
    table.cluster_of.resize(embeddings.rows);
    parallel_for(embeddings.rows, [&](std::size_t i) {
        table.cluster_of[i] = assign_one(embeddings.row_span(i), state.components);
    });
    return table;
}

AssignmentTable e_step_hard_serial(const Matrix& embeddings, const MixtureState& state) {
    check_dims(embeddings, state, "e_step_hard");
    AssignmentTable table;
    table.cluster_of.resize(embeddings.rows);
    for (std::size_t i = 0; i < embeddings.rows; ++i)
        table.cluster_of[i] = assign_one(embeddings.row_span(i), state.components);
    return table;
}

namespace {

void responsibilities_row(const Matrix& embeddings, const MixtureState& state,
                          const Vec& pre, std::size_t i, double* out) {
    const std::size_t k = state.k();
    for (std::size_t j = 0; j < k; ++j)
        out[j] = pre[j] + state.components[j].kappa * dot(embeddings.row_span(i),
                                                          state.components[j].mu);
    const double lse = log_sum_exp(std::span(out, k));
    for (std::size_t j = 0; j < k; ++j) out[j] = std::exp(out[j] - lse);
}

}  // namespace

Matrix responsibilities(const Matrix& embeddings, const MixtureState& state) {
    check_dims(embeddings, state, "responsibilities");
    const Vec pre = component_log_prefix(state);
    Matrix resp(embeddings.rows, state.k());
    parallel_for(embeddings.rows, [&](std::size_t i) {
        responsibilities_row(embeddings, state, pre, i, resp.data.data() + i * state.k());
    });
    return resp;
}

Matrix responsibilities_serial(const Matrix& embeddings, const MixtureState& state) {
    check_dims(embeddings, state, "responsibilities");
    const Vec pre = component_log_prefix(state);
    Matrix resp(embeddings.rows, state.k());
    for (std::size_t i = 0; i < embeddings.rows; ++i)
        responsibilities_row(embeddings, state, pre, i, resp.data.data() + i * state.k());
    return resp;
}

namespace {

// Shared M-step tail: given per-component soft counts and r accumulators,
// refit survivors, drop the rest, renormalize alpha, and fix assignments.
void finish_m_step(const Matrix& embeddings, MixtureState& state, const Matrix& rsum,
                   const Vec& soft_count, const std::vector<std::size_t>& hard_count,
                   const MStepConfig& cfg) {
    const std::size_t d = state.dim;
    const std::size_t k = state.k();
    const double n = static_cast<double>(embeddings.rows);

    std::vector<char> keep(k, 1);
    for (std::size_t j = 0; j < k; ++j)
        if (soft_count[j] < static_cast<double>(cfg.min_count)) keep[j] = 0;
    // never let the mixture die out entirely
    if (std::find(keep.begin(), keep.end(), 1) == keep.end()) {
        const std::size_t best = static_cast<std::size_t>(
            std::max_element(soft_count.begin(), soft_count.end()) - soft_count.begin());
        keep[best] = 1;
    }

    std::vector<VmfComponent> survivors;
    survivors.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
        if (!keep[j]) continue;
        VmfComponent c = state.components[j];
        Vec r(rsum.data.begin() + j * d, rsum.data.begin() + (j + 1) * d);
        for (double& x : r) x /= soft_count[j];
        const double rn = l2_norm(r);
        if (rn < cfg.guards.eps_resultant) {
            // degenerate resultant: direction is undefined, drop the component
            continue;
        }
        c.r = std::move(r);
        c.mu = Vec(d);
        for (std::size_t jj = 0; jj < d; ++jj) c.mu[jj] = c.r[jj] / rn;
        c.kappa = vmf::estimate_kappa(rn, static_cast<int>(d), cfg.guards);
        c.alpha = soft_count[j] / n;
        c.member_count = hard_count[j];
        survivors.push_back(std::move(c));
    }
    if (survivors.empty())
        throw std::runtime_error("m_step: every component degenerated");

    double alpha_total = 0.0;
    for (const auto& c : survivors) alpha_total += c.alpha;
    for (auto& c : survivors) c.alpha /= alpha_total;

    state.components = std::move(survivors);

    // redirect samples whose component died to the nearest surviving centroid
    if (state.assignments.cluster_of.size() == embeddings.rows) {
        std::uint32_t max_id = 0;
        for (const auto& c : state.components) max_id = std::max(max_id, c.id);
        std::vector<char> live(max_id + 1, 0);
        for (const auto& c : state.components) live[c.id] = 1;
        for (std::size_t i = 0; i < embeddings.rows; ++i) {
            std::uint32_t& a = state.assignments.cluster_of[i];
            if (a < live.size() && live[a]) continue;
            a = assign_one(embeddings.row_span(i), state.components);
            ++state.components[state.index_of(a)].member_count;
        }
    }
}

}  // namespace

void m_step_hard(const Matrix& embeddings, MixtureState& state, const MStepConfig& cfg) {
    check_dims(embeddings, state, "m_step_hard");
    if (state.assignments.cluster_of.size() != embeddings.rows)
        throw std::invalid_argument("m_step_hard: assignment table length mismatch");
    const std::size_t d = state.dim;
    const std::size_t k = state.k();
    Matrix rsum(k, d);
    Vec soft_count(k, 0.0);
    std::vector<std::size_t> hard_count(k, 0);
    for (std::size_t i = 0; i < embeddings.rows; ++i) {
        const std::size_t j = state.index_of(state.assignments.cluster_of[i]);
        double* dst = rsum.data.data() + j * d;
        const double* src = embeddings.data.data() + i * d;
        for (std::size_t jj = 0; jj < d; ++jj) dst[jj] += src[jj];
        soft_count[j] += 1.0;
        ++hard_count[j];
    }
    finish_m_step(embeddings, state, rsum, soft_count, hard_count, cfg);
}

void m_step_soft(const Matrix& embeddings, const Matrix& resp, MixtureState& state,
                 const MStepConfig& cfg) {
    check_dims(embeddings, state, "m_step_soft");
    const std::size_t d = state.dim;
    const std::size_t k = state.k();
    if (resp.rows != embeddings.rows || resp.cols != k)
        throw std::invalid_argument("m_step_soft: responsibility shape mismatch");
    Matrix rsum(k, d);
    Vec soft_count(k, 0.0);
    std::vector<std::size_t> hard_count(k, 0);
    state.assignments.cluster_of.assign(embeddings.rows, 0);
    for (std::size_t i = 0; i < embeddings.rows; ++i) {
        const double* p = resp.data.data() + i * k;
        const double* src = embeddings.data.data() + i * d;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < k; ++j) {
            double* dst = rsum.data.data() + j * d;
            for (std::size_t jj = 0; jj < d; ++jj) dst[jj] += p[j] * src[jj];
            soft_count[j] += p[j];
            if (p[j] > p[arg]) arg = j;
        }
        ++hard_count[arg];
        state.assignments.cluster_of[i] = state.components[arg].id;
    }
    finish_m_step(embeddings, state, rsum, soft_count, hard_count, cfg);
}

std::vector<std::uint32_t> nearest_centroids(std::span<const double> v,
                                             const MixtureState& state, std::size_t h) {
    if (v.size() != state.dim)
        throw std::invalid_argument("nearest_centroids: dimension mismatch");
    const std::size_t k = state.k();
    if (h < 1 || h > k) throw std::invalid_argument("nearest_centroids: h out of range");
    std::vector<std::pair<double, std::uint32_t>> sims;
    sims.reserve(k);
    for (const auto& c : state.components) sims.emplace_back(dot(v, c.mu), c.id);
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::uint32_t> ids(h);
    for (std::size_t j = 0; j < h; ++j) ids[j] = sims[j].second;
    return ids;
}

MergeStats merge_stats(const MixtureState& state) {
    const std::size_t k = state.k();
    MergeStats stats;
    stats.z.reserve(k * (k - 1) / 2);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            double sq = 0.0;
            for (std::size_t jj = 0; jj < state.dim; ++jj) {
                const double diff = state.components[i].mu[jj] - state.components[j].mu[jj];
                sq += diff * diff;
            }
            stats.z.push_back(std::sqrt(sq));
        }
    const double m = static_cast<double>(stats.z.size());
    for (double z : stats.z) stats.mean += z;
    stats.mean /= m;
    double var = 0.0;
    for (double z : stats.z) var += (z - stats.mean) * (z - stats.mean);
    stats.sd = std::sqrt(var / m);
    return stats;
}

namespace {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    // keep the smaller index as the representative so merged groups retain
    // their lowest component id
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b)
            parent[b] = a;
        else
            parent[a] = b;
    }
};

}  // namespace

MergeReport merge_pass(MixtureState& state, const MergeConfig& cfg, const vmf::Guards& guards) {
    const std::size_t k = state.k();
    if (k < 2) throw std::invalid_argument("merge_pass: need at least two components");
    const MergeStats stats = merge_stats(state);
    MergeReport report;
    if (stats.sd < 1e-15) {
        report.degenerate = true;
        return report;
    }

    std::vector<char> marked(stats.z.size(), 0);
    if (cfg.mode == MergeConfig::Mode::z_threshold) {
        for (std::size_t p = 0; p < stats.z.size(); ++p)
            if ((stats.z[p] - stats.mean) / stats.sd < cfg.zeta) marked[p] = 1;
    } else {
        const auto cnt = static_cast<std::size_t>(
            std::floor(cfg.percentile * static_cast<double>(stats.z.size())));
        std::vector<std::size_t> order(stats.z.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (stats.z[a] != stats.z[b]) return stats.z[a] < stats.z[b];
            return a < b;
        });
        for (std::size_t p = 0; p < cnt; ++p) marked[order[p]] = 1;
    }

    UnionFind uf(k);
    std::size_t pair_idx = 0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j, ++pair_idx)
            if (marked[pair_idx]) uf.unite(i, j);

    std::vector<std::vector<std::size_t>> groups(k);
    for (std::size_t j = 0; j < k; ++j) groups[uf.find(j)].push_back(j);

    std::vector<VmfComponent> merged;
    merged.reserve(k);
    std::vector<std::uint32_t> redirect;  // absorbed id -> kept id, sparse map
    std::uint32_t max_id = 0;
    for (const auto& c : state.components) max_id = std::max(max_id, c.id);
    redirect.resize(max_id + 1);
    for (const auto& c : state.components) redirect[c.id] = c.id;

    for (std::size_t rep = 0; rep < k; ++rep) {
        const auto& group = groups[rep];
        if (group.empty()) continue;
        if (group.size() == 1) {
            merged.push_back(state.components[rep]);
            continue;
        }
        VmfComponent c;
        c.id = state.components[rep].id;  // lowest id in the group
        c.r = Vec(state.dim, 0.0);
        double total_members = 0.0;
        double alpha = 0.0;
        std::size_t member_count = 0;
        for (std::size_t idx : group) {
            const auto& src = state.components[idx];
            total_members += static_cast<double>(src.member_count);
            alpha += src.alpha;
            member_count += src.member_count;
            redirect[src.id] = c.id;
        }
        for (std::size_t idx : group) {
            const auto& src = state.components[idx];
            const double w = total_members > 0.0
                                 ? static_cast<double>(src.member_count) / total_members
                                 : 1.0 / static_cast<double>(group.size());
            for (std::size_t jj = 0; jj < state.dim; ++jj) c.r[jj] += w * src.r[jj];
        }
        c.alpha = alpha;
        c.member_count = member_count;
        const double rn = l2_norm(c.r);
        if (rn < guards.eps_resultant) {
            // merged resultant degenerate: keep the representative's geometry
            c.mu = state.components[rep].mu;
            c.r = state.components[rep].r;
            c.kappa = state.components[rep].kappa;
        } else {
            c.mu = Vec(state.dim);
            for (std::size_t jj = 0; jj < state.dim; ++jj) c.mu[jj] = c.r[jj] / rn;
            c.kappa = vmf::estimate_kappa(rn, static_cast<int>(state.dim), guards);
        }
        merged.push_back(std::move(c));
        report.absorbed += group.size() - 1;
    }

    state.components = std::move(merged);
    for (auto& a : state.assignments.cluster_of) a = redirect[a];
    return report;
}

namespace {

// largest eigenpair of a symmetric PSD matrix by power iteration, with
// re-orthogonalization against already extracted directions
std::pair<double, Vec> power_iterate(const Matrix& m, const std::vector<Vec>& basis,
                                     std::mt19937_64& rng) {
    const std::size_t d = m.rows;
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec v(d);
    for (double& x : v) x = gauss(rng);
    auto orthogonalize = [&](Vec& u) {
        for (const Vec& b : basis) {
            const double p = dot(u, b);
            for (std::size_t j = 0; j < d; ++j) u[j] -= p * b[j];
        }
    };
    orthogonalize(v);
    double nv = l2_norm(v);
    if (nv < 1e-300) return {0.0, v};
    for (double& x : v) x /= nv;
    Vec w(d);
    for (int it = 0; it < 100000; ++it) {
        for (std::size_t i = 0; i < d; ++i) w[i] = dot(m.row_span(i), v);
        orthogonalize(w);
        const double nw = l2_norm(w);
        if (nw < 1e-300) return {0.0, v};
        double diff = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            w[j] /= nw;
            diff = std::max(diff, std::abs(w[j] - v[j]));
        }
        std::swap(v, w);
        if (diff < 1e-13) break;
    }
    double lambda = 0.0;
    for (std::size_t i = 0; i < d; ++i) lambda += v[i] * dot(m.row_span(i), v);
    return {lambda, v};
}

}  // namespace

PcaProjection fit_r_pca(const MixtureState& state, double retention_target) {
    const std::size_t k = state.k();
    const std::size_t d = state.dim;
    if (k < 2) throw std::invalid_argument("fit_r_pca: need at least two components");
    if (!(retention_target > 0.0) || retention_target > 1.0)
        throw std::invalid_argument("fit_r_pca: retention target must be in (0, 1]");

    // second moment of the r vectors; its top eigenvectors carry the shared
    // resultant structure the reduced kappa estimate should keep
    Matrix m(d, d);
    for (const auto& c : state.components)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                m.at(i, j) += c.r[i] * c.r[j] / static_cast<double>(k);
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += m.at(i, i);
    if (!(trace > 0.0))
        throw std::invalid_argument("fit_r_pca: all resultant vectors are zero");
    const double rank_tol = 1e-12 * trace;

    std::mt19937_64 rng(0x5eed5eedULL);  // internal, so the fit is deterministic
    std::vector<Vec> basis;
    double cum = 0.0;
    for (std::size_t jj = 0; jj < d; ++jj) {
        auto [lambda, v] = power_iterate(m, basis, rng);
        if (lambda <= rank_tol) break;
        cum += lambda;
        basis.push_back(v);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) m.at(a, b) -= lambda * v[a] * v[b];
        if (std::sqrt(cum / trace) >= retention_target - 1e-12) break;
    }

    PcaProjection proj;
    proj.d_pca = basis.size();
    proj.retention = std::min(1.0, std::sqrt(cum / trace));
    proj.basis = Matrix(d, proj.d_pca);
    for (std::size_t col = 0; col < proj.d_pca; ++col)
        for (std::size_t row = 0; row < d; ++row) proj.basis.at(row, col) = basis[col][row];
    return proj;
}

PcaProjection kappa_pca(MixtureState& state, double retention_target,
                        const vmf::Guards& guards) {
    PcaProjection proj = fit_r_pca(state, retention_target);
    if (proj.d_pca < 2) {
        // a 1-d vMF is not defined; fall back to the plain estimate
        for (auto& c : state.components)
            c.kappa = vmf::estimate_kappa(l2_norm(c.r), static_cast<int>(state.dim), guards);
        return proj;
    }
    for (auto& c : state.components) {
        double sq = 0.0;
        for (std::size_t col = 0; col < proj.d_pca; ++col) {
            double p = 0.0;
            for (std::size_t row = 0; row < state.dim; ++row)
                p += proj.basis.at(row, col) * c.r[row];
            sq += p * p;
        }
        c.kappa = vmf::estimate_kappa(std::sqrt(sq), static_cast<int>(proj.d_pca), guards);
    }
    return proj;
}

namespace {

constexpr std::size_t kLLBlock = 32;

// per-sample log mixture density; blocked so the summation order is fixed
// regardless of thread count
template <class Loop>
double log_likelihood_blocked(const Matrix& embeddings, const MixtureState& state,
                              Loop&& loop) {
    const Vec pre = component_log_prefix(state);
    const std::size_t n = embeddings.rows;
    const std::size_t nblocks = (n + kLLBlock - 1) / kLLBlock;
    Vec partial(nblocks, 0.0);
    loop(nblocks, [&](std::size_t b) {
        const std::size_t lo = b * kLLBlock;
        const std::size_t hi = std::min(n, lo + kLLBlock);
        Vec logp(state.k());
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            for (std::size_t j = 0; j < state.k(); ++j)
                logp[j] = pre[j] + state.components[j].kappa *
                                       dot(embeddings.row_span(i), state.components[j].mu);
            acc += log_sum_exp(logp);
        }
        partial[b] = acc;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace

double log_likelihood(const Matrix& embeddings, const MixtureState& state) {
    check_dims(embeddings, state, "log_likelihood");
    return log_likelihood_blocked(embeddings, state, [](std::size_t n, auto&& body) {
        parallel_for(n, body);
    });
}

double log_likelihood_serial(const Matrix& embeddings, const MixtureState& state) {
    check_dims(embeddings, state, "log_likelihood");
    return log_likelihood_blocked(embeddings, state, [](std::size_t n, auto&& body) {
        for (std::size_t b = 0; b < n; ++b) body(b);
    });
}

void save_snapshot(const std::string& path, const MixtureState& state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_snapshot: cannot open " + path);
    binio::write_magic(os, "SMM1");
    binio::write_u32(os, 1);  // version
    binio::write_u32(os, static_cast<std::uint32_t>(state.k()));
    binio::write_u32(os, static_cast<std::uint32_t>(state.dim));
    for (const auto& c : state.components) {
        binio::write_f64(os, c.kappa);
        binio::write_f64(os, c.alpha);
        for (double x : c.mu) binio::write_f64(os, x);
        for (double x : c.r) binio::write_f64(os, x);
    }
    if (!os) throw std::runtime_error("save_snapshot: write failed for " + path);
}

MixtureState load_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_snapshot: cannot open " + path);
    binio::expect_magic(is, "SMM1", path.c_str());
    const std::uint32_t version = binio::read_u32(is, "snapshot version");
    if (version != 1)
        throw std::runtime_error("load_snapshot: unsupported version " +
                                 std::to_string(version));
    const std::uint32_t k = binio::read_u32(is, "component count");
    const std::uint32_t d = binio::read_u32(is, "dimension");
    if (k < 1 || d < 2) throw std::runtime_error("load_snapshot: invalid header in " + path);
    MixtureState state;
    state.dim = d;
    state.components.resize(k);
    for (std::uint32_t j = 0; j < k; ++j) {
        auto& c = state.components[j];
        c.id = j;
        c.kappa = binio::read_f64(is, "kappa");
        c.alpha = binio::read_f64(is, "alpha");
        c.mu.resize(d);
        for (auto& x : c.mu) x = binio::read_f64(is, "mu");
        c.r.resize(d);
        for (auto& x : c.r) x = binio::read_f64(is, "r");
        if (!std::isfinite(c.kappa) || c.kappa < 0.0)
            throw std::runtime_error("load_snapshot: invalid kappa in " + path);
        check_unit(c.mu, "snapshot mu");
    }
    return state;
}

void save_snapshot_json(const std::string& path, const MixtureState& state) {
    nlohmann::json j;
    j["k"] = state.k();
    j["dim"] = state.dim;
    j["epoch"] = state.epoch;
    j["components"] = nlohmann::json::array();
    for (const auto& c : state.components) {
        nlohmann::json cj;
        cj["id"] = c.id;
        cj["kappa"] = c.kappa;
        cj["alpha"] = c.alpha;
        cj["member_count"] = c.member_count;
        cj["mu"] = c.mu;
        cj["r"] = c.r;
        j["components"].push_back(std::move(cj));
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_snapshot_json: cannot open " + path);
    os << j.dump(2) << "\n";
}

}  // namespace siammm::mixture
