#include "siammm/evaluate.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "siammm/parallel.hpp"

namespace siammm::evaluate {

namespace {

// dense ids in the sorted order of the raw ids, so the smaller raw id keeps
// the smaller dense id
struct Compact {
    std::vector<std::uint32_t> ids;
    std::vector<std::size_t> counts;
};

Compact compact_labels(const std::vector<std::uint32_t>& raw) {
    std::vector<std::uint32_t> uniq(raw);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    Compact out;
    out.ids.resize(raw.size());
    out.counts.assign(uniq.size(), 0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto it = std::lower_bound(uniq.begin(), uniq.end(), raw[i]);
        const auto id = static_cast<std::uint32_t>(it - uniq.begin());
        out.ids[i] = id;
        ++out.counts[id];
    }
    return out;
}

// per-thread histograms merged in thread order; integer adds make the result
// independent of the merge order anyway
std::vector<std::size_t> contingency(const Compact& a, const Compact& b) {
    const std::size_t ka = a.counts.size();
    const std::size_t kb = b.counts.size();
    const std::size_t n = a.ids.size();
    const int nt = max_threads();
    std::vector<std::vector<std::size_t>> local(nt,
                                                std::vector<std::size_t>(ka * kb, 0));
#pragma omp parallel num_threads(nt)
    {
        auto& mine = local[omp_get_thread_num()];
#pragma omp for schedule(static)
        for (long long i = 0; i < static_cast<long long>(n); ++i)
            ++mine[static_cast<std::size_t>(a.ids[i]) * kb + b.ids[i]];
    }
    std::vector<std::size_t> table(ka * kb, 0);
    for (const auto& mine : local)
        for (std::size_t c = 0; c < table.size(); ++c) table[c] += mine[c];
    return table;
}

double entropy(const std::vector<std::size_t>& counts, double n, double log_n) {
    double h = 0.0;
    for (std::size_t c : counts)
        if (c > 0) h += (static_cast<double>(c) / n) * (log_n - std::log(static_cast<double>(c)));
    return h;
}

// exact expectation of MI when one labeling is permuted uniformly at random:
// cell counts follow the hypergeometric law set by the margins
double expected_mi(const std::vector<std::size_t>& a_counts,
                   const std::vector<std::size_t>& b_counts, std::size_t n_samples) {
    const auto n = static_cast<double>(n_samples);
    const double log_n = std::log(n);
    std::vector<double> log_fact(n_samples + 1);
    for (std::size_t k = 0; k <= n_samples; ++k)
        log_fact[k] = std::lgamma(static_cast<double>(k) + 1.0);

    double emi = 0.0;
    for (std::size_t ai : a_counts)
        for (std::size_t bj : b_counts) {
            const std::size_t lo =
                ai + bj > n_samples ? ai + bj - n_samples : static_cast<std::size_t>(1);
            const std::size_t hi = std::min(ai, bj);
            const double log_margin = log_fact[ai] + log_fact[bj] + log_fact[n_samples - ai] +
                                      log_fact[n_samples - bj] - log_fact[n_samples];
            for (std::size_t nij = std::max<std::size_t>(lo, 1); nij <= hi; ++nij) {
                const double log_p = log_margin - log_fact[nij] - log_fact[ai - nij] -
                                     log_fact[bj - nij] -
                                     log_fact[n_samples - ai - bj + nij];
                const double term = (static_cast<double>(nij) / n) *
                                    (log_n + std::log(static_cast<double>(nij)) -
                                     std::log(static_cast<double>(ai)) -
                                     std::log(static_cast<double>(bj)));
                emi += term * std::exp(log_p);
            }
        }
    return emi;
}

}  // namespace

double ami(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    if (a.empty()) throw std::invalid_argument("ami: empty labelings");
    if (a.size() != b.size()) throw std::invalid_argument("ami: labeling lengths differ");
    const Compact ca = compact_labels(a);
    const Compact cb = compact_labels(b);
    const std::size_t n_samples = a.size();
    const auto n = static_cast<double>(n_samples);
    const double log_n = std::log(n);

    if (ca.counts.size() == 1 && cb.counts.size() == 1) return 1.0;

    const std::vector<std::size_t> table = contingency(ca, cb);
    const std::size_t kb = cb.counts.size();

    // per-cell expression mirrors the entropy term exactly so identical
    // labelings make MI equal the entropy bit for bit
    double mi = 0.0;
    for (std::size_t i = 0; i < ca.counts.size(); ++i)
        for (std::size_t j = 0; j < kb; ++j) {
            const std::size_t nij = table[i * kb + j];
            if (nij == 0) continue;
            mi += (static_cast<double>(nij) / n) *
                  (std::log(static_cast<double>(nij)) -
                   std::log(static_cast<double>(ca.counts[i])) -
                   std::log(static_cast<double>(cb.counts[j])) + log_n);
        }

    const double ha = entropy(ca.counts, n, log_n);
    const double hb = entropy(cb.counts, n, log_n);
    const double emi = expected_mi(ca.counts, cb.counts, n_samples);
    const double denom = 0.5 * (ha + hb) - emi;
    if (denom == 0.0) return 0.0;
    return (mi - emi) / denom;
}

double majority_label_accuracy(const std::vector<std::uint32_t>& clusters,
                               const std::vector<std::uint32_t>& truth) {
    if (clusters.empty()) throw std::invalid_argument("majority_label_accuracy: empty input");
    if (clusters.size() != truth.size())
        throw std::invalid_argument("majority_label_accuracy: labeling lengths differ");
    const Compact cc = compact_labels(clusters);
    const Compact ct = compact_labels(truth);
    const std::size_t kt = ct.counts.size();
    std::vector<std::size_t> table(cc.counts.size() * kt, 0);
    for (std::size_t i = 0; i < clusters.size(); ++i)
        ++table[static_cast<std::size_t>(cc.ids[i]) * kt + ct.ids[i]];
    std::size_t correct = 0;
    for (std::size_t c = 0; c < cc.counts.size(); ++c) {
        std::size_t best = 0;
        for (std::size_t t = 0; t < kt; ++t)
            if (table[c * kt + t] > best) best = table[c * kt + t];
        correct += best;
    }
    return static_cast<double>(correct) / static_cast<double>(clusters.size());
}

double linear_probe(const Matrix& embeddings, const std::vector<std::uint32_t>& truth,
                    const ProbeConfig& cfg) {
    const std::size_t n = embeddings.rows;
    const std::size_t d = embeddings.cols;
    if (n == 0) throw std::invalid_argument("linear_probe: empty embeddings");
    if (truth.size() != n)
        throw std::invalid_argument("linear_probe: label count does not match samples");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw std::invalid_argument("linear_probe: train_fraction must be in (0, 1)");

    const Compact labels = compact_labels(truth);
    const std::size_t classes = labels.counts.size();
    if (classes < 2) throw std::invalid_argument("linear_probe: need at least two classes");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(n));
    if (n_train == 0 || n_train == n)
        throw std::invalid_argument("linear_probe: split leaves an empty side");

    Matrix w(classes, d);
    Vec bias(classes, 0.0);
    Vec logits(classes);
    Matrix gw(classes, d);
    Vec gb(classes);
    for (int it = 0; it < cfg.iters; ++it) {
        std::fill(gw.data.begin(), gw.data.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t t = 0; t < n_train; ++t) {
            const std::size_t i = order[t];
            const auto x = embeddings.row_span(i);
            double m = -1e300;
            for (std::size_t c = 0; c < classes; ++c) {
                logits[c] = dot(w.row_span(c), x) + bias[c];
                m = std::max(m, logits[c]);
            }
            double z = 0.0;
            for (std::size_t c = 0; c < classes; ++c) z += std::exp(logits[c] - m);
            for (std::size_t c = 0; c < classes; ++c) {
                const double p = std::exp(logits[c] - m) / z -
                                 (labels.ids[i] == c ? 1.0 : 0.0);
                gb[c] += p;
                for (std::size_t f = 0; f < d; ++f) gw.at(c, f) += p * x[f];
            }
        }
        const double scale = cfg.lr / static_cast<double>(n_train);
        for (std::size_t c = 0; c < classes; ++c) {
            bias[c] -= scale * gb[c];
            for (std::size_t f = 0; f < d; ++f) w.at(c, f) -= scale * gw.at(c, f);
        }
    }

    std::size_t correct = 0;
    for (std::size_t t = n_train; t < n; ++t) {
        const std::size_t i = order[t];
        const auto x = embeddings.row_span(i);
        std::size_t arg = 0;
        double best = -1e300;
        for (std::size_t c = 0; c < classes; ++c) {
            const double s = dot(w.row_span(c), x) + bias[c];
            if (s > best) {
                best = s;
                arg = c;
            }
        }
        correct += arg == labels.ids[i];
    }
    return static_cast<double>(correct) / static_cast<double>(n - n_train);
}

std::string metrics_json(const MetricsReport& m) {
    nlohmann::json j;
    j["ami"] = m.ami;
    j["majority_acc"] = m.majority_acc;
    j["probe_acc"] = m.probe_acc;
    j["K_final"] = m.k_final;
    j["epochs"] = m.epochs;
    return j.dump(2) + "\n";
}

}  // namespace siammm::evaluate
