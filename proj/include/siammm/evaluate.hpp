#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "siammm/matrix.hpp"

namespace siammm::evaluate {

// Adjusted Mutual Information under the permutation model:
// (MI - E[MI]) / (mean(H(a), H(b)) - E[MI]), natural log, E[MI] from the
// exact hypergeometric sum over the contingency margins.
double ami(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b);

// Maps each cluster to its most frequent true label (ties break toward the
// smaller label id) and returns the fraction of samples mapped correctly.
double majority_label_accuracy(const std::vector<std::uint32_t>& clusters,
                               const std::vector<std::uint32_t>& truth);

struct ProbeConfig {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    int iters = 2000;
    double lr = 1.0;
};

// Multinomial logistic regression on frozen embeddings, full-batch gradient
// descent, seeded shuffle split. Returns held-out accuracy.
double linear_probe(const Matrix& embeddings, const std::vector<std::uint32_t>& truth,
                    const ProbeConfig& cfg = {});

struct MetricsReport {
    double ami = 0.0;
    double majority_acc = 0.0;
    double probe_acc = 0.0;
    std::size_t k_final = 0;
    std::size_t epochs = 0;
};

std::string metrics_json(const MetricsReport& m);

}  // namespace siammm::evaluate
