#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "siammm/matrix.hpp"
#include "siammm/vmf.hpp"

namespace siammm::mixture {

// One mixture component. `id` is a stable handle: it survives M-steps and
// merges (a merged group keeps its lowest id), so assignment tables and
// trajectory plots can track a cluster across epochs.
struct VmfComponent {
    std::uint32_t id = 0;
    Vec mu;                        // unit mean direction
    double kappa = 0.0;
    Vec r;                         // unnormalized mean vector, ||r|| <= 1
    double alpha = 0.0;            // mixing weight
    std::size_t member_count = 0;  // hard-assigned sample count
};

struct AssignmentTable {
    std::vector<std::uint32_t> cluster_of;  // sample index -> component id
};

struct MixtureState {
    std::vector<VmfComponent> components;  // kept in ascending id order
    AssignmentTable assignments;
    std::size_t epoch = 0;
    std::size_t dim = 0;

    std::size_t k() const { return components.size(); }
    // index into `components` for a live id; throws std::out_of_range otherwise
    std::size_t index_of(std::uint32_t id) const;
};

// Spherical k-means++ seeding on cosine distance, one hard assignment pass,
// then a mean refit of each seed. kappa starts at kappa0 and alpha at 1/k0
// for every component; both are re-estimated by the first m_step.
MixtureState init_centroids(const Matrix& embeddings, std::size_t k0, std::mt19937_64& rng,
                            double kappa0 = 1.0);

// Nearest centroid by cosine, exact search, ties to the lowest component id.
AssignmentTable e_step_hard(const Matrix& embeddings, const MixtureState& state);
AssignmentTable e_step_hard_serial(const Matrix& embeddings, const MixtureState& state);

// Full posterior p(k|v) with component densities weighted by alpha, row
// normalized by log-sum-exp. Column j corresponds to components[j].
Matrix responsibilities(const Matrix& embeddings, const MixtureState& state);
Matrix responsibilities_serial(const Matrix& embeddings, const MixtureState& state);

struct MStepConfig {
    std::size_t min_count = 2;  // components with soft count below this are dropped
    vmf::Guards guards;
};

// MLE refit from hard assignments (0-1 responsibilities). Components whose
// count falls below min_count (or whose resultant is degenerate) are dropped,
// alpha is renormalized, and orphaned samples are redirected to the nearest
// surviving centroid.
void m_step_hard(const Matrix& embeddings, MixtureState& state, const MStepConfig& cfg = {});

// Same refit from a dense responsibility matrix (soft EM path). Also rewrites
// the hard assignment table from the posterior argmax.
void m_step_soft(const Matrix& embeddings, const Matrix& resp, MixtureState& state,
                 const MStepConfig& cfg = {});

// Top-h component ids by cosine, descending, ties to the lowest id.
std::vector<std::uint32_t> nearest_centroids(std::span<const double> v,
                                             const MixtureState& state, std::size_t h);

struct MergeConfig {
    enum class Mode { z_threshold, percentile };
    Mode mode = Mode::z_threshold;
    double zeta = -1.2;        // merge pairs with z-score below this
    double percentile = 0.10;  // percentile mode: merge the floor(q*M) closest pairs
};

struct MergeStats {
    std::vector<double> z;  // pairwise centroid distances, (i,j) with i<j in index order
    double mean = 0.0;
    double sd = 0.0;  // population standard deviation
};

MergeStats merge_stats(const MixtureState& state);

struct MergeReport {
    std::size_t absorbed = 0;   // components removed by this pass
    bool degenerate = false;    // all pairs equidistant, pass skipped
};

// One merge pass: freeze MergeStats, mark close pairs per config, take the
// transitive closure, and collapse each group into its lowest-id member with
// a member-count-weighted r average, summed alpha, and kappa re-estimated
// from the merged resultant. Assignments of absorbed ids are redirected.
MergeReport merge_pass(MixtureState& state, const MergeConfig& cfg = {},
                       const vmf::Guards& guards = {});

struct PcaProjection {
    Matrix basis;            // dim x d_pca, orthonormal columns
    std::size_t d_pca = 0;
    double retention = 0.0;  // fraction of aggregate norm retained
};

// PCA over the component r vectors (second-moment eigenvectors by power
// iteration with deflation, deterministic). Picks the smallest subspace
// whose projections keep at least retention_target of the aggregate norm.
PcaProjection fit_r_pca(const MixtureState& state, double retention_target);

// Re-estimates every kappa from the projected resultant length at the
// reduced dimension. Returns the projection actually used.
PcaProjection kappa_pca(MixtureState& state, double retention_target,
                        const vmf::Guards& guards = {});

// Mixture log-likelihood of the sample set, log-sum-exp over components.
double log_likelihood(const Matrix& embeddings, const MixtureState& state);
double log_likelihood_serial(const Matrix& embeddings, const MixtureState& state);

// Versioned little-endian binary snapshot plus a JSON twin for inspection.
void save_snapshot(const std::string& path, const MixtureState& state);
MixtureState load_snapshot(const std::string& path);
void save_snapshot_json(const std::string& path, const MixtureState& state);

}  // namespace siammm::mixture
