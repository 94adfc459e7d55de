#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "siammm/matrix.hpp"

namespace siammm::data {

struct Dataset {
    std::string name;
    Matrix x;  // one sample per row
    std::vector<std::uint32_t> labels;
    bool has_labels = false;

    std::size_t n() const { return x.rows; }
    std::size_t dim() const { return x.cols; }
};

enum class InputMap : std::uint8_t { identity = 0, random_linear = 1 };

struct SyntheticSpec {
    std::size_t g = 3;
    std::size_t dim = 8;
    double kappa_true = 50.0;
    Vec proportions;  // empty means uniform
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    InputMap input_map = InputMap::identity;
};

// Labeled mixture sampler. Component means are drawn uniformly on the sphere
// and re-drawn until every pair has cosine at most 0.5; random_linear then
// pushes all samples through a fixed seeded full-rank map.
Dataset generate_synthetic(const SyntheticSpec& spec);

enum class FileFormat : std::uint8_t { csv = 0, smm_binary = 1 };

Dataset load_dataset(const std::string& path, FileFormat format);
void save_dataset(const std::string& path, const Dataset& ds, FileFormat format);

}  // namespace siammm::data
