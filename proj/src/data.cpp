#include "siammm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "siammm/binio.hpp"
#include "siammm/vmf.hpp"

namespace siammm::data {

namespace {

void validate_spec(const SyntheticSpec& spec) {
    if (spec.g < 1) throw std::invalid_argument("SyntheticSpec.g must be at least 1");
    if (spec.dim < 2) throw std::invalid_argument("SyntheticSpec.dim must be at least 2");
    if (!(spec.kappa_true >= 0.0))
        throw std::invalid_argument("SyntheticSpec.kappa_true must be non-negative");
    if (!spec.proportions.empty()) {
        if (spec.proportions.size() != spec.g)
            throw std::invalid_argument("SyntheticSpec.proportions size must equal g");
        double sum = 0.0;
        for (double p : spec.proportions) {
            if (!(p >= 0.0))
                throw std::invalid_argument("SyntheticSpec.proportions must be non-negative");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("SyntheticSpec.proportions must sum to 1");
    }
}

// means drawn uniformly, each re-drawn until it keeps pairwise cosine <= 0.5
// with everything accepted so far
Matrix draw_separated_means(std::size_t g, std::size_t d, std::mt19937_64& rng) {
    Matrix means(g, d);
    for (std::size_t j = 0; j < g; ++j) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            Vec cand = vmf::sample_unit_sphere(d, rng);
            placed = true;
            for (std::size_t i = 0; i < j; ++i)
                if (dot(means.row_span(i), cand) > 0.5) {
                    placed = false;
                    break;
                }
            if (placed) means.set_row(j, cand);
        }
        if (!placed) {
            std::ostringstream msg;
            msg << "separation unattainable: could not place mean " << j + 1 << " of " << g
                << " on a " << d << "-dimensional sphere with pairwise cosine <= 0.5";
            throw std::runtime_error(msg.str());
        }
    }
    return means;
}

// full-rank by construction: orthonormal basis from Gram-Schmidt on Gaussian
// draws, rows rescaled unevenly so the map distorts angles
Matrix random_full_rank_map(std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x6d61702d6c696eULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix q(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        Vec v(d);
        while (true) {
            for (double& e : v) e = gauss(rng);
            for (std::size_t p = 0; p < i; ++p) {
                const double proj = dot(q.row_span(p), v);
                for (std::size_t c = 0; c < d; ++c) v[c] -= proj * q.at(p, c);
            }
            const double norm = l2_norm(v);
            if (norm > 1e-8) {
                for (double& e : v) e /= norm;
                break;
            }
        }
        q.set_row(i, v);
    }
    for (std::size_t i = 0; i < d; ++i) {
        const double scale = 0.7 + 0.6 * static_cast<double>(i) / static_cast<double>(d - 1);
        for (std::size_t c = 0; c < d; ++c) q.at(i, c) *= scale;
    }
    return q;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    validate_spec(spec);
    std::mt19937_64 rng(spec.seed);
    Matrix means = draw_separated_means(spec.g, spec.dim, rng);

    Vec cdf(spec.g);
    double acc = 0.0;
    for (std::size_t j = 0; j < spec.g; ++j) {
        acc += spec.proportions.empty() ? 1.0 / static_cast<double>(spec.g)
                                        : spec.proportions[j];
        cdf[j] = acc;
    }
    cdf[spec.g - 1] = 1.0;

    Dataset ds;
    ds.name = "synthetic";
    ds.x = Matrix(spec.n, spec.dim);
    ds.labels.resize(spec.n);
    ds.has_labels = true;

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double u = unif(rng);
        std::size_t label = 0;
        while (label + 1 < spec.g && u >= cdf[label]) ++label;
        ds.labels[i] = static_cast<std::uint32_t>(label);
        vmf::VmfParams params{Vec(means.row_span(label).begin(), means.row_span(label).end()),
                              spec.kappa_true};
        Matrix sample = vmf::sample_vmf(params, 1, rng);
        ds.x.set_row(i, sample.row_span(0));
    }

    if (spec.input_map == InputMap::random_linear && spec.n > 0) {
        Matrix map = random_full_rank_map(spec.dim, spec.seed);
        Vec mapped(spec.dim);
        for (std::size_t i = 0; i < spec.n; ++i) {
            for (std::size_t r = 0; r < spec.dim; ++r)
                mapped[r] = dot(map.row_span(r), ds.x.row_span(i));
            ds.x.set_row(i, mapped);
        }
    }
    return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

double parse_double_field(const std::string& field, std::size_t line_no, std::size_t col) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        std::ostringstream msg;
        msg << "csv line " << line_no << ", field " << col + 1 << ": cannot parse '" << field
            << "' as a number";
        throw std::runtime_error(msg.str());
    }
    return value;
}

std::uint32_t parse_label_field(const std::string& field, std::size_t line_no,
                                std::size_t col) {
    std::uint32_t value = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        std::ostringstream msg;
        msg << "csv line " << line_no << ", field " << col + 1 << ": cannot parse '" << field
            << "' as a label";
        throw std::runtime_error(msg.str());
    }
    return value;
}

Dataset load_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error(path + ": missing csv header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0].empty())
        throw std::runtime_error(path + ": malformed csv header on line 1");
    const bool labeled = header.back() == "label";
    const std::size_t dim = header.size() - (labeled ? 1 : 0);
    if (dim == 0) throw std::runtime_error(path + ": csv header has no feature columns");

    std::vector<double> values;
    std::vector<std::uint32_t> labels;
    std::size_t n = 0;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            std::ostringstream msg;
            msg << "csv line " << line_no << ": expected " << header.size()
                << " fields, got " << fields.size();
            throw std::runtime_error(msg.str());
        }
        for (std::size_t c = 0; c < dim; ++c)
            values.push_back(parse_double_field(fields[c], line_no, c));
        if (labeled) labels.push_back(parse_label_field(fields[dim], line_no, dim));
        ++n;
    }

    Dataset ds;
    ds.name = path;
    ds.x = Matrix(n, dim);
    ds.x.data = std::move(values);
    ds.labels = std::move(labels);
    ds.has_labels = labeled;
    return ds;
}

void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    for (std::size_t c = 0; c < ds.dim(); ++c) {
        if (c) os << ',';
        os << 'f' << c;
    }
    if (ds.has_labels) os << ",label";
    os << '\n';
    char buf[40];
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t c = 0; c < ds.dim(); ++c) {
            if (c) os << ',';
            std::snprintf(buf, sizeof buf, "%.17g", ds.x.at(i, c));
            os << buf;
        }
        if (ds.has_labels) os << ',' << ds.labels[i];
        os << '\n';
    }
    if (!os) throw std::runtime_error("write failed for " + path);
}

constexpr char kDatasetMagic[4] = {'S', 'M', 'M', 'D'};

Dataset load_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    binio::expect_magic(is, kDatasetMagic, "dataset");
    const std::uint32_t n = binio::read_u32(is, "dataset sample count");
    const std::uint32_t d = binio::read_u32(is, "dataset dim");
    const std::uint8_t has_labels = binio::read_u8(is, "dataset label flag");
    if (has_labels > 1) throw std::runtime_error(path + ": dataset label flag must be 0 or 1");
    Dataset ds;
    ds.name = path;
    ds.x = Matrix(n, d);
    for (std::size_t i = 0; i < ds.x.data.size(); ++i)
        ds.x.data[i] = binio::read_f32(is, "dataset feature");
    if (has_labels) {
        ds.has_labels = true;
        ds.labels.resize(n);
        for (std::uint32_t i = 0; i < n; ++i)
            ds.labels[i] = binio::read_u32(is, "dataset label");
    }
    return ds;
}

void save_binary(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    binio::write_magic(os, kDatasetMagic);
    binio::write_u32(os, static_cast<std::uint32_t>(ds.n()));
    binio::write_u32(os, static_cast<std::uint32_t>(ds.dim()));
    binio::write_u8(os, ds.has_labels ? 1 : 0);
    for (double v : ds.x.data) binio::write_f32(os, static_cast<float>(v));
    if (ds.has_labels)
        for (std::uint32_t l : ds.labels) binio::write_u32(os, l);
    if (!os) throw std::runtime_error("write failed for " + path);
}

}  // namespace

Dataset load_dataset(const std::string& path, FileFormat format) {
    Dataset ds = format == FileFormat::csv ? load_csv(path) : load_binary(path);
    if (ds.has_labels && ds.labels.size() != ds.n()) {
        std::ostringstream msg;
        msg << path << ": " << ds.labels.size() << " labels for " << ds.n() << " samples";
        throw std::runtime_error(msg.str());
    }
    return ds;
}

void save_dataset(const std::string& path, const Dataset& ds, FileFormat format) {
    if (ds.has_labels && ds.labels.size() != ds.n())
        throw std::invalid_argument("dataset label count does not match sample count");
    if (format == FileFormat::csv)
        save_csv(path, ds);
    else
        save_binary(path, ds);
}

}  // namespace siammm::data
