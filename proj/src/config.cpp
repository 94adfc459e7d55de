#include "siammm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace siammm::config {

namespace {

double to_double(const std::string& key, const std::string& value) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                    "' as a number");
    return v;
}

std::size_t to_size(const std::string& key, const std::string& value) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                    "' as a non-negative integer");
    return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                    "' as a non-negative integer");
    return v;
}

int to_int(const std::string& key, const std::string& value) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                    "' as an integer");
    return v;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    throw std::invalid_argument("config key '" + key + "': expected on/off, got '" + value +
                                "'");
}

[[noreturn]] void bad_choice(const std::string& key, const std::string& value,
                             const std::string& choices) {
    throw std::invalid_argument("config key '" + key + "': '" + value +
                                "' is not one of {" + choices + "}");
}

}  // namespace

const std::vector<std::string>& train_keys() {
    static const std::vector<std::string> keys = {
        "k0",           "h",
        "tau",          "merge_mode",
        "zeta",         "percentile",
        "merge",        "m",
        "lr_base",      "batch_size",
        "epochs",       "seed",
        "sigma_aug",    "p_drop",
        "kappa_mode",   "pca_retention",
        "loss_mode",    "assign_mode",
        "weight_grad",  "centroid_mode",
        "embed_branch", "em_iters",
        "sgd_momentum", "weight_decay",
        "hidden",       "embed_dim",
        "kappa0",       "kappa_max",
        "min_count"};
    return keys;
}

void set_key(train::TrainConfig& cfg, const std::string& key, const std::string& value) {
    using train::AssignMode;
    using train::CentroidMode;
    using train::EmbedBranch;
    using train::KappaMode;
    using train::LossMode;
    using train::WeightGrad;
    using Mode = mixture::MergeConfig::Mode;

    if (key == "k0")
        cfg.k0 = to_size(key, value);
    else if (key == "h")
        cfg.h = to_size(key, value);
    else if (key == "tau")
        cfg.tau = to_double(key, value);
    else if (key == "merge_mode") {
        if (value == "z_threshold")
            cfg.merge_mode = Mode::z_threshold;
        else if (value == "percentile")
            cfg.merge_mode = Mode::percentile;
        else
            bad_choice(key, value, "z_threshold, percentile");
    } else if (key == "zeta")
        cfg.zeta = to_double(key, value);
    else if (key == "percentile")
        cfg.percentile = to_double(key, value);
    else if (key == "merge")
        cfg.merge_enabled = to_bool(key, value);
    else if (key == "m")
        cfg.m = to_double(key, value);
    else if (key == "lr_base")
        cfg.lr_base = to_double(key, value);
    else if (key == "batch_size")
        cfg.batch_size = to_size(key, value);
    else if (key == "epochs")
        cfg.epochs = to_size(key, value);
    else if (key == "seed")
        cfg.seed = to_u64(key, value);
    else if (key == "sigma_aug")
        cfg.sigma_aug = to_double(key, value);
    else if (key == "p_drop")
        cfg.p_drop = to_double(key, value);
    else if (key == "kappa_mode") {
        if (value == "plain")
            cfg.kappa_mode = KappaMode::plain;
        else if (value == "pca")
            cfg.kappa_mode = KappaMode::pca;
        else
            bad_choice(key, value, "plain, pca");
    } else if (key == "pca_retention")
        cfg.pca_retention = to_double(key, value);
    else if (key == "loss_mode") {
        if (value == "siammm")
            cfg.loss_mode = LossMode::siammm;
        else if (value == "siammm_no_inst")
            cfg.loss_mode = LossMode::siammm_no_inst;
        else if (value == "nce1")
            cfg.loss_mode = LossMode::nce1;
        else if (value == "nce2")
            cfg.loss_mode = LossMode::nce2;
        else if (value == "inst_only")
            cfg.loss_mode = LossMode::inst_only;
        else
            bad_choice(key, value, "siammm, siammm_no_inst, nce1, nce2, inst_only");
    } else if (key == "assign_mode") {
        if (value == "hard_cosine")
            cfg.assign_mode = AssignMode::hard_cosine;
        else if (value == "posterior")
            cfg.assign_mode = AssignMode::posterior;
        else
            bad_choice(key, value, "hard_cosine, posterior");
    } else if (key == "weight_grad") {
        if (value == "through_pi")
            cfg.weight_grad = WeightGrad::through_pi;
        else if (value == "detached")
            cfg.weight_grad = WeightGrad::detached;
        else
            bad_choice(key, value, "through_pi, detached");
    } else if (key == "centroid_mode") {
        if (value == "consistent")
            cfg.centroid_mode = CentroidMode::consistent;
        else if (value == "reinit")
            cfg.centroid_mode = CentroidMode::reinit;
        else
            bad_choice(key, value, "consistent, reinit");
    } else if (key == "embed_branch") {
        if (value == "momentum")
            cfg.embed_branch = EmbedBranch::momentum;
        else if (value == "online")
            cfg.embed_branch = EmbedBranch::online;
        else
            bad_choice(key, value, "momentum, online");
    } else if (key == "em_iters")
        cfg.em_iters = to_int(key, value);
    else if (key == "sgd_momentum")
        cfg.sgd_momentum = to_double(key, value);
    else if (key == "weight_decay")
        cfg.weight_decay = to_double(key, value);
    else if (key == "hidden")
        cfg.hidden = to_size(key, value);
    else if (key == "embed_dim")
        cfg.embed_dim = to_size(key, value);
    else if (key == "kappa0")
        cfg.kappa0 = to_double(key, value);
    else if (key == "kappa_max")
        cfg.kappa_max = to_double(key, value);
    else if (key == "min_count")
        cfg.min_count = to_size(key, value);
    else {
        std::ostringstream msg;
        msg << "unknown config key '" << key << "'; valid keys:";
        for (const std::string& k : train_keys()) msg << ' ' << k;
        throw std::invalid_argument(msg.str());
    }
}

train::TrainConfig load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config file " + path);
    train::TrainConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        // trim
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            std::ostringstream msg;
            msg << path << " line " << line_no << ": expected key=value, got '" << line
                << "'";
            throw std::invalid_argument(msg.str());
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
            value.erase(value.begin());
        set_key(cfg, key, value);
    }
    return cfg;
}

void apply_overrides(train::TrainConfig& cfg, const std::vector<std::string>& sets) {
    for (const std::string& s : sets) {
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got '" + s + "'");
        set_key(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
}

const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> names = {
        "siammm",     "siammm_no_inst", "nce1",   "nce2",      "inst_only",
        "kappa_plain", "kappa_pca",     "hard_assign", "posterior", "merged",
        "fixed_k",    "consistent",     "reinit"};
    return names;
}

void apply_variant(train::TrainConfig& cfg, const std::string& name) {
    using train::AssignMode;
    using train::CentroidMode;
    using train::KappaMode;
    using train::LossMode;
    if (name == "siammm")
        cfg.loss_mode = LossMode::siammm;
    else if (name == "siammm_no_inst")
        cfg.loss_mode = LossMode::siammm_no_inst;
    else if (name == "nce1")
        cfg.loss_mode = LossMode::nce1;
    else if (name == "nce2")
        cfg.loss_mode = LossMode::nce2;
    else if (name == "inst_only")
        cfg.loss_mode = LossMode::inst_only;
    else if (name == "kappa_plain")
        cfg.kappa_mode = KappaMode::plain;
    else if (name == "kappa_pca")
        cfg.kappa_mode = KappaMode::pca;
    else if (name == "hard_assign")
        cfg.assign_mode = AssignMode::hard_cosine;
    else if (name == "posterior")
        cfg.assign_mode = AssignMode::posterior;
    else if (name == "merged")
        cfg.merge_enabled = true;
    else if (name == "fixed_k")
        cfg.merge_enabled = false;
    else if (name == "consistent")
        cfg.centroid_mode = CentroidMode::consistent;
    else if (name == "reinit")
        cfg.centroid_mode = CentroidMode::reinit;
    else {
        std::ostringstream msg;
        msg << "unknown ablation variant '" << name << "'; valid variants:";
        for (const std::string& v : ablation_variants()) msg << ' ' << v;
        throw std::invalid_argument(msg.str());
    }
}

std::string describe(const train::TrainConfig& cfg) {
    std::ostringstream os;
    os << "k0=" << cfg.k0 << " h=" << cfg.h << " tau=" << cfg.tau
       << " epochs=" << cfg.epochs << " batch_size=" << cfg.batch_size
       << " seed=" << cfg.seed << " K-merge="
       << (cfg.merge_enabled ? (cfg.merge_mode == mixture::MergeConfig::Mode::z_threshold
                                    ? "z"
                                    : "percentile")
                             : "off");
    return os.str();
}

}  // namespace siammm::config
