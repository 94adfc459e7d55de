#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "siammm/config.hpp"
#include "siammm/data.hpp"
#include "siammm/evaluate.hpp"
#include "siammm/mixture.hpp"
#include "siammm/net.hpp"
#include "siammm/parallel.hpp"
#include "siammm/trainer.hpp"
#include "siammm/vmf.hpp"

namespace {

using namespace siammm;

data::FileFormat pick_format(const std::string& flag, const std::string& path) {
    if (flag == "csv") return data::FileFormat::csv;
    if (flag == "smmd") return data::FileFormat::smm_binary;
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv")
        return data::FileFormat::csv;
    if (path.size() > 5 && path.substr(path.size() - 5) == ".smmd")
        return data::FileFormat::smm_binary;
    throw std::invalid_argument("cannot infer the format of " + path +
                                "; pass --format csv or --format smmd");
}

train::TrainConfig build_config(const std::string& config_path,
                                const std::vector<std::string>& sets) {
    train::TrainConfig cfg;
    if (!config_path.empty()) cfg = config::load_file(config_path);
    config::apply_overrides(cfg, sets);
    return cfg;
}

evaluate::MetricsReport run_metrics(const data::Dataset& ds, const net::SiameseNet& nn,
                                    const mixture::MixtureState& state,
                                    const std::vector<std::uint32_t>& assignments,
                                    std::size_t epochs, std::uint64_t seed) {
    Matrix emb;
    try {
        emb = train::embed_all(nn, ds.x, train::EmbedBranch::momentum);
    } catch (const std::exception& e) {
        throw train::numeric_error(std::string(e.what()) + " (metrics embedding)");
    }
    evaluate::MetricsReport m;
    m.ami = evaluate::ami(assignments, ds.labels);
    m.majority_acc = evaluate::majority_label_accuracy(assignments, ds.labels);
    evaluate::ProbeConfig pc;
    pc.seed = seed;
    m.probe_acc = evaluate::linear_probe(emb, ds.labels, pc);
    m.k_final = state.k();
    m.epochs = epochs;
    return m;
}

void write_metrics(const std::string& out_dir, const evaluate::MetricsReport& m) {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(out_dir + "/metrics.json", std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + out_dir + "/metrics.json");
    os << evaluate::metrics_json(m);
}

int cmd_train(const std::string& data_path, const std::string& format,
              const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& out_dir) {
    train::TrainConfig cfg = build_config(config_path, sets);
    data::Dataset ds = data::load_dataset(data_path, pick_format(format, data_path));
    std::cout << "training on " << ds.n() << " samples, dim " << ds.dim() << " ("
              << config::describe(cfg) << ")\n";
    train::FitResult res = train::fit(ds, cfg, out_dir, &std::cout);
    if (ds.has_labels) {
        evaluate::MetricsReport m = run_metrics(ds, res.net, res.state,
                                                res.state.assignments.cluster_of,
                                                cfg.epochs, cfg.seed);
        write_metrics(out_dir, m);
        std::cout << "final K=" << m.k_final << " ami=" << m.ami
                  << " majority_acc=" << m.majority_acc << " probe_acc=" << m.probe_acc
                  << "\n";
    } else {
        std::cout << "final K=" << res.state.k()
                  << " (dataset unlabeled, metrics.json skipped)\n";
    }
    return 0;
}

int cmd_cluster(const std::string& data_path, const std::string& format, std::size_t k0,
                int iters, bool hard, const std::string& merge,
                const std::string& merge_mode, double zeta, double percentile,
                std::uint64_t seed, const std::string& out_dir) {
    data::Dataset ds = data::load_dataset(data_path, pick_format(format, data_path));
    Matrix x = ds.x;
    for (std::size_t i = 0; i < x.rows; ++i) {
        auto row = x.row_span(i);
        normalize_in_place(row);
    }
    train::ClusterEmConfig cfg;
    cfg.k0 = k0;
    cfg.iters = iters;
    cfg.soft = !hard;
    cfg.merge = merge == "on";
    cfg.merge_cfg.mode = merge_mode == "percentile"
                             ? mixture::MergeConfig::Mode::percentile
                             : mixture::MergeConfig::Mode::z_threshold;
    cfg.merge_cfg.zeta = zeta;
    cfg.merge_cfg.percentile = percentile;
    cfg.seed = seed;
    train::ClusterEmResult res = train::cluster_em(x, cfg);

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream os(out_dir + "/assignments.csv", std::ios::binary);
        if (!os) throw std::runtime_error("cannot open " + out_dir + "/assignments.csv");
        os << "index,cluster\n";
        for (std::size_t i = 0; i < res.state.assignments.cluster_of.size(); ++i)
            os << i << ',' << res.state.assignments.cluster_of[i] << '\n';
    }
    {
        std::ofstream os(out_dir + "/em_trajectory.csv", std::ios::binary);
        if (!os) throw std::runtime_error("cannot open " + out_dir + "/em_trajectory.csv");
        os << "iter,K,log_likelihood\n";
        char buf[40];
        for (std::size_t i = 0; i < res.log_likelihoods.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", res.log_likelihoods[i]);
            os << i << ',' << res.k_after[i] << ',' << buf << '\n';
        }
    }
    mixture::save_snapshot(out_dir + "/mixture.smm1", res.state);
    mixture::save_snapshot_json(out_dir + "/mixture.json", res.state);
    std::cout << "clustered " << ds.n() << " samples: K=" << res.state.k();
    if (!res.log_likelihoods.empty())
        std::cout << " log_likelihood=" << res.log_likelihoods.back();
    std::cout << "\n";
    return 0;
}

int cmd_eval(const std::string& snapshot_path, const std::string& checkpoint_path,
             const std::string& data_path, const std::string& format, std::uint64_t seed,
             const std::string& out_dir) {
    mixture::MixtureState state = mixture::load_snapshot(snapshot_path);
    net::SiameseNet nn = net::load_checkpoint(checkpoint_path);
    data::Dataset ds = data::load_dataset(data_path, pick_format(format, data_path));
    if (!ds.has_labels)
        throw std::invalid_argument(data_path + " has no labels; eval needs ground truth");
    Matrix emb = train::embed_all(nn, ds.x, train::EmbedBranch::momentum);
    if (emb.cols != state.dim)
        throw std::invalid_argument("checkpoint embeds into dim " +
                                    std::to_string(emb.cols) + " but snapshot expects " +
                                    std::to_string(state.dim));
    mixture::AssignmentTable table = mixture::e_step_hard(emb, state);
    evaluate::MetricsReport m =
        run_metrics(ds, nn, state, table.cluster_of, state.epoch, seed);
    write_metrics(out_dir, m);
    std::cout << evaluate::metrics_json(m);
    return 0;
}

int cmd_synth(std::size_t g, std::size_t dim, std::size_t n, double kappa,
              std::uint64_t seed, const std::string& proportions, const std::string& map,
              const std::string& out_path, const std::string& format) {
    data::SyntheticSpec spec;
    spec.g = g;
    spec.dim = dim;
    spec.n = n;
    spec.kappa_true = kappa;
    spec.seed = seed;
    spec.input_map =
        map == "random_linear" ? data::InputMap::random_linear : data::InputMap::identity;
    if (!proportions.empty()) {
        std::stringstream ss(proportions);
        std::string tok;
        while (std::getline(ss, tok, ','))
            spec.proportions.push_back(std::stod(tok));
    }
    data::Dataset ds = data::generate_synthetic(spec);
    data::save_dataset(out_path, ds, pick_format(format, out_path));
    std::cout << "wrote " << ds.n() << " samples (" << g << " groups, dim " << dim
              << ") to " << out_path << "\n";
    return 0;
}

int cmd_ablate(const std::string& data_path, const std::string& format,
               const std::string& config_path, const std::vector<std::string>& sets,
               const std::string& variants_arg, const std::string& out_dir) {
    train::TrainConfig base = build_config(config_path, sets);
    std::vector<std::string> variants;
    {
        std::stringstream ss(variants_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) variants.push_back(tok);
    }
    if (variants.empty()) throw std::invalid_argument("--variants list is empty");
    for (const std::string& name : variants) {
        train::TrainConfig probe = base;
        config::apply_variant(probe, name);  // validates the names up front
    }
    data::Dataset ds = data::load_dataset(data_path, pick_format(format, data_path));
    if (!ds.has_labels)
        throw std::invalid_argument(data_path +
                                    " has no labels; the ablation sweep compares ami");

    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir + "/ablation.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot open " + out_dir + "/ablation.csv");
    csv << "variant,K_final,ami,probe_acc,wall_seconds\n";
    for (const std::string& name : variants) {
        train::TrainConfig cfg = base;
        config::apply_variant(cfg, name);
        std::cout << "=== variant " << name << " ===\n";
        const auto t0 = std::chrono::steady_clock::now();
        train::FitResult res = train::fit(ds, cfg, out_dir + "/" + name, &std::cout);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        evaluate::MetricsReport m = run_metrics(ds, res.net, res.state,
                                                res.state.assignments.cluster_of,
                                                cfg.epochs, cfg.seed);
        write_metrics(out_dir + "/" + name, m);
        char buf[128];
        std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.3f", name.c_str(), m.k_final,
                      m.ami, m.probe_acc, wall);
        csv << buf << '\n';
        std::cout << "variant " << name << ": K=" << m.k_final << " ami=" << m.ami
                  << " probe_acc=" << m.probe_acc << " (" << wall << "s)\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"von Mises-Fisher mixture training, clustering, and evaluation"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads,
                   "worker thread cap (default: SIAMMM_THREADS or all cores)");

    std::string data_path, format = "auto", config_path, out_dir = "out", out_path;
    std::vector<std::string> sets;

    CLI::App* train_cmd = app.add_subcommand("train", "train the encoder and mixture");
    train_cmd->add_option("--data", data_path, "dataset file")->required();
    train_cmd->add_option("--format", format, "csv, smmd, or auto");
    train_cmd->add_option("--config", config_path, "key=value config file");
    train_cmd->add_option("--set", sets, "config override key=value (repeatable)");
    train_cmd->add_option("--out", out_dir, "output directory");

    std::size_t k0 = 10;
    int iters = 20;
    bool hard = false;
    std::string merge = "off", merge_mode = "z_threshold";
    double zeta = -1.2, percentile = 0.10;
    std::uint64_t seed = 0;
    CLI::App* cluster_cmd =
        app.add_subcommand("cluster", "standalone EM on stored embeddings");
    cluster_cmd->add_option("--data", data_path, "embeddings file")->required();
    cluster_cmd->add_option("--format", format, "csv, smmd, or auto");
    cluster_cmd->add_option("--k0", k0, "initial component count");
    cluster_cmd->add_option("--iters", iters, "EM iterations");
    cluster_cmd->add_flag("--hard", hard, "hard cosine E-step instead of soft");
    cluster_cmd->add_option("--merge", merge, "on or off")
        ->check(CLI::IsMember({"on", "off"}));
    cluster_cmd->add_option("--merge-mode", merge_mode, "z_threshold or percentile")
        ->check(CLI::IsMember({"z_threshold", "percentile"}));
    cluster_cmd->add_option("--zeta", zeta, "z-score merge threshold");
    cluster_cmd->add_option("--percentile", percentile, "percentile-mode merge fraction");
    cluster_cmd->add_option("--seed", seed, "rng seed");
    cluster_cmd->add_option("--out", out_dir, "output directory");

    std::string snapshot_path, checkpoint_path;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score a run against labels");
    eval_cmd->add_option("--snapshot", snapshot_path, "mixture snapshot")->required();
    eval_cmd->add_option("--checkpoint", checkpoint_path, "network checkpoint")->required();
    eval_cmd->add_option("--data", data_path, "labeled dataset")->required();
    eval_cmd->add_option("--format", format, "csv, smmd, or auto");
    eval_cmd->add_option("--seed", seed, "probe split seed");
    eval_cmd->add_option("--out", out_dir, "output directory");

    std::size_t g = 3, dim = 8, n = 1000;
    double kappa = 50.0;
    std::string proportions, input_map = "identity";
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a labeled vMF mixture");
    synth_cmd->add_option("--g", g, "number of groups");
    synth_cmd->add_option("--dim", dim, "feature dimension");
    synth_cmd->add_option("--n", n, "sample count");
    synth_cmd->add_option("--kappa", kappa, "true concentration");
    synth_cmd->add_option("--seed", seed, "rng seed");
    synth_cmd->add_option("--proportions", proportions, "comma list summing to 1");
    synth_cmd->add_option("--map", input_map, "identity or random_linear")
        ->check(CLI::IsMember({"identity", "random_linear"}));
    synth_cmd->add_option("--out", out_path, "output file (.csv or .smmd)")->required();
    synth_cmd->add_option("--format", format, "csv, smmd, or auto");

    std::string variants_arg;
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run a named variant sweep");
    ablate_cmd->add_option("--data", data_path, "labeled dataset")->required();
    ablate_cmd->add_option("--format", format, "csv, smmd, or auto");
    ablate_cmd->add_option("--config", config_path, "key=value config file");
    ablate_cmd->add_option("--set", sets, "config override key=value (repeatable)");
    ablate_cmd->add_option("--variants", variants_arg, "comma list of variant names")
        ->required();
    ablate_cmd->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        siammm::set_max_threads(threads > 0 ? threads : siammm::threads_from_env());
        if (train_cmd->parsed())
            return cmd_train(data_path, format, config_path, sets, out_dir);
        if (cluster_cmd->parsed())
            return cmd_cluster(data_path, format, k0, iters, hard, merge, merge_mode, zeta,
                               percentile, seed, out_dir);
        if (eval_cmd->parsed())
            return cmd_eval(snapshot_path, checkpoint_path, data_path, format, seed,
                            out_dir);
        if (synth_cmd->parsed())
            return cmd_synth(g, dim, n, kappa, seed, proportions, input_map, out_path,
                             format);
        if (ablate_cmd->parsed())
            return cmd_ablate(data_path, format, config_path, sets, variants_arg, out_dir);
    } catch (const siammm::train::numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const siammm::vmf::degenerate_resultant_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
