#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flowbm/flowbm.hpp"

namespace fs = std::filesystem;
using namespace flowbm;

namespace {

/// Bad arguments detected after CLI11 parsing; exit code 2 like parse errors.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 1;

int default_threads() {
    const char* env = std::getenv("FLOWBM_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) throw UsageError(std::string("FLOWBM_THREADS must be a positive integer, got '") + env + "'");
    return int(v);
}

struct DataArgs {
    std::string images;
    std::string labels;
    double threshold = 0.5;
    std::size_t limit = 0;  ///< 0 = all examples

    void add(CLI::App* app, const std::string& what, bool required) {
        auto* opt = app->add_option("--images", images, "IDX image file (" + what + "), optionally gzipped");
        if (required) opt->required();
        app->add_option("--labels", labels, "IDX label file (checked against the image count)");
        app->add_option("--threshold", threshold, "binarisation threshold on pixel/255")->capture_default_str();
        app->add_option("--limit", limit, "use only the first N examples (0 = all)");
    }
    [[nodiscard]] Dataset load() const {
        Dataset ds = load_dataset(images, labels.empty() ? std::nullopt : std::optional<std::string>(labels), threshold);
        return limit ? ds.head(limit) : ds;
    }
};

/// Output directory that must not already hold results, created only once all
/// inputs have been validated.
void prepare_out_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError("output path " + dir.string() + " is not a directory");
    if (!force && fs::exists(dir) && !fs::is_empty(dir))
        throw UsageError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

std::string epoch_name(int epoch) {
    std::ostringstream os;
    os << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
    return os.str();
}

/// Weight filters of the first hidden layer, each rescaled to [0,1].
Eigen::MatrixXd filter_images(const BoltzmannMachine& m, Eigen::Index count) {
    const Eigen::Index h = std::min<Eigen::Index>(count, m.width(1));
    Eigen::MatrixXd f = m.weights.block(m.offset(0), m.offset(1), m.width(0), h);
    for (Eigen::Index j = 0; j < h; ++j) {
        const double lo = f.col(j).minCoeff(), hi = f.col(j).maxCoeff();
        if (hi > lo) f.col(j) = (f.col(j).array() - lo) / (hi - lo);
        else f.col(j).setConstant(0.5);
    }
    return f;
}

bool is_square_image(Eigen::Index d) { return d == Eigen::Index(kImageSide) * kImageSide; }

// ---------------------------------------------------------------- train

struct TrainArgs {
    DataArgs data;
    std::string config_file;
    std::string layout;
    std::string intra;
    std::string out;
    std::string resume;
    bool force = false;
    bool quiet = false;
    std::map<std::string, std::string> overrides;
};

/// Flags that map one-to-one onto TrainConfig keys.
const std::vector<std::pair<std::string, std::string>> kConfigFlags = {
    {"--eta", "eta"},
    {"--beta1", "beta1"},
    {"--beta2", "beta2"},
    {"--adam-eps", "adam_eps"},
    {"--lambda", "lambda"},
    {"--minibatch", "minibatch"},
    {"--epochs", "epochs"},
    {"--seed", "seed"},
    {"--r", "r"},
    {"--intra-sweeps", "intra_sweeps"},
    {"--init-scale", "init_scale"},
    {"--clamp-z", "clamp_z"},
    {"--method", "method"},
    {"--k", "cd_k"},
    {"--checkpoint-every", "checkpoint_every"},
};

/// Keys a config file may set besides TrainConfig fields.
const std::vector<std::string> kRunKeys = {"layout", "intra", "images", "labels", "threshold", "limit"};

void add_train(CLI::App& app, TrainArgs& a, int& threads, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("train", "train a Boltzmann machine with VPF, CD-k or PCD-k");
    a.data.add(cmd, "training set", false);
    cmd->add_option("--config", a.config_file, "key=value file; command-line flags take precedence");
    cmd->add_option("--layout", a.layout, "layer widths, e.g. 784-196 or 784-196-196-64");
    cmd->add_option("--intra", a.intra, "intra-layer flags per hidden layer, e.g. 1,1,1");
    cmd->add_option("--out", a.out, "run directory")->required();
    cmd->add_option("--resume", a.resume, "continue from a checkpoint (same data required)");
    cmd->add_flag("--force", a.force, "allow a non-empty run directory");
    cmd->add_flag("--quiet", a.quiet, "no per-epoch progress lines");
    cmd->add_option("--threads", threads, "worker threads (default: FLOWBM_THREADS or 1)");
    for (const auto& [flag, key] : kConfigFlags) cmd->add_option(flag, a.overrides[key], "sets " + key);
    run = [cmd, &a, &threads] {
        // Config file first, then explicit flags.
        std::map<std::string, std::string> file_entries;
        TrainConfig cfg;
        if (!a.config_file.empty()) {
            std::ifstream in(a.config_file);
            if (!in) throw UsageError("cannot open config file " + a.config_file);
            cfg = read_config(in, kRunKeys);
            in.clear();
            in.seekg(0);
            std::string line;
            while (std::getline(in, line)) {
                if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
                const auto eq = line.find('=');
                if (eq == std::string::npos) continue;
                auto trim = [](const std::string& s) {
                    const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
                    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
                };
                file_entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
            }
        }
        auto from_file = [&](const char* flag, const char* key, std::string& target) {
            if (cmd->count(flag) == 0 && file_entries.count(key)) target = file_entries[key];
        };
        from_file("--layout", "layout", a.layout);
        from_file("--intra", "intra", a.intra);
        from_file("--images", "images", a.data.images);
        from_file("--labels", "labels", a.data.labels);
        if (cmd->count("--threshold") == 0 && file_entries.count("threshold"))
            a.data.threshold = std::stod(file_entries["threshold"]);
        if (cmd->count("--limit") == 0 && file_entries.count("limit")) a.data.limit = std::stoul(file_entries["limit"]);
        if (a.data.images.empty()) throw UsageError("train: --images is required");

        std::optional<TrainingState> state;
        if (!a.resume.empty()) {
            if (!a.layout.empty() || !a.intra.empty()) throw UsageError("train: --layout/--intra cannot change on --resume");
            for (const auto& [flag, key] : kConfigFlags)
                if (cmd->count(flag) && key != "epochs" && key != "checkpoint_every")
                    throw UsageError("train: " + flag + " cannot change on --resume");
            state = load_checkpoint(a.resume);
            cfg = state->config;
        }
        for (const auto& [flag, key] : kConfigFlags)
            if (cmd->count(flag) && !apply_config_entry(cfg, key, a.overrides[key]))
                throw UsageError("unknown config key " + key);
        cfg.check();

        LayerSpec layout;
        if (state) {
            layout = state->machine.layout;
            state->config = cfg;
        } else {
            if (a.layout.empty()) throw UsageError("train: --layout is required");
            layout = parse_layout(a.layout, a.intra);
            layout.check();
            if (cfg.method != Method::Vpf && !layout.is_plain_rbm())
                throw CapabilityError("train: " + to_string(cfg.method) +
                                      " needs a single hidden layer without intra-layer connections");
        }
        const Dataset ds = a.data.load();
        if (ds.dim() != layout.sizes[0])
            throw UsageError("train: data has " + std::to_string(ds.dim()) + " pixels, layout expects " +
                             std::to_string(layout.sizes[0]));
        prepare_out_dir(a.out, a.force);

        const fs::path out(a.out);
        fs::create_directories(out / "checkpoints");
        fs::create_directories(out / "images");
        {
            auto c = open_out(out / "config.txt");
            write_config(c, cfg);
            std::ostringstream widths, flags;
            for (std::size_t k = 0; k < layout.sizes.size(); ++k) widths << (k ? "-" : "") << layout.sizes[k];
            for (std::size_t k = 0; k < layout.intra_layer.size(); ++k) flags << (k ? "," : "") << layout.intra_layer[k];
            c << "layout=" << widths.str() << "\n";
            if (!layout.intra_layer.empty()) c << "intra=" << flags.str() << "\n";
            c << "images=" << fs::absolute(a.data.images).string() << "\n";
            if (!a.data.labels.empty()) c << "labels=" << fs::absolute(a.data.labels).string() << "\n";
            c << "threshold=" << a.data.threshold << "\nlimit=" << a.data.limit << "\n";
        }
        auto csv = open_out(out / "epochs.csv");
        write_epoch_csv_header(csv);
        csv.flush();

        const EpochCallback on_epoch = [&](const EpochLog& log, const TrainingState& s) {
            write_epoch_csv_row(csv, log);
            csv.flush();
            if (s.config.checkpoint_every > 0 && s.epoch % s.config.checkpoint_every == 0)
                save_checkpoint((out / "checkpoints" / epoch_name(s.epoch)).string(), s);
            if (!a.quiet)
                std::cout << "epoch " << log.epoch << " objective " << log.objective_value << " rho "
                          << log.weight_sparsity << " w2 " << log.squared_weight << " time " << log.wall_time_s
                          << "s" << std::endl;
        };
        if (!state) state = TrainingState::fresh(layout, cfg);
        const TrainResult res = continue_training(ds.images, std::move(*state), threads, on_epoch);
        save_checkpoint((out / "final.ckpt").string(), res.state);
        if (layout.hidden_layers() >= 1 && is_square_image(Eigen::Index(layout.sizes[0])))
            write_image_grid((out / "images" / "filters.pgm").string(), filter_images(res.machine, 100), 10);
        std::cout << "final checkpoint: " << (out / "final.ckpt").string() << " (epoch " << res.state.epoch << ")\n";
    };
}

// ---------------------------------------------------------------- generate

struct GenArgs {
    std::string checkpoint;
    std::size_t count = 100;
    std::string init = "uniform";
    DataArgs prior_data;
    int r = 5;
    int intra_sweeps = 1;
    std::uint64_t seed = 1;
    int per_row = 10;
};

void add_gen_options(CLI::App* cmd, GenArgs& g) {
    cmd->add_option("--init", g.init, "top-layer initialisation: uniform or prior")
        ->check(CLI::IsMember({"uniform", "prior"}))
        ->capture_default_str();
    cmd->add_option("--data", g.prior_data.images, "training images for the prior (--init prior)");
    cmd->add_option("--data-limit", g.prior_data.limit, "use only the first N prior images (0 = all)");
    cmd->add_option("--r", g.r, "Gibbs rounds per layer pair")->capture_default_str();
    cmd->add_option("--intra-sweeps", g.intra_sweeps, "asynchronous sweeps per round on intra-layer hidden layers")
        ->capture_default_str();
    cmd->add_option("--seed", g.seed, "sampling seed")->capture_default_str();
}

TopInit make_init(const GenArgs& g, const BoltzmannMachine& m, int threads) {
    if (g.init == "uniform") {
        if (!g.prior_data.images.empty()) throw UsageError("--data is only used with --init prior");
        return TopInit::uniform();
    }
    if (g.prior_data.images.empty()) throw UsageError("--init prior needs --data with training images");
    const Dataset ds = g.prior_data.load();
    if (ds.dim() != std::size_t(m.width(0))) throw UsageError("prior data width does not match the checkpoint");
    return TopInit::from_prior(mean_activation_prior(m, ds.images, RngStream(g.seed, 0x9410), g.intra_sweeps, threads));
}

void add_generate(CLI::App& app, GenArgs& g, std::string& out_dir, bool& force, int& threads, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("generate", "draw confabulations top-down from a trained machine");
    cmd->add_option("--checkpoint", g.checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
    cmd->add_option("--count", g.count, "number of confabulations")->capture_default_str()->check(CLI::PositiveNumber);
    add_gen_options(cmd, g);
    cmd->add_option("--per-row", g.per_row, "images per row in the PGM grid")->capture_default_str();
    cmd->add_option("--out-dir", out_dir, "directory for confabulations.pgm and confabulations.csv")->required();
    cmd->add_flag("--force", force, "allow a non-empty output directory");
    cmd->add_option("--threads", threads, "worker threads (default: FLOWBM_THREADS or 1)");
    run = [&] {
        const TrainingState s = load_checkpoint(g.checkpoint);
        if (s.machine.layout.hidden_layers() == 0) throw CapabilityError("generate: checkpoint has no hidden layers");
        if (g.r < 1 || g.intra_sweeps < 0 || g.per_row < 1) throw UsageError("generate: bad --r, --intra-sweeps or --per-row");
        const TopInit init = make_init(g, s.machine, threads);
        prepare_out_dir(out_dir, force);
        const Eigen::MatrixXd probs =
            generate_many(s.machine, g.count, init, g.r, RngStream(g.seed, 0x6E4E), g.intra_sweeps, threads);
        fs::create_directories(out_dir);
        if (is_square_image(probs.rows()))
            write_image_grid((fs::path(out_dir) / "confabulations.pgm").string(), probs, g.per_row);
        auto csv = open_out(fs::path(out_dir) / "confabulations.csv");
        csv << std::setprecision(10);
        for (Eigen::Index k = 0; k < probs.cols(); ++k)
            for (Eigen::Index i = 0; i < probs.rows(); ++i) csv << probs(i, k) << (i + 1 < probs.rows() ? ',' : '\n');
        std::cout << "wrote " << probs.cols() << " confabulations to " << out_dir << "\n";
    };
}

// ---------------------------------------------------------------- reconstruct

struct ReconArgs {
    std::string checkpoint;
    DataArgs data;
    std::string pattern = "all";
    int gibbs_steps = 0;
    int trials = 3;
    int intra_sweeps = 1;
    std::uint64_t seed = 1;
    std::string out_dir;
    bool force = false;
    int show = 10;
};

void add_reconstruct(CLI::App& app, ReconArgs& a, int& threads, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("reconstruct", "fill in corrupted test digits and report the L1 error");
    cmd->add_option("--checkpoint", a.checkpoint, "trained RBM or single-hidden-layer BM checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    a.data.add(cmd, "test set", true);
    cmd->add_option("--pattern", a.pattern, "top, bottom, left, right or all")
        ->check(CLI::IsMember({"top", "bottom", "left", "right", "all"}))
        ->capture_default_str();
    cmd->add_option("--gibbs-steps", a.gibbs_steps, "Gibbs transitions (default 2 for VPF, 1000 for CD/PCD)");
    cmd->add_option("--trials", a.trials, "independent corruptions")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--intra-sweeps", a.intra_sweeps, "hidden sweeps per step for intra-layer BMs")->capture_default_str();
    cmd->add_option("--seed", a.seed, "corruption and sampling seed")->capture_default_str();
    cmd->add_option("--out-dir", a.out_dir, "write report.csv, report.json and triptych PGMs here");
    cmd->add_option("--show", a.show, "digits per triptych")->capture_default_str();
    cmd->add_flag("--force", a.force, "allow a non-empty output directory");
    cmd->add_option("--threads", threads, "worker threads (default: FLOWBM_THREADS or 1)");
    run = [&] {
        const TrainingState s = load_checkpoint(a.checkpoint);
        const auto& m = s.machine;
        if (m.layout.hidden_layers() != 1) throw CapabilityError("reconstruct: needs a single hidden layer");
        const int steps = a.gibbs_steps > 0 ? a.gibbs_steps : (s.config.method == Method::Vpf ? 2 : 1000);
        if (a.show < 1 || a.intra_sweeps < 0) throw UsageError("reconstruct: bad --show or --intra-sweeps");
        const Dataset test = a.data.load();
        if (!is_square_image(Eigen::Index(test.dim())) || test.dim() != std::size_t(m.width(0)))
            throw UsageError("reconstruct: test images must be 28x28 and match the checkpoint");
        if (!a.out_dir.empty()) prepare_out_dir(a.out_dir, a.force);

        std::vector<Corruption> patterns;
        if (a.pattern == "all") patterns.assign(kAllCorruptions.begin(), kAllCorruptions.end());
        else patterns.push_back(parse_corruption(a.pattern));

        EvalReport report;
        report.rho = weight_sparsity(m);
        report.w2 = squared_weight(m);
        std::cout << "gibbs steps " << steps << ", " << a.trials << " trials, " << test.size() << " images\n";
        if (!a.out_dir.empty()) fs::create_directories(a.out_dir);
        for (auto p : patterns) {
            const RngStream base(a.seed, 0x4EC0 + std::uint64_t(p));
            const auto res = reconstruction_experiment(m, test.images, p, steps, a.trials, base, a.intra_sweeps, threads);
            report.recon_errors[to_string(p)] = res.mean_error;
            std::cout << std::left << std::setw(8) << to_string(p) << std::fixed << std::setprecision(3) << res.mean_error
                      << "  trials:";
            for (double e : res.trial_errors) std::cout << ' ' << e;
            std::cout << std::defaultfloat << "\n";
            if (!a.out_dir.empty()) {
                const Eigen::Index n = std::min<Eigen::Index>(a.show, test.images.cols());
                Eigen::MatrixXd grid(test.images.rows(), 3 * n);
                grid << to_real(test.images, 0, n), to_real(res.corrupted, 0, n), to_real(res.reconstructed, 0, n);
                write_image_grid((fs::path(a.out_dir) / ("recon_" + to_string(p) + ".pgm")).string(), grid, int(n));
            }
        }
        std::cout << "rho " << *report.rho << " w2 " << *report.w2 << "\n";
        if (!a.out_dir.empty()) {
            auto csv = open_out(fs::path(a.out_dir) / "report.csv");
            report.write_csv(csv);
            open_out(fs::path(a.out_dir) / "report.json") << report.to_json().dump(2) << "\n";
        }
    };
}

// ---------------------------------------------------------------- eval-ll

struct EvalArgs {
    GenArgs gen;
    DataArgs test;
    std::string reference;
    std::size_t reference_limit = 10000;
    std::size_t n_samples = 10000;
    double sigma = 0.2;
    std::string out;
};

void add_eval_ll(CLI::App& app, EvalArgs& a, int& threads, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("eval-ll", "Parzen-window log-likelihood of test images under generated samples");
    cmd->add_option("--checkpoint", a.gen.checkpoint, "trained checkpoint")->check(CLI::ExistingFile);
    cmd->add_option("--reference", a.reference, "use these images (e.g. the training set) as the samples instead")
        ->check(CLI::ExistingFile);
    cmd->add_option("--reference-limit", a.reference_limit, "reference images used as samples")->capture_default_str();
    a.test.add(cmd, "test set", true);
    cmd->add_option("--n-samples", a.n_samples, "confabulations to generate")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--sigma", a.sigma, "Parzen bandwidth")->capture_default_str()->check(CLI::PositiveNumber);
    add_gen_options(cmd, a.gen);
    cmd->add_option("--out", a.out, "write the result as JSON");
    cmd->add_option("--threads", threads, "worker threads (default: FLOWBM_THREADS or 1)");
    run = [cmd, &a, &threads] {
        if (a.gen.checkpoint.empty() == a.reference.empty())
            throw UsageError("eval-ll: give exactly one of --checkpoint and --reference");
        if (!a.reference.empty() && (cmd->count("--init") || !a.gen.prior_data.images.empty()))
            throw UsageError("eval-ll: --init/--data apply to --checkpoint only");
        const Dataset test = a.test.load();
        Eigen::MatrixXd samples;
        std::optional<TrainingState> s;
        std::optional<TopInit> init;
        Dataset ref;
        if (!a.reference.empty()) {
            DataArgs r{a.reference, "", a.test.threshold, a.reference_limit};
            ref = r.load();
            if (ref.dim() != test.dim()) throw UsageError("eval-ll: reference and test widths differ");
        } else {
            s = load_checkpoint(a.gen.checkpoint);
            if (std::size_t(s->machine.width(0)) != test.dim()) throw UsageError("eval-ll: test width does not match the checkpoint");
            if (s->machine.layout.hidden_layers() == 0) throw CapabilityError("eval-ll: checkpoint has no hidden layers");
            init = make_init(a.gen, s->machine, threads);
        }
        if (!a.out.empty() && fs::exists(a.out)) throw UsageError("eval-ll: " + a.out + " already exists");
        if (!a.reference.empty())
            samples = to_real(ref.images);
        else
            samples = generate_many(s->machine, a.n_samples, *init, a.gen.r, RngStream(a.gen.seed, 0x6E4E), a.gen.intra_sweeps,
                                    threads);
        const auto r = parzen_ll(samples, to_real(test.images), a.sigma, threads);
        std::cout << std::fixed << std::setprecision(3) << "log-likelihood " << r.mean_ll << " +- " << r.standard_error
                  << " (" << samples.cols() << " samples, " << test.size() << " test points, sigma " << a.sigma << ")\n";
        if (!a.out.empty()) {
            const nlohmann::json j = {{"parzen_ll", r.mean_ll},
                                      {"standard_error", r.standard_error},
                                      {"samples", samples.cols()},
                                      {"test_points", test.size()},
                                      {"sigma", a.sigma}};
            open_out(a.out) << j.dump(2) << "\n";
        }
    };
}

// ---------------------------------------------------------------- stdp-curve

struct StdpArgs {
    double delta_pre = 1.0;
    double delta_post = 1.0;
    double dt_min = -0.1;
    double dt_max = 0.1;
    int points = 200;
    std::string out;
};

void add_stdp(CLI::App& app, StdpArgs& a, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("stdp-curve", "expected weight change against spike interval");
    cmd->add_option("--delta-pre", a.delta_pre, "pre-synaptic rate")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--delta-post", a.delta_post, "post-synaptic rate")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--dt-min", a.dt_min, "smallest interval")->capture_default_str();
    cmd->add_option("--dt-max", a.dt_max, "largest interval")->capture_default_str();
    cmd->add_option("--points", a.points, "sample count")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--out", a.out, "CSV path (default: stdout)");
    run = [&] {
        const auto pts = stdp_curve(a.delta_pre, a.delta_post, stdp_sweep(a.dt_min, a.dt_max, a.points));
        if (a.out.empty()) write_stdp_csv(std::cout, pts);
        else emit_stdp_csv(pts, a.out);
    };
}

// ---------------------------------------------------------------- inspect

void add_inspect(CLI::App& app, std::string& path, bool& as_json, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("inspect", "print checkpoint metadata");
    cmd->add_option("checkpoint", path, "checkpoint file")->required()->check(CLI::ExistingFile);
    cmd->add_flag("--json", as_json, "machine-readable output");
    run = [&] {
        const TrainingState s = load_checkpoint(path);
        const auto& m = s.machine;
        nlohmann::json j;
        j["format_version"] = kCheckpointVersion;
        j["layout"] = m.layout.to_string();
        j["nodes"] = m.n();
        j["epoch"] = s.epoch;
        j["adam_steps"] = s.adam.t;
        j["method"] = to_string(s.config.method);
        std::ostringstream cfg;
        write_config(cfg, s.config);
        j["config"] = cfg.str();
        j["has_chains"] = s.chains.has_value();
        j["valid"] = validate(m).empty();
        if (m.layout.hidden_layers() >= 1) {
            j["rho"] = weight_sparsity(m);
            j["w2"] = squared_weight(m);
        }
        if (as_json) {
            std::cout << j.dump(2) << "\n";
            return;
        }
        std::cout << "format version " << kCheckpointVersion << "\nlayout " << m.layout.to_string() << " (" << m.n()
                  << " nodes)\nmethod " << to_string(s.config.method) << "\nepoch " << s.epoch << "\nadam steps "
                  << s.adam.t << "\nchains " << (s.chains ? "yes" : "no") << "\nvalid " << (validate(m).empty() ? "yes" : "no")
                  << "\n";
        if (j.contains("rho")) std::cout << "rho " << j["rho"].get<double>() << "\nw2 " << j["w2"].get<double>() << "\n";
        std::cout << "config:\n" << cfg.str();
    };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowbm: Boltzmann machines trained by variational probability flow"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "flowbm 1.0");

    int threads = 1;
    TrainArgs train;
    GenArgs gen;
    std::string gen_out;
    bool gen_force = false;
    ReconArgs recon;
    EvalArgs eval;
    StdpArgs stdp;
    std::string inspect_path;
    bool inspect_json = false;
    std::function<void()> run_train, run_generate, run_recon, run_eval, run_stdp, run_inspect;

    add_train(app, train, threads, run_train);
    add_generate(app, gen, gen_out, gen_force, threads, run_generate);
    add_reconstruct(app, recon, threads, run_recon);
    add_eval_ll(app, eval, threads, run_eval);
    add_stdp(app, stdp, run_stdp);
    add_inspect(app, inspect_path, inspect_json, run_inspect);

    try {
        threads = default_threads();
        app.parse(argc, argv);
        if (threads < 1) throw UsageError("--threads must be at least 1");
        const std::map<std::string, std::function<void()>*> runs = {
            {"train", &run_train},   {"generate", &run_generate}, {"reconstruct", &run_recon},
            {"eval-ll", &run_eval},  {"stdp-curve", &run_stdp},   {"inspect", &run_inspect}};
        (*runs.at(app.get_subcommands().front()->get_name()))();
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CapabilityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
