#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "cli_common.hpp"
#include "fbmedm/complete.hpp"
#include "fbmedm/metrics.hpp"
#include "fbmedm/parallel.hpp"
#include "fbmedm/rigidity.hpp"
#include "fbmedm/rng.hpp"
#include "fbmedm/unet.hpp"

namespace fbmedm::cli {

namespace {

constexpr const char* kHeader = "mu,method,rmse,rmse_err,fid,fid_err,rank,rigid_fraction,seed";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Row {
    double mu = 0.0;
    std::string method;
    double rmse = kNaN, rmse_err = kNaN, fid = kNaN, fid_err = kNaN, rank = kNaN, rigid = kNaN;
    std::uint64_t seed = 0;
};

std::string format_row(const Row& r) {
    std::ostringstream s;
    s.precision(17);
    s << r.mu << ',' << r.method << ',' << r.rmse << ',' << r.rmse_err << ',' << r.fid << ',' << r.fid_err << ','
      << r.rank << ',' << r.rigid << ',' << r.seed;
    return s.str();
}

// Key for resuming: mu printed at full precision, method, seed.
std::string row_key(double mu, const std::string& method, std::uint64_t seed) {
    std::ostringstream s;
    s.precision(17);
    s << mu << ',' << method << ',' << seed;
    return s.str();
}

std::vector<std::string> read_existing(const std::filesystem::path& path, std::set<std::string>& done) {
    std::vector<std::string> lines;
    if (!std::filesystem::exists(path)) return lines;
    std::ifstream in(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            if (line != kHeader) throw std::invalid_argument(path.string() + " exists with a different header");
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
        if (f.size() != 9) throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": bad row");
        done.insert(row_key(std::stod(f[0]), f[1], std::stoull(f[8])));
        lines.push_back(line);
    }
    return lines;
}

void write_table(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::string text = std::string(kHeader) + "\n";
    for (const auto& l : lines) text += l + "\n";
    io::write_file_atomic(path, text);
}

}  // namespace

void add_sweep(CLI::App& app, Globals& g) {
    struct Opts {
        std::string in;
        std::vector<std::string> methods{"fista", "nn"};
        std::vector<double> mu;
        double mu_start = 0.01;
        double mu_stop = 0.99;
        std::size_t mu_count = 100;
        std::size_t count = 0;
        std::string model;
        std::string database;
        std::string out;
        std::size_t rigid_trials = 100;
        std::size_t fid_dim = 16;
        std::size_t fid_draws = 20;
        CompletionConfig cfg;
        SamplerConfig sampler;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("sweep", "RMSE, FID, rank and rigid fraction against the missing ratio");
    sub->add_option("--in", o->in, "Ground-truth EDMD dataset")->required()->check(CLI::ExistingFile);
    sub->add_option("--methods", o->methods, "Completion methods")
        ->check(CLI::IsMember({"fista", "opt", "nn", "db", "mean", "ddpm", "repaint", "ddrm", "ddnm"}));
    sub->add_option("--mu", o->mu, "Explicit missing ratios (overrides the range)")->check(closed_unit_interval());
    sub->add_option("--mu-start", o->mu_start, "First missing ratio")->check(closed_unit_interval());
    sub->add_option("--mu-stop", o->mu_stop, "Last missing ratio")->check(closed_unit_interval());
    sub->add_option("--mu-count", o->mu_count, "Evenly spaced ratios")->check(CLI::PositiveNumber);
    sub->add_option("--count", o->count, "Matrices per ratio (0: all)");
    sub->add_option("--model", o->model, "EPSW predictor for diffusion methods")->check(CLI::ExistingFile);
    sub->add_option("--database", o->database, "EDMD reference set for db")->check(CLI::ExistingFile);
    sub->add_option("--out", o->out, "CSV table; existing rows are kept and skipped")->required();
    sub->add_option("--rigid-trials", o->rigid_trials, "Random masks per ratio for the rigid fraction");
    sub->add_option("--fid-dim", o->fid_dim, "PCA features for the FID (fitted to the ground truth)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--fid-draws", o->fid_draws, "Subsamples for the FID error")->check(CLI::Range(2, 100000));
    sub->add_option("--max-iter", o->cfg.fista_max_iter, "FISTA iteration cap")->check(CLI::PositiveNumber);
    sub->add_option("--opt-steps", o->cfg.opt_steps, "Adam steps")->check(CLI::PositiveNumber);
    add_sampler_options(*sub, o->sampler);

    sub->callback([o, &g, sub] {
        io::EdmDataset data = io::read_edmd(o->in);
        if (data.matrices.empty()) throw std::invalid_argument("sweep: input dataset is empty");
        if (o->count > 0 && o->count < data.matrices.size()) data.matrices.resize(o->count);
        const auto& truth = data.matrices;
        const std::size_t count = truth.size();
        const std::size_t n = truth.front().size();
        const std::vector<double> mus = mu_values(o->mu, o->mu_start, o->mu_stop, o->mu_count);

        std::optional<LoadedModel> model;
        std::optional<io::EdmDataset> database;
        for (const auto& m : o->methods) {
            if ((m == "ddpm" || m == "repaint" || m == "ddrm" || m == "ddnm") && !model) {
                if (o->model.empty()) throw std::invalid_argument("sweep: --model is required for " + m);
                model = load_predictor(o->model, n);
            }
            if (m == "db" && !database) {
                if (o->database.empty()) throw std::invalid_argument("sweep: --database is required for db");
                database = io::read_edmd(o->database);
            }
        }
        o->sampler.jobs = 1;
        o->sampler.validate();
        o->cfg.validate();

        std::optional<EnsembleEmbedding> emb;
        if (count >= 4) emb = fit_pca(truth, std::min(o->fid_dim, std::min(count - 2, n * (n - 1) / 2)), o->in);

        std::set<std::string> done;
        std::vector<std::string> lines = read_existing(o->out, done);
        json failed = json::array();
        std::size_t computed = 0, skipped = 0;

        for (double mu : mus) {
            std::vector<std::string> todo;
            for (const auto& m : o->methods) {
                if (done.count(row_key(mu, m, g.seed)))
                    ++skipped;
                else
                    todo.push_back(m);
            }
            if (todo.empty()) continue;
            const std::uint64_t mu_bits = std::bit_cast<std::uint64_t>(mu);
            std::vector<MaskedMatrix> masked(count);
            for (std::size_t k = 0; k < count; ++k)
                masked[k] = apply_mask(truth[k], random_mask(n, mu, stream_id({g.seed, mu_bits, k})));
            const double rigid = o->rigid_trials ? rigid_fraction(n, mu, o->rigid_trials, g.seed ^ mu_bits, {}, g.jobs)
                                                 : kNaN;
            std::optional<EnsembleMean> ensemble;
            // Nothing to complete from: the row records the rigid fraction only.
            const bool nothing_known = std::all_of(masked.begin(), masked.end(), [n](const MaskedMatrix& m) {
                return m.mask.missing_pairs() == n * (n - 1) / 2;
            });

            for (const auto& method : todo) {
                Row row;
                row.mu = mu;
                row.method = method;
                row.seed = g.seed;
                row.rigid = rigid;
                if (nothing_known) {
                    lines.push_back(format_row(row));
                    write_table(o->out, lines);
                    ++computed;
                    continue;
                }
                try {
                    CompletionConfig cfg = o->cfg;
                    if (method == "fista" || method == "opt" || method == "nn") cfg.method = parse_completion_method(method);
                    if (method == "mean" && !ensemble) ensemble.emplace(masked);
                    std::vector<DistanceMatrix> completed(count);
                    parallel_for(count, g.jobs, [&](std::size_t k) {
                        const std::uint64_t seed = stream_id({g.seed, mu_bits, k, 1});
                        if (model && method != "fista" && method != "opt" && method != "nn" && method != "db" &&
                            method != "mean")
                            completed[k] = inpaint_edm(parse_inpaint_method(method), *model->predictor,
                                                       model->schedule, masked[k], model->normalization, o->sampler,
                                                       seed);
                        else if (method == "db")
                            completed[k] = db_search_complete(masked[k], database->matrices).completed;
                        else if (method == "mean")
                            completed[k] = ensemble->complete(masked[k]).completed;
                        else
                            completed[k] = complete(masked[k], cfg, seed).completed;
                    });
                    std::vector<double> rmse, rank;
                    for (std::size_t k = 0; k < count; ++k) {
                        rmse.push_back(masked[k].mask.missing_pairs() == 0
                                           ? 0.0
                                           : rmse_masked(completed[k], truth[k], masked[k].mask));
                        rank.push_back(rank_fraction(completed[k], std::min<std::size_t>(5, n)));
                    }
                    const MeanError r = mean_error(rmse);
                    row.rmse = r.mean;
                    row.rmse_err = r.error;
                    row.rank = mean_error(rank).mean;
                    if (emb) {
                        row.fid = frechet_distance(completed, truth, *emb);
                        row.fid_err = frechet_distance_subsampled(completed, truth, *emb, g.seed, o->fid_draws).error;
                    }
                } catch (const std::exception& e) {
                    failed.push_back({{"mu", mu}, {"method", method}, {"error", e.what()}});
                    continue;
                }
                lines.push_back(format_row(row));
                write_table(o->out, lines);
                ++computed;
            }
        }
        if (lines.empty()) write_table(o->out, lines);
        write_sidecar(o->out, *sub->get_parent(), *sub);
        json summary{{"command", "sweep"}, {"out", o->out},         {"rows", lines.size()},
                     {"computed", computed}, {"skipped", skipped}, {"seed", g.seed}};
        if (!failed.empty()) {
            summary["failed"] = failed;
            throw PartialFailure(std::to_string(failed.size()) + " sweep cells failed", summary);
        }
        print_summary(summary);
    });
}

}  // namespace fbmedm::cli
