#include <cmath>
#include <optional>

#include "cli_common.hpp"
#include "fbmedm/complete.hpp"
#include "fbmedm/metrics.hpp"
#include "fbmedm/parallel.hpp"
#include "fbmedm/unet.hpp"

namespace fbmedm::cli {

namespace {

const std::vector<std::string> kCompleteMethods{"fista", "opt", "nn", "db", "mean", "ddpm", "repaint", "ddrm", "ddnm"};

bool is_diffusion(const std::string& m) { return m == "ddpm" || m == "repaint" || m == "ddrm" || m == "ddnm"; }

}  // namespace

void add_complete(CLI::App& app, Globals& g) {
    struct Opts {
        std::string method = "fista";
        std::string in;
        std::string mask;
        std::string database;
        std::string model;
        std::string out;
        CompletionConfig cfg;
        SamplerConfig sampler;
    };
    static const std::map<std::string, IndexMetric> metrics{{"manhattan", IndexMetric::manhattan},
                                                           {"chebyshev", IndexMetric::chebyshev}};
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("complete", "Fill the unknown entries of masked distance matrices");
    sub->add_option("--method", o->method, "Completion method")->check(CLI::IsMember(kCompleteMethods));
    sub->add_option("--in", o->in, "EDMD dataset or single-matrix JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--mask", o->mask, "MASK file (omit for JSON input carrying its own mask)")
        ->check(CLI::ExistingFile);
    sub->add_option("--database", o->database, "EDMD reference set for --method db")->check(CLI::ExistingFile);
    sub->add_option("--model", o->model, "EPSW predictor for diffusion methods")->check(CLI::ExistingFile);
    sub->add_option("--out", o->out, "Completed matrices (EDMD, or JSON for one matrix)")->required();
    sub->add_option("--beta", o->cfg.beta, "FISTA threshold (<= 0: beta-scale x mean known entry)");
    sub->add_option("--beta-scale", o->cfg.beta_scale, "FISTA threshold relative to the mean known entry")
        ->check(CLI::PositiveNumber);
    sub->add_option("--beta-start-scale", o->cfg.beta_start_scale, "FISTA continuation start (relative)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--beta-decay", o->cfg.beta_decay, "FISTA continuation factor per iteration")
        ->check(CLI::Range(0.0, 1.0));
    sub->add_option("--tol", o->cfg.fista_tol, "FISTA relative change tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", o->cfg.fista_max_iter, "FISTA iteration cap")->check(CLI::PositiveNumber);
    sub->add_option("--opt-steps", o->cfg.opt_steps, "Adam steps")->check(CLI::PositiveNumber);
    sub->add_option("--opt-lr", o->cfg.opt_lr, "Adam learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--opt-restarts", o->cfg.opt_restarts, "Trajectory-optimization restarts")
        ->check(CLI::PositiveNumber);
    sub->add_option("--opt-dim", o->cfg.opt_dim, "Embedding dimension")->check(CLI::PositiveNumber);
    sub->add_option("--nn-metric", o->cfg.nn_metric, "Index distance for nearest-neighbour fill")
        ->transform(CLI::CheckedTransformer(metrics, CLI::ignore_case))
        ->default_str("manhattan");
    add_sampler_options(*sub, o->sampler);

    sub->callback([o, &g, sub] {
        io::EdmDataset data = load_dataset(o->in);
        if (data.matrices.empty()) throw std::invalid_argument("complete: input dataset is empty");
        const std::size_t count = data.matrices.size();
        const std::size_t n = data.matrices.front().size();
        for (const auto& m : data.matrices)
            if (m.size() != n) throw std::invalid_argument("complete: matrices differ in size");
        const bool has_truth = !o->mask.empty();
        const std::vector<Mask> masks = has_truth ? load_masks(o->mask) : load_masks(o->in);
        if (masks.front().size() != n) throw std::invalid_argument("complete: mask and matrix sizes differ");
        std::vector<MaskedMatrix> masked(count);
        for (std::size_t k = 0; k < count; ++k) masked[k] = apply_mask(data.matrices[k], mask_for(masks, k));

        std::optional<LoadedModel> model;
        std::optional<io::EdmDataset> database;
        std::optional<EnsembleMean> ensemble;
        if (is_diffusion(o->method)) {
            if (o->model.empty()) throw std::invalid_argument("complete: --model is required for " + o->method);
            model = load_predictor(o->model, n);
            o->sampler.jobs = 1;
            o->sampler.validate();
        } else if (o->method == "db") {
            if (o->database.empty()) throw std::invalid_argument("complete: --database is required for db");
            database = io::read_edmd(o->database);
        } else if (o->method == "mean") {
            ensemble.emplace(masked);
        } else {
            o->cfg.method = parse_completion_method(o->method);
            o->cfg.validate();
        }

        std::vector<DistanceMatrix> completed(count);
        std::vector<std::string> errors(count);
        parallel_for(count, g.jobs, [&](std::size_t k) {
            try {
                const std::uint64_t seed = g.seed ^ k;
                if (model) {
                    completed[k] = inpaint_edm(parse_inpaint_method(o->method), *model->predictor, model->schedule,
                                               masked[k], model->normalization, o->sampler, seed);
                } else if (database) {
                    completed[k] = db_search_complete(masked[k], database->matrices).completed;
                } else if (ensemble) {
                    completed[k] = ensemble->complete(masked[k]).completed;
                } else {
                    completed[k] = complete(masked[k], o->cfg, seed).completed;
                }
            } catch (const std::exception& e) {
                errors[k] = e.what();
                completed[k] = masked[k].matrix;
            }
        });

        json failed = json::array();
        std::vector<double> rmse;
        for (std::size_t k = 0; k < count; ++k) {
            if (!errors[k].empty()) {
                failed.push_back({{"index", k}, {"error", errors[k]}});
            } else if (has_truth && mask_for(masks, k).missing_pairs() > 0) {
                rmse.push_back(rmse_masked(completed[k], data.matrices[k], mask_for(masks, k)));
            }
        }
        io::EdmDataset result{data.hurst, data.squared, std::move(completed)};
        save_dataset(o->out, result);
        write_sidecar(o->out, *sub->get_parent(), *sub);

        json summary{{"command", "complete"}, {"method", o->method}, {"out", o->out},
                     {"count", count},        {"n", n},               {"seed", g.seed}};
        if (!rmse.empty()) {
            const MeanError me = mean_error(rmse);
            summary["rmse_mean"] = me.mean;
            summary["rmse_err"] = me.error;
        }
        if (!failed.empty()) {
            summary["failed"] = failed;
            throw PartialFailure(std::to_string(failed.size()) + " of " + std::to_string(count) +
                                     " matrices failed (failed items hold their masked input)",
                                 summary);
        }
        print_summary(summary);
    });
}

void add_sample(CLI::App& app, Globals& g) {
    struct Opts {
        std::string model;
        std::size_t count = 10;
        std::string out;
        SamplerConfig sampler;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("sample", "Draw unconditional distance matrices from a trained predictor");
    sub->add_option("--model", o->model, "EPSW predictor")->required()->check(CLI::ExistingFile);
    sub->add_option("--count", o->count, "Matrices to generate")->check(CLI::PositiveNumber);
    sub->add_option("--out", o->out, "EDMD output")->required();
    add_sampler_options(*sub, o->sampler);
    sub->callback([o, &g, sub] {
        const LoadedModel model = load_predictor(o->model);
        o->sampler.jobs = g.jobs;
        o->sampler.validate();
        const ImageBatch images = ddpm_sample(*model.predictor, model.schedule, o->count, g.seed, o->sampler);
        io::EdmDataset data;
        data.hurst = model.normalization.hurst;
        double max_asym = 0.0;
        double max_clip = 0.0;
        for (std::size_t k = 0; k < images.count; ++k) {
            PostprocessReport r = postprocess_edm(images.image(k), images.n, model.normalization);
            max_asym = std::max(max_asym, r.max_asymmetry);
            max_clip = std::max(max_clip, r.max_clipped);
            data.matrices.push_back(std::move(r.matrix));
        }
        save_dataset(o->out, data);
        write_sidecar(o->out, *sub->get_parent(), *sub);
        print_summary({{"command", "sample"},
                       {"out", o->out},
                       {"count", images.count},
                       {"n", images.n},
                       {"hurst", model.normalization.hurst},
                       {"postprocessed", true},
                       {"max_asymmetry", max_asym},
                       {"max_clipped", max_clip},
                       {"seed", g.seed}});
    });
}

void add_model(CLI::App& app, Globals&) {
    auto path = std::make_shared<std::string>();
    CLI::App* sub = app.add_subcommand("model", "Load a predictor and verify its recorded check vectors");
    sub->add_option("--model", *path, "EPSW predictor")->required()->check(CLI::ExistingFile);
    sub->callback([path] {
        const LoadedModel m = load_predictor(*path);
        print_summary({{"command", "model"},
                       {"model", *path},
                       {"n", m.predictor->image_size()},
                       {"T", m.schedule.size()},
                       {"hurst", m.normalization.hurst},
                       {"check_vectors", m.check_vectors.size()},
                       {"check_error", m.check_vectors.empty() ? 0.0 : m.check_error()}});
    });
}

}  // namespace fbmedm::cli
