#include <cmath>
#include <algorithm>
#include <fstream>
#include <sstream>

#include "cli_common.hpp"
#include "fbmedm/metrics.hpp"

namespace fbmedm::cli {

namespace {

std::vector<FidPoint> read_fid_points(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<FidPoint> points;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        FidPoint p;
        if (!(fields >> p.database_size >> p.mu >> p.fid)) {
            if (points.empty() && line_no == 1) continue;  // header
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) +
                                        ": expected database_size, mu, fid");
        }
        points.push_back(p);
    }
    return points;
}

EnsembleEmbedding make_embedding(const std::string& kind, std::size_t dim, std::span<const DistanceMatrix> reference,
                                 const std::string& provenance) {
    const std::size_t n = reference.front().size();
    if (kind == "identity") return identity_embedding(n);
    if (kind == "pca") return fit_pca(reference, dim, provenance);
    EnsembleEmbedding e = read_pcae(kind);
    e.n = n;
    if (e.input_dim() != std::size_t(e.basis.cols()))
        throw std::invalid_argument("embedding " + kind + " does not match matrices of size " + std::to_string(n));
    return e;
}

}  // namespace

void add_metrics(CLI::App& app, Globals& g) {
    struct Opts {
        std::string metric = "rmse";
        std::string in;
        std::string reference;
        std::string mask;
        std::string out;
        std::size_t r = 5;
        std::string norm = "spectral";
        std::size_t s_min = 2;
        std::size_t s_max = 0;
        std::vector<std::size_t> s_values{4, 16, 48};
        std::size_t dim = 3;
        std::vector<double> msd;
        double level = 0.01;
        std::string embedding = "pca";
        std::size_t pca_dim = 16;
        std::size_t draws = 100;
        double fraction = 0.9;
        double reference_fid = 0.0;
        double reference_mu = 0.0;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("metrics", "Score a dataset of distance matrices");
    sub->add_option("--metric", o->metric, "Metric")
        ->check(CLI::IsMember({"rmse", "fid", "scaling", "collapse", "rank", "fidfit"}));
    sub->add_option("--in", o->in, "Dataset (EDMD or JSON); CSV of database_size,mu,fid for fidfit")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--reference", o->reference, "Ground truth (rmse) or reference ensemble (fid)")
        ->check(CLI::ExistingFile);
    sub->add_option("--mask", o->mask, "MASK file; rmse is taken over its unknown entries")->check(CLI::ExistingFile);
    sub->add_option("--out", o->out, "Full results as JSON");
    sub->add_option("--r", o->r, "Leading singular values for rank")->check(CLI::PositiveNumber);
    sub->add_option("--norm", o->norm, "Rank-fraction norm")->check(CLI::IsMember({"spectral", "nuclear"}));
    sub->add_option("--s-min", o->s_min, "Scaling fit window start")->check(CLI::PositiveNumber);
    sub->add_option("--s-max", o->s_max, "Scaling fit window end (0: n/4)");
    sub->add_option("--s", o->s_values, "Separations for the collapse test");
    sub->add_option("--dim", o->dim, "Spatial dimension (chi-squared degrees of freedom)")->check(CLI::PositiveNumber);
    sub->add_option("--msd", o->msd, "Reference mean squared distance per --s value (default: ensemble mean)");
    sub->add_option("--level", o->level, "Collapse test level")->check(open_unit_interval());
    sub->add_option("--embedding", o->embedding, "identity, pca (fitted to --reference) or a PCAE file");
    sub->add_option("--pca-dim", o->pca_dim, "PCA feature dimension")->check(CLI::PositiveNumber);
    sub->add_option("--draws", o->draws, "Subsamples for the FID error")->check(CLI::Range(2, 100000));
    sub->add_option("--fraction", o->fraction, "Subsample fraction for the FID error")->check(open_unit_interval());
    sub->add_option("--reference-fid", o->reference_fid, "fidfit: FID level defining M*");
    sub->add_option("--reference-mu", o->reference_mu, "fidfit: missing ratio of that level");

    sub->callback([o, &g, sub] {
        json summary{{"command", "metrics"}, {"metric", o->metric}, {"in", o->in}};
        json full;
        if (o->metric == "fidfit") {
            const auto points = read_fid_points(o->in);
            std::optional<FidReference> ref;
            if (o->reference_fid > 0.0) ref = FidReference{o->reference_fid, o->reference_mu};
            const FidScalingFit fit = fid_scaling_fit(points, ref);
            summary.update({{"a", fit.a}, {"gamma", fit.gamma}, {"log_c", fit.log_c},
                            {"max_residual", fit.max_residual}});
            if (fit.log10_m_star) summary["log10_m_star"] = *fit.log10_m_star;
            full = summary;
            full["residuals"] = fit.residuals;
        } else {
            const io::EdmDataset data = load_dataset(o->in);
            if (data.matrices.empty()) throw std::invalid_argument("metrics: input dataset is empty");
            const auto& mats = data.matrices;
            summary["count"] = mats.size();
            if (o->metric == "rmse") {
                if (o->reference.empty() || o->mask.empty())
                    throw std::invalid_argument("metrics rmse: --reference and --mask are required");
                const io::EdmDataset truth = load_dataset(o->reference);
                const auto masks = load_masks(o->mask);
                if (truth.matrices.size() != mats.size())
                    throw std::invalid_argument("metrics rmse: --in and --reference differ in count");
                std::vector<double> values;
                for (std::size_t k = 0; k < mats.size(); ++k)
                    values.push_back(rmse_masked(mats[k], truth.matrices[k], mask_for(masks, k)));
                const MeanError me = mean_error(values);
                summary.update({{"rmse_mean", me.mean}, {"rmse_err", me.error}});
                full = summary;
                full["values"] = values;
            } else if (o->metric == "rank") {
                const RankNorm norm = o->norm == "nuclear" ? RankNorm::nuclear : RankNorm::spectral_l2;
                std::vector<double> values;
                for (const auto& m : mats) values.push_back(rank_fraction(m, std::min(o->r, m.size()), norm));
                const MeanError me = mean_error(values);
                summary.update({{"r", o->r}, {"norm", o->norm}, {"rank_mean", me.mean}, {"rank_err", me.error}});
                full = summary;
                full["values"] = values;
            } else if (o->metric == "scaling") {
                const ScalingResult r = scaling_exponent(mats, o->s_min, o->s_max);
                summary["hurst"] = r.hurst;
                full = summary;
                full["curve"] = r.curve;
            } else if (o->metric == "collapse") {
                std::vector<std::size_t> s_values;
                for (std::size_t s : o->s_values)
                    if (s < mats.front().size()) s_values.push_back(s);
                const auto results = gaussian_collapse(mats, s_values, o->dim, o->msd, o->level);
                json list = json::array();
                bool pass = true;
                for (const CollapseResult& c : results) {
                    pass = pass && c.pass;
                    list.push_back({{"s", c.s}, {"samples", c.samples}, {"ks", c.ks}, {"critical", c.critical},
                                    {"pass", c.pass}});
                }
                summary.update({{"pass", pass}, {"tests", list}});
                full = summary;
            } else {
                if (o->reference.empty()) throw std::invalid_argument("metrics fid: --reference is required");
                const io::EdmDataset ref = load_dataset(o->reference);
                const EnsembleEmbedding emb = make_embedding(o->embedding, o->pca_dim, ref.matrices, o->reference);
                const double fid = frechet_distance(mats, ref.matrices, emb);
                const MeanError sub_fid = frechet_distance_subsampled(mats, ref.matrices, emb, g.seed, o->draws,
                                                                      o->fraction);
                summary.update({{"fid", fid}, {"fid_err", sub_fid.error}, {"embedding", o->embedding},
                                {"features", emb.output_dim()}});
                full = summary;
            }
        }
        if (!o->out.empty()) {
            io::write_file_atomic(o->out, full.dump(2) + "\n");
            write_sidecar(o->out, *sub->get_parent(), *sub);
        }
        print_summary(summary);
    });
}

}  // namespace fbmedm::cli
