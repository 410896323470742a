#include <numeric>

#include "cli_common.hpp"
#include "fbmedm/fbm.hpp"
#include "fbmedm/parallel.hpp"
#include "fbmedm/rigidity.hpp"

namespace fbmedm::cli {

void add_generate(CLI::App& app, Globals& g) {
    struct Opts {
        FbmParams params;
        std::size_t count = 1000;
        std::string out;
        std::string trajectories;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("generate", "Synthesize fBm trajectories and their distance matrices");
    sub->add_option("--hurst", o->params.hurst, "Hurst exponent")->check(open_unit_interval());
    sub->add_option("--n", o->params.n_points, "Points per trajectory")->check(CLI::Range(2, 1024));
    sub->add_option("--count", o->count, "Number of trajectories")->check(CLI::PositiveNumber);
    sub->add_option("--step-scale", o->params.step_scale, "Single-jump displacement a")->check(CLI::PositiveNumber);
    sub->add_option("--dim", o->params.dim, "Spatial dimension")->check(CLI::PositiveNumber);
    sub->add_flag("--unit-coordinate-variance", o->params.unit_coordinate_variance,
                  "Give every coordinate variance a^2 s^2H instead of splitting it across dimensions");
    sub->add_option("--out", o->out, "EDMD output")->required();
    sub->add_option("--trajectories", o->trajectories, "Also write the trajectories (TRAJ)");
    sub->callback([o, &g, sub] {
        o->params.validate();
        const auto traj = generate_fbm(o->params, o->count, g.seed, g.jobs);
        io::EdmDataset data;
        data.hurst = o->params.hurst;
        data.matrices.resize(traj.size());
        parallel_for(traj.size(), g.jobs, [&](std::size_t k) { data.matrices[k] = edm_from_trajectory(traj[k]); });
        save_dataset(o->out, data);
        if (!o->trajectories.empty())
            io::write_traj(o->trajectories, {o->params.hurst, o->params.step_scale, traj});
        write_sidecar(o->out, *sub->get_parent(), *sub);
        print_summary({{"command", "generate"},
                       {"out", o->out},
                       {"count", o->count},
                       {"n", o->params.n_points},
                       {"hurst", o->params.hurst},
                       {"seed", g.seed}});
    });
}

void add_mask(CLI::App& app, Globals& g) {
    struct Opts {
        std::size_t n = 0;
        std::size_t count = 0;
        double mu = 0.5;
        std::vector<std::size_t> rows;
        std::string in;
        std::string out;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("mask", "Draw known-entry masks (random pairs or dropped rows)");
    sub->add_option("--in", o->in, "Dataset whose size and count the masks follow");
    sub->add_option("--n", o->n, "Matrix size (taken from --in if given)");
    sub->add_option("--count", o->count, "Number of masks (default: one per input matrix, else 1)");
    sub->add_option("--mu", o->mu, "Probability that a pair is unknown")->check(closed_unit_interval());
    sub->add_option("--rows", o->rows, "Drop these rows/columns (0-based) instead of random pairs");
    sub->add_option("--out", o->out, "MASK output")->required();
    sub->callback([o, &g, sub] {
        std::size_t n = o->n;
        std::size_t count = o->count;
        if (!o->in.empty()) {
            const auto data = load_dataset(o->in);
            if (data.matrices.empty()) throw std::invalid_argument("mask: input dataset is empty");
            n = data.matrices.front().size();
            if (count == 0) count = data.matrices.size();
        }
        if (n < 2) throw std::invalid_argument("mask: --n (or --in) must give a size of at least 2");
        if (count == 0) count = 1;
        std::vector<Mask> masks(count);
        for (std::size_t k = 0; k < count; ++k)
            masks[k] = o->rows.empty() ? random_mask(n, o->mu, g.seed ^ k) : row_col_mask(n, o->rows);
        io::write_masks(o->out, masks);
        write_sidecar(o->out, *sub->get_parent(), *sub);
        double mean_mu = 0.0;
        for (const Mask& m : masks) mean_mu += m.missing_ratio();
        print_summary({{"command", "mask"},
                       {"out", o->out},
                       {"count", count},
                       {"n", n},
                       {"missing_ratio", mean_mu / double(count)},
                       {"seed", g.seed}});
    });
}

void add_rigidity(CLI::App& app, Globals& g) {
    struct Opts {
        std::string in;
        std::string out;
        std::size_t n = 64;
        double mu = 0.5;
        std::size_t trials = 1000;
        std::size_t min_links = 4;
        AdoptionRule rule = AdoptionRule::known_links;
    };
    static const std::map<std::string, AdoptionRule> rules{{"known-links", AdoptionRule::known_links},
                                                          {"clear-rows", AdoptionRule::clear_adopted_rows}};
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("rigidity", "Test masks for rigidity, or estimate the rigid fraction");
    sub->add_option("--in", o->in, "MASK file to test (otherwise random masks are drawn)");
    sub->add_option("--out", o->out, "JSON results");
    sub->add_option("--n", o->n, "Matrix size for random masks")->check(CLI::Range(2, 1024));
    sub->add_option("--mu", o->mu, "Missing ratio for random masks")->check(closed_unit_interval());
    sub->add_option("--trials", o->trials, "Random masks to draw")->check(CLI::PositiveNumber);
    sub->add_option("--min-links", o->min_links, "Links required for adoption (D + 1)")->check(CLI::Range(2, 64));
    sub->add_option("--rule", o->rule, "Adoption rule")->transform(CLI::CheckedTransformer(rules, CLI::ignore_case))->default_str("known-links");
    sub->callback([o, &g, sub] {
        const RigidityOptions opts{o->min_links, o->rule};
        json summary{{"command", "rigidity"}, {"seed", g.seed}};
        if (o->in.empty()) {
            const double f = rigid_fraction(o->n, o->mu, o->trials, g.seed, opts, g.jobs);
            summary.update({{"n", o->n}, {"mu", o->mu}, {"trials", o->trials}, {"rigid_fraction", f}});
            if (!o->out.empty()) io::write_file_atomic(o->out, summary.dump(2) + "\n");
        } else {
            const auto masks = load_masks(o->in);
            std::vector<RigidityResult> results(masks.size());
            parallel_for(masks.size(), g.jobs, [&](std::size_t k) { results[k] = is_rigid(masks[k], opts); });
            json list = json::array();
            std::size_t rigid = 0;
            for (const RigidityResult& r : results) {
                rigid += r.rigid;
                list.push_back({{"rigid", r.rigid}, {"order", r.order}, {"seed_clique", r.seed_clique}});
            }
            summary.update({{"in", o->in}, {"count", masks.size()}, {"rigid", rigid}});
            if (masks.size() == 1) summary["result"] = list.front();
            if (!o->out.empty()) io::write_file_atomic(o->out, list.dump(2) + "\n");
        }
        if (!o->out.empty()) write_sidecar(o->out, *sub->get_parent(), *sub);
        print_summary(summary);
    });
}

}  // namespace fbmedm::cli
