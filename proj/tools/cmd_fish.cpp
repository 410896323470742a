#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include "cli_common.hpp"
#include "fbmedm/fish.hpp"
#include "fbmedm/unet.hpp"

namespace fbmedm::cli {

void add_fish(CLI::App& app, Globals& g) {
    struct Opts {
        std::string in;
        std::string method = "nn";
        int missing_rows = -1;
        std::vector<long> cells;
        std::size_t drop = 10;
        std::vector<std::size_t> drop_probes;
        std::string model;
        double step_scale = 0.0;
        std::string out;
        std::string report;
        std::string scaling;
        SamplerConfig sampler;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("fish", "Impute hidden probes of chromatin-tracing cells");
    sub->add_option("--in", o->in, "Probe table (segment, chromosome, n, x, y, z; comma or tab separated)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--method", o->method, "Imputation method")
        ->check(CLI::IsMember({"nn", "ensemble-mean", "mean", "ddpm", "repaint", "ddrm", "ddnm"}));
    sub->add_option("--missing-rows", o->missing_rows, "Keep only cells with exactly this many absent probes");
    sub->add_option("--cell", o->cells, "Keep only these chromosome indices");
    sub->add_option("--drop", o->drop, "Further present probes to hide per cell");
    sub->add_option("--drop-probes", o->drop_probes, "Hide these probe numbers (1-based) instead of a random draw");
    sub->add_option("--model", o->model, "EPSW predictor for diffusion methods")->check(CLI::ExistingFile);
    sub->add_option("--step-scale", o->step_scale, "nm per model length unit (<= 0: RMS neighbour distance)");
    sub->add_option("--out", o->out, "Completed matrices, raw distances in nm (EDMD)")->required();
    sub->add_option("--report", o->report, "Per-cell JSON report");
    sub->add_option("--scaling", o->scaling, "Write the x(s) curve of the selected cells as CSV");
    add_sampler_options(*sub, o->sampler);

    sub->callback([o, &g, sub] {
        std::ifstream in(o->in);
        if (!in) throw std::runtime_error("cannot open " + o->in);
        std::vector<FishCell> cells = parse_fish_table(in);
        if (o->missing_rows >= 0) cells = select_cells(cells, std::size_t(o->missing_rows));
        if (!o->cells.empty())
            std::erase_if(cells, [&](const FishCell& c) {
                return std::find(o->cells.begin(), o->cells.end(), c.chromosome_index) == o->cells.end();
            });
        if (cells.empty()) throw std::invalid_argument("fish: no cells left after selection");

        ImputeConfig cfg;
        cfg.method = parse_fish_method(o->method);
        cfg.drop = o->drop;
        cfg.seed = g.seed;
        cfg.step_scale = o->step_scale;
        cfg.jobs = g.jobs;
        cfg.sampler = o->sampler;
        cfg.sampler.jobs = 1;
        if (!o->drop_probes.empty()) {
            std::vector<std::size_t> rows;
            for (std::size_t p : o->drop_probes) {
                if (p == 0) throw std::invalid_argument("fish: probe numbers start at 1");
                rows.push_back(p - 1);
            }
            cfg.drop_indices = rows;
        }

        std::optional<LoadedModel> loaded;
        std::optional<FishModel> model;
        if (cfg.method != FishMethod::nn && cfg.method != FishMethod::ensemble_mean) {
            if (o->model.empty()) throw std::invalid_argument("fish: --model is required for " + o->method);
            cfg.sampler.validate();
            loaded = load_predictor(o->model);
            model = FishModel{loaded->predictor.get(), &loaded->schedule, loaded->normalization};
        }
        const ImputeSummary s = impute_cells(cells, cfg, model ? &*model : nullptr);

        io::EdmDataset data;
        data.squared = false;
        json per_cell = json::array();
        std::size_t fallback = 0;
        for (const CellReport& c : s.cells) {
            data.matrices.push_back(c.completed.to_raw());
            fallback += c.fallback_entries;
            per_cell.push_back({{"chromosome_index", c.chromosome_index},
                                {"dropped", c.dropped},
                                {"rmse_nm", c.rmse_nm},
                                {"rank", c.rank},
                                {"fallback_entries", c.fallback_entries}});
        }
        save_dataset(o->out, data);
        write_sidecar(o->out, *sub->get_parent(), *sub);

        const ScalingResult scaling = fish_scaling(cells);
        if (!o->scaling.empty()) {
            std::ostringstream csv;
            csv.precision(17);
            csv << "s,x\n";
            for (const auto& [sep, x] : scaling.curve) csv << sep << ',' << x << '\n';
            io::write_file_atomic(o->scaling, csv.str());
        }

        json summary{{"command", "fish"},
                     {"method", fish_method_name(s.method)},
                     {"rmse_mean", s.rmse.mean},
                     {"rmse_err", s.rmse.error},
                     {"rank_mean", s.rank.mean},
                     {"rank_err", s.rank.error},
                     {"cells", s.cells.size()},
                     {"step_scale", s.step_scale},
                     {"fallback_entries", fallback},
                     {"scaling_hurst", scaling.hurst},
                     {"out", o->out},
                     {"seed", g.seed}};
        if (s.model_n) summary["model_n"] = s.model_n;
        if (!o->report.empty()) {
            json full = summary;
            full["per_cell"] = per_cell;
            full["units"] = "rmse in nm over raw distances of the hidden, originally known pairs";
            io::write_file_atomic(o->report, full.dump(2) + "\n");
        }
        print_summary(summary);
    });
}

}  // namespace fbmedm::cli
