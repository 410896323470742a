#include "cli_common.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace fbmedm::cli {

namespace {

json options_json(const CLI::App& app, bool default_also) {
    json j = json::object();
    for (const CLI::Option* opt : app.get_options()) {
        if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
        const std::string& name = opt->get_lnames().front();
        if (name == "config" || name == "help") continue;
        if (opt->get_type_size() == 0) {
            if (opt->count() > 0 || default_also) j[name] = opt->count() > 0;
            continue;
        }
        const auto& results = opt->results();
        if (!results.empty()) {
            if (opt->get_expected_max() > 1)
                j[name] = results;
            else
                j[name] = results.back();
        } else if (default_also && !opt->get_default_str().empty()) {
            j[name] = opt->get_default_str();
        }
    }
    return j;
}

void flatten(const json& j, const std::string& name, const std::vector<std::string>& parents,
             std::vector<CLI::ConfigItem>& out) {
    if (j.is_object()) {
        std::vector<std::string> next = parents;
        if (!name.empty()) next.push_back(name);
        for (auto it = j.begin(); it != j.end(); ++it) flatten(*it, it.key(), next, out);
        return;
    }
    if (name.empty()) throw CLI::ConversionError("config: the top level must be a JSON object");
    CLI::ConfigItem item;
    item.name = name;
    item.parents = parents;
    auto scalar = [&](const json& v) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        throw CLI::ConversionError("config: unsupported value for '" + name + "'");
    };
    if (j.is_array()) {
        for (const json& v : j) item.inputs.push_back(scalar(v));
    } else {
        item.inputs.push_back(scalar(j));
    }
    out.push_back(std::move(item));
}

}  // namespace

std::string JsonConfig::to_config(const CLI::App* app, bool default_also, bool, std::string) const {
    json j = options_json(*app, default_also);
    for (const CLI::App* sub : app->get_subcommands()) j[sub->get_name()] = options_json(*sub, default_also);
    return j.dump(2);
}

std::vector<CLI::ConfigItem> JsonConfig::from_config(std::istream& input) const {
    json j;
    try {
        input >> j;
    } catch (const json::parse_error& e) {
        throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    flatten(j, "", {}, items);
    return items;
}

json resolved_config(const CLI::App& root, const CLI::App& sub) {
    json j = options_json(root, true);
    j[sub.get_name()] = options_json(sub, true);
    return j;
}

void write_sidecar(const std::filesystem::path& out, const CLI::App& root, const CLI::App& sub) {
    std::filesystem::path side = out;
    side += ".config.json";
    io::write_file_atomic(side, resolved_config(root, sub).dump(2) + "\n");
}

void print_summary(const json& summary) { std::cout << summary.dump() << std::endl; }

namespace {
bool is_json_path(const std::filesystem::path& p) { return p.extension() == ".json"; }
}  // namespace

io::EdmDataset load_dataset(const std::filesystem::path& path) {
    if (is_json_path(path)) {
        MaskedMatrix mm = io::matrix_from_json(io::read_file(path));
        io::EdmDataset d;
        d.squared = mm.matrix.squared();
        d.matrices.push_back(std::move(mm.matrix));
        return d;
    }
    return io::read_edmd(path);
}

std::vector<Mask> load_masks(const std::filesystem::path& path) {
    if (is_json_path(path)) return {io::matrix_from_json(io::read_file(path)).mask};
    return io::read_masks(path);
}

void save_dataset(const std::filesystem::path& path, const io::EdmDataset& data) {
    if (is_json_path(path)) {
        if (data.matrices.size() != 1) throw std::invalid_argument("JSON output holds exactly one matrix");
        io::write_file_atomic(path, io::matrix_to_json(data.matrices.front()) + "\n");
        return;
    }
    io::write_edmd(path, data);
}

const Mask& mask_for(const std::vector<Mask>& masks, std::size_t k) {
    if (masks.size() == 1) return masks.front();
    if (k >= masks.size())
        throw std::invalid_argument("mask file holds " + std::to_string(masks.size()) + " masks, matrix " +
                                    std::to_string(k) + " has none");
    return masks[k];
}

void add_sampler_options(CLI::App& sub, SamplerConfig& cfg) {
    static const std::map<std::string, PosteriorVariance> variances{{"beta", PosteriorVariance::beta},
                                                                    {"beta-tilde", PosteriorVariance::beta_tilde}};
    sub.add_option("--steps", cfg.steps, "Sampling chain length")->check(CLI::PositiveNumber);
    sub.add_option("--resamples", cfg.repaint_resamples, "RePaint resamples per step")->check(CLI::PositiveNumber);
    sub.add_option("--travel-length", cfg.ddnm_travel_length, "DDNM time-travel length")->check(CLI::PositiveNumber);
    sub.add_option("--repeats", cfg.ddnm_repeats, "DDNM repeats per jump point")->check(CLI::PositiveNumber);
    sub.add_option("--eta", cfg.ddrm_eta, "DDRM eta")->check(CLI::Range(0.0, 1.0));
    sub.add_option("--sigma-y", cfg.ddrm_sigma_y, "DDRM observation noise")->check(CLI::NonNegativeNumber);
    sub.add_option("--variance", cfg.variance, "Reverse-step variance")
        ->transform(CLI::CheckedTransformer(variances, CLI::ignore_case))
        ->default_str("beta");
    sub.add_option("--batch", cfg.batch, "Chains per predictor call")->check(CLI::PositiveNumber);
}

std::vector<double> mu_values(const std::vector<double>& list, double start, double stop, std::size_t count) {
    if (!list.empty()) return list;
    if (count == 0) throw std::invalid_argument("mu count must be positive");
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k)
        out[k] = count == 1 ? start : start + (stop - start) * double(k) / double(count - 1);
    return out;
}

CLI::Validator open_unit_interval() {
    return CLI::Validator(
        [](std::string& s) -> std::string {
            double v = 0.0;
            if (!CLI::detail::lexical_cast(s, v) || !(v > 0.0 && v < 1.0)) return "value " + s + " not in (0, 1)";
            return {};
        },
        "(0,1)");
}

CLI::Validator closed_unit_interval() {
    return CLI::Validator(
        [](std::string& s) -> std::string {
            double v = 0.0;
            if (!CLI::detail::lexical_cast(s, v) || !(v >= 0.0 && v <= 1.0)) return "value " + s + " not in [0, 1]";
            return {};
        },
        "[0,1]");
}

}  // namespace fbmedm::cli
