#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbmedm/edm.hpp"
#include "fbmedm/io.hpp"
#include "fbmedm/samplers.hpp"

namespace fbmedm::cli {

using json = nlohmann::json;

struct Globals {
    std::uint64_t seed = 0;
    unsigned jobs = 1;
};

// Thrown by commands that finished some items but not all; the summary is
// still printed and the process exits with `code`.
class PartialFailure : public std::runtime_error {
public:
    PartialFailure(const std::string& what, json summary)
        : std::runtime_error(what), summary_(std::move(summary)) {}
    const json& summary() const { return summary_; }

private:
    json summary_;
};

// Reads {"section": {"option": value, ...}, "option": value} config files.
// Numbers keep their exact textual form so a sidecar reproduces the run.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool write_description,
                          std::string prefix) const override;
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;
};

// Resolved options of the root and the given subcommand, as JSON.
json resolved_config(const CLI::App& root, const CLI::App& sub);

// Writes the resolved config next to `out` (out + ".config.json").
void write_sidecar(const std::filesystem::path& out, const CLI::App& root, const CLI::App& sub);

void print_summary(const json& summary);

// EDMD container, or a single matrix in JSON form (.json).
io::EdmDataset load_dataset(const std::filesystem::path& path);
// JSON masks from a .json input travel with their matrix.
std::vector<Mask> load_masks(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const io::EdmDataset& data);

// Mask k for matrix k, or one mask broadcast to every matrix.
const Mask& mask_for(const std::vector<Mask>& masks, std::size_t k);

void add_sampler_options(CLI::App& sub, SamplerConfig& cfg);

// Mu values from an explicit list or an evenly spaced range.
std::vector<double> mu_values(const std::vector<double>& list, double start, double stop, std::size_t count);

CLI::Validator open_unit_interval();
CLI::Validator closed_unit_interval();

void add_generate(CLI::App& app, Globals& g);
void add_mask(CLI::App& app, Globals& g);
void add_rigidity(CLI::App& app, Globals& g);
void add_complete(CLI::App& app, Globals& g);
void add_sample(CLI::App& app, Globals& g);
void add_model(CLI::App& app, Globals& g);
void add_metrics(CLI::App& app, Globals& g);
void add_fish(CLI::App& app, Globals& g);
void add_sweep(CLI::App& app, Globals& g);

}  // namespace fbmedm::cli
