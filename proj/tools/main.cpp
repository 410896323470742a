#include <algorithm>
#include <fstream>
#include <iostream>

#include "cli_common.hpp"
#include "fbmedm/simd.hpp"

namespace {

// A sidecar names its command as a section; run that command when none is
// given on the command line.
void add_subcommand_from_config(const CLI::App& app, std::vector<std::string>& args) {
    std::string config;
    for (std::size_t k = 0; k < args.size(); ++k) {
        if (app.get_subcommand_no_throw(args[k])) return;
        if (args[k] == "--config" && k + 1 < args.size()) config = args[k + 1];
        if (args[k].rfind("--config=", 0) == 0) config = args[k].substr(9);
    }
    if (config.empty()) return;
    std::ifstream in(config);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (!j.is_object()) return;
    for (const auto& [key, value] : j.items())
        if (value.is_object() && app.get_subcommand_no_throw(key)) {
            args.push_back(key);
            return;
        }
}

}  // namespace

int main(int argc, char** argv) {
    using namespace fbmedm::cli;

    CLI::App app{"fBm distance-matrix workbench: generate, mask, complete, sample and score EDM ensembles"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config; command-line flags override its values");
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    Globals g;
    app.add_option("--seed", g.seed, "Run seed");
    app.add_option("--jobs", g.jobs, "Worker threads (0 = all cores)");
    app.add_flag_callback(
        "--version",
        [] {
            std::cout << "fbmedm kernels=" << fbmedm::simd::isa_name(fbmedm::simd::active_isa()) << "\n";
            throw CLI::Success();
        },
        "Print build information");

    add_generate(app, g);
    add_mask(app, g);
    add_rigidity(app, g);
    add_complete(app, g);
    add_sample(app, g);
    add_model(app, g);
    add_metrics(app, g);
    add_fish(app, g);
    add_sweep(app, g);

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        add_subcommand_from_config(app, args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const PartialFailure& e) {
        print_summary(e.summary());
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
