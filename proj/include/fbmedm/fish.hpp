#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fbmedm/edm.hpp"
#include "fbmedm/metrics.hpp"
#include "fbmedm/predictor.hpp"
#include "fbmedm/samplers.hpp"
#include "fbmedm/schedule.hpp"

namespace fbmedm {

struct FishProbe {
    std::size_t index = 0;  // 1-based probe number n
    std::array<double, 3> position{};  // nm, in file column order
    bool present = false;
};

struct FishCell {
    long chromosome_index = 0;
    std::vector<FishProbe> probes;  // ordered by index, contiguous from 1

    std::size_t size() const { return probes.size(); }
    std::size_t absent() const;
    std::vector<std::size_t> absent_indices() const;  // 0-based slots
};

class FishParseError : public std::runtime_error {
public:
    FishParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Rows "segment, chromosome, n, c1, c2, c3" separated by commas or tabs
// (detected from the first data row); a non-numeric first row is a header;
// "nan" coordinates mark absent probes. Cells keep their order of first appearance.
std::vector<FishCell> parse_fish_table(std::istream& in);
std::vector<FishCell> parse_fish_table(std::string_view text);

// Squared distances in nm^2 over all probe slots; rows of absent probes are unknown.
MaskedMatrix cell_to_masked_edm(const FishCell& cell);

std::vector<FishCell> select_cells(std::span<const FishCell> cells, std::size_t missing_rows);

struct DropResult {
    MaskedMatrix masked;
    Mask eval;  // entries hidden by the drop that were known before
    std::vector<std::size_t> dropped;  // 0-based, ascending
};

// Hide k further rows/columns chosen uniformly among the present ones.
DropResult drop_additional(const MaskedMatrix& mm, std::size_t k, std::uint64_t seed);
// Hide the given (0-based) rows/columns.
DropResult drop_rows(const MaskedMatrix& mm, std::span<const std::size_t> rows);

enum class FishMethod { nn, ensemble_mean, ddpm, repaint, ddrm, ddnm };
std::string_view fish_method_name(FishMethod m);
FishMethod parse_fish_method(std::string_view name);

struct FishModel {
    const EpsilonPredictor* predictor = nullptr;
    const NoiseSchedule* schedule = nullptr;
    NormalizationSpec normalization;
};

struct ImputeConfig {
    FishMethod method = FishMethod::nn;
    std::size_t drop = 10;
    std::optional<std::vector<std::size_t>> drop_indices;  // 0-based; overrides the random draw
    std::uint64_t seed = 0;
    // nm per model length unit; <= 0 estimates it as the RMS distance of
    // neighbouring probes over all cells.
    double step_scale = 0.0;
    SamplerConfig sampler;
    unsigned jobs = 1;
};

struct CellReport {
    long chromosome_index = 0;
    DistanceMatrix completed;  // nm^2
    Mask eval;
    std::vector<std::size_t> dropped;
    double rmse_nm = 0.0;
    double rank = 0.0;  // rank_fraction(r = 5)
    std::size_t fallback_entries = 0;  // filled by nearest neighbour (ensemble gaps, crop border)
};

struct ImputeSummary {
    FishMethod method = FishMethod::nn;
    MeanError rmse;
    MeanError rank;
    double step_scale = 0.0;
    std::size_t model_n = 0;
    std::vector<CellReport> cells;
};

ImputeSummary impute_cells(std::span<const FishCell> cells, const ImputeConfig& cfg,
                           const FishModel* model = nullptr);

// Mean raw distance of known pairs along each diagonal s over all cells, with
// the log-log slope over [2, n/4].
ScalingResult fish_scaling(std::span<const FishCell> cells);

}  // namespace fbmedm
