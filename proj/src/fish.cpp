#include "fbmedm/fish.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "fbmedm/complete.hpp"
#include "fbmedm/parallel.hpp"
#include "fbmedm/rng.hpp"

namespace fbmedm {

std::size_t FishCell::absent() const {
    return static_cast<std::size_t>(std::count_if(probes.begin(), probes.end(), [](const FishProbe& p) { return !p.present; }));
}

std::vector<std::size_t> FishCell::absent_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < probes.size(); ++k)
        if (!probes[k].present) out.push_back(k);
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        out.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

bool is_nan_token(std::string_view s) {
    return s.size() == 3 && std::tolower(s[0]) == 'n' && std::tolower(s[1]) == 'a' && std::tolower(s[2]) == 'n';
}

std::optional<double> to_double(std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<long> to_long(std::string_view s) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        // integral values written as floats ("373.0")
        auto d = to_double(s);
        if (d && std::floor(*d) == *d && std::abs(*d) < 1e15) return static_cast<long>(*d);
        return std::nullopt;
    }
    return v;
}

}  // namespace

std::vector<FishCell> parse_fish_table(std::istream& in) {
    struct Row {
        std::size_t line;
        long n;
        FishProbe probe;
    };
    std::vector<long> order;
    std::map<long, std::vector<Row>> by_cell;
    std::string line;
    std::size_t line_no = 0;
    char delim = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = trim(line);
        if (text.empty()) continue;
        if (delim == 0) delim = text.find('\t') != std::string_view::npos ? '\t' : ',';
        const auto fields = split(text, delim);
        const bool header = first && !to_double(fields[0]);
        first = false;
        if (header) continue;
        if (fields.size() != 6)
            throw FishParseError(line_no, "expected 6 fields, found " + std::to_string(fields.size()));
        const auto chrom = to_long(fields[1]);
        const auto n = to_long(fields[2]);
        if (!chrom || !n || *n < 1) throw FishParseError(line_no, "chromosome index and probe index must be integers (n >= 1)");
        Row row{line_no, *n, {}};
        row.probe.index = static_cast<std::size_t>(*n);
        int nan_count = 0;
        for (int c = 0; c < 3; ++c) {
            const std::string_view f = fields[std::size_t(3 + c)];
            if (is_nan_token(f)) {
                ++nan_count;
                continue;
            }
            const auto v = to_double(f);
            if (!v || !std::isfinite(*v)) throw FishParseError(line_no, "bad coordinate '" + std::string(f) + "'");
            row.probe.position[std::size_t(c)] = *v;
        }
        if (nan_count != 0 && nan_count != 3) throw FishParseError(line_no, "partially missing coordinates");
        row.probe.present = nan_count == 0;
        if (!by_cell.count(*chrom)) order.push_back(*chrom);
        by_cell[*chrom].push_back(row);
    }

    std::vector<FishCell> cells;
    for (long chrom : order) {
        auto& rows = by_cell[chrom];
        std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.n < b.n; });
        FishCell cell;
        cell.chromosome_index = chrom;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            if (rows[k].n != long(k + 1))
                throw FishParseError(rows[k].line, "cell " + std::to_string(chrom) + ": probe index " +
                                                       std::to_string(rows[k].n) + " breaks the sequence 1.." +
                                                       std::to_string(rows.size()));
            cell.probes.push_back(rows[k].probe);
        }
        cells.push_back(std::move(cell));
    }
    return cells;
}

std::vector<FishCell> parse_fish_table(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_fish_table(in);
}

MaskedMatrix cell_to_masked_edm(const FishCell& cell) {
    const std::size_t n = cell.size();
    if (n - cell.absent() < 2 || n < 2) throw std::invalid_argument("cell_to_masked_edm: need at least two present probes");
    MaskedMatrix mm{DistanceMatrix(n), Mask(n, false)};
    for (std::size_t i = 0; i < n; ++i) {
        if (!cell.probes[i].present) continue;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!cell.probes[j].present) continue;
            double d2 = 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
                const double d = cell.probes[i].position[c] - cell.probes[j].position[c];
                d2 += d * d;
            }
            mm.matrix(i, j) = d2;
            mm.matrix(j, i) = d2;
            mm.mask.set(i, j, true);
        }
    }
    return mm;
}

std::vector<FishCell> select_cells(std::span<const FishCell> cells, std::size_t missing_rows) {
    std::vector<FishCell> out;
    for (const FishCell& c : cells)
        if (c.absent() == missing_rows) out.push_back(c);
    return out;
}

DropResult drop_rows(const MaskedMatrix& mm, std::span<const std::size_t> rows) {
    const std::size_t n = mm.size();
    DropResult r{mm, Mask(n, false), {rows.begin(), rows.end()}};
    std::sort(r.dropped.begin(), r.dropped.end());
    if (std::adjacent_find(r.dropped.begin(), r.dropped.end()) != r.dropped.end())
        throw std::invalid_argument("drop_rows: duplicate row");
    for (std::size_t i : r.dropped) {
        if (i >= n) throw std::invalid_argument("drop_rows: row " + std::to_string(i) + " out of range");
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (mm.known(i, j)) r.eval.set(i, j, true);
            r.masked.mask.set(i, j, false);
            r.masked.matrix(i, j) = 0.0;
            r.masked.matrix(j, i) = 0.0;
        }
    }
    return r;
}

DropResult drop_additional(const MaskedMatrix& mm, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < mm.size(); ++i)
        if (mm.mask.degree(i) > 0) present.push_back(i);
    if (present.size() < 2 || k > present.size() - 2)
        throw std::invalid_argument("drop_additional: cannot drop " + std::to_string(k) + " of " +
                                    std::to_string(present.size()) + " present rows (at least 2 must remain)");
    RandomStream rng(seed, stream_id({0xD809ull, mm.size()}));
    std::shuffle(present.begin(), present.end(), rng);
    present.resize(k);
    return drop_rows(mm, present);
}

std::string_view fish_method_name(FishMethod m) {
    switch (m) {
        case FishMethod::nn: return "nn";
        case FishMethod::ensemble_mean: return "ensemble-mean";
        case FishMethod::ddpm: return "ddpm";
        case FishMethod::repaint: return "repaint";
        case FishMethod::ddrm: return "ddrm";
        case FishMethod::ddnm: return "ddnm";
    }
    return "?";
}

FishMethod parse_fish_method(std::string_view name) {
    for (auto m : {FishMethod::nn, FishMethod::ensemble_mean, FishMethod::ddpm, FishMethod::repaint, FishMethod::ddrm,
                   FishMethod::ddnm})
        if (fish_method_name(m) == name) return m;
    if (name == "mean") return FishMethod::ensemble_mean;
    throw std::invalid_argument("unknown FISH imputation method '" + std::string(name) + "'");
}

namespace {

InpaintMethod to_inpaint(FishMethod m) {
    switch (m) {
        case FishMethod::ddpm: return InpaintMethod::ddpm;
        case FishMethod::repaint: return InpaintMethod::repaint;
        case FishMethod::ddrm: return InpaintMethod::ddrm;
        case FishMethod::ddnm: return InpaintMethod::ddnm;
        default: break;
    }
    throw std::invalid_argument("not a diffusion method");
}

// Diffusion imputation on the model's n: centre crop (cell larger) or pad
// with fully unknown rows (cell smaller). Entries outside the crop come from
// nearest-neighbour fill.
CompletionResult diffusion_impute(const MaskedMatrix& pm, const FishModel& model, InpaintMethod method,
                                  const SamplerConfig& scfg, double step_scale, std::uint64_t seed) {
    const std::size_t n = pm.size();
    const std::size_t m = model.predictor->image_size();
    const std::size_t offset = n > m ? (n - m) / 2 : 0;
    const std::size_t span = std::min(n, m);

    MaskedMatrix sub{DistanceMatrix(m), Mask(m, false)};
    for (std::size_t i = 0; i < span; ++i)
        for (std::size_t j = i + 1; j < span; ++j)
            if (pm.known(offset + i, offset + j)) {
                sub.matrix(i, j) = sub.matrix(j, i) = pm.matrix(offset + i, offset + j);
                sub.mask.set(i, j, true);
            }
    NormalizationSpec norm = model.normalization;
    norm.step_scale = step_scale;
    const DistanceMatrix filled = inpaint_edm(method, *model.predictor, *model.schedule, sub, norm, scfg, seed);

    CompletionResult r = nn_complete(pm);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (pm.known(i, j)) continue;
            const bool inside = i >= offset && j >= offset && i < offset + span && j < offset + span;
            if (inside) {
                r.completed(i, j) = r.completed(j, i) = filled(i - offset, j - offset);
            } else {
                ++r.fallback_entries;
            }
        }
    return r;
}

}  // namespace

ImputeSummary impute_cells(std::span<const FishCell> cells, const ImputeConfig& cfg, const FishModel* model) {
    const bool diffusion = cfg.method != FishMethod::nn && cfg.method != FishMethod::ensemble_mean;
    if (diffusion && (!model || !model->predictor || !model->schedule))
        throw std::invalid_argument("impute_cells: method '" + std::string(fish_method_name(cfg.method)) +
                                    "' needs a loaded predictor");
    ImputeSummary summary;
    summary.method = cfg.method;
    if (cells.empty()) return summary;

    std::vector<MaskedMatrix> original(cells.size());
    std::vector<DropResult> dropped(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        original[c] = cell_to_masked_edm(cells[c]);
        dropped[c] = cfg.drop_indices ? drop_rows(original[c], *cfg.drop_indices)
                                      : drop_additional(original[c], cfg.drop, cfg.seed ^ static_cast<std::uint64_t>(c));
    }

    summary.step_scale = cfg.step_scale;
    if (summary.step_scale <= 0.0) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const MaskedMatrix& mm : original)
            for (std::size_t i = 0; i + 1 < mm.size(); ++i)
                if (mm.known(i, i + 1)) {
                    sum += mm.matrix(i, i + 1);
                    ++count;
                }
        if (count == 0) throw std::invalid_argument("impute_cells: no neighbouring probe pairs to set the length scale");
        summary.step_scale = std::sqrt(sum / double(count));
    }
    if (diffusion) summary.model_n = model->predictor->image_size();

    std::optional<EnsembleMean> ensemble;
    if (cfg.method == FishMethod::ensemble_mean) {
        std::vector<MaskedMatrix> masked;
        masked.reserve(dropped.size());
        for (const DropResult& d : dropped) masked.push_back(d.masked);
        ensemble.emplace(masked);
    }

    summary.cells.resize(cells.size());
    parallel_for(cells.size(), cfg.jobs, [&](std::size_t c) {
        const MaskedMatrix& pm = dropped[c].masked;
        CompletionResult res;
        switch (cfg.method) {
            case FishMethod::nn: res = nn_complete(pm); break;
            case FishMethod::ensemble_mean: res = ensemble->complete(pm); break;
            default:
                res = diffusion_impute(pm, *model, to_inpaint(cfg.method), cfg.sampler, summary.step_scale,
                                       cfg.seed ^ static_cast<std::uint64_t>(c));
        }
        CellReport& rep = summary.cells[c];
        rep.chromosome_index = cells[c].chromosome_index;
        rep.completed = std::move(res.completed);
        rep.eval = dropped[c].eval;
        rep.dropped = dropped[c].dropped;
        rep.fallback_entries = res.fallback_entries;
        rep.rmse_nm = rep.eval.missing_pairs() == rep.eval.size() * (rep.eval.size() - 1) / 2
                          ? 0.0
                          : rmse_selected(rep.completed, original[c].matrix, rep.eval);
        rep.rank = rank_fraction(rep.completed, std::min<std::size_t>(5, rep.completed.size()));
    });

    std::vector<double> rmse, rank;
    for (const CellReport& r : summary.cells) {
        if (r.eval.missing_pairs() < r.eval.size() * (r.eval.size() - 1) / 2) rmse.push_back(r.rmse_nm);
        rank.push_back(r.rank);
    }
    summary.rmse = mean_error(rmse);
    summary.rank = mean_error(rank);
    return summary;
}

ScalingResult fish_scaling(std::span<const FishCell> cells) {
    if (cells.empty()) throw std::invalid_argument("fish_scaling: no cells");
    const std::size_t n = cells.front().size();
    std::vector<double> sum(n, 0.0);
    std::vector<std::size_t> count(n, 0);
    for (const FishCell& cell : cells) {
        if (cell.size() != n) throw std::invalid_argument("fish_scaling: cells differ in probe count");
        const MaskedMatrix mm = cell_to_masked_edm(cell);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (mm.known(i, j)) {
                    sum[j - i] += std::sqrt(mm.matrix(i, j));
                    ++count[j - i];
                }
    }
    ScalingResult r;
    std::vector<std::pair<double, double>> window;
    for (std::size_t s = 1; s < n; ++s) {
        if (count[s] == 0) continue;
        r.curve.emplace_back(double(s), sum[s] / double(count[s]));
        if (s >= 2 && s <= std::max<std::size_t>(3, n / 4)) window.push_back(r.curve.back());
    }
    r.hurst = window.size() >= 2 ? log_log_slope(window) : std::numeric_limits<double>::quiet_NaN();
    return r;
}

}  // namespace fbmedm
