#include "fbmedm/unet.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <unordered_map>

#include <json.hpp>

namespace fbmedm {

namespace {

using Tensor = UNetPredictor::Tensor;
using FMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + ")";
}

[[noreturn]] void shape_error(const UNetPredictor::Op& op, const std::string& what) {
    throw io::FormatError("EPSW: op '" + op.kind + "' -> '" + op.out + "': " + what);
}

const Tensor& get(const std::unordered_map<std::string, Tensor>& buf, const UNetPredictor::Op& op, std::size_t k) {
    auto it = buf.find(op.inputs.at(k));
    if (it == buf.end()) shape_error(op, "unknown input buffer '" + op.inputs[k] + "'");
    return it->second;
}

void require_rank(const UNetPredictor::Op& op, const Tensor& t, std::size_t rank) {
    if (t.shape.size() != rank) shape_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape));
}

Tensor conv2d(const UNetPredictor::Op& op, const Tensor& x, const Tensor& w, const Tensor* bias) {
    require_rank(op, x, 4);
    if (w.shape.size() != 4 || w.shape[1] != x.shape[1] || w.shape[2] != w.shape[3])
        shape_error(op, "weight " + shape_str(w.shape) + " does not fit input " + shape_str(x.shape));
    const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t O = w.shape[0], K = w.shape[2];
    const std::size_t s = static_cast<std::size_t>(op.stride), p = static_cast<std::size_t>(op.padding);
    if (H + 2 * p < K || W + 2 * p < K) shape_error(op, "kernel larger than padded input");
    const std::size_t Ho = (H + 2 * p - K) / s + 1, Wo = (W + 2 * p - K) / s + 1;
    if (bias && numel(bias->shape) != O) shape_error(op, "bias size mismatch");

    Tensor out{{B, O, Ho, Wo}, std::vector<float>(B * O * Ho * Wo)};
    Eigen::Map<const FMat> wm(w.data.data(), Eigen::Index(O), Eigen::Index(C * K * K));
    FMat col(Eigen::Index(C * K * K), Eigen::Index(Ho * Wo));
    for (std::size_t b = 0; b < B; ++b) {
        const float* xb = x.data.data() + b * C * H * W;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < K; ++ky)
                for (std::size_t kx = 0; kx < K; ++kx) {
                    const Eigen::Index row = Eigen::Index((c * K + ky) * K + kx);
                    for (std::size_t oy = 0; oy < Ho; ++oy) {
                        const long iy = long(oy * s + ky) - long(p);
                        for (std::size_t ox = 0; ox < Wo; ++ox) {
                            const long ix = long(ox * s + kx) - long(p);
                            const bool inside = iy >= 0 && iy < long(H) && ix >= 0 && ix < long(W);
                            col(row, Eigen::Index(oy * Wo + ox)) = inside ? xb[(c * H + iy) * W + ix] : 0.0f;
                        }
                    }
                }
        Eigen::Map<FMat> ob(out.data.data() + b * O * Ho * Wo, Eigen::Index(O), Eigen::Index(Ho * Wo));
        ob.noalias() = wm * col;
        if (bias)
            for (std::size_t o = 0; o < O; ++o) ob.row(Eigen::Index(o)).array() += bias->data[o];
    }
    return out;
}

Tensor group_norm(const UNetPredictor::Op& op, const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_rank(op, x, 4);
    const std::size_t B = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
    const std::size_t G = static_cast<std::size_t>(op.groups);
    if (G == 0 || C % G != 0) shape_error(op, "channels not divisible by groups");
    if (numel(w.shape) != C || numel(bias.shape) != C) shape_error(op, "affine parameters do not match channels");
    Tensor out{x.shape, std::vector<float>(x.data.size())};
    const std::size_t per = C / G;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t g = 0; g < G; ++g) {
            const std::size_t start = (b * C + g * per) * HW, len = per * HW;
            double mean = 0.0, sq = 0.0;
            for (std::size_t k = 0; k < len; ++k) mean += x.data[start + k];
            mean /= double(len);
            for (std::size_t k = 0; k < len; ++k) {
                const double d = x.data[start + k] - mean;
                sq += d * d;
            }
            const double inv = 1.0 / std::sqrt(sq / double(len) + op.eps);
            for (std::size_t c = 0; c < per; ++c) {
                const std::size_t ch = g * per + c;
                for (std::size_t k = 0; k < HW; ++k) {
                    const std::size_t idx = start + c * HW + k;
                    out.data[idx] = float((x.data[idx] - mean) * inv * w.data[ch] + bias.data[ch]);
                }
            }
        }
    return out;
}

Tensor linear(const UNetPredictor::Op& op, const Tensor& x, const Tensor& w, const Tensor* bias) {
    require_rank(op, x, 2);
    if (w.shape.size() != 2 || w.shape[1] != x.shape[1]) shape_error(op, "weight " + shape_str(w.shape) + " does not fit input");
    const std::size_t B = x.shape[0], F = x.shape[1], O = w.shape[0];
    if (bias && numel(bias->shape) != O) shape_error(op, "bias size mismatch");
    Tensor out{{B, O}, std::vector<float>(B * O)};
    Eigen::Map<const FMat> xm(x.data.data(), Eigen::Index(B), Eigen::Index(F));
    Eigen::Map<const FMat> wm(w.data.data(), Eigen::Index(O), Eigen::Index(F));
    Eigen::Map<FMat> om(out.data.data(), Eigen::Index(B), Eigen::Index(O));
    // one row at a time so a sample's result does not depend on the batch
    for (std::size_t b = 0; b < B; ++b) om.row(Eigen::Index(b)).noalias() = xm.row(Eigen::Index(b)) * wm.transpose();
    if (bias)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < O; ++o) om(Eigen::Index(b), Eigen::Index(o)) += bias->data[o];
    return out;
}

Tensor timestep_embedding(const UNetPredictor::Op& op, double t, std::size_t batch) {
    const std::size_t dim = static_cast<std::size_t>(op.dim);
    if (dim < 2 || dim % 2) shape_error(op, "embedding dimension must be even");
    const std::size_t half = dim / 2;
    Tensor out{{batch, dim}, std::vector<float>(batch * dim)};
    std::vector<float> row(dim);
    for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(op.max_period) * double(k) / (double(half) - op.freq_shift));
        // the frequency is rounded to f32 first, as the network computed it
        const float arg = static_cast<float>(t) * static_cast<float>(freq);
        const float sn = std::sin(arg), cs = std::cos(arg);
        row[k] = op.flip_sin_to_cos ? cs : sn;
        row[half + k] = op.flip_sin_to_cos ? sn : cs;
    }
    for (std::size_t b = 0; b < batch; ++b) std::copy(row.begin(), row.end(), out.data.begin() + long(b * dim));
    return out;
}

}  // namespace

UNetPredictor::UNetPredictor(std::size_t image_size, std::vector<Op> ops, std::vector<Tensor> params,
                             std::vector<std::string> param_names, std::string output, long timestep_offset)
    : n_(image_size), ops_(std::move(ops)), params_(std::move(params)), param_names_(std::move(param_names)),
      output_(std::move(output)), timestep_offset_(timestep_offset) {}

UNetPredictor::~UNetPredictor() = default;

void UNetPredictor::predict(std::span<const double> x, std::size_t batch, std::size_t t, std::span<double> out) const {
    if (x.size() != batch * n_ * n_ || out.size() != x.size())
        throw std::invalid_argument("UNetPredictor::predict: shape mismatch");
    std::unordered_map<std::string, Tensor> buf;
    Tensor input{{batch, 1, n_, n_}, std::vector<float>(x.size())};
    for (std::size_t k = 0; k < x.size(); ++k) input.data[k] = static_cast<float>(x[k]);
    buf["x"] = std::move(input);
    const double tin = double(long(t) + timestep_offset_);

    for (const Op& op : ops_) {
        const Tensor* w = op.weight >= 0 ? &params_[std::size_t(op.weight)] : nullptr;
        const Tensor* b = op.bias >= 0 ? &params_[std::size_t(op.bias)] : nullptr;
        Tensor r;
        if (op.kind == "conv2d") {
            r = conv2d(op, get(buf, op, 0), *w, b);
        } else if (op.kind == "group_norm") {
            r = group_norm(op, get(buf, op, 0), *w, *b);
        } else if (op.kind == "silu") {
            r = get(buf, op, 0);
            for (float& v : r.data) v = v / (1.0f + std::exp(-v));
        } else if (op.kind == "timestep_embedding") {
            r = timestep_embedding(op, tin, batch);
        } else if (op.kind == "linear") {
            r = linear(op, get(buf, op, 0), *w, b);
        } else if (op.kind == "add_channel") {
            const Tensor& a = get(buf, op, 0);
            const Tensor& v = get(buf, op, 1);
            require_rank(op, a, 4);
            if (v.shape.size() != 2 || v.shape[0] != a.shape[0] || v.shape[1] != a.shape[1])
                shape_error(op, "vector " + shape_str(v.shape) + " does not match " + shape_str(a.shape));
            r = a;
            const std::size_t HW = a.shape[2] * a.shape[3];
            for (std::size_t bc = 0; bc < a.shape[0] * a.shape[1]; ++bc)
                for (std::size_t k = 0; k < HW; ++k) r.data[bc * HW + k] += v.data[bc];
        } else if (op.kind == "add") {
            const Tensor& a = get(buf, op, 0);
            const Tensor& c = get(buf, op, 1);
            if (a.shape != c.shape) shape_error(op, shape_str(a.shape) + " vs " + shape_str(c.shape));
            r = a;
            for (std::size_t k = 0; k < r.data.size(); ++k) r.data[k] += c.data[k];
        } else if (op.kind == "concat") {
            std::size_t C = 0;
            const Tensor& first = get(buf, op, 0);
            require_rank(op, first, 4);
            for (std::size_t k = 0; k < op.inputs.size(); ++k) {
                const Tensor& a = get(buf, op, k);
                require_rank(op, a, 4);
                if (a.shape[0] != first.shape[0] || a.shape[2] != first.shape[2] || a.shape[3] != first.shape[3])
                    shape_error(op, "inputs differ in batch or spatial size");
                C += a.shape[1];
            }
            const std::size_t B = first.shape[0], HW = first.shape[2] * first.shape[3];
            r = Tensor{{B, C, first.shape[2], first.shape[3]}, std::vector<float>(B * C * HW)};
            for (std::size_t bi = 0; bi < B; ++bi) {
                float* dst = r.data.data() + bi * C * HW;
                for (std::size_t k = 0; k < op.inputs.size(); ++k) {
                    const Tensor& a = get(buf, op, k);
                    const std::size_t len = a.shape[1] * HW;
                    std::copy_n(a.data.data() + bi * len, len, dst);
                    dst += len;
                }
            }
        } else if (op.kind == "avg_pool2") {
            const Tensor& a = get(buf, op, 0);
            require_rank(op, a, 4);
            const std::size_t H = a.shape[2], W = a.shape[3];
            if (H % 2 || W % 2) shape_error(op, "odd spatial size " + shape_str(a.shape));
            const std::size_t BC = a.shape[0] * a.shape[1];
            r = Tensor{{a.shape[0], a.shape[1], H / 2, W / 2}, std::vector<float>(BC * H * W / 4)};
            for (std::size_t bc = 0; bc < BC; ++bc)
                for (std::size_t y = 0; y < H / 2; ++y)
                    for (std::size_t xx = 0; xx < W / 2; ++xx) {
                        const float* s = a.data.data() + bc * H * W;
                        r.data[(bc * H / 2 + y) * W / 2 + xx] =
                            0.25f * (s[2 * y * W + 2 * xx] + s[2 * y * W + 2 * xx + 1] + s[(2 * y + 1) * W + 2 * xx] +
                                     s[(2 * y + 1) * W + 2 * xx + 1]);
                    }
        } else if (op.kind == "upsample_nearest2") {
            const Tensor& a = get(buf, op, 0);
            require_rank(op, a, 4);
            const std::size_t H = a.shape[2], W = a.shape[3], BC = a.shape[0] * a.shape[1];
            r = Tensor{{a.shape[0], a.shape[1], 2 * H, 2 * W}, std::vector<float>(BC * 4 * H * W)};
            for (std::size_t bc = 0; bc < BC; ++bc)
                for (std::size_t y = 0; y < 2 * H; ++y)
                    for (std::size_t xx = 0; xx < 2 * W; ++xx)
                        r.data[(bc * 2 * H + y) * 2 * W + xx] = a.data[(bc * H + y / 2) * W + xx / 2];
        } else {
            shape_error(op, "unsupported op");
        }
        buf[op.out] = std::move(r);
    }
    auto it = buf.find(output_);
    if (it == buf.end()) throw io::FormatError("EPSW: output buffer '" + output_ + "' was never written");
    const Tensor& o = it->second;
    if (o.data.size() != out.size())
        throw io::FormatError("EPSW: output shape " + shape_str(o.shape) + " does not match the input image");
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = o.data[k];
}

double LoadedModel::check_error() const {
    double worst = 0.0;
    const std::size_t d = predictor->image_size() * predictor->image_size();
    std::vector<double> out(d);
    for (const CheckVector& cv : check_vectors) {
        predictor->predict(cv.input, 1, cv.t, out);
        for (std::size_t k = 0; k < d; ++k) worst = std::max(worst, std::abs(out[k] - cv.output[k]));
    }
    return worst;
}

LoadedModel load_predictor_bytes(std::string_view bytes, std::optional<std::size_t> expected_n) {
    io::ByteReader r(bytes, "EPSW");
    r.expect_magic("EPSW");
    const std::uint32_t version = r.u32();
    if (version != io::kFormatVersion) throw io::FormatError("EPSW: unsupported version " + std::to_string(version));
    const std::uint32_t manifest_len = r.u32();
    const std::string_view manifest_text = r.take(manifest_len);
    const std::size_t data_start = r.position();
    const std::string_view data = bytes.substr(data_start);

    nlohmann::json m;
    try {
        m = nlohmann::json::parse(manifest_text);
    } catch (const nlohmann::json::exception& e) {
        throw io::FormatError(std::string("EPSW: manifest is not valid JSON: ") + e.what());
    }

    LoadedModel out;
    try {
        const auto& arch = m.at("architecture");
        const std::size_t n = arch.at("image_size").get<std::size_t>();
        if (expected_n && *expected_n != n)
            throw io::FormatError("EPSW: model image size " + std::to_string(n) + " does not match requested " +
                                  std::to_string(*expected_n));

        std::vector<Tensor> params;
        std::vector<std::string> names;
        std::unordered_map<std::string, int> index;
        for (const auto& t : m.at("tensors")) {
            const std::string name = t.at("name").get<std::string>();
            if (t.value("dtype", "f32") != "f32") throw io::FormatError("EPSW: tensor '" + name + "' is not f32");
            Tensor tensor;
            tensor.shape = t.at("shape").get<std::vector<std::size_t>>();
            const std::size_t offset = t.at("offset").get<std::size_t>();
            const std::size_t count = numel(tensor.shape);
            if (offset > data.size() || count * 4 > data.size() - offset)
                throw io::FormatError("EPSW: tensor '" + name + "' extends past the end of the file");
            io::ByteReader tr(data.substr(offset, count * 4), "EPSW tensor");
            tensor.data.resize(count);
            for (float& v : tensor.data) v = tr.f32();
            index[name] = static_cast<int>(params.size());
            params.push_back(std::move(tensor));
            names.push_back(name);
        }
        auto param = [&](const nlohmann::json& op, const char* key, bool required) {
            if (!op.contains(key)) {
                if (required) throw io::FormatError("EPSW: op '" + op.value("op", "?") + "' needs '" + key + "'");
                return -1;
            }
            const std::string name = op.at(key).get<std::string>();
            auto it = index.find(name);
            if (it == index.end()) throw io::FormatError("EPSW: op refers to unknown tensor '" + name + "'");
            return it->second;
        };

        std::vector<UNetPredictor::Op> ops;
        for (const auto& j : arch.at("ops")) {
            UNetPredictor::Op op;
            op.kind = j.at("op").get<std::string>();
            op.out = j.at("out").get<std::string>();
            if (j.contains("in")) op.inputs.push_back(j.at("in").get<std::string>());
            if (j.contains("a")) op.inputs.push_back(j.at("a").get<std::string>());
            if (j.contains("b")) op.inputs.push_back(j.at("b").get<std::string>());
            if (j.contains("vec")) op.inputs.push_back(j.at("vec").get<std::string>());
            if (j.contains("inputs"))
                for (const auto& s : j.at("inputs")) op.inputs.push_back(s.get<std::string>());
            const bool weighted = op.kind == "conv2d" || op.kind == "linear" || op.kind == "group_norm";
            op.weight = param(j, "weight", weighted);
            op.bias = param(j, "bias", op.kind == "group_norm");
            op.groups = j.value("groups", 1);
            op.stride = j.value("stride", 1);
            op.padding = j.value("padding", 0);
            op.dim = j.value("dim", 0);
            op.eps = j.value("eps", 1e-5);
            op.max_period = j.value("max_period", 10000.0);
            op.flip_sin_to_cos = j.value("flip_sin_to_cos", true);
            op.freq_shift = j.value("freq_shift", 0.0);
            if (op.stride < 1 || op.padding < 0) throw io::FormatError("EPSW: invalid stride/padding in op " + op.kind);
            ops.push_back(std::move(op));
        }
        out.predictor = std::make_shared<UNetPredictor>(n, std::move(ops), std::move(params), std::move(names),
                                                        arch.value("output", std::string("output")),
                                                        arch.value("timestep_offset", -1L));

        const auto& sched = m.at("schedule");
        auto betas = sched.at("betas").get<std::vector<double>>();
        if (betas.size() != sched.at("T").get<std::size_t>())
            throw io::FormatError("EPSW: schedule T does not match the number of betas");
        out.schedule = schedule_from_betas(std::move(betas));

        const auto& norm = m.at("normalization");
        out.normalization.mu = norm.at("mu").get<double>();
        out.normalization.sigma = norm.at("sigma").get<double>();
        out.normalization.hurst = norm.value("hurst", 0.5);
        out.normalization.n = norm.value("n", n);
        out.normalization.step_scale = norm.value("step_scale", 1.0);
        if (!(out.normalization.sigma > 0.0)) throw io::FormatError("EPSW: normalization sigma must be positive");

        for (const auto& cv : m.value("check_vectors", nlohmann::json::array())) {
            CheckVector c;
            c.input = cv.at("input").get<std::vector<double>>();
            c.t = cv.at("t").get<std::size_t>();
            c.output = cv.at("output").get<std::vector<double>>();
            if (c.input.size() != n * n || c.output.size() != n * n)
                throw io::FormatError("EPSW: check vector does not hold n*n values");
            if (c.t < 1 || c.t > out.schedule.size()) throw io::FormatError("EPSW: check vector step outside schedule");
            out.check_vectors.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw io::FormatError(std::string("EPSW: malformed manifest: ") + e.what());
    }

    // Dry run so shape errors surface at load time.
    std::vector<double> probe(out.predictor->image_size() * out.predictor->image_size(), 0.0), sink(probe.size());
    out.predictor->predict(probe, 1, 1, sink);
    return out;
}

LoadedModel load_predictor(const std::filesystem::path& path, std::optional<std::size_t> expected_n) {
    return load_predictor_bytes(io::read_file(path), expected_n);
}

}  // namespace fbmedm
