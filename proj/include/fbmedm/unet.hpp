#pragma once

// Inference for trained noise predictors stored in the EPSW container:
//
//   "EPSW" u32 version, u32 manifest_bytes, manifest (UTF-8 JSON), tensor data
//
// The manifest holds
//   architecture  {"image_size", "output", "timestep_offset" (default -1),
//                  "ops": [...]}  evaluated in order over named buffers;
//                  "x" is the (B,1,n,n) input, the network sees t + offset
//   tensors       [{"name", "shape", "dtype": "f32", "offset"}], offsets in
//                 bytes from the start of the tensor data
//   schedule      {"T", "betas"}
//   normalization {"mu", "sigma", "hurst", "n", "step_scale" (default 1)}
//   check_vectors [{"input": [n*n], "t": 1-based step, "output": [n*n]}]
//
// Ops: conv2d {in,out,weight,bias?,stride,padding}, group_norm {in,out,groups,
// weight,bias,eps}, silu {in,out}, timestep_embedding {out,dim,max_period,
// flip_sin_to_cos,freq_shift}, linear {in,out,weight,bias?}, add_channel
// {in,vec,out}, add {a,b,out}, concat {inputs,out}, avg_pool2 {in,out},
// upsample_nearest2 {in,out}.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fbmedm/io.hpp"
#include "fbmedm/predictor.hpp"
#include "fbmedm/samplers.hpp"
#include "fbmedm/schedule.hpp"

namespace fbmedm {

struct CheckVector {
    std::vector<double> input;
    std::size_t t = 1;
    std::vector<double> output;
};

class UNetPredictor;

struct LoadedModel {
    std::shared_ptr<const UNetPredictor> predictor;
    NoiseSchedule schedule;
    NormalizationSpec normalization;
    std::vector<CheckVector> check_vectors;

    // Largest |predict(input) - output| over the recorded check vectors.
    double check_error() const;
};

// Parses and validates the container (shapes are checked by a dry run);
// nothing is returned on failure. expected_n, if given, must match the
// model's image size.
LoadedModel load_predictor_bytes(std::string_view bytes, std::optional<std::size_t> expected_n = std::nullopt);
LoadedModel load_predictor(const std::filesystem::path& path, std::optional<std::size_t> expected_n = std::nullopt);

class UNetPredictor final : public EpsilonPredictor {
public:
    struct Tensor {
        std::vector<std::size_t> shape;
        std::vector<float> data;
    };
    struct Op;

    UNetPredictor(std::size_t image_size, std::vector<Op> ops, std::vector<Tensor> params,
                  std::vector<std::string> param_names, std::string output, long timestep_offset);
    ~UNetPredictor() override;

    std::size_t image_size() const override { return n_; }
    void predict(std::span<const double> x, std::size_t batch, std::size_t t, std::span<double> out) const override;

private:
    std::size_t n_;
    std::vector<Op> ops_;
    std::vector<Tensor> params_;
    std::vector<std::string> param_names_;
    std::string output_;
    long timestep_offset_;
};

struct UNetPredictor::Op {
    std::string kind;
    std::vector<std::string> inputs;
    std::string out;
    int weight = -1;  // index into params
    int bias = -1;
    int groups = 1;
    int stride = 1;
    int padding = 0;
    int dim = 0;
    double eps = 1e-5;
    double max_period = 10000.0;
    bool flip_sin_to_cos = true;
    double freq_shift = 0.0;
};

}  // namespace fbmedm
