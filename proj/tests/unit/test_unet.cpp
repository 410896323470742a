#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <string>

#include <json.hpp>

#include "fbmedm/io.hpp"
#include "fbmedm/samplers.hpp"
#include "fbmedm/unet.hpp"

using namespace fbmedm;

namespace {

std::string fixture(const std::string& name) { return io::read_file(std::string(FBMEDM_TEST_DATA) + "/" + name); }

std::uint32_t manifest_length(const std::string& bytes) {
    std::uint32_t len;
    std::memcpy(&len, bytes.data() + 8, 4);
    return len;
}

// Rewrites the manifest of a container, keeping the tensor data.
std::string with_manifest(const std::string& bytes, const nlohmann::json& manifest) {
    const std::uint32_t len = manifest_length(bytes);
    const std::string text = manifest.dump();
    io::ByteWriter w;
    w.raw(bytes.substr(0, 8));
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.raw(text);
    w.raw(bytes.substr(12 + len));
    return w.take();
}

nlohmann::json manifest_of(const std::string& bytes) {
    return nlohmann::json::parse(bytes.substr(12, manifest_length(bytes)));
}

}  // namespace

TEST(Epsw, CheckVectorsReproduced) {
    for (const char* name : {"tiny_unet_n8.epsw", "tiny_unet_n16.epsw"}) {
        const LoadedModel m = load_predictor_bytes(fixture(name));
        ASSERT_FALSE(m.check_vectors.empty());
        EXPECT_LT(m.check_error(), 1e-4) << name;
    }
}

TEST(Epsw, ManifestContents) {
    const LoadedModel m = load_predictor(std::string(FBMEDM_TEST_DATA) + "/tiny_unet_n8.epsw", 8);
    EXPECT_EQ(m.predictor->image_size(), 8u);
    EXPECT_EQ(m.schedule.size(), 1000u);
    EXPECT_NEAR(m.schedule.alpha_bar(1000), 4.035829765375676e-05, 1e-12);
    EXPECT_EQ(m.normalization.mu, 2.0);
    EXPECT_EQ(m.normalization.sigma, 1.5);
    EXPECT_NEAR(m.normalization.hurst, 1.0 / 3.0, 1e-15);
    EXPECT_EQ(m.normalization.n, 8u);
    EXPECT_EQ(m.normalization.step_scale, 1.0);
    EXPECT_EQ(m.check_vectors.size(), 8u);
    EXPECT_EQ(m.check_vectors[0].t, 1u);
    EXPECT_EQ(m.check_vectors[1].t, 1000u);
}

TEST(Epsw, BatchedEqualsSingle) {
    const LoadedModel m = load_predictor_bytes(fixture("tiny_unet_n8.epsw"));
    std::vector<double> x;
    for (std::size_t k = 0; k < 3; ++k) x.insert(x.end(), m.check_vectors[k].input.begin(), m.check_vectors[k].input.end());
    std::vector<double> batched(x.size()), single(64);
    m.predictor->predict(x, 3, 500, batched);
    for (std::size_t k = 0; k < 3; ++k) {
        m.predictor->predict(std::span<const double>(x).subspan(k * 64, 64), 1, 500, single);
        for (std::size_t i = 0; i < 64; ++i) ASSERT_EQ(batched[k * 64 + i], single[i]);
    }
    EXPECT_THROW(m.predictor->predict(x, 2, 500, batched), std::invalid_argument);
}

TEST(Epsw, DrivesSampler) {
    const LoadedModel m = load_predictor_bytes(fixture("tiny_unet_n8.epsw"));
    SamplerConfig cfg;
    cfg.steps = 5;
    const ImageBatch b = ddpm_sample(*m.predictor, m.schedule, 2, 1, cfg);
    for (double v : b.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Epsw, SizeMismatch) {
    EXPECT_THROW(load_predictor_bytes(fixture("tiny_unet_n8.epsw"), 16), io::FormatError);
    EXPECT_NO_THROW(load_predictor_bytes(fixture("tiny_unet_n16.epsw"), 16));
}

TEST(Epsw, TruncatedAndCorrupt) {
    const std::string bytes = fixture("tiny_unet_n8.epsw");
    EXPECT_THROW(load_predictor_bytes(bytes.substr(0, bytes.size() - 1)), io::FormatError);
    EXPECT_THROW(load_predictor_bytes(bytes.substr(0, 6)), io::FormatError);
    EXPECT_THROW(load_predictor_bytes(bytes.substr(0, 200)), io::FormatError);
    std::string bad = bytes;
    bad[0] = 'Q';
    EXPECT_THROW(load_predictor_bytes(bad), io::FormatError);
    bad = bytes;
    bad[4] = 7;
    EXPECT_THROW(load_predictor_bytes(bad), io::FormatError);
    EXPECT_THROW(load_predictor(std::string(FBMEDM_TEST_DATA) + "/missing.epsw"), std::runtime_error);
}

TEST(Epsw, ManifestErrors) {
    const std::string bytes = fixture("tiny_unet_n8.epsw");
    nlohmann::json j = manifest_of(bytes);
    EXPECT_NO_THROW(load_predictor_bytes(with_manifest(bytes, j)));

    auto broken = j;
    broken["architecture"]["ops"][1]["weight"] = "nope";
    EXPECT_THROW(load_predictor_bytes(with_manifest(bytes, broken)), io::FormatError);

    broken = j;
    broken["schedule"]["T"] = 999;
    EXPECT_THROW(load_predictor_bytes(with_manifest(bytes, broken)), io::FormatError);

    broken = j;
    broken["tensors"][0]["shape"][0] = 9;  // conv_in has 8 output channels
    EXPECT_THROW(load_predictor_bytes(with_manifest(bytes, broken)), io::FormatError);

    broken = j;
    broken["architecture"]["output"] = "nowhere";
    EXPECT_THROW(load_predictor_bytes(with_manifest(bytes, broken)), io::FormatError);

    broken = j;
    broken["normalization"]["sigma"] = 0.0;
    EXPECT_THROW(load_predictor_bytes(with_manifest(bytes, broken)), io::FormatError);

    broken = j;
    broken["check_vectors"][0]["output"] = nlohmann::json::array({1.0});
    EXPECT_THROW(load_predictor_bytes(with_manifest(bytes, broken)), io::FormatError);

    broken = j;
    broken["tensors"][0]["offset"] = 1u << 30;
    EXPECT_THROW(load_predictor_bytes(with_manifest(bytes, broken)), io::FormatError);
}

TEST(Epsw, CheckErrorDetectsWrongWeights) {
    const std::string bytes = fixture("tiny_unet_n8.epsw");
    std::string altered = bytes;
    // flip a byte in the first tensor
    altered[12 + manifest_length(bytes) + 3] ^= 0x40;
    EXPECT_GT(load_predictor_bytes(altered).check_error(), 1e-4);
}
