#include "doctest.h"

#include "dtb/checkpoint.hpp"
#include "dtb/errors.hpp"
#include "dtb/rng.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

using namespace dtb;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / name; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

nn::Tensor<float> random_window(uint64_t seed) {
    Rng rng(seed);
    nn::Tensor<float> x(2, 1, 5, 229);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    return x;
}

} // namespace

TEST_CASE("array container round-trips arrays and metadata") {
    std::vector<NamedArray> arrays;
    arrays.push_back({"alpha", {2, 3}, {1, 2, 3, 4, 5, 6}});
    arrays.push_back({"beta", {4}, {0.5f, -0.5f, 1.5f, -1.5f}});
    nlohmann::json meta{{"purpose", "test"}, {"n", 7}};

    const fs::path path = temp_path("dtb_test_container.bin");
    save_array_container("DTNN", arrays, meta, path);

    auto [back, back_meta] = load_array_container("DTNN", path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "alpha");
    CHECK(back[0].dims == std::vector<uint32_t>{2, 3});
    CHECK(back[0].values == arrays[0].values);
    CHECK(back[1].name == "beta");
    CHECK(back[1].values == arrays[1].values);
    CHECK(back_meta["purpose"] == "test");
    CHECK(back_meta["n"] == 7);

    // Wrong magic in the reader is rejected.
    CHECK_THROWS_AS(load_array_container("DNMF", path), FormatError);
    fs::remove(path);
}

TEST_CASE("array container writes are byte-stable") {
    std::vector<NamedArray> arrays{{"w", {3}, {1.0f, 2.0f, 3.0f}}};
    nlohmann::json meta{{"k", "v"}};

    const fs::path p1 = temp_path("dtb_test_stable1.bin");
    const fs::path p2 = temp_path("dtb_test_stable2.bin");
    save_array_container("DTNN", arrays, meta, p1);
    save_array_container("DTNN", arrays, meta, p2);
    CHECK(slurp(p1) == slurp(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("truncated and corrupt files are rejected") {
    std::vector<NamedArray> arrays{{"w", {4}, {1, 2, 3, 4}}};
    const fs::path path = temp_path("dtb_test_corrupt.bin");
    save_array_container("DTNN", arrays, {}, path);

    std::string bytes = slurp(path);

    // Truncate in the middle of the float payload.
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_array_container("DTNN", path), FormatError);

    // Flip the magic.
    bytes[0] = 'X';
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_array_container("DTNN", path), FormatError);
    fs::remove(path);
}

TEST_CASE("model checkpoints round-trip with bit-exact forward passes") {
    nn::ArchitectureSpec spec = nn::build_architecture(nn::ArchName::SmallConvNet);
    nn::Model<float> model(spec, 99);

    // Make the running statistics non-trivial before saving.
    Rng drop_rng(1);
    model.forward(random_window(5), nn::RunMode::Train, &drop_rng, true);

    const fs::path path = temp_path("dtb_test_ckpt.dtnn");
    Checkpoint ckpt = checkpoint_from_model(model);
    ckpt.meta["note"] = "round-trip";
    save_checkpoint(ckpt, path);

    Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.meta["architecture"] == "SMALLCONVNET");
    CHECK(loaded.meta["note"] == "round-trip");

    nn::Model<float> rebuilt = model_from_checkpoint(loaded);
    nn::Tensor<float> x = random_window(17);
    nn::Tensor<float> a = model.forward(x, nn::RunMode::Infer);
    nn::Tensor<float> b = rebuilt.forward(x, nn::RunMode::Infer);
    CHECK(a.data == b.data); // bit-exact, not approximate

    fs::remove(path);
}

TEST_CASE("load_model_params is strict on needed arrays, tolerant of extras") {
    nn::ArchitectureSpec spec = nn::build_architecture(nn::ArchName::SmallConvNet);
    nn::Model<float> model(spec, 3);
    Checkpoint ckpt = checkpoint_from_model(model);

    // Extra arrays (e.g. feature standardization) must be ignored.
    ckpt.arrays.push_back({"standardization.mean", {229}, std::vector<float>(229, 0.0f)});
    nn::Model<float> target(spec);
    load_model_params(target, ckpt); // no throw

    // A missing parameter array is an error.
    Checkpoint incomplete = ckpt;
    incomplete.arrays.erase(incomplete.arrays.begin());
    nn::Model<float> target2(spec);
    CHECK_THROWS_AS(load_model_params(target2, incomplete), FormatError);

    // A mis-sized array is an error.
    Checkpoint resized = ckpt;
    resized.arrays[0].values.push_back(0.0f);
    resized.arrays[0].dims = {static_cast<uint32_t>(resized.arrays[0].values.size())};
    nn::Model<float> target3(spec);
    CHECK_THROWS_AS(load_model_params(target3, resized), FormatError);
}

TEST_CASE("model_from_checkpoint requires a known architecture") {
    Checkpoint ckpt;
    ckpt.meta["architecture"] = "PERCEPTRON9000";
    CHECK_THROWS_AS(model_from_checkpoint(ckpt), ConfigError);

    Checkpoint no_arch;
    CHECK_THROWS_AS(model_from_checkpoint(no_arch), FormatError);
}
