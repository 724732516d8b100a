#include "dtb/verify.hpp"

#include "dtb/bigint.hpp"
#include "dtb/errors.hpp"
#include "dtb/nn/arch.hpp"
#include "dtb/nn/gradcheck.hpp"
#include "dtb/nn/model.hpp"
#include "dtb/notation.hpp"

#include <cstdio>

namespace dtb {

namespace {

// --- PARAMS -------------------------------------------------------------------

/// One reference-table row: layer label, output-dimension string, parameter
/// count (0 where the table leaves the cell blank).
struct TableRow {
    const char* label;
    const char* dims;
    long long params;
};

struct TableOracle {
    nn::ArchName arch;
    const char* input_dims;
    std::vector<TableRow> rows;
    long long total;
};

const std::vector<TableOracle>& table_oracles() {
    static const std::vector<TableOracle> tables = {
        {nn::ArchName::ConvNet,
         "1x5x229",
         {
             {"Conv (Id)", "32x5x229@3x3", 288},
             {"BatchNorm", "32x5x229", 128},
             {"Relu", "32x5x229", 0},
             {"Conv (Id)", "32x3x227@3x3", 9216},
             {"BatchNorm", "32x3x227", 128},
             {"Relu", "32x3x227", 0},
             {"MaxPool", "32x3x113@1x2", 0},
             {"Dropout, p=0.25", "32x3x113", 0},
             {"Conv (Id)", "64x1x111@3x3", 18432},
             {"BatchNorm", "64x1x111", 256},
             {"Relu", "64x1x111", 0},
             {"MaxPool", "64x1x55@1x2", 0},
             {"Dropout, p=0.25", "64x1x55", 0},
             {"Dense (Id)", "512", 1802240},
             {"BatchNorm", "512", 2048},
             {"Relu", "512", 0},
             {"Dropout, p=0.5", "512", 0},
             {"Dense (Sigmoid)", "88", 45144},
         },
         1877880},
        {nn::ArchName::SmallConvNet,
         "1x5x229",
         {
             {"Conv (Id)", "8x5x229@3x3", 72},
             {"BatchNorm", "8x5x229", 32},
             {"Relu", "8x5x229", 0},
             {"Conv (Id)", "8x3x227@3x3", 576},
             {"BatchNorm", "8x3x227", 32},
             {"Relu", "8x3x227", 0},
             {"MaxPool", "8x3x113@1x2", 0},
             {"Dropout, p=0.25", "8x3x113", 0},
             {"Conv (Id)", "8x1x111@3x3", 576},
             {"BatchNorm", "8x1x111", 32},
             {"Relu", "8x1x111", 0},
             {"MaxPool", "8x1x55@1x2", 0},
             {"Dropout, p=0.25", "8x1x55", 0},
             {"Conv (Id)", "8x1x53@1x3", 192},
             {"BatchNorm", "8x1x53", 32},
             {"Relu", "8x1x53", 0},
             {"MaxPool", "8x1x26@1x2", 0},
             {"Dropout, p=0.25", "8x1x26", 0},
             {"Dense (Id)", "16", 3328},
             {"BatchNorm", "16", 64},
             {"Relu", "16", 0},
             {"Dropout, p=0.5", "16", 0},
             {"Dense (Sigmoid)", "23", 391},
         },
         5327},
        {nn::ArchName::AUNet,
         "1x256x256",
         {
             {"Conv (Id)", "32x256x256@3x3", 288},
             {"BatchNorm", "32x256x256", 128},
             {"Elu", "32x256x256", 0},
             {"Conv (Id)", "32x256x256@3x3", 9216},
             {"BatchNorm", "32x256x256", 128},
             {"Elu", "32x256x256", 0},
             {"MaxPool", "32x128x128@2x2", 0},
             {"Conv (Id)", "32x128x128@3x3", 9216},
             {"BatchNorm", "32x128x128", 128},
             {"Elu", "32x128x128", 0},
             {"Conv (Id)", "32x128x128@3x3", 9216},
             {"BatchNorm", "32x128x128", 128},
             {"Elu", "32x128x128", 0},
             {"MaxPool", "32x64x64@2x2", 0},
             {"Conv (Id)", "64x64x64@3x3", 18432},
             {"BatchNorm", "64x64x64", 256},
             {"Elu", "64x64x64", 0},
             {"Conv (Id)", "64x64x64@3x3", 36864},
             {"BatchNorm", "64x64x64", 256},
             {"Elu", "64x64x64", 0},
             {"MaxPool", "64x32x32@2x2", 0},
             {"Conv (Id)", "64x32x32@3x3", 36864},
             {"BatchNorm", "64x32x32", 256},
             {"Elu", "64x32x32", 0},
             {"Conv (Id)", "64x32x32@3x3", 36864},
             {"BatchNorm", "64x32x32", 256},
             {"Elu", "64x32x32", 0},
             {"MaxPool", "64x16x16@2x2", 0},
             {"Conv (Id)", "128x16x16@3x3", 73728},
             {"BatchNorm", "128x16x16", 512},
             {"Elu", "128x16x16", 0},
             {"Conv (Id)", "128x16x16@3x3", 147456},
             {"BatchNorm", "128x16x16", 512},
             {"Elu", "128x16x16", 0},
             {"Upscale", "128x32x32", 0},
             {"Concat", "192x32x32", 0},
             {"Conv (Id)", "128x32x32@3x3", 221184},
             {"BatchNorm", "128x32x32", 512},
             {"Elu", "128x32x32", 0},
             {"Conv (Id)", "128x32x32@3x3", 147456},
             {"BatchNorm", "128x32x32", 512},
             {"Elu", "128x32x32", 0},
             {"Upscale", "128x64x64", 0},
             {"Concat", "192x64x64", 0},
             {"Conv (Id)", "64x64x64@3x3", 110592},
             {"BatchNorm", "64x64x64", 256},
             {"Elu", "64x64x64", 0},
             {"Conv (Id)", "64x64x64@3x3", 36864},
             {"BatchNorm", "64x64x64", 256},
             {"Elu", "64x64x64", 0},
             {"Upscale", "64x128x128", 0},
             {"Concat", "96x128x128", 0},
             {"Conv (Id)", "32x128x128@3x3", 27648},
             {"BatchNorm", "32x128x128", 128},
             {"Elu", "32x128x128", 0},
             {"Conv (Id)", "32x128x128@3x3", 9216},
             {"BatchNorm", "32x128x128", 128},
             {"Elu", "32x128x128", 0},
             {"Upscale", "32x256x256", 0},
             {"Concat", "64x256x256", 0},
             {"Conv (Id)", "32x256x256@3x3", 18432},
             {"BatchNorm", "32x256x256", 128},
             {"Elu", "32x256x256", 0},
             {"Conv (Id)", "32x256x128@3x3", 9216},
             {"BatchNorm", "32x256x128", 128},
             {"Elu", "32x256x128", 0},
             {"Conv (Sigmoid)", "1x256x88@1x41", 1313},
         },
         964673},
    };
    return tables;
}

void check_table(const TableOracle& oracle, VerifyReport& report) {
    const std::string name = nn::to_string(oracle.arch);
    const nn::ArchitectureSpec arch = nn::build_architecture(oracle.arch);

    if (arch.input.to_string() != oracle.input_dims) {
        report.failures.push_back(name + " input: expected " + std::string(oracle.input_dims) +
                                  ", got " + arch.input.to_string());
    }
    if (arch.layers.size() != oracle.rows.size()) {
        report.failures.push_back(name + " layer count: expected " +
                                  std::to_string(oracle.rows.size()) + ", got " +
                                  std::to_string(arch.layers.size()));
    }
    const size_t n = std::min(arch.layers.size(), oracle.rows.size());
    for (size_t i = 0; i < n; ++i) {
        const nn::LayerSpec& l = arch.layers[i];
        const TableRow& row = oracle.rows[i];
        if (l.label() != row.label || l.dims_string() != row.dims || l.params != row.params) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "%s layer %zu: expected %s | %s | %lld, got %s | %s | %lld",
                          name.c_str(), i, row.label, row.dims, row.params, l.label().c_str(),
                          l.dims_string().c_str(), l.params);
            report.failures.push_back(buf);
        }
    }
    if (arch.total_params() != oracle.total) {
        report.failures.push_back(name + " total params: expected " +
                                  std::to_string(oracle.total) + ", got " +
                                  std::to_string(arch.total_params()));
    }

    // runtime conformance: a real forward pass must land on every row's shape
    nn::Model<float> model(arch, /*seed=*/1);
    nn::Tensor<float> input(1, arch.input);
    model.forward(input, nn::RunMode::Infer, nullptr, /*cache=*/true);
    for (size_t i = 0; i < arch.layers.size(); ++i) {
        const nn::Tensor<float>& out = model.node_output(i);
        if (!out.matches(arch.layers[i].out_shape)) {
            report.failures.push_back(name + " forward layer " + std::to_string(i) +
                                      ": tensor " + out.dims_string() + " does not match " +
                                      arch.layers[i].out_shape.to_string());
        }
    }

    report.lines.push_back(name + ": " + std::to_string(arch.layers.size()) + " layers, total " +
                           std::to_string(arch.total_params()) + " params, forward OK");
}

// --- GRADS --------------------------------------------------------------------

struct GradCase {
    const char* name;
    nn::GradCheckSpec spec;
};

std::vector<GradCase> grad_cases() {
    using namespace nn;
    std::vector<GradCase> cases;
    const auto add = [&](const char* name, Shape input, std::vector<LayerSpec> layers,
                         CheckLoss loss = CheckLoss::LinearProbe) {
        GradCheckSpec spec;
        spec.arch = make_architecture(name, input, std::move(layers));
        spec.loss = loss;
        cases.push_back({name, std::move(spec)});
    };

    add("dense", {3, 1, 4}, {dense(7, /*bias=*/true)});
    add("conv_same", {2, 5, 6}, {conv(3, 3, 3, PadMode::Same, /*bias=*/true)});
    add("conv_valid", {2, 5, 6}, {conv(3, 2, 3, PadMode::Valid, /*bias=*/true)});
    add("conv_strided", {2, 6, 8}, {conv(3, 3, 3, PadMode::Same, /*bias=*/true, Act::Identity,
                                         /*sh=*/1, /*sw=*/2)});
    add("batchnorm_train", {3, 4, 5}, {batchnorm()});
    add("maxpool", {2, 4, 6}, {maxpool(2, 2)});
    add("upscale", {2, 3, 4}, {upscale(2)});
    add("concat_with_input", {2, 4, 4},
        {conv(2, 3, 3, PadMode::Same, /*bias=*/true), concat(-1)});
    add("relu", {2, 3, 4}, {conv(2, 3, 3, PadMode::Same, /*bias=*/true), activation(Act::Relu)});
    add("elu", {2, 3, 4}, {conv(2, 3, 3, PadMode::Same, /*bias=*/true), activation(Act::Elu)});
    add("sigmoid", {2, 3, 4},
        {conv(2, 3, 3, PadMode::Same, /*bias=*/true), activation(Act::Sigmoid)});
    add("bce_head", {2, 4, 5}, {dense(6, /*bias=*/true, Act::Sigmoid)}, CheckLoss::SigmoidBce);

    // batchnorm under a 16-item batch, the regime training actually uses
    GradCheckSpec bn16;
    bn16.arch = make_architecture("batchnorm_batch16", {2, 3, 3}, {batchnorm()});
    bn16.batch = 16;
    cases.push_back({"batchnorm_batch16", std::move(bn16)});
    return cases;
}

constexpr double kGradTolerance = 1e-5;

void check_grads(VerifyReport& report) {
    for (GradCase& c : grad_cases()) {
        const double err = nn::grad_check(c.spec);
        char buf[120];
        std::snprintf(buf, sizeof buf, "%-18s max rel err %.3e", c.name, err);
        report.lines.push_back(buf);
        if (!(err < kGradTolerance)) {
            std::snprintf(buf, sizeof buf, "%s: max rel err %.3e, expected < %.0e", c.name, err,
                          kGradTolerance);
            report.failures.push_back(buf);
        }
    }
}

// --- COMBINATORICS --------------------------------------------------------------

void expect_count(const char* what, const BigUint& actual, const std::string& expected,
                  VerifyReport& report) {
    if (actual.to_string() != expected) {
        report.failures.push_back(std::string(what) + ": expected " + expected + ", got " +
                                  actual.to_string());
    } else {
        report.lines.push_back(std::string(what) + " = " + expected);
    }
}

void check_combinatorics(VerifyReport& report) {
    expect_count("C(23,2) two-note intervals", count_combinations(23, 2, 2), "253", report);
    expect_count("sum C(88,i), i=2..5", count_combinations(88, 2, 5), "41621206", report);
    expect_count("sum C(88,i), i=2..6", count_combinations(88, 2, 6), "583552442", report);
    // identity: sum over all subset sizes is 2^n
    expect_count("sum C(20,i), i=0..20 (2^20)", count_combinations(20, 0, 20), "1048576",
                 report);
    expect_count("C(88,1)", count_combinations(88, 1, 1), "88", report);
}

} // namespace

std::string to_string(VerifyTarget target) {
    switch (target) {
    case VerifyTarget::Params: return "PARAMS";
    case VerifyTarget::Grads: return "GRADS";
    case VerifyTarget::Combinatorics: return "COMBINATORICS";
    }
    throw ArgumentError("invalid verify target");
}

VerifyTarget verify_target_from_string(const std::string& s) {
    if (s == "PARAMS") return VerifyTarget::Params;
    if (s == "GRADS") return VerifyTarget::Grads;
    if (s == "COMBINATORICS") return VerifyTarget::Combinatorics;
    throw ArgumentError("unknown verify target '" + s +
                        "' (expected PARAMS, GRADS, or COMBINATORICS)");
}

VerifyReport verify(VerifyTarget target) {
    VerifyReport report;
    switch (target) {
    case VerifyTarget::Params:
        for (const TableOracle& oracle : table_oracles()) check_table(oracle, report);
        break;
    case VerifyTarget::Grads: check_grads(report); break;
    case VerifyTarget::Combinatorics: check_combinatorics(report); break;
    }
    report.ok = report.failures.empty();
    return report;
}

} // namespace dtb
