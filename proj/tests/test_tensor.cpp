#include <catch2/catch_amalgamated.hpp>

using Catch::Approx;

#include <filesystem>
#include <fstream>

#include "meshrec/tensor.hpp"

using namespace meshrec;

namespace {
std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("tensor shape bookkeeping") {
    Tensor<double> t({2, 3});
    REQUIRE(t.numel() == 6);
    t(1, 2) = 5.0;
    REQUIRE(t[5] == 5.0);
    REQUIRE_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
    const auto r = t.reshaped({3, 2});
    REQUIRE(r(2, 1) == 5.0);
    REQUIRE_THROWS_AS(Tensor<double>({2, 3}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("TNSR round trip preserves payload bits") {
    Tensor<double> t({2, 2, 2});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = 0.1 * static_cast<double>(i) - 0.3;
    const std::string path = temp_path("meshrec_t.tnsr");
    write_tensor(path, t);
    const auto back = read_tensor<double>(path);
    REQUIRE(back.shape() == t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) REQUIRE(back[i] == t[i]);

    // f32 payload read back as double
    Tensor<float> f({3});
    f[0] = 1.5f;
    f[1] = -2.25f;
    f[2] = 0.0f;
    write_tensor(path, f);
    const auto fd = read_tensor<double>(path);
    REQUIRE(fd[1] == -2.25);
}

TEST_CASE("TNSR rejects garbage") {
    const std::string path = temp_path("meshrec_bad.tnsr");
    std::ofstream(path) << "not a tensor";
    REQUIRE_THROWS_AS(read_tensor<double>(path), std::runtime_error);
    REQUIRE_THROWS_AS(read_tensor<double>(temp_path("meshrec_missing.tnsr")), std::runtime_error);
}
