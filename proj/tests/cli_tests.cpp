#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kBinary = EIT_BINARY;
const std::string kWork = "/tmp/eitaa_cli_tests";

int run(const std::string& args) {
    const std::string cmd = kBinary + " " + args + " > " + kWork + "/stdout.txt 2> " + kWork + "/stderr.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::size_t line_count(const std::string& text) {
    std::size_t count = 0;
    for (char c : text)
        if (c == '\n') ++count;
    return count;
}

struct Workspace {
    Workspace() {
        fs::remove_all(kWork);
        fs::create_directories(kWork);
    }
};

// Shared tiny dataset: generated once, reused by the training/eval cases.
const std::string kData = kWork + "/data";
void ensure_dataset() {
    static Workspace workspace;
    if (fs::exists(kData + "/manifest.json")) return;
    REQUIRE(run("gen-data --out " + kData + " --n-train 4 --n-test 2 --elements 96 --seed 3") == 0);
}

} // namespace

TEST_CASE("bad flags exit with code 2, help with 0") {
    ensure_dataset();
    CHECK(run("--definitely-not-a-flag") == 2);
    CHECK(run("gen-data") == 2);            // missing required --out
    CHECK(run("eval --method x") == 2);     // missing required --data
    CHECK(run("--help") == 0);
    CHECK(run("gen-data --help") == 0);
}

TEST_CASE("gen-data is reproducible: same flags, same content hash") {
    ensure_dataset();
    const json first = json::parse(slurp(kData + "/run_manifest.json"));
    REQUIRE(first.contains("content_hash"));
    REQUIRE(first.contains("wall_seconds"));

    const std::string again = kWork + "/data_again";
    REQUIRE(run("gen-data --out " + again + " --n-train 4 --n-test 2 --elements 96 --seed 3") == 0);
    const json second = json::parse(slurp(again + "/run_manifest.json"));
    CHECK(first.at("content_hash") == second.at("content_hash"));

    const std::string other = kWork + "/data_other";
    REQUIRE(run("gen-data --out " + other + " --n-train 4 --n-test 2 --elements 96 --seed 4") == 0);
    const json third = json::parse(slurp(other + "/run_manifest.json"));
    CHECK(first.at("content_hash") != third.at("content_hash"));
}

TEST_CASE("gen-data accepts an empty train split") {
    ensure_dataset();
    CHECK(run("gen-data --out " + kWork + "/data_empty --n-train 0 --n-test 1 --elements 96") == 0);
}

TEST_CASE("train smoke run writes a loadable checkpoint and manifest") {
    ensure_dataset();
    const std::string ckpt = kWork + "/net.json";
    REQUIRE(run("train --data " + kData + " --out " + ckpt +
                " --epochs 1 --K 2 --K1 1 --K2 1 --hidden 8 --seed 5") == 0);
    CHECK(fs::exists(ckpt));
    const json manifest = json::parse(slurp(ckpt + ".manifest.json"));
    CHECK(manifest.at("command") == "train");
    CHECK(manifest.at("epoch_losses").size() == 1);

    // eval with the trained model
    const std::string out = kWork + "/eval_aa";
    REQUIRE(run("eval --data " + kData + " --out " + out + " --checkpoint " + ckpt +
                " --K 2 --K1 1 --K2 1 --method aa-hqsnet") == 0);
    const std::string csv = slurp(out + "/metrics.csv");
    CHECK(csv.rfind("sample,mse,ssim,eiei,dr,snr_db\n", 0) == 0);
    CHECK(line_count(csv) == 3); // header + one row per test sample
    CHECK(fs::exists(out + "/sigma_hat_0.f64"));
    CHECK(fs::exists(out + "/sigma_hat_1.f64"));
    const json manifest2 = json::parse(slurp(out + "/run_manifest.json"));
    CHECK(manifest2.at("mean_mse").get<double>() > 0.0);

    // hqsnet must also run from the same checkpoint
    CHECK(run("eval --data " + kData + " --out " + kWork + "/eval_plain --checkpoint " + ckpt +
              " --K 2 --K1 1 --K2 1 --method hqsnet") == 0);
}

TEST_CASE("eval with method gn-lm needs no checkpoint") {
    ensure_dataset();
    const std::string out = kWork + "/eval_lm";
    REQUIRE(run("eval --data " + kData + " --out " + out + " --method gn-lm") == 0);
    CHECK(line_count(slurp(out + "/metrics.csv")) == 3);
}

TEST_CASE("eval with a learned method but no checkpoint fails cleanly") {
    ensure_dataset();
    CHECK(run("eval --data " + kData + " --out " + kWork + "/eval_bad --method aa-hqsnet") == 3);
    CHECK(run("eval --data " + kData + " --out " + kWork + "/eval_bad2 --method not-a-method") == 3);
}

TEST_CASE("bench-aa emits the benchmark CSV") {
    ensure_dataset();
    const std::string out = kWork + "/bench.csv";
    REQUIRE(run("bench-aa --out " + out + " --max-iters 30") == 0);
    const std::string csv = slurp(out);
    CHECK(csv.rfind("method,m,x0_id,iter,f_norm\n", 0) == 0);
    CHECK(line_count(csv) > 10);
    const json manifest = json::parse(slurp(out + ".manifest.json"));
    CHECK(manifest.at("runs").get<int>() == 30); // 2 methods x 3 starts x 5 depths
    CHECK(manifest.at("converged").get<int>() > 0);
}

TEST_CASE("render draws a field and a class map from eval output") {
    ensure_dataset();
    REQUIRE(run("eval --data " + kData + " --out " + kWork + "/eval_render --method gn-lm") == 0);
    const std::string svg = kWork + "/field.svg";
    REQUIRE(run("render --mesh " + kData + "/mesh.json --field " + kWork + "/eval_render/sigma_hat_0.f64 --out " +
                svg) == 0);
    CHECK(slurp(svg).find("</svg>") != std::string::npos);

    const std::string class_svg = kWork + "/classes.svg";
    REQUIRE(run("render --mesh " + kData + "/mesh.json --field " + kWork + "/eval_render/sigma_hat_0.f64 --truth " +
                kData + "/sigma_test_0.f64 --class-map --out " + class_svg) == 0);
    CHECK(slurp(class_svg).find("</svg>") != std::string::npos);

    // class map without a truth field is an error
    CHECK(run("render --mesh " + kData + "/mesh.json --field " + kWork + "/eval_render/sigma_hat_0.f64 --class-map "
              "--out " + kWork + "/bad.svg") == 3);
}
