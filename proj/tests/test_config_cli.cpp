#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ixn/config.hpp"

using namespace ixn;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    fs::path dir = fs::temp_directory_path() / "ixn-cli-tests";
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const std::string& name, const std::string& text) {
    fs::path p = work_dir() / name;
    std::ofstream(p) << text;
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Runs the workbench binary (path from the build system via IXN_CLI) and
/// captures stdout+stderr plus the exit code.
struct CliResult {
    int code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    const char* bin = std::getenv("IXN_CLI");
    REQUIRE(bin != nullptr);
    fs::path out = work_dir() / "cli-output.txt";
    const std::string cmd =
        std::string(bin) + " " + args + " > " + out.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.output = read_file(out);
    return r;
}

}  // namespace

TEST_CASE("config file parsing with comments and whitespace") {
    fs::path p = write_config("ok.cfg",
                              "# run setup\n"
                              "epochs = 3\n"
                              "lr=0.25   # inline comment\n"
                              "\n"
                              "lr_decay_epochs = 1,2\n"
                              "pairs = maxpool_unpool, ip_iu:m2o_nl\n"
                              "timing = false\n");
    RunConfig cfg;
    cfg.load_file(p.string());
    CHECK(cfg.get_int("epochs", 0) == 3);
    CHECK(cfg.get_double("lr", 0) == doctest::Approx(0.25));
    CHECK(cfg.get_int_list("lr_decay_epochs") == std::vector<long>{1, 2});
    const auto pairs = cfg.get_list("pairs");
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0] == "maxpool_unpool");
    CHECK(pairs[1] == "ip_iu:m2o_nl");
    CHECK_FALSE(cfg.get_bool("timing", true));
}

TEST_CASE("unknown keys are rejected by name") {
    fs::path p = write_config("bad.cfg", "learning_rate = 0.1\n");
    RunConfig cfg;
    try {
        cfg.load_file(p.string());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
    }
    CHECK_THROWS_AS(cfg.set("bogus", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.get("bogus"), ConfigError);
}

TEST_CASE("malformed lines and values fail loudly") {
    fs::path p = write_config("noeq.cfg", "epochs 3\n");
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.load_file(p.string()), ConfigError);
    cfg.set("epochs", "three");
    CHECK_THROWS_AS(cfg.get_int("epochs", 0), ConfigError);
    cfg.set("lr", "fast");
    CHECK_THROWS_AS(cfg.get_double("lr", 0), ConfigError);
    CHECK_THROWS_AS(cfg.load_file((work_dir() / "absent.cfg").string()), IoError);
}

TEST_CASE("cli: params reports the documented counts") {
    CliResult r = run_cli("params --family hin --variant linear --k 2 --channels 32");
    CHECK(r.code == 0);
    CHECK(r.output.find("512") != std::string::npos);
    CliResult all = run_cli("params --all --k 2 --channels 32");
    CHECK(all.code == 0);
    for (const char* needle : {"hin", "o2o_modelwise", "o2o_unshared_stagewise", "m2o",
                               "params=", "formula="})
        CHECK(all.output.find(needle) != std::string::npos);
}

TEST_CASE("cli: single gradient check passes") {
    CliResult r = run_cli("gradcheck --case conv2d_s1p1");
    CHECK(r.code == 0);
    CHECK(r.output.find("PASS") != std::string::npos);
}

TEST_CASE("cli: usage and config errors exit with code 2") {
    CHECK(run_cli("train --set no_such_key=1").code == 2);
    CHECK(run_cli("compare --set dataset_dir=" + (work_dir() / "empty").string())
              .code == 2);  // dataset not found
    CHECK(run_cli("definitely-not-a-subcommand").code == 2);
}

TEST_CASE("cli: synthetic data, training run, and byte-stable replay") {
    const fs::path data = work_dir() / "data";
    const fs::path out1 = work_dir() / "run1";
    const fs::path out2 = work_dir() / "run2";
    fs::remove_all(out1);
    fs::remove_all(out2);

    CliResult fetched = run_cli("fetch-data --synthetic --synthetic-train 64 "
                                "--synthetic-test 16 --dest " +
                                data.string());
    REQUIRE(fetched.code == 0);
    CHECK(fs::exists(data / "train-images-idx3-ubyte.gz"));
    CHECK(fs::exists(data / "t10k-images-idx3-ubyte.gz"));

    const std::string common =
        "train --set dataset_dir=" + data.string() +
        " --set profile=smoke --set subset_size=48 --set eval_subset=16"
        " --set epochs=2 --set batch_size=16 --set lr_decay_epochs="
        " --set pairs=ip_iu:m2o_nl --set seed=5 --set out_dir=";
    CliResult t1 = run_cli(common + out1.string());
    REQUIRE(t1.code == 0);
    CHECK(fs::exists(out1 / "report.csv"));
    CHECK(fs::exists(out1 / "loss_curve.json"));
    CHECK(fs::exists(out1 / "model.json"));
    CHECK(fs::exists(out1 / "model.bin"));

    const std::string csv = read_file(out1 / "report.csv");
    CHECK(csv.rfind("pair,variant,psnr_db,ssim,mae,rmse,epochs,seconds,seed", 0) == 0);
    CHECK(csv.find("ip_iu,m2o_nl") != std::string::npos);

    // identical invocation replays byte-for-byte
    CliResult t2 = run_cli(common + out2.string());
    REQUIRE(t2.code == 0);
    CHECK(read_file(out2 / "report.csv") == csv);

    // the saved model evaluates without error and prints the same header
    CliResult ev = run_cli("eval --set dataset_dir=" + data.string() +
                           " --set eval_subset=16 --set pairs=ip_iu:m2o_nl --set out_dir=" +
                           out1.string());
    CHECK(ev.code == 0);
    CHECK(ev.output.find("pair,variant") != std::string::npos);
}
