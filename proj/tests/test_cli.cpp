#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

const char* cli() {
#ifdef CLICKCHOICE_CLI
    return CLICKCHOICE_CLI;
#else
    return "clickchoice";
#endif
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Result {
    int code = -1;
    std::string err;
};

// Runs the CLI inside `dir` with the given arguments.
Result run(const fs::path& dir, const std::string& args, const std::string& env = "") {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd =
        "cd '" + dir.string() + "' && " + env + " '" + cli() + "' " + args + " 2> '" + err.string() + "' > /dev/null";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("clickchoice_cli_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write_profile(const fs::path& dir) {
    std::ofstream(dir / "profile.json") << R"({
        "start_date": "2015-09-01", "days": 40, "customers": 60, "products_per_category": 4,
        "num_categories": 6, "daily_view_probability": 0.25,
        "features": {"recency": "dayr", "frequency": "dayf"},
        "classes": [{"base": 0.01, "amplitude": 0.3, "share": 1}, {"base": 0.2, "amplitude": 0.5, "share": 1}]
    })";
}

// simulate -> features (train, test) -> fit all four models -> evaluate -> report
void pipeline(const fs::path& dir, int threads) {
    const std::string t = "--threads " + std::to_string(threads) + " ";
    write_profile(dir);
    REQUIRE(run(dir, t + "simulate --profile profile.json --seed 4 --out events.jsonl --truth truth.json").code == 0);
    REQUIRE(run(dir, t + "features --events events.jsonl --base-dates 2015-09-20..2015-09-30 --recency dayr "
                         "--frequency dayf --sample-rate 0.7 --seed 2 --out train.jsonl --tensor-out tensor.json")
                .code == 0);
    REQUIRE(run(dir, t + "features --events events.jsonl --base-dates 2015-10-01..2015-10-09 --recency dayr "
                         "--frequency dayf --out test.jsonl")
                .code == 0);
    REQUIRE(run(dir, t + "fit --model mono --tensor tensor.json --out mono.json").code == 0);
    REQUIRE(run(dir, t + "fit --model mcc --tensor tensor.json --out mcc.json").code == 0);
    REQUIRE(run(dir, t + "fit --model lcmcc --classes 2 --restarts 4 --tensor tensor.json --seed 7 --out lcmcc.json")
                .code == 0);
    REQUIRE(run(dir, t + "fit --model lclr --classes 2 --restarts 4 --tensor tensor.json --seed 7 --out lclr.json")
                .code == 0);
    REQUIRE(run(dir, t + "evaluate --model lcmcc.json --model mcc.json --model lclr.json --model mono.json "
                         "--samples test.jsonl --top-n 1,3 --out eval.json --emit-plots plots")
                .code == 0);
    REQUIRE(run(dir, t + "report --model lcmcc.json --tensor tensor.json --out report.json").code == 0);
}

const char* kArtifacts[] = {"events.jsonl", "truth.json", "train.jsonl", "tensor.json", "test.jsonl",
                            "mono.json",    "mcc.json",   "lcmcc.json",  "lclr.json",   "eval.json",
                            "report.json",  "plots/f1_by_model.csv",     "plots/map_by_classes.csv"};

}  // namespace

TEST_CASE("pipeline artifacts are byte identical across thread counts") {
    const fs::path a = fresh_dir("t1");
    const fs::path b = fresh_dir("t4");
    pipeline(a, 1);
    pipeline(b, 4);
    for (const char* name : kArtifacts) {
        INFO(name);
        const std::string x = slurp(a / name);
        CHECK_FALSE(x.empty());
        CHECK(x == slurp(b / name));
    }
}

TEST_CASE("every json artifact carries schema_version and its config") {
    const fs::path d = fresh_dir("schema");
    pipeline(d, 2);
    for (const char* name : {"truth.json", "tensor.json", "mono.json", "mcc.json", "lcmcc.json", "lclr.json",
                             "eval.json", "report.json"}) {
        INFO(name);
        const Json j = Json::parse(slurp(d / name));
        CHECK(j.at("schema_version") == 1);
        CHECK(j.contains("config"));
    }
    for (const char* name : {"events.jsonl", "train.jsonl", "test.jsonl"}) {
        INFO(name);
        std::ifstream in(d / name);
        std::string first;
        std::getline(in, first);
        const Json header = Json::parse(first);
        CHECK(header.at("schema_version") == 1);
        CHECK(header.contains("config"));
    }
    const Json tensor = Json::parse(slurp(d / "tensor.json"));
    CHECK(tensor["config"]["sample_rate"] == 0.7);
    CHECK(tensor["config"]["features"]["recency"] == "dayr");
}

TEST_CASE("config file fills options that flags do not override") {
    const fs::path d = fresh_dir("config");
    write_profile(d);
    REQUIRE(run(d, "simulate --profile profile.json --seed 4 --out events.jsonl").code == 0);
    REQUIRE(run(d, "features --events events.jsonl --base-dates 2015-09-25..2015-09-30 --recency dayr "
                   "--frequency dayf --tensor-out tensor.json")
                .code == 0);
    std::ofstream(d / "cfg.json") << R"({"threads": 2,
        "fit": {"model": "lcmcc", "classes": 2, "restarts": 3, "seed": 5, "tensor": "tensor.json"}})";
    REQUIRE(run(d, "--config cfg.json fit --seed 9 --out m.json").code == 0);
    const Json m = Json::parse(slurp(d / "m.json"));
    const Json& em = m["config"]["em"];
    CHECK(em["seed"] == 9);        // flag beats config
    CHECK(em["classes"] == 2);     // config beats default
    CHECK(em["restarts"] == 3);
    CHECK(em["max_em_iterations"] == 10);  // default
    CHECK(m["config"]["model"] == "lcmcc");
    CHECK(m["classes"].size() == 2);

    std::ofstream(d / "bad.json") << R"({"fit": {"classes": "two"}})";
    const auto r = run(d, "--config bad.json fit --model lcmcc --tensor tensor.json --out x.json");
    CHECK(r.code == 1);
    CHECK(r.err.find("classes") != std::string::npos);
}

TEST_CASE("missing input file exits 1 and names the path") {
    const fs::path d = fresh_dir("missing");
    const auto r = run(d, "fit --model mcc --tensor does/not/exist.json --out m.json");
    CHECK(r.code == 1);
    CHECK(r.err.find("does/not/exist.json") != std::string::npos);
    const auto s = run(d, "simulate --profile nowhere.json --out e.jsonl");
    CHECK(s.code == 1);
    CHECK(s.err.find("nowhere.json") != std::string::npos);
}

TEST_CASE("evaluate with mismatched grids exits 1 naming both grids") {
    const fs::path d = fresh_dir("grid");
    write_profile(d);
    REQUIRE(run(d, "simulate --profile profile.json --seed 1 --out events.jsonl").code == 0);
    REQUIRE(run(d, "features --events events.jsonl --base-dates 2015-09-25..2015-09-30 --recency dayr "
                   "--frequency dayf --tensor-out tensor.json")
                .code == 0);
    REQUIRE(run(d, "features --events events.jsonl --base-dates 2015-10-01..2015-10-03 --recency sesr "
                   "--frequency viewf --out test.jsonl")
                .code == 0);
    REQUIRE(run(d, "fit --model mcc --tensor tensor.json --out mcc.json").code == 0);
    const auto r = run(d, "evaluate --model mcc.json --samples test.jsonl --out eval.json");
    CHECK(r.code == 1);
    CHECK(r.err.find("24x8") != std::string::npos);
    CHECK(r.err.find("12x16") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
    const fs::path d = fresh_dir("usage");
    CHECK(run(d, "fit --model svm --tensor t.json").code == 1);
    CHECK(run(d, "frobnicate").code == 1);
    CHECK(run(d, "fit --model mcc --out m.json").code == 1);  // no tensor
    CHECK(run(d, "--threads 0 fit --model mcc --tensor t.json --out m.json").code == 1);
}

TEST_CASE("log level from the environment") {
    const fs::path d = fresh_dir("log");
    write_profile(d);
    const auto quiet = run(d, "simulate --profile profile.json --out e.jsonl", "CLICKCHOICE_LOG=error");
    CHECK(quiet.code == 0);
    CHECK(quiet.err.empty());
    const auto chatty = run(d, "simulate --profile profile.json --out e.jsonl", "CLICKCHOICE_LOG=debug");
    CHECK(chatty.err.find("[debug]") != std::string::npos);
    CHECK(chatty.err.find("Eigen") != std::string::npos);
}
