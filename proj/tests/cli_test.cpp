#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <map>

#include <json.hpp>

#include "runner.hpp"

using namespace mrfsel;
using namespace mrfsel::cli;

namespace {

std::string cli_path() {
    const char* p = std::getenv("MRFSEL_CLI");
    return p ? p : MRFSEL_CLI_DEFAULT;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("mrfsel_cli_") + info->name() + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    // Runs the CLI with the output root pointed at the test directory.
    int sh(const std::string& args) const {
        const std::string cmd = "cd '" + dir_.string() + "' && MRFSEL_OUTPUT_ROOT='" + dir_.string() + "' '" + cli_path() +
                                "' " + args + " > cmd.log 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    fs::path write(const std::string& name, const std::string& text) const {
        write_file(dir_ / name, text);
        return dir_ / name;
    }

    std::string log() const { return read_file(dir_ / "cmd.log"); }

    fs::path dir_;
};

const std::string kGmrf = R"(schema_version = 1
[run]
id = small
[graph]
family = star
a = 2
b = 3
[model]
kind = gmrf
[sampling]
n = 60, 200
[penalty]
lambda2 = 0, 0.05
[selection]
methods = N1, N2_Sbar
[evaluation]
trials = 2
seed = 31
workers = 1
[output]
directory = out/small
keep_samples = true
)";

const std::string kIsing = R"(schema_version = 1
[run]
id = ising
[graph]
family = bounded_degree
p = 10
d_max = 3
m = 10
[model]
kind = ising
law = uniform
low = 0.2
high = 0.5
[sampling]
sampler = gibbs
n = 300
burn_in = 50
thin = 2
[penalty]
alpha = 1
[evaluation]
trials = 1
seed = 5
workers = 1
[output]
directory = out/ising
keep_samples = true
)";

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> r;
        for (auto c : split(line, ',')) r.emplace_back(c);
        rows.push_back(std::move(r));
    }
    return rows;
}

// Metric columns of the results row for (n, trial, grid lambda2, method, rule).
std::vector<std::string> result_metrics(const std::string& results, int n, int trial, const std::string& lambda2,
                                        const std::string& method, const std::string& rule) {
    for (const auto& r : csv_rows(results)) {
        if (r.size() < 24 || r[7] != std::to_string(n) || r[13] != std::to_string(trial)) continue;
        if (r[9] != lambda2 || r[12] != method || r[11] != rule) continue;
        return {r.begin() + 14, r.begin() + 23};
    }
    return {};
}

std::vector<std::string> score_metrics(const std::string& score_csv, const std::string& rule) {
    for (const auto& r : csv_rows(score_csv))
        if (r.size() == 10 && r[0] == rule) return {r.begin() + 1, r.end()};
    return {};
}

}  // namespace

TEST_F(Cli, RunWritesArtifactsAndManifest) {
    const auto cfg = write("small.ini", kGmrf);
    ASSERT_EQ(sh("run " + cfg.string()), 0) << log();
    const fs::path out = dir_ / "out/small";
    for (const char* f : {"config.ini", "graph.txt", "model.txt", "results.csv", "manifest.json", "samples/n60_trial0.csv",
                          "samples/n200_trial1.csv"})
        EXPECT_TRUE(fs::exists(out / f)) << f;

    const auto manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
    EXPECT_EQ(manifest["seed"], 31);
    EXPECT_EQ(manifest["status"], "ok");
    EXPECT_EQ(manifest["config"], kGmrf);
    EXPECT_TRUE(manifest["failures"].empty());
    EXPECT_EQ(manifest["artifacts"].size(), 8u);
    for (const auto& a : manifest["artifacts"])
        EXPECT_EQ(a["sha256"], sha256_hex(read_file(out / a["path"].get<std::string>()))) << a["path"];

    const auto rows = csv_rows(read_file(out / "results.csv"));
    EXPECT_EQ(rows[0].size(), 24u);
    // 2 n x 2 trials x 2 lambda2 x 2 methods x 2 rules, plus mean and std rows per cell
    EXPECT_EQ(rows.size(), 1u + 32u + 32u);
}

TEST_F(Cli, RunIsByteReproducibleAndWorkerIndependent) {
    const auto cfg = write("small.ini", kGmrf);
    ASSERT_EQ(sh("run " + cfg.string() + " --out a"), 0) << log();
    ASSERT_EQ(sh("run " + cfg.string() + " --out b --workers 3"), 0) << log();
    for (const char* f : {"results.csv", "graph.txt", "model.txt", "samples/n200_trial1.csv"})
        EXPECT_EQ(read_file(dir_ / "a" / f), read_file(dir_ / "b" / f)) << f;
    ASSERT_EQ(sh("run " + cfg.string() + " --out c --seed 32"), 0) << log();
    EXPECT_NE(read_file(dir_ / "a/results.csv"), read_file(dir_ / "c/results.csv"));
}

TEST_F(Cli, OutputRootComesFromEnvironment) {
    const auto cfg = write("small.ini", kGmrf);
    const fs::path other = dir_ / "elsewhere";
    const std::string cmd = "cd / && MRFSEL_OUTPUT_ROOT='" + other.string() + "' '" + cli_path() + "' run '" + cfg.string() +
                            "' > /dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(other / "out/small/results.csv"));
}

TEST_F(Cli, MalformedConfigIsQuarantined) {
    const auto cfg = write("broken.ini", [] {
        std::string s = kGmrf;
        return s.replace(s.find("kind = gmrf"), 11, "kind = gauss");
    }());
    EXPECT_EQ(sh("run " + cfg.string()), 2);
    EXPECT_NE(log().find("model.kind"), std::string::npos) << log();
    std::set<std::string> entries;
    for (const auto& e : fs::directory_iterator(dir_)) entries.insert(e.path().filename().string());
    EXPECT_EQ(entries, (std::set<std::string>{"broken.ini", "cmd.log", "quarantine"}));
    const auto report = read_file(dir_ / "quarantine/broken/config_error.txt");
    EXPECT_NE(report.find("model.kind"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir_ / "quarantine/broken/broken.ini"));
}

TEST_F(Cli, UnreadableConfigIsQuarantined) {
    EXPECT_EQ(sh("run missing.ini"), 2);
    EXPECT_TRUE(fs::exists(dir_ / "quarantine/missing/config_error.txt"));
    EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(Cli, FailedCellsGiveNonzeroExitAndAreListed) {
    const auto cfg = write("fail.ini", R"(schema_version = 1
[graph]
family = star
a = 1
b = 3
[model]
kind = ising
coupling = 3
[sampling]
n = 3
[penalty]
alpha = 1
[evaluation]
seed = 1
[output]
directory = out/fail
)");
    EXPECT_EQ(sh("run " + cfg.string()), 1) << log();
    const auto manifest = nlohmann::json::parse(read_file(dir_ / "out/fail/manifest.json"));
    EXPECT_EQ(manifest["status"], "partial");
    ASSERT_FALSE(manifest["failures"].empty());
    EXPECT_NE(manifest["failures"][0]["cell"].get<std::string>().find("n=3,trial=0"), std::string::npos);
}

TEST_F(Cli, StagesComposeToRun) {
    const auto cfg = write("small.ini", kGmrf);
    ASSERT_EQ(sh("run " + cfg.string()), 0) << log();
    const fs::path run = dir_ / "out/small";

    ASSERT_EQ(sh("gen-graph --config small.ini --out g.txt"), 0) << log();
    EXPECT_EQ(read_file(dir_ / "g.txt"), read_file(run / "graph.txt"));

    for (int n : {60, 200})
        for (int trial : {0, 1}) {
            const std::string tag = std::to_string(n) + "_" + std::to_string(trial);
            ASSERT_EQ(sh("sample --config small.ini --graph g.txt --n " + std::to_string(n) + " --trial " +
                         std::to_string(trial) + " --out s" + tag + ".csv --model-out m.txt"),
                      0)
                << log();
            EXPECT_EQ(read_file(dir_ / ("s" + tag + ".csv")), read_file(run / sample_file_name(n, trial)));
            EXPECT_EQ(read_file(dir_ / "m.txt"), read_file(run / "model.txt"));

            ASSERT_EQ(sh("fit-neighborhoods --samples s" + tag + ".csv --out e" + tag + ".txt"), 0) << log();
            ASSERT_EQ(sh("score --graph g.txt --estimates e" + tag + ".txt --out sc" + tag + ".csv"), 0) << log();
            const auto score_csv = read_file(dir_ / ("sc" + tag + ".csv"));
            const auto results = read_file(run / "results.csv");
            for (const char* rule : {"AND", "OR"}) {
                const auto expect = result_metrics(results, n, trial, "0", "N1", rule);
                ASSERT_FALSE(expect.empty());
                EXPECT_EQ(score_metrics(score_csv, rule), expect) << tag << ' ' << rule;
            }

            ASSERT_EQ(sh("vote --samples s" + tag + ".csv --out v" + tag + " --method N2_Sbar --threshold degree" +
                         " --graph g.txt --estimates ve" + tag + ".txt"),
                      0)
                << log();
            ASSERT_EQ(sh("score --graph g.txt --estimates ve" + tag + ".txt --rule AND --out vs" + tag + ".csv"), 0);
            EXPECT_EQ(score_metrics(read_file(dir_ / ("vs" + tag + ".csv")), "AND"),
                      result_metrics(results, n, trial, "0", "N2_Sbar", "AND"));
        }
}

TEST_F(Cli, DiscreteStagesComposeToRun) {
    const auto cfg = write("ising.ini", kIsing);
    ASSERT_EQ(sh("run " + cfg.string()), 0) << log();
    const fs::path run = dir_ / "out/ising";
    ASSERT_EQ(sh("gen-graph --config ising.ini --out g.txt"), 0) << log();
    ASSERT_EQ(sh("sample --config ising.ini --graph g.txt --n 300 --out s.csv"), 0) << log();
    EXPECT_EQ(read_file(dir_ / "s.csv"), read_file(run / sample_file_name(300, 0)));
    ASSERT_EQ(sh("fit-neighborhoods --samples s.csv --alpha 1 --out e.txt"), 0) << log();
    ASSERT_EQ(sh("score --graph g.txt --estimates e.txt --out sc.csv"), 0) << log();
    const auto results = read_file(run / "results.csv");
    EXPECT_EQ(score_metrics(read_file(dir_ / "sc.csv"), "OR"), result_metrics(results, 300, 0, "0", "N1", "OR"));
}

TEST_F(Cli, ExplicitStageFlags) {
    ASSERT_EQ(sh("gen-graph --family bounded_degree --p 12 --d-max 3 --m 12 --seed 4 --out g.txt"), 0) << log();
    std::istringstream gin(read_file(dir_ / "g.txt"));
    const Graph g = read_graph(gin);
    EXPECT_EQ(g.p(), 12);
    EXPECT_EQ(g.m(), 12u);
    EXPECT_LE(g.max_degree(), 3);

    ASSERT_EQ(sh("sample --graph g.txt --kind potts --k 3 --coupling 0.4 --n 50 --seed 4 --out s.csv"), 0) << log();
    std::istringstream sin(read_file(dir_ / "s.csv"));
    const auto s = read_samples(sin, SampleKind::potts, 3);
    EXPECT_EQ(s.n(), 50);
    EXPECT_EQ(s.p(), 12);
    ASSERT_EQ(sh("fit-neighborhoods --samples s.csv --kind potts --k 3 --lambda1 0.1 --lambda2 0.01 --out e.txt"), 0)
        << log();
    std::istringstream ein(read_file(dir_ / "e.txt"));
    EXPECT_EQ(read_neighborhoods(ein).size(), 12u);
}

TEST_F(Cli, ScoreRulesRespectInclusion) {
    write("g.txt", "4 3\n1 2\n2 3\n3 4\n");
    write("e.txt", "1: 2 4\n2: 1\n3: 2\n4: 3\n");
    ASSERT_EQ(sh("score --graph g.txt --estimates e.txt --out sc.csv"), 0) << log();
    const auto text = read_file(dir_ / "sc.csv");
    EXPECT_EQ(text,
              "rule,type1,type2,total,precision,recall,tp,fp,fn,tn\n"
              "AND,0,0.6666666666666666,0.6666666666666666,1,0.3333333333333333,1,0,2,3\n"
              "OR,0.3333333333333333,0,0.3333333333333333,0.75,1,3,1,0,2\n");
}

TEST_F(Cli, VoteWritesThreeMatrices) {
    ASSERT_EQ(sh("gen-graph --family star --a 1 --b 5 --out g.txt"), 0) << log();
    ASSERT_EQ(sh("sample --graph g.txt --kind gmrf --n 300 --seed 8 --out s.csv"), 0) << log();
    ASSERT_EQ(sh("vote --samples s.csv --out votes"), 0) << log();
    std::map<std::string, VoteMatrix> m;
    for (auto [name, variant] : {std::pair{"L", VoteVariant::L}, {"S", VoteVariant::S}, {"Sbar", VoteVariant::S_bar}}) {
        std::istringstream in(read_file(dir_ / "votes" / (std::string(name) + ".csv")));
        m[name] = read_vote_matrix(in, variant);
        EXPECT_EQ(m[name].p(), 6);
    }
    EXPECT_TRUE(m["S"].counts.isApprox(m["S"].counts.transpose()));
    EXPECT_TRUE(m["Sbar"].counts.isApprox(m["Sbar"].counts.transpose()));
    EXPECT_EQ(m["L"].counts.diagonal().sum(), 0.0);
}

TEST_F(Cli, UsageErrorsExitNonzero) {
    EXPECT_NE(sh(""), 0);
    EXPECT_NE(sh("frobnicate"), 0);
    EXPECT_NE(sh("score --graph nope.txt --estimates nope.txt --out x.csv"), 0);
    write("g.txt", "3 1\n1 2\n");
    write("e.txt", "1: 2\n2: 1\n");
    EXPECT_EQ(sh("score --graph g.txt --estimates e.txt --out x.csv"), 2);
    EXPECT_NE(log().find("disagree on p"), std::string::npos);
}
