// End-to-end checks of the command-line tool: exit codes, file outputs,
// and reproducibility. The binary path comes from the build system.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mergesim/dataio.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MERGESIM_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += (c == '\n');
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mergesim_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path event_file(unsigned seed = 1) {
    const fs::path p = dir_ / "ev.event.json";
    mergesim::save_event(mergesim::generate_synthetic_event(mergesim::ScenarioSpec{}, seed),
                         p);
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SimulateWritesWindowSteps) {
  const fs::path ev = event_file();
  const fs::path out = dir_ / "sim.csv";
  ASSERT_EQ(run_cli("simulate " + ev.string() + " --model MR_IDM --out " + out.string()), 0);

  const mergesim::MergeEvent event = mergesim::load_event(ev);
  mergesim::SimConfig cfg;
  cfg.model = mergesim::ModelKind::MR_IDM;
  const mergesim::SimResult res = mergesim::simulate_event(event, cfg);

  const std::string csv = slurp(out);
  EXPECT_EQ(count_lines(csv), res.times.size() + 1);  // header + rows
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "time,speed_sim,speed_raw,accel,state,fallback");

  // explicit 4 s window: 41 steps at 10 Hz
  const fs::path win = dir_ / "win.csv";
  ASSERT_EQ(run_cli("simulate " + ev.string() + " --window 2 6 --out " + win.string()), 0);
  EXPECT_EQ(count_lines(slurp(win)), 42u);
}

TEST_F(CliTest, SimulateMissingFileExits2) {
  EXPECT_EQ(run_cli("simulate /nonexistent.event.json --out " +
                    (dir_ / "x.csv").string()),
            2);
}

TEST_F(CliTest, SimulateAcceptsParamOverrides) {
  const fs::path ev = event_file();
  const fs::path params = dir_ / "params.json";
  std::ofstream(params) << R"({"zeta": 0.5, "T": 1.2})";
  const fs::path out_a = dir_ / "a.csv";
  const fs::path out_b = dir_ / "b.csv";
  ASSERT_EQ(run_cli("simulate " + ev.string() + " --model MR_IDM --params " +
                    params.string() + " --out " + out_a.string()),
            0);
  ASSERT_EQ(run_cli("simulate " + ev.string() + " --model MR_IDM --out " + out_b.string()),
            0);
  EXPECT_NE(slurp(out_a), slurp(out_b));  // overrides change the rollout

  const fs::path bad = dir_ / "bad.json";
  std::ofstream(bad) << "{not json";
  EXPECT_EQ(run_cli("simulate " + ev.string() + " --params " + bad.string() + " --out " +
                    (dir_ / "c.csv").string()),
            2);
}

TEST_F(CliTest, FitEmptyCorpusExits2) {
  const fs::path empty = dir_ / "empty";
  fs::create_directories(empty);
  EXPECT_EQ(run_cli("fit " + empty.string() + " --out " + (dir_ / "f").string()), 2);
}

TEST_F(CliTest, SimulateStrictRejectsInvalidEvent) {
  mergesim::ScenarioSpec bad;
  bad.duration = 8.0;
  bad.ma->merge_start = 3.0;
  bad.ma->merge_duration = 2.0;
  const fs::path p = dir_ / "bad.event.json";
  mergesim::save_event(mergesim::generate_synthetic_event(bad, 3), p);
  EXPECT_EQ(run_cli("simulate " + p.string() + " --strict --out " +
                    (dir_ / "x.csv").string()),
            4);
  // without --strict the same event still simulates
  EXPECT_EQ(run_cli("simulate " + p.string() + " --out " + (dir_ / "y.csv").string()), 0);
}

TEST_F(CliTest, GenerateCountManifestAndDeterminism) {
  const fs::path out_a = dir_ / "corpus_a";
  const fs::path out_b = dir_ / "corpus_b";
  ASSERT_EQ(run_cli("generate --n 3 --seed 9 --out " + out_a.string()), 0);
  ASSERT_EQ(run_cli("generate --n 3 --seed 9 --out " + out_b.string()), 0);

  int event_files = 0;
  for (const auto& e : fs::directory_iterator(out_a))
    event_files += e.path().string().ends_with(".event.json");
  EXPECT_EQ(event_files, 3);
  EXPECT_TRUE(fs::exists(out_a / "manifest.json"));

  for (const auto& e : fs::directory_iterator(out_a)) {
    const fs::path other = out_b / e.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path();
  }

  // generated merge events all pass the validity filters
  const auto corpus = mergesim::load_corpus(out_a);
  const auto filtered = mergesim::filter_corpus(corpus.events);
  EXPECT_EQ(filtered.valid.size(), corpus.events.size());
}

TEST_F(CliTest, GenerateBadSpecExits2) {
  const fs::path spec = dir_ / "spec.json";
  std::ofstream(spec) << R"({"duration": 0.1})";
  EXPECT_EQ(run_cli("generate --spec " + spec.string() + " --out " +
                    (dir_ / "c").string()),
            2);
}

TEST_F(CliTest, GenerateFromScenarioFile) {
  const fs::path spec = dir_ / "cf.json";
  std::ofstream(spec) << R"({"event_id": "cf", "ma": null, "duration": 15.0})";
  const fs::path out = dir_ / "cf_corpus";
  ASSERT_EQ(run_cli("generate --spec " + spec.string() + " --n 2 --out " + out.string()), 0);

  const auto corpus = mergesim::load_corpus(out);
  ASSERT_EQ(corpus.events.size(), 2u);
  // car-following-only scenario: every event trips the missing-MA filter
  const auto filtered = mergesim::filter_corpus(corpus.events);
  EXPECT_TRUE(filtered.valid.empty());
  EXPECT_EQ(filtered.tallies.at("missing_actor"), 2);
}

TEST_F(CliTest, FilterEmitsTallies) {
  const fs::path corpus = dir_ / "corpus";
  fs::create_directories(corpus);
  mergesim::save_event(mergesim::generate_synthetic_event(mergesim::ScenarioSpec{}, 1),
                       corpus / "good.event.json");
  mergesim::ScenarioSpec no_ma;
  no_ma.event_id = "noma";
  no_ma.ma.reset();
  mergesim::save_event(mergesim::generate_synthetic_event(no_ma, 2),
                       corpus / "noma.event.json");

  const fs::path report = dir_ / "report.json";
  ASSERT_EQ(run_cli("filter " + corpus.string() + " --out " + report.string()), 0);
  const auto j = nlohmann::json::parse(slurp(report));
  EXPECT_EQ(j.at("valid").size(), 1u);
  EXPECT_EQ(j.at("rejected").size(), 1u);
  EXPECT_EQ(j.at("tallies").at("missing_actor"), 1);
}

TEST_F(CliTest, FitWritesResultsAndIsSeedStable) {
  const fs::path corpus = dir_ / "corpus";
  ASSERT_EQ(run_cli("generate --n 2 --seed 4 --out " + corpus.string()), 0);

  const fs::path out_a = dir_ / "fit_a";
  const fs::path out_b = dir_ / "fit_b";
  const std::string common = "fit " + corpus.string() + " --models IDM,MR_IDM --seed 7 ";
  ASSERT_EQ(run_cli(common + "--jobs 1 --out " + out_a.string()), 0);
  ASSERT_EQ(run_cli(common + "--jobs 4 --out " + out_b.string()), 0);

  const std::string fits_a = slurp(out_a / "fits.csv");
  EXPECT_EQ(count_lines(fits_a), 2u * 2u + 1u);  // 2 events x 2 models + header
  EXPECT_EQ(count_lines(slurp(out_a / "summary.csv")), 2u + 1u);
  EXPECT_EQ(fits_a, slurp(out_b / "fits.csv"));  // byte-identical across job counts
  EXPECT_EQ(slurp(out_a / "summary.json"), slurp(out_b / "summary.json"));
}

TEST_F(CliTest, ReportSummarizesFitsCsv) {
  const fs::path fits = dir_ / "fits.csv";
  std::ofstream(fits) << "event_id,model,cost,iterations,converged,restarts,params\n"
                         "e0,IDM,0.1,10,1,1,v0=25\n"
                         "e1,IDM,0.3,10,1,1,v0=25\n"
                         "e0,MR_IDM,0.05,10,1,1,v0=25\n";
  const fs::path out = dir_ / "rep";
  ASSERT_EQ(run_cli("report " + fits.string() + " --out " + out.string()), 0);
  const std::string rep = slurp(out / "report.csv");
  EXPECT_EQ(count_lines(rep), 3u);  // header + 2 models
  EXPECT_NE(rep.find("IDM,2,0.2"), std::string::npos);
}

TEST_F(CliTest, ReportMissingFileExits2) {
  EXPECT_EQ(run_cli("report /nonexistent.csv --out " + (dir_ / "r").string()), 2);
}
