#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "lact/error.hpp"
#include "lact/search.hpp"
#include "support.hpp"

using namespace lact;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lact_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

SuiteSpec tiny_suite() {
  SuiteSpec s;
  s.side = 40;
  s.count = 4;
  s.seed = 3;
  return s;
}

SearchSpace tiny_space() {
  SearchSpace space;
  space.n_iters = {5, 8};
  space.patch_sizes = {12};
  return space;
}

AutoencoderTraining quick_training() {
  AutoencoderTraining t;
  t.epochs = 2;
  return t;
}

}  // namespace

TEST_CASE("samples are valid and cover the space") {
  SearchSpace space;
  Rng rng(1);
  std::size_t dip = 0, no_alpha = 0, no_tv = 0, no_psr = 0;
  for (int i = 0; i < 400; ++i) {
    auto c = space.sample(rng);
    CHECK_NOTHROW(c.validate());
    CHECK(c.alpha >= 0.0);
    CHECK(c.alpha <= 8.0);
    CHECK((c.lambda_tv == 0.0 || (c.lambda_tv >= 1e-3 && c.lambda_tv <= 1.0)));
    CHECK((c.lambda_psr == 0.0 || (c.lambda_psr >= 1e-2 && c.lambda_psr <= 1.0)));
    CHECK((c.patch_size == 20 || c.patch_size == 30 || c.patch_size == 40));
    CHECK(c.lr >= 1e-4);
    CHECK(c.lr <= 0.5);
    CHECK((c.n_iter == 300 || c.n_iter == 400 || c.n_iter == 800 || c.n_iter == 1200));
    dip += c.use_dip;
    no_alpha += c.alpha == 0.0;
    no_tv += c.lambda_tv == 0.0;
    no_psr += c.lambda_psr == 0.0;
  }
  CHECK(dip > 150);
  CHECK(dip < 250);
  for (auto n : {no_alpha, no_tv, no_psr}) {
    CHECK(n > 60);
    CHECK(n < 140);
  }
  Rng a(9), b(9);
  CHECK(space.sample(a).lr == space.sample(b).lr);
}

TEST_CASE("suite generation") {
  auto suite = make_suite(tiny_suite());
  CHECK(suite.cases.size() == 4);
  CHECK(suite.cases[0].sinogram.geometry.n_angles() == 61);
  CHECK(suite.mask.rows == 40);
  CHECK(make_suite(tiny_suite()).cases[2].sinogram.values == suite.cases[2].sinogram.values);
  CHECK_FALSE(suite.cases[0].truth == suite.cases[1].truth);
}

TEST_CASE("one trial totals its per-image scores and counts runs") {
  auto suite = make_suite(tiny_suite());
  ModelProvider models(40, 0, quick_training());
  std::atomic<std::size_t> runs{0};
  auto recs = hparam_search(tiny_space(), suite, {1, 5, 1}, models, &runs);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].per_image.size() == 4);
  double s = 0;
  for (double v : recs[0].per_image) s += v;
  CHECK(recs[0].total == s);
  CHECK(runs == 4);

  runs = 0;
  auto many = hparam_search(tiny_space(), suite, {6, 5, 1}, models, &runs);
  CHECK(runs == 24);
  for (std::size_t i = 1; i < many.size(); ++i) CHECK(many[i - 1].total >= many[i].total);
  CHECK_THROWS_AS(hparam_search(tiny_space(), suite, {0, 5, 1}, models), ValueError);
}

TEST_CASE("parallel and serial runs write identical tables") {
  TempDir dir("search");
  auto suite = make_suite(tiny_suite());
  ModelProvider m1(40, 0, quick_training()), m2(40, 0, quick_training());
  auto serial = hparam_search(tiny_space(), suite, {5, 11, 1}, m1);
  auto parallel = hparam_search(tiny_space(), suite, {5, 11, 3}, m2);
  write_trials_csv(dir / "a.csv", serial);
  write_trials_csv(dir / "b.csv", parallel);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

  auto back = read_trials_csv(dir / "a.csv");
  REQUIRE(back.size() == serial.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].index == serial[i].index);
    CHECK(back[i].total == serial[i].total);
    CHECK(back[i].config.lr == serial[i].config.lr);
    CHECK(back[i].config.seed == serial[i].config.seed);
    CHECK(back[i].per_image == serial[i].per_image);
  }
}

TEST_CASE("failing trials score the minimum and the search continues") {
  auto suite = make_suite(tiny_suite());
  ModelProvider models(40, 0, quick_training());
  SearchSpace space = tiny_space();
  space.patch_sizes = {64};  // larger than the images
  space.psr_zero_probability = 0.0;
  auto recs = hparam_search(space, suite, {3, 2, 1}, models);
  REQUIRE(recs.size() == 3);
  for (const auto& r : recs) {
    CHECK(r.total == -4.0);
    CHECK_FALSE(r.error.empty());
  }
  CHECK(recs[0].index == 0);  // ties keep trial order
}

TEST_CASE("rigged space ranks the converged trial first") {
  auto suite = make_suite(tiny_suite());
  ModelProvider models(40, 0, quick_training());
  SearchSpace space;
  space.dip_probability = 0.0;
  space.alpha_zero_probability = space.tv_zero_probability = space.psr_zero_probability = 1.0;
  space.lr_min = space.lr_max = 0.2;
  space.n_iters = {1, 200};
  auto recs = hparam_search(space, suite, {6, 4, 2}, models);
  REQUIRE(recs.size() == 6);
  bool seen_short = false, seen_long = false;
  for (const auto& r : recs) (r.config.n_iter == 1 ? seen_short : seen_long) = true;
  REQUIRE(seen_short);
  REQUIRE(seen_long);
  CHECK(recs.front().config.n_iter == 200);
  CHECK(recs.back().config.n_iter == 1);
}

TEST_CASE("ablation rows") {
  auto preset = table1_configs();
  REQUIRE(preset.size() == 5);
  CHECK(preset[1].name == "No Filter");
  CHECK(preset[1].config.alpha == 0.0);
  CHECK(preset[4].config.alpha == 6.0);

  auto suite = make_suite(tiny_suite());
  ModelProvider models(40, 0, quick_training());
  std::vector<NamedConfig> rows;
  for (const auto& name : ablation_row_names()) {
    ReconConfig c;
    c.use_dip = false;
    c.alpha = 2.0;
    c.lambda_tv = 0.01;
    c.lambda_psr = 0.1;
    c.patch_size = 12;
    c.lr = 0.1;
    c.n_iter = 3;
    rows.push_back({name, c});
  }
  rows[4].config.use_dip = true;
  rows[4].config.dip.channels = 4;
  auto out = ablate(rows, suite, models);
  REQUIRE(out.size() == 5);
  CHECK(out[0].config.use_dip == false);
  CHECK(out[1].config.alpha == 0.0);
  CHECK(out[2].config.lambda_tv == 0.0);
  CHECK(out[3].config.lambda_psr == 0.0);
  CHECK(out[4].config.alpha == rows[4].config.alpha);
  CHECK(out[4].config.lambda_psr == rows[4].config.lambda_psr);
  CHECK(out[4].config.use_dip);
  for (const auto& r : out) {
    double s = 0;
    for (double v : r.per_image) s += v;
    CHECK(r.mcc == s);
  }
  const std::string table = format_ablation_table(out);
  CHECK(table.find("No PSR,False,2,0.01,0,-,0.1,3,") != std::string::npos);
  CHECK(table.find("No Filter,False,0,0.01,0.1,12,") != std::string::npos);

  auto missing = rows;
  missing.erase(missing.begin() + 2);
  CHECK_THROWS_AS(ablate(missing, suite, models), ValueError);
  auto unknown = rows;
  unknown.push_back({"No Mask", rows[0].config});
  CHECK_THROWS_AS(ablate(unknown, suite, models), ValueError);
}

TEST_CASE("ablation rows chosen from trials") {
  auto make = [](std::size_t idx, double total, bool dip, double a, double tv, double psr) {
    TrialRecord r;
    r.index = idx;
    r.total = total;
    r.config.use_dip = dip;
    r.config.alpha = a;
    r.config.lambda_tv = tv;
    r.config.lambda_psr = psr;
    return r;
  };
  std::vector<TrialRecord> recs{make(0, 3.0, false, 1, 0.1, 0.1), make(1, 3.5, true, 0, 0.1, 0.1),
                                make(2, 3.2, true, 1, 0, 0.1), make(3, 3.1, true, 1, 0.1, 0),
                                make(4, 3.3, true, 1, 0.1, 0.1), make(5, 3.9, true, 1, 0.1, 0.1)};
  recs[5].error = "boom";
  auto sel = select_ablation_configs(recs);
  REQUIRE(sel.size() == 5);
  CHECK(sel[0].name == "No DIP");
  CHECK_FALSE(sel[0].config.use_dip);
  CHECK(sel[1].config.alpha == 0.0);
  CHECK(sel[4].name == "Full");
  CHECK(sel[4].config.alpha == 1.0);  // the failed trial 5 is skipped
  recs.erase(recs.begin());
  CHECK_THROWS_AS(select_ablation_configs(recs), ValueError);
}

TEST_CASE("worker resolution honors LACT_THREADS") {
  ::setenv("LACT_THREADS", "2", 1);
  CHECK(resolve_workers(8) == 2);
  CHECK(resolve_workers(1) == 1);
  ::setenv("LACT_THREADS", "0", 1);
  CHECK(resolve_workers(5) == 5);
  ::unsetenv("LACT_THREADS");
  CHECK(resolve_workers(0) >= 1);
}

TEST_CASE("model cache round trip") {
  TempDir dir("cache");
  ModelProvider a(40, 4, quick_training(), dir.path.string());
  const auto& m = a.get(12);
  CHECK(m.patch_size() == 12);
  CHECK(&a.get(12) == &m);
  std::size_t files = 0;
  for (auto& e : fs::directory_iterator(dir.path)) files += e.path().extension() == ".bin";
  CHECK(files == 1);
  ModelProvider b(40, 4, quick_training(), dir.path.string());
  CHECK(testing::vec(b.get(12).parameters()[0].value) == testing::vec(m.parameters()[0].value));
}

#ifdef LACT_CLI_PATH
TEST_CASE("cli exit codes and score output") {
  TempDir dir("cli");
  const std::string cli = LACT_CLI_PATH;
  {
    std::ofstream(dir / "a.csv") << "1,0\n0,1\n";
  }
  const std::string out = dir / "score.txt";
  CHECK(std::system((cli + " score --pred " + (dir / "a.csv") + " --truth " + (dir / "a.csv") + " > " + out).c_str()) ==
        0);
  CHECK(slurp(out) == "1.0\n");
  auto code = [](const std::string& cmd) { return WEXITSTATUS(std::system((cmd + " 2>/dev/null").c_str())); };
  CHECK(code(cli + " score --pred " + (dir / "a.csv")) == 2);
  CHECK(code(cli + " bogus") == 2);
  CHECK(code(cli + " reconstruct --sino x.csv --out y.csv --lr -1") == 2);
  CHECK(code(cli + " score --pred " + (dir / "missing.csv") + " --truth " + (dir / "a.csv")) == 1);
}

TEST_CASE("cli artifacts round trip") {
  TempDir dir("cli_rt");
  const std::string cli = LACT_CLI_PATH;
  auto run = [&](const std::string& args) { return std::system((cli + " " + args + " > /dev/null").c_str()); };
  REQUIRE(run("generate-phantoms --count 2 --side 32 --seed 3 --pgm --out-dir " + (dir / "ph")) == 0);
  CHECK(fs::exists(dir / "ph/manifest.json"));
  CHECK(fs::exists(dir / "ph/phantom_001.pgm"));
  REQUIRE(run("simulate --image " + (dir / "ph/phantom_000.csv") + " --noise 0.01 --seed 2 --out " +
              (dir / "s.csv")) == 0);
  CHECK(fs::exists(dir / "s.meta"));
  REQUIRE(run("fbp --sino " + (dir / "s.csv") + " --disk-mask --out " + (dir / "f.pgm")) == 0);
  REQUIRE(run("train-ae --side 32 --generate 2 --patch-size 16 --epochs 1 --seed 1 --out " + (dir / "ae.bin")) == 0);
  REQUIRE(run("reconstruct --sino " + (dir / "s.csv") + " --dip --alpha 6 --lambda-tv 0.01 --lambda-psr 0.2 " +
              "--patch-size 16 --lr 0.001 --n-iter 3 --disk-mask --ae-model " + (dir / "ae.bin") + " --out " +
              (dir / "r.csv") + " --binary-out " + (dir / "r_bin.pgm")) == 0);
  CHECK(fs::exists(dir / "r.manifest.json"));
  REQUIRE(run("score --pred " + (dir / "r_bin.pgm") + " " + (dir / "f.pgm") + " --truth " +
              (dir / "ph/phantom_000.csv") + " " + (dir / "ph/phantom_000.csv")) == 0);
}
#endif
