// Command-line front end: phantoms, scans, priors, reconstructions, scoring,
// random search and ablation. Exit 2 on usage errors, 1 on runtime failures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lact/error.hpp"
#include "lact/io.hpp"
#include "lact/metrics.hpp"
#include "lact/phantom.hpp"
#include "lact/reconstruct.hpp"
#include "lact/search.hpp"

#ifndef LACT_VERSION
#define LACT_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace lact;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

std::string manifest_for(const std::string& out) {
  fs::path p(out);
  if (fs::is_directory(p)) return (p / "manifest.json").string();
  return (p.parent_path() / (p.stem().string() + ".manifest.json")).string();
}

void write_manifest(const std::string& out, const std::string& command, json body) {
  json m;
  m["command"] = command;
  m["version"] = LACT_VERSION;
  m["config"] = std::move(body);
  std::ofstream f(manifest_for(out), std::ios::binary);
  if (!f) throw Error("cannot write manifest for " + out);
  f << m.dump(2) << '\n';
}

std::string show(double v) {
  std::string s = io::format_double(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void ensure_parent(const std::string& path) {
  auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

json config_json(const ReconConfig& c) {
  return {{"use_dip", c.use_dip},         {"alpha", c.alpha},     {"lambda_tv", c.lambda_tv},
          {"lambda_psr", c.lambda_psr},   {"patch_size", c.patch_size}, {"lr", c.lr},
          {"n_iter", c.n_iter},           {"seed", c.seed},       {"offset_lr_scale", c.offset_lr_scale},
          {"ae_model", c.ae_model_path}};
}

struct SuiteFlags {
  std::size_t count = 4;
  std::size_t side = 128;
  double arc = 30.0;
  double step = 0.5;
  double noise = 0.01;
  std::uint64_t data_seed = 0;
  std::vector<std::string> sinos, truths;
  std::string ae_dir;
  std::size_t ae_epochs = 100;
  std::uint64_t ae_seed = 0;
  std::size_t workers = 0;

  void add(CLI::App* app) {
    app->add_option("--count", count, "generated phantoms in the suite")->check(CLI::PositiveNumber);
    app->add_option("--side", side, "image side of generated phantoms")->check(CLI::Range(16, 4096));
    app->add_option("--arc", arc, "scan arc in degrees")->check(CLI::Range(0.5, 179.5));
    app->add_option("--angle-step", step, "angle step in degrees")->check(CLI::PositiveNumber);
    app->add_option("--noise", noise, "relative noise sigma")->check(CLI::NonNegativeNumber);
    app->add_option("--data-seed", data_seed, "seed of the generated suite");
    app->add_option("--sino", sinos, "external sinogram CSVs (replace the generated suite)");
    app->add_option("--truth", truths, "ground-truth images matching --sino");
    app->add_option("--ae-dir", ae_dir, "cache directory for trained autoencoders");
    app->add_option("--ae-epochs", ae_epochs, "autoencoder training epochs")->check(CLI::PositiveNumber);
    app->add_option("--ae-seed", ae_seed, "seed for autoencoder training data and weights");
    app->add_option("--workers", workers, "parallel trials (0 = auto, capped by LACT_THREADS)");
  }

  void check() const {
    require(sinos.size() == truths.size(), "--sino and --truth need the same number of files");
  }

  EvalSuite suite() const {
    if (!sinos.empty()) {
      EvalSuite s;
      for (std::size_t i = 0; i < sinos.size(); ++i)
        s.cases.push_back({io::read_sinogram(sinos[i]), io::read_image(truths[i])});
      s.mask = disk_mask(s.cases.front().truth.rows);
      return s;
    }
    SuiteSpec spec;
    spec.count = count;
    spec.side = side;
    spec.arc_deg = arc;
    spec.angle_step_deg = step;
    spec.noise_sigma = noise;
    spec.seed = data_seed;
    return make_suite(spec);
  }

  std::size_t model_side(const EvalSuite& s) const { return s.cases.front().truth.rows; }

  json to_json() const {
    return {{"count", count},   {"side", side},         {"arc_deg", arc},         {"angle_step_deg", step},
            {"noise", noise},   {"data_seed", data_seed}, {"sino", sinos},        {"truth", truths},
            {"ae_epochs", ae_epochs}, {"ae_seed", ae_seed}};
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limited-angle CT reconstruction toolkit"};
  app.set_version_flag("--version", LACT_VERSION);
  app.require_subcommand(1);

  // generate-phantoms
  auto* gen = app.add_subcommand("generate-phantoms", "write random disk phantoms");
  std::size_t gen_count = 4;
  PhantomSpec gen_spec;
  std::string gen_dir;
  std::uint64_t gen_seed = 0;
  bool gen_pgm = false;
  gen->add_option("--count", gen_count)->check(CLI::PositiveNumber);
  gen->add_option("--side", gen_spec.side)->check(CLI::Range(8, 4096));
  gen->add_option("--min-holes", gen_spec.min_holes);
  gen->add_option("--max-holes", gen_spec.max_holes);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out-dir", gen_dir)->required();
  gen->add_flag("--pgm", gen_pgm, "also write PGM previews");

  // simulate
  auto* sim = app.add_subcommand("simulate", "forward-project an image into a noisy sinogram");
  std::string sim_in, sim_out;
  ScanSpec scan;
  sim->add_option("--image", sim_in)->required();
  sim->add_option("--out", sim_out)->required();
  sim->add_option("--arc", scan.arc_deg)->check(CLI::Range(0.5, 179.5));
  sim->add_option("--angle-step", scan.angle_step_deg)->check(CLI::PositiveNumber);
  sim->add_option("--start-angle", scan.start_angle_deg);
  sim->add_option("--noise", scan.noise_sigma)->check(CLI::NonNegativeNumber);
  sim->add_option("--detector-bins", scan.detector_bins);
  sim->add_option("--seed", scan.seed);

  // train-ae
  auto* tae = app.add_subcommand("train-ae", "train the patch autoencoder prior");
  std::vector<std::string> tae_images;
  std::size_t tae_generate = 8, tae_side = 128, tae_patch = 40;
  std::uint64_t tae_seed = 0;
  AutoencoderTraining tae_opts;
  std::string tae_out;
  tae->add_option("--images", tae_images, "training images (default: generated phantoms)");
  tae->add_option("--generate", tae_generate, "phantoms to generate when --images is absent")->check(CLI::PositiveNumber);
  tae->add_option("--side", tae_side)->check(CLI::Range(8, 4096));
  tae->add_option("--patch-size", tae_patch)->check(CLI::Range(8, 4096));
  tae->add_option("--epochs", tae_opts.epochs)->check(CLI::PositiveNumber);
  tae->add_option("--batch-size", tae_opts.batch_size)->check(CLI::PositiveNumber);
  tae->add_option("--lr", tae_opts.lr)->check(CLI::PositiveNumber);
  tae->add_option("--seed", tae_seed);
  tae->add_option("--out", tae_out)->required();

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "gradient-based reconstruction of one sinogram");
  std::string rec_sino, rec_out, rec_binary, rec_mask, rec_loss;
  bool rec_disk = false;
  ReconConfig rc;
  rec->add_option("--sino", rec_sino)->required();
  rec->add_option("--out", rec_out, "continuous image (.csv or .pgm)")->required();
  rec->add_option("--binary-out", rec_binary, "Otsu-binarized image");
  rec->add_option("--loss-out", rec_loss, "per-iteration loss CSV");
  rec->add_flag("--dip", rc.use_dip, "parameterize the image with the deep image prior");
  rec->add_option("--alpha", rc.alpha)->check(CLI::NonNegativeNumber);
  rec->add_option("--lambda-tv", rc.lambda_tv)->check(CLI::NonNegativeNumber);
  rec->add_option("--lambda-psr", rc.lambda_psr)->check(CLI::NonNegativeNumber);
  rec->add_option("--patch-size", rc.patch_size)->check(CLI::PositiveNumber);
  rec->add_option("--lr", rc.lr)->check(CLI::PositiveNumber);
  rec->add_option("--n-iter", rc.n_iter)->check(CLI::PositiveNumber);
  rec->add_option("--seed", rc.seed);
  rec->add_option("--ae-model", rc.ae_model_path);
  auto* mask_opt = rec->add_option("--mask", rec_mask, "support mask image");
  rec->add_flag("--disk-mask", rec_disk, "use the default disk support mask")->excludes(mask_opt);

  // fbp
  auto* fbp = app.add_subcommand("fbp", "filtered back projection with Otsu thresholding");
  std::string fbp_sino, fbp_out, fbp_mask;
  double fbp_alpha = 0.0;
  bool fbp_disk = false, fbp_raw = false;
  fbp->add_option("--sino", fbp_sino)->required();
  fbp->add_option("--out", fbp_out)->required();
  fbp->add_option("--alpha", fbp_alpha)->check(CLI::NonNegativeNumber);
  auto* fbp_mask_opt = fbp->add_option("--mask", fbp_mask);
  fbp->add_flag("--disk-mask", fbp_disk)->excludes(fbp_mask_opt);
  fbp->add_flag("--raw", fbp_raw, "write the unthresholded reconstruction");

  // score
  auto* score = app.add_subcommand("score", "Matthews correlation of binary images");
  std::vector<std::string> sc_pred, sc_truth;
  score->add_option("--pred", sc_pred)->required();
  score->add_option("--truth", sc_truth)->required();

  // hparam-search
  auto* hs = app.add_subcommand("hparam-search", "random hyperparameter search on a 30 degree suite");
  std::size_t hs_trials = 10;
  std::uint64_t hs_seed = 0;
  std::string hs_out;
  std::vector<std::size_t> hs_iters;
  std::size_t hs_top = 3;
  SuiteFlags hs_suite;
  hs->add_option("--trials", hs_trials)->check(CLI::PositiveNumber);
  hs->add_option("--seed", hs_seed);
  hs->add_option("--out", hs_out, "ranked trial CSV")->required();
  hs->add_option("--n-iter-choices", hs_iters, "override the iteration-count choices");
  hs->add_option("--top", hs_top, "configs to report");
  hs_suite.add(hs);

  // ablate
  auto* ab = app.add_subcommand("ablate", "evaluate the five ablation rows");
  std::string ab_trials, ab_out;
  bool ab_preset = false;
  SuiteFlags ab_suite;
  auto* ab_trials_opt = ab->add_option("--trials-csv", ab_trials, "pick rows from a search result");
  ab->add_flag("--preset", ab_preset, "use the reference hyperparameter rows")->excludes(ab_trials_opt);
  ab->add_option("--out", ab_out, "table CSV")->required();
  ab_suite.add(ab);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      require(gen_spec.min_holes <= gen_spec.max_holes, "--min-holes exceeds --max-holes");
      fs::create_directories(gen_dir);
      json files = json::array();
      for (std::size_t i = 0; i < gen_count; ++i) {
        PhantomSpec s = gen_spec;
        s.seed = derive_seed(gen_seed, i);
        Image img = generate_phantom(s);
        char name[32];
        std::snprintf(name, sizeof name, "phantom_%03zu", i);
        auto base = fs::path(gen_dir) / name;
        io::write_matrix_csv(base.string() + ".csv", img);
        if (gen_pgm) io::write_pgm(base.string() + ".pgm", img);
        files.push_back({{"file", std::string(name) + ".csv"}, {"seed", s.seed}});
      }
      write_manifest(gen_dir, "generate-phantoms",
                     {{"count", gen_count}, {"side", gen_spec.side}, {"min_holes", gen_spec.min_holes},
                      {"max_holes", gen_spec.max_holes}, {"seed", gen_seed}, {"phantoms", files}});
    } else if (*sim) {
      Image img = io::read_image(sim_in);
      ensure_parent(sim_out);
      io::write_sinogram(sim_out, simulate_scan(img, scan));
      write_manifest(sim_out, "simulate",
                     {{"image", sim_in}, {"arc_deg", scan.arc_deg}, {"angle_step_deg", scan.angle_step_deg},
                      {"start_angle_deg", scan.start_angle_deg}, {"noise", scan.noise_sigma},
                      {"detector_bins", scan.detector_bins}, {"seed", scan.seed}});
    } else if (*tae) {
      std::vector<Image> imgs;
      json sources = json::array();
      if (!tae_images.empty()) {
        for (const auto& p : tae_images) imgs.push_back(io::read_image(p));
        sources = tae_images;
      } else {
        for (std::size_t i = 0; i < tae_generate; ++i) {
          PhantomSpec s;
          s.side = tae_side;
          s.seed = derive_seed(tae_seed, 1000 + i);
          imgs.push_back(generate_phantom(s));
          sources.push_back({{"side", tae_side}, {"seed", s.seed}});
        }
      }
      auto trained = train_autoencoder(imgs, tae_patch, derive_seed(tae_seed, tae_patch), tae_opts);
      ensure_parent(tae_out);
      trained.model.save(tae_out);
      std::cout << "final_loss " << io::format_double(trained.final_loss) << "\n";
      write_manifest(tae_out, "train-ae",
                     {{"patch_size", tae_patch}, {"epochs", tae_opts.epochs}, {"batch_size", tae_opts.batch_size},
                      {"lr", tae_opts.lr}, {"seed", tae_seed}, {"training", sources},
                      {"final_loss", trained.final_loss}});
    } else if (*rec) {
      Sinogram sino = io::read_sinogram(rec_sino);
      if (!rec_mask.empty()) rc.mask = io::read_image(rec_mask);
      if (rec_disk) rc.mask = disk_mask(sino.geometry.image_side);
      try {
        rc.validate();
      } catch (const ValueError& e) {
        throw UsageError(e.what());
      }
      require(rc.lambda_psr == 0.0 || !rc.ae_model_path.empty(), "--lambda-psr > 0 needs --ae-model");
      ReconResult r = reconstruct(sino, rc);
      ensure_parent(rec_out);
      io::write_image(rec_out, r.image);
      if (!rec_binary.empty()) io::write_image(rec_binary, binarize(r.image));
      if (!rec_loss.empty()) {
        Matrix trace{r.loss_trace.size(), 1, r.loss_trace};
        io::write_matrix_csv(rec_loss, trace);
      }
      json cfg = config_json(rc);
      cfg["sino"] = rec_sino;
      cfg["mask"] = rec_disk ? json("disk") : json(rec_mask);
      cfg["final_offset"] = {r.offset.dx, r.offset.dy};
      write_manifest(rec_out, "reconstruct", cfg);
    } else if (*fbp) {
      Sinogram sino = io::read_sinogram(fbp_sino);
      std::optional<Image> mask;
      if (!fbp_mask.empty()) mask = io::read_image(fbp_mask);
      if (fbp_disk) mask = disk_mask(sino.geometry.image_side);
      Image out = fbp_raw ? fbp_reconstruct(sino, sino.geometry, fbp_alpha)
                          : fbp_binary(sino, fbp_alpha, mask ? &*mask : nullptr);
      ensure_parent(fbp_out);
      io::write_image(fbp_out, out);
      write_manifest(fbp_out, "fbp",
                     {{"sino", fbp_sino}, {"alpha", fbp_alpha}, {"raw", fbp_raw},
                      {"mask", fbp_disk ? json("disk") : json(fbp_mask)}});
    } else if (*score) {
      require(sc_pred.size() == sc_truth.size(), "--pred and --truth need the same number of files");
      std::vector<Image> preds, truths;
      for (const auto& p : sc_pred) preds.push_back(io::read_image(p));
      for (const auto& p : sc_truth) truths.push_back(io::read_image(p));
      if (preds.size() == 1) {
        std::cout << show(mcc(preds[0], truths[0])) << "\n";
      } else {
        for (std::size_t i = 0; i < preds.size(); ++i)
          std::cout << sc_pred[i] << " " << show(mcc(preds[i], truths[i])) << "\n";
        std::cout << "sum " << show(score_sum(preds, truths)) << "\n";
      }
    } else if (*hs) {
      hs_suite.check();
      for (auto n : hs_iters) require(n > 0, "--n-iter-choices must be positive");
      EvalSuite suite = hs_suite.suite();
      ModelProvider models(hs_suite.model_side(suite), hs_suite.ae_seed, {.epochs = hs_suite.ae_epochs},
                           hs_suite.ae_dir);
      SearchSpace space;
      if (!hs_iters.empty()) space.n_iters = hs_iters;
      SearchOptions opts{hs_trials, hs_seed, resolve_workers(hs_suite.workers)};
      auto records = hparam_search(space, suite, opts, models);
      ensure_parent(hs_out);
      write_trials_csv(hs_out, records);
      fs::path out(hs_out);
      write_timings_csv((out.parent_path() / (out.stem().string() + ".timings.csv")).string(), records);
      for (std::size_t i = 0; i < std::min(hs_top, records.size()); ++i) {
        const auto& r = records[i];
        std::cout << "#" << i + 1 << " trial " << r.index << " total " << show(r.total) << " "
                  << config_json(r.config).dump() << "\n";
      }
      json cfg = hs_suite.to_json();
      cfg["trials"] = hs_trials;
      cfg["seed"] = hs_seed;
      cfg["n_iter_choices"] = space.n_iters;
      write_manifest(hs_out, "hparam-search", cfg);
    } else if (*ab) {
      ab_suite.check();
      require(ab_preset || !ab_trials.empty(), "ablate needs --preset or --trials-csv");
      auto configs = ab_preset ? table1_configs() : select_ablation_configs(read_trials_csv(ab_trials));
      EvalSuite suite = ab_suite.suite();
      ModelProvider models(ab_suite.model_side(suite), ab_suite.ae_seed, {.epochs = ab_suite.ae_epochs},
                           ab_suite.ae_dir);
      auto rows = ablate(configs, suite, models, resolve_workers(ab_suite.workers));
      std::string table = format_ablation_table(rows);
      ensure_parent(ab_out);
      std::ofstream(ab_out, std::ios::binary) << table;
      std::cout << table;
      json cfg = ab_suite.to_json();
      cfg["source"] = ab_preset ? json("preset") : json(ab_trials);
      json rows_json = json::array();
      for (const auto& r : rows) rows_json.push_back({{"name", r.name}, {"config", config_json(r.config)}});
      cfg["rows"] = rows_json;
      write_manifest(ab_out, "ablate", cfg);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
