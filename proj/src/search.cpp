#include "lact/search.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "lact/error.hpp"
#include "lact/io.hpp"
#include "lact/metrics.hpp"
#include "lact/phantom.hpp"

namespace lact {

namespace {

template <class T>
const T& pick(const std::vector<T>& xs, Rng& rng) {
  if (xs.empty()) throw ValueError("search space: empty choice list");
  return xs[rng.uniform_int(0, static_cast<std::int64_t>(xs.size()) - 1)];
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& path, std::size_t line) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path, line, "invalid number '" + s + "'");
  }
}

// Commas would break the table; errors are free text.
std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

ReconConfig SearchSpace::sample(Rng& rng) const {
  ReconConfig cfg;
  // Fixed draw order keeps samples stable when one field's distribution changes shape.
  cfg.use_dip = rng.uniform() < dip_probability;
  double u = rng.uniform();
  double a = rng.uniform(0.0, alpha_max);
  cfg.alpha = u < alpha_zero_probability ? 0.0 : a;
  u = rng.uniform();
  double tv = rng.log_uniform(tv_min, tv_max);
  cfg.lambda_tv = u < tv_zero_probability ? 0.0 : tv;
  u = rng.uniform();
  double psr = rng.log_uniform(psr_min, psr_max);
  cfg.lambda_psr = u < psr_zero_probability ? 0.0 : psr;
  cfg.patch_size = pick(patch_sizes, rng);
  cfg.lr = rng.log_uniform(lr_min, lr_max);
  cfg.n_iter = pick(n_iters, rng);
  cfg.seed = rng.uniform_int(0, std::numeric_limits<std::int64_t>::max());
  cfg.validate();
  return cfg;
}

EvalSuite make_suite(const SuiteSpec& spec) {
  if (spec.count == 0) throw ValueError("suite needs at least one phantom");
  EvalSuite suite;
  suite.mask = disk_mask(spec.side);
  for (std::size_t i = 0; i < spec.count; ++i) {
    PhantomSpec ps;
    ps.side = spec.side;
    ps.min_holes = spec.min_holes;
    ps.max_holes = spec.max_holes;
    ps.seed = derive_seed(spec.seed, 2 * i);
    ScanSpec sc;
    sc.arc_deg = spec.arc_deg;
    sc.angle_step_deg = spec.angle_step_deg;
    sc.noise_sigma = spec.noise_sigma;
    sc.seed = derive_seed(spec.seed, 2 * i + 1);
    Image truth = generate_phantom(ps);
    Sinogram sino = simulate_scan(truth, sc);
    suite.cases.push_back({std::move(sino), std::move(truth)});
  }
  return suite;
}

ModelProvider::ModelProvider(std::size_t side, std::uint64_t seed, AutoencoderTraining training, std::string cache_dir)
    : side_(side), seed_(seed), training_(training), cache_dir_(std::move(cache_dir)) {}

std::vector<Image> ModelProvider::training_images() const {
  std::vector<Image> imgs;
  for (std::size_t i = 0; i < 8; ++i) {
    PhantomSpec ps;
    ps.side = side_;
    ps.seed = derive_seed(seed_, 1000 + i);
    imgs.push_back(generate_phantom(ps));
  }
  return imgs;
}

const PatchAutoencoder& ModelProvider::get(std::size_t patch_size) {
  std::lock_guard lock(mutex_);
  auto it = models_.find(patch_size);
  if (it != models_.end()) return *it->second;

  std::string cached;
  if (!cache_dir_.empty()) {
    std::ostringstream name;
    name << "ae_p" << patch_size << "_n" << side_ << "_e" << training_.epochs << "_s" << seed_ << ".bin";
    cached = (std::filesystem::path(cache_dir_) / name.str()).string();
    if (std::filesystem::exists(cached)) {
      auto m = std::make_unique<PatchAutoencoder>(PatchAutoencoder::load(cached));
      return *models_.emplace(patch_size, std::move(m)).first->second;
    }
  }
  auto trained = train_autoencoder(training_images(), patch_size, derive_seed(seed_, patch_size), training_);
  auto m = std::make_unique<PatchAutoencoder>(std::move(trained.model));
  if (!cached.empty()) {
    std::filesystem::create_directories(cache_dir_);
    m->save(cached);
  }
  return *models_.emplace(patch_size, std::move(m)).first->second;
}

std::vector<double> evaluate_config(const ReconConfig& cfg, const EvalSuite& suite, ModelProvider& models,
                                    std::atomic<std::size_t>* runs) {
  const PatchAutoencoder* model = cfg.lambda_psr > 0.0 ? &models.get(cfg.patch_size) : nullptr;
  std::vector<double> scores;
  for (std::size_t i = 0; i < suite.cases.size(); ++i) {
    ReconConfig c = cfg;
    if (!c.mask) c.mask = suite.mask;
    c.seed = derive_seed(cfg.seed, i);
    if (runs) ++*runs;
    ReconResult r = reconstruct(suite.cases[i].sinogram, c, model);
    scores.push_back(mcc(binarize(r.image), suite.cases[i].truth));
  }
  return scores;
}

std::size_t resolve_workers(std::size_t requested) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LACT_THREADS")) {
    long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, n);
}

namespace {

template <class F>
void parallel_for(std::size_t count, std::size_t workers, F&& body) {
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < count;) body(i);
    });
}

void sort_records(std::vector<TrialRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const TrialRecord& a, const TrialRecord& b) {
    if (a.total != b.total) return a.total > b.total;
    return a.index < b.index;
  });
}

}  // namespace

std::vector<TrialRecord> hparam_search(const SearchSpace& space, const EvalSuite& suite, const SearchOptions& options,
                                       ModelProvider& models, std::atomic<std::size_t>* runs) {
  if (options.trials == 0) throw ValueError("trials must be >= 1");
  Rng rng(options.seed);
  std::vector<TrialRecord> records(options.trials);
  for (std::size_t i = 0; i < options.trials; ++i) {
    records[i].index = i;
    records[i].config = space.sample(rng);
  }
  // Train the priors up front so workers only read them. A prior that cannot
  // be trained fails again inside its trials and is recorded there.
  for (const auto& r : records) {
    if (r.config.lambda_psr <= 0.0) continue;
    try {
      models.get(r.config.patch_size);
    } catch (const std::exception&) {
    }
  }

  parallel_for(records.size(), options.workers, [&](std::size_t i) {
    TrialRecord& rec = records[i];
    auto t0 = std::chrono::steady_clock::now();
    try {
      rec.per_image = evaluate_config(rec.config, suite, models, runs);
    } catch (const std::exception& e) {
      rec.per_image.assign(suite.cases.size(), -1.0);
      rec.error = e.what();
      if (rec.error.empty()) rec.error = "unknown failure";
    }
    rec.total = 0.0;
    for (double v : rec.per_image) rec.total += v;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  sort_records(records);
  return records;
}

void write_trials_csv(const std::string& path, const std::vector<TrialRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  std::size_t cases = records.empty() ? 0 : records.front().per_image.size();
  out << "rank,trial,seed,use_dip,alpha,lambda_tv,lambda_psr,patch_size,lr,n_iter";
  for (std::size_t i = 0; i < cases; ++i) out << ",mcc_" << i;
  out << ",total,error\n";
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    const auto& c = rec.config;
    out << r + 1 << ',' << rec.index << ',' << c.seed << ',' << (c.use_dip ? 1 : 0) << ',' << io::format_double(c.alpha)
        << ',' << io::format_double(c.lambda_tv) << ',' << io::format_double(c.lambda_psr) << ',' << c.patch_size << ','
        << io::format_double(c.lr) << ',' << c.n_iter;
    for (double v : rec.per_image) out << ',' << io::format_double(v);
    out << ',' << io::format_double(rec.total) << ',' << sanitize(rec.error) << '\n';
  }
}

void write_timings_csv(const std::string& path, const std::vector<TrialRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << "trial,wall_seconds\n";
  std::vector<const TrialRecord*> by_index;
  for (const auto& r : records) by_index.push_back(&r);
  std::sort(by_index.begin(), by_index.end(), [](auto* a, auto* b) { return a->index < b->index; });
  for (auto* r : by_index) out << r->index << ',' << io::format_double(r->wall_seconds) << '\n';
}

std::vector<TrialRecord> read_trials_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
  auto header = split_csv_line(line);
  std::size_t cases = 0;
  for (const auto& h : header)
    if (h.rfind("mcc_", 0) == 0) ++cases;
  const std::size_t expected = 10 + cases + 2;
  if (header.size() != expected || header[0] != "rank") throw ParseError(path, 1, "unexpected header");

  std::vector<TrialRecord> out;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != expected) throw ParseError(path, ln, "expected " + std::to_string(expected) + " fields");
    auto num = [&](std::size_t k) { return parse_number(f[k], path, ln); };
    TrialRecord r;
    r.index = static_cast<std::size_t>(num(1));
    try {
      r.config.seed = std::stoull(f[2]);
    } catch (const std::exception&) {
      throw ParseError(path, ln, "invalid seed '" + f[2] + "'");
    }
    r.config.use_dip = num(3) != 0.0;
    r.config.alpha = num(4);
    r.config.lambda_tv = num(5);
    r.config.lambda_psr = num(6);
    r.config.patch_size = static_cast<std::size_t>(num(7));
    r.config.lr = num(8);
    r.config.n_iter = static_cast<std::size_t>(num(9));
    for (std::size_t i = 0; i < cases; ++i) r.per_image.push_back(num(10 + i));
    r.total = num(10 + cases);
    r.error = f[11 + cases];
    out.push_back(std::move(r));
  }
  return out;
}

const std::vector<std::string>& ablation_row_names() {
  static const std::vector<std::string> names{"No DIP", "No Filter", "No TV", "No PSR", "Full"};
  return names;
}

namespace {

ReconConfig make_config(bool dip, double alpha, double tv, double psr, std::size_t p, double lr, std::size_t iters) {
  ReconConfig c;
  c.use_dip = dip;
  c.alpha = alpha;
  c.lambda_tv = tv;
  c.lambda_psr = psr;
  c.patch_size = p;
  c.lr = lr;
  c.n_iter = iters;
  return c;
}

// Switches off the method a row excludes; "Full" is left alone.
void force_exclusion(const std::string& name, ReconConfig& c) {
  if (name == "No DIP") c.use_dip = false;
  else if (name == "No Filter") c.alpha = 0.0;
  else if (name == "No TV") c.lambda_tv = 0.0;
  else if (name == "No PSR") c.lambda_psr = 0.0;
  else if (name != "Full") throw ValueError("unknown ablation row '" + name + "'");
}

bool excludes(const std::string& name, const ReconConfig& c) {
  if (name == "No DIP") return !c.use_dip;
  if (name == "No Filter") return c.alpha == 0.0;
  if (name == "No TV") return c.lambda_tv == 0.0;
  if (name == "No PSR") return c.lambda_psr == 0.0;
  return c.use_dip && c.alpha > 0.0 && c.lambda_tv > 0.0 && c.lambda_psr > 0.0;
}

}  // namespace

std::vector<NamedConfig> table1_configs() {
  return {
      {"No DIP", make_config(false, 5.5, 0.1, 0.1, 30, 0.2, 300)},
      {"No Filter", make_config(true, 0.0, 0.5, 0.1, 30, 0.01, 1200)},
      {"No TV", make_config(true, 5.5, 0.0, 0.2, 20, 0.001, 1200)},
      {"No PSR", make_config(true, 5.0, 0.5, 0.0, 40, 0.001, 1200)},
      {"Full", make_config(true, 6.0, 0.01, 0.2, 40, 0.001, 400)},
  };
}

std::vector<NamedConfig> select_ablation_configs(const std::vector<TrialRecord>& records) {
  std::vector<NamedConfig> out;
  for (const auto& name : ablation_row_names()) {
    const TrialRecord* best = nullptr;
    for (const auto& r : records) {
      if (!r.error.empty() || !excludes(name, r.config)) continue;
      if (!best || r.total > best->total || (r.total == best->total && r.index < best->index)) best = &r;
    }
    if (!best) throw ValueError("no successful trial for ablation row '" + name + "'");
    out.push_back({name, best->config});
  }
  return out;
}

std::vector<AblationRow> ablate(const std::vector<NamedConfig>& configs, const EvalSuite& suite, ModelProvider& models,
                                std::size_t workers) {
  std::vector<AblationRow> rows;
  for (const auto& name : ablation_row_names()) {
    auto it = std::find_if(configs.begin(), configs.end(), [&](const NamedConfig& c) { return c.name == name; });
    if (it == configs.end()) throw ValueError("ablation is missing the '" + name + "' row");
    AblationRow row{name, it->config, {}, 0.0};
    force_exclusion(name, row.config);
    row.config.validate();
    rows.push_back(std::move(row));
  }
  for (const auto& c : configs)
    if (std::find(ablation_row_names().begin(), ablation_row_names().end(), c.name) == ablation_row_names().end())
      throw ValueError("unknown ablation row '" + c.name + "'");

  for (const auto& r : rows)
    if (r.config.lambda_psr > 0.0) models.get(r.config.patch_size);
  parallel_for(rows.size(), workers, [&](std::size_t i) {
    rows[i].per_image = evaluate_config(rows[i].config, suite, models);
    rows[i].mcc = 0.0;
    for (double v : rows[i].per_image) rows[i].mcc += v;
  });
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "name,DIP,alpha,lambda_tv,lambda_psr,patch,lr,n_iter,MCC\n";
  for (const auto& r : rows) {
    const auto& c = r.config;
    out << r.name << ',' << (c.use_dip ? "True" : "False") << ',' << io::format_double(c.alpha) << ','
        << io::format_double(c.lambda_tv) << ',' << io::format_double(c.lambda_psr) << ','
        << (c.lambda_psr > 0.0 ? std::to_string(c.patch_size) : std::string("-")) << ',' << io::format_double(c.lr)
        << ',' << c.n_iter << ',' << io::format_double(r.mcc) << '\n';
  }
  return out.str();
}

}  // namespace lact
