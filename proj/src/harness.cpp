#include "fragflow/harness.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "json.hpp"

namespace fragflow {
namespace harness {

namespace fs = std::filesystem;

Mode mode_from_string(const std::string& s) {
  if (s == "rpf") return Mode::kRpf;
  if (s == "rsf") return Mode::kRsf;
  if (s == "rpf-rs") return Mode::kRpfRs;
  if (s == "rsf-rs") return Mode::kRsfRs;
  if (s == "greedy") return Mode::kGreedy;
  throw ConfigError("unknown mode: " + s);
}

std::string mode_to_string(Mode m) {
  switch (m) {
    case Mode::kRpf: return "rpf";
    case Mode::kRsf: return "rsf";
    case Mode::kRpfRs: return "rpf-rs";
    case Mode::kRsfRs: return "rsf-rs";
    case Mode::kGreedy: return "greedy";
  }
  throw ConfigError("bad mode value");
}

bool mode_uses_synthons(Mode m) { return m == Mode::kRsf || m == Mode::kRsfRs; }

void ExperimentConfig::validate() const {
  if (steps < 1) throw ConfigError("T must be positive");
  if (samples < 1) throw ConfigError("N must be positive");
  if (particles < 1) throw ConfigError("K must be positive");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (centers < 1) throw ConfigError("M must be positive");
  if (dummy_count < 2) throw ConfigError("dummy_count must cover the two leaving groups");
  if (ess_fraction <= 0.0 || ess_fraction > 1.0)
    throw ConfigError("ess_fraction must lie in (0,1]");
  if (ks.empty()) throw ConfigError("ks must be non-empty");
  if (max_products < 0) throw ConfigError("max_products must be >= 0");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (mode_uses_synthons(mode)) {
    if (static_cast<int>(budgets.size()) != centers)
      throw ConfigError("budgets must have one entry per synthon candidate");
    int total = 0;
    for (int b : budgets) {
      if (b < 0) throw ConfigError("budgets must be non-negative");
      total += b;
    }
    if (total != samples) throw ConfigError("budgets must sum to N");
  }
  if (dataset_dir.empty()) throw ConfigError("dataset path missing");
}

namespace {

Stepper stepper_from_string(const std::string& s) {
  if (s == "euler") return Stepper::kEuler;
  if (s == "rk2") return Stepper::kRk2;
  throw ConfigError("unknown stepper: " + s);
}

std::string stepper_to_string(Stepper s) {
  return s == Stepper::kEuler ? "euler" : "rk2";
}

ResampleMode resample_from_string(const std::string& s) {
  if (s == "every-step") return ResampleMode::kEveryStep;
  if (s == "ess-threshold") return ResampleMode::kEssThreshold;
  throw ConfigError("unknown resample mode: " + s);
}

std::string resample_to_string(ResampleMode m) {
  return m == ResampleMode::kEveryStep ? "every-step" : "ess-threshold";
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  static const std::vector<std::string> known = {
      "mode",        "dataset",       "model",         "out_dir",  "seed",
      "T",           "N",             "K",             "lambda",   "M",
      "budgets",     "stepper",       "dummy_count",   "resample", "ess_fraction",
      "ks",          "dump_predictions", "threads",    "max_products"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key: " + key);

  ExperimentConfig c;
  try {
    if (j.contains("mode")) c.mode = mode_from_string(j["mode"].get<std::string>());
    if (j.contains("dataset")) c.dataset_dir = j["dataset"].get<std::string>();
    if (j.contains("model")) c.model_path = j["model"].get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("T")) c.steps = j["T"].get<int>();
    if (j.contains("N")) c.samples = j["N"].get<int>();
    if (j.contains("K")) c.particles = j["K"].get<int>();
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    if (j.contains("M")) c.centers = j["M"].get<int>();
    if (j.contains("budgets")) c.budgets = j["budgets"].get<std::vector<int>>();
    if (j.contains("stepper")) c.stepper = stepper_from_string(j["stepper"].get<std::string>());
    if (j.contains("dummy_count")) c.dummy_count = j["dummy_count"].get<int>();
    if (j.contains("resample")) c.resample_mode = resample_from_string(j["resample"].get<std::string>());
    if (j.contains("ess_fraction")) c.ess_fraction = j["ess_fraction"].get<double>();
    if (j.contains("ks")) c.ks = j["ks"].get<std::vector<int>>();
    if (j.contains("dump_predictions")) c.dump_predictions = j["dump_predictions"].get<bool>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
    if (j.contains("max_products")) c.max_products = j["max_products"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

std::string ExperimentConfig::to_json_text() const {
  nlohmann::json j;
  j["mode"] = mode_to_string(mode);
  j["dataset"] = dataset_dir;
  j["model"] = model_path;
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  j["T"] = steps;
  j["N"] = samples;
  j["K"] = particles;
  j["lambda"] = lambda;
  j["M"] = centers;
  j["budgets"] = budgets;
  j["stepper"] = stepper_to_string(stepper);
  j["dummy_count"] = dummy_count;
  j["resample"] = resample_to_string(resample_mode);
  j["ess_fraction"] = ess_fraction;
  j["ks"] = ks;
  j["dump_predictions"] = dump_predictions;
  j["threads"] = threads;
  j["max_products"] = max_products;
  return j.dump();
}

// ---------------------------------------------------------------------------
// persistence

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

namespace {

std::string reaction_to_json(const retro::Reaction& r) {
  std::ostringstream ss;
  ss << "{\"product\":" << graph_to_json(r.product)
     << ",\"reactants\":" << graph_to_json(r.reactants) << ",\"bridge\":["
     << r.bridge.first << "," << r.bridge.second << "]}";
  return ss.str();
}

retro::Reaction reaction_from_json(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  retro::Reaction r;
  r.product = graph_from_json(j.at("product").dump(), retro::kNodeVocab, retro::kEdgeVocab);
  r.reactants =
      graph_from_json(j.at("reactants").dump(), retro::kNodeVocab, retro::kEdgeVocab);
  r.bridge = {j.at("bridge")[0].get<int>(), j.at("bridge")[1].get<int>()};
  return r;
}

void save_reactions(const std::vector<retro::Reaction>& rs, const std::string& path) {
  std::string out;
  for (const auto& r : rs) {
    out += reaction_to_json(r);
    out += '\n';
  }
  write_text_file(path, out);
}

}  // namespace

void save_dataset(const retro::Dataset& ds, const std::string& dir) {
  save_reactions(ds.train, (fs::path(dir) / "train.jsonl").string());
  save_reactions(ds.valid, (fs::path(dir) / "valid.jsonl").string());
  save_reactions(ds.test, (fs::path(dir) / "test.jsonl").string());
}

std::vector<retro::Reaction> load_reactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<retro::Reaction> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(reaction_from_json(line));
  }
  return out;
}

retro::Dataset load_dataset(const std::string& dir) {
  retro::Dataset ds;
  ds.train = load_reactions((fs::path(dir) / "train.jsonl").string());
  ds.valid = load_reactions((fs::path(dir) / "valid.jsonl").string());
  ds.test = load_reactions((fs::path(dir) / "test.jsonl").string());
  return ds;
}

void save_model(const SavedModel& m, const std::string& path) {
  nlohmann::json j;
  j["meta"] = {{"family", mode_to_string(m.family)}, {"dummy_count", m.dummy_count}};
  j["model"] = nlohmann::json::parse(m.model.to_json());
  write_text_file(path, j.dump());
}

SavedModel load_model(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  SavedModel m{TabularModel::from_json(j.at("model").dump()),
               mode_from_string(j.at("meta").at("family").get<std::string>()),
               j.at("meta").at("dummy_count").get<int>()};
  return m;
}

// ---------------------------------------------------------------------------
// training

namespace {

CouplingPair make_training_pair(const retro::Reaction& rx, Mode family, int dummy_count) {
  CouplingPair pair;
  AttributedGraph product_padded = pad_with_dummies(rx.product, dummy_count);
  AttributedGraph reactants_padded =
      pad_with_dummies(rx.reactants, product_padded.node_count() - rx.reactants.node_count());
  pair.x1 = flatten(reactants_padded);
  if (family == Mode::kRsf) {
    AttributedGraph synthon_padded =
        pad_with_dummies(retro::derive_synthons(rx.product, rx.bridge), dummy_count);
    pair.x0 = flatten(synthon_padded);
    pair.conditioning = {product_padded, synthon_padded};
  } else {
    pair.x0 = flatten(product_padded);
    pair.conditioning = {product_padded};
  }
  return pair;
}

// Shared uniform permutation applied to both endpoints and every conditioning
// graph, so node alignment is preserved.
CouplingPair permute_pair(const CouplingPair& pair, RandomStream& rng) {
  AttributedGraph g0 = unflatten(pair.x0);
  auto [permuted0, perm] = permute_nodes(g0, rng);
  CouplingPair out;
  out.weight = pair.weight;
  out.x0 = flatten(permuted0);
  out.x1 = flatten(apply_permutation(unflatten(pair.x1), perm));
  out.conditioning.reserve(pair.conditioning.size());
  for (const auto& g : pair.conditioning)
    out.conditioning.push_back(apply_permutation(g, perm));
  return out;
}

}  // namespace

SavedModel train_model(const TrainJobConfig& cfg, TrainRecord* record) {
  if (cfg.family != Mode::kRpf && cfg.family != Mode::kRsf)
    throw ConfigError("train family must be rpf or rsf");
  if (cfg.dummy_count < 2) throw ConfigError("dummy_count must be >= 2");
  auto reactions = load_reactions((fs::path(cfg.dataset_dir) / "train.jsonl").string());
  if (reactions.empty()) throw ConfigError("empty training split");

  std::vector<CouplingPair> pairs;
  pairs.reserve(reactions.size());
  for (const auto& rx : reactions)
    pairs.push_back(make_training_pair(rx, cfg.family, cfg.dummy_count));
  CouplingDataset ds(std::move(pairs));

  RandomStream rng(cfg.seed, 0x7261696e);  // train stream
  SampleAugment augment;
  if (cfg.permute_augment) augment = permute_pair;

  SavedModel out{train_tabular(ds, cfg.train, rng, augment, record), cfg.family,
                 cfg.dummy_count};
  if (!cfg.out_path.empty()) save_model(out, cfg.out_path);
  return out;
}

// ---------------------------------------------------------------------------
// evaluation

namespace {

struct ProductResult {
  retro::TopkMetrics metrics;
  std::string prediction_dump;  // one JSONL line when dumps are enabled
};

// Memoized terminal-reward wrapper over the exact oracle; point estimates
// repeat heavily along a trajectory.
struct MemoReward {
  const retro::RewardOracle* oracle;
  std::unordered_map<std::string, double>* memo;

  double operator()(const FlatState& s) const {
    std::string key(reinterpret_cast<const char*>(s.tokens.data()),
                    s.tokens.size() * sizeof(int32_t));
    auto it = memo->find(key);
    if (it != memo->end()) return it->second;
    double r = static_cast<double>((*oracle)(unflatten(s)));
    memo->emplace(std::move(key), r);
    return r;
  }
};

std::vector<AttributedGraph> run_group(const ExperimentConfig& cfg,
                                       const TabularModel& model,
                                       const std::vector<AttributedGraph>& conditioning,
                                       const FlatState& x0, const RewardFn& reward,
                                       RandomStream& product_rng, int slot_begin,
                                       int slot_count) {
  BoundTabularDenoiser den(model, conditioning);
  TimeGrid grid(cfg.steps);
  SourceSampler source = [&x0](RandomStream&) { return x0; };

  SteeringConfig scfg;
  scfg.particles = cfg.particles;
  scfg.lambda = cfg.lambda;
  scfg.resample_mode = cfg.resample_mode;
  scfg.ess_fraction = cfg.ess_fraction;
  scfg.stepper = cfg.stepper;

  std::vector<AttributedGraph> samples;
  samples.reserve(slot_count);
  for (int j = slot_begin; j < slot_begin + slot_count; ++j) {
    RandomStream slot = product_rng.child(static_cast<uint64_t>(j));
    FlatState terminal;
    switch (cfg.mode) {
      case Mode::kRpf:
      case Mode::kRsf: {
        RandomStream traj = slot.child(0);
        terminal = simulate_trajectory(x0, den, grid, cfg.stepper, traj);
        break;
      }
      case Mode::kGreedy:
        terminal = greedy_baseline_run(source, den, reward, grid, cfg.particles, slot,
                                       cfg.stepper);
        break;
      case Mode::kRpfRs:
      case Mode::kRsfRs:
        terminal = smc_run(source, den, reward, grid, scfg, slot).sample;
        break;
    }
    samples.push_back(unflatten(terminal));
  }
  return samples;
}

ProductResult evaluate_product(const ExperimentConfig& cfg, const TabularModel& model,
                               const retro::Reaction& rx, RandomStream product_rng,
                               int product_index) {
  AttributedGraph product_padded = pad_with_dummies(rx.product, cfg.dummy_count);
  retro::RewardOracle oracle(rx.product);
  std::unordered_map<std::string, double> memo;
  RewardFn reward = MemoReward{&oracle, &memo};

  retro::RankedPredictionSet ranked;
  if (mode_uses_synthons(cfg.mode)) {
    auto centers = retro::predict_reaction_centers(rx.product, cfg.centers);
    if (centers.empty()) throw std::runtime_error("product with no reaction center");
    std::vector<int> budgets(cfg.budgets.begin(),
                             cfg.budgets.begin() + std::min(cfg.budgets.size(), centers.size()));
    int assigned = std::accumulate(budgets.begin(), budgets.end(), 0);
    budgets.front() += cfg.samples - assigned;  // fewer centers than M: top candidate absorbs

    std::vector<retro::RankedPredictionSet> groups;
    int offset = 0;
    for (size_t g = 0; g < centers.size() && g < budgets.size(); ++g) {
      AttributedGraph synthon_padded = pad_with_dummies(
          retro::derive_synthons(rx.product, centers[g].first), cfg.dummy_count);
      FlatState x0 = flatten(synthon_padded);
      auto samples = run_group(cfg, model, {product_padded, synthon_padded}, x0, reward,
                               product_rng, offset, budgets[g]);
      groups.push_back(retro::rank_by_frequency(samples));
      offset += budgets[g];
    }
    ranked = retro::merge_synthon_budgets(groups, budgets);
  } else {
    FlatState x0 = flatten(product_padded);
    auto samples = run_group(cfg, model, {product_padded}, x0, reward, product_rng, 0,
                             cfg.samples);
    ranked = retro::rank_by_frequency(samples);
  }

  ProductResult out;
  out.metrics = retro::topk_metrics(ranked, rx, cfg.ks);
  if (cfg.dump_predictions) {
    std::ostringstream ss;
    ss << "{\"product\":" << product_index << ",\"predictions\":[";
    for (size_t i = 0; i < ranked.entries.size(); ++i) {
      if (i) ss << ",";
      ss << "{\"graph\":" << graph_to_json(ranked.entries[i].graph)
         << ",\"score\":" << ranked.entries[i].score << "}";
    }
    ss << "]}";
    out.prediction_dump = ss.str();
  }
  return out;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.model_path.empty()) throw ConfigError("model path missing");
  SavedModel saved = load_model(cfg.model_path);
  const bool want_rsf = mode_uses_synthons(cfg.mode);
  if (want_rsf != (saved.family == Mode::kRsf))
    throw ConfigError("model family does not match mode");

  auto test = load_reactions((fs::path(cfg.dataset_dir) / "test.jsonl").string());
  if (cfg.max_products > 0 && static_cast<int>(test.size()) > cfg.max_products)
    test.resize(cfg.max_products);
  if (test.empty()) throw ConfigError("empty test split");

  auto t0 = std::chrono::steady_clock::now();
  RandomStream run_rng(cfg.seed, 0x6576616c);  // eval stream

  std::vector<ProductResult> results(test.size());
  int threads = cfg.threads > 0 ? cfg.threads
                                : static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  threads = std::min<int>(threads, static_cast<int>(test.size()));

  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&](int w) {
    try {
      for (size_t p = w; p < test.size(); p += threads)
        results[p] = evaluate_product(cfg, saved.model, test[p],
                                      run_rng.child(static_cast<uint64_t>(p)),
                                      static_cast<int>(p));
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  RunReport report;
  report.config = cfg;
  report.ks = cfg.ks;
  report.products = static_cast<int>(test.size());
  report.exact.assign(cfg.ks.size(), 0.0);
  report.round_trip.assign(cfg.ks.size(), 0.0);
  report.coverage.assign(cfg.ks.size(), 0.0);
  for (const auto& r : results)
    for (size_t i = 0; i < cfg.ks.size(); ++i) {
      report.exact[i] += r.metrics.exact[i];
      report.round_trip[i] += r.metrics.round_trip[i];
      report.coverage[i] += r.metrics.coverage[i];
    }
  for (size_t i = 0; i < cfg.ks.size(); ++i) {
    report.exact[i] /= report.products;
    report.round_trip[i] /= report.products;
    report.coverage[i] /= report.products;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!cfg.out_dir.empty()) {
    write_report(report, cfg);
    if (cfg.dump_predictions) {
      std::string dump;
      for (const auto& r : results) {
        dump += r.prediction_dump;
        dump += '\n';
      }
      write_text_file((fs::path(cfg.out_dir) / "predictions.jsonl").string(), dump);
    }
  }
  return report;
}

std::string RunReport::to_json_text() const {
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(config.to_json_text());
  j["products"] = products;
  j["metrics"] = {{"k", ks},
                  {"exact", exact},
                  {"round_trip", round_trip},
                  {"coverage", coverage}};
  return j.dump();
}

std::string RunReport::to_csv_text() const {
  std::ostringstream ss;
  ss << "k,exact,round_trip,coverage\n";
  for (size_t i = 0; i < ks.size(); ++i)
    ss << ks[i] << "," << exact[i] << "," << round_trip[i] << "," << coverage[i] << "\n";
  return ss.str();
}

void write_report(const RunReport& report, const ExperimentConfig& cfg) {
  write_text_file((fs::path(cfg.out_dir) / "report.json").string(),
                  report.to_json_text() + "\n");
  write_text_file((fs::path(cfg.out_dir) / "metrics.csv").string(), report.to_csv_text());
}

std::string run_ablation_suite(const std::string& name, const ExperimentConfig& base,
                               const std::string& rsf_model_path) {
  std::ostringstream csv;
  auto run_row = [&](ExperimentConfig cfg, const std::string& label) {
    cfg.out_dir.clear();
    RunReport r = run_experiment(cfg);
    csv << label;
    for (size_t i = 0; i < r.ks.size(); ++i)
      csv << "," << r.exact[i] << "," << r.round_trip[i] << "," << r.coverage[i];
    csv << "\n";
  };
  auto header = [&](const std::string& key) {
    csv << key;
    for (int k : base.ks)
      csv << ",exact@" << k << ",round_trip@" << k << ",coverage@" << k;
    csv << "\n";
  };

  if (name == "particles") {
    header("K");
    for (int k : {1, 2, 4, 6, 8}) {
      ExperimentConfig cfg = base;
      cfg.mode = Mode::kRpfRs;
      cfg.particles = k;
      run_row(cfg, std::to_string(k));
    }
  } else if (name == "steps") {
    header("T");
    for (int t : {5, 10, 25, 50, 100}) {
      ExperimentConfig cfg = base;
      cfg.mode = Mode::kRpf;
      cfg.steps = t;
      run_row(cfg, std::to_string(t));
    }
  } else if (name == "budget-split") {
    header("N1");
    if (rsf_model_path.empty()) throw ConfigError("budget-split suite needs an rsf model");
    for (int n1 : {90, 80, 70, 60, 50}) {
      ExperimentConfig cfg = base;
      cfg.mode = Mode::kRsf;
      cfg.model_path = rsf_model_path;
      cfg.samples = 100;
      cfg.centers = 2;
      cfg.budgets = {n1, 100 - n1};
      run_row(cfg, std::to_string(n1));
    }
  } else if (name == "matched-compute") {
    header("variant");
    {
      ExperimentConfig cfg = base;
      cfg.mode = Mode::kRpf;
      cfg.samples = 400;
      run_row(cfg, "rpf_n400");
    }
    {
      ExperimentConfig cfg = base;
      cfg.mode = Mode::kRpfRs;
      cfg.samples = 100;
      cfg.particles = 4;
      run_row(cfg, "rpf_rs_n100_k4");
    }
  } else {
    throw ConfigError("unknown ablation suite: " + name);
  }

  std::string text = csv.str();
  if (!base.out_dir.empty())
    write_text_file((fs::path(base.out_dir) / ("ablation_" + name + ".csv")).string(),
                    text);
  return text;
}

}  // namespace harness
}  // namespace fragflow
