// mmphate command-line front end.
//
// Every command resolves one JSON config (file first, flags on top), validates it
// before any compute and embeds it in its report.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <mmphate/mmphate.hpp>

namespace fs = std::filesystem;
using namespace mmphate;
using json = nlohmann::ordered_json;

namespace {

enum class Kind { integer, real, text, flag };

struct FlagSpec {
  const char* flag;
  const char* key;
  Kind kind;
  const char* help;
};

const std::vector<FlagSpec> kCommon = {
    {"--input", "input", Kind::text, "input MMT1 tensor"},
    {"--out", "out", Kind::text, "output path (file for synth, directory otherwise)"},
    {"--seed", "seed", Kind::integer, "seed for every random choice"},
    {"--threads", "threads", Kind::integer, "worker threads (0 = all cores)"},
};

const std::vector<FlagSpec> kEmbedFlags = {
    {"--knn", "knn", Kind::integer, "neighbor rank k for bandwidths"},
    {"--alpha", "alpha", Kind::real, "alpha-decay exponent"},
    {"--t", "t", Kind::text, "diffusion time: auto or a positive integer"},
    {"--t-max", "t_max", Kind::integer, "largest t scanned by the automatic choice"},
    {"--dims", "dims", Kind::integer, "output dimensions (2 or 3)"},
    {"--landmarks", "landmarks", Kind::text, "off, auto, or a landmark count"},
    {"--mds-max-iter", "mds_max_iter", Kind::integer, "SMACOF iteration cap"},
    {"--mds-tol", "mds_tol", Kind::real, "SMACOF relative stress tolerance"},
    {"--interstep-band", "interstep_band", Kind::integer, "limit interstep edges to nearby slabs"},
    {"--epoch-subsample", "epoch_subsample", Kind::text, "all or dense_head"},
    {"--step-subsample", "step_subsample", Kind::text, "all or an evenly spaced step count"},
    {"--no-zscore", "zscore", Kind::flag, "skip per-row z-scoring"},
    {"--zero-degenerate", "zero_degenerate", Kind::flag, "map constant rows to zero instead of failing"},
};

const std::vector<FlagSpec> kDynamicsFlags = {
    {"--coords", "coords", Kind::text, "saved coordinate CSV (skips embedding)"},
    {"--report", "report", Kind::text, "run report that goes with --coords"},
    {"--k-est", "k_est", Kind::integer, "neighbor rank of the entropy estimator"},
};

const std::vector<FlagSpec> kEntropyFlags = {
    {"--kind", "kind", Kind::text, "intra, inter or both"},
};

const std::vector<FlagSpec> kClusterFlags = {
    {"--clusters", "clusters", Kind::integer, "number of clusters"},
    {"--curves", "curves", Kind::text, "inter or intra entropy curves"},
    {"--max-iter", "max_iter", Kind::integer, "k-means iteration cap"},
    {"--dba-iter", "dba_iter", Kind::integer, "barycenter sweeps per update"},
    {"--band", "band", Kind::integer, "Sakoe-Chiba band (default: none)"},
};

const std::vector<FlagSpec> kSynthFlags = {
    {"--n", "n", Kind::integer, "epochs"},
    {"--s", "s", Kind::integer, "time-steps"},
    {"--m", "m", Kind::integer, "units"},
    {"--p", "p", Kind::integer, "probe samples"},
    {"--communities", "communities", Kind::integer, "number of unit communities"},
    {"--noise-sd", "noise_sd", Kind::real, "noise scale"},
    {"--overfit-onset", "overfit_onset", Kind::integer, "epoch after which memorization starts"},
    {"--precision", "precision", Kind::text, "f32 or f64"},
};

const std::vector<FlagSpec> kComplexityFlags = {
    {"--threshold", "threshold", Kind::real, "explained-variance target"},
};

/// Config keys that only make sense in a file (no flag).
const std::map<std::string, std::vector<std::string>> kFileOnlyKeys = {
    {"synth", {"community_sizes", "step_variation"}},
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::vector<FlagSpec> flags;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  std::string config_path;
};

json parse_flag(const FlagSpec& f, const std::string& raw) {
  try {
    std::size_t used = 0;
    switch (f.kind) {
      case Kind::integer: {
        const long long v = std::stoll(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      case Kind::real: {
        const double v = std::stod(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      default:
        return raw;
    }
  } catch (const std::exception&) {
  }
  fail(ErrorKind::validation, std::string(f.flag) + ": cannot parse '" + raw + "'");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, path + ": invalid JSON: " + e.what());
  }
}

/// File values first, then any flag given on the command line.
json resolve_config(const Command& cmd) {
  json cfg = json::object();
  if (!cmd.config_path.empty()) {
    const json file = read_json_file(cmd.config_path);
    if (!file.is_object()) fail(ErrorKind::validation, cmd.config_path + ": config must be a JSON object");
    std::vector<std::string> known;
    for (const auto& f : cmd.flags) known.push_back(f.key);
    if (auto it = kFileOnlyKeys.find(cmd.name); it != kFileOnlyKeys.end())
      known.insert(known.end(), it->second.begin(), it->second.end());
    for (auto it = file.begin(); it != file.end(); ++it) {
      if (std::find(known.begin(), known.end(), it.key()) == known.end())
        fail(ErrorKind::validation, cmd.config_path + ": unknown key '" + it.key() + "' for " + cmd.name);
      cfg[it.key()] = it.value();
    }
  }
  for (const auto& f : cmd.flags) {
    if (f.kind == Kind::flag) {
      if (cmd.switches.at(f.key)) {
        // switches only ever turn a default off/on
        cfg[f.key] = std::string(f.key) == "zscore" ? false : true;
      }
      continue;
    }
    if (cmd.app->count(f.flag) > 0) cfg[f.key] = parse_flag(f, cmd.values.at(f.key));
  }
  return cfg;
}

template <typename T>
T get_or(const json& cfg, const char* key, T fallback) {
  if (!cfg.contains(key)) return fallback;
  try {
    return cfg.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::validation, std::string("config key '") + key + "' has the wrong type");
  }
}

Index get_index(const json& cfg, const char* key, Index fallback) {
  if (cfg.contains(key) && !cfg.at(key).is_number_integer())
    fail(ErrorKind::validation, std::string("config key '") + key + "' must be an integer");
  return get_or<Index>(cfg, key, fallback);
}

std::string require_path(const json& cfg, const char* key) {
  const auto v = get_or<std::string>(cfg, key, "");
  if (v.empty()) fail(ErrorKind::validation, std::string("--") + key + " is required");
  return v;
}

std::uint64_t get_seed(const json& cfg) {
  const Index s = get_index(cfg, "seed", 0);
  require(s >= 0, "seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

void apply_threads(const json& cfg) {
  const Index n = get_index(cfg, "threads", 0);
  require(n >= 0, "threads must be >= 0");
  parallel::set_threads(static_cast<int>(n));
}

fs::path out_dir(const json& cfg) {
  const fs::path dir = require_path(cfg, "out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_json(const fs::path& path, const json& j) { write_text(path.string(), j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// embedding

struct EmbedSetup {
  KernelParams kernel;
  EmbeddingConfig embed;
  SubsampleSpec subsample;
};

EmbedSetup embed_setup(const json& cfg) {
  EmbedSetup s;
  s.kernel.k = get_index(cfg, "knn", 5);
  s.kernel.alpha = get_or<double>(cfg, "alpha", 40.0);
  if (cfg.contains("interstep_band")) s.kernel.interstep_band = get_index(cfg, "interstep_band", 0);

  auto& e = s.embed;
  e.seed = get_seed(cfg);
  e.out_dims = get_index(cfg, "dims", 3);
  e.t_max = get_index(cfg, "t_max", 100);
  e.mds_max_iter = get_index(cfg, "mds_max_iter", 300);
  e.mds_rel_tol = get_or<double>(cfg, "mds_tol", 1e-6);
  e.zscore_input = get_or<bool>(cfg, "zscore", true);
  e.zscore.zero_degenerate = get_or<bool>(cfg, "zero_degenerate", false);

  const json t = cfg.contains("t") ? cfg.at("t") : json("auto");
  if (t.is_number_integer()) {
    e.t = t.get<Index>();
  } else if (t.is_string() && t.get<std::string>() != "auto") {
    e.t = parse_flag({"--t", "t", Kind::integer, ""}, t.get<std::string>()).get<Index>();
  } else if (!t.is_string()) {
    fail(ErrorKind::validation, "t must be 'auto' or a positive integer");
  }

  const json lm = cfg.contains("landmarks") ? cfg.at("landmarks") : json("auto");
  if (lm.is_number_integer()) {
    e.landmark_mode = LandmarkMode::fixed;
    e.landmarks = lm.get<Index>();
  } else if (lm == "off") {
    e.landmark_mode = LandmarkMode::off;
  } else if (lm == "auto") {
    e.landmark_mode = LandmarkMode::automatic;
  } else if (lm.is_string()) {
    e.landmark_mode = LandmarkMode::fixed;
    e.landmarks = parse_flag({"--landmarks", "landmarks", Kind::integer, ""}, lm.get<std::string>()).get<Index>();
  } else {
    fail(ErrorKind::validation, "landmarks must be off, auto or a count");
  }

  const auto es = get_or<std::string>(cfg, "epoch_subsample", "all");
  if (es == "dense_head")
    s.subsample.epochs = DenseHead{};
  else
    require(es == "all", "epoch_subsample must be all or dense_head");
  const json ss = cfg.contains("step_subsample") ? cfg.at("step_subsample") : json("all");
  if (ss.is_number_integer()) {
    s.subsample.steps = LinearSpacing{ss.get<Index>()};
  } else if (ss.is_string() && ss != "all") {
    s.subsample.steps = LinearSpacing{
        parse_flag({"--step-subsample", "step_subsample", Kind::integer, ""}, ss.get<std::string>()).get<Index>()};
  } else {
    require(ss == "all", "step_subsample must be all or a count");
  }
  e.validate();
  return s;
}

struct EmbedRun {
  Embedding embedding;
  json report;
};

EmbedRun run_embedding(const json& cfg, const std::string& command) {
  const auto start = std::chrono::steady_clock::now();
  const EmbedSetup setup = embed_setup(cfg);
  const std::string input = require_path(cfg, "input");
  const ActivationTensor raw = load_tensor(input);
  const ActivationTensor t = annotate("subsample", [&] { return subsample(raw, setup.subsample); });
  setup.kernel.validate(t.n_units());

  EmbedRun run;
  run.embedding = embed(t, setup.kernel, setup.embed);
  const Embedding& e = run.embedding;
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json& r = run.report;
  r["command"] = command;
  r["config"] = cfg;
  r["seed"] = setup.embed.seed;
  r["input"] = input;
  r["dims"] = {{"n", t.n_epochs()}, {"s", t.n_steps()}, {"m", t.n_units()}, {"p", t.n_samples()}};
  r["epoch_ids"] = e.epoch_ids;
  r["step_ids"] = e.step_ids;
  r["t"] = e.t;
  r["t_auto"] = e.t_auto;
  r["t_fallback"] = e.t_fallback;
  r["epsilon"] = e.epsilon;
  r["stress"] = e.stress;
  r["stress_trace"] = e.stress_trace;
  r["vn_entropy"] = e.vn_entropy;
  const char* mode = setup.embed.landmark_mode == LandmarkMode::off         ? "off"
                     : setup.embed.landmark_mode == LandmarkMode::automatic ? "auto"
                                                                            : "fixed";
  r["landmarks"] = {{"mode", mode}, {"used", e.landmarks_used > 0}, {"count", e.landmarks_used}};
  r["threads"] = parallel::threads();
  r["wall_time_s"] = wall;
  return run;
}

/// Embedding from a tensor, or from a saved coordinate CSV (plus its optional report).
EmbedRun obtain_embedding(const json& cfg, const std::string& command) {
  const auto coords = get_or<std::string>(cfg, "coords", "");
  if (coords.empty()) return run_embedding(cfg, command);
  EmbedRun run;
  run.embedding = read_coords_csv(coords);
  run.report["command"] = command;
  run.report["config"] = cfg;
  run.report["coords"] = coords;
  const auto report = get_or<std::string>(cfg, "report", "");
  if (!report.empty()) {
    const json prior = read_json_file(report);
    run.report["embedding_report"] = prior;
  }
  return run;
}

// ---------------------------------------------------------------------------
// commands

int cmd_info(const json& cfg) {
  const std::string path = require_path(cfg, "input");
  const auto [h, meta] = read_tensor_header(path);
  // load the full tensor so a truncated or corrupt payload is reported here too
  const ActivationTensor t = load_tensor(path);
  std::cout << "n=" << h.n << " s=" << h.s << " m=" << h.m << " p=" << h.p << "\n";
  std::cout << "dtype: " << (h.dtype == StorageType::f32 ? "f32" : "f64") << "\n";
  std::cout << "version: " << h.version << "\n";
  std::vector<std::string> keys;
  for (const auto& [k, v] : t.metadata) keys.push_back(k);
  if (!detail::is_identity(t.epoch_ids())) keys.push_back("epoch_ids");
  if (!detail::is_identity(t.step_ids())) keys.push_back("step_ids");
  if (keys.empty()) {
    std::cout << "metadata: none\n";
  } else {
    std::cout << "metadata:";
    for (const auto& k : keys) std::cout << " " << k;
    std::cout << "\n";
  }
  return 0;
}

int cmd_synth(const json& cfg) {
  SynthConfig sc;
  sc.n = get_index(cfg, "n", sc.n);
  sc.s = get_index(cfg, "s", sc.s);
  sc.m = get_index(cfg, "m", sc.m);
  sc.p = get_index(cfg, "p", sc.p);
  sc.n_communities = get_index(cfg, "communities", sc.n_communities);
  sc.noise_sd = get_or<double>(cfg, "noise_sd", sc.noise_sd);
  if (cfg.contains("overfit_onset")) sc.overfit_onset = get_index(cfg, "overfit_onset", 0);
  sc.community_sizes = get_or<std::vector<Index>>(cfg, "community_sizes", {});
  sc.step_variation = get_or<std::vector<Real>>(cfg, "step_variation", {});
  const auto precision = get_or<std::string>(cfg, "precision", "f64");
  require(precision == "f32" || precision == "f64", "precision must be f32 or f64");
  const std::string out = require_path(cfg, "out");
  const std::uint64_t seed = get_seed(cfg);

  const auto [tensor, labels] = synth_generate(sc, seed);
  save_tensor(tensor, out, precision == "f32" ? StorageType::f32 : StorageType::f64);
  json side;
  side["config"] = cfg;
  side["seed"] = seed;
  side["labels"] = labels.labels;
  write_json(out + ".labels.json", side);
  return 0;
}

int cmd_embed(const json& cfg) {
  const fs::path dir = out_dir(cfg);
  const EmbedRun run = run_embedding(cfg, "embed");
  write_text((dir / "coords.csv").string(), coords_csv(run.embedding));
  write_json(dir / "report.json", run.report);
  return 0;
}

int cmd_entropy(const json& cfg) {
  const fs::path dir = out_dir(cfg);
  const Index k_est = get_index(cfg, "k_est", 3);
  const auto kind = get_or<std::string>(cfg, "kind", "both");
  require(kind == "intra" || kind == "inter" || kind == "both", "kind must be intra, inter or both");
  EmbedRun run = obtain_embedding(cfg, "entropy");
  const Embedding& e = run.embedding;

  json out;
  if (kind != "inter") {
    const auto curves = intra_step_entropy(e, k_est);
    out["intra_step"] = to_json(curves);
    const auto v = node_values(e, curves);
    write_text((dir / "intra_step.csv").string(), coords_csv(e, &v));
  }
  if (kind != "intra") {
    const auto curves = inter_step_entropy(e, k_est);
    out["inter_step"] = to_json(curves);
    const auto v = node_values(e, curves);
    write_text((dir / "inter_step.csv").string(), coords_csv(e, &v));
  }
  write_json(dir / "entropy.json", out);
  write_json(dir / "report.json", run.report);
  return 0;
}

int cmd_cluster(const json& cfg) {
  const fs::path dir = out_dir(cfg);
  const Index k_est = get_index(cfg, "k_est", 3);
  DtwKMeansConfig kc;
  kc.k = get_index(cfg, "clusters", 2);
  kc.seed = get_seed(cfg);
  kc.max_iter = get_index(cfg, "max_iter", kc.max_iter);
  kc.dba_iter = get_index(cfg, "dba_iter", kc.dba_iter);
  if (cfg.contains("band")) kc.band = get_index(cfg, "band", 0);
  const auto which = get_or<std::string>(cfg, "curves", "inter");
  require(which == "inter" || which == "intra", "curves must be inter or intra");

  EmbedRun run = obtain_embedding(cfg, "cluster");
  const auto curves = which == "inter" ? inter_step_entropy(run.embedding, k_est)
                                       : intra_step_entropy(run.embedding, k_est);
  std::vector<Series> series;
  for (const auto& c : curves) series.push_back(c.values);
  const ClusterResult res = annotate("dtw k-means", [&] { return dtw_kmeans(series, kc); });

  json out = to_json(res);
  out["curves"] = which == "inter" ? "inter_step" : "intra_step";
  write_json(dir / "clusters.json", out);
  std::string csv = which == "inter" ? "unit,cluster\n" : "step,cluster\n";
  for (std::size_t k = 0; k < curves.size(); ++k)
    csv += std::to_string(curves[k].index) + "," + std::to_string(res.assignments[k]) + "\n";
  write_text((dir / "assignments.csv").string(), csv);
  write_json(dir / "report.json", run.report);
  return 0;
}

/// Numeric CSV, one sample per row. A first line that does not parse is taken as a header.
Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::vector<std::vector<Real>> rows;
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<Real> row;
    std::stringstream ss(line);
    std::string cell;
    bool ok = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) ok = false;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      if (rows.empty() && lineno == 1) continue;
      fail(ErrorKind::io, path + ":" + std::to_string(lineno) + ": malformed number");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorKind::io, path + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::io, path + ": no numeric rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  if (!m.allFinite()) fail(ErrorKind::io, path + ": non-finite value");
  return m;
}

bool is_mmt1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::equal(magic, magic + 4, detail::kMagic);
}

int cmd_complexity(const json& cfg) {
  const fs::path dir = out_dir(cfg);
  const std::string input = require_path(cfg, "input");
  const double threshold = get_or<double>(cfg, "threshold", 0.95);
  Matrix data;
  if (is_mmt1(input)) {
    const ActivationTensor t = load_tensor(input);
    data.resize(t.n_nodes(), t.n_samples());
    for (Index f = 0; f < t.n_nodes(); ++f) {
      auto r = t.row(f);
      for (Index k = 0; k < t.n_samples(); ++k) data(f, k) = r[static_cast<std::size_t>(k)];
    }
  } else {
    data = read_matrix_csv(input);
  }
  const VarianceProfile vp = pca_variance_profile(data, threshold);
  json out;
  out["config"] = cfg;
  out["samples"] = data.rows();
  out["features"] = data.cols();
  out["threshold"] = threshold;
  out["components"] = vp.components;
  out["explained_variance_ratio"] = vp.ratios;
  write_json(dir / "complexity.json", out);
  std::cout << "components=" << vp.components << " threshold=" << threshold << "\n";
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::io:
      return 2;
    case ErrorKind::validation:
      return 3;
    case ErrorKind::numerical:
      return 4;
  }
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multislice PHATE embedding of recurrent-network training dynamics"};
  app.require_subcommand(1);

  std::vector<Command> commands;
  commands.reserve(6);
  auto add = [&](const std::string& name, const std::string& help, std::vector<std::vector<FlagSpec>> groups) {
    Command& cmd = commands.emplace_back();
    cmd.name = name;
    cmd.app = app.add_subcommand(name, help);
    for (const auto& g : groups) cmd.flags.insert(cmd.flags.end(), g.begin(), g.end());
    for (const auto& f : cmd.flags) {
      if (f.kind == Kind::flag)
        cmd.app->add_flag(f.flag, cmd.switches[f.key], f.help);
      else
        cmd.app->add_option(f.flag, cmd.values[f.key], f.help);
    }
    cmd.app->add_option("--config", cmd.config_path, "JSON config; flags override its values");
  };
  add("info", "print dims, dtype and metadata keys of an MMT1 file", {kCommon});
  add("synth", "write a synthetic tensor and its community labels", {kCommon, kSynthFlags});
  add("embed", "embed a tensor and write coordinates plus a run report", {kCommon, kEmbedFlags});
  add("entropy", "intra-/inter-step entropy curves", {kCommon, kEmbedFlags, kDynamicsFlags, kEntropyFlags});
  add("cluster", "DTW k-means over entropy curves", {kCommon, kEmbedFlags, kDynamicsFlags, kClusterFlags});
  add("complexity", "principal components needed for a variance target", {kCommon, kComplexityFlags});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }

  try {
    for (auto& cmd : commands) {
      if (!cmd.app->parsed()) continue;
      const json cfg = resolve_config(cmd);
      apply_threads(cfg);
      if (cmd.name == "info") return cmd_info(cfg);
      if (cmd.name == "synth") return cmd_synth(cfg);
      if (cmd.name == "embed") return cmd_embed(cfg);
      if (cmd.name == "entropy") return cmd_entropy(cfg);
      if (cmd.name == "cluster") return cmd_cluster(cfg);
      if (cmd.name == "complexity") return cmd_complexity(cfg);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 3;
}
