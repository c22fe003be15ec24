// Acceptance run: one PASS/FAIL line per criterion.
//
//   mmphate_acceptance                 all criteria
//   mmphate_acceptance 4 9             only the listed ones
//   mmphate_acceptance --known-red 6   criterion 6 still prints FAIL but does not set the exit code

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "oracles.hpp"

using namespace mmphate;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

Index pick_k(Index m, Index slabs) {
  Index k = 5;
  if (m > 1) k = std::min(k, m - 1);
  if (slabs > 1) k = std::min(k, slabs - 1);
  return std::max<Index>(1, k);
}

// 1 -------------------------------------------------------------------------

Outcome diffusion_contract() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<Index> ns(1, 5), ms(2, 8), ps(1, 10);
  Real worst = 0;
  bool symmetric = true;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = ns(rng), s = ns(rng), m = ms(rng), p = ps(rng);
    const auto t = oracle::random_tensor(n, s, m, p, rng());
    const auto op = to_diffusion(assemble_multislice(t, KernelParams{pick_k(m, n * s), 40}));
    for (Index r = 0; r < op.size(); ++r) worst = std::max(worst, std::abs(op.transition.row(r).sum() - 1.0));
    const SparseMatrix tr = SparseMatrix(op.affinity.transpose());
    if (tr.nonZeros() != op.affinity.nonZeros()) symmetric = false;
    for (Index r = 0; r < op.size() && symmetric; ++r) {
      SparseMatrix::InnerIterator a(op.affinity, r), b(tr, r);
      for (; a && b; ++a, ++b)
        if (a.col() != b.col() || a.value() != b.value()) symmetric = false;
      if (a || b) symmetric = false;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && symmetric && secs < 10,
          "max |row sum - 1| = " + fmt(worst) + ", K' symmetric: " + (symmetric ? "yes" : "no") + ", " +
              fmt(secs, 3) + " s"};
}

// 2 -------------------------------------------------------------------------

Outcome kernel_structure() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<Index> ns(1, 5), ms(2, 8), ps(1, 10);
  Index bad_rows = 0, bad_probes = 0, probes = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = ns(rng), s = ns(rng), m = ms(rng), p = ps(rng);
    const auto t = oracle::random_tensor(n, s, m, p, rng());
    const auto K = assemble_multislice(t, KernelParams{pick_k(m, n * s), 40});
    const Index want = (m - 1) + (n * s - 1) + 1;
    for (Index r = 0; r < K.size(); ++r)
      if (K.matrix.outerIndexPtr()[r + 1] - K.matrix.outerIndexPtr()[r] != want) ++bad_rows;
    std::uniform_int_distribution<Index> node(0, K.size() - 1);
    for (int k = 0; k < 200; ++k) {
      const Index a = node(rng), b = node(rng);
      if (a % m == b % m || a / m == b / m) continue;
      ++probes;
      for (SparseMatrix::InnerIterator it(K.matrix, a); it; ++it)
        if (it.col() == b) ++bad_probes;
    }
  }
  return {bad_rows == 0 && bad_probes == 0 && probes > 0,
          std::to_string(bad_rows) + " rows with wrong nnz, " + std::to_string(bad_probes) + "/" +
              std::to_string(probes) + " probes hit a stored entry"};
}

// 3 -------------------------------------------------------------------------

Outcome oracle_equivalence() {
  Real kern = 0, eps = 0, sig = 0, pot = 0;
  int cases = 0;
  std::uint64_t seed = 300;
  for (Index n = 1; n <= 3; ++n)
    for (Index s = 1; s <= 3; ++s)
      for (Index m = 1; m <= 4; ++m)
        for (Index p = 1; p <= 5; ++p) {
          const auto t = oracle::random_tensor(n, s, m, p, seed++);
          const Index k = pick_k(m, n * s);
          const auto K = assemble_multislice(t, KernelParams{k, 40});
          const Matrix ref = oracle::kernel(t, k, 40);
          kern = std::max(kern, (Matrix(K.matrix) - ref).cwiseAbs().maxCoeff());
          if (n * s > 1) eps = std::max(eps, std::abs(K.epsilon - oracle::epsilon(t, k)));
          if (m > 1)
            for (Index f = 0; f < t.n_nodes(); ++f) sig = std::max(sig, std::abs(K.sigma(f) - oracle::sigma(t, f, k)));
          const auto op = to_diffusion(K);
          const Matrix rp = oracle::transition(ref);
          for (Index steps : {1, 4})
            pot = std::max(pot, (potential_distances(op, steps) - oracle::potential(rp, steps)).cwiseAbs().maxCoeff());
          ++cases;
        }
  const bool ok = kern <= 1e-12 && eps <= 1e-12 && sig <= 1e-12 && pot <= 1e-12;
  return {ok, std::to_string(cases) + " shapes; max error kernel " + fmt(kern) + ", eps " + fmt(eps) + ", sigma " +
                  fmt(sig) + ", potential " + fmt(pot)};
}

// 4 -------------------------------------------------------------------------

Outcome community_preservation() {
  const auto t0 = Clock::now();
  Real mean = 0;
  bool beats_pca = true;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig cfg;  // n=20, s=15, m=24, p=30, 3 communities, noise 0.1
    const auto [raw, labels] = synth_generate(cfg, seed);
    EmbeddingConfig ec;
    ec.seed = seed;
    const Embedding e = embed(raw, KernelParams{}, ec);
    const Matrix baseline = pca_project(zscore(raw), 3);

    const Index last = cfg.n - 1;
    const Index rows = cfg.s * cfg.m;
    Matrix ours(rows, e.dims()), theirs(rows, 3);
    std::vector<int> lab;
    for (Index w = 0; w < cfg.s; ++w)
      for (Index i = 0; i < cfg.m; ++i) {
        const Index r = w * cfg.m + i;
        ours.row(r) = e.coords.row(e.flat(last, w, i));
        theirs.row(r) = baseline.row(raw.flat_node(last, w, i));
        lab.push_back(labels.labels[static_cast<std::size_t>(i)]);
      }
    const Real a = knn_label_purity(ours, lab, 5), b = knn_label_purity(theirs, lab, 5);
    mean += a / 5;
    if (a < b) beats_pca = false;
    per_seed += " " + fmt(a, 3) + "/" + fmt(b, 3);
  }
  const double secs = seconds_since(t0);
  return {mean >= 0.9 && beats_pca && secs < 120,
          "mean purity " + fmt(mean) + " (mm-phate/pca per seed:" + per_seed + "), " + fmt(secs, 3) + " s"};
}

// 5 -------------------------------------------------------------------------

Outcome entropy_calibration() {
  Real gauss = 0, unif = 0, shift_g = 0, shift_u = 0;
  const Real c = 2.5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> g(0, 1);
    std::uniform_real_distribution<Real> u(0, 1);
    Matrix x(10000, 1), y(10000, 2);
    for (Index i = 0; i < x.size(); ++i) x(i) = g(rng);
    for (Index i = 0; i < y.size(); ++i) y(i) = u(rng);
    const Real hx = knn_entropy(x, 3).value, hy = knn_entropy(y, 3).value;
    gauss += hx / 10;
    unif += hy / 10;
    shift_g += (knn_entropy(c * x, 3).value - hx) / 10;
    shift_u += (knn_entropy(c * y, 3).value - hy) / 10;
  }
  const Real eg = std::abs(gauss - 0.5 * std::log(2 * std::numbers::pi * std::numbers::e));
  const Real eu = std::abs(unif);
  const Real sg = std::abs(shift_g - std::log(c)), su = std::abs(shift_u - 2 * std::log(c));
  return {eg <= 0.05 && eu <= 0.05 && sg <= 0.05 && su <= 0.05,
          "|err| normal " + fmt(eg) + ", square " + fmt(eu) + "; scale-law error " + fmt(sg) + " (1-D), " + fmt(su) +
              " (2-D)"};
}

// 6 -------------------------------------------------------------------------

Outcome entropy_direction() {
  int rising = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig cfg;
    cfg.overfit_onset = cfg.n / 2;
    const auto raw = synth_generate(cfg, seed).first;
    EmbeddingConfig ec;
    ec.seed = seed;
    const auto curves = intra_step_entropy(embed(raw, KernelParams{}, ec));
    Real first = 0, second = 0;
    const Index half = cfg.n / 2;
    for (const auto& curve : curves)
      for (Index ep = 0; ep < cfg.n; ++ep) (ep < half ? first : second) += curve.values[static_cast<std::size_t>(ep)];
    first /= static_cast<Real>(half * cfg.s);
    second /= static_cast<Real>((cfg.n - half) * cfg.s);
    if (second > first) ++rising;
    per_seed += " " + fmt(first, 3) + "->" + fmt(second, 3);
  }
  return {rising >= 4, std::to_string(rising) + "/5 seeds rise (first->second half:" + per_seed + ")"};
}

// 7 -------------------------------------------------------------------------

Outcome dtw_exactness() {
  std::mt19937_64 rng(7);
  std::normal_distribution<Real> g(0, 1);
  std::uniform_int_distribution<Index> len(1, 6), longer(1, 40);
  auto draw = [&](Index l) {
    Series s(static_cast<std::size_t>(l));
    for (auto& v : s) v = g(rng);
    return s;
  };
  std::vector<Series> corpus;
  for (int k = 0; k < 20; ++k) corpus.push_back(draw(len(rng)));
  int mismatches = 0;
  for (const auto& x : corpus)
    for (const auto& y : corpus)
      if (dtw(x, y) != oracle::dtw(x, y) && std::abs(dtw(x, y) - oracle::dtw(x, y)) > 1e-12) ++mismatches;
  int broken = 0;
  for (int k = 0; k < 100; ++k) {
    const Series x = draw(longer(rng)), y = draw(longer(rng));
    if (dtw(x, x) != 0.0 || dtw(x, y) != dtw(y, x)) ++broken;
  }
  return {mismatches == 0 && broken == 0, std::to_string(mismatches) + "/400 pairs differ from enumeration, " +
                                              std::to_string(broken) + "/100 identity/symmetry failures"};
}

// 8 -------------------------------------------------------------------------

Outcome mds_checks() {
  std::mt19937_64 rng(8);
  std::normal_distribution<Real> g(0, 1);
  Matrix x(100, 3);
  for (Index i = 0; i < x.size(); ++i) x(i) = g(rng);
  Matrix d(100, 100);
  for (Index i = 0; i < 100; ++i)
    for (Index j = 0; j < 100; ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
  const Real rmse = procrustes(x, classical_mds(d, 3)).rmse;

  int rises = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 r(seed);
    std::uniform_real_distribution<Real> u(0.1, 2.0);
    const Index n = 10 + static_cast<Index>(seed % 11);
    Matrix dd = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) dd(i, j) = dd(j, i) = u(r);
    const auto res = smacof(dd, classical_mds(dd, 2), SmacofConfig{200, 0});
    for (std::size_t k = 1; k < res.stress_trace.size(); ++k)
      if (res.stress_trace[k] > res.stress_trace[k - 1]) ++rises;
  }
  return {rmse <= 1e-6 && rises == 0,
          "planted 3-D Procrustes RMSE " + fmt(rmse) + ", stress increases over 100 instances: " + std::to_string(rises)};
}

// 9 -------------------------------------------------------------------------

Outcome landmark_consistency() {
  SynthConfig small;
  small.n = 5;
  small.s = 5;
  small.m = 12;
  small.p = 16;
  const auto t = synth_generate(small, 9).first;
  EmbeddingConfig exact;
  exact.landmark_mode = LandmarkMode::off;
  EmbeddingConfig full = exact;
  full.landmark_mode = LandmarkMode::fixed;
  full.landmarks = t.n_nodes();
  const Real rmse = procrustes(embed(t, KernelParams{}, exact).coords, embed(t, KernelParams{}, full).coords).rmse;

  SynthConfig big;
  big.n = 10;
  big.s = 10;
  big.m = 60;
  big.p = 20;
  const auto tb = synth_generate(big, 9).first;
  EmbeddingConfig half;
  half.landmark_mode = LandmarkMode::fixed;
  half.landmarks = tb.n_nodes() / 2;
  const auto t0 = Clock::now();
  const auto e = embed(tb, KernelParams{}, half);
  const double secs = seconds_since(t0);
  const bool done = e.coords.rows() == 6000 && e.coords.allFinite() && e.landmarks_used == 3000;
  return {rmse <= 1e-8 && done && secs < 300, "N=300 L=N vs exact RMSE " + fmt(rmse) + "; N=6000 L=3000 " +
                                                  (done ? "completed" : "failed") + " in " + fmt(secs, 3) + " s"};
}

// 10 ------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MMPHATE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// The run report minus the fields that legitimately vary: timing, the thread count and
/// the file locations (each run lives in its own directory).
std::string stable_report(const fs::path& p) {
  auto j = nlohmann::ordered_json::parse(slurp(p));
  j.erase("wall_time_s");
  j.erase("threads");
  j.erase("input");
  for (const char* key : {"threads", "out", "input"}) j["config"].erase(key);
  return j.dump();
}

std::string stable_labels(const fs::path& p) {
  auto j = nlohmann::ordered_json::parse(slurp(p));
  if (j.contains("config")) {
    for (const char* key : {"threads", "out", "input"}) j["config"].erase(key);
  }
  return j.dump();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "mmphate_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> labels;
  std::vector<std::vector<std::string>> outputs;
  int failures = 0;
  for (const char* threads : {"1", "2", "8", "8"}) {
    const std::string tag = std::to_string(outputs.size()) + "_t" + threads;
    const std::string common = " --seed 11 --threads " + std::string(threads);
    const fs::path mmt = dir / (tag + ".mmt");
    failures += run_cli("synth --out " + mmt.string() + " --n 8 --s 6 --m 16 --p 12" + common) != 0;
    // landmark path on purpose: it exercises k-means and the randomized eigensolver
    failures += run_cli("embed --input " + mmt.string() + " --out " + (dir / (tag + "_e")).string() +
                        " --landmarks 300" + common) != 0;
    failures += run_cli("cluster --input " + mmt.string() + " --out " + (dir / (tag + "_c")).string() + common) != 0;
    if (failures) break;
    outputs.push_back({slurp(mmt), stable_labels(mmt.string() + ".labels.json"), slurp(dir / (tag + "_e") / "coords.csv"),
                       stable_report(dir / (tag + "_e") / "report.json"),
                       slurp(dir / (tag + "_c") / "clusters.json"), slurp(dir / (tag + "_c") / "assignments.csv"),
                       stable_report(dir / (tag + "_c") / "report.json")});
  }
  if (failures) return {false, "a CLI command failed"};
  int differing = 0;
  for (std::size_t r = 1; r < outputs.size(); ++r)
    for (std::size_t k = 0; k < outputs[0].size(); ++k)
      if (outputs[r][k] != outputs[0][k]) ++differing;
  return {differing == 0, "synth/embed/cluster over threads 1, 2, 8 and a rerun: " + std::to_string(differing) +
                              " differing outputs"};
}

// 11 ------------------------------------------------------------------------

Outcome mmt1_round_trip() {
  const fs::path dir = fs::temp_directory_path() / "mmphate_acceptance_io";
  fs::create_directories(dir);
  auto t = oracle::random_tensor(4, 3, 5, 7, 11);
  t.values()[0] = 1.0 / 3.0;
  t.values()[1] = std::numeric_limits<Real>::denorm_min();
  t.values()[2] = -1e300;
  t.set_step_ids({0, 10, 599});
  t.metadata["source"] = "acceptance";
  save_tensor(t, (dir / "a.mmt").string(), StorageType::f64);
  const bool exact = load_tensor((dir / "a.mmt").string()) == t;

  t.values()[1] = 1e-3;
  t.values()[2] = -1e30;
  save_tensor(t, (dir / "b.mmt").string(), StorageType::f32);
  const auto back = load_tensor((dir / "b.mmt").string());
  Real worst = 0;
  for (std::size_t k = 0; k < t.values().size(); ++k)
    worst = std::max(worst, std::abs(back.values()[k] - t.values()[k]) / std::abs(t.values()[k]));
  return {exact && worst <= std::ldexp(1.0, -23),
          std::string("f64 bit-exact: ") + (exact ? "yes" : "no") + ", f32 max relative error " + fmt(worst) +
              " (bound " + fmt(std::ldexp(1.0, -23)) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"diffusion contract", diffusion_contract},
      {"kernel structure", kernel_structure},
      {"brute-force oracle equivalence", oracle_equivalence},
      {"community preservation", community_preservation},
      {"entropy estimator calibration", entropy_calibration},
      {"intra-step entropy direction", entropy_direction},
      {"DTW exactness", dtw_exactness},
      {"MDS", mds_checks},
      {"landmark consistency", landmark_consistency},
      {"determinism", determinism},
      {"MMT1 round trip", mmt1_round_trip},
  };
  std::set<int> only, known_red;
  for (int a = 1; a < argc; ++a) {
    if (std::string(argv[a]) == "--known-red" && a + 1 < argc)
      known_red.insert(std::atoi(argv[++a]));
    else
      only.insert(std::atoi(argv[a]));
  }

  int failed = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    const int id = static_cast<int>(c + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass && !known_red.count(id)) ++failed;
    std::printf("[%s] %2d %s: %s%s\n", o.pass ? "PASS" : "FAIL", id, criteria[c].first, o.detail.c_str(),
                known_red.count(id) ? (o.pass ? " (listed as known red, now passing)" : " (known red)") : "");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
