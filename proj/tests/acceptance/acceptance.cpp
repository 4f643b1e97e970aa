// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagenet/checkpoint.hpp"
#include "stagenet/clustering.hpp"
#include "stagenet/generator.hpp"
#include "stagenet/metrics.hpp"
#include "stagenet/stage_conv.hpp"
#include "stagenet/stage_lstm.hpp"
#include "stagenet/subtype.hpp"
#include "stagenet/train.hpp"

using namespace stagenet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> values(Var v) { return {v.value().begin(), v.value().end()}; }

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

// ---------------------------------------------------------------- 1

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckReport r = check_model_gradients(ModelCheckSetup{});
  const double secs = seconds_since(t0);
  const bool ok = r.pass && r.max_rel_error <= 1e-4 && secs < 60.0;
  return {ok, fmt("%zu params, max rel err %.3g, %.1f s", r.params.size(), r.max_rel_error, secs)};
}

// ---------------------------------------------------------------- 2

Outcome gate_invariants() {
  Rng rng(2024);
  std::size_t violations = 0, inexact = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t nf = 1 + uniform_int(rng, 0, 5), levels = 2 + uniform_int(rng, 0, 6),
                      chunk = 1 + uniform_int(rng, 0, 2), nh = levels * chunk;
    StageCellParams p(StageCellDims{nf, nh, chunk});
    p.initialize(rng);
    for (AffineGate* gate : p.gates())
      for (double& b : gate->b.data) b = uniform(rng, -2.0, 2.0);
    Graph g;
    const CellStep step = cell_step(bind(g, p), g.constant({nf, 1}, random_vector(rng, nf, -3, 3)),
                                    uniform(rng, 0.0, 5.0), g.constant({nh, 1}, random_vector(rng, nh, -1, 1)),
                                    g.constant({nh, 1}, random_vector(rng, nh, -3, 3)));
    const auto ft = values(step.gates->forget), it = values(step.gates->input);
    bool ok = std::abs(ft.back() - 1.0) <= 1e-12 && std::abs(it.front() - 1.0) <= 1e-12;
    for (std::size_t k = 1; k < levels; ++k) ok = ok && ft[k] >= ft[k - 1] && it[k] <= it[k - 1];
    const double s = step.variation.s.item();
    ok = ok && s >= 1.0 && s < static_cast<double>(levels) + 1.0;
    violations += ok ? 0 : 1;

    // One-hot level distributions give all-ones master gates.
    std::vector<double> pf(levels, 0.0), pi(levels, 0.0);
    pf.front() = 1.0;
    pi.back() = 1.0;
    const MasterGates ones = master_gates_from(g.constant({levels, 1}, pf), g.constant({levels, 1}, pi));
    const auto f = random_vector(rng, nh, 0, 1), i = random_vector(rng, nh, 0, 1);
    const auto c_prev = random_vector(rng, nh, -3, 3), c_hat = random_vector(rng, nh, -1, 1);
    const CellUpdate u = cell_update(repeat_chunks(ones.forget, chunk), repeat_chunks(ones.input, chunk),
                                     g.constant({nh, 1}, f), g.constant({nh, 1}, i),
                                     g.constant({nh, 1}, c_prev), g.constant({nh, 1}, c_hat));
    for (std::size_t d = 0; d < nh; ++d) inexact += u.c.value()[d] == f[d] * c_prev[d] + i[d] * c_hat[d] ? 0 : 1;
  }
  return {violations == 0 && inexact == 0,
          fmt("1000 cells: %zu invariant violations, %zu inexact degenerate entries", violations, inexact)};
}

// ---------------------------------------------------------------- 3

Outcome worked_example() {
  Graph g;
  const MasterGates mg =
      master_gates_from(g.constant({5, 1}, {0, 0, 1, 0, 0}), g.constant({5, 1}, {0, 0, 0, 1, 0}));
  const Var half = g.constant({5, 1}, std::vector<double>(5, 0.5));
  const Var zero = g.zeros({5, 1});
  const CellUpdate u = cell_update(mg.forget, mg.input, half, half, zero, zero);
  const bool masks = values(mg.forget) == std::vector<double>{0, 0, 1, 1, 1} &&
                     values(mg.input) == std::vector<double>{1, 1, 1, 1, 0} &&
                     values(u.overlap) == std::vector<double>{0, 0, 1, 1, 0};
  const double s = stage_variation(mg.forget).s.item();
  return {masks && s == 3.0, fmt("masks %s, s = %.17g", masks ? "exact" : "WRONG", s)};
}

// ---------------------------------------------------------------- 4

double auroc_pairs(const ScoredSet& s) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.scores.size(); ++i)
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      if (s.labels[i] != 1 || s.labels[j] != 0) continue;
      pairs += 1.0;
      wins += s.scores[i] > s.scores[j] ? 1.0 : s.scores[i] == s.scores[j] ? 0.5 : 0.0;
    }
  return wins / pairs;
}

// (recall, precision) of "score ≥ τ" for every distinct τ, highest first.
std::vector<std::pair<double, double>> pr_sweep(const ScoredSet& s) {
  const std::set<double, std::greater<>> taus(s.scores.begin(), s.scores.end());
  double pos = 0.0;
  for (int y : s.labels) pos += y;
  std::vector<std::pair<double, double>> out;
  for (double tau : taus) {
    double tp = 0.0, n = 0.0;
    for (std::size_t i = 0; i < s.scores.size(); ++i)
      if (s.scores[i] >= tau) {
        n += 1.0;
        tp += s.labels[i];
      }
    out.emplace_back(tp / pos, tp / n);
  }
  return out;
}

double ch_scatter(const Matrix& x, const std::vector<int>& a, std::size_t k) {
  const std::size_t n = x.size(), d = x[0].size();
  std::vector<double> mean(d, 0.0), count(k, 0.0);
  Matrix cen(k, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    count[a[i]] += 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] += x[i][j] / static_cast<double>(n);
      cen[a[i]][j] += x[i][j];
    }
  }
  for (std::size_t c = 0; c < k; ++c)
    for (double& v : cen[c]) v /= count[c];
  double b = 0.0, w = 0.0;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) b += count[c] * (cen[c][j] - mean[j]) * (cen[c][j] - mean[j]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) w += (x[i][j] - cen[a[i]][j]) * (x[i][j] - cen[a[i]][j]);
  return b / w * static_cast<double>(n - k) / static_cast<double>(k - 1);
}

Outcome oracles() {
  constexpr int kTrials = 200;
  Rng rng(4);
  double worst[6] = {0, 0, 0, 0, 0, 0};  // conv, theme, auroc, auprc, min_re_p, C-H
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t nh = 2 + uniform_int(rng, 0, 6), k = 1 + uniform_int(rng, 0, 6);
    const auto h = random_vector(rng, k * nh, -1, 1), m = random_vector(rng, nh * k * nh, -1, 1);
    Graph g;
    const auto ds = values(stage_weights(g.constant({k, 1}, random_vector(rng, k, 0, 1))));
    const Var hv = g.constant({k, nh}, h), dv = g.constant({k, 1}, ds);
    const auto u = values(stage_conv(hv, dv, g.constant({nh, k * nh}, m)));
    const auto z = values(progression_theme(hv, dv));
    for (std::size_t i = 0; i < nh; ++i) {
      double want_u = 0.0, want_z = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        want_z += ds[p] * h[p * nh + i];
        for (std::size_t j = 0; j < nh; ++j) want_u += m[i * k * nh + p * nh + j] * h[p * nh + j] * ds[p];
      }
      want_z /= static_cast<double>(k);
      worst[0] = std::max(worst[0], std::abs(u[i] - want_u));
      worst[1] = std::max(worst[1], std::abs(z[i] - want_z));
    }

    ScoredSet s;
    const std::size_t n = 10 + uniform_int(rng, 0, 50);
    const bool ties = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = uniform01(rng);
      s.scores.push_back(ties ? std::round(x * 8.0) / 8.0 : x);
      s.labels.push_back(bernoulli(rng, 0.2 + 0.6 * x) ? 1 : 0);
    }
    s.labels[0] = 1;
    s.labels[1] = 0;
    double ap = 0.0, prev = 0.0, best = 0.0;
    for (const auto& [re, pr] : pr_sweep(s)) {
      ap += (re - prev) * pr;
      prev = re;
      best = std::max(best, std::min(re, pr));
    }
    worst[2] = std::max(worst[2], std::abs(auroc(s) - auroc_pairs(s)));
    worst[3] = std::max(worst[3], std::abs(auprc(s) - ap));
    worst[4] = std::max(worst[4], std::abs(min_re_p(s) - best));

    const std::size_t kc = 2 + uniform_int(rng, 0, 3), np = kc + 1 + uniform_int(rng, 0, 30),
                      d = 1 + uniform_int(rng, 0, 4);
    Matrix x(np, std::vector<double>(d));
    for (auto& row : x)
      for (double& v : row) v = normal(rng);
    std::vector<int> a(np);
    for (std::size_t i = 0; i < np; ++i) a[i] = static_cast<int>(i < kc ? i : uniform_int(rng, 0, kc - 1));
    const double ch = calinski_harabasz(x, a).value;
    worst[5] = std::max(worst[5], std::abs(ch - ch_scatter(x, a, kc)) / std::max(1.0, ch));
  }
  const double hand = calinski_harabasz(Matrix{{0, 0}, {0, 1}, {10, 10}, {10, 11}}, std::vector<int>{0, 0, 1, 1}).value;
  const bool ok = *std::max_element(worst, worst + 6) <= 1e-9 && hand == 400.0;
  return {ok, fmt("%d instances; worst err conv %.1e theme %.1e auroc %.1e auprc %.1e minrp %.1e ch %.1e; "
                  "hand C-H %.17g",
                  kTrials, worst[0], worst[1], worst[2], worst[3], worst[4], worst[5], hand)};
}

// ---------------------------------------------------------------- 5, 6

// Shared cohort: 600 patients with the default jump of 3σ, split 4:1:1.
struct Cohort {
  Dataset train, valid, test;
};

const Cohort& cohort() {
  static const Cohort c = [] {
    GeneratorConfig gc;
    gc.n_patients = 600;
    gc.seed = 1;
    const Dataset all = generate_synthetic(gc);
    const std::size_t a = all.size() * 2 / 3, b = all.size() * 5 / 6;
    return Cohort{Dataset(all.begin(), all.begin() + a), Dataset(all.begin() + a, all.begin() + b),
                  Dataset(all.begin() + b, all.end())};
  }();
  return c;
}

ModelConfig cohort_config(ModelVariant variant, std::uint64_t seed) {
  ModelConfig c;
  c.n_features = cohort().train[0].n_features();
  c.hidden = 16;
  c.chunk = 2;
  c.window = 10;
  c.epochs = 40;
  c.dropout = 0.2;
  c.dropconnect = 0.2;
  c.variant = variant;
  c.seed = seed;
  return c;
}

Outcome stage_detection() {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(cohort_config(ModelVariant::kStageNet, 42), cohort().train, cohort().valid);
  auto model = load_model(r.best);
  const Dataset test = prepare_for(r.best, cohort().test);
  const auto traces = predict_all(*model, test);
  ScoredSet cp;
  std::vector<double> y, s;
  for (std::size_t i = 0; i < test.size(); ++i)
    for (const auto& step : traces[i].steps) {
      y.push_back(step.y_hat);
      s.push_back(step.s);
      if (step.t == 0) continue;  // no transition into the first visit
      int near = 0;
      for (std::size_t c : test[i].change_points) {
        const long gap = static_cast<long>(step.t) - static_cast<long>(c);
        near |= gap >= -2 && gap <= 2 ? 1 : 0;
      }
      cp.scores.push_back(step.s_norm);
      cp.labels.push_back(near);
    }
  const double a = auroc(cp);
  const RiskBandTable bands = risk_band_stage_table(y, s);
  // Empty bands are skipped in the ordering check.
  std::vector<double> present;
  for (const BandSummary* b : {&bands.low, &bands.medium, &bands.high})
    if (b->present()) present.push_back(b->mean_s);
  const bool ordered = std::is_sorted(present.begin(), present.end());
  const double secs = seconds_since(t0);
  return {a >= 0.7 && ordered && secs < 900.0,
          fmt("boundary AUROC %.4f (need 0.7); band mean s low %.4f (n=%zu) medium %.4f (n=%zu) high %.4f "
              "(n=%zu) %s; %.0f s",
              a, bands.low.mean_s, bands.low.count, bands.medium.mean_s, bands.medium.count, bands.high.mean_s,
              bands.high.count, ordered ? "ordered" : "NOT ordered", secs)};
}

Outcome ablation() {
  double sum[2] = {0, 0};
  std::string detail;
  const ModelVariant variants[2] = {ModelVariant::kStageNet, ModelVariant::kLstm};
  for (int v = 0; v < 2; ++v) {
    detail += v == 0 ? "stagenet" : "; lstm";
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const TrainResult r = train(cohort_config(variants[v], seed), cohort().train, cohort().valid);
      auto model = load_model(r.best);
      const double ap = auprc(score_dataset(*model, prepare_for(r.best, cohort().test)));
      sum[v] += ap;
      detail += fmt(" %.4f", ap);
    }
  }
  detail += fmt("; mean stagenet %.4f lstm %.4f", sum[0] / 5.0, sum[1] / 5.0);
  return {sum[0] >= sum[1], detail};
}

// ---------------------------------------------------------------- 7

Outcome subtyping() {
  GeneratorConfig gc;
  gc.n_patients = 300;
  gc.seed = 3;
  gc.n_archetypes = 2;
  gc.min_stages = 2;
  const Dataset all = generate_synthetic(gc);
  const std::size_t a = all.size() * 2 / 3, b = all.size() * 5 / 6;
  ModelConfig c;
  c.n_features = gc.n_features;
  c.hidden = 16;
  c.chunk = 2;
  c.window = 10;
  c.epochs = 20;
  c.seed = 42;
  const TrainResult r = train(c, Dataset(all.begin(), all.begin() + a), Dataset(all.begin() + a, all.begin() + b));
  auto model = load_model(r.best);
  const Dataset data = prepare_for(r.best, all);
  std::vector<int> truth;
  for (const auto& s : data) truth.push_back(*s.archetype);
  KMeansOptions opts;
  opts.k = 2;
  opts.seed = 7;
  const ClusterResult u = kmeans(last_step_representations(*model, data), opts);
  const ClusterResult raw = kmeans(last_visit_features(data), opts);
  const double agree = matching_accuracy(u.assignments, truth);
  return {u.ch_score > raw.ch_score && agree > 0.8,
          fmt("C-H u~ %.2f vs raw %.2f; archetype agreement u~ %.3f (raw %.3f)", u.ch_score, raw.ch_score, agree,
              matching_accuracy(raw.assignments, truth))};
}

// ---------------------------------------------------------------- 8

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string without_wall_time(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string out;
  for (std::string line; std::getline(in, line);) {
    nlohmann::json j = nlohmann::json::parse(line);
    j.erase("wall_time");
    out += j.dump() + "\n";
  }
  return out;
}

bool run_cli(const std::string& args) {
  const std::string cmd = std::string(STAGENET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "stagenet_acceptance";
  fs::remove_all(root);
  std::vector<std::string> mismatched;
  for (const char* run : {"a", "b"}) {
    const std::string d = (root / run).string();
    fs::create_directories(d);
    const bool ok =
        run_cli("generate --out " + d + "/train.jsonl --n-patients 40 --archetypes 2 --missing-rate 0.1 --seed 5") &&
        run_cli("generate --out " + d + "/valid.jsonl --n-patients 20 --archetypes 2 --missing-rate 0.1 --seed 6") &&
        run_cli("train --train " + d + "/train.jsonl --valid " + d + "/valid.jsonl --out " + d +
                "/run --hidden 8 --chunk 2 --window 3 --epochs 3 --seed 9") &&
        run_cli("predict --checkpoint " + d + "/run/checkpoint.json --data " + d + "/valid.jsonl --out " + d +
                "/pred.jsonl") &&
        run_cli("evaluate --predictions " + d + "/pred.jsonl --data " + d + "/valid.jsonl --out " + d +
                "/eval.json --bootstrap 100 --seed 3") &&
        run_cli("subtype --checkpoint " + d + "/run/checkpoint.json --data " + d + "/valid.jsonl --k 2 --seed 4 "
                "--out " + d + "/subtype.json") &&
        run_cli("gradcheck --out " + d + "/gradcheck.json");
    if (!ok) return {false, std::string("a CLI command failed in run ") + run};
  }
  const fs::path a = root / "a", b = root / "b";
  for (const char* f : {"train.jsonl", "valid.jsonl", "run/config.json", "run/checkpoint.json", "pred.jsonl",
                        "eval.json", "subtype.json", "gradcheck.json"})
    if (slurp(a / f) != slurp(b / f)) mismatched.push_back(f);
  if (without_wall_time(a / "run/metrics.jsonl") != without_wall_time(b / "run/metrics.jsonl"))
    mismatched.push_back("run/metrics.jsonl");

  const std::string text = slurp(a / "run/checkpoint.json");
  save_checkpoint(load_checkpoint(a / "run/checkpoint.json"), root / "resaved.json");
  const bool round_trip = serialize_checkpoint(parse_checkpoint(text)) == text && slurp(root / "resaved.json") == text;

  std::string detail = mismatched.empty() ? "9 outputs identical across runs" : "differs:";
  for (const auto& m : mismatched) detail += " " + m;
  detail += round_trip ? "; checkpoint round trip byte-exact" : "; checkpoint round trip NOT byte-exact";
  fs::remove_all(root);
  return {mismatched.empty() && round_trip, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria = {gradients,        gate_invariants, worked_example,
                                                          oracles,          stage_detection, ablation,
                                                          subtyping,        reproducibility};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
