// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "anchors.hpp"
#include "forest_oracle.hpp"
#include "grad_fixtures.hpp"
#include "pehl/artifact.hpp"
#include "pehl/experiment.hpp"
#include "pehl/header_features.hpp"
#include "pehl/synthetic.hpp"
#include "sparse_problems.hpp"
#include "test_support.hpp"

using namespace pehl;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1
Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double fc_worst = 0.0;
  double lstm_worst = 0.0;
  int configs = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const int batch = 8 + trial % 5;
    fc_worst = std::max(fc_worst, testing::fc_grad_trial(trial, batch).max_relative_error);
    lstm_worst = std::max(lstm_worst, testing::lstm_grad_trial(trial, batch).max_relative_error);
    configs += 2;
  }
  // Linear layers: affine maps and the embedding gather.
  double linear_worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(900 + static_cast<std::uint64_t>(trial));
    const int in = 1 + static_cast<int>(uniform_index(rng, 5));
    const int out = 1 + static_cast<int>(uniform_index(rng, 5));
    const int n = 1 + static_cast<int>(uniform_index(rng, 8));
    nn::Affine a = nn::Affine::init(in, out, rng, "a");
    a.bias.value = nn::uniform_matrix(1, out, 1.0, rng);
    nn::Param x("x", nn::uniform_matrix(n, in, 1.0, rng));
    const nn::Matrix w = nn::uniform_matrix(n, out, 1.0, rng);
    const auto r = nn::grad_check([&] { return a.forward(x.value).cwiseProduct(w).sum(); },
                                  [&] {
                                    nn::zero_grads({&a.weight, &a.bias, &x});
                                    x.grad = a.backward(x.value, w);
                                  },
                                  {&a.weight, &a.bias, &x});
    linear_worst = std::max(linear_worst, r.max_relative_error);

    nn::Embedding e = nn::Embedding::init(3, rng);
    const auto bytes = testing::random_bytes(rng, static_cast<std::size_t>(n));
    const nn::Matrix we = nn::uniform_matrix(n, 3, 1.0, rng);
    const auto re = nn::grad_check([&] { return e.forward(bytes).cwiseProduct(we).sum(); },
                                   [&] {
                                     e.table.zero_grad();
                                     e.backward(bytes, we);
                                   },
                                   {&e.table});
    linear_worst = std::max(linear_worst, re.max_relative_error);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = fc_worst <= 1e-4 && lstm_worst <= 1e-4 && linear_worst <= 1e-6 && configs >= 20 && secs < 120.0;
  o.detail = std::to_string(configs) + " configs; max rel err FC " + fmt("%.2e", fc_worst) + ", attn-LSTM " +
             fmt("%.2e", lstm_worst) + ", linear " + fmt("%.2e", linear_worst) + "; " + fmt("%.1f s", secs);
  return o;
}

// ---------------------------------------------------------------- 2
Outcome attention_simplex() {
  Rng rng(2);
  double worst_sum = 0.0;
  double min_alpha = 1.0;
  double worst_hull = 0.0;
  auto check = [&](const AttentionTrace& tr) {
    double sum = 0.0;
    for (double a : tr.alpha) {
      sum += a;
      min_alpha = std::min(min_alpha, a);
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    const nn::RowVector ctx = attention_output(tr);
    for (Eigen::Index j = 0; j < ctx.size(); ++j) {
      worst_hull = std::max(worst_hull, tr.h_seq.col(j).minCoeff() - ctx(j));
      worst_hull = std::max(worst_hull, ctx(j) - tr.h_seq.col(j).maxCoeff());
    }
  };
  // 500 random attention blocks over random states.
  for (int i = 0; i < 500; ++i) {
    const int d = 1 + static_cast<int>(uniform_index(rng, 8));
    const int units = 1 + static_cast<int>(uniform_index(rng, 6));
    const int steps = 1 + static_cast<int>(uniform_index(rng, 40));
    AttentionBlock a = AttentionBlock::init(d, units, rng);
    a.bias.value = nn::uniform_matrix(1, units, 1.0, rng);
    a.norm.running_mean = nn::uniform_matrix(1, units, 1.0, rng);
    a.norm.running_var = nn::uniform_matrix(1, units, 1.0, rng).array().abs() + 1e-3;
    a.v.value *= 20.0;  // sharp softmaxes too
    check(attention_weights(nn::uniform_matrix(steps, d, 5.0, rng), a));
  }
  // 500 random byte regions through random untrained networks.
  for (int i = 0; i < 50; ++i) {
    AttnConfig c;
    c.embed_dim = 4;
    c.state = 2 + i % 4;
    c.lstm_layers = 1 + i % 3;
    AttnLstmNet net(c, static_cast<std::uint64_t>(i));
    for (int k = 0; k < 10; ++k) {
      const auto bytes = testing::random_bytes(rng, 1 + uniform_index(rng, 64));
      check(net.trace(bytes));
    }
  }
  Outcome o;
  o.pass = worst_sum <= 1e-9 && min_alpha >= 0.0 && worst_hull <= 0.0;
  o.detail = "1000 inputs; max |sum-1| " + fmt("%.1e", worst_sum) + ", min alpha " + fmt("%.2e", min_alpha) +
             ", max hull violation " + fmt("%.1e", std::max(worst_hull, 0.0));
  return o;
}

// ---------------------------------------------------------------- 3
Outcome auc_oracle() {
  Rng rng(3);
  double worst_pair = 0.0;
  double worst_trap = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 199);
    const std::uint64_t levels = trial % 2 == 0 ? 5 + uniform_index(rng, 20) : 0;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = levels ? static_cast<double>(uniform_index(rng, levels)) / static_cast<double>(levels) : uniform01(rng);
      y[i] = static_cast<int>(uniform_index(rng, 2));
    }
    y[0] = 0;
    y[1] = 1;
    double concordant = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] != 1) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (y[j] != 0) continue;
        pairs += 1.0;
        concordant += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
    const RocAuc r = roc_auc_points(s, y);
    worst_pair = std::max(worst_pair, std::abs(*r.auc - concordant / pairs));
    worst_trap = std::max(worst_trap, std::abs(*r.auc - trapezoid_area(r.roc)));
  }
  Outcome o;
  o.pass = worst_pair <= 1e-12 && worst_trap <= 1e-12;
  o.detail = "500 sets; max |rank - pairwise| " + fmt("%.1e", worst_pair) + ", max |rank - trapezoid| " +
             fmt("%.1e", worst_trap);
  return o;
}

// ---------------------------------------------------------------- 4
Outcome mdi_oracle() {
  int exact = 0;
  double worst_sum = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(400 + static_cast<std::uint64_t>(trial));
    const std::size_t n = 8 + uniform_index(rng, 57);
    const std::size_t d = 1 + uniform_index(rng, 6);
    const auto p = testing::random_problem(rng, n, d);
    ForestOptions opt;
    opt.kind = trial % 2 ? ForestKind::extra_trees : ForestKind::random_forest;
    opt.n_trees = 1 + static_cast<int>(uniform_index(rng, 10));
    opt.max_depth = 1 + static_cast<int>(uniform_index(rng, 4));
    opt.seed = static_cast<std::uint64_t>(trial);
    const auto forest = train_forest(p.table, p.labels, opt);
    std::vector<double> totals;
    const auto oracle = testing::mdi_oracle(forest, d, &totals);
    const MdiReport rep = mdi_scores(forest);
    exact += rep.mdi == oracle;
    double sum = 0.0;
    for (double v : rep.mdi) sum += v;
    double total = 0.0;
    for (double t : totals) total += t;
    worst_sum = std::max(worst_sum, std::abs(sum - total / static_cast<double>(forest.trees.size())));
  }
  Outcome o;
  o.pass = exact == 50 && worst_sum <= 1e-12;
  o.detail = std::to_string(exact) + "/50 forests bit-identical to the oracle; max |sum MDI - total decrease| " +
             fmt("%.1e", worst_sum);
  return o;
}

// ---------------------------------------------------------------- 5
Outcome elastic_net_optimality() {
  double worst_kkt = 0.0;
  double worst_gap = 0.0;
  int increases = 0;
  int unconverged = 0;
  ElasticNetOptions tight;
  tight.tolerance = 1e-9;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(500 + static_cast<std::uint64_t>(trial));
    const auto data = testing::random_problem(rng, 60 + 10 * static_cast<std::size_t>(trial), 20 + trial, 0.25);
    const auto grid = log_spaced_grid(0.01, 10.0, 10);
    for (double C : grid) {
      FitDiagnostics diag;
      const LinearModel m = train_elastic_net(data, C, nullptr, {}, &diag);
      unconverged += !diag.converged;
      worst_kkt = std::max(worst_kkt, kkt_residual(data, m));
      for (std::size_t k = 1; k < diag.objective_trace.size(); ++k) {
        increases += diag.objective_trace[k] > diag.objective_trace[k - 1];
      }
    }
    const auto path = regularization_path(data, grid, 0, 0, tight);
    for (const auto& step : path.steps) {
      const LinearModel cold = train_elastic_net(data, step.C, nullptr, tight);
      for (std::size_t j = 0; j < cold.w.size(); ++j) {
        worst_gap = std::max(worst_gap, std::abs(step.model.w[j] - cold.w[j]));
      }
      worst_gap = std::max(worst_gap, std::abs(step.model.intercept - cold.intercept));
      for (std::size_t k = 1; k < step.diagnostics.objective_trace.size(); ++k) {
        increases += step.diagnostics.objective_trace[k] > step.diagnostics.objective_trace[k - 1];
      }
    }
  }
  Outcome o;
  o.pass = worst_kkt <= 1e-4 && worst_gap <= 1e-6 && increases == 0 && unconverged == 0;
  o.detail = "20 problems x 10 C; max KKT residual " + fmt("%.1e", worst_kkt) + ", max |warm - cold| " +
             fmt("%.1e", worst_gap) + ", objective increases " + std::to_string(increases);
  return o;
}

// ---------------------------------------------------------------- 6
Outcome bit_exact_extraction() {
  const auto dir = testing::fixture_dir() / "golden";
  const auto index = nlohmann::json::parse(testing::read_text(dir / "index.json"));
  std::size_t matched = 0;
  for (const auto& c : index) {
    const std::string name = c["name"];
    const auto input = testing::parse_hex(testing::read_text(dir / (name + ".input.hex")));
    const HeaderRegion r = extract_header_region(input);
    matched += region_hex_dump(r) == testing::read_text(dir / (name + ".region.hex")) &&
               r.padded_tail == c["padded_tail"].get<std::uint32_t>() &&
               r.degenerate == c["degenerate"].get<bool>();
  }
  int round_trips = 0;
  int attempts = 0;
  for (const std::uint16_t magic : {kMagicPe32, kMagicPe32Plus}) {
    const bool is64 = magic == kMagicPe32Plus;
    for (const auto& a : testing::kAnchors) {
      ++attempts;
      const std::size_t lo = is64 ? a.lo64 : a.lo32;
      const std::size_t hi = is64 ? a.hi64 : a.hi32;
      HeaderRegion r;
      r.bytes[88] = static_cast<std::uint8_t>(magic);
      r.bytes[89] = static_cast<std::uint8_t>(magic >> 8);
      const std::size_t idx = *find_feature(a.name);
      auto value = [&] { return parse_features(r).as_row()[idx]; };
      bool ok = true;
      if (a.mask != 0) {
        r.bytes[lo] = static_cast<std::uint8_t>(~a.mask);
        ok = value() == 0.0;
        r.bytes[lo] = a.mask;
        ok = ok && value() == 1.0;
      } else if (std::string(a.name) == "Subsystem") {
        r.bytes[lo] = 10;
        ok = value() == categorical_vocabularies()[2].encode(10) && value() != kUnknownCategory;
      } else {
        const std::uint8_t sentinel[] = {0xD4, 0xC3, 0xB2, 0xA1};
        for (std::size_t k = lo; k < hi; ++k) r.bytes[k] = sentinel[k - lo];
        ok = value() == 2712847316.0;
      }
      round_trips += ok;
    }
  }
  Outcome o;
  o.pass = index.size() >= 12 && matched == index.size() && round_trips == attempts;
  o.detail = std::to_string(matched) + "/" + std::to_string(index.size()) + " golden regions exact; " +
             std::to_string(round_trips) + "/" + std::to_string(attempts) + " field sentinels round-trip";
  return o;
}

// ---------------------------------------------------------------- 7-10

struct Corpus {
  DatasetManifest manifest;
  std::vector<HeaderRegion> test_regions;
  std::vector<int> test_labels;
};

Corpus make_corpus(std::size_t n, std::uint64_t seed, const std::string& name) {
  CorpusOptions opt;
  opt.n = n;
  opt.noise = 0.05;
  opt.seed = seed;
  opt.train_fraction = 0.7;
  Corpus c;
  c.manifest = write_corpus(generate_synthetic_corpus(opt), testing::scratch_dir(name));
  for (std::size_t i : c.manifest.indices(Split::test)) {
    c.test_regions.push_back(extract_header_region(read_file_bytes(c.manifest.resolve(c.manifest.entries[i]))));
    c.test_labels.push_back(c.manifest.entries[i].label);
  }
  return c;
}

ExperimentConfig planted_config(Method method) {
  ExperimentConfig c;
  c.method = method;
  c.seed = 7;
  c.ngram_sizes = {2};
  // Attention LSTM at S=32: one layer, light dropout, an 8-wide embedding and
  // 10x weight decay. Deeper or more heavily dropped-out stacks train less
  // reliably at this corpus size.
  c.attn.state = 32;
  c.attn.lstm_layers = 1;
  c.attn.embed_dim = 8;
  c.attn.embed_dropout = 0.1;
  c.attn.lstm_dropout = 0.1;
  c.attn.attn_dropout = 0.1;
  c.attn.head_dropout = 0.1;
  c.attn.embed_l2 = 1e-3;
  c.attn.lstm_l2 = 1e-4;
  c.attn.dense_l2 = 1e-3;
  c.attn_train = nn::TrainConfig{1e-3, 32, 20, 0, 1.0};
  return c;
}

struct PlantedRun {
  Corpus corpus;
  std::vector<std::pair<Method, ExperimentResult>> results;
  double seconds = 0.0;

  const ExperimentResult* find(Method m) const {
    for (const auto& [method, r] : results) {
      if (method == m) return &r;
    }
    return nullptr;
  }
};

const Method kMethods[] = {Method::fields_trees, Method::fc, Method::ngram_linear, Method::attn_lstm};

std::optional<PlantedRun> planted;

Outcome end_to_end() {
  const auto t0 = Clock::now();
  PlantedRun run;
  run.corpus = make_corpus(2000, 7, "acceptance_planted");
  std::ostringstream detail;
  bool pass = true;
  for (Method m : kMethods) {
    const auto tm = Clock::now();
    ExperimentHooks hooks;
    auto r = run_experiment(run.corpus.manifest, planted_config(m), hooks);
    const double target = (m == Method::fields_trees || m == Method::fc) ? 0.90 : 0.85;
    const double ba = r.test.balanced_accuracy;
    pass = pass && ba >= target;
    detail << to_string(m) << " " << fmt("%.3f", ba) << " (>= " << fmt("%.2f", target) << ", "
           << fmt("%.0f s", seconds_since(tm)) << "); ";
    run.results.emplace_back(m, std::move(r));
  }
  run.seconds = seconds_since(t0);
  pass = pass && run.seconds <= 900.0;
  detail << "total " << fmt("%.0f s", run.seconds) << " (<= 900 s)";
  planted = std::move(run);
  return {pass, detail.str()};
}

Outcome calibration_recovery() {
  if (!planted) return {false, "needs the planted-corpus models"};
  const ExperimentResult* fc = planted->find(Method::fc);
  const auto& scores = fc->test_scores;
  const auto& labels = fc->test_labels;
  const std::size_t n = scores.size();
  double pre_sum = 0.0;
  double post_sum = 0.0;
  double worst_shifted = 0.0;
  double worst_auc_drift = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    // A constant shift moves every score across the 0.5 threshold while
    // leaving their order, hence the AUC, untouched.
    const double shift = seed % 2 == 0 ? 0.5 : -0.5;
    std::vector<double> shifted(scores);
    for (double& s : shifted) s += shift;

    Rng rng(derive_seed(seed, 0x63616c));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<std::size_t> fit;
    do {
      nn::shuffle_order(order, rng);
      fit.assign(order.begin(), order.begin() + 20);
    } while (std::all_of(fit.begin(), fit.end(), [&](std::size_t i) { return labels[i] == labels[fit[0]]; }));
    std::vector<double> fit_s;
    std::vector<int> fit_y;
    for (std::size_t i : fit) {
      fit_s.push_back(shifted[i]);
      fit_y.push_back(labels[i]);
    }
    std::vector<double> eval_pre;
    std::vector<double> eval_shifted;
    std::vector<int> eval_y;
    for (std::size_t k = 20; k < n; ++k) {
      eval_pre.push_back(scores[order[k]]);
      eval_shifted.push_back(shifted[order[k]]);
      eval_y.push_back(labels[order[k]]);
    }
    const double pre = balanced_accuracy(eval_pre, eval_y);
    const double after_shift = balanced_accuracy(eval_shifted, eval_y);
    worst_shifted = std::max(worst_shifted, after_shift);
    worst_auc_drift = std::max(worst_auc_drift, std::abs(*roc_auc_points(eval_shifted, eval_y).auc -
                                                         *roc_auc_points(eval_pre, eval_y).auc));
    const CalibrationResult cal = calibrate_scores(fit_s, fit_y, eval_shifted, eval_y);
    pre_sum += pre;
    post_sum += cal.post_balanced_accuracy;
  }
  const double ratio = post_sum / pre_sum;
  Outcome o;
  o.pass = worst_shifted < 0.60 && worst_auc_drift <= 1e-9 && ratio >= 0.90;
  o.detail = "fc scores, 10 seeds; shifted balacc <= " + fmt("%.3f", worst_shifted) + ", AUC drift " +
             fmt("%.1e", worst_auc_drift) + "; mean pre " + fmt("%.3f", pre_sum / 10) + ", post " +
             fmt("%.3f", post_sum / 10) + " (" + fmt("%.1f%%", 100 * ratio) + " recovered)";
  return o;
}

Outcome importance_overlap() {
  if (!planted) return {false, "needs the planted-corpus models"};
  const ExperimentResult* trees = planted->find(Method::fields_trees);
  const ExperimentResult* attn = planted->find(Method::attn_lstm);
  const auto& names = std::get<TreeEnsemble>(trees->model.impl).feature_names;
  const auto ranking = trees->mdi->ranking();
  std::set<std::string> top3;
  std::string top3_text;
  for (std::size_t k = 0; k < 3 && k < ranking.size(); ++k) {
    top3.insert(names[ranking[k]]);
    top3_text += (k ? "," : "") + names[ranking[k]];
  }
  const bool mdi_ok = top3.count("Subsystem") && top3.count("IMAGE_FILE_DLL");

  const auto top70 = attn->importance->top(70);
  auto rank_of = [&](std::initializer_list<int> positions) {
    for (std::size_t k = 0; k < top70.size(); ++k) {
      for (int p : positions) {
        if (top70[k].position == p) return static_cast<int>(k) + 1;
      }
    }
    return -1;
  };
  const int dll_rank = rank_of({87});           // Characteristics high byte
  const int subsystem_rank = rank_of({156, 157});
  Outcome o;
  o.pass = mdi_ok && dll_rank > 0 && subsystem_rank > 0;
  o.detail = "MDI top-3 [" + top3_text + "]; attention top-70 rank of IMAGE_FILE_DLL byte " +
             (dll_rank > 0 ? std::to_string(dll_rank) : "absent") + ", Subsystem bytes " +
             (subsystem_rank > 0 ? std::to_string(subsystem_rank) : "absent");
  return o;
}

Outcome determinism_and_persistence() {
  // Byte-identical artifacts and reports from two runs with the same seed.
  const Corpus small = make_corpus(300, 11, "acceptance_determinism");
  int identical = 0;
  for (Method m : kMethods) {
    ExperimentConfig c = planted_config(m);
    c.fc_train.epochs = 2;
    c.attn_train.epochs = 1;
    const auto a = run_experiment(small.manifest, c);
    const auto b = run_experiment(small.manifest, c);
    const auto da = testing::scratch_dir("acceptance_det_a");
    const auto db = testing::scratch_dir("acceptance_det_b");
    a.write_reports(da);
    b.write_reports(db);
    bool same = encode_artifact(to_artifact(a.model)) == encode_artifact(to_artifact(b.model));
    for (const auto& entry : std::filesystem::directory_iterator(da)) {
      same = same && testing::read_text(entry.path()) == testing::read_text(db / entry.path().filename());
    }
    identical += same;
  }

  // Save/load round trips of the planted-corpus models on 100 probes.
  int round_trips = 0;
  if (planted) {
    const std::span<const HeaderRegion> probes(planted->corpus.test_regions.data(), 100);
    for (const auto& [method, r] : planted->results) {
      const auto path = testing::scratch_dir("acceptance_persist") / "model.pehl";
      save_model(r.model, path);
      const TrainedModel back = load_model(path);
      const auto want = r.model.score(probes);
      const auto got = back.score(probes);
      bool same = want.size() == 100 && want == got;
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        same = std::memcmp(&want[i], &got[i], sizeof(double)) == 0;
      }
      round_trips += same;
    }
  }
  Outcome o;
  o.pass = identical == 4 && round_trips == 4;
  o.detail = std::to_string(identical) + "/4 methods byte-identical across runs; " + std::to_string(round_trips) +
             "/4 models identical on 100 probes after save/load";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {1, "gradient correctness", gradient_correctness},
      {2, "attention simplex and hull", attention_simplex},
      {3, "AUC oracle equivalence", auc_oracle},
      {4, "MDI oracle", mdi_oracle},
      {5, "elastic-net optimality", elastic_net_optimality},
      {6, "bit-exact extraction", bit_exact_extraction},
      {7, "end-to-end synthetic experiment", end_to_end},
      {8, "calibration recovery", calibration_recovery},
      {9, "importance overlap", importance_overlap},
      {10, "determinism and persistence", determinism_and_persistence},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ["
              << fmt("%.1f s", seconds_since(t0)) << "]" << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
