// End-to-end acceptance gate. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any of them fail.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "asl/asl.hpp"
#include "oracles.hpp"
#include "properties.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

const std::vector<double> kThresholds = {0.3, 0.4, 0.5, 0.6, 0.7};

double eval_split(asl::System& sys, const asl::GeneratedSplit& split) {
  asl::DecodeConfig dec;
  asl::SoftNmsConfig nms;
  std::vector<asl::VideoDetections> all;
  for (size_t i = 0; i < split.annotations.size(); ++i) {
    asl::VideoDetections vd;
    vd.video_id = split.annotations[i].video_id;
    vd.num_frames = split.annotations[i].num_frames;
    vd.detections = asl::run_inference(sys.model, split.features[i], dec, nms);
    all.push_back(std::move(vd));
  }
  asl::EvalConfig cfg;
  cfg.thresholds = kThresholds;
  return asl::evaluate_detections(all, split.annotations, cfg).average_map;
}

// ---- criterion 1: analytic gradients match finite differences ----

bool criterion_gradients(std::string& detail) {
  auto t0 = Clock::now();
  double worst = 0.0;
  bool ok = true;
  for (uint64_t seed = 0; seed < 5u; ++seed) {
    asl::GradSuiteConfig g;  // frames 32, dim 8, classes 3: at the allowed caps
    g.seed = seed;
    asl::GradCheckReport rep = asl::run_loss_gradcheck(g);
    worst = std::max(worst, rep.worst.rel_err);
    ok = ok && rep.ok;
  }
  double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  detail = fmt("5 seeds, worst rel err %.2e (tol 1e-4), %.1fs (limit 120s)", worst, secs);
  return ok;
}

// ---- criterion 2: frozen closed-form values ----

bool criterion_formulas(std::string& detail) {
  asl::ClassSensitivity sens(1);
  double e_cls = std::abs(sens.p_cls(0, 0.5) - std::exp(-0.125));
  double e_loc = std::abs(sens.p_loc(0, -0.5) - (1.0 + std::exp(-0.5)));

  asl::Tape t(false);
  asl::Matrix sp(1, 1), ep(1, 1), sg(1, 1), eg(1, 1);
  sp(0, 0) = 0.0;
  ep(0, 0) = 10.0;
  sg(0, 0) = 5.0;
  eg(0, 0) = 15.0;
  asl::Var d = asl::diou_cols(t, t.constant(sp), t.constant(ep), sg, eg);
  double e_diou = std::abs(t.val(d)(0, 0) - 0.77778);

  detail = fmt("cls err %.1e, loc err %.1e (tol 1e-12); diou err %.1e (tol 1e-5)", e_cls, e_loc, e_diou);
  return e_cls <= 1e-12 && e_loc <= 1e-12 && e_diou <= 1e-5;
}

// ---- criterion 3: suppression and AP match brute-force oracles ----

bool criterion_oracles(std::string& detail) {
  props::PropResult nms = props::prop_nms_matches_bruteforce(1000);
  props::PropResult ap = props::prop_ap_matches_exhaustive(1000);
  detail = fmt("suppression %d/%d, AP %d/%d", nms.cases - nms.failures, nms.cases, ap.cases - ap.failures,
               ap.cases);
  if (!nms.ok()) detail += "; " + nms.detail;
  if (!ap.ok()) detail += "; " + ap.detail;
  return nms.ok() && ap.ok();
}

// ---- criterion 4: assignment and file-format round trips ----

bool criterion_roundtrips(std::string& detail) {
  props::PropResult assign = props::prop_assignment_roundtrip();
  props::PropResult feat = props::prop_feature_file_roundtrip();

  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "asl_acceptance_rt";
  fs::create_directories(dir);
  bool files_ok = true;
  {
    std::vector<asl::VideoAnnotation> annos = {{"v", 32, {{2, 9, 0}, {12, 30, 1}}}, {"w", 16, {}}};
    asl::save_annotations((dir / "a.json").string(), annos);
    auto back = asl::load_annotations((dir / "a.json").string());
    files_ok = files_ok && back.size() == 2 && back[0].instances.size() == 2 &&
               back[0].instances[1].end == 30 && back[1].num_frames == 16;
  }
  {
    asl::ModelConfig mc;
    mc.dim = 3;
    mc.num_classes = 2;
    mc.levels = 2;
    asl::Rng r1(7), r2(8);
    asl::System a(mc, r1), b(mc, r2);
    asl::save_params((dir / "p.aslp").string(), mc, a.params());
    asl::load_params_into((dir / "p.aslp").string(), b.params());
    auto pa = a.params(), pb = b.params();
    for (size_t i = 0; i < pa.size(); ++i) files_ok = files_ok && pa[i]->value.a == pb[i]->value.a;
  }
  std::error_code ec;
  fs::remove_all(dir, ec);

  detail = fmt("assignment %d/%d, feature files %d/%d, annotation and parameter files %s",
               assign.cases - assign.failures, assign.cases, feat.cases - feat.failures, feat.cases,
               files_ok ? "exact" : "MISMATCH");
  return assign.ok() && feat.ok() && files_ok;
}

// ---- criterion 5: training lifts test mAP on the reference dataset ----

struct ReferenceRun {
  std::optional<asl::System> sys;
  double untrained_map = 0.0, trained_map = 0.0;
  double first_loss = 0.0, final_loss = 0.0;
  double secs = 0.0;
};

bool criterion_reference_training(ReferenceRun& run, std::string& detail) {
  auto t0 = Clock::now();
  asl::GenerateConfig gc;
  gc.seed = 0;
  gc.num_train = 200;
  gc.num_test = 50;
  gc.num_frames = 256;
  gc.dim = 32;
  gc.num_classes = 3;
  gc.noise = 0.5;
  asl::SyntheticGenerator gen(gc);
  asl::GeneratedSplit train = gen.train_split(), test = gen.test_split();

  asl::TrainConfig tc;
  tc.model.dim = gc.dim;
  tc.model.num_classes = gc.num_classes;
  asl::Rng rng(tc.seed);
  run.sys.emplace(tc.model, rng);

  run.untrained_map = eval_split(*run.sys, test);
  asl::Trainer trainer(*run.sys, tc);
  std::vector<asl::EpochStats> stats = trainer.train(train.annotations, train.features);
  run.first_loss = stats.front().loss;
  run.final_loss = stats.back().loss;
  run.trained_map = eval_split(*run.sys, test);
  run.secs = seconds_since(t0);

  double uplift = run.trained_map - run.untrained_map;
  bool ok = uplift >= 0.25 && run.final_loss < 0.5 * run.first_loss && run.secs < 900.0;
  detail = fmt("avg mAP %.3f -> %.3f (uplift %.3f, need 0.25); loss %.2f -> %.2f; %.0fs (limit 900s)",
               run.untrained_map, run.trained_map, uplift, run.first_loss, run.final_loss, run.secs);
  return ok;
}

// ---- criterion 6: sensitivity weighting and contrastive term each help ----

bool criterion_ablation(std::string& detail) {
  const int kSeeds = 3, kEpochs = 5;
  double mean_vanilla = 0.0, mean_ase = 0.0, mean_full = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    asl::GenerateConfig gc;
    gc.seed = static_cast<uint64_t>(seed);
    gc.num_train = 60;
    gc.num_test = 20;
    gc.num_frames = 128;
    gc.dim = 16;
    gc.num_classes = 3;
    gc.max_duration = 60;
    gc.noise = 0.5;
    asl::SyntheticGenerator gen(gc);
    asl::GeneratedSplit train = gen.train_split(), test = gen.test_split();

    auto run_variant = [&](bool sens_on, double lambda) {
      asl::TrainConfig tc;
      tc.seed = seed;
      tc.epochs = kEpochs;
      tc.class_sensitivity = sens_on;
      tc.instance_sensitivity = sens_on;
      tc.lambda_contrastive = lambda;
      tc.model.dim = gc.dim;
      tc.model.num_classes = gc.num_classes;
      asl::Rng rng(tc.seed);
      asl::System sys(tc.model, rng);
      asl::Trainer trainer(sys, tc);
      trainer.train(train.annotations, train.features);
      return eval_split(sys, test);
    };
    mean_vanilla += run_variant(false, 0.0);
    mean_ase += run_variant(true, 0.0);
    mean_full += run_variant(true, 0.3);
  }
  mean_vanilla /= kSeeds;
  mean_ase /= kSeeds;
  mean_full /= kSeeds;
  bool ok = mean_full >= mean_ase && mean_ase >= mean_vanilla && mean_full - mean_vanilla >= 0.01;
  detail = fmt("mean avg mAP over %d seeds: plain %.3f <= weighted %.3f <= weighted+contrastive %.3f (gap %.3f, need 0.01)",
               kSeeds, mean_vanilla, mean_ase, mean_full, mean_full - mean_vanilla);
  return ok;
}

// ---- criterion 7: learned boundary curves peak outside the action center ----

bool criterion_learned_offsets(const ReferenceRun& run, std::string& detail) {
  if (!run.sys) {
    detail = "no trained system available";
    return false;
  }
  const asl::ClassSensitivity& sens = run.sys->sens;
  int good = 0;
  std::string per_class;
  for (int c = 0; c < sens.num_classes; ++c) {
    int arg_sot = 0, arg_eot = 0;
    double best_sot = -1.0, best_eot = -1.0;
    for (int i = 0; i <= 100; ++i) {
      double d = -0.5 + 0.01 * i;
      double ps = sens.p_start(c, d), pe = sens.p_end(c, d);
      if (ps > best_sot) {
        best_sot = ps;
        arg_sot = i;
      }
      if (pe > best_eot) {
        best_eot = pe;
        arg_eot = i;
      }
    }
    double d_sot = -0.5 + 0.01 * arg_sot, d_eot = -0.5 + 0.01 * arg_eot;
    if (d_sot < -1.0 / 6.0 && d_eot > 1.0 / 6.0) ++good;
    per_class += fmt("%s[%.2f, %.2f]", c ? " " : "", d_sot, d_eot);
  }
  detail = fmt("start/end peaks per class: %s; %d/%d outside the center third (need 2)", per_class.c_str(), good,
               sens.num_classes);
  return good >= 2;
}

// ---- criterion 8: every documented invariant holds under random probing ----

bool criterion_properties(std::string& detail) {
  auto all = props::run_all_properties();
  int total_cases = 0;
  bool ok = true;
  std::string failures;
  for (const auto& np : all) {
    total_cases += np.result.cases;
    if (!np.result.ok()) {
      ok = false;
      failures += "; " + np.name + ": " + np.result.detail;
    }
  }
  detail = fmt("%zu suites, %d cases%s", all.size(), total_cases, failures.c_str());
  return ok;
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int n, const char* name, bool ok, const std::string& detail) {
    std::printf("criterion %d (%s): %s - %s\n", n, name, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  };
  auto guarded = [&](int n, const char* name, auto&& fn) {
    std::string detail;
    bool ok = false;
    try {
      ok = fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    report(n, name, ok, detail);
  };

  ReferenceRun ref_run;
  guarded(1, "gradient checks", criterion_gradients);
  guarded(2, "closed-form values", criterion_formulas);
  guarded(3, "brute-force oracles", criterion_oracles);
  guarded(4, "round trips", criterion_roundtrips);
  guarded(5, "reference training", [&](std::string& d) { return criterion_reference_training(ref_run, d); });
  guarded(6, "ablation ordering", criterion_ablation);
  guarded(7, "learned boundary offsets", [&](std::string& d) { return criterion_learned_offsets(ref_run, d); });
  guarded(8, "property suites", criterion_properties);

  if (failed) std::printf("%d criterion(s) failed\n", failed);
  return failed ? 1 : 0;
}
