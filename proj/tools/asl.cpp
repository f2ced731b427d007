// Command-line front end: dataset generation, training, inference,
// evaluation, gradient checking, and sensitivity inspection.
//
// Exit codes: 0 success, 1 usage error, 2 bad input data, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "asl/asl.hpp"

namespace fs = std::filesystem;

namespace {

void write_split(const std::string& dir, const asl::GeneratedSplit& split) {
  fs::create_directories(asl::features_dir(dir));
  for (size_t i = 0; i < split.annotations.size(); ++i)
    asl::write_features(asl::feature_path(dir, split.annotations[i].video_id), split.features[i]);
  asl::save_annotations(asl::annotations_path(dir), split.annotations);
}

int dataset_num_classes(const std::vector<asl::VideoAnnotation>& videos) {
  int max_label = -1;
  for (const auto& v : videos)
    for (const auto& inst : v.instances) max_label = std::max(max_label, inst.label);
  if (max_label < 0) throw asl::DataError("dataset has no instances; cannot infer class count");
  return max_label + 1;
}

std::vector<double> parse_thresholds(const std::string& spec) {
  std::vector<double> out;
  size_t c1 = spec.find(':');
  if (c1 == std::string::npos) {
    out.push_back(std::stod(spec));
    return out;
  }
  size_t c2 = spec.find(':', c1 + 1);
  if (c2 == std::string::npos) throw asl::DataError("thresholds: expected lo:step:hi, got " + spec);
  double lo = std::stod(spec.substr(0, c1));
  double step = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
  double hi = std::stod(spec.substr(c2 + 1));
  if (step <= 0.0 || hi < lo) throw asl::DataError("thresholds: bad range " + spec);
  for (double t = lo; t <= hi + 1e-9; t += step) out.push_back(t);
  return out;
}

std::string threshold_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw asl::DataError("cannot open for write: " + path);
  os << text;
  if (!os) throw asl::DataError("write failed: " + path);
}

struct TrainCliOverrides {
  std::string config_path;
  int epochs = -1;
  int batch_size = -1;
  double lr = -1.0;
  double lambda_contrastive = -1.0;
  int64_t seed = -1;
  int class_sensitivity = -1;     // tri-state: unset / off / on
  int instance_sensitivity = -1;
};

asl::TrainConfig resolve_train_config(const TrainCliOverrides& o) {
  asl::TrainConfig cfg;
  if (!o.config_path.empty()) cfg = asl::load_train_config(o.config_path);
  if (o.epochs >= 0) cfg.epochs = o.epochs;
  if (o.batch_size >= 0) cfg.batch_size = o.batch_size;
  if (o.lr >= 0.0) cfg.lr = o.lr;
  if (o.lambda_contrastive >= 0.0) cfg.lambda_contrastive = o.lambda_contrastive;
  if (o.seed >= 0) cfg.seed = static_cast<uint64_t>(o.seed);
  if (o.class_sensitivity >= 0) cfg.class_sensitivity = o.class_sensitivity != 0;
  if (o.instance_sensitivity >= 0) cfg.instance_sensitivity = o.instance_sensitivity != 0;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal action localization on synthetic feature sequences"};
  app.require_subcommand(1);

  // ---- generate ----
  auto* gen = app.add_subcommand("generate", "Create a synthetic dataset (train/ and test/ splits)");
  std::string gen_out, gen_config;
  asl::GenerateConfig gen_flags;
  gen->add_option("--config", gen_config, "Generation config JSON");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--train", gen_flags.num_train, "Training videos");
  gen->add_option("--test", gen_flags.num_test, "Test videos");
  gen->add_option("--frames", gen_flags.num_frames, "Frames per video");
  gen->add_option("--dim", gen_flags.dim, "Feature dimension");
  gen->add_option("--classes", gen_flags.num_classes, "Number of action classes");
  gen->add_option("--min-instances", gen_flags.min_instances, "Minimum instances per video");
  gen->add_option("--max-instances", gen_flags.max_instances, "Maximum instances per video");
  gen->add_option("--min-duration", gen_flags.min_duration, "Minimum instance duration (frames)");
  gen->add_option("--max-duration", gen_flags.max_duration, "Maximum instance duration (frames)");
  gen->add_option("--noise", gen_flags.noise, "Instance feature noise stddev");
  gen->add_option("--seed", gen_flags.seed, "Master seed");
  gen->callback([&] {
    asl::GenerateConfig cfg;
    if (!gen_config.empty()) cfg = asl::load_generate_config(gen_config);
    // Flags passed on the command line override the config file.
    if (gen->count("--train")) cfg.num_train = gen_flags.num_train;
    if (gen->count("--test")) cfg.num_test = gen_flags.num_test;
    if (gen->count("--frames")) cfg.num_frames = gen_flags.num_frames;
    if (gen->count("--dim")) cfg.dim = gen_flags.dim;
    if (gen->count("--classes")) cfg.num_classes = gen_flags.num_classes;
    if (gen->count("--min-instances")) cfg.min_instances = gen_flags.min_instances;
    if (gen->count("--max-instances")) cfg.max_instances = gen_flags.max_instances;
    if (gen->count("--min-duration")) cfg.min_duration = gen_flags.min_duration;
    if (gen->count("--max-duration")) cfg.max_duration = gen_flags.max_duration;
    if (gen->count("--noise")) cfg.noise = gen_flags.noise;
    if (gen->count("--seed")) cfg.seed = gen_flags.seed;
    asl::SyntheticGenerator g(cfg);
    write_split(gen_out + "/train", g.train_split());
    write_split(gen_out + "/test", g.test_split());
    std::cout << "wrote " << cfg.num_train << " train and " << cfg.num_test << " test videos to " << gen_out
              << "\n";
  });

  // ---- train ----
  auto* tr = app.add_subcommand("train", "Train a detector on a dataset directory");
  std::string tr_data, tr_out;
  TrainCliOverrides tr_over;
  tr->add_option("--data", tr_data, "Dataset directory (features/ + annotations.json)")->required();
  tr->add_option("--out", tr_out, "Output directory for params and training log")->required();
  tr->add_option("--config", tr_over.config_path, "Training config JSON");
  tr->add_option("--epochs", tr_over.epochs, "Override epochs");
  tr->add_option("--batch-size", tr_over.batch_size, "Override batch size");
  tr->add_option("--lr", tr_over.lr, "Override learning rate");
  tr->add_option("--lambda", tr_over.lambda_contrastive, "Override contrastive weight");
  tr->add_option("--seed", tr_over.seed, "Override seed");
  bool cs_on = false, cs_off = false, is_on = false, is_off = false;
  tr->add_flag("--class-sensitivity", cs_on, "Enable class-level sensitivity weighting");
  tr->add_flag("--no-class-sensitivity", cs_off, "Disable class-level sensitivity weighting");
  tr->add_flag("--instance-sensitivity", is_on, "Enable instance-level sensitivity weighting");
  tr->add_flag("--no-instance-sensitivity", is_off, "Disable instance-level sensitivity weighting");
  tr->callback([&] {
    if ((cs_on && cs_off) || (is_on && is_off))
      throw CLI::ValidationError("sensitivity flags", "conflicting enable/disable flags");
    if (cs_on || cs_off) tr_over.class_sensitivity = cs_on ? 1 : 0;
    if (is_on || is_off) tr_over.instance_sensitivity = is_on ? 1 : 0;
    asl::TrainConfig cfg = resolve_train_config(tr_over);
    asl::LoadedDataset ds = asl::load_dataset(tr_data);
    cfg.model.dim = ds.features.at(0).cols;
    cfg.model.num_classes = dataset_num_classes(ds.annotations);

    asl::Rng rng(cfg.seed);
    asl::System sys(cfg.model, rng);
    asl::Trainer trainer(sys, cfg);

    fs::create_directories(tr_out);
    std::ofstream log(tr_out + "/train_log.jsonl");
    if (!log) throw asl::DataError("cannot open for write: " + tr_out + "/train_log.jsonl");
    trainer.on_epoch = [&](const asl::EpochStats& st) {
      // Wall time deliberately stays out of the persisted log so reruns with
      // the same seed produce byte-identical files.
      nlohmann::json j = {{"epoch", st.epoch},
                          {"loss", st.loss},
                          {"cls", st.cls},
                          {"loc", st.loc},
                          {"quality", st.quality},
                          {"contrastive", st.contrastive},
                          {"grad_norm", st.grad_norm},
                          {"mu_cls", st.mu_cls},
                          {"sigma_cls", st.sigma_cls},
                          {"mu_sot", st.mu_sot},
                          {"sigma_sot", st.sigma_sot},
                          {"mu_eot", st.mu_eot},
                          {"sigma_eot", st.sigma_eot}};
      log << j.dump() << "\n";
      log.flush();
      std::cout << "epoch " << st.epoch << " loss " << st.loss << " (" << st.seconds << "s)\n";
    };
    std::vector<asl::EpochStats> stats = trainer.train(ds.annotations, ds.features);
    asl::save_params(tr_out + "/params.aslp", cfg.model, sys.params());
    std::cout << "final loss " << stats.back().loss << "; params written to " << tr_out << "/params.aslp\n";
  });

  // ---- infer ----
  auto* inf = app.add_subcommand("infer", "Run detection over a dataset directory");
  std::string inf_data, inf_params, inf_out;
  asl::DecodeConfig dec_cfg;
  asl::SoftNmsConfig nms_cfg;
  inf->add_option("--data", inf_data, "Dataset directory")->required();
  inf->add_option("--params", inf_params, "Trained parameter file")->required();
  inf->add_option("--out", inf_out, "Detections JSON output path")->required();
  inf->add_option("--score-threshold", dec_cfg.score_threshold, "Candidate score threshold");
  inf->add_option("--pre-nms-topk", dec_cfg.pre_nms_topk, "Candidates kept before suppression");
  inf->add_option("--nms-sigma", nms_cfg.sigma, "Gaussian suppression width");
  inf->add_option("--min-score", nms_cfg.min_score, "Suppression pruning threshold");
  inf->add_option("--keep-k", nms_cfg.keep_k, "Detections kept per video");
  inf->callback([&] {
    asl::ModelConfig mc = asl::read_params_meta(inf_params);
    asl::Rng rng(0);
    asl::System sys(mc, rng);
    asl::load_params_into(inf_params, sys.params());
    asl::LoadedDataset ds = asl::load_dataset(inf_data);
    std::vector<asl::VideoDetections> all;
    for (size_t i = 0; i < ds.annotations.size(); ++i) {
      if (ds.features[i].cols != mc.dim)
        throw asl::DataError("feature dim mismatch for " + ds.annotations[i].video_id);
      asl::VideoDetections vd;
      vd.video_id = ds.annotations[i].video_id;
      vd.num_frames = ds.annotations[i].num_frames;
      vd.detections = asl::run_inference(sys.model, ds.features[i], dec_cfg, nms_cfg);
      all.push_back(std::move(vd));
    }
    asl::save_detections(inf_out, all);
    std::cout << "wrote detections for " << all.size() << " videos to " << inf_out << "\n";
  });

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "Score detections against annotations (mAP)");
  std::string ev_pred, ev_ann, ev_out, ev_thresholds = "0.1:0.1:0.9";
  asl::EvalConfig ev_cfg;
  ev->add_option("--preds,--predictions", ev_pred, "Detections JSON")->required();
  ev->add_option("--annos,--annotations", ev_ann, "Annotations JSON, or a dataset directory holding one")
      ->required();
  ev->add_option("--thresholds", ev_thresholds, "tIoU thresholds as lo:step:hi or a single value");
  ev->add_option("--per-video-cap", ev_cfg.per_video_cap, "Strongest detections kept per video");
  ev->add_option("--out", ev_out, "Also write the report JSON here");
  ev->callback([&] {
    ev_cfg.thresholds = parse_thresholds(ev_thresholds);
    std::string ann_path = fs::is_directory(ev_ann) ? asl::annotations_path(ev_ann) : ev_ann;
    auto dets = asl::load_detections(ev_pred);
    auto anns = asl::load_annotations(ann_path);
    asl::EvalResult res = asl::evaluate_detections(dets, anns, ev_cfg);
    std::string text = "{\n";
    char buf[64];
    for (double t : ev_cfg.thresholds) {
      std::snprintf(buf, sizeof buf, "  \"%s\": %.4f,\n", threshold_key(t).c_str(), res.map[t]);
      text += buf;
    }
    std::snprintf(buf, sizeof buf, "  \"average_mAP\": %.4f\n}\n", res.average_map);
    text += buf;
    std::cout << text;
    if (!ev_out.empty()) write_text(ev_out, text);
  });

  // ---- gradcheck ----
  auto* gc = app.add_subcommand("gradcheck", "Verify analytic gradients against central finite differences");
  asl::GradSuiteConfig gsc;
  gc->add_option("--seed", gsc.seed, "Seed for the probe system and videos");
  gc->add_option("--frames", gsc.frames, "Probe video length");
  gc->add_option("--dim", gsc.dim, "Probe feature dimension");
  gc->add_option("--classes", gsc.classes, "Probe class count");
  gc->add_option("--videos", gsc.videos, "Probe batch size");
  gc->add_option("--step", gsc.h, "Finite difference step");
  gc->add_option("--tolerance", gsc.tol, "Maximum relative error");
  gc->callback([&] {
    asl::GradCheckReport rep = asl::run_loss_gradcheck(gsc);
    for (const auto& e : rep.per_param)
      std::printf("%-28s worst rel err %.3e (analytic %.6e, numeric %.6e)\n", e.param.c_str(), e.rel_err,
                  e.analytic, e.numeric);
    std::printf("overall worst: %s [%d] rel err %.3e\n", rep.worst.param.c_str(), rep.worst.index,
                rep.worst.rel_err);
    if (!rep.ok)
      throw asl::NumericError("gradient check failed: worst relative error " + std::to_string(rep.worst.rel_err));
    std::cout << "gradient check passed (tolerance " << gsc.tol << ")\n";
  });

  // ---- sensitivity-dump ----
  auto* sd = app.add_subcommand("sensitivity-dump", "Dump learned sensitivity curves for one class as CSV");
  std::string sd_params, sd_out;
  int sd_class = 0;
  sd->add_option("--params", sd_params, "Trained parameter file")->required();
  sd->add_option("--out", sd_out, "CSV output path")->required();
  sd->add_option("--class", sd_class, "Class index");
  sd->callback([&] {
    asl::ModelConfig mc = asl::read_params_meta(sd_params);
    asl::Rng rng(0);
    asl::System sys(mc, rng);
    asl::load_params_into(sd_params, sys.params());
    if (sd_class < 0 || sd_class >= mc.num_classes) throw asl::DataError("class index out of range");
    write_text(sd_out, asl::sensitivity_csv(sys.sens, sd_class));
    std::cout << "wrote sensitivity curves for class " << sd_class << " to " << sd_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const asl::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const asl::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
