#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "asl/asl.hpp"
#include "oracles.hpp"
#include "properties.hpp"

using Catch::Matchers::WithinAbs;

namespace {

asl::VideoAnnotation va(const std::string& id, int frames, std::vector<asl::Instance> inst) {
  return {id, frames, std::move(inst)};
}

asl::VideoDetections vd(const std::string& id, std::vector<asl::Detection> dets) {
  return {id, 100, std::move(dets)};
}

}  // namespace

TEST_CASE("temporal overlap ratio") {
  CHECK(asl::temporal_iou(3.0, 12.0, 3.0, 12.0) == 1.0);
  CHECK(asl::temporal_iou(0.0, 10.0, 30.0, 42.0) == 0.0);
  CHECK(asl::temporal_iou(0.0, 10.0, 10.0, 20.0) == 0.0);  // touching, no overlap
  CHECK(asl::temporal_iou(0.0, 10.0, 5.0, 15.0) == 1.0 / 3.0);
  CHECK(asl::temporal_iou(5.0, 15.0, 0.0, 10.0) == 1.0 / 3.0);  // symmetric
  CHECK(asl::temporal_iou(0.0, 10.0, 2.0, 8.0) == 0.6);  // containment
  CHECK_THROWS_AS(asl::temporal_iou(5.0, 5.0, 0.0, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(asl::temporal_iou(0.0, 10.0, 8.0, 2.0), std::invalid_argument);
}

TEST_CASE("average precision hand cases") {
  std::vector<asl::VideoAnnotation> annos = {va("a", 100, {{0, 10, 0}, {20, 30, 0}})};
  SECTION("single detection overlapping at 0.8") {
    std::vector<asl::VideoDetections> dets = {vd("a", {{0.0, 8.0, 0, 0.9}})};
    std::vector<asl::VideoAnnotation> one_gt = {va("a", 100, {{0, 10, 0}})};
    CHECK(asl::average_precision(dets, one_gt, 0, 0.5) == 1.0);
    CHECK(asl::average_precision(dets, one_gt, 0, 0.8) == 1.0);  // at the threshold still counts
    CHECK(asl::average_precision(dets, one_gt, 0, 0.9) == 0.0);
  }
  SECTION("disjoint detection scores zero") {
    std::vector<asl::VideoDetections> dets = {vd("a", {{50.0, 60.0, 0, 0.9}})};
    CHECK(asl::average_precision(dets, annos, 0, 0.5) == 0.0);
  }
  SECTION("true-false-true ranking gives five sixths") {
    std::vector<asl::VideoDetections> dets = {
        vd("a", {{0.0, 10.0, 0, 0.9}, {40.0, 50.0, 0, 0.8}, {20.0, 30.0, 0, 0.7}})};
    double ap = asl::average_precision(dets, annos, 0, 0.5);
    CHECK_THAT(ap, WithinAbs(5.0 / 6.0, 1e-12));
    CHECK_THAT(ap, WithinAbs(0.8333, 1e-4));
  }
  SECTION("a perfect segment in the wrong video is a false positive") {
    std::vector<asl::VideoDetections> dets = {vd("b", {{0.0, 10.0, 0, 0.9}})};
    CHECK(asl::average_precision(dets, annos, 0, 0.5) == 0.0);
  }
  SECTION("each ground truth can be claimed once") {
    std::vector<asl::VideoDetections> dets = {vd("a", {{0.0, 10.0, 0, 0.9}, {0.0, 10.0, 0, 0.8}})};
    std::vector<asl::VideoAnnotation> one_gt = {va("a", 100, {{0, 10, 0}})};
    // second duplicate is a false positive: prec [1, 0.5], envelope [1, .5]
    CHECK(asl::average_precision(dets, one_gt, 0, 0.5) == 1.0);
  }
  SECTION("a class with no ground truth scores zero") {
    std::vector<asl::VideoDetections> dets = {vd("a", {{0.0, 10.0, 7, 0.9}})};
    CHECK(asl::average_precision(dets, annos, 7, 0.5) == 0.0);
  }
}

TEST_CASE("detection-set evaluation") {
  std::vector<asl::VideoAnnotation> annos = {va("a", 100, {{0, 10, 0}, {20, 30, 1}}),
                                             va("b", 100, {{40, 60, 0}})};
  std::vector<double> thresholds = {0.3, 0.4, 0.5, 0.6, 0.7};
  SECTION("echoing the ground truth at full confidence is perfect") {
    std::vector<asl::VideoDetections> dets = {
        vd("a", {{0.0, 10.0, 0, 1.0}, {20.0, 30.0, 1, 1.0}}), vd("b", {{40.0, 60.0, 0, 1.0}})};
    asl::EvalResult res = asl::evaluate_detections(dets, annos, thresholds);
    CHECK(res.average_map == 1.0);
    for (double th : thresholds) CHECK(res.map.at(th) == 1.0);
  }
  SECTION("no detections at all scores zero") {
    std::vector<asl::VideoDetections> dets;
    asl::EvalResult res = asl::evaluate_detections(dets, annos, thresholds);
    CHECK(res.average_map == 0.0);
  }
  SECTION("annotations without instances are rejected") {
    std::vector<asl::VideoAnnotation> empty = {va("a", 100, {})};
    std::vector<asl::VideoDetections> dets = {vd("a", {{0.0, 10.0, 0, 1.0}})};
    CHECK_THROWS_AS(asl::evaluate_detections(dets, empty, thresholds), asl::DataError);
  }
  SECTION("per-threshold map is the mean over annotated classes") {
    std::vector<asl::VideoDetections> dets = {vd("a", {{0.0, 10.0, 0, 0.9}})};  // class 1 unmatched
    asl::EvalResult res = asl::evaluate_detections(dets, annos, {0.5});
    CHECK(res.ap.at(0.5).size() == 2);
    CHECK_THAT(res.map.at(0.5), WithinAbs((res.ap.at(0.5).at(0) + res.ap.at(0.5).at(1)) / 2.0, 1e-15));
    CHECK_THAT(res.map.at(0.5), WithinAbs(0.25, 1e-12));  // AP0 = 1/2 over its two GT, AP1 = 0
    CHECK(res.average_map == res.map.at(0.5));
  }
  SECTION("average map is the mean over thresholds") {
    std::vector<asl::VideoDetections> dets = {vd("a", {{0.0, 8.0, 0, 0.9}})};
    asl::EvalResult res = asl::evaluate_detections(dets, annos, {0.5, 0.9});
    CHECK_THAT(res.average_map, WithinAbs((res.map.at(0.5) + res.map.at(0.9)) / 2.0, 1e-15));
  }
  SECTION("the per-video cap keeps only the strongest detections") {
    std::vector<asl::VideoAnnotation> one_gt = {va("a", 100, {{0, 10, 0}})};
    std::vector<asl::VideoDetections> dets = {
        vd("a", {{0.0, 10.0, 0, 0.9}, {50.0, 60.0, 0, 0.95}, {70.0, 80.0, 0, 0.94}})};
    asl::EvalConfig cfg;
    cfg.thresholds = {0.5};
    cfg.per_video_cap = 1;
    asl::EvalResult capped = asl::evaluate_detections(dets, one_gt, cfg);
    CHECK(capped.average_map == 0.0);  // only the 0.95 junk survives
    cfg.per_video_cap = 3;
    asl::EvalResult full = asl::evaluate_detections(dets, one_gt, cfg);
    // order .95 FP, .94 FP, .9 TP: envelope 1/3 at the match
    CHECK_THAT(full.average_map, WithinAbs(1.0 / 3.0, 1e-12));
  }
  SECTION("matches the exhaustive reference on a mixed case") {
    std::vector<asl::VideoDetections> dets = {
        vd("a", {{1.0, 9.0, 0, 0.8}, {19.0, 31.0, 1, 0.7}, {2.0, 12.0, 0, 0.6}}),
        vd("b", {{44.0, 58.0, 0, 0.9}})};
    for (double th : {0.3, 0.5, 0.7})
      for (int label : {0, 1})
        CHECK(asl::average_precision(dets, annos, label, th) == ref::average_precision(dets, annos, label, th));
  }
}

TEST_CASE("raising the threshold never raises average precision (property)") {
  auto pr = props::prop_ap_monotone_in_threshold();
  INFO(pr.detail);
  CHECK(pr.ok());
  CHECK(pr.cases >= 200);
}

TEST_CASE("tied scores rank deterministically regardless of input order (property)") {
  auto pr = props::prop_ap_tie_permutation();
  INFO(pr.detail);
  CHECK(pr.ok());
  CHECK(pr.cases >= 200);
}

TEST_CASE("average precision matches the exhaustive matcher (property)") {
  auto pr = props::prop_ap_matches_exhaustive();
  INFO(pr.detail);
  CHECK(pr.ok());
  CHECK(pr.cases >= 1000);
}
