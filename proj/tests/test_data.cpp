#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "asl/asl.hpp"
#include "properties.hpp"

using Catch::Matchers::WithinAbs;

namespace {

asl::GenerateConfig small_config() {
  asl::GenerateConfig g;
  g.num_train = 30;
  g.num_test = 4;
  g.num_frames = 40;
  g.dim = 3;
  g.num_classes = 2;
  g.min_instances = 1;
  g.max_instances = 1;
  g.min_duration = 10;
  g.max_duration = 10;
  g.noise = 0.0;
  g.seed = 9;
  return g;
}

std::vector<double> row_of(const asl::Matrix& m, int i) {
  std::vector<double> r(m.cols);
  for (int j = 0; j < m.cols; ++j) r[j] = m(i, j);
  return r;
}

}  // namespace

TEST_CASE("frames split into start, middle and end phases by fraction") {
  using G = asl::SyntheticGenerator;
  // duration 10: 2 / 6 / 2
  for (int k : {0, 1}) CHECK(G::phase_of(k, 10) == 0);
  for (int k : {2, 3, 4, 5, 6, 7}) CHECK(G::phase_of(k, 10) == 1);
  for (int k : {8, 9}) CHECK(G::phase_of(k, 10) == 2);
  // duration 5: 1 / 3 / 1
  CHECK(G::phase_of(0, 5) == 0);
  for (int k : {1, 2, 3}) CHECK(G::phase_of(k, 5) == 1);
  CHECK(G::phase_of(4, 5) == 2);
  // very short instances are all middle
  CHECK(G::phase_of(0, 1) == 1);
  CHECK(G::phase_of(0, 2) == 1);
  CHECK(G::phase_of(1, 2) == 1);
}

TEST_CASE("noiseless instances repeat their phase prototypes exactly") {
  asl::GenerateConfig g = small_config();
  asl::GeneratedSplit split = asl::SyntheticGenerator(g).train_split();
  REQUIRE(split.annotations.size() == 30);

  // Within one instance: three distinct rows shared by the phase groups.
  std::map<int, std::vector<std::vector<double>>> proto_by_label;
  for (size_t v = 0; v < split.annotations.size(); ++v) {
    const asl::Instance& inst = split.annotations[v].instances.at(0);
    const asl::Matrix& f = split.features[v];
    std::vector<double> p0 = row_of(f, inst.start);
    std::vector<double> p1 = row_of(f, inst.start + 2);
    std::vector<double> p2 = row_of(f, inst.start + 8);
    CHECK(row_of(f, inst.start + 1) == p0);
    for (int k = 3; k <= 7; ++k) CHECK(row_of(f, inst.start + k) == p1);
    CHECK(row_of(f, inst.start + 9) == p2);
    CHECK(p0 != p1);
    CHECK(p1 != p2);
    CHECK(p0 != p2);
    auto& stored = proto_by_label[inst.label];
    if (stored.empty())
      stored = {p0, p1, p2};
    else {
      // across videos: same label means bitwise-same prototypes
      CHECK(p0 == stored[0]);
      CHECK(p1 == stored[1]);
      CHECK(p2 == stored[2]);
    }
  }
  CHECK(proto_by_label.size() == 2);  // both classes appear in 30 draws
}

TEST_CASE("generation is deterministic in the seed") {
  asl::GenerateConfig g = small_config();
  g.noise = 0.4;
  asl::GeneratedSplit a = asl::SyntheticGenerator(g).train_split();
  asl::GeneratedSplit b = asl::SyntheticGenerator(g).train_split();
  REQUIRE(a.features.size() == b.features.size());
  for (size_t v = 0; v < a.features.size(); ++v) {
    CHECK(a.features[v].a == b.features[v].a);
    CHECK(a.annotations[v].video_id == b.annotations[v].video_id);
    REQUIRE(a.annotations[v].instances.size() == b.annotations[v].instances.size());
    for (size_t i = 0; i < a.annotations[v].instances.size(); ++i) {
      CHECK(a.annotations[v].instances[i].start == b.annotations[v].instances[i].start);
      CHECK(a.annotations[v].instances[i].end == b.annotations[v].instances[i].end);
      CHECK(a.annotations[v].instances[i].label == b.annotations[v].instances[i].label);
    }
  }
  g.seed = 10;
  asl::GeneratedSplit c = asl::SyntheticGenerator(g).train_split();
  bool any_diff = false;
  for (size_t v = 0; v < a.features.size() && !any_diff; ++v)
    if (a.features[v].a != c.features[v].a) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("noise level changes instance frames but not layout or background") {
  asl::GenerateConfig g = small_config();
  asl::GeneratedSplit clean = asl::SyntheticGenerator(g).train_split();
  g.noise = 0.5;
  asl::GeneratedSplit noisy = asl::SyntheticGenerator(g).train_split();
  for (size_t v = 0; v < clean.annotations.size(); ++v) {
    const asl::Instance& ci = clean.annotations[v].instances.at(0);
    const asl::Instance& ni = noisy.annotations[v].instances.at(0);
    CHECK(ci.start == ni.start);
    CHECK(ci.end == ni.end);
    CHECK(ci.label == ni.label);
    bool inst_differs = false;
    for (int i = 0; i < g.num_frames; ++i) {
      bool inside = i >= ci.start && i < ci.end;
      if (inside) {
        if (row_of(clean.features[v], i) != row_of(noisy.features[v], i)) inst_differs = true;
      } else {
        CHECK(row_of(clean.features[v], i) == row_of(noisy.features[v], i));
      }
    }
    CHECK(inst_differs);
  }
}

TEST_CASE("jittered middle frames average back to their prototype") {
  asl::GenerateConfig g = small_config();
  asl::GeneratedSplit clean = asl::SyntheticGenerator(g).train_split();
  g.noise = 0.5;
  asl::GeneratedSplit noisy = asl::SyntheticGenerator(g).train_split();

  std::map<int, std::vector<double>> proto;
  std::map<int, std::vector<double>> sums;
  std::map<int, int> counts;
  for (size_t v = 0; v < clean.annotations.size(); ++v) {
    const asl::Instance& inst = clean.annotations[v].instances.at(0);
    if (!proto.count(inst.label)) proto[inst.label] = row_of(clean.features[v], inst.start + 2);
    auto& s = sums[inst.label];
    s.resize(g.dim, 0.0);
    for (int k = 2; k <= 7; ++k) {
      std::vector<double> r = row_of(noisy.features[v], inst.start + k);
      for (int j = 0; j < g.dim; ++j) s[j] += r[j];
      ++counts[inst.label];
    }
  }
  for (auto& [label, s] : sums) {
    int n = counts[label];
    REQUIRE(n >= 30);
    double bound = 4.0 * 0.5 / std::sqrt(static_cast<double>(n)) + 1e-3;  // 4 sigma + float32 slack
    for (int j = 0; j < g.dim; ++j) {
      INFO("label " << label << " dim " << j << " n " << n);
      CHECK_THAT(s[j] / n, WithinAbs(proto[label][j], bound));
    }
  }
}

TEST_CASE("instances respect the configured ranges") {
  asl::GenerateConfig g;
  g.num_train = 20;
  g.num_test = 0;
  g.num_frames = 60;
  g.dim = 2;
  g.num_classes = 3;
  g.min_instances = 2;
  g.max_instances = 4;
  g.min_duration = 5;
  g.max_duration = 20;
  g.seed = 12;
  asl::GeneratedSplit split = asl::SyntheticGenerator(g).train_split();
  for (const asl::VideoAnnotation& v : split.annotations) {
    CHECK(v.num_frames == 60);
    CHECK(v.instances.size() >= 2);
    CHECK(v.instances.size() <= 4);
    for (const asl::Instance& inst : v.instances) {
      CHECK(inst.start >= 0);
      CHECK(inst.end <= 60);
      CHECK(inst.duration() >= 5);
      CHECK(inst.duration() <= 20);
      CHECK(inst.label >= 0);
      CHECK(inst.label < 3);
    }
  }
}

TEST_CASE("train and test splits are distinct streams with their own names") {
  asl::GenerateConfig g = small_config();
  asl::SyntheticGenerator gen(g);
  asl::GeneratedSplit train = gen.train_split();
  asl::GeneratedSplit test = gen.test_split();
  REQUIRE(test.annotations.size() == 4);
  CHECK(train.annotations[0].video_id == "train_0000");
  CHECK(test.annotations[0].video_id == "test_0000");
  CHECK(train.features[0].a != test.features[0].a);
}

TEST_CASE("generator rejects inconsistent configurations") {
  asl::GenerateConfig g = small_config();
  SECTION("zero dimensions") {
    g.dim = 0;
    CHECK_THROWS_AS(asl::SyntheticGenerator(g), asl::DataError);
  }
  SECTION("inverted duration range") {
    g.min_duration = 12;
    g.max_duration = 4;
    CHECK_THROWS_AS(asl::SyntheticGenerator(g), asl::DataError);
  }
  SECTION("instances longer than the clip") {
    g.max_duration = 80;
    CHECK_THROWS_AS(asl::SyntheticGenerator(g), asl::DataError);
  }
  SECTION("inverted instance range") {
    g.min_instances = 3;
    g.max_instances = 1;
    CHECK_THROWS_AS(asl::SyntheticGenerator(g), asl::DataError);
  }
  SECTION("negative video counts") {
    g.num_train = -1;
    CHECK_THROWS_AS(asl::SyntheticGenerator(g), asl::DataError);
  }
}

TEST_CASE("generated corpora respect their configuration (property)") {
  auto pr = props::prop_generator_respects_config();
  INFO(pr.detail);
  CHECK(pr.ok());
  CHECK(pr.cases >= 200);
}
