#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "asl/errors.hpp"
#include "asl/matrix.hpp"
#include "asl/model.hpp"
#include "asl/tape.hpp"
#include "asl/types.hpp"

namespace asl {

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
  write_bytes(os, b, 2);
}

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  write_bytes(os, b, 4);
}

inline void write_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline void write_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  write_bytes(os, b, 8);
}

inline void read_bytes(std::istream& is, void* p, size_t n, const std::string& what) {
  std::streamoff at = is.tellg();
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n))
    throw DataError("truncated read at byte " + std::to_string(at < 0 ? 0 : at) + ": " + what);
}

inline uint16_t read_u16(std::istream& is, const std::string& what) {
  unsigned char b[2];
  read_bytes(is, b, 2, what);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  read_bytes(is, b, 4, what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

inline float read_f32(std::istream& is, const std::string& what) {
  uint32_t bits = read_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double read_f64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  read_bytes(is, b, 8, what);
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void require_keys(const nlohmann::json& obj, std::initializer_list<const char*> keys,
                         const std::string& where) {
  for (const char* k : keys)
    if (!obj.contains(k)) throw DataError(where + ": missing key '" + std::string(k) + "'");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) known = true;
    if (!known) throw DataError(where + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace detail

// ---- feature files: "ASLF", u16 version, u32 T, u32 D, f32 row-major ----

constexpr uint16_t kFeatureFileVersion = 1;

inline void write_features(const std::string& path, const Matrix& features) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for write: " + path);
  detail::write_bytes(os, "ASLF", 4);
  detail::write_u16(os, kFeatureFileVersion);
  detail::write_u32(os, static_cast<uint32_t>(features.rows));
  detail::write_u32(os, static_cast<uint32_t>(features.cols));
  for (double e : features.a) detail::write_f32(os, static_cast<float>(e));
  if (!os) throw DataError("write failed: " + path);
}

inline Matrix read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  char magic[4];
  detail::read_bytes(is, magic, 4, path);
  if (std::memcmp(magic, "ASLF", 4) != 0) throw DataError("bad feature file magic: " + path);
  uint16_t version = detail::read_u16(is, path);
  if (version != kFeatureFileVersion) throw DataError("unsupported feature file version: " + path);
  uint32_t T = detail::read_u32(is, path);
  uint32_t D = detail::read_u32(is, path);
  if (T == 0 || D == 0 || T > (1u << 24) || D > (1u << 16)) throw DataError("implausible dimensions: " + path);
  Matrix m(static_cast<int>(T), static_cast<int>(D));
  for (double& e : m.a) e = static_cast<double>(detail::read_f32(is, path));
  return m;
}

// ---- annotations / predictions: JSON array of video objects ----

inline nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded()) throw DataError("invalid JSON: " + path);
  return j;
}

inline std::vector<VideoAnnotation> load_annotations(const std::string& path) {
  nlohmann::json j = parse_json_file(path);
  if (!j.is_array()) throw DataError(path + ": expected a top-level array");
  std::vector<VideoAnnotation> videos;
  for (const auto& vj : j) {
    detail::require_keys(vj, {"video_id", "T", "instances"}, path);
    VideoAnnotation v;
    v.video_id = vj.at("video_id").get<std::string>();
    if (!vj.at("T").is_number_integer()) throw DataError(path + ": T must be an integer for " + v.video_id);
    v.num_frames = vj.at("T").get<int>();
    if (v.num_frames < 1) throw DataError(path + ": non-positive T for " + v.video_id);
    for (const auto& ij : vj.at("instances")) {
      detail::require_keys(ij, {"start", "end", "class"}, path);
      if (!ij.at("start").is_number_integer() || !ij.at("end").is_number_integer())
        throw DataError(path + ": instance bounds must be whole frames in " + v.video_id);
      Instance inst{ij.at("start").get<int>(), ij.at("end").get<int>(), ij.at("class").get<int>()};
      if (!(inst.end > inst.start)) throw DataError(path + ": empty instance in " + v.video_id);
      if (inst.label < 0) throw DataError(path + ": negative class in " + v.video_id);
      if (inst.start < 0 || inst.end > v.num_frames)
        throw DataError(path + ": instance outside [0, T) in " + v.video_id);
      v.instances.push_back(inst);
    }
    videos.push_back(std::move(v));
  }
  return videos;
}

inline void save_annotations(const std::string& path, const std::vector<VideoAnnotation>& videos) {
  nlohmann::json j = nlohmann::json::array();
  for (const VideoAnnotation& v : videos) {
    nlohmann::json inst = nlohmann::json::array();
    for (const Instance& i : v.instances)
      inst.push_back({{"start", i.start}, {"end", i.end}, {"class", i.label}});
    j.push_back({{"video_id", v.video_id}, {"T", v.num_frames}, {"instances", inst}});
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for write: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw DataError("write failed: " + path);
}

inline std::vector<VideoDetections> load_detections(const std::string& path) {
  nlohmann::json j = parse_json_file(path);
  if (!j.is_array()) throw DataError(path + ": expected a top-level array");
  std::vector<VideoDetections> videos;
  for (const auto& vj : j) {
    detail::require_keys(vj, {"video_id", "T", "instances"}, path);
    VideoDetections v;
    v.video_id = vj.at("video_id").get<std::string>();
    if (!vj.at("T").is_number_integer()) throw DataError(path + ": T must be an integer for " + v.video_id);
    v.num_frames = vj.at("T").get<int>();
    for (const auto& ij : vj.at("instances")) {
      detail::require_keys(ij, {"start", "end", "class", "score"}, path);
      v.detections.push_back({ij.at("start").get<double>(), ij.at("end").get<double>(), ij.at("class").get<int>(),
                              ij.at("score").get<double>()});
    }
    videos.push_back(std::move(v));
  }
  return videos;
}

inline void save_detections(const std::string& path, const std::vector<VideoDetections>& videos) {
  nlohmann::json j = nlohmann::json::array();
  for (const VideoDetections& v : videos) {
    nlohmann::json inst = nlohmann::json::array();
    for (const Detection& d : v.detections)
      inst.push_back({{"start", d.start}, {"end", d.end}, {"class", d.label}, {"score", d.score}});
    j.push_back({{"video_id", v.video_id}, {"T", v.num_frames}, {"instances", inst}});
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for write: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw DataError("write failed: " + path);
}

// ---- parameter files: "ASLP", meta JSON, then named f64 blobs ----

constexpr uint16_t kParamFileVersion = 1;

inline void save_params(const std::string& path, const ModelConfig& cfg, const std::vector<Parameter*>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for write: " + path);
  detail::write_bytes(os, "ASLP", 4);
  detail::write_u16(os, kParamFileVersion);
  nlohmann::json meta = {{"dim", cfg.dim},
                         {"num_classes", cfg.num_classes},
                         {"levels", cfg.levels},
                         {"base_blocks", cfg.base_blocks},
                         {"theta", cfg.theta}};
  std::string meta_s = meta.dump();
  detail::write_u32(os, static_cast<uint32_t>(meta_s.size()));
  detail::write_bytes(os, meta_s.data(), meta_s.size());
  detail::write_u32(os, static_cast<uint32_t>(params.size()));
  for (const Parameter* p : params) {
    detail::write_u16(os, static_cast<uint16_t>(p->name.size()));
    detail::write_bytes(os, p->name.data(), p->name.size());
    detail::write_u32(os, static_cast<uint32_t>(p->value.rows));
    detail::write_u32(os, static_cast<uint32_t>(p->value.cols));
    for (double e : p->value.a) detail::write_f64(os, e);
  }
  if (!os) throw DataError("write failed: " + path);
}

inline ModelConfig read_params_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  char magic[4];
  detail::read_bytes(is, magic, 4, path);
  if (std::memcmp(magic, "ASLP", 4) != 0) throw DataError("bad params file magic: " + path);
  uint16_t version = detail::read_u16(is, path);
  if (version != kParamFileVersion) throw DataError("unsupported params file version: " + path);
  uint32_t meta_len = detail::read_u32(is, path);
  std::string meta_s(meta_len, '\0');
  detail::read_bytes(is, meta_s.data(), meta_len, path);
  nlohmann::json meta = nlohmann::json::parse(meta_s, nullptr, false);
  if (meta.is_discarded()) throw DataError("bad params metadata: " + path);
  detail::require_keys(meta, {"dim", "num_classes", "levels", "base_blocks", "theta"}, path);
  ModelConfig cfg;
  cfg.dim = meta.at("dim").get<int>();
  cfg.num_classes = meta.at("num_classes").get<int>();
  cfg.levels = meta.at("levels").get<int>();
  cfg.base_blocks = meta.at("base_blocks").get<int>();
  cfg.theta = meta.at("theta").get<double>();
  return cfg;
}

// Fills existing parameters by name. Every parameter must be present in the
// file with a matching shape, and the file may not carry extras.
inline void load_params_into(const std::string& path, const std::vector<Parameter*>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  is.seekg(4 + 2, std::ios::beg);
  uint32_t meta_len = detail::read_u32(is, path);
  is.seekg(meta_len, std::ios::cur);
  uint32_t count = detail::read_u32(is, path);
  std::vector<char> seen(params.size(), 0);
  for (uint32_t n = 0; n < count; ++n) {
    uint16_t name_len = detail::read_u16(is, path);
    std::string name(name_len, '\0');
    detail::read_bytes(is, name.data(), name_len, path);
    uint32_t rows = detail::read_u32(is, path);
    uint32_t cols = detail::read_u32(is, path);
    Parameter* target = nullptr;
    for (size_t k = 0; k < params.size(); ++k)
      if (params[k]->name == name) {
        if (seen[k]) throw DataError(path + ": duplicate parameter '" + name + "'");
        seen[k] = 1;
        target = params[k];
        break;
      }
    if (!target) throw DataError(path + ": unexpected parameter '" + name + "'");
    if (target->value.rows != static_cast<int>(rows) || target->value.cols != static_cast<int>(cols))
      throw DataError(path + ": shape mismatch for '" + name + "'");
    for (double& e : target->value.a) e = detail::read_f64(is, path);
  }
  for (size_t k = 0; k < params.size(); ++k)
    if (!seen[k]) throw DataError(path + ": missing parameter '" + params[k]->name + "'");
}

// ---- dataset directory helpers ----

inline std::string features_dir(const std::string& dataset_dir) { return dataset_dir + "/features"; }
inline std::string annotations_path(const std::string& dataset_dir) { return dataset_dir + "/annotations.json"; }
inline std::string feature_path(const std::string& dataset_dir, const std::string& video_id) {
  return features_dir(dataset_dir) + "/" + video_id + ".aslf";
}

struct LoadedDataset {
  std::vector<VideoAnnotation> annotations;
  std::vector<Matrix> features;  // parallel to annotations
};

inline LoadedDataset load_dataset(const std::string& dataset_dir) {
  LoadedDataset ds;
  ds.annotations = load_annotations(annotations_path(dataset_dir));
  for (const VideoAnnotation& v : ds.annotations) {
    Matrix f = read_features(feature_path(dataset_dir, v.video_id));
    if (f.rows != v.num_frames)
      throw DataError("frame count mismatch between features and annotations for " + v.video_id);
    ds.features.push_back(std::move(f));
  }
  return ds;
}

}  // namespace asl
