#include "difftad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "difftad/rng.hpp"

namespace difftad {

namespace {
constexpr char kFeatMagic[8] = {'D', 'T', 'A', 'D', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatVersion = 1;
constexpr std::uint32_t kMaxDim = 1u << 24;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const std::filesystem::path& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("feature file truncated: " + path.string());
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void AnnotatedVideo::validate(int num_classes) const {
  if (duration <= 0.0) throw std::invalid_argument("annotation: nonpositive duration for " + video_id);
  for (const auto& inst : instances) {
    if (!(inst.start >= 0.0 && inst.start < inst.end && inst.end <= duration)) {
      throw std::invalid_argument("annotation: bad instance extent in " + video_id);
    }
    if (inst.label < 0 || inst.label >= num_classes) {
      throw std::invalid_argument("annotation: class index out of range in " + video_id);
    }
  }
}

const VideoFeatures& Dataset::features_for(int modality, std::size_t video_index) const {
  return features.at(static_cast<std::size_t>(modality)).at(video_index);
}

void write_features(const VideoFeatures& vf, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write feature file: " + path.string());
  os.write(kFeatMagic, 8);
  write_u32(os, kFeatVersion);
  write_u32(os, static_cast<std::uint32_t>(vf.data.rows()));
  write_u32(os, static_cast<std::uint32_t>(vf.data.cols()));
  write_u32(os, static_cast<std::uint32_t>(vf.modality));
  for (Eigen::Index i = 0; i < vf.data.rows(); ++i) {
    for (Eigen::Index j = 0; j < vf.data.cols(); ++j) {
      float v = vf.data(i, j);
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      write_u32(os, bits);
    }
  }
  if (!os) throw std::runtime_error("feature file write failed: " + path.string());
}

VideoFeatures read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open feature file: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kFeatMagic, 8) != 0) {
    throw std::runtime_error("bad magic in feature file: " + path.string());
  }
  std::uint32_t version = read_u32(is, path);
  if (version != kFeatVersion) {
    throw std::runtime_error("unsupported feature file version in " + path.string());
  }
  std::uint32_t t = read_u32(is, path);
  std::uint32_t d = read_u32(is, path);
  std::uint32_t modality = read_u32(is, path);
  if (t == 0 || d == 0 || t > kMaxDim || d > kMaxDim) {
    throw std::runtime_error("feature dimensions out of range in " + path.string());
  }
  if (modality > 1) throw std::runtime_error("bad modality code in " + path.string());
  VideoFeatures vf;
  vf.modality = static_cast<int>(modality);
  vf.data.resize(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d));
  for (std::uint32_t i = 0; i < t; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      std::uint32_t bits = read_u32(is, path);
      float v;
      std::memcpy(&v, &bits, 4);
      vf.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  // derive id from the filename stem (<id>_<modality>.feat)
  std::string stem = path.stem().string();
  auto us = stem.rfind('_');
  vf.video_id = us == std::string::npos ? stem : stem.substr(0, us);
  return vf;
}

void write_annotations(const std::vector<AnnotatedVideo>& videos,
                       const std::filesystem::path& path, const std::string& config_echo) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write annotations: " + path.string());
  std::istringstream echo(config_echo);
  std::string line;
  while (std::getline(echo, line)) os << "# " << line << "\n";
  for (const auto& v : videos) {
    nlohmann::json j;
    j["id"] = v.video_id;
    j["duration"] = v.duration;
    auto arr = nlohmann::json::array();
    for (const auto& inst : v.instances) {
      arr.push_back({inst.start, inst.end, inst.label});
    }
    j["instances"] = arr;
    os << j.dump() << "\n";
  }
  if (!os) throw std::runtime_error("annotation write failed: " + path.string());
}

std::vector<AnnotatedVideo> read_annotations(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open annotations: " + path.string());
  std::vector<AnnotatedVideo> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    nlohmann::json j = nlohmann::json::parse(line);
    AnnotatedVideo v;
    v.video_id = j.at("id").get<std::string>();
    v.duration = j.at("duration").get<double>();
    for (const auto& inst : j.at("instances")) {
      v.instances.push_back(ActionInstance{inst.at(0).get<double>(), inst.at(1).get<double>(),
                                           inst.at(2).get<int>()});
    }
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

// Non-overlapping action extents on the snippet grid, deterministic per rng.
std::vector<ActionInstance> place_actions(const DatasetConfig& spec, Rng& rng) {
  int m = rng.uniform_int(1, spec.max_actions);
  int min_len = spec.min_action_snippets;
  int max_len = std::max(min_len, spec.t_snippets / std::max(2, spec.max_actions));
  std::vector<std::pair<int, int>> spans;  // snippet [start, end)
  for (int attempt = 0; attempt < 200 && static_cast<int>(spans.size()) < m; ++attempt) {
    int len = rng.uniform_int(min_len, max_len);
    int start = rng.uniform_int(0, spec.t_snippets - len);
    bool ok = true;
    for (auto [s, e] : spans) {
      if (start < e + 2 && s < start + len + 2) {  // require a 2-snippet gap
        ok = false;
        break;
      }
    }
    if (ok) spans.emplace_back(start, start + len);
  }
  if (spans.empty()) {
    spans.emplace_back(0, min_len);  // deterministic fallback
  }
  std::sort(spans.begin(), spans.end());
  std::vector<ActionInstance> out;
  for (auto [s, e] : spans) {
    ActionInstance inst;
    inst.start = s * spec.snippet_seconds;
    inst.end = e * spec.snippet_seconds;
    inst.label = rng.uniform_int(0, spec.classes - 1);
    out.push_back(inst);
  }
  return out;
}

Eigen::MatrixXf synth_features(const DatasetConfig& spec, const std::vector<ActionInstance>& insts,
                               const std::vector<Eigen::VectorXf>& signatures, Rng& rng) {
  Eigen::MatrixXf data(spec.t_snippets, spec.d_feat);
  for (int i = 0; i < spec.t_snippets; ++i) {
    for (int j = 0; j < spec.d_feat; ++j) {
      data(i, j) = static_cast<float>(spec.noise_level * rng.normal());
    }
  }
  for (const auto& inst : insts) {
    int s = static_cast<int>(std::lround(inst.start / spec.snippet_seconds));
    int e = static_cast<int>(std::lround(inst.end / spec.snippet_seconds));
    for (int i = s; i < e && i < spec.t_snippets; ++i) {
      data.row(i) += (spec.signature_strength * signatures[static_cast<std::size_t>(inst.label)])
                         .transpose();
    }
  }
  return data;
}

std::vector<Eigen::VectorXf> make_signatures(const DatasetConfig& spec, std::uint64_t seed,
                                             std::uint64_t modality_tag) {
  std::vector<Eigen::VectorXf> sig;
  for (int c = 0; c < spec.classes; ++c) {
    Rng rng = Rng::derive(seed, {stream::kSignature, modality_tag, static_cast<std::uint64_t>(c)});
    Eigen::VectorXf v(spec.d_feat);
    for (int j = 0; j < spec.d_feat; ++j) v(j) = static_cast<float>(rng.normal());
    float n = v.norm();
    if (n > 0.0f) v /= n;
    sig.push_back(v);
  }
  return sig;
}

}  // namespace

std::vector<AnnotatedVideo> generate_synthetic(const DatasetConfig& spec, std::uint64_t seed,
                                               const std::filesystem::path& out_dir,
                                               const std::string& config_echo) {
  std::filesystem::create_directories(out_dir / "features");
  auto sig_rgb = make_signatures(spec, seed, 0);
  auto sig_flow = make_signatures(spec, seed, 1);

  std::vector<AnnotatedVideo> videos;
  for (int v = 0; v < spec.num_videos; ++v) {
    std::uint64_t vid = static_cast<std::uint64_t>(v);
    AnnotatedVideo av;
    {
      std::ostringstream id;
      id << "video_" << std::setw(4) << std::setfill('0') << v;
      av.video_id = id.str();
    }
    av.duration = spec.t_snippets * spec.snippet_seconds;
    Rng place_rng = Rng::derive(seed, {stream::kDataset, vid, 0});
    av.instances = place_actions(spec, place_rng);
    av.validate(spec.classes);

    Rng rgb_rng = Rng::derive(seed, {stream::kDataset, vid, 1});
    Rng flow_rng = Rng::derive(seed, {stream::kDataset, vid, 2});
    VideoFeatures rgb{av.video_id, 0, av.duration, synth_features(spec, av.instances, sig_rgb, rgb_rng)};
    VideoFeatures flow{av.video_id, 1, av.duration, synth_features(spec, av.instances, sig_flow, flow_rng)};
    write_features(rgb, out_dir / "features" / (av.video_id + "_rgb.feat"));
    write_features(flow, out_dir / "features" / (av.video_id + "_flow.feat"));
    videos.push_back(std::move(av));
  }
  write_annotations(videos, out_dir / "annotations.jsonl", config_echo);
  return videos;
}

Dataset load_dataset(const std::filesystem::path& dir,
                     const std::vector<std::string>& modalities) {
  Dataset ds;
  ds.videos = read_annotations(dir / "annotations.jsonl");
  ds.features.resize(2);
  for (const auto& mod : modalities) {
    int code = mod == "rgb" ? 0 : 1;
    auto& slot = ds.features[static_cast<std::size_t>(code)];
    for (const auto& v : ds.videos) {
      auto path = dir / "features" / (v.video_id + "_" + mod + ".feat");
      VideoFeatures vf = read_features(path);
      vf.video_id = v.video_id;
      vf.duration = v.duration;
      if (vf.modality != code) {
        throw std::runtime_error("modality code mismatch in " + path.string());
      }
      slot.push_back(std::move(vf));
    }
  }
  return ds;
}

}  // namespace difftad
