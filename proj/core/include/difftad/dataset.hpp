#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "difftad/config.hpp"
#include "difftad/network.hpp"

namespace difftad {

struct ActionInstance {
  double start = 0.0;  // seconds
  double end = 0.0;    // seconds
  int label = 0;
};

struct AnnotatedVideo {
  std::string video_id;
  double duration = 0.0;  // seconds
  std::vector<ActionInstance> instances;

  void validate(int num_classes) const;
};

// One loaded dataset directory: annotations plus features per modality.
struct Dataset {
  std::vector<AnnotatedVideo> videos;
  // features[modality][video index]; modality 0 = rgb, 1 = flow
  std::vector<std::vector<VideoFeatures>> features;

  const VideoFeatures& features_for(int modality, std::size_t video_index) const;
};

// Deterministic synthetic dataset: class-signature offsets injected into
// noisy snippet features inside action extents, with an independently seeded
// signature set for the flow modality. Writes features/<id>_{rgb,flow}.feat
// plus annotations.jsonl and returns the generated annotations.
std::vector<AnnotatedVideo> generate_synthetic(const DatasetConfig& spec, std::uint64_t seed,
                                               const std::filesystem::path& out_dir,
                                               const std::string& config_echo);

// Feature file: 8-byte magic "DTADFEAT", u32 version, u32 T_snippets,
// u32 D_feat, u32 modality code, then row-major float32 little-endian.
void write_features(const VideoFeatures& vf, const std::filesystem::path& path);
VideoFeatures read_features(const std::filesystem::path& path);

// Annotations: '#' comment lines followed by one JSON object per line:
// {"id": ..., "duration": ..., "instances": [[start, end, label], ...]}
void write_annotations(const std::vector<AnnotatedVideo>& videos,
                       const std::filesystem::path& path, const std::string& config_echo);
std::vector<AnnotatedVideo> read_annotations(const std::filesystem::path& path);

Dataset load_dataset(const std::filesystem::path& dir,
                     const std::vector<std::string>& modalities);

}  // namespace difftad
