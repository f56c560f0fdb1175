#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsrl/errors.hpp"
#include "dsrl/linalg.hpp"

namespace dsrl {

// One video's features plus weak (video-level) and, for synthetic data,
// frame-level labels.
struct FeatureSequence {
  std::string id;
  Mat visual;  // T x d_v
  Mat audio;   // T x d_a; empty when unimodal
  bool has_frame_labels = false;
  std::vector<uint8_t> frame_labels;  // length T when present
  uint8_t video_label = 0;

  int frames() const { return visual.rows; }
  bool multimodal() const { return !audio.empty(); }
  // Checks internal consistency (shared T, video label = OR of frame labels).
  void validate() const;
};

// ---- synthetic hierarchical-event generator ---------------------------------
//
// Each video is a sequence of events. An event samples a taxonomy leaf
// (category -> subcategory) and emits one feature segment per phase
// (pre-event trend, event action, post-event behaviour). Violent leaves label
// every frame of the event 1. Ambiguous normal events reuse the nearest
// violent action centroid, so their action frames are indistinguishable
// instance-wise and only the surrounding phase context separates them.
struct SynthSpec {
  int num_videos = 200;
  int t_min = 16;
  int t_max = 64;
  int d_visual = 24;
  int d_audio = 16;        // 0 => unimodal
  int taxonomy_depth = 3;  // 2: category->subcategory, 3: ...->phase
  double ambiguity_rate = 0.3;
  double noise_scale = 1.0;
  uint64_t seed = 1;

  void validate() const;
};

std::vector<FeatureSequence> synth_generate(const SynthSpec& spec);

// ---- feature file persistence ------------------------------------------------
//
// Little-endian binary: magic "DSRF", u32 version=1, u32 T, u32 d_v, u32 d_a
// (0 if unimodal), u8 has_frame_labels, f32 visual [T*d_v], f32 audio
// [T*d_a], u8 frame labels [T] if present, u8 video label, u32 CRC32 of all
// preceding bytes.
void write_feature_file(const FeatureSequence& f, const std::filesystem::path& path);
FeatureSequence read_feature_file(const std::filesystem::path& path);

// ---- manifests ---------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  std::string split; // "train" | "val" | "test"
};

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// CRC-32 (IEEE), used by both feature files and checkpoints.
uint32_t crc32(const uint8_t* data, size_t len);

}  // namespace dsrl
