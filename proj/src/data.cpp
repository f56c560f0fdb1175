#include "dsrl/data.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "dsrl/rng.hpp"
#include "json.hpp"

namespace dsrl {

// ---- CRC32 -------------------------------------------------------------------

uint32_t crc32(const uint8_t* data, size_t len) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

// ---- byte helpers ------------------------------------------------------------

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xFF));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xFF));
}

void put_f32(std::vector<uint8_t>& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float get_f32(const uint8_t* p) {
  const uint32_t v = get_u32(p);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

constexpr char kMagic[4] = {'D', 'S', 'R', 'F'};
constexpr uint32_t kVersion = 1;

}  // namespace

// ---- FeatureSequence ----------------------------------------------------------

void FeatureSequence::validate() const {
  if (visual.rows < 1 || visual.cols < 1)
    throw ValidationError("FeatureSequence '" + id + "': empty visual features");
  if (!audio.empty() && audio.rows != visual.rows)
    throw ValidationError("FeatureSequence '" + id + "': audio/visual frame counts differ");
  if (has_frame_labels) {
    if (frame_labels.size() != static_cast<size_t>(visual.rows))
      throw ValidationError("FeatureSequence '" + id + "': frame label count != T");
    uint8_t any = 0;
    for (uint8_t l : frame_labels) any |= (l != 0);
    if (any != (video_label != 0))
      throw ValidationError("FeatureSequence '" + id +
                            "': video label inconsistent with frame labels");
  }
}

// ---- feature file IO ------------------------------------------------------------

void write_feature_file(const FeatureSequence& f, const std::filesystem::path& path) {
  f.validate();
  std::vector<uint8_t> buf;
  const uint32_t T = static_cast<uint32_t>(f.visual.rows);
  const uint32_t dv = static_cast<uint32_t>(f.visual.cols);
  const uint32_t da = f.audio.empty() ? 0 : static_cast<uint32_t>(f.audio.cols);
  buf.reserve(18 + 4 * (static_cast<size_t>(T) * (dv + da)) + T + 8);
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);
  put_u32(buf, T);
  put_u32(buf, dv);
  put_u32(buf, da);
  buf.push_back(f.has_frame_labels ? 1 : 0);
  for (double v : f.visual.a) put_f32(buf, static_cast<float>(v));
  if (da > 0)
    for (double v : f.audio.a) put_f32(buf, static_cast<float>(v));
  if (f.has_frame_labels)
    buf.insert(buf.end(), f.frame_labels.begin(), f.frame_labels.end());
  buf.push_back(f.video_label);
  put_u32(buf, crc32(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IngestionError("short write: " + path.string());
}

FeatureSequence read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open: " + path.string());
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (buf.size() < 21) throw TruncatedFileError("feature file truncated: " + name);
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw BadMagicError("bad magic in feature file: " + name);
  if (get_u32(buf.data() + 4) != kVersion)
    throw BadVersionError("unsupported feature file version in: " + name);
  const uint32_t T = get_u32(buf.data() + 8);
  const uint32_t dv = get_u32(buf.data() + 12);
  const uint32_t da = get_u32(buf.data() + 16);
  const uint8_t has_labels = buf[20];
  if (has_labels > 1) throw IngestionError("bad label flag in feature file: " + name);
  const size_t payload = 4 * (static_cast<size_t>(T) * dv + static_cast<size_t>(T) * da) +
                         (has_labels ? T : 0) + 1;
  const size_t expect = 21 + payload + 4;
  if (buf.size() < expect) throw TruncatedFileError("feature file truncated: " + name);
  if (buf.size() > expect) throw IngestionError("trailing bytes in feature file: " + name);
  const uint32_t stored = get_u32(buf.data() + expect - 4);
  if (crc32(buf.data(), expect - 4) != stored)
    throw ChecksumError("checksum mismatch in feature file: " + name);

  FeatureSequence f;
  f.id = path.stem().string();
  f.visual = Mat(static_cast<int>(T), static_cast<int>(dv));
  size_t off = 21;
  for (double& v : f.visual.a) {
    v = static_cast<double>(get_f32(buf.data() + off));
    off += 4;
  }
  if (da > 0) {
    f.audio = Mat(static_cast<int>(T), static_cast<int>(da));
    for (double& v : f.audio.a) {
      v = static_cast<double>(get_f32(buf.data() + off));
      off += 4;
    }
  }
  f.has_frame_labels = has_labels != 0;
  if (f.has_frame_labels) {
    f.frame_labels.assign(buf.begin() + static_cast<ptrdiff_t>(off),
                          buf.begin() + static_cast<ptrdiff_t>(off + T));
    off += T;
  }
  f.video_label = buf[off];
  return f;
}

// ---- manifests -----------------------------------------------------------------

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& e : entries)
    j.push_back({{"id", e.id}, {"path", e.path}, {"split", e.split}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw IngestionError("manifest must be a JSON array: " + path.string());
  std::vector<ManifestEntry> out;
  for (const auto& item : j) {
    ManifestEntry e;
    e.id = item.at("id").get<std::string>();
    e.path = item.at("path").get<std::string>();
    e.split = item.at("split").get<std::string>();
    if (e.split != "train" && e.split != "val" && e.split != "test")
      throw IngestionError("manifest entry '" + e.id + "' has unknown split '" + e.split + "'");
    out.push_back(std::move(e));
  }
  return out;
}

// ---- synthetic generator ---------------------------------------------------------

void SynthSpec::validate() const {
  if (num_videos < 1) throw ValidationError("synth: num_videos must be >= 1");
  if (t_min < 1 || t_max < t_min) throw ValidationError("synth: bad T range");
  if (d_visual < 1) throw ValidationError("synth: d_visual must be >= 1");
  if (d_audio < 0) throw ValidationError("synth: d_audio must be >= 0");
  if (taxonomy_depth < 2 || taxonomy_depth > 3)
    throw ValidationError("synth: taxonomy_depth must be 2 or 3");
  if (ambiguity_rate < 0.0 || ambiguity_rate > 1.0)
    throw ValidationError("synth: ambiguity_rate must be in [0,1]");
  if (noise_scale < 0.0) throw ValidationError("synth: noise_scale must be >= 0");
}

namespace {

constexpr int kCategories = 2;  // 0 normal, 1 violent
constexpr int kSubcats = 3;

struct Taxonomy {
  int phases;
  int d_v, d_a;
  // centroid[cat][sub][phase] in visual and audio space
  std::vector<std::vector<std::vector<std::vector<double>>>> vis;
  std::vector<std::vector<std::vector<std::vector<double>>>> aud;
  // per-leaf within-phase drift directions
  std::vector<std::vector<std::vector<std::vector<double>>>> drift;
};

std::vector<double> random_dir(Rng& rng, int d, double norm) {
  std::vector<double> v(static_cast<size_t>(d));
  double s = 0.0;
  for (double& x : v) {
    x = rng.gaussian();
    s += x * x;
  }
  s = std::sqrt(s);
  if (s == 0.0) s = 1.0;
  for (double& x : v) x *= norm / s;
  return v;
}

std::vector<double> add3(const std::vector<double>& a, const std::vector<double>& b,
                         const std::vector<double>& c) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i] + c[i];
  return out;
}

// Category bases sit in separate regions; the violent base is pushed further
// from the origin so the event hierarchy also shows up radially.
Taxonomy build_taxonomy(const SynthSpec& spec, Rng& rng) {
  Taxonomy tax;
  tax.phases = spec.taxonomy_depth == 3 ? 3 : 1;
  tax.d_v = spec.d_visual;
  tax.d_a = spec.d_audio;

  auto build_space = [&](int d) {
    std::vector<std::vector<std::vector<std::vector<double>>>> c(kCategories);
    for (int cat = 0; cat < kCategories; ++cat) {
      const double base_norm = cat == 0 ? 1.0 : 2.2;
      const auto base = random_dir(rng, d, base_norm);
      c[cat].resize(kSubcats);
      for (int sub = 0; sub < kSubcats; ++sub) {
        const auto sub_off = random_dir(rng, d, 0.8);
        c[cat][sub].resize(static_cast<size_t>(tax.phases));
        for (int ph = 0; ph < tax.phases; ++ph) {
          const auto ph_off = random_dir(rng, d, 0.5);
          c[cat][sub][static_cast<size_t>(ph)] = add3(base, sub_off, ph_off);
        }
      }
    }
    return c;
  };

  tax.vis = build_space(tax.d_v);
  if (tax.d_a > 0) tax.aud = build_space(tax.d_a);

  tax.drift.resize(kCategories);
  for (int cat = 0; cat < kCategories; ++cat) {
    tax.drift[cat].resize(kSubcats);
    for (int sub = 0; sub < kSubcats; ++sub) {
      tax.drift[cat][sub].resize(static_cast<size_t>(tax.phases));
      for (int ph = 0; ph < tax.phases; ++ph)
        tax.drift[cat][sub][static_cast<size_t>(ph)] = random_dir(rng, tax.d_v, 0.2);
    }
  }
  return tax;
}

int nearest_violent_action(const Taxonomy& tax, const std::vector<double>& from) {
  const int action_phase = tax.phases == 3 ? 1 : 0;
  int best = 0;
  double best_d = std::numeric_limits<double>::max();
  for (int sub = 0; sub < kSubcats; ++sub) {
    const auto& c = tax.vis[1][sub][static_cast<size_t>(action_phase)];
    double d2 = 0.0;
    for (size_t i = 0; i < c.size(); ++i) d2 += (c[i] - from[i]) * (c[i] - from[i]);
    if (d2 < best_d) {
      best_d = d2;
      best = sub;
    }
  }
  return best;
}

}  // namespace

std::vector<FeatureSequence> synth_generate(const SynthSpec& spec) {
  spec.validate();
  Rng tax_rng(mix_seed(spec.seed, 0xDA7A));
  const Taxonomy tax = build_taxonomy(spec, tax_rng);
  const int action_phase = tax.phases == 3 ? 1 : 0;

  std::vector<FeatureSequence> out;
  out.reserve(static_cast<size_t>(spec.num_videos));
  for (int vid = 0; vid < spec.num_videos; ++vid) {
    Rng rng(mix_seed(spec.seed, 0x51D0 + static_cast<uint64_t>(vid)));
    const bool violent_video = (vid % 2) == 1;  // balanced classes by construction
    const int T = rng.uniform_int(spec.t_min, spec.t_max);

    FeatureSequence f;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "vid_%05d", vid);
      f.id = buf;
    }
    f.visual = Mat(T, spec.d_visual);
    if (spec.d_audio > 0) f.audio = Mat(T, spec.d_audio);
    f.has_frame_labels = true;
    f.frame_labels.assign(static_cast<size_t>(T), 0);

    // plan events until T frames are covered
    int t = 0;
    bool emitted_violent = false;
    while (t < T) {
      const int phase_len = rng.uniform_int(2, 4);
      const int remaining = T - t;
      bool violent_event = false;
      if (violent_video) {
        violent_event = rng.uniform() < 0.4;
        // last chance to honor the video label
        if (!emitted_violent && remaining <= tax.phases * 4) violent_event = true;
      }
      const int cat = violent_event ? 1 : 0;
      int sub = rng.uniform_int(0, kSubcats - 1);
      emitted_violent = emitted_violent || violent_event;

      // ambiguous normal event: its action phase borrows the nearest violent
      // action centroid, only the surrounding phases keep the normal context
      bool ambiguous = false;
      int amb_sub = 0;
      if (!violent_event && rng.uniform() < spec.ambiguity_rate) {
        ambiguous = true;
        amb_sub = nearest_violent_action(tax, tax.vis[0][sub][static_cast<size_t>(action_phase)]);
      }

      for (int ph = 0; ph < tax.phases && t < T; ++ph) {
        const bool swap = ambiguous && ph == action_phase;
        const auto& cv = swap ? tax.vis[1][amb_sub][static_cast<size_t>(action_phase)]
                              : tax.vis[cat][sub][static_cast<size_t>(ph)];
        const auto& dir = tax.drift[cat][sub][static_cast<size_t>(ph)];
        for (int k = 0; k < phase_len && t < T; ++k, ++t) {
          const double alpha = phase_len > 1
                                   ? static_cast<double>(k) / (phase_len - 1) - 0.5
                                   : 0.0;
          for (int j = 0; j < spec.d_visual; ++j)
            f.visual.at(t, j) =
                cv[static_cast<size_t>(j)] + alpha * dir[static_cast<size_t>(j)] +
                spec.noise_scale * rng.gaussian();
          if (spec.d_audio > 0) {
            const auto& ca = swap ? tax.aud[1][amb_sub][static_cast<size_t>(action_phase)]
                                  : tax.aud[cat][sub][static_cast<size_t>(ph)];
            for (int j = 0; j < spec.d_audio; ++j)
              f.audio.at(t, j) = ca[static_cast<size_t>(j)] + spec.noise_scale * rng.gaussian();
          }
          if (violent_event) f.frame_labels[static_cast<size_t>(t)] = 1;
        }
      }
    }

    uint8_t any = 0;
    for (uint8_t l : f.frame_labels) any |= l;
    f.video_label = any;
    f.validate();
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace dsrl
