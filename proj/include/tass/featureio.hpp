#ifndef TASS_FEATUREIO_HPP
#define TASS_FEATUREIO_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "tass/tensor.hpp"

namespace tass {

// Binary tensor container. Layout, all little-endian:
//   magic "TASS" | version u32 | rank u32 | extents u32[rank] | payload f32[]
// Values are stored at f32 precision and promoted to f64 on read.
inline constexpr std::uint32_t kTensorFileVersion = 1;

void write_tensor_file(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor_file(const std::filesystem::path& path);
/// Reads only the header; cheap validation without touching the payload.
Shape peek_tensor_shape(const std::filesystem::path& path);

/// One video's feature sequences: audio is T1 x d, visual is T1 x h x w x d.
struct VideoFeatures {
  std::string video_id;
  Tensor audio;
  Tensor visual;

  std::size_t segments() const { return audio.shape()[0]; }
  std::size_t dim() const { return audio.shape()[1]; }
  std::size_t height() const { return visual.shape()[1]; }
  std::size_t width() const { return visual.shape()[2]; }

  /// Checks the cross-tensor invariants (same T1 and d).
  void validate() const;
};

/// Average-pools every window of `t2` consecutive segments; a short final
/// window is averaged over its true length. t2 == 1 is the identity.
VideoFeatures pool_preprocess(const VideoFeatures& v, std::size_t t2);
/// Same windowed mean for a bare sequence tensor (first axis is time).
Tensor pool_sequence(const Tensor& seq, std::size_t t2);

struct ManifestSample {
  std::string video_id;
  std::string question_file;
  std::string target_file;
  std::string question_type;
  std::size_t answer = 0;
};

struct ManifestVideo {
  std::string video_id;
  std::string audio_file;
  std::string visual_file;
};

/// Dataset index. All file paths are relative to the manifest's directory.
/// Loading validates every invariant eagerly (answers in range, referenced
/// files present, per-file shapes matching the declared dimensions) but loads
/// feature payloads on demand.
struct Manifest {
  std::filesystem::path root;
  std::vector<std::string> answer_vocab;
  std::vector<ManifestVideo> videos;
  std::vector<ManifestSample> samples;
  std::size_t d = 0, h = 0, w = 0, t1 = 0;

  const ManifestVideo& video(const std::string& id) const;
  VideoFeatures load_video(const std::string& id) const;
  Tensor load_question(const ManifestSample& s) const;
  Tensor load_target(const ManifestSample& s) const;
};

Manifest load_manifest(const std::filesystem::path& manifest_path);
void save_manifest(const Manifest& m, const std::filesystem::path& manifest_path);

/// Materializes a pooled copy of a dataset: every video's audio/visual
/// sequences windowed-averaged by t2, question/target files copied through,
/// manifest rewritten with the shortened length.
Manifest preprocess_dataset(const std::filesystem::path& in_dir, std::size_t t2,
                            const std::filesystem::path& out_dir);

}  // namespace tass

#endif  // TASS_FEATUREIO_HPP
