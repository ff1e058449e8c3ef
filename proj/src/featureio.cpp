#include "tass/featureio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace tass {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'T', 'A', 'S', 'S'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  Reader(std::ifstream in, std::filesystem::path path)
      : in_(std::move(in)), path_(std::move(path)) {}

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    take(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  void magic() {
    char b[4];
    take(b, 4, "magic");
    if (std::memcmp(b, kMagic, 4) != 0)
      throw FormatError(detail::msg(path_.string(), ": bad magic at offset 0"));
  }

  std::size_t offset() const { return offset_; }

 private:
  void take(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError(detail::msg(path_.string(), ": truncated reading ",
                                    what, " at offset ", offset_));
    offset_ += n;
  }

  std::ifstream in_;
  std::filesystem::path path_;
  std::size_t offset_ = 0;
};

Reader open_reader(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError(detail::msg(path.string(), ": cannot open for reading"));
  return Reader(std::move(in), path);
}

Shape read_header(Reader& r, const std::filesystem::path& path) {
  r.magic();
  std::uint32_t version = r.u32("version");
  if (version != kTensorFileVersion)
    throw FormatError(detail::msg(path.string(), ": unsupported version ",
                                  version, " at offset 4"));
  std::uint32_t rank = r.u32("rank");
  if (rank > 8)
    throw FormatError(detail::msg(path.string(), ": implausible rank ", rank,
                                  " at offset 8"));
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = r.u32("extent");
    if (shape[i] == 0)
      throw FormatError(detail::msg(path.string(), ": zero extent at offset ",
                                    r.offset() - 4));
  }
  return shape;
}

}  // namespace

void write_tensor_file(const Tensor& t, const std::filesystem::path& path) {
  for (double v : t.values())
    if (!std::isfinite(v))
      throw DomainError(detail::msg("write_tensor_file: non-finite value ", v));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw FormatError(detail::msg(path.string(), ": cannot open for writing"));
  out.write(kMagic, 4);
  put_u32(out, kTensorFileVersion);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (double v : t.values()) put_f32(out, static_cast<float>(v));
  if (!out)
    throw FormatError(detail::msg(path.string(), ": write failed"));
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  Reader r = open_reader(path);
  Shape shape = read_header(r, path);
  std::size_t count = 1;
  for (std::size_t e : shape) count *= e;
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i)
    values[i] = static_cast<double>(r.f32("payload"));
  return Tensor::from_data(shape, std::move(values));
}

Shape peek_tensor_shape(const std::filesystem::path& path) {
  Reader r = open_reader(path);
  return read_header(r, path);
}

// ---- pooling -----------------------------------------------------------------

Tensor pool_sequence(const Tensor& seq, std::size_t t2) {
  if (t2 < 1) throw ConfigError("pool window t2 must be >= 1");
  if (seq.rank() < 1)
    throw DimensionError("pool_sequence: need at least a time axis");
  const std::size_t t1 = seq.shape()[0];
  const std::size_t inner = seq.size() / t1;
  const std::size_t t_out = (t1 + t2 - 1) / t2;
  Shape so = seq.shape();
  so[0] = t_out;
  std::vector<double> out(t_out * inner, 0.0);
  const double* in = seq.values().data();
  for (std::size_t w = 0; w < t_out; ++w) {
    const std::size_t begin = w * t2;
    const std::size_t end = std::min(begin + t2, t1);
    for (std::size_t t = begin; t < end; ++t)
      for (std::size_t i = 0; i < inner; ++i)
        out[w * inner + i] += in[t * inner + i];
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (std::size_t i = 0; i < inner; ++i) out[w * inner + i] *= inv;
  }
  return Tensor::from_data(std::move(so), std::move(out));
}

void VideoFeatures::validate() const {
  if (audio.rank() != 2)
    throw ValidationError(detail::msg("video ", video_id, ": audio must be T x d, got ",
                                      shape_str(audio.shape())));
  if (visual.rank() != 4)
    throw ValidationError(detail::msg("video ", video_id,
                                      ": visual must be T x h x w x d, got ",
                                      shape_str(visual.shape())));
  if (audio.shape()[0] != visual.shape()[0])
    throw ValidationError(detail::msg("video ", video_id,
                                      ": audio and visual disagree on T, ",
                                      audio.shape()[0], " vs ",
                                      visual.shape()[0]));
  if (audio.shape()[1] != visual.shape()[3])
    throw ValidationError(detail::msg("video ", video_id,
                                      ": audio and visual disagree on d, ",
                                      audio.shape()[1], " vs ",
                                      visual.shape()[3]));
}

VideoFeatures pool_preprocess(const VideoFeatures& v, std::size_t t2) {
  v.validate();
  VideoFeatures out;
  out.video_id = v.video_id;
  out.audio = pool_sequence(v.audio, t2);
  out.visual = pool_sequence(v.visual, t2);
  return out;
}

// ---- manifest ------------------------------------------------------------------

const ManifestVideo& Manifest::video(const std::string& id) const {
  for (const auto& v : videos)
    if (v.video_id == id) return v;
  throw ValidationError(detail::msg("manifest has no video '", id, "'"));
}

VideoFeatures Manifest::load_video(const std::string& id) const {
  const ManifestVideo& mv = video(id);
  VideoFeatures vf;
  vf.video_id = id;
  vf.audio = read_tensor_file(root / mv.audio_file);
  vf.visual = read_tensor_file(root / mv.visual_file);
  vf.validate();
  return vf;
}

Tensor Manifest::load_question(const ManifestSample& s) const {
  return read_tensor_file(root / s.question_file);
}

Tensor Manifest::load_target(const ManifestSample& s) const {
  return read_tensor_file(root / s.target_file);
}

namespace {

void check_shape(const std::filesystem::path& path, const Shape& want,
                 const std::string& who) {
  Shape got = peek_tensor_shape(path);
  if (got != want)
    throw ValidationError(detail::msg(who, ": ", path.filename().string(),
                                      " has shape ", shape_str(got),
                                      ", expected ", shape_str(want)));
}

void check_exists(const std::filesystem::path& path, const std::string& who) {
  if (!std::filesystem::exists(path))
    throw ValidationError(detail::msg(who, ": referenced file ",
                                      path.filename().string(),
                                      " does not exist"));
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in)
    throw ValidationError(detail::msg("cannot open manifest ",
                                      manifest_path.string()));
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError(detail::msg("manifest ", manifest_path.string(), ": ",
                                  e.what()));
  }

  Manifest m;
  m.root = manifest_path.parent_path();
  try {
    m.answer_vocab = doc.at("answer_vocab").get<std::vector<std::string>>();
    const auto& dims = doc.at("dims");
    m.d = dims.at("d").get<std::size_t>();
    m.h = dims.at("h").get<std::size_t>();
    m.w = dims.at("w").get<std::size_t>();
    m.t1 = dims.at("t1").get<std::size_t>();
    for (const auto& jv : doc.at("videos")) {
      ManifestVideo v;
      v.video_id = jv.at("id").get<std::string>();
      v.audio_file = jv.at("audio").get<std::string>();
      v.visual_file = jv.at("visual").get<std::string>();
      m.videos.push_back(std::move(v));
    }
    for (const auto& js : doc.at("samples")) {
      ManifestSample s;
      s.video_id = js.at("video_id").get<std::string>();
      s.question_file = js.at("question").get<std::string>();
      s.target_file = js.at("target").get<std::string>();
      s.question_type = js.at("question_type").get<std::string>();
      s.answer = js.at("answer").get<std::size_t>();
      m.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError(detail::msg("manifest ", manifest_path.string(), ": ",
                                  e.what()));
  }

  // eager invariant validation; payloads stay on disk
  for (const auto& v : m.videos) {
    const std::string who = detail::msg("video ", v.video_id);
    check_exists(m.root / v.audio_file, who);
    check_exists(m.root / v.visual_file, who);
    check_shape(m.root / v.audio_file, {m.t1, m.d}, who);
    check_shape(m.root / v.visual_file, {m.t1, m.h, m.w, m.d}, who);
  }
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    const auto& s = m.samples[i];
    const std::string who = detail::msg("sample ", i, " (video ", s.video_id, ")");
    if (s.answer >= m.answer_vocab.size())
      throw ValidationError(detail::msg(who, ": answer index ", s.answer,
                                        " out of vocabulary of size ",
                                        m.answer_vocab.size()));
    m.video(s.video_id);  // must resolve
    check_exists(m.root / s.question_file, who);
    check_exists(m.root / s.target_file, who);
    check_shape(m.root / s.question_file, {1, m.d}, who);
    check_shape(m.root / s.target_file, {1, m.d}, who);
  }
  return m;
}

Manifest preprocess_dataset(const std::filesystem::path& in_dir, std::size_t t2,
                            const std::filesystem::path& out_dir) {
  if (t2 < 1) throw ConfigError("pool window t2 must be >= 1");
  std::filesystem::path manifest_path = in_dir;
  if (std::filesystem::is_directory(in_dir))
    manifest_path = in_dir / "manifest.json";
  Manifest in = load_manifest(manifest_path);
  std::filesystem::create_directories(out_dir);

  Manifest out = in;
  out.root = out_dir;
  out.t1 = (in.t1 + t2 - 1) / t2;
  for (const auto& v : in.videos) {
    VideoFeatures pooled = pool_preprocess(in.load_video(v.video_id), t2);
    write_tensor_file(pooled.audio, out_dir / v.audio_file);
    write_tensor_file(pooled.visual, out_dir / v.visual_file);
  }
  for (const auto& s : in.samples) {
    std::filesystem::copy_file(in.root / s.question_file,
                               out_dir / s.question_file,
                               std::filesystem::copy_options::overwrite_existing);
    std::filesystem::copy_file(in.root / s.target_file,
                               out_dir / s.target_file,
                               std::filesystem::copy_options::overwrite_existing);
  }
  save_manifest(out, out_dir / "manifest.json");
  return out;
}

void save_manifest(const Manifest& m, const std::filesystem::path& manifest_path) {
  json doc;
  doc["format"] = "tass-manifest";
  doc["version"] = 1;
  doc["answer_vocab"] = m.answer_vocab;
  doc["dims"] = {{"d", m.d}, {"h", m.h}, {"w", m.w}, {"t1", m.t1}};
  doc["videos"] = json::array();
  for (const auto& v : m.videos)
    doc["videos"].push_back(
        {{"id", v.video_id}, {"audio", v.audio_file}, {"visual", v.visual_file}});
  doc["samples"] = json::array();
  for (const auto& s : m.samples)
    doc["samples"].push_back({{"video_id", s.video_id},
                              {"question", s.question_file},
                              {"target", s.target_file},
                              {"question_type", s.question_type},
                              {"answer", s.answer}});
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out)
    throw ValidationError(detail::msg("cannot write manifest ",
                                      manifest_path.string()));
  out << doc.dump(1) << "\n";
}

}  // namespace tass
