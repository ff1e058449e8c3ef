#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tass/featureio.hpp"

using namespace tass;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("tass_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static inline int counter = 0;
};

bool roundtrip_exact(const Tensor& t, const fs::path& file) {
  write_tensor_file(t, file);
  Tensor back = read_tensor_file(file);
  if (back.shape() != t.shape()) return false;
  for (std::size_t i = 0; i < t.size(); ++i) {
    // storage precision is f32; the round trip must hit it exactly
    double expect = static_cast<double>(static_cast<float>(t.values()[i]));
    if (back.values()[i] != expect) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("tensor file round trips for ranks 0 through 4") {
  TempDir dir;
  CHECK(roundtrip_exact(Tensor::scalar(-7.25), dir.path / "r0.tsr"));
  CHECK(roundtrip_exact(Tensor::from_data({3}, {1, 2, 3}), dir.path / "r1.tsr"));
  CHECK(roundtrip_exact(Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}),
                        dir.path / "r2.tsr"));
  Rng rng(9);
  CHECK(roundtrip_exact(Tensor::uniform({2, 3, 4}, rng, -5, 5),
                        dir.path / "r3.tsr"));
  CHECK(roundtrip_exact(Tensor::uniform({2, 2, 2, 3}, rng, -5, 5),
                        dir.path / "r4.tsr"));
}

TEST_CASE("tensor file format errors") {
  TempDir dir;
  fs::path bad = dir.path / "bad.tsr";
  {
    std::ofstream out(bad, std::ios::binary);
    out << "XXXX";
    std::uint32_t rest[2] = {1, 0};
    out.write(reinterpret_cast<char*>(rest), 8);
  }
  CHECK_THROWS_AS(read_tensor_file(bad), FormatError);

  fs::path trunc = dir.path / "trunc.tsr";
  write_tensor_file(Tensor::from_data({4}, {1, 2, 3, 4}), trunc);
  fs::resize_file(trunc, fs::file_size(trunc) - 6);
  try {
    read_tensor_file(trunc);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }

  fs::path vers = dir.path / "vers.tsr";
  {
    std::ofstream out(vers, std::ios::binary);
    out << "TASS";
    std::uint32_t fields[2] = {99, 0};
    out.write(reinterpret_cast<char*>(fields), 8);
  }
  CHECK_THROWS_AS(read_tensor_file(vers), FormatError);

  CHECK_THROWS_AS(
      write_tensor_file(Tensor::from_data({1}, {std::nan("")}), dir.path / "n.tsr"),
      DomainError);
}

TEST_CASE("pool_preprocess windowed means") {
  // scalar-feature sequence as a T x 1 tensor
  Tensor seq = Tensor::from_data({4, 1}, {1, 3, 5, 7});
  Tensor pooled = pool_sequence(seq, 2);
  CHECK(pooled.shape() == Shape{2, 1});
  CHECK(pooled.values()[0] == doctest::Approx(2));
  CHECK(pooled.values()[1] == doctest::Approx(6));

  // t2 == 1 is the identity
  Tensor same = pool_sequence(seq, 1);
  CHECK(std::vector<double>(same.values().begin(), same.values().end()) ==
        std::vector<double>{1, 3, 5, 7});

  // short tail averaged over its true length
  Tensor tail = pool_sequence(Tensor::from_data({3, 1}, {1, 3, 5}), 2);
  CHECK(tail.shape() == Shape{2, 1});
  CHECK(tail.values()[0] == doctest::Approx(2));
  CHECK(tail.values()[1] == doctest::Approx(5));

  // window at least as long as the input collapses to one segment
  Tensor one = pool_sequence(seq, 9);
  CHECK(one.shape() == Shape{1, 1});
  CHECK(one.values()[0] == doctest::Approx(4));

  CHECK_THROWS_AS(pool_sequence(seq, 0), ConfigError);
}

TEST_CASE("pooling commutes with scalar scaling and conserves mass") {
  Rng rng(21);
  Tensor seq = Tensor::uniform({7, 5}, rng, -2, 2);
  const std::size_t t2 = 3;

  Tensor pooled = pool_sequence(seq, t2);
  std::vector<double> scaled(seq.values().begin(), seq.values().end());
  for (auto& v : scaled) v *= 3.5;
  Tensor pooled_scaled = pool_sequence(Tensor::from_data({7, 5}, scaled), t2);
  for (std::size_t i = 0; i < pooled.size(); ++i)
    CHECK(pooled_scaled.values()[i] ==
          doctest::Approx(3.5 * pooled.values()[i]).epsilon(1e-12));

  // sum over pooled outputs times window lengths equals the input sum
  std::vector<std::size_t> window{3, 3, 1};
  double lhs = 0;
  for (std::size_t w = 0; w < 3; ++w)
    for (std::size_t i = 0; i < 5; ++i)
      lhs += pooled.values()[w * 5 + i] * static_cast<double>(window[w]);
  double rhs = 0;
  for (double v : seq.values()) rhs += v;
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("video features validation") {
  VideoFeatures v;
  v.video_id = "clip";
  v.audio = Tensor::zeros({4, 8});
  v.visual = Tensor::zeros({4, 2, 2, 8});
  CHECK_NOTHROW(v.validate());

  VideoFeatures pooled = pool_preprocess(v, 2);
  CHECK(pooled.audio.shape() == Shape{2, 8});
  CHECK(pooled.visual.shape() == Shape{2, 2, 2, 8});

  v.audio = Tensor::zeros({3, 8});
  CHECK_THROWS_AS(v.validate(), ValidationError);
}

namespace {

Manifest tiny_manifest(const fs::path& root) {
  Manifest m;
  m.root = root;
  m.answer_vocab = {"yes", "no"};
  m.d = 4;
  m.h = 2;
  m.w = 2;
  m.t1 = 3;

  Rng rng(33);
  write_tensor_file(Tensor::uniform({3, 4}, rng, -1, 1), root / "v0_audio.tsr");
  write_tensor_file(Tensor::uniform({3, 2, 2, 4}, rng, -1, 1),
                    root / "v0_visual.tsr");
  write_tensor_file(Tensor::uniform({1, 4}, rng, -1, 1), root / "q0.tsr");
  write_tensor_file(Tensor::uniform({1, 4}, rng, -1, 1), root / "t0.tsr");

  m.videos.push_back({"v0", "v0_audio.tsr", "v0_visual.tsr"});
  m.samples.push_back({"v0", "q0.tsr", "t0.tsr", "existential", 1});
  return m;
}

}  // namespace

TEST_CASE("manifest save, load and validation errors") {
  TempDir dir;
  Manifest m = tiny_manifest(dir.path);
  save_manifest(m, dir.path / "manifest.json");

  Manifest loaded = load_manifest(dir.path / "manifest.json");
  CHECK(loaded.samples.size() == 1);
  CHECK(loaded.videos.size() == 1);
  CHECK(loaded.answer_vocab == m.answer_vocab);
  CHECK(loaded.samples[0].answer == 1);

  VideoFeatures vf = loaded.load_video("v0");
  CHECK(vf.audio.shape() == Shape{3, 4});
  CHECK(loaded.load_question(loaded.samples[0]).shape() == Shape{1, 4});

  // empty sample list is a valid manifest
  Manifest empty = m;
  empty.samples.clear();
  save_manifest(empty, dir.path / "empty.json");
  CHECK(load_manifest(dir.path / "empty.json").samples.empty());

  // answer index == vocab size -> off-by-one rejected
  Manifest bad_answer = m;
  bad_answer.samples[0].answer = 2;
  save_manifest(bad_answer, dir.path / "bad_answer.json");
  CHECK_THROWS_AS(load_manifest(dir.path / "bad_answer.json"), ValidationError);

  // missing referenced file
  Manifest missing = m;
  missing.samples[0].question_file = "nowhere.tsr";
  save_manifest(missing, dir.path / "missing.json");
  CHECK_THROWS_AS(load_manifest(dir.path / "missing.json"), ValidationError);

  // dimension mismatch against declared d
  Manifest mismatch = m;
  mismatch.d = 5;
  save_manifest(mismatch, dir.path / "mismatch.json");
  CHECK_THROWS_AS(load_manifest(dir.path / "mismatch.json"), ValidationError);
}
