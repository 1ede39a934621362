#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "protoda/checkpoint.hpp"
#include "protoda/config.hpp"

using namespace protoda;
using protoda_test::micro_base;
using protoda_test::micro_pair;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("archive round trip preserves tensors, shapes, and metadata") {
  Archive ar;
  ar.kind = "base";
  ar.meta["note"] = "round trip";
  ar.put("a", {2, 3}, {1, 2, 3, 4, 5, 6});
  ar.put_flat("b", {0.5, -0.25});

  const fs::path path = fs::temp_directory_path() / "protoda_archive.ckpt";
  ar.save(path.string());
  const Archive back = Archive::load(path.string());
  CHECK(back.kind == "base");
  CHECK(back.meta.at("note") == "round trip");
  CHECK(back.get("a") == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(back.shape("a") == std::vector<std::size_t>{2, 3});
  CHECK(back.get("b") == std::vector<double>{0.5, -0.25});
  fs::remove(path);
}

TEST_CASE("archive rejects missing files, bad magic, and tampered data") {
  CHECK_THROWS_AS(Archive::load("/nonexistent/never.ckpt"), MissingArtifact);

  const fs::path bad = fs::temp_directory_path() / "protoda_bad.ckpt";
  {
    std::ofstream out(bad, std::ios::binary);
    out << "garbage garbage garbage";
  }
  CHECK_THROWS_AS(Archive::load(bad.string()), IoError);

  // Flip one data byte: the content hash must catch it.
  Archive ar;
  ar.kind = "base";
  ar.put_flat("w", {1.0, 2.0, 3.0});
  const fs::path path = fs::temp_directory_path() / "protoda_tamper.ckpt";
  ar.save(path.string());
  std::string bytes = slurp(path);
  bytes[bytes.size() - 3] ^= 0x40;
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  CHECK_THROWS_AS(Archive::load(path.string()), IoError);
  fs::remove(path);
  fs::remove(bad);
}

TEST_CASE("base checkpoint: identical behavior and byte-stable re-save") {
  const BaseModel& model = micro_base();
  const fs::path p1 = fs::temp_directory_path() / "protoda_base1.ckpt";
  const fs::path p2 = fs::temp_directory_path() / "protoda_base2.ckpt";

  Archive ar;
  ar.kind = "base";
  base_to_archive(model, ar);
  ar.save(p1.string());

  const BaseModel loaded = base_from_archive(Archive::load(p1.string()));
  CHECK(loaded.frozen());
  CHECK(loaded.param_hash() == model.param_hash());
  const FeatureVolume a = model.extract_features(micro_pair().source[1]);
  const FeatureVolume b = loaded.extract_features(micro_pair().source[1]);
  CHECK(a.v == b.v);

  // Hash-stable across save/load/save: the re-saved file is byte-identical.
  Archive ar2;
  ar2.kind = "base";
  base_to_archive(loaded, ar2);
  ar2.save(p2.string());
  CHECK(slurp(p1) == slurp(p2));

  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("profiles resolve the documented defaults") {
  const RunConfig synth = default_config(Profile::synthetic);
  CHECK(synth.interp.alpha == 0.8);
  CHECK(synth.interp.beta == 10.0);
  CHECK(synth.interp.lambda == 1e-4);
  CHECK(synth.interp.lr == 0.003);
  CHECK(synth.interp.K == 10);
  CHECK(synth.interp.epochs == 100);
  CHECK(synth.interp.push_every == 10);
  CHECK(synth.interp.gamma == 10.0);
  CHECK(synth.data.image_side == 32);

  const RunConfig oh = default_config(Profile::office_home);
  CHECK(oh.interp.gamma == 100.0);
  CHECK(oh.data.image_side == 224);

  const RunConfig dn = default_config(Profile::domainnet126);
  CHECK(dn.interp.gamma == 10.0);

  CHECK(profile_from_string("office-home") == Profile::office_home);
  CHECK_THROWS_AS(profile_from_string("bogus"), ConfigError);
}

TEST_CASE("synthetic dataset builder honors the config") {
  RunConfig cfg = default_config(Profile::synthetic);
  cfg.seed = 3;
  cfg.data.n_classes = 2;
  cfg.data.per_class = 4;
  const DomainPair pair = build_dataset(cfg);
  CHECK(pair.n_classes() == 2);
  CHECK(pair.n_source() == 8);
  const DomainPair again = build_dataset(cfg);
  CHECK(pair.fingerprint() == again.fingerprint());
}

TEST_CASE("real profiles demand dataset roots") {
  RunConfig cfg = default_config(Profile::office_home);
  CHECK_THROWS_AS(build_dataset(cfg), ConfigError);
}

TEST_SUITE_END();
