#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "protoda/base_model.hpp"
#include "protoda/errors.hpp"

using namespace protoda;
using protoda_test::micro_base;
using protoda_test::micro_pair;

TEST_SUITE_BEGIN("base_model");

TEST_CASE("synthetic backbone emits 4x4x32 feature volumes") {
  const BaseModel& model = micro_base();
  CHECK(model.frozen());
  const FeatureVolume vol = model.extract_features(micro_pair().source[0]);
  CHECK(vol.h == 4);
  CHECK(vol.w == 4);
  CHECK(vol.d == 32);
  for (double v : vol.v) CHECK(std::isfinite(v));
}

TEST_CASE("frozen extractor is deterministic") {
  const BaseModel& model = micro_base();
  const FeatureVolume a = model.extract_features(micro_pair().target[3]);
  const FeatureVolume b = model.extract_features(micro_pair().target[3]);
  CHECK(a.v == b.v);
}

TEST_CASE("constant image equals its own mirror through the backbone") {
  const BaseModel& model = micro_base();
  ImageSample blank;
  blank.id = "blank";
  blank.side = 32;
  blank.domain = Domain::source;
  blank.label = 0;
  blank.pixels.assign(3 * 32 * 32, 127);
  const FeatureVolume a = model.extract_features(blank);
  const FeatureVolume b = model.extract_features(blank.hflip());
  CHECK(a.v == b.v);
}

TEST_CASE("real backbone maps 224x224 images to 7x7x128") {
  BaseModel model(real_backbone_spec(), 65, NormConsts{}, 99);
  model.freeze();
  ImageSample img;
  img.id = "probe";
  img.side = 224;
  img.domain = Domain::source;
  img.label = 0;
  img.pixels.assign(3 * 224 * 224, 0);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>((i * 37) % 251);
  const FeatureVolume vol = model.extract_features(img);
  CHECK(vol.h == 7);
  CHECK(vol.w == 7);
  CHECK(vol.d == 128);
}

TEST_CASE("extract_features rejects unfrozen models and wrong image sides") {
  BaseModel model(synthetic_backbone_spec(), 3, NormConsts{}, 1);
  ImageSample img = micro_pair().source[0];
  CHECK_THROWS_AS(model.extract_features(img), Error);
  model.freeze();
  img.side = 16;
  img.pixels.assign(3 * 16 * 16, 0);
  CHECK_THROWS_AS(model.extract_features(img), BackboneShapeError);
}

TEST_CASE("one-class pair is rejected") {
  DomainPair degenerate;
  degenerate.categories = {"only"};
  for (int i = 0; i < 4; ++i) {
    ImageSample s = micro_pair().source[i];
    s.label = 0;
    degenerate.source.push_back(s);
    ImageSample t = micro_pair().target[i];
    degenerate.target.push_back(t);
  }
  CHECK_THROWS_AS(train_base(degenerate, synthetic_backbone_spec(),
                             protoda_test::micro_base_cfg(), NormConsts{}),
                  Error);
}

TEST_CASE("training log has one row per epoch with finite losses") {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.per_class = 4;
  spec.seed = 33;
  const DomainPair pair = generate_synthetic_pair(spec);
  BaseTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 1;
  std::vector<BaseEpochLog> log;
  const BaseModel model =
      train_base(pair, synthetic_backbone_spec(), cfg, NormConsts{}, &log);
  CHECK(model.frozen());
  REQUIRE(log.size() == 3);
  for (const auto& row : log) {
    CHECK(std::isfinite(row.cls_loss));
    CHECK(std::isfinite(row.dom_loss));
    CHECK(row.src_acc >= 0.0);
    CHECK(row.src_acc <= 1.0);
    CHECK(std::isfinite(row.tgt_acc));  // synthetic data carries eval labels
  }
}

TEST_CASE("zero target shift: target accuracy within 5 points of source") {
  // Identical-distribution oracle: with an all-zero shift the domains are
  // the same samples, so eval accuracies must essentially coincide.
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.per_class = 8;
  spec.seed = 13;
  spec.target_shift = TargetShift{};
  const DomainPair pair = generate_synthetic_pair(spec);
  BaseTrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 8;
  cfg.seed = 3;
  const BaseModel model =
      train_base(pair, synthetic_backbone_spec(), cfg, NormConsts{});

  auto acc = [&](const std::vector<ImageSample>& samples,
                 const std::vector<int>& labels) {
    int ok = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto logits =
          model.classify_logits(model.extract_features(samples[i]));
      if (nn::argmax_tie_smallest(logits) == labels[i]) ++ok;
    }
    return static_cast<double>(ok) / samples.size();
  };
  std::vector<int> src_labels;
  for (const auto& s : pair.source) src_labels.push_back(*s.label);
  const double src_acc = acc(pair.source, src_labels);
  const double tgt_acc = acc(pair.target, pair.eval_only_target_labels());
  CHECK(std::fabs(src_acc - tgt_acc) <= 0.05);
}

TEST_CASE("pseudo labels: softmax validity and argmax consistency") {
  const PseudoLabels pseudo = pseudo_label(micro_base(), micro_pair());
  CHECK(pseudo.by_id.size() == micro_pair().n_source() + micro_pair().n_target());
  for (const auto& [id, e] : pseudo.by_id) {
    double sum = 0;
    for (double q : e.q) {
      CHECK(q >= 0.0);
      sum += q;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-6);
    CHECK(e.yhat == nn::argmax_tie_smallest(e.q));
  }
  CHECK_THROWS_AS(pseudo.at("no-such-sample"), CacheMiss);
}

TEST_CASE("pseudo labels can carry mirrored variants") {
  const PseudoLabels pseudo = pseudo_label(micro_base(), micro_pair(), true);
  const auto& s0 = micro_pair().source[0];
  CHECK_NOTHROW(pseudo.at(s0.id));
  CHECK_NOTHROW(pseudo.at(PseudoLabels::flip_key(s0.id)));
}

TEST_CASE("parameter hash is stable and sensitive") {
  BaseModel model(synthetic_backbone_spec(), 3, NormConsts{}, 4);
  const std::uint64_t h1 = model.param_hash();
  CHECK(h1 == model.param_hash());
  model.hf.b[0] += 1e-9;
  CHECK(h1 != model.param_hash());
}

TEST_SUITE_END();
