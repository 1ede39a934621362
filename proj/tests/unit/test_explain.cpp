#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "helpers.hpp"
#include "protoda/explain.hpp"

using namespace protoda;
using protoda_test::micro_interp;
using protoda_test::micro_pair;

namespace fs = std::filesystem;

namespace {

// Independent threshold/box oracle: nth_element percentile plus a full
// pixel scan, written apart from the library's sort-based path.
PatchBox oracle_box(const Mat& up) {
  std::vector<double> vals = up.v;
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(vals.size()))) - 1;
  std::nth_element(vals.begin(), vals.begin() + rank, vals.end());
  const double thr = vals[rank];
  PatchBox box{static_cast<int>(up.rows), static_cast<int>(up.cols), -1, -1, 0};
  for (int y = 0; y < static_cast<int>(up.rows); ++y)
    for (int x = 0; x < static_cast<int>(up.cols); ++x) {
      box.peak_value = std::max(box.peak_value, up.at(y, x));
      if (up.at(y, x) >= thr) {
        box.top = std::min(box.top, y);
        box.left = std::min(box.left, x);
        box.bottom = std::max(box.bottom, y);
        box.right = std::max(box.right, x);
      }
    }
  return box;
}

// Minimality scan: shrinking any side by one pixel must drop at least one
// at-or-above-threshold pixel.
bool box_is_minimal(const Mat& up, const PatchBox& box) {
  const double thr = percentile_nearest_rank(up.v, 0.95);
  auto hot_in = [&](int top, int left, int bottom, int right) {
    long n = 0;
    for (int y = std::max(0, top); y <= bottom && y < static_cast<int>(up.rows); ++y)
      for (int x = std::max(0, left); x <= right && x < static_cast<int>(up.cols); ++x)
        if (up.at(y, x) >= thr) ++n;
    return n;
  };
  const long full = hot_in(box.top, box.left, box.bottom, box.right);
  if (box.top == box.bottom && box.left == box.right) return full >= 1;
  bool ok = true;
  if (box.top < box.bottom) {
    ok = ok && hot_in(box.top + 1, box.left, box.bottom, box.right) < full;
    ok = ok && hot_in(box.top, box.left, box.bottom - 1, box.right) < full;
  }
  if (box.left < box.right) {
    ok = ok && hot_in(box.top, box.left + 1, box.bottom, box.right) < full;
    ok = ok && hot_in(box.top, box.left, box.bottom, box.right - 1) < full;
  }
  return ok;
}

}  // namespace

TEST_SUITE_BEGIN("explain");

TEST_CASE("heatmap peaks exactly where the prototype matches a patch") {
  InterpretiveModel model = micro_interp();
  const ImageSample& img = micro_pair().source[2];
  const FeatureVolume vol = model.features(img);
  // Plant prototype 0 on patch (3, 3).
  for (int t = 0; t < model.bank.dim(); ++t)
    model.bank.vec(0)[t] = vol.patch(3, 3)[t];

  const HeatMap hm = heatmap(model, img, 0);
  double best = -1;
  int by = -1, bx = -1;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      if (hm.grid.at(y, x) > best) {
        best = hm.grid.at(y, x);
        by = y;
        bx = x;
      }
  CHECK(by == 3);
  CHECK(bx == 3);
  CHECK(best == doctest::Approx(std::log(1.0 / model.cfg.sim_epsilon))
                    .epsilon(1e-12));
}

TEST_CASE("constant feature volume gives a constant grid") {
  FeatureVolume vol(4, 4, 8);
  std::fill(vol.v.begin(), vol.v.end(), 0.25);
  std::vector<double> proto(8, -0.5);
  const HeatMap hm = heatmap_from_volume(vol, proto.data(), 8, 32);
  for (double v : hm.grid.v) CHECK(v == hm.grid.v[0]);
  // Bilinear weights of a constant field cancel only to rounding.
  for (double v : hm.upsampled.v)
    CHECK(v == doctest::Approx(hm.upsampled.v[0]).epsilon(1e-12));
}

TEST_CASE("heatmap max equals the similarity-score entry") {
  const InterpretiveModel& model = micro_interp();
  for (int pick = 0; pick < 3; ++pick) {
    const ImageSample& img = micro_pair().target[pick * 5];
    const SimilarityScores ss =
        similarity_scores(model.features(img), model.bank, model.cfg.sim_epsilon);
    const int j = pick * 2;
    const HeatMap hm = heatmap(model, img, j);
    const double grid_max = *std::max_element(hm.grid.v.begin(), hm.grid.v.end());
    CHECK(grid_max == doctest::Approx(ss.score[j]).epsilon(1e-5));
  }
}

TEST_CASE("bad prototype id raises IndexError") {
  CHECK_THROWS_AS(heatmap(micro_interp(), micro_pair().source[0], 999),
                  IndexError);
}

TEST_CASE("bbox: constant heatmap covers the full image") {
  HeatMap hm;
  hm.grid = Mat(4, 4);
  std::fill(hm.grid.v.begin(), hm.grid.v.end(), 1.0);
  hm.upsampled = upsample_bilinear(hm.grid, 32);
  const PatchBox box = bbox(hm);
  CHECK(box.top == 0);
  CHECK(box.left == 0);
  CHECK(box.bottom == 31);
  CHECK(box.right == 31);
}

TEST_CASE("bbox: single hot pixel against the percentile oracle") {
  HeatMap hm;
  hm.grid = Mat(7, 7);
  hm.grid.at(2, 5) = 1.0;  // everything else zero
  hm.upsampled = upsample_bilinear(hm.grid, 224);
  const PatchBox box = bbox(hm);
  const PatchBox expect = oracle_box(hm.upsampled);
  CHECK(box.top == expect.top);
  CHECK(box.left == expect.left);
  CHECK(box.bottom == expect.bottom);
  CHECK(box.right == expect.right);
  CHECK(box.peak_value == doctest::Approx(expect.peak_value));
  CHECK(box_is_minimal(hm.upsampled, box));
  // The box hugs the hot pixel's bilinear support, not the whole image.
  CHECK(box.right - box.left < 224 / 2);
  CHECK(box.bottom - box.top < 224 / 2);
}

TEST_CASE("bbox: two separated hot blobs produce one spanning box") {
  HeatMap hm;
  hm.grid = Mat(8, 8);
  hm.grid.at(1, 1) = 1.0;
  hm.grid.at(6, 6) = 1.0;
  hm.upsampled = upsample_bilinear(hm.grid, 64);
  const PatchBox box = bbox(hm);
  const PatchBox expect = oracle_box(hm.upsampled);
  CHECK(box.top == expect.top);
  CHECK(box.bottom == expect.bottom);
  CHECK(box.left == expect.left);
  CHECK(box.right == expect.right);
  CHECK(box.bottom - box.top > 32);  // spans both blobs
}

TEST_CASE("random heatmaps: library box equals oracle and is minimal") {
  Rng rng(61);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    HeatMap hm;
    hm.grid = Mat(4, 4);
    for (auto& v : hm.grid.v) v = u(rng);
    hm.upsampled = upsample_bilinear(hm.grid, 32);
    const PatchBox box = bbox(hm);
    const PatchBox expect = oracle_box(hm.upsampled);
    CHECK(box.top == expect.top);
    CHECK(box.left == expect.left);
    CHECK(box.bottom == expect.bottom);
    CHECK(box.right == expect.right);
    CHECK(box_is_minimal(hm.upsampled, box));
  }
}

TEST_CASE("cross-domain matches: shape, ordering, provenance anchoring") {
  const InterpretiveModel& model = micro_interp();
  const DomainPair& pair = micro_pair();
  const auto matches = match_cross_domain(model, pair, 0, 3);
  REQUIRE(matches.size() == static_cast<std::size_t>(model.bank.k_per_class()));
  for (const auto& m : matches) {
    CHECK(m.sources.size() <= 3);
    CHECK(m.targets.size() <= 3);
    for (std::size_t r = 1; r < m.sources.size(); ++r)
      CHECK(m.sources[r - 1].score >= m.sources[r].score);
    for (std::size_t r = 1; r < m.targets.size(); ++r)
      CHECK(m.targets[r - 1].score >= m.targets[r].score);
    // Projection postcondition: the provenance image is the top source
    // example at distance zero, i.e. the maximum similarity.
    REQUIRE_FALSE(m.sources.empty());
    CHECK(m.sources[0].sample_id == m.anchor_sample_id);
    CHECK(m.sources[0].score ==
          doctest::Approx(std::log(1.0 / model.cfg.sim_epsilon)).epsilon(1e-9));
    // Target membership follows pseudo-labels.
    for (const auto& ex : m.targets)
      CHECK(model.pseudo.at(ex.sample_id).yhat == 0);
  }
}

TEST_CASE("category with no target pseudo-members yields empty target lists") {
  InterpretiveModel model = micro_interp();
  // Rewrite the cached target pseudo-labels away from category 0.
  for (auto& [id, e] : model.pseudo.by_id)
    if (e.domain == Domain::target && e.yhat == 0) e.yhat = 1;
  const auto matches = match_cross_domain(model, micro_pair(), 0, 3);
  for (const auto& m : matches) CHECK(m.targets.empty());
}

TEST_CASE("report bundle: counts, box validity, byte-stable metadata") {
  const InterpretiveModel& model = micro_interp();
  const DomainPair& pair = micro_pair();
  const fs::path out = fs::temp_directory_path() / "protoda_report";
  fs::remove_all(out);

  ReportOptions opts;
  opts.top_m = 2;
  emit_report(model, pair, out.string(), opts);

  CHECK(fs::exists(out / "index.html"));
  CHECK(fs::exists(out / "matches.json"));
  int cards = 0, panels = 0;
  for (const auto& cat : pair.categories) {
    CHECK(fs::exists(out / cat / "panel.png"));
    ++panels;
    for (int j = 0; j < model.bank.size(); ++j) {
      if (model.bank.class_of(j) !=
          (std::find(pair.categories.begin(), pair.categories.end(), cat) -
           pair.categories.begin()))
        continue;
      const fs::path card = out / cat / ("proto_" + std::to_string(j)) / "card.png";
      CHECK(fs::exists(card));
      ++cards;
    }
  }
  CHECK(cards == model.bank.size());
  CHECK(panels == pair.n_classes());

  // Crop files exist and match their metadata boxes.
  std::ifstream meta_in(out / "matches.json");
  nlohmann::json meta = nlohmann::json::parse(meta_in);
  for (const auto& cat : meta.at("categories"))
    for (const auto& proto : cat.at("prototypes"))
      for (const char* side : {"sources", "targets"})
        for (const auto& ex : proto.at(side)) {
          const fs::path file = out / ex.at("file").get<std::string>();
          REQUIRE(fs::exists(file));
          const cv::Mat png = cv::imread(file.string(), cv::IMREAD_COLOR);
          const auto& box = ex.at("box");
          CHECK(png.rows == box.at("bottom").get<int>() - box.at("top").get<int>() + 1);
          CHECK(png.cols == box.at("right").get<int>() - box.at("left").get<int>() + 1);
          // Compare pixel content against a fresh crop of the dataset image.
          const std::string id = ex.at("sample_id");
          const auto& samples =
              std::string(side) == "sources" ? pair.source : pair.target;
          const auto it = std::find_if(samples.begin(), samples.end(),
                                       [&](const ImageSample& s) { return s.id == id; });
          REQUIRE(it != samples.end());
          bool equal = true;
          for (int y = 0; y < png.rows && equal; ++y)
            for (int x = 0; x < png.cols && equal; ++x) {
              const auto bgr = png.at<cv::Vec3b>(y, x);
              equal = bgr[2] == it->at(0, box.at("top").get<int>() + y,
                                       box.at("left").get<int>() + x) &&
                      bgr[1] == it->at(1, box.at("top").get<int>() + y,
                                       box.at("left").get<int>() + x) &&
                      bgr[0] == it->at(2, box.at("top").get<int>() + y,
                                       box.at("left").get<int>() + x);
            }
          CHECK(equal);
        }

  // Byte-identical metadata across re-runs.
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string first = slurp(out / "matches.json");
  emit_report(model, pair, out.string(), opts);
  CHECK(slurp(out / "matches.json") == first);

  fs::remove_all(out);
}

TEST_CASE("zero-shift synthetic run flags no mismatches at tau 0.1") {
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.per_class = 12;
  spec.seed = 91;
  spec.target_shift = TargetShift{};  // identical domains
  const DomainPair pair = generate_synthetic_pair(spec);

  BaseTrainConfig bcfg;
  bcfg.epochs = 16;
  bcfg.batch_size = 12;
  bcfg.seed = 14;
  const BaseModel base =
      train_base(pair, synthetic_backbone_spec(), bcfg, NormConsts{});

  TrainConfig cfg;
  cfg.K = 2;
  cfg.epochs = 16;
  cfg.push_every = 4;
  cfg.last_layer_iters = 5;
  cfg.batch_size = 12;
  cfg.seed = 3;
  const InterpretiveModel model = run_protocol(base, pair, cfg);

  int flagged = 0, examined = 0;
  for (int k = 0; k < pair.n_classes(); ++k)
    for (const auto& m : match_cross_domain(model, pair, k, 3, 0.1))
      for (const auto& ex : m.targets) {
        REQUIRE(ex.mismatch.has_value());
        ++examined;
        if (*ex.mismatch) ++flagged;
      }
  CHECK(examined > 0);
  CHECK(flagged == 0);
}

TEST_SUITE_END();
