#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "finprint/core/error.hpp"
#include "finprint/core/manifest.hpp"
#include "finprint/synth/synth.hpp"
#include "test_util.hpp"

using namespace finprint;
using namespace finprint::synth;

namespace {

bool all_in_unit_range(const Image& img) {
  return std::all_of(img.pixels.begin(), img.pixels.end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

double mean(const Image& img) {
  double s = 0;
  for (double v : img.pixels) s += v;
  return s / static_cast<double>(img.size());
}

}  // namespace

TEST_CASE("gen_identities small cases") {
  const auto one = gen_identities(1, 5, Rng(1, "ids"));
  REQUIRE(one.size() == 1);
  CHECK(one[0].spots.size() == 5);

  const auto a = gen_identities(2, 6, Rng(8, "ids"));
  const auto b = gen_identities(2, 6, Rng(8, "ids"));
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(a[i].spots.size() == b[i].spots.size());
    for (std::size_t s = 0; s < a[i].spots.size(); ++s) {
      CHECK(a[i].spots[s].cx == b[i].spots[s].cx);
      CHECK(a[i].spots[s].cy == b[i].spots[s].cy);
      CHECK(a[i].spots[s].r == b[i].spots[s].r);
    }
  }
  CHECK_THROWS_AS(gen_identities(0, 3, Rng(1)), ConfigError);
}

TEST_CASE("gen_identities: 40 identities x 12 spots are pairwise separable") {
  const auto specs = gen_identities(40, 12, Rng(7, "ids"));
  REQUIRE(specs.size() == 40);
  for (const auto& s : specs) {
    CHECK(s.spots.size() == 12);
    for (const auto& spot : s.spots) {
      CHECK((spot.cx >= 0 && spot.cx <= 1 && spot.cy >= 0 && spot.cy <= 1));
    }
  }
  // Exhaustive pairwise check: some spot of one misses all spots of the other
  // by more than two radii.
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (std::size_t j = i + 1; j < specs.size(); ++j) {
      double best = 0.0;
      for (const auto* pair : {&specs[i], &specs[j]}) {
        const auto& other = pair == &specs[i] ? specs[j] : specs[i];
        for (const auto& s : pair->spots) {
          double nearest = 1e9;
          for (const auto& t : other.spots) {
            nearest = std::min(nearest, std::hypot(s.cx - t.cx, s.cy - t.cy));
          }
          best = std::max(best, nearest);
        }
      }
      double rmax = 0;
      for (const auto& s : specs[i].spots) rmax = std::max(rmax, s.r);
      for (const auto& s : specs[j].spots) rmax = std::max(rmax, s.r);
      CHECK(best > 2 * rmax);
    }
  }
}

TEST_CASE("gen_identities reports unsatisfiable spot counts") {
  CHECK_THROWS_AS(gen_identities(1, 400, Rng(1)), ConfigError);
}

TEST_CASE("render determinism and degenerate spots") {
  const auto specs = gen_identities(1, 8, Rng(3, "ids"));
  const Shape shape{32, 32, 1};
  const auto a = render(specs[0], shape, 0.0, Rng(1));
  const auto b = render(specs[0], shape, 0.0, Rng(2));
  CHECK(a.pixels == b.pixels);
  CHECK(all_in_unit_range(a.pixels));

  IdentitySpec blank = specs[0];
  for (auto& s : blank.spots) s.intensity = 0.0;
  IdentitySpec none = specs[0];
  none.spots.clear();
  CHECK(render(blank, shape, 0.0, Rng(1)).pixels ==
        render(none, shape, 0.0, Rng(1)).pixels);

  CHECK_THROWS_AS(render(specs[0], Shape{8, 32, 1}, 0.0, Rng(1)),
                  ContractError);
}

TEST_CASE("render: mean pixel value stays in a sane band") {
  const auto specs = gen_identities(10, 12, Rng(5, "ids"));
  Rng rng(5, "render");
  for (int i = 0; i < 100; ++i) {
    const auto s = render(specs[static_cast<std::size_t>(i % 10)], Shape{},
                          0.02, rng.substream(static_cast<std::uint64_t>(i)));
    const double m = mean(s.pixels);
    CHECK((m >= 0.2 && m <= 0.9));
    CHECK(all_in_unit_range(s.pixels));
  }
}

TEST_CASE("render supports the 175x175x3 configuration") {
  const auto specs = gen_identities(1, 12, Rng(5, "ids"));
  const auto s = render(specs[0], Shape{175, 175, 3}, 0.02, Rng(5));
  CHECK(s.pixels.height == 175);
  CHECK(s.pixels.channels == 3);
  CHECK(s.pixels.size() == 175u * 175u * 3u);
  CHECK(all_in_unit_range(s.pixels));
}

TEST_CASE("augment examples") {
  const auto specs = gen_identities(1, 8, Rng(3, "ids"));
  Sample src = render(specs[0], Shape{}, 0.02, Rng(4));
  src.sample_id = 17;
  src.identity = 9;

  AugmentParams none;
  none.copies_per_image = 0;
  CHECK(augment(src, none, Rng(1)).empty());

  CHECK(apply_augmentation(src.pixels, AugmentDraw{0.0, 0.0, 1.0}) ==
        src.pixels);

  AugmentParams identity;
  identity.tilt_max_deg = 0;
  identity.vshift_max_frac = 0;
  identity.brightness_low = identity.brightness_high = 1.0;
  for (const auto& c : augment(src, identity, Rng(2))) {
    CHECK(c.pixels == src.pixels);
  }

  const auto copies = augment(src, AugmentParams{}, Rng(5), 100);
  REQUIRE(copies.size() == 5);
  for (std::size_t i = 0; i < copies.size(); ++i) {
    CHECK(copies[i].identity == 9);
    CHECK(copies[i].augmented_from == SampleId{17});
    CHECK(copies[i].sample_id == static_cast<SampleId>(100 + i));
    CHECK(all_in_unit_range(copies[i].pixels));
    CHECK(copies[i].pixels != src.pixels);
  }
}

TEST_CASE("augment: shift moves content vertically by whole pixels") {
  Image img(20, 20, 1, 0.0);
  img.at(5, 7) = 1.0;
  const auto shifted = apply_augmentation(img, AugmentDraw{0.0, 3.0, 1.0});
  CHECK(shifted.at(8, 7) == 1.0);
  CHECK(shifted.at(5, 7) == 0.0);
  // 90 degrees maps the centre row onto the centre column
  Image bar(21, 21, 1, 0.0);
  for (int x = 0; x < 21; ++x) bar.at(10, x) = 1.0;
  const auto rot = apply_augmentation(bar, AugmentDraw{90.0, 0.0, 1.0});
  for (int y = 2; y < 19; ++y) CHECK(rot.at(y, 10) == doctest::Approx(1.0));
  CHECK(rot.at(10, 3) == doctest::Approx(0.0));
}

TEST_CASE("augment params validation") {
  AugmentParams p;
  p.brightness_low = 1.1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.copies_per_image = -1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("build_dataset: counts, split by original, identities in both splits") {
  const Dataset d = build_dataset(10, 10, AugmentParams{}, 0.9, Rng(12),
                                  DatasetOptions{Shape{16, 16, 1}, 6, false});
  REQUIRE(d.samples.size() == 600);
  CHECK(d.split(Split::Train).size() == 540);
  CHECK(d.split(Split::Test).size() == 60);

  std::map<SampleId, const Sample*> by_id;
  std::set<SampleId> ids;
  for (const auto& s : d.samples) {
    by_id[s.sample_id] = &s;
    CHECK(ids.insert(s.sample_id).second);
  }
  std::map<IdentityId, std::set<Split>> splits;
  for (const auto& s : d.samples) {
    splits[s.identity].insert(s.split);
    if (s.augmented_from) {
      const Sample* orig = by_id.at(*s.augmented_from);
      CHECK(!orig->augmented_from.has_value());
      CHECK(orig->identity == s.identity);
      CHECK(orig->split == s.split);
    }
  }
  CHECK(splits.size() == 10);
  for (const auto& [id, set] : splits) CHECK(set.size() == 2);
}

TEST_CASE("build_dataset: split by identity keeps identities disjoint") {
  const Dataset d = build_dataset(10, 3, AugmentParams{}, 0.8, Rng(13),
                                  DatasetOptions{Shape{16, 16, 1}, 4, true});
  std::map<IdentityId, std::set<Split>> splits;
  for (const auto& s : d.samples) splits[s.identity].insert(s.split);
  int train_ids = 0;
  for (const auto& [id, set] : splits) {
    CHECK(set.size() == 1);
    train_ids += set.contains(Split::Train);
  }
  CHECK(train_ids == 8);
}

TEST_CASE("build_dataset writes byte-identical directories for one seed") {
  testing::TempDir a("ds_a"), b("ds_b");
  const DatasetOptions opt{Shape{16, 16, 1}, 5, false};
  const auto ma = write_dataset(build_dataset(4, 3, AugmentParams{}, 0.9, Rng(21), opt),
                                a.path().string());
  const auto mb = write_dataset(build_dataset(4, 3, AugmentParams{}, 0.9, Rng(21), opt),
                                b.path().string());
  CHECK(testing::read_bytes(ma) == testing::read_bytes(mb));
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(a.path() / "samples")) {
    const auto other = b.path() / "samples" / e.path().filename();
    CHECK(testing::read_bytes(e.path().string()) == testing::read_bytes(other.string()));
    ++files;
  }
  CHECK(files == 4u * 3u * 6u);

  const auto loaded = load_samples(ma);
  REQUIRE(loaded.size() == 72);
  CHECK(loaded[1].augmented_from == SampleId{0});
  CHECK(loaded[1].pixels.height == 16);
}
