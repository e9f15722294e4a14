#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "ler/synth.hpp"
#include "support.hpp"

using namespace ler;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

CorpusConfig quiet_config() {
  CorpusConfig c;
  c.noise = 0.0;
  c.jitter = 0;
  return c;
}

}  // namespace

TEST(Glyphs, BaseSetIsDistinctAndInked) {
  std::set<Glyph> seen;
  for (std::size_t k = 0; k < 8; ++k) {
    const Glyph g = radical_glyph(k);
    int on = 0;
    for (auto px : g) on += px;
    EXPECT_GE(on, 4) << "glyph " << k;
    seen.insert(g);
  }
  EXPECT_EQ(seen.size(), 8u);
}

TEST(Glyphs, ExtraRadicalsStayDistinct) {
  std::set<Glyph> seen;
  for (std::size_t k = 0; k < 40; ++k) seen.insert(radical_glyph(k));
  EXPECT_EQ(seen.size(), 40u);
  EXPECT_EQ(radical_glyph(30), radical_glyph(30));
}

TEST(Render, BoxLeafFillsTheCellBorder) {
  const auto v = IdsVocab::desk();
  const auto bm = render_character(IdsTree::leaf(v.id("r6")), v, 24);
  for (int i = 0; i < 24; ++i) {
    EXPECT_EQ(bm.at(0, i), 1);
    EXPECT_EQ(bm.at(23, i), 1);
    EXPECT_EQ(bm.at(i, 0), 1);
    EXPECT_EQ(bm.at(i, 23), 1);
  }
  EXPECT_EQ(bm.at(12, 12), 0);
}

TEST(Render, LeftRightHalvesDependOnlyOnTheirChild) {
  const auto v = IdsVocab::desk();
  const int lr = v.id("LR");
  const auto rads = v.radicals();
  const auto ref = render_character(IdsTree::node(lr, {IdsTree::leaf(rads[0]), IdsTree::leaf(rads[1])}), v);
  for (int other : rads) {
    const auto a = render_character(IdsTree::node(lr, {IdsTree::leaf(rads[0]), IdsTree::leaf(other)}), v);
    const auto b = render_character(IdsTree::node(lr, {IdsTree::leaf(other), IdsTree::leaf(rads[1])}), v);
    for (int y = 0; y < 24; ++y) {
      for (int x = 0; x < 12; ++x) EXPECT_EQ(a.at(y, x), ref.at(y, x));
      for (int x = 12; x < 24; ++x) EXPECT_EQ(b.at(y, x), ref.at(y, x));
    }
  }
}

TEST(Render, TopBottomHalvesDependOnlyOnTheirChild) {
  const auto v = IdsVocab::desk();
  const int tb = v.id("TB");
  const auto rads = v.radicals();
  const auto ref = render_character(IdsTree::node(tb, {IdsTree::leaf(rads[2]), IdsTree::leaf(rads[3])}), v);
  for (int other : rads) {
    const auto a = render_character(IdsTree::node(tb, {IdsTree::leaf(rads[2]), IdsTree::leaf(other)}), v);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 24; ++x) EXPECT_EQ(a.at(y, x), ref.at(y, x));
  }
}

TEST(Render, SurroundKeepsInnerChildInsideBorderRegion) {
  const auto v = IdsVocab::desk();
  const int su = v.id("SU");
  const auto rads = v.radicals();
  const auto a = render_character(IdsTree::node(su, {IdsTree::leaf(rads[5]), IdsTree::leaf(rads[0])}), v);
  const auto b = render_character(IdsTree::node(su, {IdsTree::leaf(rads[5]), IdsTree::leaf(rads[1])}), v);
  // Outside the central region only the enclosing child is drawn.
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x)
      if (y < 6 || y >= 18 || x < 6 || x >= 18) EXPECT_EQ(a.at(y, x), b.at(y, x));
  EXPECT_NE(a, b);
}

TEST(Charset, EveryCharacterRendersDistinctly) {
  const auto v = IdsVocab::desk();
  CorpusConfig cfg;
  const auto cs = build_charset(v, cfg);
  ASSERT_EQ(cs.size(), 64u);
  EXPECT_EQ(cs.n_class(), 65);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    EXPECT_EQ(cs.bitmaps[i], render_character(cs.trees[i], v, cfg.cell));
    EXPECT_LE(preorder(cs.trees[i]).size() + 1, static_cast<std::size_t>(cfg.ids_len));
    for (std::size_t j = i + 1; j < cs.size(); ++j) {
      EXPECT_GE(hamming(cs.bitmaps[i], cs.bitmaps[j]), cfg.min_glyph_distance) << i << " vs " << j;
    }
  }
}

TEST(Charset, PadClassHasAllPadRadicals) {
  const auto cs = build_charset(IdsVocab::desk(), CorpusConfig{});
  EXPECT_EQ(cs.ids_label(0), std::vector<int>(8, IdsVocab::kPad));
  const auto first = cs.ids_label(1);
  EXPECT_EQ(parse(first, cs.vocab), cs.trees[0]);
}

TEST(Sample, SingleNoiselessCharacter) {
  auto cfg = quiet_config();
  cfg.min_chars = cfg.max_chars = 1;
  const auto cs = build_charset(IdsVocab::desk(), cfg);
  CounterRng rng(9, 0);
  const auto s = generate_sample(cs, cfg, rng);
  ASSERT_EQ(s.true_length, 1);
  const auto& bm = cs.bitmaps[static_cast<std::size_t>(s.labels[0] - 1)];
  int on_image = 0, on_glyph = 0;
  for (float px : s.image) on_image += px > 0.5f;
  for (auto px : bm.pixels) on_glyph += px;
  EXPECT_EQ(on_image, on_glyph);
  for (int j = 1; j < cfg.max_len; ++j) EXPECT_EQ(s.labels[static_cast<std::size_t>(j)], 0);
}

TEST(Sample, RerenderingFromLabelsReproducesCleanImage) {
  const auto cfg = quiet_config();
  const auto cs = build_charset(IdsVocab::desk(), cfg);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto s = generate_indexed(cs, cfg, 3, Split::Train, i);
    const std::vector<int> classes(s.labels.begin(), s.labels.begin() + s.true_length);
    EXPECT_EQ(render_line(cs, cfg, classes, line_layout(cfg, s.true_length)), s.image);
  }
}

TEST(Sample, InvariantsHoldUnderNoiseAndJitter) {
  const CorpusConfig cfg;
  const auto cs = build_charset(IdsVocab::desk(), cfg);
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto s = generate_indexed(cs, cfg, 5, Split::Train, i);
    ASSERT_EQ(s.image.size(), static_cast<std::size_t>(cfg.height * cfg.width));
    for (float px : s.image) ASSERT_TRUE(px >= 0.0f && px <= 1.0f);
    ASSERT_EQ(s.labels.size(), static_cast<std::size_t>(cfg.max_len));
    ASSERT_EQ(s.ids_labels.size(), static_cast<std::size_t>(cfg.max_len * cfg.ids_len));
    for (int j = 0; j < cfg.max_len; ++j) {
      const int label = s.labels[static_cast<std::size_t>(j)];
      if (j >= s.true_length) {
        EXPECT_EQ(label, 0);
      } else {
        EXPECT_GE(label, 1);
        EXPECT_LT(label, cs.n_class());
      }
      const auto want = cs.ids_label(label);
      EXPECT_TRUE(std::equal(want.begin(), want.end(), s.ids_labels.begin() + j * cfg.ids_len));
    }
    for (int j = 1; j < s.true_length; ++j) {
      EXPECT_GT(s.placements[static_cast<std::size_t>(j)].x, s.placements[static_cast<std::size_t>(j - 1)].x);
    }
    for (const auto& p : s.placements) {
      EXPECT_GE(p.x, 0);
      EXPECT_LE(p.x + cfg.cell, cfg.width);
    }
  }
}

TEST(Sample, DeterministicPerIndex) {
  const CorpusConfig cfg;
  const auto cs = build_charset(IdsVocab::desk(), cfg);
  const auto a = generate_indexed(cs, cfg, 7, Split::Train, 12);
  const auto b = generate_indexed(cs, cfg, 7, Split::Train, 12);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(generate_samples(cs, cfg, 7, Split::Train, 13).back().image, a.image);
}

TEST(Sample, LengthHistogramCoversRange) {
  const CorpusConfig cfg;
  const auto cs = build_charset(IdsVocab::desk(), cfg);
  std::vector<int> hist(static_cast<std::size_t>(cfg.max_chars + 1), 0);
  for (const auto& s : generate_samples(cs, cfg, 1, Split::Train, 1000)) ++hist[static_cast<std::size_t>(s.true_length)];
  EXPECT_EQ(hist[0], 0);
  for (int n = cfg.min_chars; n <= cfg.max_chars; ++n) EXPECT_GT(hist[static_cast<std::size_t>(n)], 100) << n;
}

TEST(Sample, ConfigValidation) {
  CorpusConfig cfg;
  cfg.max_chars = 7;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = CorpusConfig{};
  cfg.width = 100;
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(Corpus, EmptyCountWritesHeaderOnly) {
  const auto dir = ler::testing::scratch_dir("corpus_empty");
  generate_corpus(dir, CorpusConfig{}, IdsVocab::desk(), 1, Split::Train, 0);
  EXPECT_EQ(slurp(dir / "manifest.tsv"), "sample_id\ttrue_length\tlabels\tids_labels\tx_spans\n");
  EXPECT_TRUE(load_corpus(dir).samples.empty());
}

TEST(Corpus, RepeatGenerationIsByteIdentical) {
  const auto a = ler::testing::scratch_dir("corpus_a");
  const auto b = ler::testing::scratch_dir("corpus_b");
  generate_corpus(a, CorpusConfig{}, IdsVocab::desk(), 7, Split::Train, 16);
  generate_corpus(b, CorpusConfig{}, IdsVocab::desk(), 7, Split::Train, 16);
  EXPECT_EQ(slurp(a / "manifest.tsv"), slurp(b / "manifest.tsv"));
  EXPECT_EQ(slurp(a / "images" / "train_000005.lten"), slurp(b / "images" / "train_000005.lten"));
}

TEST(Corpus, LoadRoundTripsSamples) {
  const auto dir = ler::testing::scratch_dir("corpus_rt");
  const CorpusConfig cfg;
  generate_corpus(dir, cfg, IdsVocab::desk(), 4, Split::Test, 10);
  const auto c = load_corpus(dir);
  const auto cs = build_charset(IdsVocab::desk(), cfg);
  ASSERT_EQ(c.samples.size(), 10u);
  EXPECT_EQ(c.split, "test");
  for (std::size_t i = 0; i < 10; ++i) {
    const auto s = generate_indexed(cs, cfg, 4, Split::Test, i);
    EXPECT_EQ(c.samples[i].image, s.image);
    EXPECT_EQ(c.samples[i].labels, s.labels);
    EXPECT_EQ(c.samples[i].ids_labels, s.ids_labels);
    EXPECT_EQ(c.samples[i].true_length, s.true_length);
    ASSERT_EQ(c.samples[i].placements.size(), s.placements.size());
    for (std::size_t j = 0; j < s.placements.size(); ++j) EXPECT_EQ(c.samples[i].placements[j].x, s.placements[j].x);
  }
}

TEST(Corpus, TrainAndTestSplitsShareNoSample) {
  const CorpusConfig cfg;
  const auto cs = build_charset(IdsVocab::desk(), cfg);
  std::set<std::uint64_t> train;
  for (const auto& s : generate_samples(cs, cfg, 7, Split::Train, 2048)) train.insert(sample_hash(s));
  EXPECT_EQ(train.size(), 2048u);
  for (const auto& s : generate_samples(cs, cfg, 7, Split::Test, 256)) EXPECT_EQ(train.count(sample_hash(s)), 0u);
}
