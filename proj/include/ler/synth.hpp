#pragma once

// Synthetic text lines built from radical-composed glyphs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ler/ids.hpp"
#include "ler/lten.hpp"
#include "ler/rng.hpp"

namespace ler {

using Glyph = std::array<std::uint8_t, 49>;  // 7x7, row-major

namespace detail {

inline Glyph glyph_from_rows(const std::array<const char*, 7>& rows) {
  Glyph g{};
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 7; ++x) g[static_cast<std::size_t>(y * 7 + x)] = rows[static_cast<std::size_t>(y)][x] == '#';
  }
  return g;
}

inline const std::vector<Glyph>& base_glyphs() {
  static const std::vector<Glyph> glyphs = {
      glyph_from_rows({".......", ".......", ".......", "#######", ".......", ".......", "......."}),  // hbar
      glyph_from_rows({"...#...", "...#...", "...#...", "...#...", "...#...", "...#...", "...#..."}),  // vbar
      glyph_from_rows({"...#...", "...#...", "...#...", "#######", "...#...", "...#...", "...#..."}),  // cross
      glyph_from_rows({"#......", "#......", "#......", "#......", "#......", "#......", "#######"}),  // L-corner
      glyph_from_rows({"#......", ".#.....", "..#....", "...#...", "....#..", ".....#.", "......#"}),  // diagonal
      glyph_from_rows({"#######", "#.....#", "#.....#", "#.....#", "#.....#", "#.....#", "#######"}),  // box
      glyph_from_rows({"#######", "...#...", "...#...", "...#...", "...#...", "...#...", "...#..."}),  // tee
      glyph_from_rows({"##.....", "##.....", ".......", ".......", ".......", ".....##", ".....##"}),  // dots
  };
  return glyphs;
}

}  // namespace detail

/// Glyph for the k-th radical of a vocab. The first eight are fixed stroke
/// shapes; further radicals get seeded random patterns distinct from all
/// earlier ones.
inline Glyph radical_glyph(std::size_t k) {
  const auto& base = detail::base_glyphs();
  if (k < base.size()) return base[k];
  static std::vector<Glyph> extra;
  while (extra.size() + base.size() <= k) {
    CounterRng rng(0x61F, extra.size());
    Glyph g{};
    while (true) {
      int on = 0;
      for (auto& px : g) on += (px = rng.uniform() < 0.3);
      bool clash = on < 4 || std::find(base.begin(), base.end(), g) != base.end() ||
                   std::find(extra.begin(), extra.end(), g) != extra.end();
      if (!clash) break;
    }
    extra.push_back(g);
  }
  return extra[k - base.size()];
}

/// Square binary bitmap, row-major, values 0 or 1.
struct Bitmap {
  int size = 0;
  std::vector<std::uint8_t> pixels;
  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y * size + x)]; }
  friend bool operator==(const Bitmap&, const Bitmap&) = default;
};

namespace detail {

struct Rect {
  int x, y, w, h;
  Rect inset(int d) const {
    const int dx = std::min(d, (w - 1) / 2);
    const int dy = std::min(d, (h - 1) / 2);
    return {x + dx, y + dy, w - 2 * dx, h - 2 * dy};
  }
};

inline void fill(Bitmap& bm, Rect r, std::uint8_t v) {
  for (int y = r.y; y < r.y + r.h; ++y) {
    for (int x = r.x; x < r.x + r.w; ++x) bm.pixels[static_cast<std::size_t>(y * bm.size + x)] = v;
  }
}

// Operator layout is chosen by the operator's index in the vocab:
// 0 splits left-right, 1 top-bottom, 2 surround, then repeating.
inline void draw_tree(const IdsTree& t, const IdsVocab& vocab, Bitmap& bm, Rect r,
                      const std::vector<int>& radicals, const std::vector<int>& ops) {
  if (r.w <= 0 || r.h <= 0) return;
  if (t.children.empty()) {
    const auto k = static_cast<std::size_t>(std::find(radicals.begin(), radicals.end(), t.symbol) - radicals.begin());
    const Glyph g = radical_glyph(k);
    for (int y = 0; y < r.h; ++y) {
      for (int x = 0; x < r.w; ++x) {
        if (g[static_cast<std::size_t>((y * 7 / r.h) * 7 + x * 7 / r.w)]) {
          bm.pixels[static_cast<std::size_t>((r.y + y) * bm.size + r.x + x)] = 1;
        }
      }
    }
    return;
  }
  const auto layout = (std::find(ops.begin(), ops.end(), t.symbol) - ops.begin()) % 3;
  const int n = static_cast<int>(t.children.size());
  auto split = [&](std::size_t first, Rect area, bool horizontal) {
    const int parts = n - static_cast<int>(first);
    for (int i = 0; i < parts; ++i) {
      Rect sub = area;
      if (horizontal) {
        sub.x = area.x + area.w * i / parts;
        sub.w = area.x + area.w * (i + 1) / parts - sub.x;
      } else {
        sub.y = area.y + area.h * i / parts;
        sub.h = area.y + area.h * (i + 1) / parts - sub.y;
      }
      draw_tree(t.children[first + static_cast<std::size_t>(i)], vocab, bm, sub.inset(1), radicals, ops);
    }
  };
  if (layout == 0) {
    split(0, r, true);
  } else if (layout == 1) {
    split(0, r, false);
  } else {
    draw_tree(t.children[0], vocab, bm, r.inset(1), radicals, ops);
    const Rect inner{r.x + r.w / 4, r.y + r.h / 4, r.w - 2 * (r.w / 4), r.h - 2 * (r.h / 4)};
    fill(bm, inner, 0);
    split(1, inner, true);
  }
}

}  // namespace detail

/// Deterministic rendering of a character tree into a size x size cell.
inline Bitmap render_character(const IdsTree& tree, const IdsVocab& vocab, int size = 24) {
  Bitmap bm{size, std::vector<std::uint8_t>(static_cast<std::size_t>(size * size), 0)};
  detail::draw_tree(tree, vocab, bm, {0, 0, size, size}, vocab.radicals(), vocab.operators());
  return bm;
}

inline int hamming(const Bitmap& a, const Bitmap& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) d += a.pixels[i] != b.pixels[i];
  return d;
}

struct CorpusConfig {
  int height = 32;
  int width = 128;
  int max_len = 6;        // L: label slots per line
  int min_chars = 1;
  int max_chars = 5;
  int cell = 24;
  int jitter = 2;
  double noise = 0.05;
  int ids_len = 8;        // L_ids
  int max_depth = 2;
  int charset_size = 64;
  std::uint64_t charset_seed = 1;
  int min_glyph_distance = 8;  // pixels that must differ between any two characters

  int n_class() const { return charset_size + 1; }
};

/// Character set: class c (1-based) is trees[c - 1]; class 0 is padding.
struct Charset {
  IdsVocab vocab;
  std::vector<IdsTree> trees;
  std::vector<Bitmap> bitmaps;
  int ids_len = 8;
  int max_depth = 2;

  std::size_t size() const { return trees.size(); }
  int n_class() const { return static_cast<int>(trees.size()) + 1; }
  std::vector<int> ids_label(int cls) const {
    if (cls <= 0) return std::vector<int>(static_cast<std::size_t>(ids_len), IdsVocab::kPad);
    return flatten(trees.at(static_cast<std::size_t>(cls - 1)), static_cast<std::size_t>(ids_len), max_depth);
  }
};

/// Seeded charset whose rendered cells differ pairwise in at least
/// `min_glyph_distance` pixels.
inline Charset build_charset(const IdsVocab& vocab, const CorpusConfig& cfg) {
  if (cfg.charset_size < 1) throw ConfigError("charset_size must be >= 1");
  const std::uint64_t available = count_trees(vocab, cfg.max_depth);
  const std::size_t pool = static_cast<std::size_t>(
      std::min<std::uint64_t>(available, std::max<std::uint64_t>(static_cast<std::uint64_t>(cfg.charset_size) * 16, 4096)));
  const auto candidates = enumerate_charset(vocab, cfg.max_depth, std::max<std::size_t>(pool, 1), cfg.charset_seed);
  Charset cs{vocab, {}, {}, cfg.ids_len, cfg.max_depth};
  for (const auto& t : candidates) {
    if (static_cast<int>(preorder(t).size()) + 1 > cfg.ids_len) continue;
    Bitmap bm = render_character(t, vocab, cfg.cell);
    const bool close = std::any_of(cs.bitmaps.begin(), cs.bitmaps.end(),
                                   [&](const Bitmap& o) { return hamming(o, bm) < cfg.min_glyph_distance; });
    if (close) continue;
    cs.trees.push_back(t);
    cs.bitmaps.push_back(std::move(bm));
    if (static_cast<int>(cs.trees.size()) == cfg.charset_size) return cs;
  }
  throw ConfigError("cannot find " + std::to_string(cfg.charset_size) +
                    " visually distinct characters at depth " + std::to_string(cfg.max_depth));
}

struct Placement {
  int x = 0;
  int y = 0;
};

struct TextLineSample {
  int height = 0;
  int width = 0;
  std::vector<float> image;        // H x W, values in [0, 1]
  std::vector<int> labels;         // L class ids, 0 after true_length
  std::vector<int> ids_labels;     // L x L_ids
  int true_length = 0;
  std::vector<Placement> placements;  // top-left corner of each character cell

  std::pair<int, int> span(int j, int cell) const {
    return {placements[static_cast<std::size_t>(j)].x, placements[static_cast<std::size_t>(j)].x + cell};
  }
};

/// Clean line image for the given classes at the given cell positions.
inline std::vector<float> render_line(const Charset& cs, const CorpusConfig& cfg, const std::vector<int>& classes,
                                      const std::vector<Placement>& where) {
  std::vector<float> img(static_cast<std::size_t>(cfg.height * cfg.width), 0.0f);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const Bitmap& bm = cs.bitmaps.at(static_cast<std::size_t>(classes[i] - 1));
    for (int y = 0; y < bm.size; ++y) {
      for (int x = 0; x < bm.size; ++x) {
        const int py = where[i].y + y;
        const int px = where[i].x + x;
        if (bm.at(y, x) && py >= 0 && px >= 0 && py < cfg.height && px < cfg.width) {
          img[static_cast<std::size_t>(py * cfg.width + px)] = 1.0f;
        }
      }
    }
  }
  return img;
}

inline void validate(const CorpusConfig& cfg) {
  if (cfg.min_chars < 1 || cfg.min_chars > cfg.max_chars || cfg.max_chars > cfg.max_len) {
    throw ConfigError("line length range must satisfy 1 <= min_chars <= max_chars <= max_len");
  }
  if (cfg.max_chars * cfg.cell + 2 * cfg.jitter > cfg.width || cfg.cell + 2 * cfg.jitter > cfg.height) {
    throw ConfigError("line of " + std::to_string(cfg.max_chars) + " cells does not fit " +
                      std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  if (cfg.noise < 0.0) throw ConfigError("noise must be >= 0");
}

/// Cell positions of a line of `count` characters before jitter: left-aligned
/// after a margin that centres the longest allowed line, vertically centred.
inline std::vector<Placement> line_layout(const CorpusConfig& cfg, int count) {
  const int left = (cfg.width - cfg.max_chars * cfg.cell) / 2;
  const int top = (cfg.height - cfg.cell) / 2;
  std::vector<Placement> out;
  for (int i = 0; i < count; ++i) out.push_back({left + i * cfg.cell, top});
  return out;
}

/// One line: cells left to right from the layout, each displaced by up to
/// +-jitter pixels independently, then Gaussian pixel noise.
inline TextLineSample generate_sample(const Charset& cs, const CorpusConfig& cfg, CounterRng& rng) {
  validate(cfg);
  TextLineSample s;
  s.height = cfg.height;
  s.width = cfg.width;
  s.true_length = rng.between(cfg.min_chars, cfg.max_chars);
  std::vector<int> classes(static_cast<std::size_t>(s.true_length));
  for (auto& c : classes) c = 1 + static_cast<int>(rng.below(cs.size()));
  s.placements = line_layout(cfg, s.true_length);
  for (auto& p : s.placements) {
    p.x += cfg.jitter ? rng.between(-cfg.jitter, cfg.jitter) : 0;
    p.y += cfg.jitter ? rng.between(-cfg.jitter, cfg.jitter) : 0;
  }
  s.image = render_line(cs, cfg, classes, s.placements);
  if (cfg.noise > 0.0) {
    for (float& v : s.image) v = static_cast<float>(std::clamp(v + cfg.noise * rng.normal(), 0.0, 1.0));
  }
  s.labels.assign(static_cast<std::size_t>(cfg.max_len), 0);
  std::copy(classes.begin(), classes.end(), s.labels.begin());
  for (int j = 0; j < cfg.max_len; ++j) {
    const auto seq = cs.ids_label(s.labels[static_cast<std::size_t>(j)]);
    s.ids_labels.insert(s.ids_labels.end(), seq.begin(), seq.end());
  }
  return s;
}

enum class Split : std::uint64_t { Train = 0, Test = 1 };

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ConfigError("split must be 'train' or 'test', got '" + s + "'");
}

inline const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

/// Sample i of a split depends only on (seed, split, i).
inline TextLineSample generate_indexed(const Charset& cs, const CorpusConfig& cfg, std::uint64_t seed, Split split,
                                       std::uint64_t index) {
  CounterRng rng = CounterRng(seed, static_cast<std::uint64_t>(split)).fork(index);
  return generate_sample(cs, cfg, rng);
}

inline std::vector<TextLineSample> generate_samples(const Charset& cs, const CorpusConfig& cfg, std::uint64_t seed,
                                                    Split split, std::size_t count) {
  std::vector<TextLineSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_indexed(cs, cfg, seed, split, i));
  return out;
}

/// FNV-1a over image bytes and labels.
inline std::uint64_t sample_hash(const TextLineSample& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 0x100000001b3ULL;
  };
  feed(s.image.data(), s.image.size() * sizeof(float));
  feed(s.labels.data(), s.labels.size() * sizeof(int));
  return h;
}

// ---------------------------------------------------------------------------
// On-disk corpus: corpus.meta, vocab.txt, charset.txt, manifest.tsv, images/*.lten

namespace detail {

inline std::string join_ints(const std::vector<int>& v, char sep, std::size_t begin = 0, std::size_t end = SIZE_MAX) {
  std::string s;
  end = std::min(end, v.size());
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<std::string> split_string(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::vector<int> parse_ints(const std::string& s, char sep) {
  std::vector<int> out;
  if (s.empty()) return out;
  for (const auto& tok : split_string(s, sep)) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace detail

inline std::map<std::string, std::string> corpus_meta(const CorpusConfig& cfg, std::uint64_t seed, Split split,
                                                      std::size_t count) {
  return {{"height", std::to_string(cfg.height)},
          {"width", std::to_string(cfg.width)},
          {"max_len", std::to_string(cfg.max_len)},
          {"min_chars", std::to_string(cfg.min_chars)},
          {"max_chars", std::to_string(cfg.max_chars)},
          {"cell", std::to_string(cfg.cell)},
          {"jitter", std::to_string(cfg.jitter)},
          {"noise", std::to_string(cfg.noise)},
          {"ids_len", std::to_string(cfg.ids_len)},
          {"max_depth", std::to_string(cfg.max_depth)},
          {"charset_size", std::to_string(cfg.charset_size)},
          {"charset_seed", std::to_string(cfg.charset_seed)},
          {"min_glyph_distance", std::to_string(cfg.min_glyph_distance)},
          {"seed", std::to_string(seed)},
          {"split", split_name(split)},
          {"count", std::to_string(count)}};
}

/// Writes `count` samples of one split under `dir`. Overwrites existing files.
inline void generate_corpus(const std::filesystem::path& dir, const CorpusConfig& cfg, const IdsVocab& vocab,
                            std::uint64_t seed, Split split, std::size_t count) {
  namespace fs = std::filesystem;
  validate(cfg);
  const Charset cs = build_charset(vocab, cfg);
  fs::create_directories(dir / "images");
  {
    std::ofstream meta(dir / "corpus.meta");
    for (const auto& [k, v] : corpus_meta(cfg, seed, split, count)) meta << k << '=' << v << '\n';
  }
  {
    std::ofstream voc(dir / "vocab.txt");
    vocab.write(voc);
  }
  {
    std::ofstream chars(dir / "charset.txt");
    for (std::size_t c = 0; c < cs.size(); ++c) chars << c + 1 << '\t' << to_text(preorder(cs.trees[c]), vocab) << '\n';
  }
  std::ofstream manifest(dir / "manifest.tsv");
  manifest << "sample_id\ttrue_length\tlabels\tids_labels\tx_spans\n";
  for (std::size_t i = 0; i < count; ++i) {
    const TextLineSample s = generate_indexed(cs, cfg, seed, split, i);
    char id[32];
    std::snprintf(id, sizeof id, "%s_%06zu", split_name(split), i);
    std::string ids;
    for (int j = 0; j < cfg.max_len; ++j) {
      if (j) ids += ';';
      ids += detail::join_ints(s.ids_labels, ',', static_cast<std::size_t>(j * cfg.ids_len),
                               static_cast<std::size_t>((j + 1) * cfg.ids_len));
    }
    std::string spans;
    for (int j = 0; j < s.true_length; ++j) {
      if (j) spans += ';';
      const auto [x0, x1] = s.span(j, cfg.cell);
      spans += std::to_string(x0) + ',' + std::to_string(x1) + ',' + std::to_string(s.placements[static_cast<std::size_t>(j)].y);
    }
    manifest << id << '\t' << s.true_length << '\t' << detail::join_ints(s.labels, ',') << '\t' << ids << '\t' << spans
             << '\n';
    save_lten((dir / "images" / (std::string(id) + ".lten")).string(),
              Tensor::from({static_cast<std::size_t>(cfg.height), static_cast<std::size_t>(cfg.width), 1}, s.image));
  }
  if (!manifest) throw std::runtime_error("failed writing manifest in " + dir.string());
}

struct Corpus {
  CorpusConfig config;
  std::uint64_t seed = 0;
  std::string split;
  Charset charset;
  std::vector<std::string> ids;
  std::vector<TextLineSample> samples;
};

inline std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path.string() + ": expected key=value, got '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus c;
  auto meta = read_key_values(dir / "corpus.meta");
  auto get = [&](const char* k) {
    auto it = meta.find(k);
    if (it == meta.end()) throw ConfigError("corpus.meta missing key " + std::string(k));
    return it->second;
  };
  CorpusConfig& cfg = c.config;
  cfg.height = std::stoi(get("height"));
  cfg.width = std::stoi(get("width"));
  cfg.max_len = std::stoi(get("max_len"));
  cfg.min_chars = std::stoi(get("min_chars"));
  cfg.max_chars = std::stoi(get("max_chars"));
  cfg.cell = std::stoi(get("cell"));
  cfg.jitter = std::stoi(get("jitter"));
  cfg.noise = std::stod(get("noise"));
  cfg.ids_len = std::stoi(get("ids_len"));
  cfg.max_depth = std::stoi(get("max_depth"));
  cfg.charset_size = std::stoi(get("charset_size"));
  cfg.charset_seed = std::stoull(get("charset_seed"));
  cfg.min_glyph_distance = std::stoi(get("min_glyph_distance"));
  c.seed = std::stoull(get("seed"));
  c.split = get("split");
  c.charset = build_charset(IdsVocab::load((dir / "vocab.txt").string()), cfg);

  std::ifstream in(dir / "manifest.tsv");
  if (!in) throw std::runtime_error("cannot open manifest in " + dir.string());
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto cols = detail::split_string(line, '\t');
    if (cols.size() != 5) throw FormatError("manifest: expected 5 columns, got '" + line + "'");
    TextLineSample s;
    s.height = cfg.height;
    s.width = cfg.width;
    s.true_length = std::stoi(cols[1]);
    s.labels = detail::parse_ints(cols[2], ',');
    for (const auto& part : detail::split_string(cols[3], ';')) {
      const auto seq = detail::parse_ints(part, ',');
      s.ids_labels.insert(s.ids_labels.end(), seq.begin(), seq.end());
    }
    if (!cols[4].empty()) {
      for (const auto& part : detail::split_string(cols[4], ';')) {
        const auto v = detail::parse_ints(part, ',');
        if (v.size() != 3) throw FormatError("manifest: bad span '" + part + "'");
        s.placements.push_back({v[0], v[2]});
      }
    }
    if (static_cast<int>(s.labels.size()) != cfg.max_len ||
        static_cast<int>(s.ids_labels.size()) != cfg.max_len * cfg.ids_len ||
        static_cast<int>(s.placements.size()) != s.true_length) {
      throw FormatError("manifest: inconsistent row for " + cols[0]);
    }
    const Tensor img = load_lten((dir / "images" / (cols[0] + ".lten")).string());
    if (img.size() != static_cast<std::size_t>(cfg.height * cfg.width)) {
      throw FormatError("image " + cols[0] + " has shape " + to_string(img.shape()));
    }
    s.image = img.to_vector();
    c.ids.push_back(cols[0]);
    c.samples.push_back(std::move(s));
  }
  return c;
}

}  // namespace ler
