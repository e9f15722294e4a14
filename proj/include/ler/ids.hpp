#pragma once

// Ideographic description sequences: a character is a tree of spatial
// operators (fixed arity) over radical leaves, serialized in pre-order.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <span>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ler/rng.hpp"

namespace ler {

/// Raised for malformed symbol sequences. `position` is a token index for
/// id sequences and a byte offset for text input.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class SymbolKind { Special, Operator, Radical };

struct IdsSymbol {
  std::string name;
  SymbolKind kind = SymbolKind::Radical;
  int arity = 0;
};

class IdsVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEnd = 1;

  IdsVocab() {
    symbols_.push_back({"<pad>", SymbolKind::Special, 0});
    symbols_.push_back({"<end>", SymbolKind::Special, 0});
    for (int i = 0; i < 2; ++i) by_name_[symbols_[static_cast<std::size_t>(i)].name] = i;
  }

  /// Three binary operators and eight radicals, matching the built-in glyphs.
  static IdsVocab desk() {
    IdsVocab v;
    v.add_operator("LR", 2);
    v.add_operator("TB", 2);
    v.add_operator("SU", 2);
    for (int i = 1; i <= 8; ++i) v.add_radical("r" + std::to_string(i));
    return v;
  }

  /// Lines `op <name> <arity>` or `radical <name>`; `#` starts a comment.
  static IdsVocab parse(std::istream& in) {
    IdsVocab v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream ls(line);
      std::string kind, name;
      if (!(ls >> kind)) continue;
      if (!(ls >> name)) throw ConfigError("vocab line " + std::to_string(lineno) + ": missing symbol name");
      if (kind == "op") {
        int arity = 0;
        if (!(ls >> arity)) throw ConfigError("vocab line " + std::to_string(lineno) + ": missing arity");
        v.add_operator(name, arity);
      } else if (kind == "radical") {
        v.add_radical(name);
      } else {
        throw ConfigError("vocab line " + std::to_string(lineno) + ": unknown kind '" + kind + "'");
      }
    }
    return v;
  }

  static IdsVocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocab file " + path);
    return parse(in);
  }

  void write(std::ostream& out) const {
    for (const auto& s : symbols_) {
      if (s.kind == SymbolKind::Operator) out << "op " << s.name << ' ' << s.arity << '\n';
      if (s.kind == SymbolKind::Radical) out << "radical " << s.name << '\n';
    }
  }

  int add_operator(const std::string& name, int arity) {
    if (arity != 2 && arity != 3) throw ConfigError("operator " + name + ": arity must be 2 or 3");
    return add({name, SymbolKind::Operator, arity});
  }
  int add_radical(const std::string& name) { return add({name, SymbolKind::Radical, 0}); }

  std::size_t size() const { return symbols_.size(); }
  const IdsSymbol& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }
  const std::string& name(int id) const { return symbol(id).name; }
  bool contains(int id) const { return id >= 0 && static_cast<std::size_t>(id) < symbols_.size(); }
  bool is_operator(int id) const { return contains(id) && symbol(id).kind == SymbolKind::Operator; }
  bool is_radical(int id) const { return contains(id) && symbol(id).kind == SymbolKind::Radical; }
  int arity(int id) const { return symbol(id).arity; }

  /// -1 when absent.
  int find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? -1 : it->second;
  }
  int id(std::string_view name) const {
    const int i = find(name);
    if (i < 0) throw ConfigError("unknown IDS symbol '" + std::string(name) + "'");
    return i;
  }

  std::vector<int> operators() const { return ids_of(SymbolKind::Operator); }
  std::vector<int> radicals() const { return ids_of(SymbolKind::Radical); }

  bool operator==(const IdsVocab& o) const {
    if (symbols_.size() != o.symbols_.size()) return false;
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      const auto& a = symbols_[i];
      const auto& b = o.symbols_[i];
      if (a.name != b.name || a.kind != b.kind || a.arity != b.arity) return false;
    }
    return true;
  }

 private:
  int add(IdsSymbol s) {
    if (s.name.empty()) throw ConfigError("empty IDS symbol name");
    if (by_name_.count(s.name)) throw ConfigError("duplicate IDS symbol '" + s.name + "'");
    const int id = static_cast<int>(symbols_.size());
    by_name_[s.name] = id;
    symbols_.push_back(std::move(s));
    return id;
  }
  std::vector<int> ids_of(SymbolKind kind) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      if (symbols_[i].kind == kind) out.push_back(static_cast<int>(i));
    }
    return out;
  }

  std::vector<IdsSymbol> symbols_;
  std::unordered_map<std::string, int> by_name_;
};

struct IdsTree {
  int symbol = 0;
  std::vector<IdsTree> children;

  static IdsTree leaf(int radical) { return {radical, {}}; }
  static IdsTree node(int op, std::vector<IdsTree> kids) { return {op, std::move(kids)}; }

  bool is_leaf() const { return children.empty(); }

  /// Leaves have depth 0.
  int depth() const {
    int d = 0;
    for (const auto& c : children) d = std::max(d, c.depth() + 1);
    return d;
  }
  int leaf_count() const {
    if (children.empty()) return 1;
    int n = 0;
    for (const auto& c : children) n += c.leaf_count();
    return n;
  }

  friend bool operator==(const IdsTree&, const IdsTree&) = default;
  friend std::strong_ordering operator<=>(const IdsTree& a, const IdsTree& b) {
    if (auto c = a.symbol <=> b.symbol; c != 0) return c;
    return std::lexicographical_compare_three_way(a.children.begin(), a.children.end(),
                                                  b.children.begin(), b.children.end());
  }
};

namespace detail {

inline IdsTree parse_node(std::span<const int> seq, std::size_t& pos, const IdsVocab& vocab,
                          int depth_guard) {
  if (pos >= seq.size()) throw ParseError("truncated sequence: operator lacks a child", pos);
  const int s = seq[pos];
  if (s == IdsVocab::kPad || s == IdsVocab::kEnd) {
    throw ParseError("truncated sequence: operator lacks a child (found " + vocab.name(s) + ")", pos);
  }
  if (!vocab.contains(s)) throw ParseError("unknown symbol id " + std::to_string(s), pos);
  if (depth_guard > 64) throw ParseError("sequence nests too deeply", pos);
  ++pos;
  if (vocab.is_radical(s)) return IdsTree::leaf(s);
  IdsTree t{s, {}};
  for (int i = 0; i < vocab.arity(s); ++i) t.children.push_back(parse_node(seq, pos, vocab, depth_guard + 1));
  return t;
}

inline void flatten_into(const IdsTree& t, std::vector<int>& out) {
  out.push_back(t.symbol);
  for (const auto& c : t.children) flatten_into(c, out);
}

}  // namespace detail

/// Parses a pre-order id sequence. After the tree completes the sequence may
/// end, or continue with `<end>` followed only by `<pad>`.
inline IdsTree parse(std::span<const int> seq, const IdsVocab& vocab) {
  if (seq.empty()) throw ParseError("empty sequence", 0);
  std::size_t pos = 0;
  IdsTree tree = detail::parse_node(seq, pos, vocab, 0);
  if (pos < seq.size()) {
    if (seq[pos] != IdsVocab::kEnd) {
      if (seq[pos] == IdsVocab::kPad) throw ParseError("padding before end marker", pos);
      throw ParseError("trailing symbols after complete tree", pos);
    }
    for (std::size_t i = pos + 1; i < seq.size(); ++i) {
      if (seq[i] != IdsVocab::kPad) throw ParseError("non-pad symbol after end marker", i);
    }
  }
  return tree;
}

/// Symbol names in pre-order, e.g. "LR TB r1 r2 r3". Parentheses and commas
/// count as separators, so the bracketed form "LR(TB(r1, r2), r3)" parses
/// too. Error positions are byte offsets into `text`.
inline IdsTree parse_text(std::string_view text, const IdsVocab& vocab) {
  auto separator = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == ',';
  };
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && separator(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !separator(text[j])) ++j;
    const int id = vocab.find(text.substr(i, j - i));
    if (id < 0) throw ParseError("unknown symbol '" + std::string(text.substr(i, j - i)) + "'", i);
    ids.push_back(id);
    offsets.push_back(i);
    i = j;
  }
  try {
    return parse(ids, vocab);
  } catch (const ParseError& e) {
    const std::size_t at = e.position() < offsets.size() ? offsets[e.position()] : text.size();
    std::string msg = e.what();
    msg.resize(msg.rfind(" at position "));
    throw ParseError(msg, at);
  }
}

/// Pre-order symbols without terminator.
inline std::vector<int> preorder(const IdsTree& tree) {
  std::vector<int> out;
  detail::flatten_into(tree, out);
  return out;
}

/// Pre-order symbols, `<end>`, then `<pad>` up to `length`.
inline std::vector<int> flatten(const IdsTree& tree, std::size_t length, int max_depth) {
  if (tree.depth() > max_depth) {
    throw ConfigError("tree depth " + std::to_string(tree.depth()) + " exceeds max depth " +
                      std::to_string(max_depth));
  }
  std::vector<int> out = preorder(tree);
  out.push_back(IdsVocab::kEnd);
  if (out.size() > length) {
    throw ConfigError("IDS sequence of " + std::to_string(out.size()) + " symbols exceeds L_ids=" +
                      std::to_string(length));
  }
  out.resize(length, IdsVocab::kPad);
  return out;
}

/// "LR(TB(r1, r2), r3)"
inline std::string to_bracket(const IdsTree& tree, const IdsVocab& vocab) {
  std::string s = vocab.name(tree.symbol);
  if (tree.children.empty()) return s;
  s += '(';
  for (std::size_t i = 0; i < tree.children.size(); ++i) {
    if (i) s += ", ";
    s += to_bracket(tree.children[i], vocab);
  }
  return s + ')';
}

/// Space-separated names; stops at `<end>` and skips `<pad>`.
inline std::string to_text(std::span<const int> seq, const IdsVocab& vocab) {
  std::string s;
  for (int id : seq) {
    if (id == IdsVocab::kEnd) break;
    if (id == IdsVocab::kPad) continue;
    if (!s.empty()) s += ' ';
    s += vocab.name(id);
  }
  return s;
}

/// Number of distinct trees of depth <= max_depth, saturating at `cap`.
inline std::uint64_t count_trees(const IdsVocab& vocab, int max_depth,
                                 std::uint64_t cap = std::uint64_t{1} << 62) {
  const std::uint64_t radicals = vocab.radicals().size();
  std::uint64_t count = std::min(radicals, cap);
  for (int d = 1; d <= max_depth; ++d) {
    std::uint64_t next = radicals;
    for (int op : vocab.operators()) {
      std::uint64_t term = 1;
      for (int k = 0; k < vocab.arity(op); ++k) {
        term = (count != 0 && term > cap / count) ? cap : std::min(cap, term * count);
      }
      next = std::min(cap, next + term);
    }
    count = next;
  }
  return count;
}

namespace detail {

inline void all_trees(const IdsVocab& vocab, int depth, std::vector<IdsTree>& out) {
  if (depth == 0) {
    for (int r : vocab.radicals()) out.push_back(IdsTree::leaf(r));
    return;
  }
  std::vector<IdsTree> sub;
  all_trees(vocab, depth - 1, sub);
  for (int r : vocab.radicals()) out.push_back(IdsTree::leaf(r));
  for (int op : vocab.operators()) {
    const int arity = vocab.arity(op);
    std::vector<std::size_t> idx(static_cast<std::size_t>(arity), 0);
    while (true) {
      IdsTree t{op, {}};
      for (std::size_t k : idx) t.children.push_back(sub[k]);
      out.push_back(std::move(t));
      std::size_t k = idx.size();
      while (k > 0 && ++idx[k - 1] == sub.size()) idx[--k] = 0;
      if (k == 0) break;
    }
  }
}

/// Uniform draw over all trees of depth <= depth (weights from exact counts in double).
inline IdsTree random_tree(const IdsVocab& vocab, int depth, CounterRng& rng) {
  const auto radicals = vocab.radicals();
  if (depth == 0) return IdsTree::leaf(radicals[rng.below(radicals.size())]);
  const double sub = static_cast<double>(count_trees(vocab, depth - 1));
  std::vector<double> weight{static_cast<double>(radicals.size())};
  const auto ops = vocab.operators();
  for (int op : ops) weight.push_back(std::pow(sub, vocab.arity(op)));
  double u = rng.uniform() * std::accumulate(weight.begin(), weight.end(), 0.0);
  std::size_t pick = 0;
  while (pick + 1 < weight.size() && u >= weight[pick]) u -= weight[pick++];
  if (pick == 0) return IdsTree::leaf(radicals[rng.below(radicals.size())]);
  IdsTree t{ops[pick - 1], {}};
  for (int k = 0; k < vocab.arity(t.symbol); ++k) t.children.push_back(random_tree(vocab, depth - 1, rng));
  return t;
}

}  // namespace detail

/// Deterministic, duplicate-free selection of `max_count` trees of depth
/// <= max_depth. Small spaces are enumerated and shuffled; large ones are
/// sampled uniformly with rejection of repeats.
inline std::vector<IdsTree> enumerate_charset(const IdsVocab& vocab, int max_depth,
                                              std::size_t max_count, std::uint64_t seed) {
  if (max_count == 0) throw ConfigError("enumerate_charset: max_count must be >= 1");
  if (max_depth < 0) throw ConfigError("enumerate_charset: max_depth must be >= 0");
  if (vocab.radicals().empty()) throw ConfigError("enumerate_charset: vocab has no radicals");
  const std::uint64_t available = count_trees(vocab, max_depth);
  if (available < max_count) {
    throw ConfigError("enumerate_charset: vocab yields only " + std::to_string(available) +
                      " distinct trees at depth " + std::to_string(max_depth) + ", requested " +
                      std::to_string(max_count));
  }
  CounterRng rng(seed, 0x1D5);
  std::vector<IdsTree> out;
  if (available <= 200000) {
    detail::all_trees(vocab, max_depth, out);
    for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.below(i)]);
    out.resize(max_count);
    return out;
  }
  std::set<IdsTree> seen;
  while (out.size() < max_count) {
    IdsTree t = detail::random_tree(vocab, max_depth, rng);
    if (seen.insert(t).second) out.push_back(std::move(t));
  }
  return out;
}

/// `<char>\t<ids symbols space-separated>` per line.
struct DecompositionTable {
  std::vector<std::string> characters;
  std::vector<IdsTree> trees;

  static DecompositionTable parse(std::istream& in, const IdsVocab& vocab) {
    DecompositionTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0) {
        throw ConfigError("decomposition line " + std::to_string(lineno) + ": expected <char>\\t<ids>");
      }
      try {
        table.trees.push_back(parse_text(std::string_view(line).substr(tab + 1), vocab));
      } catch (const ParseError& e) {
        std::string msg = e.what();
        msg.resize(msg.rfind(" at position "));
        throw ParseError("decomposition line " + std::to_string(lineno) + ": " + msg, tab + 1 + e.position());
      }
      table.characters.push_back(line.substr(0, tab));
    }
    return table;
  }
};

}  // namespace ler
