#pragma once

// Flat key=value run configuration shared by the command-line tool.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ler/ids.hpp"
#include "ler/model.hpp"
#include "ler/synth.hpp"
#include "ler/train.hpp"

namespace ler {

struct RunConfig {
  std::string preset = "tiny";
  bool english = false;
  GateMode gate = GateMode::Softmax;
  TrainConfig train;
  std::string train_corpus;
  std::string eval_corpus;
  std::string embeddings;  // prompts.lten; empty = seeded fallback pool
  std::uint64_t seed = 0;

  /// Sets one key. Unknown keys and malformed values throw ConfigError.
  void set(const std::string& key, const std::string& value) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second(*this, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("bad value '" + value + "' for config key '" + key + "'");
    }
  }

  /// "key=value" form, as given on the command line.
  void set_pair(const std::string& pair) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + pair + "'");
    set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
  }

  void read(std::istream& in, const std::string& origin = "config") {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      try {
        set_pair(line);
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  void load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    read(in, path);
  }

  /// LER_SEED, when set, replaces the configured seed.
  void apply_environment() {
    if (const char* env = std::getenv("LER_SEED"); env && *env) set("seed", env);
  }

  /// Every key with its effective value, one per line, in a fixed order.
  std::string echo() const {
    std::ostringstream s;
    s << "preset=" << preset << "\nenglish=" << (english ? "true" : "false")
      << "\ngate=" << gate_name(gate) << "\nstage1_epochs=" << train.stage1_epochs
      << "\nstage2_epochs=" << train.stage2_epochs << "\nwarmup_epochs=" << train.warmup_epochs
      << "\nlr=" << format_double(train.lr) << "\nweight_decay=" << format_double(train.weight_decay)
      << "\nbatch_size=" << train.batch_size << "\nids_loss=" << (train.ids_loss ? "true" : "false")
      << "\neval_every=" << train.eval_every << "\ntrain_corpus=" << train_corpus << "\neval_corpus=" << eval_corpus
      << "\nembeddings=" << embeddings << "\nseed=" << seed << "\n";
    return s.str();
  }

  /// Architecture for this run. Geometry and class counts follow the corpus.
  ModelConfig model_config(const CorpusConfig& corpus, const IdsVocab& vocab) const {
    ModelConfig m = model_preset(preset);
    if (english) m = english_geometry(m);
    m.gate = gate;
    m.height = static_cast<std::size_t>(corpus.height);
    m.width = static_cast<std::size_t>(corpus.width);
    m.channels = 1;
    m.max_len = static_cast<std::size_t>(corpus.max_len);
    m.ids_len = static_cast<std::size_t>(corpus.ids_len);
    m.n_class = static_cast<std::size_t>(corpus.n_class());
    m.n_ids = vocab.size();
    m.validate();
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  static std::vector<std::string> keys() {
    std::vector<std::string> k;
    for (const auto& [name, fn] : setters()) k.push_back(name);
    return k;
  }

 private:
  using Setter = std::function<void(RunConfig&, const std::string&)>;

  static ModelConfig english_geometry(const ModelConfig& m) { return ler::english(m); }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }

  static std::string format_double(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  }

  static bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("expected true/false, got '" + v + "'");
  }

  static std::size_t parse_count(const std::string& v) {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw ConfigError("expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(n);
  }

  static double parse_real(const std::string& v) {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !(d >= 0.0)) throw ConfigError("expected a non-negative number, got '" + v + "'");
    return d;
  }

  static const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"preset",
         [](RunConfig& c, const std::string& v) {
           model_preset(v);
           c.preset = v;
         }},
        {"english", [](RunConfig& c, const std::string& v) { c.english = parse_bool(v); }},
        {"gate",
         [](RunConfig& c, const std::string& v) {
           c.gate = parse_gate(v);
         }},
        {"stage1_epochs", [](RunConfig& c, const std::string& v) { c.train.stage1_epochs = parse_count(v); }},
        {"stage2_epochs", [](RunConfig& c, const std::string& v) { c.train.stage2_epochs = parse_count(v); }},
        {"warmup_epochs", [](RunConfig& c, const std::string& v) { c.train.warmup_epochs = parse_count(v); }},
        {"lr", [](RunConfig& c, const std::string& v) { c.train.lr = parse_real(v); }},
        {"weight_decay", [](RunConfig& c, const std::string& v) { c.train.weight_decay = parse_real(v); }},
        {"batch_size",
         [](RunConfig& c, const std::string& v) {
           c.train.batch_size = parse_count(v);
           if (c.train.batch_size == 0) throw ConfigError("batch_size must be >= 1");
         }},
        {"ids_loss", [](RunConfig& c, const std::string& v) { c.train.ids_loss = parse_bool(v); }},
        {"eval_every", [](RunConfig& c, const std::string& v) { c.train.eval_every = parse_count(v); }},
        {"train_corpus", [](RunConfig& c, const std::string& v) { c.train_corpus = v; }},
        {"eval_corpus", [](RunConfig& c, const std::string& v) { c.eval_corpus = v; }},
        {"embeddings", [](RunConfig& c, const std::string& v) { c.embeddings = v; }},
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_count(v); }},
    };
    return table;
  }
};

}  // namespace ler
