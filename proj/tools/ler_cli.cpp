// Command-line front end: corpus generation, training, evaluation,
// inference, attention maps and IDS tooling.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ler/ler.hpp"

namespace fs = std::filesystem;
using namespace ler;

namespace {

IdsVocab vocab_from(const std::string& path) { return path.empty() ? IdsVocab::desk() : IdsVocab::load(path); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  return h;
}

// Image files are LTEN tensors [H, W] or [H, W, 1].
Tensor load_image(const std::string& path, const ModelConfig& mc) {
  Tensor t = load_lten(path);
  const Shape want{mc.height, mc.width, mc.channels};
  if (t.rank() == 2 && mc.channels == 1) t = reshape(t, want);
  if (t.shape() != want) {
    throw DimensionError(path + ": image shape " + to_string(t.shape()) + ", model expects " + to_string(want));
  }
  return t;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (int x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
  return s;
}

struct RunOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  RunConfig resolve() const {
    RunConfig rc;
    if (!config_file.empty()) rc.load(config_file);
    for (const auto& kv : overrides) rc.set_pair(kv);
    rc.apply_environment();
    return rc;
  }
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config_file, "key=value run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "override one config key (key=value), repeatable");
}

std::unique_ptr<LerModel> make_model(const ModelConfig& mc, const RunConfig& rc) {
  if (rc.embeddings.empty()) return std::make_unique<LerModel>(mc, rc.seed);
  const PromptPool pool = load_embedding_file(rc.embeddings, mc.d0);
  return std::make_unique<LerModel>(mc, rc.seed, &pool);
}

void write_eval_tsv(const fs::path& path, const std::string& corpus, const EvalResult& r) {
  std::ofstream out(path);
  out << "corpus\tcount\tlacc\tned\n" << corpus << '\t' << r.count << '\t' << r.lacc << '\t' << r.ned << '\n';
  out << "#sample\tdistance\tprediction\tlabel\n";
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const auto& s = r.samples[i];
    out << i << '\t' << s.distance << '\t' << join(s.prediction) << '\t' << join(s.label) << '\n';
  }
}

// ---------------------------------------------------------------------------

struct GenCorpusArgs {
  std::string out;
  long long count = 64;
  std::uint64_t seed = 7;
  std::string split = "train";
  std::string vocab;
};

int cmd_gen_corpus(const GenCorpusArgs& a) {
  const IdsVocab vocab = vocab_from(a.vocab);
  CorpusConfig cfg;
  generate_corpus(a.out, cfg, vocab, a.seed, parse_split(a.split), static_cast<std::size_t>(a.count));
  std::cout << "wrote " << a.count << ' ' << a.split << " samples to " << a.out << '\n'
            << "charset " << cfg.charset_size << " characters, " << vocab.size() << " IDS symbols\n"
            << "manifest digest " << hex64(file_digest(fs::path(a.out) / "manifest.tsv")) << '\n';
  return 0;
}

struct TrainArgs {
  RunOptions run;
  std::string run_dir;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc = a.run.resolve();
  if (rc.train_corpus.empty()) throw ConfigError("train_corpus is not set (use --set train_corpus=DIR)");
  const Corpus train = load_corpus(rc.train_corpus);
  const Corpus eval = rc.eval_corpus.empty() ? Corpus{} : load_corpus(rc.eval_corpus);
  const ModelConfig mc = rc.model_config(train.config, train.charset.vocab);

  const fs::path dir(a.run_dir);
  fs::create_directories(dir);
  {
    std::ofstream echo(dir / "config.echo");
    echo << rc.echo();
  }
  auto model = make_model(mc, rc);
  std::cout << "model " << rc.preset << ": " << model->parameter_count() << " parameters ("
            << model->parameter_count(false) << " at inference)\n";

  std::ofstream log(dir / "log.tsv");
  log << "stage\tepoch\tstep\tlr\tloss_loc\tloss_char\tloss_ids\tloss_total\teval_lacc\teval_ned\n";
  std::size_t steps_before = 0;
  Trainer trainer(*model, rc.train_config());
  trainer.run(
      train.samples, eval.samples,
      [&](const EpochRecord& r) {
        log << r.stage << '\t' << r.epoch << '\t' << steps_before + r.step << '\t' << r.lr << '\t' << r.loss.loc
            << '\t' << r.loss.chr << '\t' << r.loss.ids << '\t' << r.loss.total << '\t' << r.eval_lacc << '\t'
            << r.eval_ned << '\n';
        log.flush();
        std::cout << "stage " << r.stage << " epoch " << r.epoch << " loss " << r.loss.total;
        if (!std::isnan(r.eval_lacc)) std::cout << " eval lacc " << r.eval_lacc << " ned " << r.eval_ned;
        std::cout << '\n';
      },
      [&](int stage) {
        steps_before = trainer.steps();
        if (stage == 1) save_checkpoint((dir / "ckpt_stage1.lckpt").string(), *model);
      });
  save_checkpoint((dir / "ckpt_final.lckpt").string(), *model);

  const bool on_eval = !eval.samples.empty();
  const auto r = evaluate_model(*model, on_eval ? eval.samples : train.samples, rc.train.stage2_epochs > 0);
  write_eval_tsv(dir / "eval.tsv", on_eval ? rc.eval_corpus : rc.train_corpus, r);
  std::cout << "final " << (on_eval ? "eval" : "train") << " lacc " << r.lacc << " ned " << r.ned << '\n';
  return 0;
}

struct EvalArgs {
  RunOptions run;
  std::string checkpoint;
  std::string corpus;
  std::string out;
  double min_lacc = 0.0;
  double min_ned = 0.0;
  bool localization_only = false;
};

int cmd_eval(const EvalArgs& a) {
  const RunConfig rc = a.run.resolve();
  const Corpus corpus = load_corpus(a.corpus);
  const ModelConfig mc = rc.model_config(corpus.config, corpus.charset.vocab);
  LerModel model(mc, rc.seed);
  load_checkpoint(a.checkpoint, model);
  const auto r = evaluate_model(model, corpus.samples, !a.localization_only);
  if (!a.out.empty()) write_eval_tsv(a.out, a.corpus, r);
  std::cout << "count\tlacc\tned\n" << r.count << '\t' << r.lacc << '\t' << r.ned << '\n';
  return r.lacc >= a.min_lacc && r.ned >= a.min_ned ? 0 : 1;
}

struct InferArgs {
  std::string checkpoint;
  std::vector<std::string> images;
  std::string preset;
};

LerModel model_from_checkpoint(const std::string& path, const std::string& preset) {
  const ModelConfig stored = config_from_canonical(peek_checkpoint(path).config_text);
  ModelConfig mc = stored;
  if (!preset.empty()) {
    mc = model_preset(preset);
    mc.height = stored.height, mc.width = stored.width, mc.channels = stored.channels;
    mc.max_len = stored.max_len, mc.ids_len = stored.ids_len;
    mc.n_class = stored.n_class, mc.n_ids = stored.n_ids;
    mc.cut_h = stored.cut_h, mc.cut_w = stored.cut_w, mc.gate = stored.gate;
  }
  LerModel model(mc, 0);
  load_checkpoint(path, model);
  return model;
}

int cmd_infer(const InferArgs& a) {
  const LerModel model = model_from_checkpoint(a.checkpoint, a.preset);
  for (const auto& path : a.images) {
    std::cout << path << '\t' << join(predict(model, load_image(path, model.config()))) << '\n';
  }
  return 0;
}

struct VizArgs {
  std::string checkpoint;
  std::string image;
  std::string out;
};

int cmd_viz_attn(const VizArgs& a) {
  const LerModel model = model_from_checkpoint(a.checkpoint, "");
  const auto& mc = model.config();
  NoGradGuard guard;
  const auto trace = model.forward(load_image(a.image, mc), Mode::Infer, Scope::Localization);
  fs::create_directories(a.out);
  const std::size_t rows = mc.height / 4, cols = mc.width / 4;
  for (std::size_t j = 0; j < mc.max_len; ++j) {
    const auto img = attention_map(trace.att.data().subspan(j * rows * cols, rows * cols), rows, cols, 4);
    const fs::path file = fs::path(a.out) / ("att_" + std::to_string(j) + ".pgm");
    write_pgm(file.string(), img);
    std::cout << file.string() << "\targmax_x=" << argmax_column(img) << '\n';
  }
  return 0;
}

struct IdsArgs {
  std::string text;
  std::string vocab;
  std::size_t length = 8;
  int max_depth = 2;
  std::size_t count = 64;
  std::uint64_t seed = 1;
};

int cmd_ids_parse(const IdsArgs& a) {
  const IdsVocab vocab = vocab_from(a.vocab);
  std::cout << to_bracket(parse_text(a.text, vocab), vocab) << '\n';
  return 0;
}

int cmd_ids_flatten(const IdsArgs& a, bool padded) {
  const IdsVocab vocab = vocab_from(a.vocab);
  const IdsTree tree = parse_text(a.text, vocab);
  if (!padded) {
    std::cout << to_text(preorder(tree), vocab) << '\n';
    return 0;
  }
  const auto seq = flatten(tree, a.length, a.max_depth);
  std::string line;
  for (int id : seq) line += (line.empty() ? "" : " ") + vocab.name(id);
  std::cout << line << '\n';
  return 0;
}

int cmd_ids_charset(const IdsArgs& a) {
  const IdsVocab vocab = vocab_from(a.vocab);
  const auto trees = enumerate_charset(vocab, a.max_depth, a.count, a.seed);
  for (std::size_t i = 0; i < trees.size(); ++i) std::cout << i + 1 << '\t' << to_bracket(trees[i], vocab) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Line-level text recognizer: corpus, training, evaluation and tooling"};
  app.require_subcommand(1);
  int status = 0;

  GenCorpusArgs gen;
  auto* g = app.add_subcommand("gen-corpus", "Render a synthetic text-line corpus");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--count", gen.count, "number of samples")->check(CLI::NonNegativeNumber);
  g->add_option("--seed", gen.seed, "corpus seed");
  g->add_option("--split", gen.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  g->add_option("--vocab", gen.vocab, "IDS vocabulary file (default: built-in desk vocabulary)")
      ->check(CLI::ExistingFile);
  g->callback([&] { status = cmd_gen_corpus(gen); });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Two-stage training; writes checkpoints and logs to the run directory");
  add_run_options(t, tr.run);
  t->add_option("--run", tr.run_dir, "run directory")->required();
  t->callback([&] { status = cmd_train(tr); });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Line accuracy and normalized edit distance on a corpus");
  add_run_options(e, ev.run);
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  e->add_option("--corpus", ev.corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--out", ev.out, "write the evaluation report TSV here");
  e->add_option("--min-lacc", ev.min_lacc, "exit 1 when line accuracy is below this");
  e->add_option("--min-ned", ev.min_ned, "exit 1 when normalized edit distance is below this");
  e->add_flag("--localization-only", ev.localization_only, "decode the last localization stage instead");
  e->callback([&] { status = cmd_eval(ev); });

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Predict class ids for LTEN images");
  i->add_option("--checkpoint", inf.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  i->add_option("--preset", inf.preset, "fail unless the checkpoint was trained with this preset");
  i->add_option("images", inf.images, "image files [H, W] or [H, W, 1]")->required()->check(CLI::ExistingFile);
  i->callback([&] { status = cmd_infer(inf); });

  VizArgs viz;
  auto* v = app.add_subcommand("viz-attn", "Write one PGM attention map per character position");
  v->add_option("--checkpoint", viz.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  v->add_option("--image", viz.image, "LTEN image")->required()->check(CLI::ExistingFile);
  v->add_option("--out", viz.out, "output directory")->required();
  v->callback([&] { status = cmd_viz_attn(viz); });

  IdsArgs ids;
  auto* d = app.add_subcommand("ids", "Ideographic description sequence tools");
  d->require_subcommand(1);
  auto* dp = d->add_subcommand("parse", "Print the bracketed tree of a symbol sequence");
  dp->add_option("text", ids.text, "symbols, e.g. \"LR r1 r2\"")->required();
  dp->add_option("--vocab", ids.vocab, "vocabulary file")->check(CLI::ExistingFile);
  dp->callback([&] { status = cmd_ids_parse(ids); });
  bool padded = false;
  auto* df = d->add_subcommand("flatten", "Print the pre-order symbol list of a tree");
  df->add_option("text", ids.text, "tree, e.g. \"LR(r1, r2)\"")->required();
  df->add_option("--vocab", ids.vocab, "vocabulary file")->check(CLI::ExistingFile);
  df->add_flag("--padded", padded, "append the end marker and padding up to --length");
  df->add_option("--length", ids.length, "padded length");
  df->add_option("--max-depth", ids.max_depth, "maximum tree depth");
  df->callback([&] { status = cmd_ids_flatten(ids, padded); });
  auto* dc = d->add_subcommand("charset", "Enumerate a synthetic character set");
  dc->add_option("--vocab", ids.vocab, "vocabulary file")->check(CLI::ExistingFile);
  dc->add_option("--max-depth", ids.max_depth, "maximum tree depth");
  dc->add_option("--count", ids.count, "number of characters");
  dc->add_option("--seed", ids.seed, "selection seed");
  dc->callback([&] { status = cmd_ids_charset(ids); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return status;
}
