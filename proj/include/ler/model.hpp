#pragma once

// The recognizer: conv-mix encoder, cascaded multimodal localization,
// per-character extraction, character head and the training-only radical
// sequence head.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ler/ids.hpp"
#include "ler/lten.hpp"
#include "ler/nn.hpp"
#include "ler/query.hpp"
#include "ler/tensor.hpp"

namespace ler {

class ModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Mode { Train, Infer };

/// How much of the network a forward pass evaluates.
enum class Scope { Localization, Full };

/// How attention rows weight visual tokens when isolating one character.
///   Softmax: the raw attention probabilities.
///   RowMax:  probabilities divided by their row maximum (peak token keeps
///            its full feature).
enum class GateMode { Softmax, RowMax };

inline const char* gate_name(GateMode g) {
  switch (g) {
    case GateMode::Softmax: return "softmax";
    case GateMode::RowMax: return "rowmax";
  }
  return "?";
}

inline GateMode parse_gate(const std::string& v) {
  if (v == "softmax") return GateMode::Softmax;
  if (v == "rowmax") return GateMode::RowMax;
  throw ConfigError("gate must be softmax or rowmax, got '" + v + "'");
}

struct ModelConfig {
  std::string preset = "tiny";
  std::size_t d0 = 32, d1 = 48, d2 = 64;
  std::size_t heads0 = 2, heads1 = 2, heads2 = 2;
  std::size_t encoder_depth = 2;
  std::size_t mlb_depth = 2;     // N
  std::size_t cutter_depth = 2;  // M
  std::size_t ids_depth = 2;
  std::size_t mlp_ratio = 4;
  std::size_t cutter_mlp_ratio = 4;
  std::size_t height = 32, width = 128, channels = 1;
  std::size_t max_len = 6;  // L
  std::size_t cut_h = 4, cut_w = 4;
  std::size_t ids_len = 8;
  std::size_t n_class = 65;
  std::size_t n_ids = 13;
  GateMode gate = GateMode::Softmax;

  std::size_t tokens() const { return (height / 4) * (width / 4); }
  std::size_t cut_len() const { return cut_h * cut_w; }

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError("model config: " + msg);
    };
    need(height % 4 == 0 && width % 4 == 0 && height >= 4 && width >= 4,
         "input " + std::to_string(height) + "x" + std::to_string(width) + " must be divisible by 4");
    need(channels >= 1, "channels must be >= 1");
    need(d0 % 4 == 0 && d0 >= 4, "D0 must be a positive multiple of 4");
    need(heads0 >= 1 && d0 % heads0 == 0, "D0 must be divisible by localization heads");
    need(heads1 >= 1 && d1 % heads1 == 0, "D1 must be divisible by extraction heads");
    need(d1 % 4 == 0, "D1 must be a multiple of 4");
    need(heads2 >= 1 && d2 % heads2 == 0, "D2 must be divisible by IDS decoder heads");
    need(mlb_depth >= 1 && cutter_depth >= 1 && ids_depth >= 1, "depths must be >= 1");
    need(max_len >= 2, "L must be >= 2 (masked query attention needs another slot)");
    need(cut_len() >= 1, "c_l = c_h * c_w must be >= 1");
    need(ids_len >= 2 && n_class >= 2 && n_ids >= 3, "class counts too small");
    need(mlp_ratio >= 1 && cutter_mlp_ratio >= 1, "MLP ratios must be >= 1");
  }

  /// Stable text form; the checkpoint digest is computed over it.
  std::string canonical() const {
    std::ostringstream s;
    s << "d0=" << d0 << "\nd1=" << d1 << "\nd2=" << d2 << "\nheads0=" << heads0 << "\nheads1=" << heads1
      << "\nheads2=" << heads2 << "\nencoder_depth=" << encoder_depth << "\nmlb_depth=" << mlb_depth
      << "\ncutter_depth=" << cutter_depth << "\nids_depth=" << ids_depth << "\nmlp_ratio=" << mlp_ratio
      << "\ncutter_mlp_ratio=" << cutter_mlp_ratio << "\nheight=" << height << "\nwidth=" << width
      << "\nchannels=" << channels << "\nmax_len=" << max_len << "\ncut_h=" << cut_h << "\ncut_w=" << cut_w
      << "\nids_len=" << ids_len << "\nn_class=" << n_class << "\nn_ids=" << n_ids
      << "\ngate=" << gate_name(gate) << "\n";
    return s.str();
  }

  std::uint64_t digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) h = (h ^ c) * 0x100000001b3ULL;
    return h;
  }
};

/// Named architecture presets. "s", "b", "l" use the Chinese line geometry
/// (32x320, L=25, 4x4 cut, 6625 classes); "tiny" is the desk model.
inline ModelConfig model_preset(const std::string& name) {
  ModelConfig c;
  c.preset = name;
  if (name == "tiny") return c;
  c.encoder_depth = 6;
  c.mlb_depth = 6;
  c.cutter_depth = 3;
  c.ids_depth = 6;
  c.height = 32;
  c.width = 320;
  c.channels = 3;
  c.max_len = 25;
  c.cut_h = 4;
  c.cut_w = 4;
  c.ids_len = 24;
  c.n_class = 6625;
  c.n_ids = 574;  // 10 operators + 562 radicals + pad + end
  if (name == "s") {
    c.d0 = 96, c.d1 = 192, c.d2 = 256;
    c.heads0 = 3, c.heads1 = 6, c.heads2 = 8;
  } else if (name == "b") {
    c.d0 = 128, c.d1 = 256, c.d2 = 384;
    c.heads0 = 4, c.heads1 = 8, c.heads2 = 12;
  } else if (name == "l") {
    c.d0 = 192, c.d1 = 256, c.d2 = 512;
    c.heads0 = 6, c.heads1 = 8, c.heads2 = 16;
  } else {
    throw ConfigError("unknown model preset '" + name + "' (expected tiny, s, b or l)");
  }
  return c;
}

/// Switches a preset to the English line geometry: 32x100 input, 4x2 cut.
inline ModelConfig english(ModelConfig c) {
  c.width = 100;
  c.cut_h = 4;
  c.cut_w = 2;
  return c;
}

template <typename T>
struct ForwardTrace {
  BasicTensor<T> vis;                            // [tokens, D0] encoder output
  std::vector<BasicTensor<T>> loc_logits;        // N x [L, n_class]
  std::vector<BasicTensor<T>> attention;         // N x [L, tokens]
  std::vector<BasicTensor<T>> query_attention;   // N x [heads0, L, L] masked self-attention weights
  BasicTensor<T> att;                            // [L, tokens] from the last stage
  BasicTensor<T> a;                              // [L, tokens, D1]
  BasicTensor<T> f;                              // [L, c_h, c_w, D1]
  BasicTensor<T> char_logits;                    // [L, n_class]
  BasicTensor<T> ids_logits;                     // [L, L_ids, n_ids]; undefined in inference
};

/// Divides each row of a non-negative [rows, cols] tensor by its maximum.
/// The gradient includes the path through the maximum.
template <typename T>
BasicTensor<T> normalize_by_row_max(const BasicTensor<T>& x) {
  if (x.rank() != 2) throw DimensionError("normalize_by_row_max: need rank 2, got " + to_string(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Buffer<T> out(x.size());
  std::vector<std::size_t> arg(rows);
  std::vector<T> mx(rows);
  const T* px = x.impl().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * cols;
    arg[r] = static_cast<std::size_t>(std::max_element(row, row + cols) - row);
    mx[r] = row[arg[r]] > T(0) ? row[arg[r]] : T(1);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] / mx[r];
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {&x},
      [rows, cols, arg = std::move(arg), mx = std::move(mx)](detail::TensorImpl<T>& o) {
        T* gx = detail::grad_ptr(o.node->inputs[0]);
        if (!gx) return;
        const T* y = o.data();
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            gx[i] += o.grad[i] / mx[r];
            dot += static_cast<double>(o.grad[i]) * y[i];
          }
          gx[r * cols + arg[r]] -= static_cast<T>(dot / mx[r]);
        }
      });
}

template <typename T>
class BasicLerModel {
 public:
  /// `pool` supplies the frozen query prior; without one a seeded fallback
  /// pool of 16 rows is used.
  BasicLerModel(ModelConfig cfg, std::uint64_t seed, const PromptPool* pool = nullptr)
      : cfg_(std::move(cfg)), params_(seed) {
    cfg_.validate();
    const PromptPool fallback = pool ? PromptPool{} : fallback_pool(16, cfg_.d0, seed ^ 0xC11Fu);
    const Tensor clip = aggregate(pool ? validate_pool(pool->features, cfg_.d0) : fallback);
    t_clip_ = BasicTensor<T>::from({cfg_.d0}, std::vector<T>(clip.data().begin(), clip.data().end()));
    build();
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  std::size_t parameter_count(bool include_ids = true) const { return params_.count(include_ids); }

  const BasicTensor<T>& t_clip() const { return t_clip_; }
  void set_t_clip(std::span<const T> v) {
    if (v.size() != cfg_.d0) throw DimensionError("t_clip must have D0 entries");
    std::copy(v.begin(), v.end(), t_clip_.mutable_data().begin());
  }
  const BasicTensor<T>& position_table() const { return pos_; }

  /// [H, W, C] -> [H/4 * W/4, D0]
  BasicTensor<T> encode_image(const BasicTensor<T>& image) const {
    if (image.shape() != Shape{cfg_.height, cfg_.width, cfg_.channels}) {
      throw DimensionError("encode_image: expected image " +
                           to_string({cfg_.height, cfg_.width, cfg_.channels}) + ", got " + to_string(image.shape()));
    }
    auto x = gelu(stem_(image));
    for (const auto& b : blocks_a_) x = b(x);
    x = down_(x);
    for (const auto& b : blocks_b_) x = b(x);
    x = enc_norm_(x);
    return reshape(x, {cfg_.tokens(), cfg_.d0});
  }

  struct StageOutput {
    BasicTensor<T> vis;
    BasicTensor<T> att;             // [L, tokens]
    BasicTensor<T> logits;          // [L, n_class]
    BasicTensor<T> query_weights;   // [heads0, L, L]
  };

  /// One localization stage given the visual sequence and the stage's query.
  StageOutput mlb_step(std::size_t i, const BasicTensor<T>& vis_in, const BasicTensor<T>& query) const {
    const Stage& s = stages_.at(i);
    StageOutput out;
    out.vis = s.visual(vis_in);
    auto masked = s.query_attn.attend(query, query, mask_);
    out.query_weights = masked.weights;
    auto q = s.query_norm(add(query, masked.output));
    auto k = add(s.k_proj(out.vis), pe_);
    auto v = s.v_proj(out.vis);
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg_.d0)));
    out.att = softmax(scale(matmul_nt(q, k), inv), -1);
    out.logits = s.decoder(matmul(out.att, v));
    return out;
  }

  /// T1 = t_clip + P
  BasicTensor<T> initial_query() const { return make_initial_query(t_clip_, pos_); }

  /// T_i = softmax(C_{i-1}) W_e + P for i >= 2 (0-based stage index i >= 1).
  BasicTensor<T> next_query(std::size_t i, const BasicTensor<T>& prev_logits) const {
    return add(matmul(softmax(prev_logits, -1), stages_.at(i).embed), pos_);
  }

  /// Runs all N stages; fills vis, loc_logits, attention, att. Returns the last Vis.
  BasicTensor<T> localize(const BasicTensor<T>& vis, ForwardTrace<T>& trace) const {
    BasicTensor<T> v = vis;
    BasicTensor<T> query = initial_query();
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      if (i > 0) query = next_query(i, trace.loc_logits.back());
      auto out = mlb_step(i, v, query);
      v = out.vis;
      trace.loc_logits.push_back(out.logits);
      trace.attention.push_back(out.att);
      trace.query_attention.push_back(out.query_weights);
    }
    trace.att = trace.attention.back();
    return v;
  }

  BasicTensor<T> gate_weights(const BasicTensor<T>& att) const {
    switch (cfg_.gate) {
      case GateMode::RowMax: return normalize_by_row_max(att);
      case GateMode::Softmax: break;
    }
    return att;
  }

  /// A = gate(att, Vis W_a): per-slot copies of the projected visual
  /// sequence weighted by that slot's attention. [L, tokens, D1]
  BasicTensor<T> character_features(const BasicTensor<T>& att, const BasicTensor<T>& vis) const {
    auto w = gate_weights(att);
    return gate_rows(w, add(a_proj_(vis), pe_char_));
  }

  /// [L, tokens, D1] -> [L, c_h, c_w, D1]. Slots are independent batch rows.
  BasicTensor<T> extract_characters(const BasicTensor<T>& a) const {
    if (a.rank() != 3 || a.dim(2) != cfg_.d1) {
      throw DimensionError("extract_characters: expected [L, tokens, D1], got " + to_string(a.shape()));
    }
    return cut(a, a.dim(0));
  }

  /// extract_characters(character_features(att, vis)) without materializing
  /// the per-slot memory inside the cross-attention projections.
  BasicTensor<T> extract_from_attention(const BasicTensor<T>& att, const BasicTensor<T>& vis) const {
    auto w = gate_weights(att);
    return cut(GatedMemory<T>{w, add(a_proj_(vis), pe_char_)}, att.dim(0));
  }

  /// [L, c_h, c_w, D1] -> [L, n_class]
  BasicTensor<T> decode_char(const BasicTensor<T>& f) const {
    const std::size_t l = f.dim(0);
    return char_head_(global_mean_pool(reshape(f, {l, cfg_.cut_len(), cfg_.d1})));
  }

  /// [L, c_h, c_w, D1] -> [L, L_ids, n_ids]. Training only.
  BasicTensor<T> decode_ids(const BasicTensor<T>& f, Mode mode) const {
    if (mode != Mode::Train) throw ModeError("decode_ids: the radical decoder is only available in training mode");
    const std::size_t l = f.dim(0);
    auto memory = ids_in_(reshape(f, {l, cfg_.cut_len(), cfg_.d1}));
    auto x = expand(ids_queries_, l);
    for (const auto& b : ids_blocks_) x = b(x, memory);
    return ids_head_(ids_norm_(x));
  }

  ForwardTrace<T> forward(const BasicTensor<T>& image, Mode mode, Scope scope = Scope::Full) const {
    ForwardTrace<T> trace;
    trace.vis = encode_image(image);
    auto vis_last = localize(trace.vis, trace);
    if (scope == Scope::Localization) return trace;
    trace.a = character_features(trace.att, vis_last);
    trace.f = extract_from_attention(trace.att, vis_last);
    trace.char_logits = decode_char(trace.f);
    if (mode == Mode::Train) trace.ids_logits = decode_ids(trace.f, mode);
    return trace;
  }

 private:
  template <typename Memory>
  BasicTensor<T> cut(const Memory& memory, std::size_t slots) const {
    auto x = expand(char_prompt_, slots);
    for (const auto& b : cutter_) x = b(x, memory);
    x = cutter_norm_(x);
    return reshape(x, {slots, cfg_.cut_h, cfg_.cut_w, cfg_.d1});
  }

  struct Stage {
    EncoderBlock<T> visual;
    MultiHeadAttention<T> query_attn;
    LayerNorm<T> query_norm;
    Linear<T> k_proj, v_proj;
    Linear<T> decoder;
    BasicTensor<T> embed;  // [n_class, D0], unused for the first stage
  };

  void build() {
    const auto& c = cfg_;
    auto& ps = params_;
    ps.set_scope(ParamGroup::Encoder, "encoder.");
    stem_ = Conv2d<T>(ps, "stem", c.channels, c.d0 / 2, 3, 2, 1);
    const std::size_t first = c.encoder_depth / 2;
    for (std::size_t i = 0; i < first; ++i) {
      blocks_a_.emplace_back(ps, "mix_a" + std::to_string(i), c.d0 / 2, c.d0 / 2 * c.mlp_ratio);
    }
    down_ = Conv2d<T>(ps, "down", c.d0 / 2, c.d0, 3, 2, 1);
    for (std::size_t i = first; i < c.encoder_depth; ++i) {
      blocks_b_.emplace_back(ps, "mix_b" + std::to_string(i - first), c.d0, c.d0 * c.mlp_ratio);
    }
    enc_norm_ = LayerNorm<T>(ps, "norm", c.d0);

    ps.set_scope(ParamGroup::Localization, "localization.");
    pos_ = ps.add("position", {c.max_len, c.d0}, Init::TruncNormal, false);
    for (std::size_t i = 0; i < c.mlb_depth; ++i) {
      NameScope<T> scope(ps, "stage" + std::to_string(i));
      Stage s;
      s.visual = EncoderBlock<T>(ps, "visual", c.d0, c.heads0, c.d0 * c.mlp_ratio);
      s.query_attn = MultiHeadAttention<T>(ps, "query_attn", c.d0, c.heads0);
      s.query_norm = LayerNorm<T>(ps, "query_norm", c.d0);
      s.k_proj = Linear<T>(ps, "k_proj", c.d0, c.d0);
      s.v_proj = Linear<T>(ps, "v_proj", c.d0, c.d0);
      s.decoder = Linear<T>(ps, "decoder", c.d0, c.n_class);
      if (i > 0) s.embed = ps.add("embed", {c.n_class, c.d0}, Init::TruncNormal, true);
      stages_.push_back(std::move(s));
    }

    ps.set_scope(ParamGroup::Extraction, "extraction.");
    a_proj_ = Linear<T>(ps, "a_proj", c.d0, c.d1, false);
    char_prompt_ = ps.add("char_prompt", {c.cut_len(), c.d1}, Init::TruncNormal, false);
    for (std::size_t i = 0; i < c.cutter_depth; ++i) {
      cutter_.emplace_back(ps, "cutter" + std::to_string(i), c.d1, c.heads1, c.d1 * c.cutter_mlp_ratio);
    }
    cutter_norm_ = LayerNorm<T>(ps, "norm", c.d1);

    ps.set_scope(ParamGroup::Recognition, "recognition.");
    char_head_ = Linear<T>(ps, "char_head", c.d1, c.n_class);

    ps.set_scope(ParamGroup::Ids, "ids.");
    ids_in_ = Linear<T>(ps, "in_proj", c.d1, c.d2);
    ids_queries_ = ps.add("queries", {c.ids_len, c.d2}, Init::TruncNormal, false);
    for (std::size_t i = 0; i < c.ids_depth; ++i) {
      ids_blocks_.emplace_back(ps, "block" + std::to_string(i), c.d2, c.heads2, c.d2 * c.mlp_ratio);
    }
    ids_norm_ = LayerNorm<T>(ps, "norm", c.d2);
    ids_head_ = Linear<T>(ps, "head", c.d2, c.n_ids);

    pe_ = sinusoidal_2d<T>(c.height / 4, c.width / 4, c.d0);
    pe_char_ = sinusoidal_2d<T>(c.height / 4, c.width / 4, c.d1);
    mask_ = diagonal_mask<T>(c.max_len);
  }

  ModelConfig cfg_;
  ParamStore<T> params_;
  BasicTensor<T> t_clip_;
  BasicTensor<T> pe_, pe_char_, mask_;

  Conv2d<T> stem_, down_;
  std::vector<ConvMixBlock<T>> blocks_a_, blocks_b_;
  LayerNorm<T> enc_norm_;

  BasicTensor<T> pos_;
  std::vector<Stage> stages_;

  Linear<T> a_proj_;
  BasicTensor<T> char_prompt_;
  std::vector<DecoderBlock<T>> cutter_;
  LayerNorm<T> cutter_norm_;

  Linear<T> char_head_;

  Linear<T> ids_in_;
  BasicTensor<T> ids_queries_;
  std::vector<DecoderBlock<T>> ids_blocks_;
  LayerNorm<T> ids_norm_;
  Linear<T> ids_head_;
};

using LerModel = BasicLerModel<float>;

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "LCKPT\0\0\0" | version u32 | digest u64 | config_len u32 | config text
//   | count u32 | count x (name_len u32 | name | LTEN blob)

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what) {
  const auto n = read_pod<std::uint32_t>(in, what);
  if (n > (1u << 20)) throw FormatError(std::string("checkpoint: implausible ") + what + " length");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw FormatError(std::string("checkpoint: truncated ") + what);
  return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const LerModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write("LCKPT\0\0\0", 8);
  detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
  detail::write_pod<std::uint64_t>(out, model.config().digest());
  detail::write_string(out, model.config().canonical());
  const auto& ps = model.params().all();
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ps.size() + 1));
  detail::write_string(out, "buffer.t_clip");
  write_lten(out, model.t_clip());
  for (const auto& p : ps) {
    detail::write_string(out, p.name);
    write_lten(out, p.value);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

struct CheckpointHeader {
  std::uint64_t digest = 0;
  std::string config_text;
};

/// Parses the canonical key=value text back into a config.
inline ModelConfig config_from_canonical(const std::string& text) {
  ModelConfig c;
  c.preset = "checkpoint";
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::size_t*> fields = {
      {"d0", &c.d0}, {"d1", &c.d1}, {"d2", &c.d2}, {"heads0", &c.heads0}, {"heads1", &c.heads1},
      {"heads2", &c.heads2}, {"encoder_depth", &c.encoder_depth}, {"mlb_depth", &c.mlb_depth},
      {"cutter_depth", &c.cutter_depth}, {"ids_depth", &c.ids_depth}, {"mlp_ratio", &c.mlp_ratio},
      {"cutter_mlp_ratio", &c.cutter_mlp_ratio}, {"height", &c.height}, {"width", &c.width},
      {"channels", &c.channels}, {"max_len", &c.max_len}, {"cut_h", &c.cut_h}, {"cut_w", &c.cut_w},
      {"ids_len", &c.ids_len}, {"n_class", &c.n_class}, {"n_ids", &c.n_ids}};
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "gate") {
      c.gate = parse_gate(value);
    } else if (auto it = fields.find(key); it != fields.end()) {
      *it->second = std::stoul(value);
    } else {
      throw FormatError("checkpoint config: unknown key " + key);
    }
  }
  return c;
}

inline CheckpointHeader read_checkpoint_header(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, "LCKPT\0\0\0", 8) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = detail::read_pod<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  CheckpointHeader h;
  h.digest = detail::read_pod<std::uint64_t>(in, "digest");
  h.config_text = detail::read_string(in, "config");
  return h;
}

inline CheckpointHeader peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return read_checkpoint_header(in);
}

/// Loads weights into `model`. The checkpoint's config digest must match.
inline void load_checkpoint(const std::string& path, LerModel& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  const auto h = read_checkpoint_header(in);
  if (h.digest != model.config().digest()) {
    std::ostringstream msg;
    msg << "checkpoint config digest " << std::hex << h.digest << " does not match model config digest "
        << model.config().digest() << " (architecture or preset differs)";
    throw ConfigError(msg.str());
  }
  const auto count = detail::read_pod<std::uint32_t>(in, "count");
  auto& ps = model.params().all();
  if (count != ps.size() + 1) throw FormatError("checkpoint: tensor count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = detail::read_string(in, "name");
    const Tensor t = read_lten(in);
    if (i == 0) {
      if (name != "buffer.t_clip") throw FormatError("checkpoint: expected buffer.t_clip first");
      model.set_t_clip(t.data());
      continue;
    }
    auto& p = ps[i - 1];
    if (name != p.name || t.shape() != p.value.shape()) {
      throw FormatError("checkpoint: entry " + name + " " + to_string(t.shape()) + " does not match " + p.name + " " +
                        to_string(p.value.shape()));
    }
    std::copy(t.data().begin(), t.data().end(), p.value.mutable_data().begin());
  }
}

}  // namespace ler
