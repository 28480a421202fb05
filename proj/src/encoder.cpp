#include "atlop/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "atlop/errors.hpp"

namespace atlop {

// ---- marker insertion -------------------------------------------------------------

MarkedDocument insert_markers(const Document& doc, bool use_markers) {
  struct Span {
    std::size_t start, end;
    bool operator<(const Span& o) const { return start != o.start ? start < o.start : end < o.end; }
  };
  const std::size_t n_tokens = doc.token_count();
  auto fail = [&doc](const std::string& what) { throw DataError("document '" + doc.doc_id + "': " + what); };

  // Flatten every mention to global token offsets.
  std::vector<std::vector<Span>> flat(doc.entities.size());
  std::map<Span, int> unique;
  for (std::size_t e = 0; e < doc.entities.size(); ++e) {
    for (const Mention& m : doc.entities[e].mentions) {
      if (m.sentence >= doc.sentences.size() || m.start >= m.end || m.end > doc.sentences[m.sentence].size())
        fail("mention of entity " + std::to_string(e) + " is out of bounds");
      const std::size_t off = doc.sentence_offset(m.sentence);
      flat[e].push_back({off + m.start, off + m.end});
    }
    std::vector<Span> own = flat[e];
    std::sort(own.begin(), own.end());
    for (std::size_t i = 1; i < own.size(); ++i)
      if (own[i].start < own[i - 1].end) fail("mentions of entity " + std::to_string(e) + " overlap");
    for (const Span& s : own) unique.emplace(s, 0);
  }
  const Span* prev = nullptr;
  for (const auto& [s, _] : unique) {
    if (prev && s.start < prev->end)
      fail("mentions [" + std::to_string(prev->start) + ", " + std::to_string(prev->end) + ") and [" +
           std::to_string(s.start) + ", " + std::to_string(s.end) + ") partially overlap");
    prev = &s;
  }

  MarkedDocument out;
  const auto tokens = doc.flat_tokens();
  // new_pos[t] = position of original token t in the output.
  std::vector<std::size_t> new_pos(n_tokens + 1);
  std::map<std::size_t, std::size_t> open_at;  // span start -> opening marker position
  if (!use_markers) {
    out.tokens = tokens;
    for (std::size_t t = 0; t <= n_tokens; ++t) new_pos[t] = t;
  } else {
    std::vector<char> starts(n_tokens + 1, 0), ends(n_tokens + 1, 0);
    for (const auto& [s, _] : unique) {
      starts[s.start] = 1;
      ends[s.end] = 1;
    }
    for (std::size_t t = 0; t <= n_tokens; ++t) {
      if (ends[t]) out.tokens.emplace_back(Vocabulary::kMarker);
      if (t == n_tokens) break;
      if (starts[t]) {
        open_at[t] = out.tokens.size();
        out.tokens.emplace_back(Vocabulary::kMarker);
      }
      new_pos[t] = out.tokens.size();
      out.tokens.push_back(tokens[t]);
    }
    new_pos[n_tokens] = out.tokens.size();
  }

  out.anchors.resize(doc.entities.size());
  out.spans.resize(doc.entities.size());
  for (std::size_t e = 0; e < doc.entities.size(); ++e) {
    for (const Span& s : flat[e]) {
      const std::size_t start = new_pos[s.start];
      const std::size_t end = new_pos[s.end - 1] + 1;
      out.spans[e].emplace_back(start, end);
      out.anchors[e].push_back(use_markers ? open_at.at(s.start) : start);
    }
  }
  return out;
}

// ---- configuration ----------------------------------------------------------------

void EncoderConfig::validate() const {
  if (layers == 0) throw ConfigError("encoder needs at least one layer");
  if (heads == 0 || model_dim == 0 || ffn_dim == 0 || max_len == 0)
    throw ConfigError("encoder dimensions must be positive");
  if (model_dim % heads != 0)
    throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by heads " + std::to_string(heads));
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

Tensor EncoderOutput::attention_tensor() const {
  Tensor out({attention.size(), length, length});
  for (std::size_t h = 0; h < attention.size(); ++h) {
    const auto src = attention[h].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(h * length * length));
  }
  return out;
}

// ---- encoder ----------------------------------------------------------------------

namespace {

ad::Parameter xavier(const std::string& name, std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = u(rng);
  return ad::Parameter(name, std::move(t));
}

ad::Parameter constant_param(const std::string& name, std::size_t n, double value) {
  return ad::Parameter(name, Tensor({n}, value));
}

}  // namespace

Encoder::Encoder(const EncoderConfig& config, std::size_t vocab_size, std::uint64_t seed)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  if (vocab_size == 0) throw ConfigError("vocabulary is empty");
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.model_dim;

  Tensor tok({vocab_size, d});
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto& v : tok.data()) v = normal(rng);
  token_embedding_ = ad::Parameter("encoder.token_embedding", std::move(tok));

  // Sinusoidal initial values; the table is trained like any other weight.
  Tensor pos({config_.max_len, d});
  for (std::size_t p = 0; p < config_.max_len; ++p)
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pos.at(p, i) = (i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
    }
  position_embedding_ = ad::Parameter("encoder.position_embedding", std::move(pos));
  emb_gamma_ = constant_param("encoder.embedding_norm.gamma", d, 1.0);
  emb_beta_ = constant_param("encoder.embedding_norm.beta", d, 0.0);
  final_gamma_ = constant_param("encoder.final_norm.gamma", d, 1.0);
  final_beta_ = constant_param("encoder.final_norm.beta", d, 0.0);

  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    Layer L;
    L.wq = xavier(p + "wq", d, d, rng);
    L.bq = constant_param(p + "bq", d, 0.0);
    L.wk = xavier(p + "wk", d, d, rng);
    L.bk = constant_param(p + "bk", d, 0.0);
    L.wv = xavier(p + "wv", d, d, rng);
    L.bv = constant_param(p + "bv", d, 0.0);
    L.wo = xavier(p + "wo", d, d, rng);
    L.bo = constant_param(p + "bo", d, 0.0);
    L.ln1_gamma = constant_param(p + "norm1.gamma", d, 1.0);
    L.ln1_beta = constant_param(p + "norm1.beta", d, 0.0);
    L.w1 = xavier(p + "w1", d, config_.ffn_dim, rng);
    L.b1 = constant_param(p + "b1", config_.ffn_dim, 0.0);
    L.w2 = xavier(p + "w2", config_.ffn_dim, d, rng);
    L.b2 = constant_param(p + "b2", d, 0.0);
    L.ln2_gamma = constant_param(p + "norm2.gamma", d, 1.0);
    L.ln2_beta = constant_param(p + "norm2.beta", d, 0.0);
    layers_.push_back(std::move(L));
  }
}

EncoderOutput Encoder::encode(ad::Graph& g, std::span<const std::size_t> ids, const EncodeOptions& options) const {
  if (ids.empty()) throw DataError("cannot encode an empty token sequence");
  EncoderOutput out;
  if (ids.size() > config_.max_len) {
    if (!options.truncate)
      throw DataError("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                      std::to_string(config_.max_len) + " (enable truncation to cut it)");
    ids = ids.first(config_.max_len);
    out.truncated = true;
  }
  for (std::size_t id : ids)
    if (id >= vocab_size_) throw DataError("token id " + std::to_string(id) + " outside the vocabulary");
  const bool drop = options.train && config_.dropout > 0.0;
  if (drop && !options.rng) throw ConfigError("training-mode encoding with dropout needs an RNG");
  auto dropout = [&](ad::Var x) { return drop ? ad::dropout(x, config_.dropout, *options.rng) : x; };

  const std::size_t l = ids.size();
  const std::size_t d = config_.model_dim;
  const std::size_t dh = d / config_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  out.length = l;

  std::vector<std::size_t> positions(l);
  for (std::size_t i = 0; i < l; ++i) positions[i] = i;

  ad::Var x = ad::add(ad::gather_rows(g.parameter(token_embedding_), ids),
                      ad::gather_rows(g.parameter(position_embedding_), positions));
  x = dropout(ad::layer_norm(x, g.parameter(emb_gamma_), g.parameter(emb_beta_)));

  ad::Var key_mask;
  if (options.mask_padding && std::find(ids.begin(), ids.end(), options.pad_id) != ids.end()) {
    Tensor m({l}, 0.0);
    for (std::size_t i = 0; i < l; ++i)
      if (ids[i] == options.pad_id) m[i] = -std::numeric_limits<double>::infinity();
    key_mask = g.constant(std::move(m));
  }

  // Pre-norm residual blocks, one closing norm.
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    Layer& L = layers_[li];
    const bool last = li + 1 == layers_.size();
    ad::Var xin = ad::layer_norm(x, g.parameter(L.ln1_gamma), g.parameter(L.ln1_beta));
    ad::Var q = ad::add_row_bias(ad::matmul(xin, g.parameter(L.wq)), g.parameter(L.bq));
    ad::Var k = ad::add_row_bias(ad::matmul(xin, g.parameter(L.wk)), g.parameter(L.bk));
    ad::Var v = ad::add_row_bias(ad::matmul(xin, g.parameter(L.wv)), g.parameter(L.bv));
    std::vector<ad::Var> head_out;
    for (std::size_t h = 0; h < config_.heads; ++h) {
      ad::Var scores = ad::scale(ad::matmul_nt(ad::slice_cols(q, h * dh, dh), ad::slice_cols(k, h * dh, dh)), inv_sqrt);
      if (key_mask.valid()) scores = ad::add_row_bias(scores, key_mask);
      ad::Var probs = ad::softmax(scores, 1);
      if (last) out.attention.push_back(probs);
      head_out.push_back(ad::matmul(probs, ad::slice_cols(v, h * dh, dh)));
    }
    ad::Var attn = ad::add_row_bias(ad::matmul(ad::concat_cols(head_out), g.parameter(L.wo)), g.parameter(L.bo));
    x = ad::add(x, dropout(attn));
    ad::Var xn = ad::layer_norm(x, g.parameter(L.ln2_gamma), g.parameter(L.ln2_beta));
    ad::Var ffn = ad::gelu(ad::add_row_bias(ad::matmul(xn, g.parameter(L.w1)), g.parameter(L.b1)));
    ffn = ad::add_row_bias(ad::matmul(ffn, g.parameter(L.w2)), g.parameter(L.b2));
    x = ad::add(x, dropout(ffn));
  }
  x = ad::layer_norm(x, g.parameter(final_gamma_), g.parameter(final_beta_));
  out.hidden = x;
  return out;
}

std::vector<ad::Parameter*> Encoder::parameters() {
  std::vector<ad::Parameter*> ps{&token_embedding_, &position_embedding_, &emb_gamma_, &emb_beta_};
  for (Layer& L : layers_)
    for (ad::Parameter* p : {&L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo, &L.ln1_gamma, &L.ln1_beta, &L.w1,
                             &L.b1, &L.w2, &L.b2, &L.ln2_gamma, &L.ln2_beta})
      ps.push_back(p);
  ps.push_back(&final_gamma_);
  ps.push_back(&final_beta_);
  return ps;
}

std::vector<const ad::Parameter*> Encoder::parameters() const {
  auto ps = const_cast<Encoder*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

}  // namespace atlop
