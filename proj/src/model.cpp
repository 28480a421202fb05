#include "atlop/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "atlop/errors.hpp"

namespace atlop {

std::string to_string(LossKind k) { return k == LossKind::Adaptive ? "adaptive" : "bce"; }

LossKind parse_loss(const std::string& s) {
  if (s == "adaptive") return LossKind::Adaptive;
  if (s == "bce") return LossKind::BCE;
  throw ConfigError("unknown loss '" + s + "' (expected adaptive or bce)");
}

std::string to_string(PoolingKind k) { return k == PoolingKind::LogSumExp ? "logsumexp" : "mean"; }

PoolingKind parse_pooling(const std::string& s) {
  if (s == "logsumexp") return PoolingKind::LogSumExp;
  if (s == "mean") return PoolingKind::Mean;
  throw ConfigError("unknown pooling '" + s + "' (expected logsumexp or mean)");
}

std::vector<std::pair<std::size_t, std::size_t>> ordered_pairs(std::size_t entities) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(entities * (entities > 0 ? entities - 1 : 0));
  for (std::size_t s = 0; s < entities; ++s)
    for (std::size_t o = 0; o < entities; ++o)
      if (s != o) out.emplace_back(s, o);
  return out;
}

Model::Model(const ModelConfig& config, Vocabulary vocab, RelationSchema schema, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)), schema_(std::move(schema)) {
  if (schema_.size() == 0) throw ConfigError("relation schema is empty");
  encoder_ = Encoder(config_.encoder, vocab_.size(), seed);
  HeadConfig hc;
  hc.dim = config_.encoder.model_dim;
  hc.relations = schema_.size();
  hc.groups = config_.groups;
  hc.context_pooling = config_.context_pooling;
  head_ = RelationHead(hc, seed + 0x9E3779B97F4A7C15ULL);
}

DocumentForward Model::forward(ad::Graph& g, const Document& doc, const ForwardOptions& options) const {
  const std::size_t n = doc.entities.size();
  if (n < 2) throw DataError("document '" + doc.doc_id + "': needs at least two entities");
  DocumentForward f;
  f.pairs = ordered_pairs(n);
  f.marked = insert_markers(doc, config_.entity_markers);
  const std::vector<std::size_t> ids = vocab_.encode(f.marked.tokens);

  EncodeOptions eo;
  eo.train = options.train;
  eo.rng = options.rng;
  eo.pad_id = vocab_.pad_id();
  eo.truncate = config_.truncate;
  f.encoded = encoder_.encode(g, ids, eo);
  const std::size_t len = f.encoded.length;

  // Mentions cut by truncation are dropped; an entity left without any
  // falls back to the first token.
  f.anchors = f.marked.anchors;
  for (auto& a : f.anchors) {
    a.erase(std::remove_if(a.begin(), a.end(), [len](std::size_t p) { return p >= len; }), a.end());
    if (a.empty()) a.push_back(0);
  }

  std::vector<ad::Var> pooled;
  pooled.reserve(n);
  for (std::size_t e = 0; e < n; ++e)
    pooled.push_back(pool_entity(f.encoded.hidden, f.anchors[e], config_.pooling, "entity " + std::to_string(e)));
  f.entities = ad::concat_rows(pooled);

  std::vector<std::size_t> subj, obj;
  subj.reserve(f.pairs.size());
  obj.reserve(f.pairs.size());
  for (const auto& [s, o] : f.pairs) {
    subj.push_back(s);
    obj.push_back(o);
  }
  ad::Var hs = ad::gather_rows(f.entities, subj);
  ad::Var ho = ad::gather_rows(f.entities, obj);

  std::optional<ad::Var> context;
  if (config_.context_pooling) {
    const std::vector<ad::Var> table = entity_attention_table(f.encoded.attention, f.anchors);
    std::vector<ad::Var> srows, orows;
    for (const ad::Var& t : table) {
      srows.push_back(ad::gather_rows(t, subj));
      orows.push_back(ad::gather_rows(t, obj));
    }
    PairContext pc = pair_context(f.encoded.hidden, srows, orows, len);
    f.context_weights = pc.weights;
    context = pc.context;
  }
  f.logits = head_.pair_logits(hs, ho, context);
  return f;
}

std::vector<LabelSets> Model::pair_labels(const Document& doc,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs) const {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> pos;
  for (const RelationLabel& l : doc.labels) pos[{l.subject, l.object}].push_back(l.relation);
  std::vector<LabelSets> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto it = pos.find(p);
    if (it == pos.end()) {
      out.push_back(LabelSets::from_positives({}, schema_.size()));
    } else {
      std::vector<std::size_t> rs = it->second;
      std::sort(rs.begin(), rs.end());
      out.push_back(LabelSets::from_positives(rs, schema_.size()));
    }
  }
  return out;
}

ad::Var Model::loss(const DocumentForward& fwd, const Document& doc) const {
  const std::vector<LabelSets> labels = pair_labels(doc, fwd.pairs);
  return config_.loss == LossKind::Adaptive ? adaptive_threshold_loss(fwd.logits, labels)
                                            : bce_loss(fwd.logits, labels);
}

std::vector<double> Model::probabilities(std::span<const double> logits) const {
  if (logits.size() != schema_.size() + 1) throw DimensionError("logit row has the wrong width");
  std::vector<double> p(schema_.size());
  const double shift = config_.loss == LossKind::Adaptive ? logits[kThresholdClass] : 0.0;
  for (std::size_t r = 0; r < p.size(); ++r) {
    const double x = logits[logit_column(r)] - shift;
    p[r] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return p;
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> ps = encoder_.parameters();
  for (ad::Parameter* p : head_.parameters()) ps.push_back(p);
  return ps;
}

std::vector<const ad::Parameter*> Model::parameters() const {
  auto ps = const_cast<Model*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::size_t Model::encoder_parameter_count() const { return encoder_.parameters().size(); }

}  // namespace atlop
