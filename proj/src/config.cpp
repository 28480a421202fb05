#include "atlop/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "atlop/errors.hpp"

namespace atlop {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

template <class F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind("config key", 0) == 0) throw;
    throw ConfigError("config key '" + key + "': " + what);
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
  };
  if (!(lr_encoder > 0)) fail("lr_encoder", "must be positive");
  if (!(lr_head > 0)) fail("lr_head", "must be positive");
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (epochs == 0) fail("epochs", "must be positive");
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) fail("warmup_fraction", "must lie in [0, 1)");
  if (!(clip_norm > 0)) fail("clip_norm", "must be positive");
  if (!(dropout >= 0 && dropout < 1)) fail("dropout", "must lie in [0, 1)");
  if (groups == 0 || model_dim % groups != 0) fail("groups", "must divide model_dim");
  if (heads == 0 || model_dim % heads != 0) fail("heads", "must divide model_dim");
  if (layers == 0) fail("layers", "must be positive");
  if (ffn_dim == 0) fail("ffn_dim", "must be positive");
  if (max_len < 2) fail("max_len", "must be at least 2");
  if (!(weight_decay >= 0)) fail("weight_decay", "must be non-negative");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) fail("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) fail("adam_beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps", "must be positive");
  if (threads == 0) fail("threads", "must be positive");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.encoder.layers = layers;
  m.encoder.heads = heads;
  m.encoder.model_dim = model_dim;
  m.encoder.ffn_dim = ffn_dim;
  m.encoder.max_len = max_len;
  m.encoder.dropout = dropout;
  m.groups = groups;
  m.context_pooling = context_pooling;
  m.pooling = pooling;
  m.entity_markers = entity_markers;
  m.loss = loss;
  m.truncate = truncate;
  return m;
}

std::map<std::string, std::string> to_map(const TrainConfig& c) {
  std::string rel;
  for (std::size_t i = 0; i < c.relations.size(); ++i) rel += (i ? "," : "") + c.relations[i];
  return {
      {"lr_encoder", fmt(c.lr_encoder)},
      {"lr_head", fmt(c.lr_head)},
      {"batch_size", std::to_string(c.batch_size)},
      {"epochs", std::to_string(c.epochs)},
      {"warmup_fraction", fmt(c.warmup_fraction)},
      {"clip_norm", fmt(c.clip_norm)},
      {"dropout", fmt(c.dropout)},
      {"seed", std::to_string(c.seed)},
      {"loss", to_string(c.loss)},
      {"context_pooling", fmt(c.context_pooling)},
      {"pooling", to_string(c.pooling)},
      {"entity_markers", fmt(c.entity_markers)},
      {"groups", std::to_string(c.groups)},
      {"layers", std::to_string(c.layers)},
      {"heads", std::to_string(c.heads)},
      {"model_dim", std::to_string(c.model_dim)},
      {"ffn_dim", std::to_string(c.ffn_dim)},
      {"max_len", std::to_string(c.max_len)},
      {"truncate", fmt(c.truncate)},
      {"weight_decay", fmt(c.weight_decay)},
      {"adam_beta1", fmt(c.adam_beta1)},
      {"adam_beta2", fmt(c.adam_beta2)},
      {"adam_eps", fmt(c.adam_eps)},
      {"strategy", to_string(c.strategy)},
      {"max_sweeps", std::to_string(c.max_sweeps)},
      {"patience", std::to_string(c.patience)},
      {"threads", std::to_string(c.threads)},
      {"relations", rel},
  };
}

TrainConfig from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"lr_encoder", [&](auto& k, auto& v) { c.lr_encoder = to_double(k, v); }},
      {"lr_head", [&](auto& k, auto& v) { c.lr_head = to_double(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.batch_size = to_uint(k, v); }},
      {"epochs", [&](auto& k, auto& v) { c.epochs = to_uint(k, v); }},
      {"warmup_fraction", [&](auto& k, auto& v) { c.warmup_fraction = to_double(k, v); }},
      {"clip_norm", [&](auto& k, auto& v) { c.clip_norm = to_double(k, v); }},
      {"dropout", [&](auto& k, auto& v) { c.dropout = to_double(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = to_uint(k, v); }},
      {"loss", [&](auto& k, auto& v) { c.loss = wrap(k, [&] { return parse_loss(v); }); }},
      {"context_pooling", [&](auto& k, auto& v) { c.context_pooling = to_bool(k, v); }},
      {"pooling", [&](auto& k, auto& v) { c.pooling = wrap(k, [&] { return parse_pooling(v); }); }},
      {"entity_markers", [&](auto& k, auto& v) { c.entity_markers = to_bool(k, v); }},
      {"groups", [&](auto& k, auto& v) { c.groups = to_uint(k, v); }},
      {"layers", [&](auto& k, auto& v) { c.layers = to_uint(k, v); }},
      {"heads", [&](auto& k, auto& v) { c.heads = to_uint(k, v); }},
      {"model_dim", [&](auto& k, auto& v) { c.model_dim = to_uint(k, v); }},
      {"ffn_dim", [&](auto& k, auto& v) { c.ffn_dim = to_uint(k, v); }},
      {"max_len", [&](auto& k, auto& v) { c.max_len = to_uint(k, v); }},
      {"truncate", [&](auto& k, auto& v) { c.truncate = to_bool(k, v); }},
      {"weight_decay", [&](auto& k, auto& v) { c.weight_decay = to_double(k, v); }},
      {"adam_beta1", [&](auto& k, auto& v) { c.adam_beta1 = to_double(k, v); }},
      {"adam_beta2", [&](auto& k, auto& v) { c.adam_beta2 = to_double(k, v); }},
      {"adam_eps", [&](auto& k, auto& v) { c.adam_eps = to_double(k, v); }},
      {"strategy", [&](auto& k, auto& v) { c.strategy = wrap(k, [&] { return parse_strategy(v); }); }},
      {"max_sweeps", [&](auto& k, auto& v) { c.max_sweeps = to_uint(k, v); }},
      {"patience", [&](auto& k, auto& v) { c.patience = to_uint(k, v); }},
      {"threads", [&](auto& k, auto& v) { c.threads = to_uint(k, v); }},
      {"relations",
       [&](auto&, auto& v) {
         c.relations.clear();
         std::stringstream ss(v);
         for (std::string item; std::getline(ss, item, ',');)
           if (!trim(item).empty()) c.relations.push_back(trim(item));
       }},
  };
  for (const auto& [k, v] : kv) {
    auto it = setters.find(k);
    if (it == setters.end()) throw ConfigError("unknown config key '" + k + "'");
    it->second(k, v);
  }
  c.validate();
  return c;
}

TrainConfig parse_train_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (kv.count(key)) throw ConfigError("config line " + std::to_string(n) + ": duplicate key '" + key + "'");
    kv[key] = trim(t.substr(eq + 1));
  }
  return from_map(kv);
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_train_config(in);
}

void write_train_config(std::ostream& out, const TrainConfig& c) {
  for (const auto& [k, v] : to_map(c)) out << k << " = " << v << "\n";
}

}  // namespace atlop
