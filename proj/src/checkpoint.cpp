#include "atlop/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "atlop/errors.hpp"
#include "json.hpp"

namespace atlop {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'A', 'T', 'L', 'O', 'P', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& tm) {
  json manifest;
  manifest["version"] = kCheckpointVersion;
  json cfg = json::object();
  for (const auto& [k, v] : to_map(tm.config)) cfg[k] = v;
  manifest["config"] = cfg;
  manifest["seed"] = tm.config.seed;
  manifest["schema"] = tm.model.schema().names();
  manifest["vocabulary"] = tm.model.vocab().tokens();
  manifest["thresholds"] = {{"strategy", to_string(tm.thresholds.strategy)},
                            {"theta", tm.thresholds.theta},
                            {"per_class", tm.thresholds.per_class}};
  json hist = json::array();
  for (const EpochRecord& r : tm.history)
    hist.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"dev_f1", r.dev_f1}, {"seconds", r.seconds}});
  manifest["history"] = hist;
  manifest["best_epoch"] = tm.best_epoch;
  manifest["best_dev_f1"] = tm.best_dev_f1;

  json tensors = json::array();
  std::size_t offset = 0;
  for (const ad::Parameter* p : tm.model.parameters()) {
    tensors.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}, {"count", p->value.size()}});
    offset += p->value.size();
  }
  manifest["tensors"] = tensors;
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const ad::Parameter* p : tm.model.parameters())
    for (double v : p->value.data()) put<float>(out, static_cast<float>(v));
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError("'" + path.string() + "' is not a checkpoint");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in, "manifest length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint manifest truncated");

  TrainedModel tm;
  try {
    const json m = json::parse(text);
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : m.at("config").items()) kv[k] = v.get<std::string>();
    tm.config = from_map(kv);
    RelationSchema schema(m.at("schema").get<std::vector<std::string>>());
    Vocabulary vocab(m.at("vocabulary").get<std::vector<std::string>>());
    if (vocab.tokens() != m.at("vocabulary").get<std::vector<std::string>>())
      throw DataError("checkpoint vocabulary is not in canonical order");
    const json& th = m.at("thresholds");
    tm.thresholds.strategy = parse_strategy(th.at("strategy").get<std::string>());
    tm.thresholds.theta = th.at("theta").get<double>();
    tm.thresholds.per_class = th.at("per_class").get<std::vector<double>>();
    for (const json& r : m.at("history"))
      tm.history.push_back(EpochRecord{r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(),
                                       r.at("dev_f1").get<double>(), r.at("seconds").get<double>()});
    tm.best_epoch = m.at("best_epoch").get<std::size_t>();
    tm.best_dev_f1 = m.at("best_dev_f1").get<double>();

    tm.model = Model(tm.config.model_config(), std::move(vocab), std::move(schema), tm.config.seed);
    std::map<std::string, ad::Parameter*> by_name;
    for (ad::Parameter* p : tm.model.parameters()) by_name[p->name] = p;
    const json& tensors = m.at("tensors");
    if (tensors.size() != by_name.size())
      throw DataError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                      std::to_string(by_name.size()));
    std::vector<float> data;
    std::size_t total = 0;
    for (const json& t : tensors) total += t.at("count").get<std::size_t>();
    data.resize(total);
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total * sizeof(float))))
      throw DataError("checkpoint tensor data truncated");
    for (const json& t : tensors) {
      const std::string name = t.at("name").get<std::string>();
      auto it = by_name.find(name);
      if (it == by_name.end()) throw DataError("checkpoint tensor '" + name + "' is unknown to the model");
      ad::Parameter& p = *it->second;
      if (t.at("shape").get<Shape>() != p.value.shape())
        throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(t.at("shape").get<Shape>()) +
                        ", model expects " + shape_str(p.value.shape()));
      const std::size_t off = t.at("offset").get<std::size_t>();
      const std::size_t count = t.at("count").get<std::size_t>();
      if (count != p.value.size() || off + count > total)
        throw DataError("checkpoint tensor '" + name + "' has a bad extent");
      auto dst = p.value.data();
      for (std::size_t i = 0; i < count; ++i) dst[i] = static_cast<double>(data[off + i]);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  return tm;
}

}  // namespace atlop
