#include "hyptk/app/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hyptk/errors.hpp"

namespace hyp::app {

using Json = nlohmann::ordered_json;

namespace {

std::string manifold_name(const ManifoldPtr& m) {
  if (!m) return "none";
  return m->kind() == ManifoldKind::kPoincareBall ? "poincare" : "euclidean";
}

template <class T>
T field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw DataError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(where + ": field '" + key + "' has the wrong type");
  }
}

ParamRecord parse_param(const Json& j, double curvature_raw, std::size_t index) {
  const std::string where = "checkpoint param " + std::to_string(index);
  ParamRecord r;
  r.name = field<std::string>(j, "name", where);
  const auto kind = field<std::string>(j, "kind", where);
  r.manifold = field<std::string>(j, "manifold", where);
  r.man_dim = field<std::int64_t>(j, "man_dim", where);
  r.shape = field<Shape>(j, "shape", where);
  r.data = field<std::vector<double>>(j, "data", where);

  if (r.manifold != "poincare" && r.manifold != "euclidean" && r.manifold != "none") {
    throw DataError(where + ": unknown manifold '" + r.manifold + "'");
  }
  if ((kind == "manifold") != (r.manifold != "none") || (kind != "manifold" && kind != "euclidean")) {
    throw DataError(where + ": kind '" + kind + "' does not match manifold '" + r.manifold + "'");
  }
  std::int64_t count = 1;
  for (std::int64_t e : r.shape) {
    if (e < 0) throw DataError(where + ": negative extent");
    count *= e;
  }
  if (count != static_cast<std::int64_t>(r.data.size())) {
    throw DataError(where + ": shape holds " + std::to_string(count) + " values but data has " +
                    std::to_string(r.data.size()));
  }
  if (r.manifold == "none") return r;
  const auto rank = static_cast<std::int64_t>(r.shape.size());
  if (r.man_dim < 0 || r.man_dim >= rank) throw DataError(where + ": man_dim out of range");
  if (r.manifold == "poincare") {
    const auto ball = make_poincare_ball(Curvature::from_raw(curvature_raw, false));
    if (!ball->contains(Tensor(r.shape, r.data), r.man_dim)) {
      throw DataError(where + " (" + r.name + "): point outside the Poincare ball");
    }
  }
  return r;
}

}  // namespace

std::string to_json(const Checkpoint& ck) {
  Json params = Json::array();
  for (const auto& p : ck.params) {
    params.push_back({{"name", p.name},
                      {"kind", p.manifold == "none" ? "euclidean" : "manifold"},
                      {"manifold", p.manifold},
                      {"man_dim", p.man_dim},
                      {"shape", p.shape},
                      {"data", p.data}});
  }
  Json config = Json::object();
  for (const auto& [k, v] : ck.config) config[k] = v;
  Json slots = Json::array();
  for (const auto& s : ck.slots) {
    slots.push_back(
        {{"momentum", s.momentum}, {"second_moment", s.second_moment}, {"steps", s.steps}});
  }
  Json history = Json::array();
  for (const auto& row : ck.history) {
    history.push_back({{"epoch", row.epoch},
                       {"step", row.step},
                       {"loss", row.loss},
                       {"accuracy", row.accuracy ? Json(*row.accuracy) : Json(nullptr)}});
  }
  const Json doc = {
      {"format_version", kCheckpointVersion},
      {"curvature", {{"raw", ck.curvature_raw}, {"learnable", ck.curvature_learnable}}},
      {"params", params},
      {"run",
       {{"config", config},
        {"epoch", ck.epoch},
        {"step", ck.step},
        {"rng", ck.rng_state},
        {"lr", ck.lr},
        {"optimizer_slots", slots},
        {"history", history}}}};
  return doc.dump(1) + "\n";
}

Checkpoint from_json(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  const std::string where = "checkpoint";
  if (!doc.is_object() || !doc.contains("format_version")) {
    throw DataError("checkpoint has no format_version");
  }
  const auto version = field<int>(doc, "format_version", where);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint format_version " + std::to_string(version));
  }
  Checkpoint ck;
  const Json& curv = doc.contains("curvature") ? doc["curvature"] : Json();
  ck.curvature_raw = field<double>(curv, "raw", "checkpoint curvature");
  ck.curvature_learnable = field<bool>(curv, "learnable", "checkpoint curvature");
  const Json& params = doc.contains("params") ? doc["params"] : Json();
  if (!params.is_array()) throw DataError("checkpoint params must be an array");
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.params.push_back(parse_param(params[i], ck.curvature_raw, i));
  }
  if (!doc.contains("run")) return ck;

  const Json& run = doc["run"];
  const std::string rw = "checkpoint run";
  const auto config = field<Json>(run, "config", rw);
  if (!config.is_object()) throw DataError("checkpoint config must be an object");
  for (const auto& [k, v] : config.items()) {
    if (!v.is_string()) throw DataError("checkpoint config value for " + k + " must be a string");
    ck.config.emplace_back(k, v.get<std::string>());
  }
  ck.epoch = field<std::int64_t>(run, "epoch", rw);
  ck.step = field<std::int64_t>(run, "step", rw);
  ck.rng_state = field<std::string>(run, "rng", rw);
  ck.lr = field<double>(run, "lr", rw);
  for (const auto& s : field<Json>(run, "optimizer_slots", rw)) {
    optim::SlotState slot;
    slot.momentum = field<std::vector<double>>(s, "momentum", "checkpoint optimizer slot");
    slot.second_moment = field<std::vector<double>>(s, "second_moment", "checkpoint optimizer slot");
    slot.steps = field<std::int64_t>(s, "steps", "checkpoint optimizer slot");
    ck.slots.push_back(std::move(slot));
  }
  for (const auto& h : field<Json>(run, "history", rw)) {
    MetricRow row;
    row.epoch = field<std::int64_t>(h, "epoch", "checkpoint history");
    row.step = field<std::int64_t>(h, "step", "checkpoint history");
    row.loss = field<double>(h, "loss", "checkpoint history");
    if (h.contains("accuracy") && !h["accuracy"].is_null()) {
      row.accuracy = field<double>(h, "accuracy", "checkpoint history");
    }
    ck.history.push_back(row);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << to_json(checkpoint);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_json(text.str());
}

std::vector<ParamRecord> capture(const std::vector<nn::ParamRef>& params) {
  std::vector<ParamRecord> out;
  for (const auto& p : params) {
    const auto data = p.tensor.data();
    out.push_back({p.name, manifold_name(p.manifold),
                   p.manifold ? normalize_axis(p.man_dim, p.tensor.rank()) : -1, p.tensor.shape(),
                   std::vector<double>(data.begin(), data.end())});
  }
  return out;
}

void restore(const std::vector<ParamRecord>& records, const std::vector<nn::ParamRef>& params) {
  if (records.size() != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(records.size()) +
                    " parameters but the model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& r = records[i];
    const auto& p = params[i];
    const std::int64_t dim = p.manifold ? normalize_axis(p.man_dim, p.tensor.rank()) : -1;
    if (r.name != p.name || r.manifold != manifold_name(p.manifold) || r.man_dim != dim ||
        r.shape != p.tensor.shape()) {
      throw DataError("checkpoint parameter '" + r.name + "' does not match model parameter '" +
                      p.name + "'");
    }
    Tensor t = p.tensor;
    std::copy(r.data.begin(), r.data.end(), t.mutable_data().begin());
  }
}

}  // namespace hyp::app
