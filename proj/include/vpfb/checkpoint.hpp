#ifndef VPFB_CHECKPOINT_HPP
#define VPFB_CHECKPOINT_HPP

// Checkpoint files: one JSON document holding the architecture, parameters,
// schedule, dataset description and optimizer state.
//
//   {
//     "format": "vpfb-checkpoint", "version": 1,
//     "arch": {...}, "model_seed": 7, "params": [...],
//     "schedule": {...}, "dataset": {...},
//     "step": 1000, "optimizer": {"steps": 1000, "m": [...], "v": [...]},
//     "best_metric": 0.012 | null, "best_step": 800
//   }
//
// Doubles are written in shortest round-trip form, so save/load is exact.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vpfb/data.hpp"
#include "vpfb/energy_model.hpp"
#include "vpfb/error.hpp"
#include "vpfb/optimizer.hpp"
#include "vpfb/schedule.hpp"

namespace vpfb {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  EnergyModel model;
  ScheduleParams schedule;
  DatasetSpec dataset;
  long step = 0;
  OptimizerState optimizer;
  double best_metric = std::numeric_limits<double>::infinity();
  long best_step = -1;
};

namespace detail {

using nlohmann::json;

inline json to_json_vector(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vector vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json arch_to_json(const Architecture& a) {
  return {{"input_dim", a.input_dim},
          {"hidden", a.hidden},
          {"activation", ad::to_string(a.activation)},
          {"time_embedding", to_string(a.time_embedding)},
          {"time_frequencies", a.time_frequencies},
          {"num_classes", a.num_classes},
          {"class_embed_dim", a.class_embed_dim}};
}

inline Architecture arch_from_json(const json& j) {
  Architecture a;
  a.input_dim = j.at("input_dim").get<int>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  a.activation = ad::activation_from_string(j.at("activation").get<std::string>());
  a.time_embedding = time_embedding_from_string(j.at("time_embedding").get<std::string>());
  a.time_frequencies = j.at("time_frequencies").get<int>();
  a.num_classes = j.at("num_classes").get<int>();
  a.class_embed_dim = j.at("class_embed_dim").get<int>();
  return a;
}

inline json schedule_to_json(const ScheduleParams& p) {
  return {{"omega", p.omega}, {"nu", p.nu},       {"t_max", p.t_max},
          {"t_end", p.t_end}, {"kappa", p.kappa}, {"eta", p.eta}};
}

inline ScheduleParams schedule_from_json(const json& j) {
  ScheduleParams p;
  p.omega = j.at("omega").get<double>();
  p.nu = j.at("nu").get<double>();
  p.t_max = j.at("t_max").get<double>();
  p.t_end = j.at("t_end").get<double>();
  p.kappa = j.at("kappa").get<double>();
  p.eta = j.at("eta").get<double>();
  return p;
}

inline json dataset_to_json(const DatasetSpec& d) {
  return {{"name", d.name},   {"noise", d.noise}, {"components", d.components}, {"radius", d.radius},
          {"scale", d.scale}, {"seed", d.seed},   {"n_train", d.n_train},       {"n_test", d.n_test}};
}

inline DatasetSpec dataset_from_json(const json& j) {
  DatasetSpec d;
  d.name = j.at("name").get<std::string>();
  d.noise = j.at("noise").get<double>();
  d.components = j.at("components").get<int>();
  d.radius = j.at("radius").get<double>();
  d.scale = j.at("scale").get<double>();
  d.seed = j.at("seed").get<std::uint64_t>();
  d.n_train = j.at("n_train").get<int>();
  d.n_test = j.at("n_test").get<int>();
  return d;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  using detail::json;
  json j;
  j["format"] = "vpfb-checkpoint";
  j["version"] = kCheckpointVersion;
  j["arch"] = detail::arch_to_json(ck.model.arch());
  j["model_seed"] = ck.model.seed();
  j["params"] = detail::to_json_vector(ck.model.params());
  j["schedule"] = detail::schedule_to_json(ck.schedule);
  j["dataset"] = detail::dataset_to_json(ck.dataset);
  j["step"] = ck.step;
  j["optimizer"] = {{"steps", ck.optimizer.steps},
                    {"m", detail::to_json_vector(ck.optimizer.m)},
                    {"v", detail::to_json_vector(ck.optimizer.v)}};
  j["best_metric"] = std::isfinite(ck.best_metric) ? json(ck.best_metric) : json(nullptr);
  j["best_step"] = ck.best_step;

  const auto parent = path.parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
    if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
  }
  // Write to a temporary file first so a crash never leaves a truncated checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << j.dump() << '\n';
    if (!out) throw IoError("write failed on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  using detail::json;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "vpfb-checkpoint") throw IoError("not a checkpoint: " + path.string());
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
    }
    Checkpoint ck;
    ck.model = EnergyModel(detail::arch_from_json(j.at("arch")), detail::vector_from_json(j.at("params")),
                           j.at("model_seed").get<std::uint64_t>());
    ck.schedule = detail::schedule_from_json(j.at("schedule"));
    ck.schedule.validate();
    ck.dataset = detail::dataset_from_json(j.at("dataset"));
    ck.step = j.at("step").get<long>();
    const json& o = j.at("optimizer");
    ck.optimizer.steps = o.at("steps").get<long>();
    ck.optimizer.m = detail::vector_from_json(o.at("m"));
    ck.optimizer.v = detail::vector_from_json(o.at("v"));
    const json& bm = j.at("best_metric");
    ck.best_metric = bm.is_null() ? std::numeric_limits<double>::infinity() : bm.get<double>();
    ck.best_step = j.at("best_step").get<long>();
    return ck;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace vpfb

#endif  // VPFB_CHECKPOINT_HPP
