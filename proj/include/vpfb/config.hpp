#ifndef VPFB_CONFIG_HPP
#define VPFB_CONFIG_HPP

// Run configuration: an INI file with sections, every key optional with a
// documented default. Unknown sections and keys are rejected. The resolved
// configuration (every key, defaults included) can be written back out and
// parses to the same values.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vpfb/error.hpp"
#include "vpfb/samplers.hpp"
#include "vpfb/trainer.hpp"

namespace vpfb {

struct SampleSettings {
  OdeConfig ode;
  int num_samples = 4096;
  std::uint64_t seed = 1;
  std::vector<int> classes;  // conditional models: classes to compose
};

struct SgldSettings {
  double step_scale = 0.1;  // step size as a multiple of g_inf^2 / 2
  int steps = 5000;
  double lambda = 0.35;
  int chains = 1024;
  std::string init = "prior";  // prior | ode_output
  double divergence_radius = 1e3;
  std::uint64_t seed = 2;
  int record_every = 500;

  /// Absolute step size for a schedule.
  double step_size(const ScheduleParams& p) const { return step_scale * 0.5 * stationary_coefficients(p).g_inf_sq; }
};

struct EvalSettings {
  int grid_resolution = 128;
  double coverage_fraction = 0.1;
  int ood_samples = 4096;
  int histogram_bins = 50;
  std::uint64_t seed = 3;
};

struct RunConfig {
  TrainConfig train;
  SampleSettings sample;
  SgldSettings sgld;
  EvalSettings eval;

  void validate() const {
    train.validate();
    sample.ode.validate();
    detail::require(sample.num_samples >= 1, "sample.num_samples must be >= 1");
    detail::require(sgld.step_scale > 0.0, "sgld.step_scale must be > 0");
    detail::require(sgld.steps >= 1 && sgld.chains >= 1, "sgld.steps and sgld.chains must be >= 1");
    detail::require(sgld.lambda > 0.0, "sgld.lambda must be > 0");
    detail::require(sgld.init == "prior" || sgld.init == "ode_output", "sgld.init must be prior or ode_output");
    detail::require(sgld.divergence_radius > 0.0, "sgld.divergence_radius must be > 0");
    detail::require(sgld.record_every >= 1, "sgld.record_every must be >= 1");
    detail::require(eval.grid_resolution >= 2, "eval.grid_resolution must be >= 2");
    detail::require(eval.coverage_fraction > 0.0 && eval.coverage_fraction <= 1.0,
                    "eval.coverage_fraction must be in (0, 1]");
    detail::require(eval.ood_samples >= 1 && eval.histogram_bins >= 1, "eval sizes must be >= 1");
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* b = text.data();
  const char* e = text.data() + text.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ConfigError("config: " + key + " = '" + text + "' is not a valid number");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config: " + key + " = '" + text + "' is not a boolean");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) continue;
    out.push_back(parse_number<int>(key, item.substr(b, e - b + 1)));
  }
  return out;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct ConfigField {
  std::string section;
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define VPFB_FIELD_D(sec, k, member, doc)                                                                         \
  ConfigField {                                                                                                   \
    sec, k, doc, [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(sec "." k, v); },       \
        [](const RunConfig& c) { return fmt_double(c.member); }                                                   \
  }
#define VPFB_FIELD_I(sec, k, member, doc)                                                                         \
  ConfigField {                                                                                                   \
    sec, k, doc, [](RunConfig& c, const std::string& v) { c.member = parse_number<int>(sec "." k, v); },          \
        [](const RunConfig& c) { return std::to_string(c.member); }                                               \
  }
#define VPFB_FIELD_U(sec, k, member, doc)                                                                         \
  ConfigField {                                                                                                   \
    sec, k, doc, [](RunConfig& c, const std::string& v) { c.member = parse_number<std::uint64_t>(sec "." k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                                               \
  }
#define VPFB_FIELD_B(sec, k, member, doc)                                                                         \
  ConfigField {                                                                                                   \
    sec, k, doc, [](RunConfig& c, const std::string& v) { c.member = parse_bool(sec "." k, v); },                 \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }                               \
  }
#define VPFB_FIELD_S(sec, k, member, doc)                                                                         \
  ConfigField {                                                                                                   \
    sec, k, doc, [](RunConfig& c, const std::string& v) { c.member = v; },                                         \
        [](const RunConfig& c) { return std::string(c.member); }                                                  \
  }

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      VPFB_FIELD_U("run", "seed", train.seed, "batch sampling seed"),
      VPFB_FIELD_U("run", "model_seed", train.model_seed, "parameter initialization seed"),
      ConfigField{"run", "out_dir", "run directory (default: $VPFB_OUTPUT_ROOT/<config name>)",
                  [](RunConfig& c, const std::string& v) { c.train.out_dir = v; },
                  [](const RunConfig& c) { return c.train.out_dir.string(); }},

      VPFB_FIELD_S("dataset", "name", train.dataset.name, "two_moons | gaussian_mixture_k | checkerboard | spirals"),
      VPFB_FIELD_D("dataset", "noise", train.dataset.noise, "Gaussian jitter std"),
      VPFB_FIELD_I("dataset", "components", train.dataset.components, "mixture component count"),
      VPFB_FIELD_D("dataset", "radius", train.dataset.radius, "mixture ring radius"),
      VPFB_FIELD_D("dataset", "scale", train.dataset.scale, "two_moons scale factor"),
      VPFB_FIELD_U("dataset", "seed", train.dataset.seed, "dataset generation seed"),
      VPFB_FIELD_I("dataset", "n_train", train.dataset.n_train, "training split size"),
      VPFB_FIELD_I("dataset", "n_test", train.dataset.n_test, "held-out split size"),

      VPFB_FIELD_D("schedule", "omega", train.schedule.omega, "prior standard deviation"),
      VPFB_FIELD_D("schedule", "nu", train.schedule.nu, "likelihood standard deviation"),
      VPFB_FIELD_D("schedule", "t_max", train.schedule.t_max, "stationarity cutoff"),
      VPFB_FIELD_D("schedule", "t_end", train.schedule.t_end, "upper end of training times"),
      VPFB_FIELD_D("schedule", "kappa", train.schedule.kappa, "innovation weight exponent"),
      VPFB_FIELD_D("schedule", "eta", train.schedule.eta, "Poincare regularization constant"),

      ConfigField{"model", "hidden", "comma-separated hidden widths",
                  [](RunConfig& c, const std::string& v) { c.train.arch.hidden = parse_int_list("model.hidden", v); },
                  [](const RunConfig& c) { return join_ints(c.train.arch.hidden); }},
      ConfigField{"model", "activation", "tanh | softplus | silu | gelu | sin",
                  [](RunConfig& c, const std::string& v) { c.train.arch.activation = ad::activation_from_string(v); },
                  [](const RunConfig& c) { return ad::to_string(c.train.arch.activation); }},
      ConfigField{"model", "time_embedding", "raw | sinusoidal",
                  [](RunConfig& c, const std::string& v) { c.train.arch.time_embedding = time_embedding_from_string(v); },
                  [](const RunConfig& c) { return to_string(c.train.arch.time_embedding); }},
      VPFB_FIELD_I("model", "time_frequencies", train.arch.time_frequencies, "sinusoidal frequency count"),
      VPFB_FIELD_I("model", "num_classes", train.arch.num_classes, "0 for an unconditional model"),
      VPFB_FIELD_I("model", "class_embed_dim", train.arch.class_embed_dim, "learned class embedding width"),

      ConfigField{"loss", "objective", "potential_flow | flow_matching",
                  [](RunConfig& c, const std::string& v) { c.train.loss.objective = objective_from_string(v); },
                  [](const RunConfig& c) { return to_string(c.train.loss.objective); }},
      VPFB_FIELD_B("loss", "covariance", train.loss.use_covariance, "include the covariance term"),
      ConfigField{"loss", "alignment", "cosine | inner_product | none",
                  [](RunConfig& c, const std::string& v) { c.train.loss.alignment = alignment_from_string(v); },
                  [](const RunConfig& c) { return to_string(c.train.loss.alignment); }},
      VPFB_FIELD_B("loss", "poincare", train.loss.use_poincare, "include the Poincare term"),
      VPFB_FIELD_D("loss", "eps_norm", train.loss.eps_norm, "cosine denominator floor"),
      VPFB_FIELD_B("loss", "center_innovation", train.loss.center_innovation, "covary with gamma - gamma_bar"),

      VPFB_FIELD_I("train", "batch_size", train.batch_size, "batch size"),
      VPFB_FIELD_I("train", "iterations", train.iterations, "optimizer steps"),
      VPFB_FIELD_S("train", "optimizer", train.optimizer.kind, "adam | sgd"),
      VPFB_FIELD_D("train", "learning_rate", train.optimizer.learning_rate, "step size"),
      VPFB_FIELD_D("train", "beta1", train.optimizer.beta1, "adam first-moment decay"),
      VPFB_FIELD_D("train", "beta2", train.optimizer.beta2, "adam second-moment decay"),
      VPFB_FIELD_D("train", "epsilon", train.optimizer.epsilon, "adam denominator floor"),
      VPFB_FIELD_D("train", "grad_clip", train.optimizer.grad_clip, "global gradient norm clip, 0 disables"),
      VPFB_FIELD_I("train", "checkpoint_every", train.checkpoint_every, "checkpoint cadence in steps"),
      VPFB_FIELD_I("train", "log_every", train.log_every, "metrics cadence in steps"),
      VPFB_FIELD_I("train", "eval_every", train.eval_every, "held-out evaluation cadence, 0 disables"),
      VPFB_FIELD_I("train", "eval_samples", train.eval_samples, "samples per held-out evaluation"),
      ConfigField{"train", "eval_method", "ODE method for held-out evaluation",
                  [](RunConfig& c, const std::string& v) { c.train.eval_ode.method = ode_method_from_string(v); },
                  [](const RunConfig& c) { return to_string(c.train.eval_ode.method); }},
      VPFB_FIELD_I("train", "eval_steps", train.eval_ode.steps, "fixed steps for held-out evaluation"),
      VPFB_FIELD_D("train", "eval_horizon", train.eval_ode.horizon, "ODE horizon for held-out evaluation"),

      ConfigField{"sampler", "method", "euler | rk4 | adaptive_rk45",
                  [](RunConfig& c, const std::string& v) { c.sample.ode.method = ode_method_from_string(v); },
                  [](const RunConfig& c) { return to_string(c.sample.ode.method); }},
      VPFB_FIELD_D("sampler", "horizon", sample.ode.horizon, "ODE end time"),
      VPFB_FIELD_I("sampler", "steps", sample.ode.steps, "fixed-step count"),
      VPFB_FIELD_D("sampler", "rtol", sample.ode.rtol, "adaptive relative tolerance"),
      VPFB_FIELD_D("sampler", "atol", sample.ode.atol, "adaptive absolute tolerance"),
      VPFB_FIELD_B("sampler", "trajectory", sample.ode.record_trajectory, "record trajectories"),
      VPFB_FIELD_I("sampler", "num_samples", sample.num_samples, "prior draws to transport"),
      VPFB_FIELD_U("sampler", "seed", sample.seed, "prior draw seed"),
      ConfigField{"sampler", "classes", "classes to compose (conditional models)",
                  [](RunConfig& c, const std::string& v) { c.sample.classes = parse_int_list("sampler.classes", v); },
                  [](const RunConfig& c) { return join_ints(c.sample.classes); }},

      VPFB_FIELD_D("sgld", "step_scale", sgld.step_scale, "step size in units of g_inf^2 / 2"),
      VPFB_FIELD_I("sgld", "steps", sgld.steps, "chain length"),
      VPFB_FIELD_D("sgld", "lambda", sgld.lambda, "noise standard deviation scale"),
      VPFB_FIELD_I("sgld", "chains", sgld.chains, "number of chains"),
      VPFB_FIELD_S("sgld", "init", sgld.init, "prior | ode_output"),
      VPFB_FIELD_D("sgld", "divergence_radius", sgld.divergence_radius, "abort when |x| exceeds this"),
      VPFB_FIELD_U("sgld", "seed", sgld.seed, "chain noise seed"),
      VPFB_FIELD_I("sgld", "record_every", sgld.record_every, "sample snapshot cadence"),

      VPFB_FIELD_I("eval", "grid_resolution", eval.grid_resolution, "cells per axis"),
      VPFB_FIELD_D("eval", "coverage_fraction", eval.coverage_fraction, "top cell fraction for coverage"),
      VPFB_FIELD_I("eval", "ood_samples", eval.ood_samples, "points per OOD set"),
      VPFB_FIELD_I("eval", "histogram_bins", eval.histogram_bins, "energy histogram bins"),
      VPFB_FIELD_U("eval", "seed", eval.seed, "evaluation sampling seed"),
  };
  return fields;
}

#undef VPFB_FIELD_D
#undef VPFB_FIELD_I
#undef VPFB_FIELD_U
#undef VPFB_FIELD_B
#undef VPFB_FIELD_S

}  // namespace detail

/// Applies the INI text on top of defaults. Throws ConfigError on unknown
/// sections or keys, malformed values and failed validation.
inline RunConfig parse_config_string(const std::string& text, RunConfig base = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const auto& fields = detail::config_fields();
  for (const auto& [section, body] : tree) {
    const bool known = std::any_of(fields.begin(), fields.end(), [&](const auto& f) { return f.section == section; });
    if (!known) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      auto it = std::find_if(fields.begin(), fields.end(),
                             [&](const detail::ConfigField& f) { return f.section == section && f.key == key; });
      if (it == fields.end()) throw ConfigError("config: unknown key " + section + "." + key);
      it->set(base, value.get_value<std::string>());
    }
  }
  base.validate();
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str());
}

/// Every key with its effective value, grouped by section.
inline std::string resolved_config(const RunConfig& c) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : detail::config_fields()) {
    if (f.section != section) {
      os << (section.empty() ? "" : "\n") << "[" << f.section << "]\n";
      section = f.section;
    }
    os << f.key << " = " << f.get(c) << "\n";
  }
  return os.str();
}

/// Reference listing of keys, defaults and meanings.
inline std::string config_reference() {
  const RunConfig defaults;
  std::ostringstream os;
  for (const auto& f : detail::config_fields()) {
    os << f.section << "." << f.key << " (default: " << f.get(defaults) << ")  " << f.doc << "\n";
  }
  return os.str();
}

}  // namespace vpfb

#endif  // VPFB_CONFIG_HPP
