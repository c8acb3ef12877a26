#include "fer/config.hpp"

#include "fer/digest.hpp"
#include "fer/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace fer {

std::string_view backend_kind_name(BackendKind k) {
  return k == BackendKind::Reference ? "reference" : "external-adapter";
}

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "reference") return BackendKind::Reference;
  if (s == "external-adapter") return BackendKind::ExternalAdapter;
  throw ConfigError("unknown backend '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (num_classes < 2 || num_classes > kNumEmotions) throw ConfigError("num_classes must lie in 2..7");
  if (phases.empty()) throw ConfigError("at least one phase is required");
  for (const auto& p : phases) {
    if (p.epochs < 1) throw ConfigError("phase '" + p.name + "' must run at least one epoch");
    p.optimizer.validate();
  }
  loss.validate();
  if (loss.num_classes != num_classes) throw ConfigError("loss.num_classes must equal num_classes");
  augment.validate();
  callbacks.validate();
  if (backend.feature_side < 1) throw ConfigError("backend.feature_side must be >= 1");
  if (!(backend.dropout >= 0.0 && backend.dropout < 1.0)) throw ConfigError("backend.dropout must lie in [0, 1)");
  if (backend.input_side < 1) throw ConfigError("backend.input_side must be >= 1");
  if (data.workers < 1) throw ConfigError("data.workers must be >= 1");
  if (data.eval_partition == Usage::Training) throw ConfigError("data.eval_partition must be a test partition");
}

namespace {

using ojson = nlohmann::ordered_json;

ojson optim_to_json(const OptimConfig& o) {
  return {{"kind", optimizer_name(o.kind)}, {"learning_rate", o.learning_rate}, {"beta1", o.beta1},
          {"beta2", o.beta2},               {"eps_hat", o.eps_hat},             {"weight_decay", o.weight_decay}};
}

/// Reads keys of one object, rejecting any not consumed.
class ObjectReader {
public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key " + path_ + "." + key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

OptimConfig optim_from_json(const nlohmann::json& j, OptimConfig o, const std::string& path) {
  ObjectReader r(j, path);
  std::string kind(optimizer_name(o.kind));
  r.get("kind", kind);
  o.kind = parse_optimizer(kind);
  r.get("learning_rate", o.learning_rate);
  r.get("beta1", o.beta1);
  r.get("beta2", o.beta2);
  r.get("eps_hat", o.eps_hat);
  r.get("weight_decay", o.weight_decay);
  r.finish();
  return o;
}

} // namespace

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["batch_size"] = c.batch_size;
  j["num_classes"] = c.num_classes;
  j["data"] = {{"csv", c.data.csv},
               {"manifest", c.data.manifest},
               {"train_fraction", c.data.train_fraction.str()},
               {"eval_partition", usage_name(c.data.eval_partition)},
               {"workers", c.data.workers}};
  j["phases"] = ojson::array();
  for (const auto& p : c.phases)
    j["phases"].push_back({{"name", p.name},
                           {"epochs", p.epochs},
                           {"optimizer", optim_to_json(p.optimizer)},
                           {"freeze_policy", freeze_policy_name(p.freeze_policy)}});
  j["loss"] = {{"label_smoothing", c.loss.smoothing},
               {"epsilon", c.loss.epsilon},
               {"class_weighting", c.loss.class_weighting},
               {"weight_cap", c.loss.weight_cap},
               {"normalize_by_weight_sum", c.loss.normalize_by_weight_sum}};
  j["augment"] = {{"enabled", c.augment.enabled},       {"rotation_max", c.augment.rotation_max},
                  {"shift_max", c.augment.shift_max},   {"zoom_max", c.augment.zoom_max},
                  {"shear_max", c.augment.shear_max},   {"hflip_prob", c.augment.hflip_prob}};
  const auto& pl = c.callbacks.plateau;
  const auto& es = c.callbacks.early_stop;
  j["callbacks"] = {{"plateau",
                     {{"enabled", pl.enabled},
                      {"monitor", monitor_name(pl.monitor)},
                      {"factor", pl.factor},
                      {"patience", pl.patience},
                      {"min_delta", pl.min_delta},
                      {"min_lr", pl.min_lr}}},
                    {"early_stopping",
                     {{"enabled", es.enabled},
                      {"monitor", monitor_name(es.monitor)},
                      {"patience", es.patience},
                      {"min_delta", es.min_delta},
                      {"restore_best", es.restore_best}}}};
  j["backend"] = {{"kind", backend_kind_name(c.backend.kind)},
                  {"feature_side", c.backend.feature_side},
                  {"dropout", c.backend.dropout},
                  {"runtime", c.backend.runtime},
                  {"weights_source", c.backend.weights_source},
                  {"feature_dim", c.backend.feature_dim},
                  {"input_side", c.backend.input_side}};
  j["mixed_precision"] = c.mixed_precision;
  j["prior_work"] = c.prior_work;
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  {
    ObjectReader r(j, "config");
    r.get("seed", c.seed);
    r.get("batch_size", c.batch_size);
    r.get("num_classes", c.num_classes);
    c.loss.num_classes = c.num_classes;
    r.get("mixed_precision", c.mixed_precision);
    r.get("prior_work", c.prior_work);

    if (const auto* d = r.child("data")) {
      ObjectReader dr(*d, "config.data");
      dr.get("csv", c.data.csv);
      dr.get("manifest", c.data.manifest);
      std::string fraction = c.data.train_fraction.str();
      dr.get("train_fraction", fraction);
      c.data.train_fraction = Fraction::parse(fraction);
      std::string partition(usage_name(c.data.eval_partition));
      dr.get("eval_partition", partition);
      try {
        c.data.eval_partition = parse_usage(partition);
      } catch (const PartitionError&) {
        throw ConfigError("config.data.eval_partition: unknown partition '" + partition + "'");
      }
      dr.get("workers", c.data.workers);
      dr.finish();
    }

    if (const auto* ph = r.child("phases")) {
      if (!ph->is_array()) throw ConfigError("config.phases must be an array");
      const auto defaults = default_phases();
      c.phases.clear();
      for (std::size_t i = 0; i < ph->size(); ++i) {
        const std::string path = "config.phases[" + std::to_string(i) + "]";
        PhaseConfig p = i < defaults.size() ? defaults[i] : defaults.back();
        ObjectReader pr((*ph)[i], path);
        pr.get("name", p.name);
        pr.get("epochs", p.epochs);
        if (const auto* o = pr.child("optimizer")) p.optimizer = optim_from_json(*o, p.optimizer, path + ".optimizer");
        std::string policy(freeze_policy_name(p.freeze_policy));
        pr.get("freeze_policy", policy);
        p.freeze_policy = parse_freeze_policy(policy);
        pr.finish();
        c.phases.push_back(std::move(p));
      }
    }

    if (const auto* l = r.child("loss")) {
      ObjectReader lr(*l, "config.loss");
      lr.get("label_smoothing", c.loss.smoothing);
      lr.get("epsilon", c.loss.epsilon);
      lr.get("class_weighting", c.loss.class_weighting);
      lr.get("weight_cap", c.loss.weight_cap);
      lr.get("normalize_by_weight_sum", c.loss.normalize_by_weight_sum);
      lr.finish();
    }

    if (const auto* a = r.child("augment")) {
      ObjectReader ar(*a, "config.augment");
      ar.get("enabled", c.augment.enabled);
      ar.get("rotation_max", c.augment.rotation_max);
      ar.get("shift_max", c.augment.shift_max);
      ar.get("zoom_max", c.augment.zoom_max);
      ar.get("shear_max", c.augment.shear_max);
      ar.get("hflip_prob", c.augment.hflip_prob);
      ar.finish();
    }

    if (const auto* cb = r.child("callbacks")) {
      ObjectReader cr(*cb, "config.callbacks");
      if (const auto* p = cr.child("plateau")) {
        ObjectReader pr(*p, "config.callbacks.plateau");
        auto& pl = c.callbacks.plateau;
        pr.get("enabled", pl.enabled);
        std::string m(monitor_name(pl.monitor));
        pr.get("monitor", m);
        pl.monitor = parse_monitor(m);
        pr.get("factor", pl.factor);
        pr.get("patience", pl.patience);
        pr.get("min_delta", pl.min_delta);
        pr.get("min_lr", pl.min_lr);
        pr.finish();
      }
      if (const auto* e = cr.child("early_stopping")) {
        ObjectReader er(*e, "config.callbacks.early_stopping");
        auto& es = c.callbacks.early_stop;
        er.get("enabled", es.enabled);
        std::string m(monitor_name(es.monitor));
        er.get("monitor", m);
        es.monitor = parse_monitor(m);
        er.get("patience", es.patience);
        er.get("min_delta", es.min_delta);
        er.get("restore_best", es.restore_best);
        er.finish();
      }
      cr.finish();
    }

    if (const auto* b = r.child("backend")) {
      ObjectReader br(*b, "config.backend");
      std::string kind(backend_kind_name(c.backend.kind));
      br.get("kind", kind);
      c.backend.kind = parse_backend_kind(kind);
      br.get("feature_side", c.backend.feature_side);
      br.get("dropout", c.backend.dropout);
      br.get("runtime", c.backend.runtime);
      br.get("weights_source", c.backend.weights_source);
      br.get("feature_dim", c.backend.feature_dim);
      br.get("input_side", c.backend.input_side);
      br.finish();
    }
    r.finish();
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c = config_from_json(j);
  const auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(c.data.csv);
  resolve(c.data.manifest);
  resolve(c.prior_work);
  return c;
}

std::string config_digest(const RunConfig& config) { return sha256_hex(config_to_json(config).dump()); }

} // namespace fer
