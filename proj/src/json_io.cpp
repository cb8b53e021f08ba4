#include "esotune/json_io.hpp"

#include <algorithm>
#include <cmath>

#include "esotune/errors.hpp"

namespace esotune {

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::string ranged(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

double as_number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(path, "must be finite");
  return d;
}

template <class Fn>
void rethrow_as_config(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace

void json_require_object(const Json& v, const std::string& path) {
  if (!v.is_object()) throw ConfigError(path, "expected an object");
}

void json_reject_unknown(const Json& obj, const std::string& path, std::initializer_list<const char*> known) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError(join(path, key), "unknown field");
  }
}

double json_number(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) throw ConfigError(join(path, key), "missing required field");
  return as_number(obj.at(key), join(path, key));
}

double json_number_or(const Json& obj, const std::string& key, const std::string& path, double fallback) {
  if (!obj.contains(key)) return fallback;
  return as_number(obj.at(key), join(path, key));
}

std::string json_string_or(const Json& obj, const std::string& key, const std::string& path,
                           const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
  return v.get<std::string>();
}

State2 json_state2(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw ConfigError(path, "expected an array of 2 numbers");
  return {as_number(v[0], ranged(path, 0)), as_number(v[1], ranged(path, 1))};
}

Json to_json(const PlantSpec& spec) {
  Json j;
  j["kind"] = std::string(to_string(spec.kind));
  Json p;
  if (spec.kind == PlantKind::ns) {
    const auto& n = spec.ns_params();
    p = {{"a1", n.a1}, {"a2", n.a2}, {"a3", n.a3}, {"a4", n.a4}, {"a5", n.a5}, {"a6", n.a6}, {"g_hat", n.g_hat}};
  } else {
    const auto& m = spec.m1d_params();
    p = {{"b1", m.b1}, {"b2", m.b2}, {"b3", m.b3}, {"b4", m.b4},
         {"b5", m.b5}, {"b6", m.b6}, {"b7", m.b7}, {"g_hat", m.g_hat}};
  }
  j["params"] = p;
  j["sigma_n"] = spec.noise.sigma_n;
  j["truncation_k"] = spec.noise.truncation_k;
  return j;
}

PlantSpec plant_spec_from_json(const Json& j, const std::string& path) {
  json_require_object(j, path);
  json_reject_unknown(j, path, {"kind", "params", "sigma_n", "truncation_k"});
  if (!j.contains("kind")) throw ConfigError(join(path, "kind"), "missing required field");
  PlantKind kind;
  rethrow_as_config(join(path, "kind"),
                    [&] { kind = plant_kind_from_string(json_string_or(j, "kind", path, "")); });
  const std::string ppath = join(path, "params");
  const Json params = j.contains("params") ? j.at("params") : Json::object();
  json_require_object(params, ppath);

  PlantSpec spec;
  if (kind == PlantKind::ns) {
    json_reject_unknown(params, ppath, {"a1", "a2", "a3", "a4", "a5", "a6", "g_hat"});
    NsParams p;
    p.a1 = json_number(params, "a1", ppath);
    p.a2 = json_number(params, "a2", ppath);
    p.a3 = json_number(params, "a3", ppath);
    p.a4 = json_number(params, "a4", ppath);
    p.a5 = json_number(params, "a5", ppath);
    p.a6 = json_number(params, "a6", ppath);
    p.g_hat = json_number_or(params, "g_hat", ppath, p.g_hat);
    spec = PlantSpec::ns(p);
  } else {
    json_reject_unknown(params, ppath, {"b1", "b2", "b3", "b4", "b5", "b6", "b7", "g_hat"});
    M1dParams p;
    p.b1 = json_number_or(params, "b1", ppath, p.b1);
    p.b2 = json_number_or(params, "b2", ppath, p.b2);
    p.b3 = json_number(params, "b3", ppath);
    p.b4 = json_number(params, "b4", ppath);
    p.b5 = json_number(params, "b5", ppath);
    p.b6 = json_number(params, "b6", ppath);
    p.b7 = json_number(params, "b7", ppath);
    p.g_hat = json_number_or(params, "g_hat", ppath, p.g_hat);
    spec = PlantSpec::m1d(p);
  }
  spec.noise.sigma_n = json_number(j, "sigma_n", path);
  spec.noise.truncation_k = json_number_or(j, "truncation_k", path, spec.noise.truncation_k);
  rethrow_as_config(path, [&] { spec.validate(); });
  return spec;
}

Json to_json(const SimConfig& cfg) {
  Json j;
  j["dt"] = cfg.dt;
  j["horizon"] = cfg.horizon;
  j["record_hz"] = cfg.record_hz;
  j["x0"] = {cfg.x0[0], cfg.x0[1]};
  j["zhat0"] = {cfg.zhat0[0], cfg.zhat0[1], cfg.zhat0[2]};
  j["observer_init"] = cfg.observer_init == ObserverInit::from_output ? "from_output" : "explicit";
  j["feedback"] = cfg.feedback == Feedback::oracle ? "oracle" : "estimated";
  j["k"] = cfg.k;
  j["seed"] = cfg.seed;
  j["substeps"] = cfg.substeps;
  return j;
}

SimConfig sim_config_from_json(const Json& j, const std::string& path, SimConfig cfg) {
  json_require_object(j, path);
  json_reject_unknown(j, path,
                      {"dt", "horizon", "record_hz", "x0", "zhat0", "observer_init", "feedback", "k", "seed",
                       "substeps"});
  cfg.dt = json_number_or(j, "dt", path, cfg.dt);
  cfg.horizon = json_number_or(j, "horizon", path, cfg.horizon);
  cfg.record_hz = json_number_or(j, "record_hz", path, cfg.record_hz);
  if (j.contains("x0")) cfg.x0 = json_state2(j.at("x0"), join(path, "x0"));
  if (j.contains("zhat0")) {
    const auto& z = j.at("zhat0");
    const auto zp = join(path, "zhat0");
    if (!z.is_array() || z.size() != 3) throw ConfigError(zp, "expected an array of 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) cfg.zhat0[i] = as_number(z[i], ranged(zp, i));
  }
  const auto init = json_string_or(j, "observer_init", path, cfg.observer_init == ObserverInit::from_output
                                                                   ? "from_output"
                                                                   : "explicit");
  if (init == "from_output") cfg.observer_init = ObserverInit::from_output;
  else if (init == "explicit") cfg.observer_init = ObserverInit::explicit_state;
  else throw ConfigError(join(path, "observer_init"), "expected \"explicit\" or \"from_output\"");
  const auto fb = json_string_or(j, "feedback", path, cfg.feedback == Feedback::oracle ? "oracle" : "estimated");
  if (fb == "oracle") cfg.feedback = Feedback::oracle;
  else if (fb == "estimated") cfg.feedback = Feedback::estimated;
  else throw ConfigError(join(path, "feedback"), "expected \"estimated\" or \"oracle\"");
  cfg.k = json_number_or(j, "k", path, cfg.k);
  if (j.contains("seed")) {
    const auto& s = j.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      throw ConfigError(join(path, "seed"), "expected a non-negative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  if (j.contains("substeps")) {
    const auto& s = j.at("substeps");
    if (!s.is_number_integer()) throw ConfigError(join(path, "substeps"), "expected an integer");
    cfg.substeps = s.get<int>();
  }
  rethrow_as_config(path, [&] { cfg.validate(); });
  return cfg;
}

Json to_json(const EigenTriple& l) { return Json::array({l.lambda1, l.lambda2, l.lambda3}); }

EigenTriple eigen_triple_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(path, "expected an array of 3 numbers");
  EigenTriple l{as_number(j[0], ranged(path, 0)), as_number(j[1], ranged(path, 1)),
                as_number(j[2], ranged(path, 2))};
  rethrow_as_config(path, [&] { l.validate(); });
  return l;
}

Json to_json(const ObserverGains& g) { return {{"l1", g.l1}, {"l2", g.l2}, {"l3", g.l3}}; }

Json to_json(const CriteriaVector& c) {
  return {{"iae", c.iae}, {"iac", c.iac}, {"iacd", c.iacd}, {"iadee", c.iadee}};
}

CriteriaVector criteria_from_json(const Json& j, const std::string& path) {
  json_require_object(j, path);
  return {json_number(j, "iae", path), json_number(j, "iac", path), json_number(j, "iacd", path),
          json_number(j, "iadee", path)};
}

Json to_json(const CriterionWeights& w) { return Json::array({w.alpha1, w.alpha2, w.alpha3, w.alpha4}); }

CriterionWeights weights_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 4) throw ConfigError(path, "expected an array of 4 weights");
  CriterionWeights w{as_number(j[0], ranged(path, 0)), as_number(j[1], ranged(path, 1)),
                     as_number(j[2], ranged(path, 2)), as_number(j[3], ranged(path, 3))};
  rethrow_as_config(path, [&] { w.validate(); });
  return w;
}

ObserverGains observer_from_json(const Json& j, const std::string& path) {
  json_require_object(j, path);
  json_reject_unknown(j, path, {"omega_o", "lambda"});
  if (j.contains("omega_o") == j.contains("lambda"))
    throw ConfigError(path, "exactly one of \"omega_o\" or \"lambda\" is required");
  if (j.contains("omega_o")) {
    const double w = json_number(j, "omega_o", path);
    if (!(w > 0.0)) throw ConfigError(join(path, "omega_o"), "must be > 0");
    return gains_from_bandwidth(w);
  }
  return gains_from_eigenvalues(eigen_triple_from_json(j.at("lambda"), join(path, "lambda")));
}

}  // namespace esotune
