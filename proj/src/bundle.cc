/*
 * Copyright 2026 The mpd Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mpd/bundle.h"

#include "mpd/error.h"

namespace mpd {

using nlohmann::json;

namespace {

constexpr std::pair<ModelKind, std::string_view> kKindNames[] = {
    {ModelKind::kMpd, "mpd"},
    {ModelKind::kWsdBaseline, "wsd_baseline"},
    {ModelKind::kEwiser, "ewiser"},
    {ModelKind::kSmdBaseline, "smd_baseline"},
    {ModelKind::kMelbert, "melbert"},
    {ModelKind::kCombined, "combined"},
};

json ArchJson(ArchConfig a) { return {{"layers", a.layers}, {"hidden", a.hidden}}; }

ArchConfig ArchFromJson(const json& j) {
  return {j.at("layers").get<std::size_t>(), j.at("hidden").get<std::size_t>()};
}

}  // namespace

std::string_view ModelKindName(ModelKind kind) {
  for (auto [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

ModelKind ParseModelKind(std::string_view name) {
  for (auto [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

json ModelSpec::ToJson() const {
  return {{"kind", ModelKindName(kind)},
          {"wsd", wsd == WsdKind::kBaseline ? "baseline" : "ewiser"},
          {"k", k},
          {"theta", ArchJson(theta)},
          {"phi", ArchJson(phi)},
          {"dropout", dropout}};
}

ModelSpec ModelSpec::FromJson(const json& j) {
  ModelSpec s;
  try {
    s.kind = ParseModelKind(j.at("kind").get<std::string>());
    const auto wsd = j.value("wsd", std::string("baseline"));
    if (wsd != "baseline" && wsd != "ewiser") throw ConfigError("unknown WSD kind '" + wsd + "'");
    s.wsd = wsd == "ewiser" ? WsdKind::kEwiser : WsdKind::kBaseline;
    s.k = j.at("k").get<std::size_t>();
    s.theta = ArchFromJson(j.at("theta"));
    s.phi = ArchFromJson(j.at("phi"));
    s.dropout = j.at("dropout").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid model spec: ") + e.what());
  }
  return s;
}

std::vector<ParamRef> ModelBundle::Params(ParamGroup group) {
  std::vector<ParamRef> out;
  switch (group) {
    case ParamGroup::kTheta:
      if (mpd) mpd->AppendParams("theta", out);
      break;
    case ParamGroup::kPhi:
      if (wsd) wsd->AppendParams("phi", out);
      break;
    case ParamGroup::kPsi:
      if (smd) smd->AppendParams("psi", out);
      break;
  }
  return out;
}

std::vector<ParamRef> ModelBundle::AllParams() {
  std::vector<ParamRef> out = Params(ParamGroup::kTheta);
  for (auto group : {ParamGroup::kPhi, ParamGroup::kPsi}) {
    auto more = Params(group);
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

ModelBundle BuildBundle(const ModelSpec& spec, const EmbeddingStore& store,
                        const Lexicon& lexicon, CounterRng rng) {
  if (spec.k != store.dimension()) {
    throw DimensionError("model dimension k=" + std::to_string(spec.k) +
                         " does not match store dimension k=" + std::to_string(store.dimension()));
  }
  ModelBundle b;
  b.spec = spec;
  const std::size_t k = spec.k;
  auto make_wsd = [&](WsdKind kind) {
    return kind == WsdKind::kBaseline
               ? MakeWsdBaseline(k, lexicon, spec.phi, spec.dropout, rng.Split("phi"))
               : MakeEwiser(store, lexicon, spec.phi, spec.dropout, rng.Split("phi"));
  };
  switch (spec.kind) {
    case ModelKind::kMpd:
      b.mpd = MakeMpdModel(k, spec.theta, spec.dropout, rng.Split("theta"));
      break;
    case ModelKind::kCombined:
      b.mpd = MakeMpdModel(k, spec.theta, spec.dropout, rng.Split("theta"));
      b.wsd = make_wsd(spec.wsd);
      break;
    case ModelKind::kWsdBaseline:
      b.wsd = make_wsd(WsdKind::kBaseline);
      break;
    case ModelKind::kEwiser:
      b.wsd = make_wsd(WsdKind::kEwiser);
      break;
    case ModelKind::kSmdBaseline:
      b.smd = MakeSmdBaseline(k, spec.phi, spec.dropout, rng.Split("psi"));
      break;
    case ModelKind::kMelbert:
      b.smd = MakeMelbert(k, spec.phi, spec.theta, spec.dropout, rng.Split("psi"));
      break;
  }
  return b;
}

Checkpoint BundleToCheckpoint(ModelBundle& bundle) {
  Checkpoint c;
  c.model_kind = std::string(ModelKindName(bundle.spec.kind));
  c.config["model"] = bundle.spec.ToJson();
  for (const ParamRef& p : bundle.AllParams()) c.arrays.push_back({p.name, *p.value});
  return c;
}

ModelBundle BundleFromCheckpoint(const Checkpoint& checkpoint, const EmbeddingStore& store,
                                 const Lexicon& lexicon) {
  if (!checkpoint.config.contains("model")) {
    throw DataError("checkpoint has no model spec");
  }
  ModelSpec spec = ModelSpec::FromJson(checkpoint.config.at("model"));
  if (spec.k != store.dimension()) {
    throw DimensionError("checkpoint dimension k=" + std::to_string(spec.k) +
                         " does not match store dimension k=" + std::to_string(store.dimension()));
  }
  ModelBundle b = BuildBundle(spec, store, lexicon, CounterRng(0));
  for (const ParamRef& p : b.AllParams()) {
    const Matrix* saved = checkpoint.Find(p.name);
    if (saved == nullptr) throw DataError("checkpoint lacks parameter '" + p.name + "'");
    if (!saved->SameShape(*p.value)) {
      throw DataError("checkpoint parameter '" + p.name + "' has shape " + saved->ShapeString() +
                      ", model expects " + p.value->ShapeString() +
                      " (lexicon differs from the one used in training?)");
    }
    *p.value = *saved;
  }
  return b;
}

}  // namespace mpd
