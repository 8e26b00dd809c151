#include "chartvec/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "chartvec/error.hpp"
#include "chartvec/rng.hpp"
#include "fact_json.hpp"

namespace chartvec {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 10> kDomainNames = {
    "economy",  "sports",     "society", "health",    "politics",
    "industry", "recreation", "food",    "education", "ecology"};

constexpr std::size_t kNoPosition = static_cast<std::size_t>(-1);

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::io, "read error on " + path.string());
  return ss.str();
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse, "syntax error at byte " + std::to_string(e.byte) + ": " +
                                      e.what());
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::parse, what);
}

std::string string_key(const json& j, const char* key, const std::string& path) {
  const auto it = j.find(key);
  require(it != j.end(), path + ": missing required key \"" + key + "\"");
  require(it->is_string(), path + "." + key + ": expected a string");
  return it->get<std::string>();
}

void reject_unknown(const json& j, const std::string& path,
                    std::initializer_list<std::string_view> allowed) {
  for (const auto& item : j.items()) {
    require(std::find(allowed.begin(), allowed.end(), item.key()) != allowed.end(),
            path + ": unknown key \"" + item.key() + "\"");
  }
}

}  // namespace

std::string_view to_string(Domain d) { return kDomainNames.at(static_cast<std::size_t>(d)); }

std::string_view to_string(VisKind k) {
  return k == VisKind::data_story ? "data-story" : "dashboard";
}

Domain parse_domain(std::string_view name) {
  const auto it = std::find(kDomainNames.begin(), kDomainNames.end(), name);
  if (it == kDomainNames.end()) {
    throw Error(ErrorCode::parse, "unknown domain \"" + std::string(name) + "\"");
  }
  return static_cast<Domain>(it - kDomainNames.begin());
}

VisKind parse_vis_kind(std::string_view name) {
  if (name == "data-story") return VisKind::data_story;
  if (name == "dashboard") return VisKind::dashboard;
  throw Error(ErrorCode::parse, "unknown visualization kind \"" + std::string(name) + "\"");
}

std::size_t Corpus::chart_count() const {
  std::size_t n = 0;
  for (const auto& v : visualizations) n += v.charts.size();
  return n;
}

std::map<std::string, std::vector<std::size_t>> Corpus::by_dataset() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < visualizations.size(); ++i) {
    out[visualizations[i].dataset_id].push_back(i);
  }
  return out;
}

std::string CorpusViolation::describe() const {
  std::string out = "visualization " + visualization;
  if (position != kNoPosition) {
    out += " position " + std::to_string(position);
    if (!chart_id.empty()) out += " (" + chart_id + ")";
  }
  return out + ": " + message;
}

CorpusReadResult read_corpus(std::string_view json_text, bool lenient) {
  const json root = parse_json(json_text);
  require(root.is_object(), "corpus: expected a top-level object");
  reject_unknown(root, "corpus", {"visualizations"});
  const auto vis_it = root.find("visualizations");
  require(vis_it != root.end() && vis_it->is_array(),
          "corpus: \"visualizations\" must be an array");

  CorpusReadResult result;
  auto report = [&](CorpusViolation v) {
    if (lenient) {
      result.warnings.push_back("dropped " + v.describe());
    } else {
      result.violations.push_back(std::move(v));
    }
  };

  for (std::size_t vi = 0; vi < vis_it->size(); ++vi) {
    const json& jv = (*vis_it)[vi];
    const std::string path = "visualizations[" + std::to_string(vi) + "]";
    require(jv.is_object(), path + ": expected an object");
    reject_unknown(jv, path, {"id", "dataset_id", "domain", "kind", "charts"});
    MultiViewVis vis;
    vis.id = string_key(jv, "id", path);
    vis.dataset_id = string_key(jv, "dataset_id", path);
    try {
      vis.domain = parse_domain(string_key(jv, "domain", path));
      vis.kind = parse_vis_kind(string_key(jv, "kind", path));
    } catch (const Error& e) {
      throw Error(ErrorCode::parse, path + ": " + e.what());
    }
    const auto charts_it = jv.find("charts");
    require(charts_it != jv.end() && charts_it->is_array(), path + ": \"charts\" must be an array");

    std::set<std::string> local_ids;
    for (std::size_t ci = 0; ci < charts_it->size(); ++ci) {
      const json& jc = (*charts_it)[ci];
      const std::string cpath = path + ".charts[" + std::to_string(ci) + "]";
      require(jc.is_object(), cpath + ": expected an object");
      reject_unknown(jc, cpath, {"chart_id", "fact"});
      ChartEntry entry;
      entry.id = string_key(jc, "chart_id", cpath);
      const auto fact_it = jc.find("fact");
      require(fact_it != jc.end(), cpath + ": missing required key \"fact\"");
      CorpusViolation where{vis.id, ci, entry.id, {}};
      if (entry.id.empty()) {
        where.message = "chart_id must be non-empty";
        report(where);
        continue;
      }
      if (!local_ids.insert(entry.id).second) {
        where.message = "duplicate chart id within the visualization";
        report(where);
        continue;
      }
      try {
        entry.fact = detail::fact_from_json(*fact_it, "fact");
      } catch (const Error& e) {
        where.message = e.what();
        report(where);
        continue;
      }
      const auto fact_report = validate_fact(entry.fact);
      if (!fact_report.ok()) {
        for (const auto& v : fact_report.violations) {
          CorpusViolation cv = where;
          cv.message = v.field + ": " + v.rule;
          report(std::move(cv));
        }
        continue;
      }
      vis.charts.push_back(std::move(entry));
    }
    if (vis.charts.size() < kMinChartsPerVisualization) {
      report({vis.id, kNoPosition, {},
              "minimum chart number is 3, found " + std::to_string(vis.charts.size())});
      if (lenient) continue;
    }
    result.corpus.visualizations.push_back(std::move(vis));
  }

  // Chart ids identify charts corpus-wide; this is never downgraded to a warning.
  std::map<std::string, std::string> owner;
  for (const auto& vis : result.corpus.visualizations) {
    for (std::size_t p = 0; p < vis.charts.size(); ++p) {
      const auto& id = vis.charts[p].id;
      const auto [it, inserted] = owner.emplace(id, vis.id);
      if (!inserted && it->second != vis.id) {
        result.violations.push_back(
            {vis.id, p, id, "chart id is not globally unique (also in " + it->second + ")"});
      }
    }
  }
  std::set<std::string> vis_ids;
  for (const auto& vis : result.corpus.visualizations) {
    if (!vis_ids.insert(vis.id).second) {
      result.violations.push_back({vis.id, kNoPosition, {}, "duplicate visualization id"});
    }
  }
  return result;
}

CorpusReadResult read_corpus_file(const std::filesystem::path& path, bool lenient) {
  return read_corpus(read_file(path), lenient);
}

Corpus load_corpus(const std::filesystem::path& path, bool lenient) {
  auto result = read_corpus_file(path, lenient);
  if (!result.violations.empty()) {
    std::string msg = path.string() + ": " + std::to_string(result.violations.size()) +
                      " violation(s)";
    for (const auto& v : result.violations) msg += "\n  " + v.describe();
    throw Error(ErrorCode::validation, msg);
  }
  return std::move(result.corpus);
}

std::string serialize_corpus(const Corpus& corpus) {
  nlohmann::ordered_json root;
  root["visualizations"] = nlohmann::ordered_json::array();
  for (const auto& vis : corpus.visualizations) {
    nlohmann::ordered_json jv;
    jv["id"] = vis.id;
    jv["dataset_id"] = vis.dataset_id;
    jv["domain"] = to_string(vis.domain);
    jv["kind"] = to_string(vis.kind);
    jv["charts"] = nlohmann::ordered_json::array();
    for (const auto& c : vis.charts) {
      jv["charts"].push_back({{"chart_id", c.id}, {"fact", detail::fact_to_json(c.fact)}});
    }
    root["visualizations"].push_back(std::move(jv));
  }
  return root.dump(2) + "\n";
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double test_fraction,
                                       std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "test fraction must be in (0, 1)");
  }
  const auto groups = corpus.by_dataset();
  if (groups.size() < 2) {
    throw Error(ErrorCode::domain, "corpus too small to split: need at least two datasets, found " +
                                       std::to_string(groups.size()));
  }
  std::vector<std::string> datasets;
  for (const auto& [id, _] : groups) datasets.push_back(id);
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(datasets));
  const auto wanted = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(datasets.size())));
  const std::size_t n_test = std::clamp<std::size_t>(wanted, 1, datasets.size() - 1);
  const std::set<std::string> test_sets(datasets.begin(),
                                        datasets.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::pair<Corpus, Corpus> out;
  for (const auto& vis : corpus.visualizations) {
    (test_sets.contains(vis.dataset_id) ? out.second : out.first).visualizations.push_back(vis);
  }
  return out;
}

SampleSet build_samples(const Corpus& train, std::uint32_t negatives_per_window,
                        NegativePolicy policy, std::uint64_t seed) {
  if (train.visualizations.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");
  if (negatives_per_window == 0) {
    throw Error(ErrorCode::invalid_argument, "negatives per window must be positive");
  }
  const auto& vis = train.visualizations;

  // Candidate negatives for visualization v, as (vis index, chart position).
  auto pool_for = [&](std::size_t v) {
    std::vector<std::pair<std::size_t, std::size_t>> same_dataset;
    std::vector<std::pair<std::size_t, std::size_t>> same_domain;
    std::vector<std::pair<std::size_t, std::size_t>> any;
    for (std::size_t o = 0; o < vis.size(); ++o) {
      if (o == v) continue;
      for (std::size_t p = 0; p < vis[o].charts.size(); ++p) {
        any.emplace_back(o, p);
        if (vis[o].dataset_id == vis[v].dataset_id) same_dataset.emplace_back(o, p);
        if (vis[o].domain == vis[v].domain) same_domain.emplace_back(o, p);
      }
    }
    if (policy == NegativePolicy::any) return any;
    if (!same_dataset.empty()) return same_dataset;
    if (!same_domain.empty()) return same_domain;
    return any;
  };

  Rng rng(seed);
  SampleSet set;
  std::set<std::array<std::string, 4>> seen;
  for (std::size_t v = 0; v < vis.size(); ++v) {
    const auto& charts = vis[v].charts;
    if (charts.size() < 3) continue;
    const auto pool = pool_for(v);
    if (pool.empty()) {
      throw Error(ErrorCode::domain,
                  "no eligible negatives for visualization " + vis[v].id +
                      " (a single-visualization corpus cannot form training samples)");
    }
    for (std::size_t mid = 1; mid + 1 < charts.size(); ++mid) {
      ++set.windows;
      for (std::uint32_t k = 0; k < negatives_per_window; ++k) {
        const auto [ov, op] = pool[rng.below(pool.size())];
        Quadruple q{charts[mid - 1].id, charts[mid].id, charts[mid + 1].id,
                    vis[ov].charts[op].id, vis[v].id, mid};
        if (!seen.insert({q.prev, q.mid, q.next, q.negative}).second) {
          ++set.duplicates_removed;
          continue;
        }
        set.samples.push_back(std::move(q));
      }
    }
  }
  return set;
}

EncodedSamples encode_samples(const SampleSet& set, const Corpus& corpus,
                              const VectorStore& store, const EncoderConfig& config) {
  std::unordered_map<ChartId, const ChartFact*> facts;
  for (const auto& vis : corpus.visualizations) {
    for (const auto& c : vis.charts) facts.emplace(c.id, &c.fact);
  }
  EncodedSamples out;
  auto slot_of = [&](const ChartId& id) {
    if (const auto it = out.slot.find(id); it != out.slot.end()) return it->second;
    const auto f = facts.find(id);
    if (f == facts.end()) throw Error(ErrorCode::not_found, "sample refers to unknown chart " + id);
    out.inputs.push_back(encode_chart(*f->second, store, config));
    out.slot.emplace(id, out.inputs.size() - 1);
    return out.inputs.size() - 1;
  };
  std::vector<std::array<std::size_t, 4>> slots;
  slots.reserve(set.samples.size());
  for (const auto& q : set.samples) {
    slots.push_back({slot_of(q.prev), slot_of(q.mid), slot_of(q.next), slot_of(q.negative)});
  }
  // Pointers are taken only after `inputs` has stopped growing.
  out.samples.reserve(slots.size());
  for (const auto& s : slots) {
    out.samples.push_back(
        {&out.inputs[s[0]], &out.inputs[s[1]], &out.inputs[s[2]], &out.inputs[s[3]]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calliope-style import

namespace {

std::string lower_trim(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c == '_' || c == '-') c = ' ';
  }
  const auto b = s.find_first_not_of(' ');
  const auto e = s.find_last_not_of(' ');
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

ChartType import_chart_type(const std::string& raw) {
  static const std::map<std::string, ChartType> aliases = {
      {"bar chart", ChartType::vertical_bar},    {"column chart", ChartType::vertical_bar},
      {"vertical bar", ChartType::vertical_bar}, {"horizontal bar", ChartType::horizontal_bar},
      {"line", ChartType::line},                 {"area", ChartType::area},
      {"pie", ChartType::pie},                   {"ring chart", ChartType::donut},
      {"donut", ChartType::donut},               {"scatterplot", ChartType::scatter},
      {"scatter", ChartType::scatter},           {"bubble", ChartType::bubble},
      {"tree map", ChartType::treemap},          {"filled map", ChartType::map},
      {"bubble map", ChartType::map},            {"radial bar", ChartType::radial_bar},
      {"progress bar", ChartType::progress},     {"text", ChartType::table},
  };
  const std::string key = lower_trim(raw);
  try {
    return parse_chart_type(key);
  } catch (const Error&) {
  }
  if (const auto it = aliases.find(key); it != aliases.end()) return it->second;
  throw Error(ErrorCode::parse, "unknown chart type \"" + raw + "\"");
}

FieldType import_field_type(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return FieldType::categorical;
  const std::string t = lower_trim(it->get<std::string>());
  if (t == "numeric" || t == "number" || t == "quantitative") return FieldType::numerical;
  if (t == "time" || t == "date") return FieldType::temporal;
  if (t == "geo" || t == "geographic") return FieldType::geographical;
  return parse_field_type(t);
}

std::string text_of(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_number()) {
    std::ostringstream ss;
    ss << j.get<double>();
    return ss.str();
  }
  return {};
}

// Accepts either a single object or a one-element list for breakdown/measure/focus.
const json* first_of(const json& fact, const char* key) {
  const auto it = fact.find(key);
  if (it == fact.end() || it->is_null()) return nullptr;
  if (it->is_array()) return it->empty() ? nullptr : &(*it)[0];
  return it->is_object() ? &*it : nullptr;
}

MetaInfo import_meta(FactType type, const json& fact) {
  const auto it = fact.find("meta");
  if (it == fact.end() || it->is_null()) return meta::None{};
  if (it->is_object()) return detail::fact_from_json(json{{"type_c", "table"},
                                                          {"type_f", "value"},
                                                          {"subspace", json::array()},
                                                          {"meta", *it}},
                                                     "meta")
                           .meta;
  if (type == FactType::rank) {
    meta::Rank r;
    if (it->is_array()) {
      for (const auto& x : *it) {
        if (r.top3.size() < 3) r.top3.push_back(text_of(x));
      }
    } else {
      std::stringstream ss(text_of(*it));
      for (std::string part; std::getline(ss, part, ',') && r.top3.size() < 3;) {
        part = part.substr(part.find_first_not_of(' ') == std::string::npos
                               ? part.size()
                               : part.find_first_not_of(' '));
        if (!part.empty()) r.top3.push_back(part);
      }
    }
    return r;
  }
  const std::string s = lower_trim(text_of(*it));
  if (s.empty()) return meta::None{};
  switch (type) {
    case FactType::trend:
      if (s == "increasing") return meta::Trend{meta::Direction::increasing};
      if (s == "decreasing") return meta::Trend{meta::Direction::decreasing};
      if (s == "no trend") return meta::Trend{meta::Direction::no_trend};
      break;
    case FactType::categorization: {
      long long n = 0;
      if (std::sscanf(s.c_str(), "%lld", &n) == 1 && n > 0) return meta::Categorization{n};
      break;
    }
    case FactType::difference:
      if (s == "lower") return meta::Difference{meta::Relation::lower};
      if (s == "higher") return meta::Difference{meta::Relation::higher};
      break;
    case FactType::extreme:
      if (s == "max" || s == "maximum") return meta::Extreme{meta::ExtremeKind::max};
      if (s == "min" || s == "minimum") return meta::Extreme{meta::ExtremeKind::min};
      break;
    case FactType::association:
      if (s == "positive") return meta::Association{meta::Sign::positive};
      if (s == "negative") return meta::Association{meta::Sign::negative};
      break;
    default:
      break;
  }
  return meta::None{};
}

ChartFact import_fact(const json& jf) {
  ChartFact fact;
  const auto chart_key = jf.contains("chart") ? "chart" : jf.contains("chartType") ? "chartType" : "type_c";
  fact.type_c = import_chart_type(text_of(jf.value(chart_key, json())));
  fact.type_f = parse_fact_type(lower_trim(text_of(jf.value(jf.contains("type") ? "type" : "type_f", json()))));
  if (const auto it = jf.find("subspace"); it != jf.end() && it->is_array()) {
    for (const auto& f : *it) {
      fact.subspace.push_back(
          {text_of(f.value("field", json())), text_of(f.value("value", json())),
           import_field_type(f, f.contains("type") ? "type" : "field_type")});
    }
  }
  if (const json* b = first_of(jf, "breakdown")) {
    fact.breakdown = FieldRef{text_of(b->value("field", json())),
                              import_field_type(*b, b->contains("type") ? "type" : "field_type")};
  }
  if (const json* m = first_of(jf, "measure")) {
    const std::string agg =
        lower_trim(text_of(m->value(m->contains("aggregate") ? "aggregate" : "aggregation", json())));
    Aggregation a = Aggregation::count;
    if (agg == "avg" || agg == "mean") a = Aggregation::average;
    else if (agg == "min") a = Aggregation::minimum;
    else if (agg == "max") a = Aggregation::maximum;
    else if (!agg.empty()) a = parse_aggregation(agg);
    fact.measure = MeasureSpec{text_of(m->value("field", json())), a};
  }
  if (const json* f = first_of(jf, "focus")) {
    fact.focus = Focus{{text_of(f->value("field", json())),
                        import_field_type(*f, f->contains("type") ? "type" : "field_type")},
                       text_of(f->value("value", json()))};
  }
  fact.meta = import_meta(fact.type_f, jf);
  return fact;
}

}  // namespace

Corpus import_calliope(std::string_view json_text) {
  const json root = parse_json(json_text);
  const json* stories = nullptr;
  if (root.is_array()) {
    stories = &root;
  } else if (root.is_object()) {
    for (const char* key : {"stories", "visualizations", "data"}) {
      if (const auto it = root.find(key); it != root.end() && it->is_array()) {
        stories = &*it;
        break;
      }
    }
  }
  require(stories != nullptr, "import: expected a list of stories");

  Corpus corpus;
  for (std::size_t si = 0; si < stories->size(); ++si) {
    const json& js = (*stories)[si];
    const std::string path = "stories[" + std::to_string(si) + "]";
    require(js.is_object(), path + ": expected an object");
    MultiViewVis vis;
    vis.id = js.contains("id") ? text_of(js["id"]) : "story-" + std::to_string(si);
    vis.dataset_id = text_of(js.value(js.contains("dataset_id") ? "dataset_id" : "dataset", json()));
    require(!vis.dataset_id.empty(), path + ": missing dataset id");
    try {
      vis.domain = parse_domain(
          lower_trim(text_of(js.value(js.contains("domain") ? "domain" : "topic", json()))));
      vis.kind = js.contains("kind") ? parse_vis_kind(text_of(js["kind"])) : VisKind::data_story;
    } catch (const Error& e) {
      throw Error(ErrorCode::parse, path + ": " + e.what());
    }
    const char* list_key = js.contains("facts") ? "facts" : "charts";
    const auto list = js.find(list_key);
    require(list != js.end() && list->is_array(), path + ": missing chart list");
    for (std::size_t ci = 0; ci < list->size(); ++ci) {
      const json& jc = (*list)[ci];
      const json& jf = jc.contains("fact") ? jc["fact"] : jc;
      ChartEntry entry;
      entry.id = jc.contains("chart_id")
                     ? text_of(jc["chart_id"])
                     : jc.contains("id") ? text_of(jc["id"]) : vis.id + "/" + std::to_string(ci);
      try {
        entry.fact = import_fact(jf);
      } catch (const Error& e) {
        throw Error(ErrorCode::parse, path + ".charts[" + std::to_string(ci) + "]: " + e.what());
      }
      vis.charts.push_back(std::move(entry));
    }
    corpus.visualizations.push_back(std::move(vis));
  }
  return corpus;
}

Corpus import_calliope_file(const std::filesystem::path& path) {
  return import_calliope(read_file(path));
}

}  // namespace chartvec
