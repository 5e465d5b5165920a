#include "beliefkit/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include <json.hpp>

#include "beliefkit/maxsat.hpp"
#include "beliefkit/provider.hpp"

namespace beliefkit {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Method m) {
  switch (m) {
    case Method::kSft: return "sft";
    case Method::kLoco: return "loco";
    case Method::kMaxSat: return "maxsat-baseline";
    case Method::kZeroTrain: return "zero-train";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "sft") return Method::kSft;
  if (name == "loco") return Method::kLoco;
  if (name == "maxsat-baseline") return Method::kMaxSat;
  if (name == "zero-train") return Method::kZeroTrain;
  throw ConfigError("unknown method '" + name +
                    "' (expected sft, loco, maxsat-baseline or zero-train)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream).
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kTrainStream = 3;

std::string format_name(DataFormat f) {
  switch (f) {
    case DataFormat::kAuto: return "auto";
    case DataFormat::kCanonical: return "canonical";
    case DataFormat::kBeliefBank: return "beliefbank";
  }
  return "auto";
}

DataFormat parse_format(const std::string& name) {
  if (name == "auto") return DataFormat::kAuto;
  if (name == "canonical") return DataFormat::kCanonical;
  if (name == "beliefbank") return DataFormat::kBeliefBank;
  throw ConfigError("unknown data format '" + name + "'");
}

void reject_unknown(const json& obj, std::initializer_list<const char*> keys,
                    const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

std::string resolve(const std::string& path, const std::string& base) {
  if (path.empty() || base.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(std::string_view text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  // derived_seeds is written into resolved configs for reference and ignored here.
  reject_unknown(doc,
                 {"data", "split", "seed", "derived_seeds", "train", "model", "methods", "out",
                  "jobs"},
                 "config");
  ExperimentConfig c;
  if (auto it = doc.find("data"); it != doc.end()) {
    reject_unknown(*it, {"train_facts", "eval_facts", "constraints", "format"}, "data");
    read(*it, "train_facts", c.train_facts, "data");
    read(*it, "eval_facts", c.eval_facts, "data");
    read(*it, "constraints", c.constraints, "data");
    std::string format = "auto";
    read(*it, "format", format, "data");
    c.format = parse_format(format);
  }
  if (auto it = doc.find("split"); it != doc.end()) {
    reject_unknown(*it, {"mode", "fraction"}, "split");
    read(*it, "mode", c.split, "split");
    read(*it, "fraction", c.fraction, "split");
  }
  read(doc, "seed", c.seed, "config");
  if (auto it = doc.find("train"); it != doc.end()) {
    reject_unknown(*it,
                   {"epochs", "learning_rate", "weight_decay", "batch_size", "objective",
                    "optimizer", "clamp_epsilon", "beta1", "beta2", "adam_epsilon", "sft_weight"},
                   "train");
    auto& t = c.train;
    read(*it, "epochs", t.epochs, "train");
    read(*it, "learning_rate", t.learning_rate, "train");
    read(*it, "weight_decay", t.weight_decay, "train");
    read(*it, "batch_size", t.batch_size, "train");
    read(*it, "clamp_epsilon", t.clamp_epsilon, "train");
    read(*it, "beta1", t.beta1, "train");
    read(*it, "beta2", t.beta2, "train");
    read(*it, "adam_epsilon", t.adam_epsilon, "train");
    read(*it, "sft_weight", t.sft_weight, "train");
    try {
      if (it->contains("objective")) t.objective = parse_objective((*it)["objective"].get<std::string>());
      if (it->contains("optimizer")) t.optimizer = parse_optimizer((*it)["optimizer"].get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("train: ") + e.what());
    }
  }
  if (auto it = doc.find("model"); it != doc.end()) {
    reject_unknown(*it,
                   {"kind", "dim", "parameters", "endpoint", "timeout_seconds", "max_in_flight"},
                   "model");
    read(*it, "kind", c.model.kind, "model");
    read(*it, "dim", c.model.dim, "model");
    read(*it, "parameters", c.model.parameters, "model");
    read(*it, "endpoint", c.model.endpoint, "model");
    read(*it, "timeout_seconds", c.model.timeout_seconds, "model");
    read(*it, "max_in_flight", c.model.max_in_flight, "model");
  }
  if (auto it = doc.find("methods"); it != doc.end()) {
    std::vector<std::string> names;
    read(doc, "methods", names, "config");
    c.methods.clear();
    for (const auto& n : names) c.methods.push_back(parse_method(n));
  }
  read(doc, "out", c.out, "config");
  read(doc, "jobs", c.jobs, "config");

  c.train_facts = resolve(c.train_facts, base_dir);
  c.eval_facts = resolve(c.eval_facts, base_dir);
  c.constraints = resolve(c.constraints, base_dir);
  c.model.parameters = resolve(c.model.parameters, base_dir);
  c.out = resolve(c.out, base_dir);
  return c;
}

std::string ExperimentConfig::to_json() const {
  json methods_json = json::array();
  for (Method m : methods) methods_json.push_back(to_string(m));
  const TrainConfig resolved = [&] {
    TrainConfig t = train;
    t.seed = derive_seed(seed, kTrainStream);
    return t;
  }();
  json doc{
      {"data",
       {{"train_facts", train_facts},
        {"eval_facts", eval_facts},
        {"constraints", constraints},
        {"format", format_name(format)}}},
      {"split", {{"mode", split}, {"fraction", fraction}}},
      {"seed", seed},
      {"derived_seeds",
       {{"split", derive_seed(seed, kSplitStream)},
        {"init", derive_seed(seed, kInitStream)},
        {"train", resolved.seed}}},
      {"train",
       {{"epochs", train.epochs},
        {"learning_rate", train.learning_rate},
        {"weight_decay", train.weight_decay},
        {"batch_size", train.batch_size},
        {"objective", beliefkit::to_string(train.objective)},
        {"optimizer", beliefkit::to_string(train.optimizer)},
        {"clamp_epsilon", train.clamp_epsilon},
        {"beta1", train.beta1},
        {"beta2", train.beta2},
        {"adam_epsilon", train.adam_epsilon},
        {"sft_weight", train.sft_weight}}},
      {"model",
       {{"kind", model.kind},
        {"dim", model.dim},
        {"parameters", model.parameters},
        {"endpoint", model.endpoint},
        {"timeout_seconds", model.timeout_seconds},
        {"max_in_flight", model.max_in_flight}}},
      {"methods", methods_json},
      {"jobs", jobs}};
  return doc.dump(1) + "\n";
}

void ExperimentConfig::validate() const {
  if (train_facts.empty()) throw ConfigError("data.train_facts is required");
  if (constraints.empty()) throw ConfigError("data.constraints is required");
  if (split != "t1" && split != "t1t2") {
    throw ConfigError("split.mode must be t1 or t1t2, got '" + split + "'");
  }
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("split.fraction must be in [0, 1]");
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (model.kind != "tabular" && model.kind != "embedding" && model.kind != "provider") {
    throw ConfigError("model.kind must be tabular, embedding or provider");
  }
  if (model.kind == "embedding" && model.dim < 1) throw ConfigError("model.dim must be >= 1");
  if (model.kind == "provider") {
    if (model.endpoint.empty()) throw ConfigError("model.endpoint is required for a provider");
    if (!(model.timeout_seconds > 0)) throw ConfigError("model.timeout_seconds must be positive");
    if (model.max_in_flight < 1) throw ConfigError("model.max_in_flight must be >= 1");
    for (Method m : methods) {
      if (m == Method::kSft || m == Method::kLoco) {
        throw ConfigError("method " + to_string(m) + " needs a trainable model, not a provider");
      }
    }
  }
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw MissingInput(path);
  return ExperimentConfig::from_json(read_file(path), fs::path(path).parent_path().string());
}

GroundSummary ground_summary(const FactSet& facts, const ConstraintSet& constraints) {
  GroundSummary s;
  const FactSplit split = split_t1_t2(facts, constraints);
  s.antecedent_facts = split.antecedents.size();
  s.consequent_facts = split.consequents.size();
  s.excluded_facts = split.excluded;
  const GroundingResult g = ground_constraints(constraints, facts, true);
  s.grounded = g.constraints.size() + g.skipped.size();
  s.skipped = g.skipped.size();
  return s;
}

namespace {

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw MissingInput(path);
}

std::string subset_label(const ExperimentConfig& c) {
  if (c.split == "t1") return "T1";
  char buf[48];
  std::snprintf(buf, sizeof buf, "T1+T2 %g%%", c.fraction * 100.0);
  return buf;
}

}  // namespace

ExperimentData prepare(const ExperimentConfig& config) {
  require_file(config.train_facts);
  require_file(config.constraints);
  if (!config.eval_facts.empty()) require_file(config.eval_facts);

  ExperimentData d;
  d.train_facts = load_facts(config.train_facts, config.format);
  d.constraints = load_constraints(config.constraints, config.format);
  if (!config.eval_facts.empty()) d.eval_facts = load_facts(config.eval_facts, config.format);

  std::vector<const FactSet*> sets{&d.train_facts};
  if (d.eval_facts) sets.push_back(&*d.eval_facts);
  d.vocabulary = Vocabulary::from(sets, d.constraints);

  const FactSplit split = split_t1_t2(d.train_facts, d.constraints);
  if (config.split == "t1") {
    d.train_set = split.antecedents;
    d.train_report = split;
  } else {
    auto [sample, held_out] = sample_fraction(merge(split.antecedents, split.consequents),
                                              config.fraction, derive_seed(config.seed, kSplitStream));
    d.train_set = std::move(sample);
    d.train_report = split_t1_t2(held_out, d.constraints);
  }
  d.grounded = ground_constraints(d.constraints, d.train_set, true);
  d.train_subjects = d.train_facts.subjects();
  if (d.eval_facts) {
    d.eval_report = split_t1_t2(*d.eval_facts, d.constraints);
    d.eval_subjects = d.eval_facts->subjects();
  }
  d.subset = subset_label(config);
  return d;
}

// ---------------------------------------------------------------------------
// Models

std::string save_model(const BeliefModel& model) {
  const Vocabulary& v = model.vocabulary();
  json doc{{"kind", model.kind()},
           {"subjects", v.subjects().names()},
           {"properties", v.properties().names()}};
  if (const auto* e = dynamic_cast<const EmbeddingBeliefModel*>(&model)) doc["dim"] = e->dim();
  const auto& p = model.parameters();
  doc["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
  return doc.dump() + "\n";
}

std::unique_ptr<BeliefModel> load_model(const std::string& path) {
  require_file(path);
  json doc;
  try {
    doc = json::parse(read_file(path));
    Vocabulary vocab(doc.at("subjects").get<std::vector<std::string>>(),
                     doc.at("properties").get<std::vector<std::string>>());
    const auto kind = doc.at("kind").get<std::string>();
    const auto values = doc.at("parameters").get<std::vector<double>>();
    std::unique_ptr<BeliefModel> model;
    if (kind == "tabular") {
      model = std::make_unique<TabularBeliefModel>(std::move(vocab));
    } else if (kind == "embedding") {
      model = std::make_unique<EmbeddingBeliefModel>(std::move(vocab), doc.at("dim").get<int>());
    } else {
      throw ConfigError(path + ": cannot load a '" + kind + "' model");
    }
    if (static_cast<std::size_t>(model->parameters().size()) != values.size()) {
      throw ConfigError(path + ": parameter count does not match the vocabulary");
    }
    model->parameters() = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                            static_cast<Eigen::Index>(values.size()));
    return model;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": malformed model file: " + e.what());
  }
}

std::unique_ptr<BeliefModel> make_model(const ExperimentConfig& config, const Vocabulary& vocab) {
  const auto& spec = config.model;
  if (!spec.parameters.empty()) {
    auto model = load_model(spec.parameters);
    if (model->kind() != spec.kind) {
      throw ConfigError(spec.parameters + " holds a " + model->kind() + " model, config says " +
                        spec.kind);
    }
    // Queries must resolve against the experiment's vocabulary.
    for (const auto& s : vocab.subjects().names()) {
      for (const auto& p : vocab.properties().names()) {
        if (!model->vocabulary().find(s, p)) {
          throw ConfigError(spec.parameters + ": model does not cover (" + s + ", " + p + ")");
        }
      }
    }
    return model;
  }
  if (spec.kind == "tabular") return std::make_unique<TabularBeliefModel>(vocab);
  if (spec.kind == "embedding") {
    return std::make_unique<EmbeddingBeliefModel>(vocab, spec.dim,
                                                  derive_seed(config.seed, kInitStream));
  }
  ProviderOptions options;
  options.timeout = std::chrono::milliseconds(static_cast<long long>(spec.timeout_seconds * 1000));
  options.max_in_flight = spec.max_in_flight;
  std::unique_ptr<LineTransport> transport;
  try {
    transport = connect_endpoint(spec.endpoint);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  auto client = std::make_shared<ProviderClient>(std::move(transport), options);
  return std::make_unique<ProviderBeliefModel>(vocab, std::move(client));
}

// ---------------------------------------------------------------------------
// Methods

namespace {

// Fetches every belief evaluation will read so the parallel phase only hits
// the cache.
void prefetch_for(const BeliefModel& model, const FactSplit& split,
                  std::span<const std::string> subjects, const ConstraintSet& constraints) {
  const auto* provider = dynamic_cast<const ProviderBeliefModel*>(&model);
  if (provider == nullptr) return;
  const Vocabulary& v = model.vocabulary();
  std::vector<FactIndex> wanted;
  for (const FactSet* fs : {&split.antecedents, &split.consequents}) {
    for (const auto& f : *fs) wanted.push_back(v.index(f.subject, f.property));
  }
  const auto props = constraints.properties();
  for (const auto& s : subjects) {
    for (const auto& p : props) wanted.push_back(v.index(s, p));
  }
  provider->prefetch(wanted);
}

struct Distribution {
  const FactSplit* split;
  std::span<const std::string> subjects;
  const FactSet* facts;  // subjects' known facts, for baseline grounding
};

Report evaluate_plain(const ExperimentConfig& config, const ExperimentData& data,
                      const BeliefModel& model, const Distribution& dist) {
  prefetch_for(model, *dist.split, dist.subjects, data.constraints);
  const ThresholdPredictor predictor(model);
  return evaluate(predictor, *dist.split, dist.subjects, data.constraints, config.jobs);
}

Report evaluate_corrected(const ExperimentConfig& config, const ExperimentData& data,
                          const BeliefModel& model, const Distribution& dist,
                          CorrectionSummary& summary) {
  prefetch_for(model, *dist.split, dist.subjects, data.constraints);
  const GroundingResult g = ground_constraints(data.constraints, *dist.facts, false);
  MaxSatOptions options;
  options.clamp_epsilon = config.train.clamp_epsilon;
  const auto corrections = correct_all(g.constraints, model, options, config.jobs);

  const ThresholdPredictor threshold(model);
  OverridePredictor predictor(threshold);
  for (const auto& sc : corrections) {
    const auto& vars = sc.problem.variables;
    for (int j = 0; j < vars.size(); ++j) {
      predictor.set(sc.problem.subject, vars.name(j),
                    sc.correction.assignment[static_cast<std::size_t>(j)]);
    }
    ++summary.subjects;
    summary.violated += sc.correction.violated;
    if (sc.correction.violated > 0) ++summary.unsatisfiable_subjects;
    summary.exact = summary.exact && sc.correction.exact;
  }
  return evaluate(predictor, *dist.split, dist.subjects, data.constraints, config.jobs);
}

}  // namespace

MethodResult run_method(const ExperimentConfig& config, const ExperimentData& data, Method method) {
  const auto start = std::chrono::steady_clock::now();
  MethodResult r;
  r.method = method;
  r.model = make_model(config, data.vocabulary);

  TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, kTrainStream);
  if (method == Method::kSft) {
    tc.objective = Objective::kSft;
    r.history = train(tc, {&data.train_set, nullptr}, *r.model);
  } else if (method == Method::kLoco) {
    tc.objective = Objective::kLoco;
    r.history = train(tc, {&data.train_set, &data.grounded.constraints}, *r.model);
  }

  const Distribution train_dist{&data.train_report, data.train_subjects, &data.train_facts};
  const Distribution eval_dist{&data.eval_report, data.eval_subjects,
                               data.eval_facts ? &*data.eval_facts : nullptr};
  if (method == Method::kMaxSat) {
    r.train_correction.emplace();
    r.train = evaluate_corrected(config, data, *r.model, train_dist, *r.train_correction);
    if (data.eval_facts) {
      r.eval_correction.emplace();
      r.eval = evaluate_corrected(config, data, *r.model, eval_dist, *r.eval_correction);
    }
  } else {
    r.train = evaluate_plain(config, data, *r.model, train_dist);
    if (data.eval_facts) r.eval = evaluate_plain(config, data, *r.model, eval_dist);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// ---------------------------------------------------------------------------
// Output

namespace {

/// Tracks written files and removes them (and a directory it created) unless
/// committed.
class OutputGuard {
 public:
  explicit OutputGuard(std::string dir) : dir_(std::move(dir)) {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_ = true;
    }
  }
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : written_) fs::remove(f, ec);
    if (created_) fs::remove(dir_, ec);
  }

  void write(const std::string& name, std::string_view contents) {
    const std::string path = (fs::path(dir_) / name).string();
    written_.push_back(path);
    write_file(path, contents);
  }
  void commit() { committed_ = true; }

 private:
  std::string dir_;
  std::vector<std::string> written_;
  bool created_ = false;
  bool committed_ = false;
};

json correction_json(const CorrectionSummary& s) {
  return {{"subjects", s.subjects},
          {"unsatisfiable_subjects", s.unsatisfiable_subjects},
          {"violated_hard_constraints", s.violated},
          {"exact", s.exact}};
}

std::string reports_json(const std::vector<MethodResult>& results, const std::string& distribution,
                         const std::string& subset, bool eval) {
  json methods = json::object();
  for (const auto& r : results) {
    const Report& rep = eval ? *r.eval : r.train;
    json entry = json::parse(report_json(rep));
    const auto& corr = eval ? r.eval_correction : r.train_correction;
    if (corr) entry["correction"] = correction_json(*corr);
    methods[to_string(r.method)] = std::move(entry);
  }
  json doc{{"distribution", distribution}, {"train_subset", subset}, {"methods", methods}};
  return doc.dump(1) + "\n";
}

std::string reports_table(const std::vector<MethodResult>& results, const std::string& subset,
                          bool eval) {
  std::vector<TableRow> rows;
  for (const auto& r : results) rows.push_back({to_string(r.method), subset, eval ? *r.eval : r.train});
  return format_table(rows);
}

}  // namespace

std::vector<MethodResult> run_experiment(const ExperimentConfig& config) {
  config.validate();
  if (config.out.empty()) throw ConfigError("an output directory is required (--out)");
  const ExperimentData data = prepare(config);

  OutputGuard out(config.out);
  out.write("config_resolved.json", config.to_json());
  out.write("grounded.json", write_grounded(data.grounded));

  std::vector<MethodResult> results;
  for (Method m : config.methods) results.push_back(run_method(config, data, m));

  out.write("report_train.json", reports_json(results, "train", data.subset, false));
  out.write("report_train.txt", reports_table(results, data.subset, false));
  if (data.eval_facts) {
    out.write("report_eval.json", reports_json(results, "eval", data.subset, true));
    out.write("report_eval.txt", reports_table(results, data.subset, true));
  }
  out.write("table.txt", reports_table(results, data.subset, data.eval_facts.has_value()));

  json history = json::object();
  for (const auto& r : results) {
    json epochs = json::array();
    for (std::size_t e = 0; e < r.history.epochs.size(); ++e) {
      epochs.push_back({{"epoch", e + 1}, {"mean_loss", r.history.epochs[e].mean_loss}});
    }
    history[to_string(r.method)] = std::move(epochs);
  }
  out.write("history.json", history.dump(1) + "\n");

  for (const auto& r : results) {
    if (!r.model->trainable()) continue;
    out.write("model_" + to_string(r.method) + ".json", save_model(*r.model));
  }
  for (const auto& r : results) {
    const auto* e = dynamic_cast<const EmbeddingBeliefModel*>(r.model.get());
    if (e == nullptr || r.method == Method::kZeroTrain || r.method == Method::kMaxSat) continue;
    const auto& cols = data.eval_facts ? data.eval_subjects : data.train_subjects;
    const auto m = similarity_matrix(*e, data.train_subjects, cols);
    out.write("similarity_" + to_string(r.method) + ".csv",
              similarity_csv(m, data.train_subjects, cols));
  }
  out.commit();
  return results;
}

}  // namespace beliefkit
