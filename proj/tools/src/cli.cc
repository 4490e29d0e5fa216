#include "cli.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "vqc/assembler.h"
#include "vqc/corpus.h"
#include "vqc/digest.h"
#include "vqc/distill.h"
#include "vqc/error.h"
#include "vqc/evalkit.h"
#include "vqc/grouper.h"
#include "vqc/jsonl.h"
#include "vqc/net.h"
#include "vqc/prefagg.h"
#include "vqc/reviewsvc.h"
#include "vqc/simfilter.h"

#ifndef VQC_VERSION
#define VQC_VERSION "0.0.0"
#endif

namespace vqc::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Opts {
  std::string config;
  bool dry_run = false;

  // inputs
  std::string manifest, descriptions, groups, bench, keys, inputs, pairs_path, mos, store;
  std::string kept, removed, cross_exam;
  std::vector<std::string> subsets;

  // outputs
  std::string out, kept_out, removed_out, stats_out, responses_out, records_out;

  // sampling and filtering
  std::size_t pairs = 0, triples = 0, quads = 0;
  std::uint64_t seed = 0;
  std::string provider = "hash";
  std::optional<double> tau;
  std::optional<double> target_retention;
  std::string embed_cache;

  // model calls
  std::string client;
  std::string judge;
  std::string cache;
  std::size_t max_in_flight = 8;
  int retries = 3;
  std::string aspects;

  // assembly and evaluation
  std::string format = "ordinal_label";
  std::int64_t tokens_per_image = 65;
  std::int64_t context_window = 4096;
  std::string split = "test";
  bool fold_what_how = false;
  double prior_variance = 10.0;

  // review service
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string batch;
  std::size_t k = 250;
};

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char c = s[++i];
      out.push_back(c == 'n' ? '\n' : c == 't' ? '\t' : c);
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');)
    if (!is_blank(part)) out.push_back(trim(part));
  return out;
}

std::vector<NamedSubset> load_subsets(const std::vector<std::string>& specs) {
  std::vector<NamedSubset> out;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
      throw Error(ErrorCode::kInvalidArgument, "subset '" + spec + "' is not NAME=PATH");
    out.emplace_back(spec.substr(0, eq), load_items(spec.substr(eq + 1)));
  }
  return out;
}

std::vector<std::string> subset_paths(const std::vector<std::string>& specs) {
  std::vector<std::string> out;
  for (const auto& spec : specs)
    if (auto eq = spec.find('='); eq != std::string::npos) out.push_back(spec.substr(eq + 1));
  return out;
}

GroupSet to_group_set(std::vector<ImageGroup> groups) {
  GroupSet set;
  set.groups = std::move(groups);
  for (const auto& g : set.groups) {
    if (g.size() == 2) ++set.spec.n_pairs;
    if (g.size() == 3) ++set.spec.n_triples;
    if (g.size() == 4) ++set.spec.n_quads;
  }
  return set;
}

CallOptions call_options(const Opts& o, ResponseCache* cache) {
  if (o.retries < 1) throw Error(ErrorCode::kInvalidArgument, "--retries must be >= 1");
  if (o.max_in_flight < 1) throw Error(ErrorCode::kInvalidArgument, "--max-in-flight must be >= 1");
  CallOptions c;
  c.retry.max_attempts = o.retries;
  c.cache = cache;
  c.max_in_flight = o.max_in_flight;
  return c;
}

// Flag combinations the parser cannot express; reported like parse errors.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error(ErrorCode::kInvalidArgument, message) {}
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required ") + flag);
}

// What a run reads, writes and does; printed for --dry-run and recorded in
// the run manifest otherwise.
struct Plan {
  std::string command;
  std::map<std::string, std::string> options;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<std::string> steps;

  std::string config_digest() const {
    std::vector<std::string> parts;
    for (const auto& [k, v] : options) parts.push_back(k + "=" + v);
    return digest_ordered(parts);
  }

  json to_json(bool with_digests) const {
    json in = json::object();
    for (const auto& p : inputs)
      in[p] = with_digests ? json(digest_file(p)) : json(fs::exists(p) ? "present" : "missing");
    return json{{"tool", "vqc"},
                {"version", VQC_VERSION},
                {"command", command},
                {"options", options},
                {"config_digest", config_digest()},
                {"inputs", std::move(in)},
                {"outputs", outputs},
                {"steps", steps}};
  }

  void write_manifest() const {
    if (outputs.empty()) return;
    write_text(outputs.front() + ".manifest.json", to_json(true).dump(2) + "\n");
  }
};

struct Context {
  Opts& o;
  Plan& plan;
  std::ostream& out;
};

// ---------------------------------------------------------------------------

void run_sample(Context& c) {
  const Opts& o = c.o;
  if (o.manifest.empty() == o.descriptions.empty())
    throw UsageError("give exactly one of --manifest or --descriptions");
  require(o.out, "--out");
  const std::string input = o.manifest.empty() ? o.descriptions : o.manifest;
  c.plan.inputs = {input};
  c.plan.outputs = {o.out};
  c.plan.steps = {"sample " + std::to_string(o.pairs) + " pairs, " + std::to_string(o.triples) +
                  " triples, " + std::to_string(o.quads) + " quads with seed " +
                  std::to_string(o.seed)};
  if (o.dry_run) return;

  std::vector<ImageRef> images;
  if (!o.manifest.empty()) {
    images = load_manifest(o.manifest);
  } else {
    const Corpus corpus = load_descriptions(o.descriptions);
    for (const auto& id : corpus.image_ids()) images.push_back(*corpus.find_image(id));
  }
  const GroupSet set = sample_groups(images, SamplingSpec{o.pairs, o.triples, o.quads, o.seed});
  save_groups(set.groups, o.out);
  c.out << json{{"groups", set.groups.size()},
                {"pairs", set.count_of_size(2)},
                {"triples", set.count_of_size(3)},
                {"quads", set.count_of_size(4)}}
               .dump()
        << "\n";
}

void run_filter(Context& c) {
  const Opts& o = c.o;
  require(o.groups, "--groups");
  require(o.descriptions, "--descriptions");
  require(o.kept_out, "--kept-out");
  if (o.tau.has_value() == o.target_retention.has_value())
    throw UsageError("give exactly one of --tau or --target-retention");
  auto inner = make_provider(o.provider);
  c.plan.inputs = {o.groups, o.descriptions};
  c.plan.outputs = {o.kept_out};
  if (!o.removed_out.empty()) c.plan.outputs.push_back(o.removed_out);
  if (o.target_retention)
    c.plan.steps.push_back("calibrate tau on pair groups for retention " +
                           std::to_string(*o.target_retention) + " using " + inner->name());
  c.plan.steps.push_back("remove groups whose most similar description pair exceeds tau");
  if (o.dry_run) return;

  const Corpus corpus = load_descriptions(o.descriptions);
  const GroupSet groups = to_group_set(load_groups(o.groups));
  CachedEmbeddingProvider provider(inner, CachedEmbeddingProvider::Options{64, 4, o.embed_cache});
  double tau = o.tau.value_or(1.0);
  if (o.target_retention) {
    GroupSet pair_groups;
    for (const auto& g : groups.groups)
      if (g.size() == 2) pair_groups.groups.push_back(g);
    if (pair_groups.groups.empty()) pair_groups = groups;
    tau = calibrate_threshold(pair_groups, corpus, provider, *o.target_retention);
  }
  const FilterReport rep = filter_groups(groups, corpus, provider, tau);
  save_groups(rep.kept.groups, o.kept_out);
  if (!o.removed_out.empty()) save_groups(rep.removed.groups, o.removed_out);
  json by_size = json::object();
  for (const auto& [size, r] : rep.retention_by_size) by_size[std::to_string(size)] = r;
  c.out << json{{"tau", rep.tau},
                {"kept", rep.kept.groups.size()},
                {"removed", rep.removed.groups.size()},
                {"retention_by_size", by_size}}
               .dump()
        << "\n";
}

json stats_json(const DistillStats& s) {
  return json{{"requested", s.requested}, {"parsed_ok", s.parsed_ok}, {"dropped_failed", s.dropped_failed}};
}

void run_merge(Context& c) {
  const Opts& o = c.o;
  require(o.groups, "--groups");
  require(o.descriptions, "--descriptions");
  require(o.client, "--client");
  require(o.out, "--out");
  auto client = make_client(o.client);
  c.plan.inputs = {o.groups, o.descriptions};
  c.plan.outputs = {o.out};
  c.plan.steps = {"merge each group's descriptions into a comparison with " + client->name()};
  if (o.dry_run) return;

  const Corpus corpus = load_descriptions(o.descriptions);
  const auto groups = load_groups(o.groups);
  std::optional<ResponseCache> cache;
  if (!o.cache.empty()) cache.emplace(o.cache);
  const DistillResult res = merge_compare(*client, groups, corpus, call_options(o, cache ? &*cache : nullptr));
  save_items(res.items, o.out);
  c.out << stats_json(res.stats).dump() << "\n";
}

void run_teach(Context& c, bool qa) {
  const Opts& o = c.o;
  require(o.groups, "--groups");
  require(o.client, "--client");
  require(o.out, "--out");
  auto client = make_client(o.client);
  const std::vector<std::string> aspects = o.aspects.empty() ? default_aspects() : split_commas(o.aspects);
  c.plan.inputs = {o.groups};
  c.plan.outputs = {o.out};
  c.plan.steps = {qa ? "generate question-answer records with " + client->name() +
                           ", then convert each to a multiple-choice and a direct item (seed " +
                           std::to_string(o.seed) + ")"
                     : "collect general comparisons from " + client->name()};
  if (o.dry_run) return;

  const auto groups = load_groups(o.groups);
  std::optional<ResponseCache> cache;
  if (!o.cache.empty()) cache.emplace(o.cache);
  const CallOptions opts = call_options(o, cache ? &*cache : nullptr);
  if (!qa) {
    const DistillResult res = teach_general(*client, groups, opts);
    save_items(res.items, o.out);
    c.out << stats_json(res.stats).dump() << "\n";
    return;
  }
  const QABatch batch = generate_qa(*client, groups, aspects, opts);
  std::vector<ComparisonItem> items;
  for (const auto& qa_item : batch.items) {
    McqPair p = qa_to_mcq(qa_item, o.seed);
    items.push_back(std::move(p.mcq));
    items.push_back(std::move(p.direct));
  }
  save_items(items, o.out);
  json j = stats_json(batch.stats);
  j["items"] = items.size();
  c.out << j.dump() << "\n";
}

void run_assemble(Context& c) {
  const Opts& o = c.o;
  if (o.subsets.empty()) throw UsageError("missing required --subset");
  require(o.out, "--out");
  AssembleOptions opts;
  opts.fmt = interleave_format_from_string(o.format);
  opts.tokens_per_image = o.tokens_per_image;
  opts.context_window = o.context_window;
  c.plan.inputs = subset_paths(o.subsets);
  c.plan.outputs = {o.out};
  if (!o.stats_out.empty()) c.plan.outputs.push_back(o.stats_out);
  c.plan.steps = {"render " + std::to_string(o.subsets.size()) + " subsets in the " + o.format +
                  " format and count statistics"};
  if (o.dry_run) return;

  const AssembledDataset ds = assemble(load_subsets(o.subsets), opts);
  write_lines(o.out, ds.lines);
  if (!o.stats_out.empty()) write_text(o.stats_out, ds.stats.to_json() + "\n");
  c.out << ds.stats.to_json() << "\n";
}

void run_stats(Context& c) {
  const Opts& o = c.o;
  if (o.subsets.empty()) throw UsageError("missing required --subset");
  c.plan.inputs = subset_paths(o.subsets);
  if (!o.out.empty()) c.plan.outputs = {o.out};
  c.plan.steps = {"count items per subset and group size"};
  if (o.dry_run) return;

  const DatasetStats stats = dataset_stats(load_subsets(o.subsets));
  if (!o.out.empty()) write_text(o.out, stats.to_json() + "\n");
  c.out << stats.to_json() << "\n";
}

void run_eval_mcq(Context& c) {
  const Opts& o = c.o;
  require(o.bench, "--bench");
  require(o.client, "--client");
  require(o.out, "--out");
  auto client = make_client(o.client);
  const Split split = split_from_string(o.split);
  const InterleaveFormat fmt = interleave_format_from_string(o.format);
  c.plan.inputs = {o.bench};
  if (!o.keys.empty()) c.plan.inputs.push_back(o.keys);
  c.plan.outputs = {o.out};
  if (!o.responses_out.empty()) c.plan.outputs.push_back(o.responses_out);
  c.plan.steps = {"ask " + client->name() + " every " + o.split + " question", "score answers"};
  if (o.dry_run) return;

  const BenchDefinition bench = load_bench(fs::path(o.bench).stem().string(), o.bench, o.keys);
  std::optional<ResponseCache> cache;
  if (!o.cache.empty()) cache.emplace(o.cache);
  const auto responses = run_mcq(*client, bench, fmt, split, call_options(o, cache ? &*cache : nullptr));
  if (!o.responses_out.empty()) {
    std::vector<std::string> lines;
    for (const auto& r : responses)
      lines.push_back(json{{"id", r.record_id}, {"response", r.text ? json(*r.text) : json(nullptr)}}.dump());
    write_lines(o.responses_out, lines);
  }
  const AccuracyReport rep = score_mcq(responses, bench, split, ScoreOptions{o.fold_what_how});
  write_text(o.out, rep.to_json() + "\n");
  c.out << rep.to_json() << "\n";
}

void run_eval_judge(Context& c) {
  const Opts& o = c.o;
  require(o.inputs, "--inputs");
  require(o.judge, "--judge");
  require(o.out, "--out");
  auto judge = make_client(o.judge);
  c.plan.inputs = {o.inputs};
  c.plan.outputs = {o.out};
  if (!o.records_out.empty()) c.plan.outputs.push_back(o.records_out);
  c.plan.steps = {"score each response with " + judge->name() + " on completeness, precision, relevance",
                  "aggregate score frequencies"};
  if (o.dry_run) return;

  std::vector<JudgeInput> inputs;
  for_each_line(o.inputs, [&](std::string_view line, std::size_t n) {
    if (is_blank(line)) return;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw Error(ErrorCode::kParse, o.inputs + ": line " + std::to_string(n) + ": not a JSON object");
    try {
      inputs.push_back(JudgeInput{j.at("question").get<std::string>(), j.at("golden").get<std::string>(),
                                  j.at("response").get<std::string>()});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, o.inputs + ": line " + std::to_string(n) + ": " + e.what());
    }
  });
  std::optional<ResponseCache> cache;
  if (!o.cache.empty()) cache.emplace(o.cache);
  const auto scores = judge_responses(*judge, inputs, call_options(o, cache ? &*cache : nullptr));
  if (!o.records_out.empty()) {
    std::vector<std::string> lines;
    for (const auto& s : scores)
      lines.push_back(json{{"completeness", s.completeness},
                           {"precision", s.precision},
                           {"relevance", s.relevance},
                           {"flagged", s.flagged}}
                          .dump());
    write_lines(o.records_out, lines);
  }
  const JudgeAggregate agg = aggregate_judge(scores);
  write_text(o.out, agg.to_json() + "\n");
  c.out << agg.to_json() << "\n";
}

ImageRef image_from(const json& j) {
  ImageRef ref;
  ref.id = j.at("image_id").get<std::string>();
  ref.source = image_source_from_string(j.value("source", "unknown"));
  if (auto it = j.find("uri"); it != j.end() && !it->is_null()) ref.uri = it->get<std::string>();
  return ref;
}

void run_eval_2afc(Context& c) {
  const Opts& o = c.o;
  require(o.pairs_path, "--pairs");
  require(o.mos, "--mos");
  require(o.client, "--client");
  require(o.out, "--out");
  auto client = make_client(o.client);
  const InterleaveFormat fmt = interleave_format_from_string(o.format);
  c.plan.inputs = {o.pairs_path, o.mos};
  c.plan.outputs = {o.out};
  if (!o.records_out.empty()) c.plan.outputs.push_back(o.records_out);
  c.plan.steps = {"ask " + client->name() + " each pair in both orders",
                  "fit MAP scores per dataset (prior variance " + std::to_string(o.prior_variance) + ")",
                  "correlate with MOS and measure swap consistency"};
  if (o.dry_run) return;

  std::vector<ImagePair> pairs;
  for_each_line(o.pairs_path, [&](std::string_view line, std::size_t n) {
    if (is_blank(line)) return;
    try {
      const json j = json::parse(line);
      pairs.push_back(ImagePair{image_from(j.at("first")), image_from(j.at("second")), j.value("dataset", "")});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, o.pairs_path + ": line " + std::to_string(n) + ": " + e.what());
    }
  });
  std::unordered_map<std::string, double> mos;
  for_each_line(o.mos, [&](std::string_view line, std::size_t n) {
    if (is_blank(line)) return;
    try {
      const json j = json::parse(line);
      mos[j.at("image_id").get<std::string>()] = j.at("mos").get<double>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, o.mos + ": line " + std::to_string(n) + ": " + e.what());
    }
  });
  std::optional<ResponseCache> cache;
  if (!o.cache.empty()) cache.emplace(o.cache);
  const auto records = run_2afc(*client, pairs, fmt, call_options(o, cache ? &*cache : nullptr));
  if (!o.records_out.empty()) {
    std::vector<std::string> lines;
    for (const auto& r : records)
      lines.push_back(json{{"first_id", r.first_id},
                           {"second_id", r.second_id},
                           {"choice", to_string(r.choice)},
                           {"flagged", r.flagged}}
                          .dump());
    write_lines(o.records_out, lines);
  }
  FitOptions fit;
  fit.prior_variance = o.prior_variance;
  const TwoAfcReport rep = evaluate_2afc(pairs, records, mos, fit);
  write_text(o.out, rep.to_json() + "\n");
  c.out << json{{"weighted_rho", rep.weighted_rho},
                {"weighted_kappa", rep.weighted_kappa},
                {"weighted_kappa_raw", rep.weighted_kappa_raw},
                {"flagged", rep.flagged}}
               .dump()
        << "\n";
}

void run_review_serve(Context& c) {
  const Opts& o = c.o;
  require(o.store, "--store");
  const bool make_batch = !o.batch.empty();
  if (make_batch) {
    require(o.kept, "--kept");
    require(o.removed, "--removed");
    require(o.descriptions, "--descriptions");
    c.plan.inputs = {o.kept, o.removed, o.descriptions};
    c.plan.steps.push_back("create batch '" + o.batch + "' with " + std::to_string(o.k) +
                           " tasks per arm (seed " + std::to_string(o.seed) + ") unless it exists");
  }
  if (!o.cross_exam.empty()) {
    c.plan.inputs.push_back(o.cross_exam);
    c.plan.steps.push_back("queue unseen records of " + o.cross_exam + " for cross-examination");
  }
  c.plan.outputs = {(fs::path(o.store) / "serve").string()};
  c.plan.steps.push_back("serve on " + o.host + ":" + std::to_string(o.port));
  if (o.dry_run) return;

  ReviewStore store(o.store);
  if (make_batch) {
    const auto names = store.batch_names();
    if (std::find(names.begin(), names.end(), o.batch) == names.end()) {
      const Corpus corpus = load_descriptions(o.descriptions);
      const auto tasks = create_review_batch(o.batch, payloads_for(load_items(o.kept), corpus),
                                             payloads_for(load_items(o.removed), corpus), o.k, o.seed);
      store.add_batch(o.batch, tasks);
    }
  }
  if (!o.cross_exam.empty()) {
    const BenchDefinition bench = load_bench("cross_exam", o.cross_exam, o.keys);
    std::vector<MCQRecord> fresh;
    for (const auto& r : bench.records)
      if (!store.cross_exam(r.id)) fresh.push_back(r);
    store.add_cross_exam(fresh);
  }
  c.plan.write_manifest();
  ReviewServer server(store, ServeOptions{o.host, o.port});
  const int port = server.start();
  c.out << "listening on " << o.host << ":" << port << std::endl;
  server.wait();
}

// ---------------------------------------------------------------------------

bool is_secret_key(const std::string& key) {
  std::string low = key;
  std::transform(low.begin(), low.end(), low.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (low == "keys") return false;  // answer keys file, not a credential
  for (const char* bad : {"key", "token", "secret", "password"})
    if (low.find(bad) != std::string::npos) return true;
  return false;
}

std::map<std::string, std::string> resolved_options(const CLI::App* app) {
  std::map<std::string, std::string> out;
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config" || name == "dry-run") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->reduced_results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    out[name] = value;
  }
  return out;
}

// Index just past the subcommand tokens ("eval mcq" is two).
std::size_t command_end(const std::vector<std::string>& args) {
  if (args.empty()) return 0;
  if ((args[0] == "eval" || args[0] == "teach") && args.size() > 1 && args[1].rfind("-", 0) != 0) return 2;
  return 1;
}

std::optional<std::string> find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

}  // namespace

std::map<std::string, std::string> parse_config(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kParse, "config line " + std::to_string(n) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::kParse, "config line " + std::to_string(n) + ": empty key");
    if (is_secret_key(key))
      throw Error(ErrorCode::kInvalidArgument, "config line " + std::to_string(n) + ": '" + key +
                                                   "' looks like a secret; credentials come from the environment only");
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

std::unique_ptr<ChatClient> make_client(const std::string& name) {
  if (name == "echo") {
    return std::make_unique<FunctionChatClient>("echo", kMaxPromptImages,
                                                [](const std::string&, const std::vector<Turn>& turns) {
                                                  std::string s;
                                                  for (const auto& t : turns) s += t.text;
                                                  return s;
                                                });
  }
  if (name.rfind("constant:", 0) == 0) {
    const std::string reply = unescape(std::string_view(name).substr(9));
    if (is_blank(reply)) throw Error(ErrorCode::kInvalidArgument, "constant client needs a reply");
    return std::make_unique<ConstantChatClient>("constant", reply);
  }
  if (name.rfind("http:", 0) == 0) {
    HttpChatOptions opts;
    opts.model = name.substr(5);
    opts.url = env_or_empty("VQC_CHAT_URL");
    opts.api_key = env_or_empty("VQC_CHAT_KEY");
    if (opts.model.empty()) throw Error(ErrorCode::kInvalidArgument, "http client needs a model name");
    if (opts.url.empty()) throw Error(ErrorCode::kInvalidArgument, "VQC_CHAT_URL is not set");
    return std::make_unique<HttpChatClient>(std::move(opts));
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown client '" + name + "' (expected echo, constant:<reply> or http:<model>)");
}

std::shared_ptr<EmbeddingProvider> make_provider(const std::string& name) {
  if (name == "hash") return std::make_shared<HashingEmbeddingProvider>();
  if (name.rfind("hash:", 0) == 0) {
    std::size_t dim = 0;
    try {
      dim = std::stoul(name.substr(5));
    } catch (const std::exception&) {
    }
    if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "bad dimension in provider '" + name + "'");
    return std::make_shared<HashingEmbeddingProvider>(dim);
  }
  if (name.rfind("http:", 0) == 0) {
    HttpEmbeddingOptions opts;
    opts.model = name.substr(5);
    opts.url = env_or_empty("VQC_EMBED_URL");
    opts.api_key = env_or_empty("VQC_EMBED_KEY");
    if (opts.url.empty()) throw Error(ErrorCode::kInvalidArgument, "VQC_EMBED_URL is not set");
    return std::make_shared<HttpEmbeddingProvider>(std::move(opts));
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown provider '" + name + "' (expected hash, hash:<dim> or http:<model>)");
}

int dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Opts o;
  CLI::App app{"Build visual quality comparison datasets and evaluate chat models on them.", "vqc"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", VQC_VERSION);

  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "flat key=value file; flags override it");
    s->add_flag("--dry-run", o.dry_run, "print the resolved plan; no files written, no network");
  };
  auto calls = [&](CLI::App* s) {
    s->add_option("--cache", o.cache, "response cache file (jsonl)");
    s->add_option("--max-in-flight", o.max_in_flight, "concurrent requests");
    s->add_option("--retries", o.retries, "attempts per request");
  };

  auto* sample = app.add_subcommand("sample", "draw image groups of sizes 2, 3 and 4");
  common(sample);
  sample->add_option("--manifest", o.manifest, "image manifest (jsonl)");
  sample->add_option("--descriptions", o.descriptions, "description file; its images are sampled");
  sample->add_option("--pairs", o.pairs);
  sample->add_option("--triples", o.triples);
  sample->add_option("--quads", o.quads);
  sample->add_option("--seed", o.seed);
  sample->add_option("--out", o.out, "groups file");

  auto* filter = app.add_subcommand("filter", "drop groups whose descriptions are too similar");
  common(filter);
  filter->add_option("--groups", o.groups);
  filter->add_option("--descriptions", o.descriptions);
  filter->add_option("--provider", o.provider, "hash, hash:<dim> or http:<model>");
  filter->add_option("--tau", o.tau, "similarity threshold in [-1, 1]");
  filter->add_option("--target-retention", o.target_retention, "calibrate tau on pairs to keep this fraction");
  filter->add_option("--embed-cache", o.embed_cache, "embedding cache file (jsonl)");
  filter->add_option("--kept-out", o.kept_out);
  filter->add_option("--removed-out", o.removed_out);

  auto* merge = app.add_subcommand("merge", "merge per-image descriptions into comparisons");
  common(merge);
  calls(merge);
  merge->add_option("--groups", o.groups);
  merge->add_option("--descriptions", o.descriptions);
  merge->add_option("--client", o.client);
  merge->add_option("--out", o.out, "items file");

  auto* teach = app.add_subcommand("teach", "collect comparisons from a teacher model");
  teach->require_subcommand(1);
  auto* teach_general_cmd = teach->add_subcommand("general", "open-ended comparisons");
  auto* teach_qa_cmd = teach->add_subcommand("qa", "question-answer pairs and their multiple-choice forms");
  for (auto* s : {teach_general_cmd, teach_qa_cmd}) {
    common(s);
    calls(s);
    s->add_option("--groups", o.groups);
    s->add_option("--client", o.client);
    s->add_option("--out", o.out, "items file");
  }
  teach_qa_cmd->add_option("--aspects", o.aspects, "comma-separated aspect list");
  teach_qa_cmd->add_option("--seed", o.seed, "option-shuffle seed");

  auto* assemble_cmd = app.add_subcommand("assemble", "render items into interleaved training records");
  common(assemble_cmd);
  assemble_cmd->add_option("--subset", o.subsets, "NAME=ITEMS_PATH, repeatable")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  assemble_cmd->add_option("--format", o.format, "pile, special_tokens, generic_label or ordinal_label");
  assemble_cmd->add_option("--tokens-per-image", o.tokens_per_image);
  assemble_cmd->add_option("--context-window", o.context_window);
  assemble_cmd->add_option("--out", o.out, "training file (jsonl)");
  assemble_cmd->add_option("--stats-out", o.stats_out);

  auto* stats = app.add_subcommand("stats", "count items per subset and group size");
  common(stats);
  stats->add_option("--subset", o.subsets, "NAME=ITEMS_PATH, repeatable")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  stats->add_option("--out", o.out);

  auto* eval = app.add_subcommand("eval", "evaluate a chat model");
  eval->require_subcommand(1);
  auto* mcq = eval->add_subcommand("mcq", "multiple-choice accuracy with breakdowns");
  common(mcq);
  calls(mcq);
  mcq->add_option("--bench", o.bench);
  mcq->add_option("--keys", o.keys, "answer keys (jsonl)");
  mcq->add_option("--split", o.split, "dev or test");
  mcq->add_option("--client", o.client);
  mcq->add_option("--format", o.format);
  mcq->add_flag("--fold-what-how", o.fold_what_how, "report what/how questions under others");
  mcq->add_option("--responses-out", o.responses_out);
  mcq->add_option("--out", o.out, "report (json)");
  auto* judge = eval->add_subcommand("judge", "judge-scored open-ended answers");
  common(judge);
  calls(judge);
  judge->add_option("--inputs", o.inputs, "jsonl of {question, golden, response}");
  judge->add_option("--judge", o.judge, "judge client");
  judge->add_option("--records-out", o.records_out);
  judge->add_option("--out", o.out, "report (json)");
  auto* afc = eval->add_subcommand("2afc", "forced-choice preferences against MOS");
  common(afc);
  calls(afc);
  afc->add_option("--pairs", o.pairs_path, "jsonl of {first, second, dataset}");
  afc->add_option("--mos", o.mos, "jsonl of {image_id, mos}");
  afc->add_option("--client", o.client);
  afc->add_option("--format", o.format);
  afc->add_option("--prior-variance", o.prior_variance);
  afc->add_option("--records-out", o.records_out);
  afc->add_option("--out", o.out, "report (json)");

  auto* serve = app.add_subcommand("review-serve", "serve blinded spot checks and cross-examination");
  common(serve);
  serve->add_option("--store", o.store, "state directory");
  serve->add_option("--host", o.host);
  serve->add_option("--port", o.port);
  serve->add_option("--batch", o.batch, "create this batch if missing");
  serve->add_option("--kept", o.kept, "items that passed the filter");
  serve->add_option("--removed", o.removed, "items from removed groups");
  serve->add_option("--descriptions", o.descriptions);
  serve->add_option("--k", o.k, "tasks per arm");
  serve->add_option("--seed", o.seed);
  serve->add_option("--cross-exam", o.cross_exam, "bench file to queue for cross-examination");
  serve->add_option("--keys", o.keys);

  std::vector<std::string> args = raw_args;
  try {
    // Config values go in front of the user's flags; TakeLast lets flags win.
    if (auto path = find_config_path(args)) {
      const auto cfg = parse_config(read_text(*path));
      const std::size_t at = command_end(args);
      std::vector<std::string> injected;
      CLI::App* target = &app;
      for (std::size_t i = 0; i < at; ++i) target = target->get_subcommand_no_throw(args[i]);
      for (const auto& [key, value] : cfg) {
        bool known = false;
        for (CLI::App* s : {sample, filter, merge, teach_general_cmd, teach_qa_cmd, assemble_cmd, stats, mcq,
                            judge, afc, serve})
          known = known || s->get_option_no_throw("--" + key) != nullptr;
        if (!known || key == "config") throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
        if (target && target->get_option_no_throw("--" + key)) injected.push_back("--" + key + "=" + value);
      }
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), injected.begin(), injected.end());
    }
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << VQC_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    const CLI::App* leaf = &app;
    while (!leaf->get_subcommands().empty()) leaf = leaf->get_subcommands().front();
    err << leaf->help();
    return 2;
  }

  const CLI::App* leaf = &app;
  std::string command;
  while (!leaf->get_subcommands().empty()) {
    leaf = leaf->get_subcommands().front();
    command += (command.empty() ? "" : " ") + leaf->get_name();
  }

  Plan plan;
  plan.command = command;
  plan.options = resolved_options(leaf);
  Context ctx{o, plan, out};
  try {
    if (leaf == sample) run_sample(ctx);
    else if (leaf == filter) run_filter(ctx);
    else if (leaf == merge) run_merge(ctx);
    else if (leaf == teach_general_cmd) run_teach(ctx, false);
    else if (leaf == teach_qa_cmd) run_teach(ctx, true);
    else if (leaf == assemble_cmd) run_assemble(ctx);
    else if (leaf == stats) run_stats(ctx);
    else if (leaf == mcq) run_eval_mcq(ctx);
    else if (leaf == judge) run_eval_judge(ctx);
    else if (leaf == afc) run_eval_2afc(ctx);
    else if (leaf == serve) run_review_serve(ctx);

    if (o.dry_run) {
      json j = plan.to_json(false);
      j["dry_run"] = true;
      out << j.dump(2) << "\n";
    } else if (leaf != serve) {
      plan.write_manifest();
    }
  } catch (const UsageError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n" << leaf->help();
    return 2;
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}

}  // namespace vqc::cli
