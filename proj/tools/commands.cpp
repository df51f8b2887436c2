#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <set>
#include <unordered_map>

#include "io_util.hpp"
#include "miaforge/archive.hpp"
#include "miaforge/baselines.hpp"
#include "miaforge/benchgen.hpp"
#include "miaforge/emmia.hpp"
#include "miaforge/error.hpp"
#include "miaforge/metrics.hpp"
#include "miaforge/score_io.hpp"
#include "miaforge/subprocess_provider.hpp"
#include "miaforge/synth.hpp"
#include "run_manifest.hpp"

namespace miaforge::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kLabelStrategies = {"randm", "randnm", "toppref"};

PrefixStrategy parse_strategy(const std::string& s) {
  if (s == "rand") return PrefixStrategy::rand;
  if (s == "randm") return PrefixStrategy::rand_member;
  if (s == "randnm") return PrefixStrategy::rand_non_member;
  if (s == "toppref") return PrefixStrategy::top_pref;
  throw ValidationError("unknown prefix strategy '" + s + "'");
}

PrefixScoring parse_scoring(const std::string& s) {
  if (s == "auc") return PrefixScoring::auc_pseudo;
  if (s == "rankdiff") return PrefixScoring::neg_rank_diff;
  if (s == "kendall") return PrefixScoring::kendall;
  if (s == "spearman") return PrefixScoring::spearman;
  throw ValidationError("unknown prefix scoring '" + s + "'");
}

std::unique_ptr<LlProvider> open_provider(const std::string& kind, const LLArchive& archive,
                                          const fs::path& archive_dir,
                                          const std::string& sim_truth) {
  if (kind == "none") return nullptr;
  if (kind == "sim") {
    const auto path = sim_truth.empty() ? archive_dir / "sim_truth.json" : fs::path(sim_truth);
    if (!fs::exists(path)) throw ValidationError("simulator truth not found at " + path.string());
    return std::make_unique<SimProvider>(archive, load_sim_truth(path));
  }
  if (kind.rfind("cmd:", 0) == 0) return std::make_unique<SubprocessProvider>(kind.substr(4));
  throw ValidationError("unknown provider '" + kind + "' (expected none, sim or cmd:<command>)");
}

nlohmann::json attack_config(const AttackOptions& o) {
  nlohmann::json c;
  c["method"] = o.method;
  c["prefix_strategy"] = o.prefix_strategy;
  c["n"] = o.n;
  c["mode"] = o.mode;
  c["prefix_ids"] = o.prefix_ids;
  c["k_percent"] = o.k_percent;
  c["flip"] = o.flip;
  c["seed"] = o.seed;
  c["provider"] = o.provider;
  if (o.method == "em-mia") {
    c["em"] = {{"init", o.init},       {"scoring", o.scoring},
               {"tau", o.tau},         {"update", o.update},
               {"topk", o.topk},       {"concat_order", o.concat_order},
               {"iters", o.iters},     {"rho", o.rho},
               {"cycle_stop", !o.no_cycle_stop}, {"exclude_self", !o.include_self}};
  }
  return c;
}

void emit_json(const std::string& json, const std::string& path) {
  if (path.empty()) {
    std::cout << json << "\n";
  } else {
    detail::write_file(path, json + "\n");
  }
}

}  // namespace

int run_attack(const AttackOptions& o, const std::vector<std::string>& argv) {
  const fs::path archive_dir(o.archive);
  const auto archive = load_archive(archive_dir);

  // rand/randm/randnm/toppref are shorthands for recall with that strategy
  std::string strategy = o.prefix_strategy;
  std::string method = o.method;
  if (method == "rand" || kLabelStrategies.contains(method)) {
    strategy = method;
    method = "recall";
  }
  const bool uses_labels =
      method == "recall" && o.prefix_ids.empty() && kLabelStrategies.contains(strategy);
  std::optional<Labels> labels;
  if (uses_labels) {
    if (!archive.fully_labeled()) {
      throw MethodUnavailableError(strategy + " uses ground-truth labels, but " + o.archive +
                                   " has unlabeled documents");
    }
    labels = archive.oracle_labels();
  }

  const auto provider = open_provider(o.provider, archive, archive_dir, o.sim_truth);
  const ScoringContext ctx{archive, provider.get()};

  ScoreVector scores;
  std::optional<EmResult> em;
  std::vector<std::string> prefixes;
  if (method == "loss") {
    scores = score_loss(archive);
  } else if (method == "ref") {
    scores = score_ref(archive);
  } else if (method == "zlib") {
    scores = score_zlib(archive);
  } else if (method == "mink") {
    scores = score_mink(archive, o.k_percent);
  } else if (method == "minkpp") {
    scores = score_minkpp(archive, o.k_percent);
  } else if (method == "avg") {
    scores = score_avg(archive);
  } else if (method == "avgp") {
    scores = score_avgp(archive);
  } else if (method == "recall") {
    MultiPrefixMode mode;
    if (o.mode == "concat") {
      mode = MultiPrefixMode::concat;
    } else if (o.mode == "ensemble") {
      mode = MultiPrefixMode::ensemble;
    } else if (o.mode == "auto") {
      mode = ctx.dynamic_prefix() ? MultiPrefixMode::concat : MultiPrefixMode::ensemble;
    } else {
      throw ValidationError("unknown mode '" + o.mode + "'");
    }
    if (!o.prefix_ids.empty()) {
      prefixes = o.prefix_ids;
    } else {
      std::optional<PrefixScoreVector> oracle;
      if (strategy == "toppref") oracle = oracle_prefix_scores(archive, *labels);
      prefixes = select_prefixes(archive, {parse_strategy(strategy), o.n, o.seed},
                                 labels ? &*labels : nullptr, oracle ? &*oracle : nullptr);
    }
    scores = score_recall_multi(ctx, prefixes, mode);
    if (o.prefix_ids.empty()) scores.method = strategy + "-" + scores.method;
  } else if (method == "em-mia") {
    EmConfig c;
    c.init_method = o.init;
    c.init_k_percent = o.k_percent;
    c.scoring = parse_scoring(o.scoring);
    c.tau_percentile = o.tau;
    if (o.update == "neg-prefix") {
      c.membership_update = MembershipUpdate::neg_prefix_score;
    } else if (o.update == "topk-concat") {
      c.membership_update = MembershipUpdate::topk_concat;
    } else {
      throw ValidationError("unknown membership update '" + o.update + "'");
    }
    c.topk_n = o.topk;
    c.concat_order = o.concat_order == "score" ? ConcatOrder::score : ConcatOrder::reverse_score;
    c.max_iters = o.iters;
    c.convergence_rho = o.rho;
    c.detect_cycles = !o.no_cycle_stop;
    c.exclude_self = !o.include_self;
    c.seed = o.seed;
    em = run_em(ctx, c);
    scores = em->membership;
    if (!o.trace.empty()) detail::write_file(o.trace, trace_to_jsonl(em->trace));
  } else {
    throw ValidationError("unknown method '" + o.method + "'");
  }
  if (o.flip) scores = flipped(std::move(scores));

  write_scores_csv(scores, o.out);

  RunManifest manifest("attack", argv);
  manifest.set_config(attack_config(o));
  manifest.set_seed(o.seed);
  manifest.set_archive(archive_dir);
  manifest.set("method", scores.method);
  manifest.set("uses_labels", uses_labels);
  if (!prefixes.empty()) manifest.set("prefix_ids", prefixes);
  if (em) {
    manifest.set("em", {{"iterations", em->trace.final_iteration},
                        {"converged", em->trace.converged},
                        {"converged_by", em->trace.converged_by},
                        {"fallbacks", em->trace.total_fallbacks}});
  }
  if (uses_labels) {
    std::cerr << "note: " << strategy
              << " uses ground-truth labels; not comparable with label-free methods\n";
  }

  if (o.eval) {
    if (archive.fully_labeled()) {
      const auto report = evaluate(scores, archive.oracle_labels());
      emit_json(to_json(report), o.metrics_out);
      manifest.set("auc", report.auc);
    } else {
      std::cerr << "note: archive is not fully labeled; --eval skipped\n";
    }
  }
  manifest.write(o.out + ".run.json");
  return 0;
}

int run_eval(const EvalOptions& o, const std::vector<std::string>& argv) {
  const auto scores = read_scores_csv(o.scores);
  const fs::path labels_path(o.labels);
  const auto labels =
      fs::is_directory(labels_path) ? load_archive_labels(labels_path) : read_labels_jsonl(labels_path);
  const auto json = to_json(evaluate(scores, labels));
  std::cout << json << "\n";
  if (!o.out.empty()) {
    detail::write_file(o.out, json + "\n");
    RunManifest manifest("eval", argv);
    manifest.set_config({{"scores", o.scores}, {"labels", o.labels}});
    if (fs::is_directory(labels_path)) manifest.set_archive(labels_path);
    manifest.write(o.out + ".run.json");
  }
  return 0;
}

namespace {

EmbeddingSet filter_rows(const EmbeddingSet& set, const std::unordered_map<std::string, int>& bucket,
                         int wanted) {
  EmbeddingSet out;
  out.normalized = set.normalized;
  std::vector<double> data;
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto it = bucket.find(set.ids[i]);
    if (it == bucket.end()) {
      throw ValidationError("embedding id '" + set.ids[i] + "' has no entry in the docs file");
    }
    if (it->second != wanted) continue;
    out.ids.push_back(set.ids[i]);
    const auto row = set.vectors.row(i);
    data.insert(data.end(), row.begin(), row.end());
  }
  if (out.ids.empty()) {
    throw ValidationError("no embeddings in length bucket " + std::to_string(wanted));
  }
  out.vectors = Matrix(out.ids.size(), set.dim(), std::move(data));
  return out;
}

std::unordered_map<std::string, int> read_buckets(const std::string& path) {
  std::unordered_map<std::string, int> out;
  std::size_t line_no = 0;
  for (const auto& line : detail::split_lines(detail::read_file(path))) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("id").get<std::string>()] = j.at("length_bucket").get<int>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": expected {\"id\":..., \"length_bucket\":...}");
    }
  }
  return out;
}

}  // namespace

int run_benchgen(const BenchgenOptions& o, const std::vector<std::string>& argv) {
  BenchgenConfig config;
  config.k = o.k;
  config.min_dist = o.min_dist;
  config.size_per_side = o.size;
  config.seed = o.seed;
  config.max_iters = o.max_iters;
  config.length_bucket = o.length_bucket.value_or(128);
  if (o.opposite == "centroid") {
    config.opposite = OppositeDistance::centroid;
  } else if (o.opposite == "nearest-point") {
    config.opposite = OppositeDistance::nearest_point;
  } else {
    throw ValidationError("unknown opposite distance '" + o.opposite + "'");
  }
  std::vector<Difficulty> difficulties;
  for (const auto& d : o.difficulties) difficulties.push_back(parse_difficulty(d));
  if (difficulties.empty()) {
    difficulties = {Difficulty::easy,   Difficulty::medium, Difficulty::hard,
                    Difficulty::random, Difficulty::mix1,   Difficulty::mix2};
  }

  auto members = load_embeddings(o.members);
  auto non_members = load_embeddings(o.non_members);
  if (!o.docs.empty()) {
    if (!o.length_bucket) throw ValidationError("--docs needs --length-bucket");
    const auto buckets = read_buckets(o.docs);
    members = filter_rows(members, buckets, *o.length_bucket);
    non_members = filter_rows(non_members, buckets, *o.length_bucket);
  }
  const auto pools = prepare_pools(std::move(members), std::move(non_members), config);

  const fs::path out(o.out);
  detail::ensure_directory(out);
  nlohmann::json written = nlohmann::json::array();
  for (auto d : difficulties) {
    const auto split = assemble_split(pools, d, config);
    write_split(split, pools, config, out / to_string(d));
    written.push_back(to_string(d));
  }

  RunManifest manifest("benchgen", argv);
  manifest.set_config({{"members", o.members},
                       {"non_members", o.non_members},
                       {"docs", o.docs},
                       {"length_bucket", config.length_bucket},
                       {"size", o.size},
                       {"k", o.k},
                       {"min_dist", o.min_dist},
                       {"opposite", o.opposite},
                       {"max_iters", o.max_iters},
                       {"difficulties", written}});
  manifest.set_seed(o.seed);
  manifest.write(out / "run_manifest.json");
  return 0;
}

int run_simulate(const SimulateOptions& o, const std::vector<std::string>& argv) {
  SimConfig c;
  c.n_members = o.members;
  c.n_non_members = o.non_members;
  c.delta = o.delta;
  c.q_nm = o.q_nm;
  c.q_m = o.q_m;
  c.jitter = o.jitter;
  c.noise_sigma = o.noise;
  c.ll_mu_m = o.ll_mu_m;
  c.ll_mu_nm = o.ll_mu_nm;
  c.ll_spread = o.ll_spread;
  c.with_tokens = !o.no_tokens;
  c.seed = o.seed;
  const auto sim = generate_archive(c);

  const fs::path out(o.out);
  save_archive(o.unlabeled ? sim.archive.without_labels() : sim.archive, out);
  save_sim_truth(sim.truth, out / "sim_truth.json");

  RunManifest manifest("simulate", argv);
  manifest.set_config({{"members", o.members},
                       {"non_members", o.non_members},
                       {"delta", o.delta},
                       {"q_nm", o.q_nm},
                       {"q_m", o.q_m},
                       {"jitter", o.jitter},
                       {"noise", o.noise},
                       {"ll_mu_m", o.ll_mu_m},
                       {"ll_mu_nm", o.ll_mu_nm},
                       {"ll_spread", o.ll_spread},
                       {"tokens", !o.no_tokens},
                       {"unlabeled", o.unlabeled}});
  manifest.set_seed(o.seed);
  manifest.set_archive(out);
  manifest.write(out / "run_manifest.json");
  return 0;
}

int run_validate(const ValidateOptions& o) {
  const auto archive = load_archive(o.archive);
  std::size_t mismatches = 0;
  std::vector<std::string> mismatch_ids;
  for (const auto& r : archive.token_records()) {
    double sum = 0.0;
    for (double v : r.token_logprobs) sum += v;
    const double mean = sum / static_cast<double>(r.token_logprobs.size());
    if (std::abs(mean - archive.uncond_ll(archive.index_of(r.doc_id))) > 1e-6) {
      ++mismatches;
      if (mismatch_ids.size() < 10) mismatch_ids.push_back(r.doc_id);
    }
  }
  nlohmann::ordered_json j;
  j["archive"] = o.archive;
  j["n"] = archive.size();
  j["labeled"] = archive.fully_labeled();
  j["token_records"] = archive.token_records().size();
  j["token_mean_mismatches"] = mismatches;
  j["checksum"] = archive_checksum(o.archive);
  std::cout << j.dump() << "\n";
  if (o.strict && mismatches > 0) {
    throw ValidationError(std::to_string(mismatches) +
                          " documents whose uncond_ll differs from their token mean, e.g. '" +
                          mismatch_ids.front() + "'");
  }
  return 0;
}

int run_serve_sim(const ServeSimOptions& o) {
  const fs::path dir(o.archive);
  const auto archive = load_archive(dir);
  const SimProvider provider(
      archive, load_sim_truth(o.sim_truth.empty() ? dir / "sim_truth.json" : fs::path(o.sim_truth)));
  std::cout << R"({"capabilities":{"dynamic_prefix":true},"model":"mia-forge-sim"})" << std::endl;

  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    nlohmann::json resp;
    resp["req_id"] = nullptr;
    try {
      const auto req = nlohmann::json::parse(line);
      if (req.contains("req_id")) resp["req_id"] = req["req_id"];
      const auto prefix = req.at("prefix_ids").get<std::vector<std::string>>();
      const auto target = req.at("target_id").get<std::string>();
      resp["ll"] = provider.conditional_ll(prefix, target);
    } catch (const nlohmann::json::exception& e) {
      resp["error"] = std::string("malformed request: ") + e.what();
    } catch (const Error& e) {
      resp["error"] = e.what();
    }
    std::cout << resp.dump() << std::endl;
  }
  return 0;
}

}  // namespace miaforge::cli
