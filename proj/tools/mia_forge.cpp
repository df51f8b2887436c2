// mia-forge: membership inference attacks over precomputed log-likelihood
// archives, plus simulation and benchmark-construction utilities.

#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "miaforge/error.hpp"
#include "run_manifest.hpp"

using namespace miaforge;
using namespace miaforge::cli;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDegenerate = 3;

const char* const kMethodHelp =
    "Scoring method.\n"
    "  label-free: loss, ref, zlib, mink, minkpp, recall (with --prefix-strategy rand or\n"
    "              --prefix-id), rand, avg, avgp, em-mia\n"
    "  uses labels: randm, randnm, toppref (and recall with those strategies); reported\n"
    "              for reference only, not a fair comparison";

void add_attack(CLI::App& app, AttackOptions& o) {
  auto* cmd = app.add_subcommand("attack", "Score every archive document with one method");
  cmd->add_option("--archive", o.archive, "Archive directory")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--method", o.method, kMethodHelp)
      ->required()
      ->check(CLI::IsMember({"loss", "ref", "zlib", "mink", "minkpp", "recall", "rand", "randm",
                             "randnm", "toppref", "avg", "avgp", "em-mia"}));
  cmd->add_option("--prefix-strategy", o.prefix_strategy, "Prefix selection for recall")
      ->check(CLI::IsMember({"rand", "randm", "randnm", "toppref"}))
      ->capture_default_str();
  cmd->add_option("--n", o.n, "Number of prefixes (shots)")->capture_default_str();
  cmd->add_option("--mode", o.mode, "Multi-prefix ReCaLL: concat needs a dynamic provider")
      ->check(CLI::IsMember({"auto", "concat", "ensemble"}))
      ->capture_default_str();
  cmd->add_option("--prefix-id", o.prefix_ids, "Explicit prefix document id (repeatable)");
  cmd->add_option("--k", o.k_percent, "Percent of lowest tokens for mink/minkpp")->capture_default_str();
  cmd->add_flag("--flip", o.flip, "Negate the output scores");
  cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", o.out, "Output scores CSV")->required();
  cmd->add_flag("--eval", o.eval, "Also evaluate against the archive's labels");
  cmd->add_option("--metrics-out", o.metrics_out, "Metrics JSON path (default stdout)");
  cmd->add_option("--provider", o.provider, "none, sim, or cmd:<shell command>")->capture_default_str();
  cmd->add_option("--sim-truth", o.sim_truth, "Simulator truth file (default <archive>/sim_truth.json)");
  auto* em = "EM-MIA";
  cmd->add_option("--init", o.init, "Initial membership scores")
      ->check(CLI::IsMember({"loss", "ref", "zlib", "mink", "minkpp", "avg", "avgp", "rand"}))
      ->capture_default_str()
      ->group(em);
  cmd->add_option("--scoring", o.scoring, "Prefix-score update")
      ->check(CLI::IsMember({"auc", "rankdiff", "kendall", "spearman"}))
      ->capture_default_str()
      ->group(em);
  cmd->add_option("--tau", o.tau, "Pseudo-label percentile")->capture_default_str()->group(em);
  cmd->add_option("--update", o.update, "Membership-score update")
      ->check(CLI::IsMember({"neg-prefix", "topk-concat"}))
      ->capture_default_str()
      ->group(em);
  cmd->add_option("--topk", o.topk, "Prefixes in the top-k concatenation")->capture_default_str()->group(em);
  cmd->add_option("--concat-order", o.concat_order, "Order of the concatenated prefixes")
      ->check(CLI::IsMember({"reverse-score", "score"}))
      ->capture_default_str()
      ->group(em);
  cmd->add_option("--iters", o.iters, "Maximum iterations")->capture_default_str()->group(em);
  cmd->add_option("--rho", o.rho, "Spearman threshold for convergence")->capture_default_str()->group(em);
  cmd->add_flag("--no-cycle-stop", o.no_cycle_stop, "Do not stop on a repeated iterate")->group(em);
  cmd->add_flag("--include-self", o.include_self, "Score a prefix on itself too")->group(em);
  cmd->add_option("--trace", o.trace, "Per-iteration trace (JSONL)")->group(em);
}

void add_eval(CLI::App& app, EvalOptions& o) {
  auto* cmd = app.add_subcommand("eval", "AUC, TPR at low FPR and best accuracy of a score file");
  cmd->add_option("--scores", o.scores, "Scores CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--labels", o.labels, "Archive directory or labels JSONL")->required()->check(CLI::ExistingPath);
  cmd->add_option("--out", o.out, "Also write the metrics JSON here");
}

void add_benchgen(CLI::App& app, BenchgenOptions& o) {
  auto* cmd = app.add_subcommand("benchgen", "Build difficulty-controlled member/non-member splits");
  cmd->add_option("--members", o.members, "Member embedding directory")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--non-members", o.non_members, "Non-member embedding directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd->add_option("--docs", o.docs, "JSONL with id and length_bucket per document")->check(CLI::ExistingFile);
  cmd->add_option("--length-bucket", o.length_bucket, "Length bucket tag (64 or 128)")
      ->check(CLI::IsMember({64, 128}));
  cmd->add_option("--difficulty", o.difficulties, "easy, medium, hard, random, mix1, mix2 (default all)")
      ->check(CLI::IsMember({"easy", "medium", "hard", "random", "mix1", "mix2"}))
      ->delimiter(',');
  cmd->add_option("--size", o.size, "Documents per side")->capture_default_str();
  cmd->add_option("--k", o.k, "Clusters per side")->capture_default_str();
  cmd->add_option("--min-dist", o.min_dist, "Dedup cosine distance threshold")->capture_default_str();
  cmd->add_option("--opposite", o.opposite, "Distance to the opposite cluster's centroid or nearest point")
      ->check(CLI::IsMember({"centroid", "nearest-point"}))
      ->capture_default_str();
  cmd->add_option("--max-iters", o.max_iters, "k-means iteration cap")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", o.out, "Output directory")->required();
}

void add_simulate(CLI::App& app, SimulateOptions& o) {
  auto* cmd = app.add_subcommand("simulate", "Write a synthetic archive");
  cmd->add_option("--members", o.members)->capture_default_str();
  cmd->add_option("--non-members", o.non_members)->capture_default_str();
  cmd->add_option("--delta", o.delta, "Membership effect of a discriminative prefix")->capture_default_str();
  cmd->add_option("--q-nm", o.q_nm, "Mean discriminativeness of non-member prefixes")->capture_default_str();
  cmd->add_option("--q-m", o.q_m, "Mean discriminativeness of member prefixes")->capture_default_str();
  cmd->add_option("--jitter", o.jitter, "Spread of prefix discriminativeness")->capture_default_str();
  cmd->add_option("--noise", o.noise, "Ratio noise standard deviation")->capture_default_str();
  cmd->add_option("--ll-mu-m", o.ll_mu_m, "Mean LL of members")->capture_default_str();
  cmd->add_option("--ll-mu-nm", o.ll_mu_nm, "Mean LL of non-members")->capture_default_str();
  cmd->add_option("--ll-spread", o.ll_spread, "LL standard deviation")->capture_default_str();
  cmd->add_flag("--no-tokens", o.no_tokens, "Omit token records");
  cmd->add_flag("--unlabeled", o.unlabeled, "Strip labels from the written archive");
  cmd->add_option("--seed", o.seed)->capture_default_str();
  cmd->add_option("--out", o.out, "Archive directory")->required();
}

void add_validate(CLI::App& app, ValidateOptions& o) {
  auto* cmd = app.add_subcommand("validate", "Check an archive's format, checksums and invariants");
  cmd->add_option("archive", o.archive, "Archive directory")->required();
  cmd->add_flag("--strict", o.strict, "Fail when uncond_ll differs from the token mean");
}

void add_serve_sim(CLI::App& app, ServeSimOptions& o) {
  auto* cmd = app.add_subcommand("serve-sim", "Answer dynamic prefix queries from a simulated archive");
  cmd->group("");
  cmd->add_option("--archive", o.archive)->required();
  cmd->add_option("--sim-truth", o.sim_truth);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership inference toolkit over log-likelihood archives", "mia-forge"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  AttackOptions attack;
  EvalOptions eval;
  BenchgenOptions benchgen;
  SimulateOptions simulate;
  ValidateOptions validate;
  ServeSimOptions serve;
  add_attack(app, attack);
  add_eval(app, eval);
  add_benchgen(app, benchgen);
  add_simulate(app, simulate);
  add_validate(app, validate);
  add_serve_sim(app, serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    if (app.got_subcommand("attack")) return run_attack(attack, args);
    if (app.got_subcommand("eval")) return run_eval(eval, args);
    if (app.got_subcommand("benchgen")) return run_benchgen(benchgen, args);
    if (app.got_subcommand("simulate")) return run_simulate(simulate, args);
    if (app.got_subcommand("validate")) return run_validate(validate);
    if (app.got_subcommand("serve-sim")) return run_serve_sim(serve);
  } catch (const DegenerateError& e) {
    std::cerr << "degenerate: " << e.what() << "\n";
    for (const auto& id : e.offenders()) std::cerr << "  " << id << "\n";
    return kExitDegenerate;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const MethodUnavailableError& e) {
    std::cerr << "method unavailable: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CapabilityError& e) {
    std::cerr << "missing capability: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
