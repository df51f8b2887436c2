#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace miaforge::cli {

struct AttackOptions {
  std::string archive;
  std::string method;
  std::string prefix_strategy = "rand";
  std::size_t n = 12;
  std::string mode = "auto";
  std::vector<std::string> prefix_ids;
  double k_percent = 20.0;
  bool flip = false;
  std::uint64_t seed = 0;
  std::string out;
  bool eval = false;
  std::string metrics_out;
  std::string provider = "none";
  std::string sim_truth;
  // EM-MIA
  std::string init = "minkpp";
  std::string scoring = "auc";
  double tau = 50.0;
  std::string update = "neg-prefix";
  std::size_t topk = 12;
  std::string concat_order = "reverse-score";
  std::size_t iters = 10;
  double rho = 0.995;
  bool no_cycle_stop = false;
  bool include_self = false;
  std::string trace;
};

struct EvalOptions {
  std::string scores;
  std::string labels;
  std::string out;
};

struct BenchgenOptions {
  std::string members;
  std::string non_members;
  std::string docs;
  std::optional<int> length_bucket;
  std::vector<std::string> difficulties;
  std::size_t size = 500;
  std::size_t k = 50;
  double min_dist = 0.6;
  std::uint64_t seed = 0;
  std::string opposite = "centroid";
  std::size_t max_iters = 100;
  std::string out;
};

struct SimulateOptions {
  std::size_t members = 100;
  std::size_t non_members = 100;
  double delta = 0.5;
  double q_nm = 1.0;
  double q_m = 0.1;
  double jitter = 0.3;
  double noise = 0.2;
  double ll_mu_m = -3.0;
  double ll_mu_nm = -3.5;
  double ll_spread = 0.5;
  bool no_tokens = false;
  bool unlabeled = false;
  std::uint64_t seed = 0;
  std::string out;
};

struct ValidateOptions {
  std::string archive;
  bool strict = false;
};

struct ServeSimOptions {
  std::string archive;
  std::string sim_truth;
};

int run_attack(const AttackOptions& o, const std::vector<std::string>& argv);
int run_eval(const EvalOptions& o, const std::vector<std::string>& argv);
int run_benchgen(const BenchgenOptions& o, const std::vector<std::string>& argv);
int run_simulate(const SimulateOptions& o, const std::vector<std::string>& argv);
int run_validate(const ValidateOptions& o);
int run_serve_sim(const ServeSimOptions& o);

}  // namespace miaforge::cli
