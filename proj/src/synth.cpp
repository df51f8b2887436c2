#include "miaforge/synth.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>

#include "io_util.hpp"
#include "miaforge/error.hpp"
#include "miaforge/metrics.hpp"

namespace miaforge {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(seq);
}

enum Stream : std::uint32_t { kLabels = 1, kUncond, kPrefix, kRatio, kTokens };

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  // separator so ("ab","c") and ("a","bc") differ
  h ^= 0xff;
  h *= kFnvPrime;
}

std::int64_t zlib_size(const std::string& text) {
  uLongf len = compressBound(static_cast<uLong>(text.size()));
  std::string buf(len, '\0');
  const int rc = compress2(reinterpret_cast<Bytef*>(buf.data()), &len,
                           reinterpret_cast<const Bytef*>(text.data()),
                           static_cast<uLong>(text.size()), 9);
  if (rc != Z_OK) throw Error("zlib compression failed");
  return static_cast<std::int64_t>(len);
}

const char* const kSyllables[] = {"ka", "lo", "mi", "ren", "sa", "tu", "vek", "an",
                                  "or", "pi", "dun", "es", "ga", "hol", "zi", "ber"};

std::string pseudo_word(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(1, 3);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kSyllables) - 1);
  std::string w;
  for (int s = count(rng); s > 0; --s) w += kSyllables[pick(rng)];
  return w;
}

std::string doc_id(std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::max<std::size_t>(4, std::to_string(n - 1).size());
  return "doc-" + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

void SimConfig::validate() const {
  if (n_members == 0 || n_non_members == 0) {
    throw ValidationError("simulator needs at least one member and one non-member");
  }
  for (auto [name, v] : {std::pair{"jitter", jitter}, std::pair{"noise_sigma", noise_sigma},
                         std::pair{"ll_spread", ll_spread}, std::pair{"delta", delta}}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string(name) + " must be finite and non-negative");
    }
  }
  if (!(q_nm >= q_m)) throw ValidationError("q_nm must be at least q_m");
  if (!std::isfinite(ll_mu_m) || !std::isfinite(ll_mu_nm) || ll_mu_m >= 0.0 || ll_mu_nm >= 0.0) {
    throw ValidationError("ll_mu_m and ll_mu_nm must be negative");
  }
}

SimProvider::SimProvider(const LLArchive& archive, SimTruth truth)
    : ids_(archive.ids()),
      uncond_(archive.uncond_ll()),
      cond_(archive.cond_ll()),
      truth_(std::move(truth)) {
  if (truth_.labels.ids != ids_ || truth_.q.size() != ids_.size() ||
      truth_.labels.values.size() != ids_.size()) {
    throw ValidationError("simulator truth does not match the archive's documents");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i);
}

double SimProvider::concat_ratio(std::span<const std::string> prefix_ids,
                                 const std::string& target_id) const {
  const auto lookup = [&](const std::string& id) {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown document id '" + id + "'");
    return it->second;
  };
  const auto x = lookup(target_id);
  double q = 0.0;
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, std::to_string(truth_.config.seed));
  for (const auto& p : prefix_ids) {
    q += truth_.q[lookup(p)];
    fnv_mix(h, p);
  }
  fnv_mix(h, target_id);
  q /= static_cast<double>(prefix_ids.size());
  std::mt19937_64 rng(h);
  std::normal_distribution<double> noise(0.0, truth_.config.noise_sigma);
  const double n = truth_.config.noise_sigma > 0.0 ? noise(rng) : 0.0;
  return 1.0 + truth_.config.delta * q * truth_.labels.values[x] + n;
}

double SimProvider::conditional_ll(std::span<const std::string> prefix_ids,
                                   const std::string& target_id) const {
  auto it = index_.find(target_id);
  if (it == index_.end()) throw ValidationError("unknown document id '" + target_id + "'");
  const auto x = it->second;
  if (prefix_ids.empty()) return uncond_[x];
  if (prefix_ids.size() == 1) {
    auto p = index_.find(prefix_ids[0]);
    if (p == index_.end()) throw ValidationError("unknown document id '" + prefix_ids[0] + "'");
    return cond_(p->second, x);
  }
  return concat_ratio(prefix_ids, target_id) * uncond_[x];
}

SimResult generate_archive(const SimConfig& config) {
  config.validate();
  const std::size_t n = config.n_members + config.n_non_members;

  std::vector<int> labels(n, 0);
  std::fill_n(labels.begin(), config.n_members, 1);
  auto label_rng = stream(config.seed, kLabels);
  std::shuffle(labels.begin(), labels.end(), label_rng);

  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = doc_id(i, n);

  auto uncond_rng = stream(config.seed, kUncond);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> uncond(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = labels[i] ? config.ll_mu_m : config.ll_mu_nm;
    uncond[i] = std::min(mu + config.ll_spread * unit(uncond_rng), -1e-3);
  }

  auto prefix_rng = stream(config.seed, kPrefix);
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double center = labels[i] ? config.q_m : config.q_nm;
    q[i] = std::max(0.0, center + config.jitter * unit(prefix_rng));
  }

  auto ratio_rng = stream(config.seed, kRatio);
  Matrix ratio(n, n);
  Matrix cond(n, n);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t x = 0; x < n; ++x) {
      ratio(p, x) = 1.0 + config.delta * q[p] * labels[x] + config.noise_sigma * unit(ratio_rng);
      cond(p, x) = ratio(p, x) * uncond[x];
    }
  }

  auto token_rng = stream(config.seed, kTokens);
  std::vector<Document> docs(n);
  std::vector<TokenRecord> tokens;
  const double center = 0.5 * (config.ll_mu_m + config.ll_mu_nm);
  std::uniform_int_distribution<std::size_t> length(16, 64);
  std::uniform_real_distribution<double> sigma_dist(0.5, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t_count = length(token_rng);
    std::string text;
    for (std::size_t t = 0; t < t_count; ++t) {
      if (t) text += ' ';
      text += pseudo_word(token_rng);
    }
    docs[i] = Document{ids[i], text, labels[i], std::nullopt};
    if (!config.with_tokens) continue;

    TokenRecord r;
    r.doc_id = ids[i];
    std::vector<double> w(t_count);
    for (auto& v : w) v = std::exp(0.4 * unit(token_rng));
    const double w_mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(t_count);
    for (auto& v : w) v /= w_mean;

    // The reference model sees the intrinsic difficulty but not the
    // membership shift.
    const double class_mu = labels[i] ? config.ll_mu_m : config.ll_mu_nm;
    const double ref_mean = std::min(
        uncond[i] - (class_mu - center) + 0.5 * config.ll_spread * unit(token_rng), -1e-3);
    std::vector<double> ref(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      const double lp = uncond[i] * w[t];
      const double sigma = sigma_dist(token_rng);
      const double z = unit(token_rng) + (uncond[i] - center);
      r.token_logprobs.push_back(lp);
      r.sigma.push_back(sigma);
      r.mu.push_back(lp - sigma * z);
      ref[t] = ref_mean * w[t];
    }
    r.ref_logprobs = std::move(ref);
    r.zlib_bytes = zlib_size(text);
    tokens.push_back(std::move(r));
  }

  SimTruth truth{config, Labels{ids, labels}, q};
  LLArchive archive(std::move(docs), std::move(uncond), std::move(cond), std::move(tokens));
  auto provider = std::make_shared<const SimProvider>(archive, truth);
  return SimResult{std::move(archive), std::move(truth), std::move(ratio), std::move(provider)};
}

void save_sim_truth(const SimTruth& truth, const std::filesystem::path& path) {
  const auto& c = truth.config;
  nlohmann::ordered_json j;
  j["config"] = {{"n_members", c.n_members},     {"n_non_members", c.n_non_members},
                 {"delta", c.delta},             {"q_nm", c.q_nm},
                 {"q_m", c.q_m},                 {"jitter", c.jitter},
                 {"noise_sigma", c.noise_sigma}, {"ll_mu_m", c.ll_mu_m},
                 {"ll_mu_nm", c.ll_mu_nm},       {"ll_spread", c.ll_spread},
                 {"with_tokens", c.with_tokens}, {"seed", c.seed}};
  j["ids"] = truth.labels.ids;
  j["labels"] = truth.labels.values;
  j["q"] = truth.q;
  detail::write_file(path, j.dump(2) + "\n");
}

SimTruth load_sim_truth(const std::filesystem::path& path) {
  SimTruth t;
  try {
    const auto j = nlohmann::json::parse(detail::read_file(path));
    const auto& c = j.at("config");
    t.config.n_members = c.at("n_members").get<std::size_t>();
    t.config.n_non_members = c.at("n_non_members").get<std::size_t>();
    t.config.delta = c.at("delta").get<double>();
    t.config.q_nm = c.at("q_nm").get<double>();
    t.config.q_m = c.at("q_m").get<double>();
    t.config.jitter = c.at("jitter").get<double>();
    t.config.noise_sigma = c.at("noise_sigma").get<double>();
    t.config.ll_mu_m = c.at("ll_mu_m").get<double>();
    t.config.ll_mu_nm = c.at("ll_mu_nm").get<double>();
    t.config.ll_spread = c.at("ll_spread").get<double>();
    t.config.with_tokens = c.at("with_tokens").get<bool>();
    t.config.seed = c.at("seed").get<std::uint64_t>();
    t.labels.ids = j.at("ids").get<std::vector<std::string>>();
    t.labels.values = j.at("labels").get<std::vector<int>>();
    t.q = j.at("q").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed simulator truth " + path.string() + ": " + e.what());
  }
  return t;
}

ScoreVector noisy_init(const Labels& labels, double target_auc, std::uint64_t seed) {
  if (!(target_auc >= 0.5 && target_auc <= 1.0)) {
    throw ValidationError("noisy_init target AUC must lie in [0.5, 1]");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> z(labels.size());
  for (auto& v : z) v = unit(rng);

  ScoreVector out{labels.ids, std::vector<double>(labels.size()), "noisy-init"};
  const auto at = [&](double s) {
    for (std::size_t i = 0; i < z.size(); ++i) out.scores[i] = s * labels.values[i] + z[i];
    return auc_roc(out.scores, labels.values);
  };
  // AUC is non-decreasing in the shift s.
  double lo = -64.0, hi = 64.0;
  double best_s = 0.0, best_gap = std::abs(at(0.0) - target_auc);
  for (int iter = 0; iter < 200 && best_gap > 1e-3; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double auc = at(mid);
    if (std::abs(auc - target_auc) < best_gap) {
      best_gap = std::abs(auc - target_auc);
      best_s = mid;
    }
    (auc < target_auc ? lo : hi) = mid;
  }
  if (best_gap > 0.02) {
    throw DegenerateError("noisy_init cannot reach AUC " + std::to_string(target_auc) +
                          " on these labels");
  }
  at(best_s);
  return out;
}

BlobPools generate_blobs(const BlobConfig& config) {
  if (config.clusters == 0 || config.points_per_side == 0 || config.dim < 2) {
    throw ValidationError("blob fixture needs clusters, points and dim >= 2");
  }
  if (!(config.within_cosine > 0.0 && config.within_cosine < 1.0)) {
    throw ValidationError("within_cosine must lie in (0, 1)");
  }
  auto rng = stream(config.seed, 0xb10b);
  std::normal_distribution<double> unit(0.0, 1.0);
  const auto d = config.dim;
  const auto random_unit = [&] {
    std::vector<double> v(d);
    double sq = 0.0;
    for (auto& x : v) {
      x = unit(rng);
      sq += x * x;
    }
    for (auto& x : v) x /= std::sqrt(sq);
    return v;
  };

  std::vector<std::vector<double>> member_centers, non_member_centers;
  for (std::size_t c = 0; c < config.clusters; ++c) member_centers.push_back(random_unit());
  for (std::size_t c = 0; c < config.clusters; ++c) {
    // cluster c of the non-member side sits at a varying angle from member
    // cluster c, spreading the cross-side centroid distances
    const double cosine = 0.9 * (1.0 - static_cast<double>(c) / static_cast<double>(config.clusters));
    const auto u = random_unit();
    std::vector<double> v(d);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      v[k] = cosine * member_centers[c][k] + std::sqrt(1.0 - cosine * cosine) * u[k];
      sq += v[k] * v[k];
    }
    for (auto& x : v) x /= std::sqrt(sq);
    non_member_centers.push_back(std::move(v));
  }

  const double scale = std::sqrt(config.within_cosine / (1.0 - config.within_cosine));
  const double noise = 1.0 / std::sqrt(static_cast<double>(d));
  const auto make_side = [&](const std::vector<std::vector<double>>& centers, const char* prefix) {
    EmbeddingSet set;
    std::vector<double> data;
    data.reserve(config.points_per_side * d);
    for (std::size_t i = 0; i < config.points_per_side; ++i) {
      const auto& c = centers[i % centers.size()];
      for (std::size_t k = 0; k < d; ++k) data.push_back(scale * c[k] + noise * unit(rng));
      char id[32];
      std::snprintf(id, sizeof id, "%s-%05zu", prefix, i);
      set.ids.emplace_back(id);
    }
    set.vectors = Matrix(config.points_per_side, d, std::move(data));
    return set;
  };
  BlobPools pools;
  pools.members = make_side(member_centers, "m");
  pools.non_members = make_side(non_member_centers, "n");
  return pools;
}

}  // namespace miaforge
