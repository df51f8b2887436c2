#pragma once

#include <span>
#include <string>

#include "miaforge/archive.hpp"

namespace miaforge {

/// Source of conditional log-likelihoods for arbitrary concatenated
/// prefixes p_1 ⊕ ... ⊕ p_n (p_n adjacent to the target).
class LlProvider {
 public:
  virtual ~LlProvider() = default;

  virtual ProviderCapabilities capabilities() const = 0;

  /// LL(target | prefix) in nats per target token. Implementations must be
  /// safe to call concurrently or serialize internally.
  virtual double conditional_ll(std::span<const std::string> prefix_ids,
                                const std::string& target_id) const = 0;
};

/// An archive together with an optional dynamic provider.
struct ScoringContext {
  const LLArchive& archive;
  const LlProvider* provider = nullptr;

  bool dynamic_prefix() const {
    return provider != nullptr && provider->capabilities().dynamic_prefix;
  }
};

/// LL(target | prefix_ids).
///
/// Empty prefix returns uncond_ll[target]; a single prefix reads the cond_ll
/// cell; longer prefixes go to the dynamic provider and throw
/// CapabilityError when none is available.
double query_cond(const LLArchive& archive, const LlProvider* provider,
                  std::span<const std::string> prefix_ids, const std::string& target_id);

inline double query_cond(const ScoringContext& ctx, std::span<const std::string> prefix_ids,
                         const std::string& target_id) {
  return query_cond(ctx.archive, ctx.provider, prefix_ids, target_id);
}

}  // namespace miaforge
