#pragma once

// Cross-channel time-frequency attention.
//
// Input [M, C_f, T, F] with the reference microphone at index 0. The reference
// is average-pooled over frequency and turned into a per-frame sigmoid map that
// modulates it (the "modified reference"). Each auxiliary channel is pooled
// over time into a per-bin sigmoid map that masks the modified reference. The
// M - 1 masked references are appended to the original M channels, giving
// [2M - 1, C_f, T, F]. M = 1 passes the input through unchanged.
//
// Each branch is avg-pool -> 1x1 conv -> ReLU -> 1x1 conv -> sigmoid over the
// feature axis. Masks with a single feature broadcast over all C_f features.

#include <cstddef>
#include <string>
#include <string_view>

#include "amdm/autodiff.hpp"
#include "amdm/params.hpp"
#include "amdm/random.hpp"

namespace amdm {

enum class PoolAxis {
  kTime,       // mean over frames: per-bin map [C, 1, F]
  kFrequency,  // mean over bins: per-frame map [C, T, 1]
};

struct AttentionConfig {
  std::size_t channels = 2;       // M
  std::size_t features = 2;       // C_f
  std::size_t hidden = 8;         // width between the two 1x1 convs
  std::size_t mask_features = 1;  // 1 (shared over features) or C_f
  bool shared_aux = false;        // one parameter set for all auxiliary branches

  void validate() const;
};

/// Registers ref/aux branch parameters under `prefix`.
void init_attention_params(ParamStore& store, const AttentionConfig& cfg, std::string_view prefix,
                           Rng& rng);
/// Parameter-name prefix of the branch used for auxiliary channel m (1-based).
std::string aux_branch_prefix(const AttentionConfig& cfg, std::string_view prefix, std::size_t m);

ad::Var pool_and_process(ad::Graph& g, TracedParams& params, ad::Var channel, PoolAxis axis,
                         std::string_view branch_prefix);
ad::Var cross_channel_attention(ad::Graph& g, TracedParams& params, ad::Var x,
                                const AttentionConfig& cfg, std::string_view prefix);

// Eager forms.
Tensor pool_and_process(const Tensor& channel, PoolAxis axis, const ParamStore& params,
                        std::string_view branch_prefix);
Tensor cross_channel_attention(const Tensor& x, const ParamStore& params,
                               const AttentionConfig& cfg, std::string_view prefix);

}  // namespace amdm
