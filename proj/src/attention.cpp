#include "amdm/attention.hpp"

#include <stdexcept>
#include <vector>

namespace amdm {
namespace {

void init_branch(ParamStore& store, const std::string& p, std::size_t in, std::size_t hidden,
                 std::size_t out, Rng& rng) {
  store.add(p + "conv1.w", he_normal(rng, {hidden, in}, in));
  store.add(p + "conv1.b", Tensor({hidden}, 0.0));
  store.add(p + "conv2.w", he_normal(rng, {out, hidden}, hidden));
  store.add(p + "conv2.b", Tensor({out}, 0.0));
}

}  // namespace

void AttentionConfig::validate() const {
  if (channels == 0 || features == 0 || hidden == 0)
    throw std::invalid_argument("attention: channels, features and hidden must be positive");
  if (mask_features != 1 && mask_features != features)
    throw std::invalid_argument("attention: mask_features must be 1 or equal to features");
}

std::string aux_branch_prefix(const AttentionConfig& cfg, std::string_view prefix, std::size_t m) {
  std::string p(prefix);
  return cfg.shared_aux ? p + "aux." : p + "aux" + std::to_string(m) + ".";
}

void init_attention_params(ParamStore& store, const AttentionConfig& cfg, std::string_view prefix,
                           Rng& rng) {
  cfg.validate();
  if (cfg.channels < 2) return;
  const std::string p(prefix);
  init_branch(store, p + "ref.", cfg.features, cfg.hidden, cfg.mask_features, rng);
  const std::size_t branches = cfg.shared_aux ? 1 : cfg.channels - 1;
  for (std::size_t m = 1; m <= branches; ++m)
    init_branch(store, aux_branch_prefix(cfg, prefix, m), cfg.features, cfg.hidden,
                cfg.mask_features, rng);
}

ad::Var pool_and_process(ad::Graph& g, TracedParams& params, ad::Var channel, PoolAxis axis,
                         std::string_view branch_prefix) {
  const Tensor& x = g.value(channel);
  if (x.rank() != 3)
    throw std::invalid_argument("pool_and_process: expected [C_f, T, F], got " +
                                to_string(x.shape()));
  const std::string p(branch_prefix);
  ad::Var h = ad::avg_pool_axis(g, channel, axis == PoolAxis::kTime ? 1 : 2);
  h = ad::conv2d_1x1(g, h, params(p + "conv1.w"), params(p + "conv1.b"));
  h = ad::relu(g, h);
  h = ad::conv2d_1x1(g, h, params(p + "conv2.w"), params(p + "conv2.b"));
  return ad::sigmoid(g, h);
}

ad::Var cross_channel_attention(ad::Graph& g, TracedParams& params, ad::Var x,
                                const AttentionConfig& cfg, std::string_view prefix) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 4 || xv.dim(0) != cfg.channels || xv.dim(1) != cfg.features)
    throw std::invalid_argument("cross_channel_attention: expected [" +
                                std::to_string(cfg.channels) + ", " +
                                std::to_string(cfg.features) + ", T, F], got " +
                                to_string(xv.shape()));
  const std::size_t M = cfg.channels;
  if (M == 1) return x;
  const Shape plane{xv.dim(1), xv.dim(2), xv.dim(3)};
  const Shape row{1, xv.dim(1), xv.dim(2), xv.dim(3)};
  const std::string p(prefix);

  ad::Var ref = ad::reshape(g, ad::slice_channels(g, x, 0, 1), plane);
  ad::Var ref_map = pool_and_process(g, params, ref, PoolAxis::kFrequency, p + "ref.");
  ad::Var modified = ad::mul(g, ref, ref_map);

  std::vector<ad::Var> parts{x};
  for (std::size_t m = 1; m < M; ++m) {
    ad::Var aux = ad::reshape(g, ad::slice_channels(g, x, m, 1), plane);
    ad::Var mask =
        pool_and_process(g, params, aux, PoolAxis::kTime, aux_branch_prefix(cfg, prefix, m));
    parts.push_back(ad::reshape(g, ad::mul(g, modified, mask), row));
  }
  return ad::concat_channels(g, parts);
}

Tensor pool_and_process(const Tensor& channel, PoolAxis axis, const ParamStore& params,
                        std::string_view branch_prefix) {
  ad::Graph g;
  TracedParams traced(g, params);
  return g.value(pool_and_process(g, traced, g.input(channel), axis, branch_prefix));
}

Tensor cross_channel_attention(const Tensor& x, const ParamStore& params,
                               const AttentionConfig& cfg, std::string_view prefix) {
  ad::Graph g;
  TracedParams traced(g, params);
  return g.value(cross_channel_attention(g, traced, g.input(x), cfg, prefix));
}

}  // namespace amdm
