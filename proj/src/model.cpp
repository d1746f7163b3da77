#include "oamnet/model.hpp"

#include <cmath>
#include <stdexcept>

namespace oamnet {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (channels < 1 || groups < 1 || channels % groups != 0) {
    fail("channels (" + std::to_string(channels) + ") must be divisible by groups (" +
         std::to_string(groups) + ")");
  }
  if (dilations.empty()) fail("at least one residual block is required");
  for (int d : dilations) {
    if (d < 1) fail("dilations must be >= 1");
  }
  if (kernel < 1 || kernel % 2 == 0) fail("kernel size must be odd");
  if (cond_hidden < 1 || embed_dim < 1) fail("conditioning widths must be positive");
  if (m_modes < 1 || ell_max < 1) fail("output grid must be at least 1 x 3");
  if (ell_p_max < 0 || p_p_max < 0) fail("embedding vocabularies must be non-empty");
}

std::size_t count_parameters(const ModelConfig& cfg) {
  const std::size_t C = cfg.channels, k2 = cfg.kernel * cfg.kernel, H = cfg.cond_hidden;
  const std::size_t nb = cfg.dilations.size();
  std::size_t n = 2 * C * k2 + C + 2 * C;          // stem conv + norm
  n += nb * (2 * (C * C * k2 + C) + 4 * C);         // residual convs + norms
  n += C + 1;                                       // head
  if (cfg.use_film) {
    const std::size_t vocab = (2 * cfg.ell_p_max + 1) + (cfg.p_p_max + 1);
    n += vocab * cfg.embed_dim;
    n += H * cfg.cond_dim() + H + H * H + H;
    n += nb * 2 * (2 * C * H + 2 * C);
  }
  return n;
}

ModelConfig ModelConfig::baseline(const ModelConfig& like) {
  const double target = static_cast<double>(count_parameters(like));
  ModelConfig b = like;
  b.use_film = false;
  double best = -1.0;
  for (int c = like.groups; c <= 4 * like.channels; c += like.groups) {
    ModelConfig t = b;
    t.channels = c;
    const double gap = std::abs(static_cast<double>(count_parameters(t)) - target);
    if (best < 0 || gap < best) {
      best = gap;
      b.channels = c;
    }
  }
  return b;
}

}  // namespace oamnet
