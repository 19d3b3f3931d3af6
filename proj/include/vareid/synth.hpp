// Synthetic identity/viewpoint datasets.
//
// Each identity k has a prototype mu_k on the sphere; each (k, v) cell adds a
// fixed offset of length `viewpoint_offset`; every sample adds isotropic
// Gaussian noise, is normalized (the latent), and is optionally pushed through
// a fixed random invertible linear map (the raw feature).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vareid/error.hpp"
#include "vareid/geometry.hpp"

namespace vareid {

enum class Split { train, query, gallery };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::query: return "query";
    case Split::gallery: return "gallery";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "query") return Split::query;
  if (s == "gallery") return Split::gallery;
  return std::nullopt;
}

struct Sample {
  Vec raw;
  int identity = 0;
  int viewpoint = 0;  // 0 front, 1 side, 2 back
  Split split = Split::train;
  int camera = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

using Dataset = std::vector<Sample>;

struct SynthConfig {
  std::size_t identities = 20;
  std::size_t viewpoints = 3;
  std::size_t per_cell = 8;
  std::size_t raw_dim = 32;
  double identity_spread = 1.0;   // length of each identity prototype
  double viewpoint_offset = 0.8;  // length of each (identity, viewpoint) offset
  double noise = 0.2;             // per-coordinate std of sample noise
  bool distortion = true;
  double train_fraction = 0.5;  // of each cell's non-query samples
  std::size_t cameras_per_view = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (identities < 2 || viewpoints < 2 || per_cell < 1 || raw_dim < 2 || cameras_per_view < 1) {
      throw Error(ErrorKind::InvalidConfig, "need K >= 2, V >= 2, per_cell >= 1, raw_dim >= 2, cameras >= 1");
    }
    if (!(identity_spread > 0.0) || !(viewpoint_offset >= 0.0) || !(noise >= 0.0)) {
      throw Error(ErrorKind::InvalidConfig, "identity spread must be positive, offset and noise non-negative");
    }
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
      throw Error(ErrorKind::InvalidConfig, "train_fraction must lie in [0, 1]");
    }
  }
};

/// Sub-stream of a seed, so that e.g. the sampler seed never perturbs init.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

namespace stream {
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t init = 2;
inline constexpr std::uint64_t sampler = 3;
inline constexpr std::uint64_t label_noise = 4;
}  // namespace stream

template <class Rng>
Vec random_unit(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(dim);
  do {
    for (double& x : v) x = gauss(rng);
  } while (norm(v) <= kZeroNormThreshold);
  normalize_in_place(v);
  return v;
}

/// Random orthogonal basis (Gram-Schmidt) with per-axis scales in [0.5, 2].
template <class Rng>
Matrix random_distortion(std::size_t dim, Rng& rng) {
  Matrix q(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (;;) {
      Vec v = random_unit(dim, rng);
      for (std::size_t j = 0; j < i; ++j) {
        const double p = dot(v, q.row(j));
        for (std::size_t c = 0; c < dim; ++c) v[c] -= p * q(j, c);
      }
      if (norm(v) > 1e-6) {
        normalize_in_place(v);
        std::copy(v.begin(), v.end(), q.row(i).begin());
        break;
      }
    }
  }
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  for (std::size_t i = 0; i < dim; ++i) {
    const double s = scale(rng);
    for (double& x : q.row(i)) x *= s;
  }
  return q;
}

/// Latent points before the distortion; exposed for diagnostics and tests.
struct SynthLatents {
  Dataset samples;  // raw holds the latent unit vector
  Matrix distortion;
};

inline SynthLatents generate_latents(const SynthConfig& cfg) {
  cfg.validate();
  auto rng = make_stream(cfg.seed, stream::data);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> camera_slot(0, cfg.cameras_per_view - 1);

  std::vector<Vec> prototypes;
  for (std::size_t k = 0; k < cfg.identities; ++k) {
    Vec mu = random_unit(cfg.raw_dim, rng);
    for (double& x : mu) x *= cfg.identity_spread;
    prototypes.push_back(std::move(mu));
  }
  std::vector<Vec> offsets;
  for (std::size_t c = 0; c < cfg.identities * cfg.viewpoints; ++c) {
    Vec delta = random_unit(cfg.raw_dim, rng);
    for (double& x : delta) x *= cfg.viewpoint_offset;
    offsets.push_back(std::move(delta));
  }
  SynthLatents out;
  out.distortion = cfg.distortion ? random_distortion(cfg.raw_dim, rng) : Matrix();

  const std::size_t rest = cfg.per_cell - 1;
  const auto n_train = static_cast<std::size_t>(std::ceil(cfg.train_fraction * static_cast<double>(rest)));
  for (std::size_t k = 0; k < cfg.identities; ++k) {
    for (std::size_t v = 0; v < cfg.viewpoints; ++v) {
      const Vec& delta = offsets[k * cfg.viewpoints + v];
      for (std::size_t i = 0; i < cfg.per_cell; ++i) {
        Vec latent(cfg.raw_dim);
        for (std::size_t c = 0; c < cfg.raw_dim; ++c) latent[c] = prototypes[k][c] + delta[c] + cfg.noise * gauss(rng);
        normalize_in_place(latent);
        Sample s;
        s.raw = std::move(latent);
        s.identity = static_cast<int>(k);
        s.viewpoint = static_cast<int>(v);
        s.camera = static_cast<int>(v + cfg.viewpoints * camera_slot(rng));
        s.split = i == 0 ? Split::query : (i <= n_train ? Split::train : Split::gallery);
        out.samples.push_back(std::move(s));
      }
    }
  }
  return out;
}

inline Dataset generate(const SynthConfig& cfg) {
  SynthLatents latents = generate_latents(cfg);
  if (!cfg.distortion) return std::move(latents.samples);
  for (Sample& s : latents.samples) {
    Vec raw(cfg.raw_dim, 0.0);
    for (std::size_t r = 0; r < cfg.raw_dim; ++r) raw[r] = dot(latents.distortion.row(r), s.raw);
    s.raw = std::move(raw);
  }
  return std::move(latents.samples);
}

inline std::size_t count_viewpoints(const Dataset& data) {
  int max_view = 0;
  for (const Sample& s : data) max_view = std::max(max_view, s.viewpoint);
  return std::max<std::size_t>(2, static_cast<std::size_t>(max_view) + 1);
}

/// Reassigns exactly round(rate * n_train) training viewpoint labels to a
/// different viewpoint drawn uniformly. Identities and other splits are untouched.
inline Dataset flip_viewpoint_labels(Dataset samples, double rate, std::uint64_t seed,
                                     std::size_t num_viewpoints = 0) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error(ErrorKind::InvalidRate, "rate must lie in [0, 1]");
  if (num_viewpoints == 0) num_viewpoints = count_viewpoints(samples);
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == Split::train) train.push_back(i);
  }
  const auto n_flip = static_cast<std::size_t>(std::llround(rate * static_cast<double>(train.size())));
  auto rng = make_stream(seed, stream::label_noise);
  std::shuffle(train.begin(), train.end(), rng);
  std::uniform_int_distribution<std::size_t> other(0, num_viewpoints - 2);
  for (std::size_t i = 0; i < n_flip; ++i) {
    Sample& s = samples[train[i]];
    std::size_t v = other(rng);
    if (v >= static_cast<std::size_t>(s.viewpoint)) ++v;
    s.viewpoint = static_cast<int>(v);
  }
  return samples;
}

}  // namespace vareid
