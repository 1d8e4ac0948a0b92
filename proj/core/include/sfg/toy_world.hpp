#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfg/guidance.hpp"
#include "sfg/param_set.hpp"
#include "sfg/rng.hpp"
#include "sfg/tensor.hpp"

namespace sfg {

/// Closed prompt grammar and scene geometry.
///
///   one object : "a <color> <shape>"
///   two objects: "a <color> <shape> <relation> a <color> <shape>"
///
/// Each object is a 3×3 stamp whose cells carry a constant vector: a one-hot
/// color channel, a one-hot shape channel and an ink channel, all equal to
/// the object's intensity, drawn uniformly from [min_intensity, max_intensity].
/// The background is zero. Two-object relations put the objects in opposite
/// halves of the grid, so their stamps never overlap.
struct Grammar {
  std::vector<std::string> colors = {"red", "green", "blue", "yellow"};
  std::vector<std::string> shapes = {"square", "circle", "cross"};
  std::vector<std::string> relations = {"left of", "right of", "above", "below", "next to"};
  double two_object_prob = 0.5;
  double min_intensity = 0.75;
  double max_intensity = 1.25;
  int grid_h = 8;
  int grid_w = 8;
  int latent_dim = 8;

  void validate() const;
};

/// Cells of the 3×3 stamp for each shape, row-major.
const std::vector<std::array<bool, 9>>& shape_stamps();

struct ToyScene {
  int grid_h = 0;
  int grid_w = 0;
  Tensor latent;  // P×latent_dim
  std::string prompt;
  std::vector<std::vector<std::uint8_t>> object_masks;  // one per object, P cells each
  std::vector<std::uint8_t> background;                  // P cells
  // Region of each non-BOS token: 0 = background, k = object k (1-based).
  std::vector<int> token_region;

  std::size_t patches() const { return background.size(); }
  /// Mask of token i (1-based, as in TokenSeq positions).
  const std::vector<std::uint8_t>& mask_for_token(std::size_t i) const;
  /// Token positions (1-based) that name object k (1-based).
  std::vector<int> object_tokens(int k) const;

  friend bool operator==(const ToyScene&, const ToyScene&) = default;
};

ToyScene gen_scene(Rng& rng, const Grammar& grammar = {});
/// n scenes, scene i drawn from rng.substream(i).
std::vector<ToyScene> gen_dataset(int n, const Rng& rng, const Grammar& grammar = {});

/// Rebuild a scene's latent, masks and token regions from its prompt and
/// object positions (stamp top-left corners). Intensities default to 1.
ToyScene render_scene(const std::string& prompt, const std::vector<std::pair<int, int>>& origins,
                      const Grammar& grammar = {}, const std::vector<double>& intensities = {});

/// Fraction of object-covered patches whose chosen token names the object
/// covering them, averaged over layers. Background patches are excluded.
/// Throws DimensionError on a resolution mismatch and DomainError when no
/// patch is covered by an object or an index is outside 1..n.
double semantic_map_score(const SemanticMap& map, const ToyScene& scene);

struct Baseline {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Monte Carlo estimate of the mean semantic_map_score over `scenes` when
/// every layer's map is uniform random over 1..n. Each trial draws fresh maps
/// for all scenes and averages; mean and sample stddev are over trials.
Baseline random_map_baseline(std::span<const ToyScene> scenes, int layers, int trials, Rng rng);

/// Binary record of a scene in the SFGE tensor container: "grid" [h, w],
/// "latent", "prompt_ids" (token ids including BOS), "token_region",
/// "masks" (objects+1 rows; last row is the background).
ParamSet scene_to_tensors(const ToyScene& scene);
ToyScene scene_from_tensors(const ParamSet& tensors);

/// Stable 64-bit FNV-1a hash of latent bytes and prompt.
std::uint64_t scene_hash(const ToyScene& scene);

}  // namespace sfg
