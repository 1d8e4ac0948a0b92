#include "sfg/toy_world.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "sfg/errors.hpp"
#include "sfg/text_encoder.hpp"

namespace sfg {

namespace {

constexpr int kStamp = 3;

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

int index_of(const std::vector<std::string>& list, const std::string& word) {
  auto it = std::find(list.begin(), list.end(), word);
  return it == list.end() ? -1 : static_cast<int>(it - list.begin());
}

// Box origin range [lo, hi] along an axis of `extent` cells for one half.
std::pair<int, int> half_range(int extent, bool first_half) {
  const int half = extent / 2;
  return first_half ? std::pair{0, half - kStamp} : std::pair{half, extent - kStamp};
}

int draw_in(Rng& rng, std::pair<int, int> range) {
  return range.first + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(range.second - range.first + 1)));
}

}  // namespace

void Grammar::validate() const {
  if (colors.empty() || shapes.empty()) throw ConfigError("grammar needs colors and shapes");
  if (shapes.size() > shape_stamps().size()) throw ConfigError("grammar has more shapes than stamps");
  if (grid_h < 2 * kStamp || grid_w < 2 * kStamp) throw ConfigError("grid must be at least 6x6");
  if (latent_dim < static_cast<int>(colors.size() + shapes.size()) + 1) {
    throw ConfigError("latent_dim too small for the grammar's channel layout");
  }
  if (!(two_object_prob >= 0.0 && two_object_prob <= 1.0)) throw ConfigError("two_object_prob outside [0, 1]");
  if (!(min_intensity > 0.0 && min_intensity <= max_intensity)) throw ConfigError("bad intensity range");
  for (const auto& list : {colors, shapes, relations})
    for (const auto& phrase : list)
      for (const auto& w : split_words(phrase))
        if (token_id(w) == kUnkId) throw ConfigError("grammar word outside vocabulary: " + w);
}

const std::vector<std::array<bool, 9>>& shape_stamps() {
  static const std::vector<std::array<bool, 9>> stamps = {
      {true, true, true, true, true, true, true, true, true},        // square
      {false, true, false, true, true, true, false, true, false},    // circle
      {true, false, true, false, true, false, true, false, true},    // cross
  };
  return stamps;
}

const std::vector<std::uint8_t>& ToyScene::mask_for_token(std::size_t i) const {
  if (i < 1 || i > token_region.size()) throw DomainError("token index out of range");
  const int region = token_region[i - 1];
  return region == 0 ? background : object_masks[static_cast<std::size_t>(region - 1)];
}

std::vector<int> ToyScene::object_tokens(int k) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < token_region.size(); ++i)
    if (token_region[i] == k) out.push_back(static_cast<int>(i + 1));
  return out;
}

ToyScene render_scene(const std::string& prompt, const std::vector<std::pair<int, int>>& origins,
                      const Grammar& grammar, const std::vector<double>& intensities) {
  grammar.validate();
  const std::vector<std::string> words = split_words(prompt);
  ToyScene scene;
  scene.grid_h = grammar.grid_h;
  scene.grid_w = grammar.grid_w;
  scene.prompt = prompt;
  const std::size_t patches = static_cast<std::size_t>(grammar.grid_h * grammar.grid_w);
  scene.latent = Tensor::matrix(patches, static_cast<std::size_t>(grammar.latent_dim));
  scene.background.assign(patches, 1);
  scene.token_region.assign(words.size(), 0);

  std::size_t object = 0;
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    const int color = index_of(grammar.colors, words[i]);
    const int shape = index_of(grammar.shapes, words[i + 1]);
    if (color < 0 || shape < 0) continue;
    if (object >= origins.size()) throw DomainError("render_scene: more objects than origins");
    const auto [r0, c0] = origins[object];
    if (r0 < 0 || c0 < 0 || r0 + kStamp > grammar.grid_h || c0 + kStamp > grammar.grid_w) {
      throw DomainError("render_scene: object outside grid");
    }
    const double value = intensities.empty() ? 1.0 : intensities.at(object);
    std::vector<std::uint8_t> mask(patches, 0);
    const auto& stamp = shape_stamps()[static_cast<std::size_t>(shape)];
    for (int dr = 0; dr < kStamp; ++dr) {
      for (int dc = 0; dc < kStamp; ++dc) {
        if (!stamp[static_cast<std::size_t>(dr * kStamp + dc)]) continue;
        const auto p = static_cast<std::size_t>((r0 + dr) * grammar.grid_w + c0 + dc);
        if (!scene.background[p]) throw DomainError("render_scene: objects overlap");
        mask[p] = 1;
        scene.background[p] = 0;
        scene.latent(p, static_cast<std::size_t>(color)) = value;
        scene.latent(p, grammar.colors.size() + static_cast<std::size_t>(shape)) = value;
        scene.latent(p, static_cast<std::size_t>(grammar.latent_dim - 1)) = value;
      }
    }
    scene.object_masks.push_back(std::move(mask));
    ++object;
    scene.token_region[i] = static_cast<int>(object);
    scene.token_region[i + 1] = static_cast<int>(object);
    ++i;
  }
  if (object != origins.size()) throw DomainError("render_scene: origin count does not match objects");
  return scene;
}

ToyScene gen_scene(Rng& rng, const Grammar& grammar) {
  grammar.validate();
  auto pick = [&](const std::vector<std::string>& list) -> const std::string& {
    return list[rng.uniform_index(list.size())];
  };
  auto intensity = [&] {
    return grammar.min_intensity + (grammar.max_intensity - grammar.min_intensity) * rng.uniform();
  };
  const std::string c1 = pick(grammar.colors), s1 = pick(grammar.shapes);
  const bool two = !grammar.relations.empty() && rng.bernoulli(grammar.two_object_prob);
  if (!two) {
    const int r = draw_in(rng, {0, grammar.grid_h - kStamp});
    const int c = draw_in(rng, {0, grammar.grid_w - kStamp});
    const double v = intensity();
    return render_scene("a " + c1 + " " + s1, {{r, c}}, grammar, {v});
  }
  const std::string rel = pick(grammar.relations);
  const std::string c2 = pick(grammar.colors), s2 = pick(grammar.shapes);

  // Which half the first object goes in, and along which axis.
  bool horizontal = true, first_in_low_half = true;
  if (rel == "left of") {
    first_in_low_half = true;
  } else if (rel == "right of") {
    first_in_low_half = false;
  } else if (rel == "above") {
    horizontal = false;
  } else if (rel == "below") {
    horizontal = false;
    first_in_low_half = false;
  } else {
    first_in_low_half = rng.bernoulli(0.5);
  }
  std::pair<int, int> o1, o2;
  if (horizontal) {
    const std::pair<int, int> rows = {0, grammar.grid_h - kStamp};
    o1 = {draw_in(rng, rows), draw_in(rng, half_range(grammar.grid_w, first_in_low_half))};
    o2 = {draw_in(rng, rows), draw_in(rng, half_range(grammar.grid_w, !first_in_low_half))};
  } else {
    const std::pair<int, int> cols = {0, grammar.grid_w - kStamp};
    o1 = {draw_in(rng, half_range(grammar.grid_h, first_in_low_half)), draw_in(rng, cols)};
    o2 = {draw_in(rng, half_range(grammar.grid_h, !first_in_low_half)), draw_in(rng, cols)};
  }
  const double v1 = intensity();
  const double v2 = intensity();
  return render_scene("a " + c1 + " " + s1 + " " + rel + " a " + c2 + " " + s2, {o1, o2}, grammar, {v1, v2});
}

std::vector<ToyScene> gen_dataset(int n, const Rng& rng, const Grammar& grammar) {
  if (n < 1) throw ConfigError("gen_dataset needs n >= 1");
  std::vector<ToyScene> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng sub = rng.substream(static_cast<std::uint64_t>(i));
    out.push_back(gen_scene(sub, grammar));
  }
  return out;
}

double semantic_map_score(const SemanticMap& map, const ToyScene& scene) {
  if (map.layers.empty()) throw DimensionError("semantic_map_score: empty map");
  const std::size_t n = scene.token_region.size();
  double total = 0.0;
  for (const auto& layer : map.layers) {
    if (layer.size() != scene.patches()) {
      throw DimensionError("semantic_map_score: map has " + std::to_string(layer.size()) +
                           " patches, scene has " + std::to_string(scene.patches()));
    }
    std::size_t covered = 0, hits = 0;
    for (std::size_t p = 0; p < layer.size(); ++p) {
      if (scene.background[p]) continue;
      ++covered;
      const int s = layer[p];
      if (s < 1 || static_cast<std::size_t>(s) > n) throw DomainError("semantic_map_score: token index out of range");
      const int region = scene.token_region[static_cast<std::size_t>(s - 1)];
      if (region > 0 && scene.object_masks[static_cast<std::size_t>(region - 1)][p]) ++hits;
    }
    if (covered == 0) throw DomainError("semantic_map_score: no patch is covered by an object");
    total += static_cast<double>(hits) / static_cast<double>(covered);
  }
  return total / static_cast<double>(map.layers.size());
}

Baseline random_map_baseline(std::span<const ToyScene> scenes, int layers, int trials, Rng rng) {
  if (scenes.empty() || layers < 1 || trials < 2) throw ConfigError("random_map_baseline: bad arguments");
  std::vector<double> means;
  for (int trial = 0; trial < trials; ++trial) {
    double sum = 0.0;
    for (const auto& scene : scenes) {
      SemanticMap map;
      const std::uint64_t n = scene.token_region.size();
      for (int l = 0; l < layers; ++l) {
        std::vector<int> layer(scene.patches());
        for (int& s : layer) s = 1 + static_cast<int>(rng.uniform_index(n));
        map.layers.push_back(std::move(layer));
      }
      sum += semantic_map_score(map, scene);
    }
    means.push_back(sum / static_cast<double>(scenes.size()));
  }
  Baseline b;
  for (double m : means) b.mean += m;
  b.mean /= trials;
  for (double m : means) b.stddev += (m - b.mean) * (m - b.mean);
  b.stddev = std::sqrt(b.stddev / (trials - 1));
  return b;
}

ParamSet scene_to_tensors(const ToyScene& scene) {
  ParamSet out;
  out.add("grid", Tensor({2}, {double(scene.grid_h), double(scene.grid_w)}));
  out.add("latent", scene.latent);
  const TokenSeq ids = tokenize(scene.prompt);
  Tensor id_tensor = Tensor::vector(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) id_tensor[i] = ids.ids[i];
  out.add("prompt_ids", id_tensor);
  Tensor regions = Tensor::vector(scene.token_region.size());
  for (std::size_t i = 0; i < regions.size(); ++i) regions[i] = scene.token_region[i];
  out.add("token_region", regions);
  Tensor masks = Tensor::matrix(scene.object_masks.size() + 1, scene.patches());
  for (std::size_t k = 0; k < scene.object_masks.size(); ++k)
    for (std::size_t p = 0; p < scene.patches(); ++p) masks(k, p) = scene.object_masks[k][p];
  for (std::size_t p = 0; p < scene.patches(); ++p) masks(scene.object_masks.size(), p) = scene.background[p];
  out.add("masks", masks);
  return out;
}

ToyScene scene_from_tensors(const ParamSet& tensors) {
  ToyScene s;
  const Tensor& grid = tensors.at("grid");
  if (grid.size() != 2) throw FormatError("scene grid must have 2 entries");
  s.grid_h = static_cast<int>(grid[0]);
  s.grid_w = static_cast<int>(grid[1]);
  s.latent = tensors.at("latent");
  const Tensor& ids = tensors.at("prompt_ids");
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (i > 1) s.prompt += ' ';
    s.prompt += token_word(static_cast<int>(ids[i]));
  }
  for (double r : tensors.at("token_region").values()) s.token_region.push_back(static_cast<int>(r));
  const Tensor& masks = tensors.at("masks");
  const std::size_t patches = static_cast<std::size_t>(s.grid_h * s.grid_w);
  if (masks.rank() != 2 || masks.cols() != patches || masks.rows() < 1) throw FormatError("scene masks malformed");
  for (std::size_t k = 0; k + 1 < masks.rows(); ++k) {
    std::vector<std::uint8_t> m(patches);
    for (std::size_t p = 0; p < patches; ++p) m[p] = masks(k, p) != 0.0;
    s.object_masks.push_back(std::move(m));
  }
  s.background.resize(patches);
  for (std::size_t p = 0; p < patches; ++p) s.background[p] = masks(masks.rows() - 1, p) != 0.0;
  return s;
}

std::uint64_t scene_hash(const ToyScene& scene) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (double v : scene.latent.values()) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    mix(&bits, sizeof bits);
  }
  mix(scene.prompt.data(), scene.prompt.size());
  return h;
}

}  // namespace sfg
