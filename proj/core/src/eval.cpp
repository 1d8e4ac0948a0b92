#include "sfg/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sfg/checkpoint.hpp"
#include "sfg/errors.hpp"
#include "sfg/sampler.hpp"

namespace sfg {

namespace {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

// Mean over patches of a P×d latent.
std::vector<double> pooled_image(const Tensor& image) {
  require_matrix(image, "alignment image");
  std::vector<double> out(image.cols(), 0.0);
  for (std::size_t p = 0; p < image.rows(); ++p) {
    for (std::size_t j = 0; j < image.cols(); ++j) out[j] += image(p, j);
  }
  for (double& v : out) v /= static_cast<double>(image.rows());
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::vector<double> text_features(const std::string& prompt, const EncoderParams& encoder) {
  std::vector<double> f = encode(tokenize(prompt), encoder).pooled();
  f.push_back(1.0);
  return f;
}

}  // namespace

EmbeddingSet EmbeddingSet::subset(std::span<const std::size_t> indices) const {
  EmbeddingSet out;
  out.rows = Tensor::matrix(indices.size(), dim());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw DimensionError("embedding subset index out of range");
    std::ranges::copy(rows.row(indices[i]), out.rows.row(i).begin());
    if (!labels.empty()) out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

EmbeddingSet prompt_embeddings(std::span<const std::string> prompts, const EncoderParams& encoder) {
  EmbeddingSet out;
  out.rows = Tensor::matrix(prompts.size(), static_cast<std::size_t>(encoder.config.text_dim));
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const std::vector<double> v = encode(tokenize(prompts[i]), encoder).pooled();
    std::ranges::copy(v, out.rows.row(i).begin());
    out.labels.push_back(prompts[i]);
  }
  return out;
}

double frechet(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.rows.rank() != 2 || b.rows.rank() != 2) throw DimensionError("frechet: embeddings must be matrices");
  if (a.dim() != b.dim()) {
    throw DimensionError("frechet: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
  }
  if (a.size() < 2 || b.size() < 2) throw InsufficientDataError("frechet: each set needs at least 2 rows");

  const MeanCov ma = mean_cov(a.rows);
  const MeanCov mb = mean_cov(b.rows);
  const double mean_term = squared_norm(sub(ma.mean, mb.mean));
  const Tensor root_a = sqrtm_spd(ma.cov);
  Tensor inner = matmul(matmul(root_a, mb.cov), root_a);
  // Symmetrise against rounding before the second square root.
  for (std::size_t i = 0; i < inner.rows(); ++i) {
    for (std::size_t j = i + 1; j < inner.cols(); ++j) {
      const double m = 0.5 * (inner(i, j) + inner(j, i));
      inner(i, j) = m;
      inner(j, i) = m;
    }
  }
  const double cov_term = trace(ma.cov) + trace(mb.cov) - 2.0 * trace(sqrtm_spd(inner));
  return std::max(0.0, mean_term + cov_term);
}

std::vector<CurveRow> diversity_curve(const EmbeddingSet& prompts, std::span<const std::size_t> sizes,
                                      int trials, const Rng& rng) {
  if (trials < 1) throw ConfigError("diversity_curve: trials must be >= 1");
  for (std::size_t s : sizes) {
    if (s > prompts.size()) {
      throw InsufficientDataError("diversity_curve: subset size " + std::to_string(s) + " exceeds corpus size " +
                                  std::to_string(prompts.size()));
    }
  }
  std::vector<CurveRow> out;
  std::vector<std::size_t> perm(prompts.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    std::vector<double> dists;
    for (int j = 0; j < trials; ++j) {
      Rng r = rng.substream(i * static_cast<std::size_t>(trials) + static_cast<std::size_t>(j));
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      // Partial Fisher–Yates: the first sizes[i] entries are a uniform subset.
      for (std::size_t k = 0; k < sizes[i]; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(r.uniform_index(perm.size() - k));
        std::swap(perm[k], perm[pick]);
      }
      std::vector<std::size_t> chosen(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(sizes[i]));
      std::ranges::sort(chosen);
      dists.push_back(frechet(prompts.subset(chosen), prompts));
    }
    CurveRow row;
    row.size = sizes[i];
    row.mean = std::accumulate(dists.begin(), dists.end(), 0.0) / static_cast<double>(dists.size());
    if (dists.size() > 1) {
      double ss = 0.0;
      for (double d : dists) ss += (d - row.mean) * (d - row.mean);
      row.stddev = std::sqrt(ss / static_cast<double>(dists.size() - 1));
    }
    out.push_back(row);
  }
  return out;
}

void write_curve_csv(std::ostream& out, std::span<const CurveRow> rows) {
  out << "size,mean,std\n";
  for (const CurveRow& r : rows) out << r.size << ',' << format_real(r.mean) << ',' << format_real(r.stddev) << '\n';
}

AlignmentModel fit_alignment_model(const EncoderParams& encoder, const Grammar& grammar, std::uint64_t seed,
                                   int scenes, double ridge) {
  if (scenes < 1) throw ConfigError("alignment model needs at least one scene");
  if (!(ridge > 0.0)) throw ConfigError("alignment ridge must be > 0");
  const std::vector<ToyScene> data = gen_dataset(scenes, Rng(seed, 0xA1), grammar);
  const auto in_dim = static_cast<Eigen::Index>(encoder.config.text_dim + 1);
  const auto out_dim = static_cast<Eigen::Index>(grammar.latent_dim);

  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), in_dim);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(data.size()), out_dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const std::vector<double> f = text_features(data[i].prompt, encoder);
    const std::vector<double> g = pooled_image(data[i].latent);
    for (Eigen::Index j = 0; j < in_dim; ++j) x(r, j) = f[static_cast<std::size_t>(j)];
    for (Eigen::Index j = 0; j < out_dim; ++j) y(r, j) = g[static_cast<std::size_t>(j)];
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += ridge * static_cast<double>(data.size());
  const Eigen::MatrixXd w = gram.ldlt().solve(x.transpose() * y);

  AlignmentModel model;
  model.projection = Tensor::matrix(static_cast<std::size_t>(in_dim), static_cast<std::size_t>(out_dim));
  for (Eigen::Index i = 0; i < in_dim; ++i) {
    for (Eigen::Index j = 0; j < out_dim; ++j) {
      model.projection(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = w(i, j);
    }
  }
  return model;
}

double alignment_score(const Tensor& image, const std::string& prompt, const EncoderParams& encoder,
                       const AlignmentModel& model) {
  const std::vector<double> f = text_features(prompt, encoder);
  if (model.projection.rank() != 2 || model.projection.rows() != f.size()) {
    throw DimensionError("alignment model does not match the encoder width");
  }
  const std::vector<double> g = pooled_image(image);
  if (g.size() != model.projection.cols()) throw DimensionError("alignment model does not match the latent width");
  std::vector<double> predicted(g.size(), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (std::size_t j = 0; j < g.size(); ++j) predicted[j] += f[i] * model.projection(i, j);
  }
  return cosine(g, predicted);
}

std::size_t percentile_rank(double q, std::size_t n) {
  if (n == 0) throw InsufficientDataError("percentile_rank: no items");
  if (!(q >= 0.0 && q <= 100.0)) throw DomainError("percentile must lie in [0, 100]");
  return static_cast<std::size_t>(std::floor(q / 100.0 * static_cast<double>(n - 1))) + 1;
}

void SubsetReport::write_csv(std::ostream& out) const {
  out << "band,rank,prompt,score\n";
  for (const SubsetBand& band : bands) {
    for (const SubsetItem& item : band.items) {
      out << format_real(band.percentile) << ',' << item.rank << ',' << csv_quote(item.prompt) << ','
          << format_real(item.score) << '\n';
    }
  }
}

SubsetReport subset_select(std::span<const std::string> prompts, std::span<const double> scores,
                           std::size_t total, std::span<const double> bands) {
  if (prompts.size() != scores.size()) throw DimensionError("subset_select: prompts and scores differ in length");
  if (bands.empty()) throw ConfigError("subset_select: no bands");
  if (total == 0 || total % bands.size() != 0) {
    throw ConfigError("subset_select: total must be a positive multiple of the band count");
  }
  const std::size_t n = prompts.size();
  const std::size_t k = total / bands.size();
  if (n < total) {
    throw InsufficientDataError("subset_select: " + std::to_string(n) + " prompts cannot fill " +
                                std::to_string(total));
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw DomainError("subset_select: non-finite score");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  SubsetReport report;
  std::vector<std::pair<std::size_t, std::size_t>> windows;  // [first, last] ranks
  for (double q : bands) {
    const std::size_t center = percentile_rank(q, n);
    const std::size_t half = (k - 1) / 2;
    std::size_t first = center > half ? center - half : 1;
    first = std::min(first, n - k + 1);
    const std::size_t last = first + k - 1;
    for (const auto& [f, l] : windows) {
      if (first <= l && f <= last) {
        throw DomainError("subset_select: band windows overlap; use fewer prompts per band or more prompts");
      }
    }
    windows.emplace_back(first, last);

    SubsetBand band;
    band.percentile = q;
    band.center_rank = center;
    for (std::size_t r = first; r <= last; ++r) {
      const std::size_t id = order[r - 1];
      band.items.push_back({r, id, prompts[id], scores[id]});
    }
    report.bands.push_back(std::move(band));
  }
  return report;
}

StepTiming step_benchmark(const DenoiserParams& params, const TextEmbeddings& c, const TextEmbeddings& neg,
                          const GuidanceConfig& cfg, const NoiseSchedule& sched, int repeats, int warmup) {
  if (repeats < 1) throw ConfigError("step_benchmark: repeats must be >= 1");
  if (warmup < 0) throw ConfigError("step_benchmark: warmup must be >= 0");
  if (sched.steps() < 2) throw ConfigError("step_benchmark: schedule needs at least 2 steps");
  if (c.content_tokens() == 0) throw EmptyPromptError("step_benchmark: prompt has no tokens");

  const int t = std::max(2, sched.steps() / 2);
  Rng input_rng(0x5EED, 0xBE);
  const auto& mc = params.config();
  const Tensor z = randn(input_rng, {static_cast<std::size_t>(mc.patches()), static_cast<std::size_t>(mc.latent_dim)});
  const Rng noise_rng(0x5EED, 0xBF);

  using Clock = std::chrono::steady_clock;
  StepTiming timing;
  double cf_total = 0.0;
  double sf_total = 0.0;
  double sink = 0.0;
  auto run = [&](GuidanceMode mode, int& passes) {
    Rng r = noise_rng;
    const std::uint64_t before = forward_pass_count();
    const auto start = Clock::now();
    const GuidedScore g = guided_score(params, z, t, sched, c, neg, cfg, mode);
    const PosteriorStep step = posterior_step(z, g.eps, t, sched, r);
    const auto stop = Clock::now();
    passes = static_cast<int>(forward_pass_count() - before);
    sink += step.z_prev[0];
    return std::chrono::duration<double>(stop - start).count();
  };
  for (int i = 0; i < warmup + repeats; ++i) {
    const double cf = run(GuidanceMode::kClassifierFree, timing.classifier_free_passes);
    const double sf = run(GuidanceMode::kSegmentationFree, timing.segmentation_free_passes);
    if (i >= warmup) {
      cf_total += cf;
      sf_total += sf;
    }
  }
  if (!std::isfinite(sink)) throw DomainError("step_benchmark: non-finite sample");
  timing.classifier_free_seconds = cf_total / repeats;
  timing.segmentation_free_seconds = sf_total / repeats;
  return timing;
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open embedding file " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  const bool binary = in.gcount() == 4 && std::string_view(magic, 4) == "SFGE";
  in.close();

  EmbeddingSet set;
  if (binary) {
    const ParamSet tensors = load_tensors(path);
    if (tensors.contains("embeddings")) {
      set.rows = tensors.at("embeddings");
    } else {
      for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors.tensor(i).rank() == 2) {
          set.rows = tensors.tensor(i);
          break;
        }
      }
    }
    if (set.rows.rank() != 2) throw FormatError(path.string() + ": no rank-2 tensor");
    return set;
  }

  std::ifstream text(path);
  std::string line;
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  while (std::getline(text, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      while (end && (*end == ' ' || *end == '\t')) ++end;
      if (end == cell.c_str() || (end && *end != '\0')) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows == 0 && values.empty() && line_no == 1) continue;  // header
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-numeric value");
    }
    if (cols == 0) cols = row.size();
    if (row.size() != cols) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                        " columns");
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw FormatError(path.string() + ": no embedding rows");
  set.rows = Tensor({rows, cols}, std::move(values));
  return set;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  if (path.extension() == ".csv") {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    for (std::size_t r = 0; r < set.size(); ++r) {
      for (std::size_t c = 0; c < set.dim(); ++c) out << (c ? "," : "") << format_real(set.rows(r, c));
      out << '\n';
    }
    return;
  }
  ParamSet tensors;
  tensors.add("embeddings", set.rows);
  save_tensors(path, tensors);
}

}  // namespace sfg
