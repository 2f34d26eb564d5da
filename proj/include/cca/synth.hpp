#pragma once

// Synthetic linear generative model x = A z + c with independent latents and
// a sparse label rule, plus source-recovery metrics.

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "cca/featurepack.hpp"
#include "cca/types.hpp"

namespace cca {

enum class LatentDist { Laplace, Uniform, Gaussian };

LatentDist parse_latent_dist(const std::string& name);
const char* to_string(LatentDist d);

/// score = sum_i weights[i] * z[latents[i]]; label = #{t in thresholds : score >= t}.
struct LabelRule {
  std::vector<std::size_t> latents;
  std::vector<double> weights;
  std::vector<double> thresholds;  // ascending, N - 1 entries

  std::size_t n_classes() const { return thresholds.size() + 1; }
};

struct GenerativeSpec {
  std::size_t n_latents = 0;
  std::size_t ambient_dim = 0;
  std::vector<LatentDist> latent;  // one per latent, unit variance each
  Mat mixing;                      // C x M_true, orthonormal columns
  Vec offset;                      // C
  LabelRule label_rule;
  bool hypersphere = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Spec with a seeded random orthonormal mixing matrix and a Gaussian offset
/// of the given per-coordinate scale. The label rule is left empty.
GenerativeSpec make_spec(std::size_t n_latents, std::size_t ambient_dim, LatentDist dist,
                         double offset_scale, std::uint64_t seed);

/// C x M matrix with orthonormal columns.
Mat random_orthonormal_columns(std::size_t rows, std::size_t cols, std::uint64_t seed);

struct Sample {
  Mat latents;   // n x M_true
  Mat features;  // n x C
  LabelVector labels;
};

/// Draws n i.i.d. rows. Different `stream` values give independent draws from
/// the same spec.
Sample sample(const GenerativeSpec& spec, std::size_t n, std::uint64_t stream = 0);

/// Label for one latent row.
std::size_t apply_label_rule(const LabelRule& rule, const Eigen::Ref<const RowVec>& z);

/// Thresholds at the score quantiles of a pilot sample so that the N classes
/// are equally likely.
std::vector<double> balanced_thresholds(const GenerativeSpec& spec, std::size_t n_classes,
                                        std::size_t n_pilot = 20000);

/// Mean matched |Pearson correlation| under the optimal one-to-one assignment
/// of recovered to true sources; unmatched true sources count as 0.
double recovery_score(const Mat& recovered, const Mat& truth);

/// Amari index of a square matrix; 0 iff it is a scaled permutation.
double amari_index(const Mat& p);

/// Min-cost perfect assignment on a square cost matrix; result[row] = col.
std::vector<std::size_t> solve_assignment(const Mat& cost);

struct TaskSizes {
  std::size_t shots = 16;
  std::size_t n_val = 200;
  std::size_t n_test = 400;
  std::size_t n_text = 32;  // held-out samples per class averaged into text_init
};

/// Cache split with exactly `shots` rows per class, text_init rows as
/// normalized per-class means of held-out samples, i.i.d. val/test splits.
/// Feature rows are L2-normalized, as the pack loader would.
FewShotTask make_task(const GenerativeSpec& spec, const TaskSizes& sizes);

struct SynthJob {
  GenerativeSpec spec;
  TaskSizes sizes;
  std::size_t n_source = 10000;
};

/// Parses the synth spec JSON document. Throws InvalidArgument on bad input.
SynthJob parse_synth_job(const nlohmann::json& j);

/// Writes the task (manifest.json + packs), an unlabeled source.ccaf for ICA
/// fitting and latents/mixing packs into `dir`. Returns the manifest path.
std::filesystem::path write_synth_job(const SynthJob& job, const std::filesystem::path& dir);

}  // namespace cca
