#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "plreg/tensor.hpp"

namespace plreg {

/// Synthetic generator with known defined/undefined feature structure.
///
/// Feature layout: [class semantic blocks | noise dims | domain dims | padding].
/// Class c owns dims [c*s, (c+1)*s) with s = semantic_dims_per_class.
struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t num_known = 5;
  std::size_t input_dim = 0;  // 0: exactly the minimum width
  std::size_t semantic_dims_per_class = 2;
  std::size_t noise_dims = 4;
  std::size_t domain_dims = 0;
  double noise_sigma = 0.3;
  std::size_t num_domains = 1;
  double domain_shift = 0.0;
  std::size_t samples_per_class_max = 100;
  double imbalance_ratio = 1.0;
  std::uint64_t seed = 0;

  std::size_t min_input_dim() const;
  std::size_t resolved_input_dim() const;
  void validate() const;
};

struct Sample {
  std::vector<double> features;
  int class_id = 0;
  int domain_id = 0;
  bool labeled = false;
};

struct TaskSplit {
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;
  std::vector<Sample> test;
  std::set<int> known_classes;
  std::size_t total_class_count = 0;
};

enum class CilStyle { Ordered, Shuffled };

std::string to_string(CilStyle s);
CilStyle parse_cil_style(const std::string& s);

struct CilSession {
  std::vector<int> classes;
  std::vector<std::size_t> counts;  // training samples per class, aligned with `classes`
};

struct CilSchedule {
  std::vector<CilSession> sessions;
  CilStyle style = CilStyle::Ordered;
};

/// n_c = max(1, round(n_max * rho^(c/(K-1)))) for c = 0..K-1.
std::vector<std::size_t> long_tail_counts(std::size_t num_classes, std::size_t n_max, double rho);

/// Long-tailed sample set: counts from long_tail_counts, for every domain.
std::vector<Sample> generate(const SyntheticSpec& spec);
/// Samples with explicit per-class counts (for every domain), drawn with `seed`.
/// The prototypes and domain offsets are always those of `spec.seed`.
std::vector<Sample> generate_with_counts(const SyntheticSpec& spec,
                                         std::span<const std::size_t> counts,
                                         std::span<const int> classes, std::uint64_t seed);
/// `per_class` samples for each listed class in each domain.
std::vector<Sample> generate_balanced(const SyntheticSpec& spec, std::span<const int> classes,
                                      std::size_t per_class, std::uint64_t seed);

/// Noise-free prototype of (class, domain).
std::vector<double> prototype(const SyntheticSpec& spec, int class_id, int domain_id);

/// Classes [0, num_known) are known; half of each known class is labeled.
TaskSplit make_gcd_split(std::span<const Sample> samples, std::size_t num_known,
                         std::uint64_t seed);
/// GCD train pool from `spec` plus a freshly generated balanced test set.
TaskSplit build_gcd_task(const SyntheticSpec& spec, std::uint64_t split_seed);

/// Leave-one-domain-out: the held-out domain becomes the test set, the rest is split as GCD.
TaskSplit make_mdg_gcd_splits(std::span<const Sample> samples, std::size_t num_known,
                              int held_out_domain, std::uint64_t seed);

/// Session 0 takes ceil(K/2) classes, the remainder is split over `num_incremental` sessions.
CilSchedule make_cil_schedule(const SyntheticSpec& spec, std::size_t num_incremental,
                              CilStyle style, std::uint64_t seed);

/// Union of the semantic blocks of `classes`.
std::set<std::size_t> ground_truth_defined_dims(const SyntheticSpec& spec,
                                                std::span<const int> classes);

/// Stacks sample features into a [n x input_dim] tensor.
Tensor features_of(std::span<const Sample> samples);
std::vector<int> labels_of(std::span<const Sample> samples);

/// CSV: class_id,domain_id,labeled,f0..f{d-1}.
void write_samples_csv(std::ostream& os, std::span<const Sample> samples);
/// Text manifest: one block per session listing `class count` pairs.
void write_schedule_manifest(std::ostream& os, const CilSchedule& schedule);

}  // namespace plreg
