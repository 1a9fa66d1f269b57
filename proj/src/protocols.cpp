#include "plreg/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "plreg/csv.hpp"
#include "plreg/errors.hpp"

namespace plreg {

namespace {

// Offsets of each domain on the domain dims, fixed by spec.seed.
std::vector<std::vector<double>> domain_offsets(const SyntheticSpec& spec) {
  std::vector<std::vector<double>> offsets(spec.num_domains,
                                           std::vector<double>(spec.domain_dims, 0.0));
  if (spec.domain_dims == 0) return offsets;
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& off : offsets) {
    double norm = 0.0;
    for (double& v : off) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : off) v = norm > 0.0 ? v / norm * spec.domain_shift : 0.0;
  }
  return offsets;
}

std::vector<double> prototype_with(const SyntheticSpec& spec,
                                   const std::vector<std::vector<double>>& offsets, int class_id,
                                   int domain_id) {
  std::vector<double> x(spec.resolved_input_dim(), 0.0);
  const std::size_t s = spec.semantic_dims_per_class;
  for (std::size_t k = 0; k < s; ++k) x[static_cast<std::size_t>(class_id) * s + k] = 1.0;
  const std::size_t domain_start = spec.num_classes * s + spec.noise_dims;
  for (std::size_t k = 0; k < spec.domain_dims; ++k)
    x[domain_start + k] = offsets[static_cast<std::size_t>(domain_id)][k];
  return x;
}

}  // namespace

std::size_t SyntheticSpec::min_input_dim() const {
  return num_classes * semantic_dims_per_class + noise_dims + domain_dims;
}

std::size_t SyntheticSpec::resolved_input_dim() const {
  return input_dim == 0 ? min_input_dim() : input_dim;
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (num_known >= num_classes) {
    throw ConfigError("num_known (" + std::to_string(num_known) + ") must be < num_classes (" +
                      std::to_string(num_classes) + ")");
  }
  if (semantic_dims_per_class < 1) throw ConfigError("semantic_dims_per_class must be >= 1");
  if (input_dim != 0 && input_dim < min_input_dim()) {
    throw ConfigError("input_dim " + std::to_string(input_dim) + " is below the required " +
                      std::to_string(min_input_dim()));
  }
  if (!(imbalance_ratio > 0.0 && imbalance_ratio <= 1.0)) {
    throw ConfigError("imbalance_ratio must lie in (0,1], got " + std::to_string(imbalance_ratio));
  }
  if (num_domains < 1) throw ConfigError("num_domains must be >= 1");
  if (samples_per_class_max < 1) throw ConfigError("samples_per_class_max must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw ConfigError("noise_sigma must be finite and >= 0");
}

std::string to_string(CilStyle s) { return s == CilStyle::Ordered ? "ordered" : "shuffled"; }

CilStyle parse_cil_style(const std::string& s) {
  if (s == "ordered") return CilStyle::Ordered;
  if (s == "shuffled") return CilStyle::Shuffled;
  throw ConfigError("style must be 'ordered' or 'shuffled', got '" + s + "'");
}

std::vector<std::size_t> long_tail_counts(std::size_t num_classes, std::size_t n_max, double rho) {
  std::vector<std::size_t> counts(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double expo = num_classes > 1 ? static_cast<double>(c) / static_cast<double>(num_classes - 1) : 0.0;
    const double n = std::round(static_cast<double>(n_max) * std::pow(rho, expo));
    counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(n));
  }
  return counts;
}

std::vector<double> prototype(const SyntheticSpec& spec, int class_id, int domain_id) {
  return prototype_with(spec, domain_offsets(spec), class_id, domain_id);
}

std::vector<Sample> generate_with_counts(const SyntheticSpec& spec,
                                         std::span<const std::size_t> counts,
                                         std::span<const int> classes, std::uint64_t seed) {
  spec.validate();
  if (counts.size() != classes.size()) {
    throw ContractError("generate_with_counts: counts and classes differ in length");
  }
  const auto offsets = domain_offsets(spec);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const int c = classes[i];
    if (c < 0 || static_cast<std::size_t>(c) >= spec.num_classes) {
      throw ContractError("generate_with_counts: class " + std::to_string(c) + " out of range");
    }
    for (std::size_t d = 0; d < spec.num_domains; ++d) {
      const auto proto = prototype_with(spec, offsets, c, static_cast<int>(d));
      for (std::size_t n = 0; n < counts[i]; ++n) {
        Sample s{proto, c, static_cast<int>(d), false};
        if (spec.noise_sigma > 0.0)
          for (double& v : s.features) v += spec.noise_sigma * noise(rng);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

std::vector<Sample> generate(const SyntheticSpec& spec) {
  const auto counts =
      long_tail_counts(spec.num_classes, spec.samples_per_class_max, spec.imbalance_ratio);
  std::vector<int> classes(spec.num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  return generate_with_counts(spec, counts, classes, spec.seed);
}

std::vector<Sample> generate_balanced(const SyntheticSpec& spec, std::span<const int> classes,
                                      std::size_t per_class, std::uint64_t seed) {
  std::vector<std::size_t> counts(classes.size(), per_class);
  return generate_with_counts(spec, counts, classes, seed);
}

// ---------------------------------------------------------------------------

TaskSplit make_gcd_split(std::span<const Sample> samples, std::size_t num_known,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::map<int, std::vector<std::size_t>> by_class;
  int max_class = -1;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    by_class[samples[i].class_id].push_back(i);
    max_class = std::max(max_class, samples[i].class_id);
  }
  std::vector<char> labeled(samples.size(), 0);
  for (auto& [c, idx] : by_class) {
    if (static_cast<std::size_t>(c) >= num_known || idx.size() < 2) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < idx.size() / 2; ++k) labeled[idx[k]] = 1;
  }
  TaskSplit split;
  for (std::size_t c = 0; c < num_known; ++c) split.known_classes.insert(static_cast<int>(c));
  split.total_class_count = static_cast<std::size_t>(max_class + 1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Sample s = samples[i];
    s.labeled = labeled[i] != 0;
    (s.labeled ? split.labeled : split.unlabeled).push_back(std::move(s));
  }
  return split;
}

TaskSplit build_gcd_task(const SyntheticSpec& spec, std::uint64_t split_seed) {
  const auto pool = generate(spec);
  TaskSplit split = make_gcd_split(pool, spec.num_known, split_seed);
  split.total_class_count = spec.num_classes;
  std::vector<int> all(spec.num_classes);
  std::iota(all.begin(), all.end(), 0);
  split.test = generate_balanced(spec, all, spec.samples_per_class_max,
                                 spec.seed + 0x5deece66dULL);
  return split;
}

TaskSplit make_mdg_gcd_splits(std::span<const Sample> samples, std::size_t num_known,
                              int held_out_domain, std::uint64_t seed) {
  int num_domains = 0;
  for (const Sample& s : samples) num_domains = std::max(num_domains, s.domain_id + 1);
  if (num_domains < 2) {
    throw ContractError("make_mdg_gcd_splits: needs at least 2 domains, found " +
                        std::to_string(num_domains));
  }
  if (held_out_domain < 0 || held_out_domain >= num_domains) {
    throw ContractError("make_mdg_gcd_splits: unknown domain " + std::to_string(held_out_domain) +
                        " (domains are 0.." + std::to_string(num_domains - 1) + ")");
  }
  std::vector<Sample> seen;
  std::vector<Sample> test;
  for (const Sample& s : samples) (s.domain_id == held_out_domain ? test : seen).push_back(s);
  TaskSplit split = make_gcd_split(seen, num_known, seed);
  int max_class = -1;
  for (const Sample& s : samples) max_class = std::max(max_class, s.class_id);
  split.total_class_count = static_cast<std::size_t>(max_class + 1);
  for (Sample& s : test) s.labeled = false;
  split.test = std::move(test);
  return split;
}

CilSchedule make_cil_schedule(const SyntheticSpec& spec, std::size_t num_incremental,
                              CilStyle style, std::uint64_t seed) {
  spec.validate();
  const std::size_t k = spec.num_classes;
  const auto counts = long_tail_counts(k, spec.samples_per_class_max, spec.imbalance_ratio);

  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  if (style == CilStyle::Ordered) {
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)]; });
  } else {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  std::vector<std::size_t> sizes;
  if (num_incremental == 0) {
    sizes.push_back(k);
  } else {
    const std::size_t first = (k + 1) / 2;
    const std::size_t rest = k - first;
    if (rest % num_incremental != 0 || rest / num_incremental == 0) {
      std::string valid;
      for (std::size_t s = 1; s <= rest; ++s)
        if (rest % s == 0) valid += (valid.empty() ? "" : ", ") + std::to_string(s);
      throw ConfigError("cannot split " + std::to_string(rest) + " incremental classes into " +
                        std::to_string(num_incremental) + " sessions; valid session counts: 0, " +
                        valid);
    }
    sizes.push_back(first);
    sizes.insert(sizes.end(), num_incremental, rest / num_incremental);
  }

  CilSchedule schedule;
  schedule.style = style;
  std::size_t pos = 0;
  for (std::size_t size : sizes) {
    CilSession session;
    for (std::size_t i = 0; i < size; ++i, ++pos) {
      session.classes.push_back(order[pos]);
      session.counts.push_back(counts[static_cast<std::size_t>(order[pos])]);
    }
    schedule.sessions.push_back(std::move(session));
  }
  return schedule;
}

std::set<std::size_t> ground_truth_defined_dims(const SyntheticSpec& spec,
                                                std::span<const int> classes) {
  std::set<std::size_t> dims;
  const std::size_t s = spec.semantic_dims_per_class;
  for (int c : classes)
    for (std::size_t k = 0; k < s; ++k) dims.insert(static_cast<std::size_t>(c) * s + k);
  return dims;
}

Tensor features_of(std::span<const Sample> samples) {
  if (samples.empty()) return Tensor();
  const std::size_t d = samples.front().features.size();
  std::vector<double> values;
  values.reserve(samples.size() * d);
  for (const Sample& s : samples) {
    if (s.features.size() != d) throw ShapeError("features_of: samples have different widths");
    values.insert(values.end(), s.features.begin(), s.features.end());
  }
  return Tensor(samples.size(), d, std::move(values));
}

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(s.class_id);
  return out;
}

void write_samples_csv(std::ostream& os, std::span<const Sample> samples) {
  const std::size_t d = samples.empty() ? 0 : samples.front().features.size();
  os << "class_id,domain_id,labeled";
  for (std::size_t k = 0; k < d; ++k) os << ",f" << k;
  os << '\n';
  for (const Sample& s : samples) {
    os << s.class_id << ',' << s.domain_id << ',' << (s.labeled ? 1 : 0);
    for (double v : s.features) os << ',' << format_number(v);
    os << '\n';
  }
}

void write_schedule_manifest(std::ostream& os, const CilSchedule& schedule) {
  os << "style: " << to_string(schedule.style) << '\n';
  os << "sessions: " << schedule.sessions.size() << '\n';
  for (std::size_t i = 0; i < schedule.sessions.size(); ++i) {
    const CilSession& s = schedule.sessions[i];
    os << "session " << i << '\n';
    for (std::size_t k = 0; k < s.classes.size(); ++k)
      os << "  class " << s.classes[k] << " count " << s.counts[k] << '\n';
  }
}

}  // namespace plreg
