#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "plreg/autodiff.hpp"
#include "plreg/tensor.hpp"

namespace plreg {

/// Which latent features the class head consumes.
enum class HeadInput { Raw, Masked };

std::string to_string(HeadInput h);
HeadInput parse_head_input(const std::string& s);

/// y = x * weight + bias, weight is [in x out], bias is [1 x out].
struct LinearLayer {
  Tensor weight;
  Tensor bias;

  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }
};

struct BundleShape {
  std::size_t input_dim = 0;
  std::size_t dim = 0;          // latent width
  std::size_t num_classes = 0;  // head width
  std::size_t depth = 2;        // encoder layers
  HeadInput head_input = HeadInput::Masked;
  // false: no partial-logic gating anywhere (baselines); the mask generator
  // still exists so its losses can be traced.
  bool use_mask = true;
};

/// Encoder g, class head h, mask generator and defined/undefined classifier C.
struct ModelBundle {
  std::vector<LinearLayer> encoder;
  LinearLayer head;
  LinearLayer mask_gen;
  LinearLayer partial_cls;
  BundleShape shape;

  std::size_t dim() const { return shape.dim; }
  std::size_t num_classes() const { return head.out(); }

  struct Param {
    std::string name;
    Tensor* value;
  };
  struct ConstParam {
    std::string name;
    const Tensor* value;
  };
  /// Flat registry in a fixed order: encoder.i.{weight,bias}, head, mask_gen, partial_cls.
  std::vector<Param> parameters();
  std::vector<ConstParam> parameters() const;
};

/// Glorot-uniform weights and zero biases, deterministic in `seed`.
ModelBundle init_bundle(const BundleShape& shape, std::uint64_t seed);

/// Re-draws the partial-logic block (mask generator, optionally C) from the init distribution.
void reinit_mask(ModelBundle& bundle, std::uint64_t seed, bool include_partial_cls = true);

/// Grows the head to `num_classes` columns. Existing columns are kept; new ones are freshly drawn.
void expand_head(ModelBundle& bundle, std::size_t num_classes, std::uint64_t seed);

/// Parameter checksum used to detect silent re-initialization.
double checksum(const LinearLayer& layer);

// --- graph binding --------------------------------------------------------

struct LayerVars {
  Var weight;
  Var bias;
};

struct BundleVars {
  std::vector<LayerVars> encoder;
  LayerVars head;
  LayerVars mask_gen;
  LayerVars partial_cls;
  BundleShape shape;

  /// Same order as ModelBundle::parameters().
  std::vector<Var> all() const;
};

/// Registers every parameter on `graph`, as leaves when `trainable`, else as constants.
BundleVars bind(Graph& graph, const ModelBundle& bundle, bool trainable = true);

Var affine(const LayerVars& layer, Var x);
/// ReLU between layers, none after the last.
Var encode(const BundleVars& vars, Var x);
/// sigmoid(Z * W_mask + b_mask), same shape as Z.
Var mask_forward(const BundleVars& vars, Var z);
Var head_forward(const BundleVars& vars, Var zin);
/// Probability that each row carries defined meaning, [rows x 1].
Var partial_forward(const BundleVars& vars, Var zcat);

/// Every intermediate of one forward pass through the bundle.
struct ForwardPass {
  Var z;        // encoder output
  Var mask;     // partial logic mask
  Var defined;  // z * mask when gating is on, z otherwise
  Var head_in;
  Var logits;
};
ForwardPass forward(const BundleVars& vars, Var x);

/// Logits for a batch without recording gradients.
Tensor predict_logits(const ModelBundle& bundle, const Tensor& x);
/// Row-wise argmax of the logits.
std::vector<int> predict(const ModelBundle& bundle, const Tensor& x);

// --- mask reports -----------------------------------------------------------

/// Per-session summary of the mask generator weights.
///
/// Row importance is the mean absolute weight of each row of W_mask,
/// min-max normalized across rows. Binarization keeps rows whose normalized
/// importance is strictly above 0.5. When all rows have the same importance
/// the normalization is degenerate and every entry is reported as 0.
struct MaskReport {
  std::size_t session = 0;
  Tensor weights;
  std::vector<double> row_importance;
  std::vector<double> normalized;
  std::vector<int> binarized;
};

MaskReport snapshot_mask(const ModelBundle& bundle, std::size_t session);
MaskReport make_mask_report(const Tensor& mask_weights, std::size_t session);
std::size_t hamming_distance(const MaskReport& a, const MaskReport& b);

/// Writes `session,dim_index,normalized_importance,binarized` rows (header first).
void write_mask_csv(std::ostream& os, std::span<const MaskReport> reports);

}  // namespace plreg
