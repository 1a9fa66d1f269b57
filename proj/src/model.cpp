#include "plreg/model.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "plreg/csv.hpp"
#include "plreg/errors.hpp"

namespace plreg {

namespace {

void draw_glorot(Tensor& weight, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : weight.data()) w = dist(rng);
}

LinearLayer make_layer(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  LinearLayer layer{Tensor(in, out), Tensor(1, out)};
  draw_glorot(layer.weight, in, out, rng);
  return layer;
}

void require_width(Var x, std::size_t width, const char* where) {
  if (x.cols() != width) {
    throw ShapeError(std::string(where) + ": expected input width " + std::to_string(width) +
                     ", got " + x.value().shape_str());
  }
}

}  // namespace

std::string to_string(HeadInput h) { return h == HeadInput::Raw ? "raw" : "masked"; }

HeadInput parse_head_input(const std::string& s) {
  if (s == "raw") return HeadInput::Raw;
  if (s == "masked") return HeadInput::Masked;
  throw ConfigError("head_input must be 'raw' or 'masked', got '" + s + "'");
}

namespace {

template <typename P, typename B>
std::vector<P> collect_parameters(B& b) {
  std::vector<P> out;
  for (std::size_t i = 0; i < b.encoder.size(); ++i) {
    out.push_back({"encoder." + std::to_string(i) + ".weight", &b.encoder[i].weight});
    out.push_back({"encoder." + std::to_string(i) + ".bias", &b.encoder[i].bias});
  }
  out.push_back({"head.weight", &b.head.weight});
  out.push_back({"head.bias", &b.head.bias});
  out.push_back({"mask_gen.weight", &b.mask_gen.weight});
  out.push_back({"mask_gen.bias", &b.mask_gen.bias});
  out.push_back({"partial_cls.weight", &b.partial_cls.weight});
  out.push_back({"partial_cls.bias", &b.partial_cls.bias});
  return out;
}

}  // namespace

std::vector<ModelBundle::Param> ModelBundle::parameters() {
  return collect_parameters<Param>(*this);
}

std::vector<ModelBundle::ConstParam> ModelBundle::parameters() const {
  return collect_parameters<ConstParam>(*this);
}

ModelBundle init_bundle(const BundleShape& shape, std::uint64_t seed) {
  if (shape.dim < 2 || shape.num_classes < 2 || shape.depth < 1 || shape.input_dim < 1) {
    throw ConfigError("init_bundle: need dim >= 2, num_classes >= 2, depth >= 1, input_dim >= 1 "
                      "(got dim=" + std::to_string(shape.dim) +
                      ", num_classes=" + std::to_string(shape.num_classes) +
                      ", depth=" + std::to_string(shape.depth) +
                      ", input_dim=" + std::to_string(shape.input_dim) + ")");
  }
  std::mt19937_64 rng(seed);
  ModelBundle b;
  b.shape = shape;
  std::size_t in = shape.input_dim;
  for (std::size_t l = 0; l < shape.depth; ++l) {
    b.encoder.push_back(make_layer(in, shape.dim, rng));
    in = shape.dim;
  }
  b.head = make_layer(shape.dim, shape.num_classes, rng);
  b.mask_gen = make_layer(shape.dim, shape.dim, rng);
  b.partial_cls = make_layer(shape.dim, 1, rng);
  return b;
}

void reinit_mask(ModelBundle& bundle, std::uint64_t seed, bool include_partial_cls) {
  std::mt19937_64 rng(seed);
  bundle.mask_gen = make_layer(bundle.dim(), bundle.dim(), rng);
  if (include_partial_cls) bundle.partial_cls = make_layer(bundle.dim(), 1, rng);
}

void expand_head(ModelBundle& bundle, std::size_t num_classes, std::uint64_t seed) {
  const std::size_t old = bundle.head.out();
  if (num_classes < old) {
    throw ContractError("expand_head: cannot shrink head from " + std::to_string(old) + " to " +
                        std::to_string(num_classes) + " classes");
  }
  if (num_classes == old) return;
  std::mt19937_64 rng(seed);
  LinearLayer fresh = make_layer(bundle.dim(), num_classes, rng);
  for (std::size_t i = 0; i < bundle.dim(); ++i)
    for (std::size_t j = 0; j < old; ++j) fresh.weight(i, j) = bundle.head.weight(i, j);
  for (std::size_t j = 0; j < old; ++j) fresh.bias[j] = bundle.head.bias[j];
  bundle.head = std::move(fresh);
  bundle.shape.num_classes = num_classes;
}

double checksum(const LinearLayer& layer) {
  double s = 0.0;
  for (std::size_t i = 0; i < layer.weight.size(); ++i) s += layer.weight[i] * static_cast<double>(i + 1);
  for (std::size_t i = 0; i < layer.bias.size(); ++i) s += layer.bias[i] * static_cast<double>(i + 7);
  return s;
}

// ---------------------------------------------------------------------------

std::vector<Var> BundleVars::all() const {
  std::vector<Var> out;
  for (const LayerVars& l : encoder) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  for (const LayerVars* l : {&head, &mask_gen, &partial_cls}) {
    out.push_back(l->weight);
    out.push_back(l->bias);
  }
  return out;
}

BundleVars bind(Graph& graph, const ModelBundle& bundle, bool trainable) {
  auto put = [&](const LinearLayer& layer) {
    if (trainable) return LayerVars{graph.leaf(layer.weight), graph.leaf(layer.bias)};
    return LayerVars{graph.constant(layer.weight), graph.constant(layer.bias)};
  };
  BundleVars vars;
  vars.shape = bundle.shape;
  for (const LinearLayer& l : bundle.encoder) vars.encoder.push_back(put(l));
  vars.head = put(bundle.head);
  vars.mask_gen = put(bundle.mask_gen);
  vars.partial_cls = put(bundle.partial_cls);
  return vars;
}

Var affine(const LayerVars& layer, Var x) { return add_row(matmul(x, layer.weight), layer.bias); }

Var encode(const BundleVars& vars, Var x) {
  require_width(x, vars.encoder.front().weight.rows(), "encode");
  Var h = x;
  for (std::size_t l = 0; l < vars.encoder.size(); ++l) {
    h = affine(vars.encoder[l], h);
    if (l + 1 < vars.encoder.size()) h = relu(h);
  }
  return h;
}

Var mask_forward(const BundleVars& vars, Var z) {
  require_width(z, vars.mask_gen.weight.rows(), "mask_forward");
  return sigmoid(affine(vars.mask_gen, z));
}

Var head_forward(const BundleVars& vars, Var zin) {
  require_width(zin, vars.head.weight.rows(), "head_forward");
  return affine(vars.head, zin);
}

Var partial_forward(const BundleVars& vars, Var zcat) {
  require_width(zcat, vars.partial_cls.weight.rows(), "partial_forward");
  return sigmoid(affine(vars.partial_cls, zcat));
}

ForwardPass forward(const BundleVars& vars, Var x) {
  ForwardPass f;
  f.z = encode(vars, x);
  f.mask = mask_forward(vars, f.z);
  f.defined = vars.shape.use_mask ? mul(f.z, f.mask) : f.z;
  f.head_in = vars.shape.head_input == HeadInput::Masked ? f.defined : f.z;
  f.logits = head_forward(vars, f.head_in);
  return f;
}

Tensor predict_logits(const ModelBundle& bundle, const Tensor& x) {
  Graph g;
  BundleVars vars = bind(g, bundle, false);
  return forward(vars, g.constant(x)).logits.value();
}

std::vector<int> predict(const ModelBundle& bundle, const Tensor& x) {
  const Tensor logits = predict_logits(bundle, x);
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

// ---------------------------------------------------------------------------

MaskReport make_mask_report(const Tensor& w, std::size_t session) {
  MaskReport r;
  r.session = session;
  r.weights = w;
  r.row_importance.resize(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) s += std::abs(w(i, j));
    r.row_importance[i] = w.cols() ? s / static_cast<double>(w.cols()) : 0.0;
  }
  r.normalized.assign(w.rows(), 0.0);
  r.binarized.assign(w.rows(), 0);
  if (w.rows() == 0) return r;
  const auto [lo, hi] = std::minmax_element(r.row_importance.begin(), r.row_importance.end());
  const double range = *hi - *lo;
  if (range > 0.0) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
      r.normalized[i] = (r.row_importance[i] - *lo) / range;
      r.binarized[i] = r.normalized[i] > 0.5 ? 1 : 0;
    }
  }
  return r;
}

MaskReport snapshot_mask(const ModelBundle& bundle, std::size_t session) {
  return make_mask_report(bundle.mask_gen.weight, session);
}

std::size_t hamming_distance(const MaskReport& a, const MaskReport& b) {
  if (a.binarized.size() != b.binarized.size()) {
    throw ShapeError("hamming_distance: mask reports have different widths");
  }
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.binarized.size(); ++i) d += a.binarized[i] != b.binarized[i];
  return d;
}

void write_mask_csv(std::ostream& os, std::span<const MaskReport> reports) {
  os << "session,dim_index,normalized_importance,binarized\n";
  for (const MaskReport& r : reports)
    for (std::size_t i = 0; i < r.normalized.size(); ++i)
      os << r.session << ',' << i << ',' << format_number(r.normalized[i]) << ',' << r.binarized[i]
         << '\n';
}

}  // namespace plreg
