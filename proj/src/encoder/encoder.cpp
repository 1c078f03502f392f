#include "gcot/encoder/encoder.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gcot/error.hpp"
#include "gcot/numcore/kernels.hpp"

namespace gcot::encoder {

namespace {
constexpr const char* kMagic = "GCOT-CKPT";
constexpr int kVersion = 1;
}  // namespace

void EncoderConfig::validate() const {
  if (num_layers < 1 || input_dim < 1 || hidden_dim < 1) {
    throw ConfigError("encoder needs num_layers, input_dim and hidden_dim >= 1");
  }
}

EncoderConfig EncoderWeights::config() const { return {num_layers(), input_dim(), hidden_dim(), final_relu}; }

EncoderWeights init_weights(const EncoderConfig& config, num::Rng& rng) {
  config.validate();
  EncoderWeights w;
  w.final_relu = config.final_relu;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t in = l == 0 ? config.input_dim : config.hidden_dim;
    w.theta.push_back(num::glorot_uniform(in, config.hidden_dim, rng));
  }
  return w;
}

std::vector<Tensor> encode(const Tensor& x, const Tensor& adjacency, const EncoderWeights& w) {
  if (x.cols() != w.input_dim()) {
    throw DimensionError("encode: features " + num::shape_string(x) + " for input dim " +
                         std::to_string(w.input_dim()));
  }
  if (adjacency.rows() != x.rows() || adjacency.cols() != x.rows()) {
    throw DimensionError("encode: adjacency " + num::shape_string(adjacency) + " for " +
                         std::to_string(x.rows()) + " nodes");
  }
  std::vector<Tensor> out;
  const Tensor* prev = &x;
  for (std::size_t l = 0; l < w.num_layers(); ++l) {
    Tensor z = num::matmul(adjacency, num::matmul(*prev, w.theta[l]));
    out.push_back(l + 1 < w.num_layers() || w.final_relu ? num::relu(z) : std::move(z));
    prev = &out.back();
  }
  return out;
}

std::vector<Var> propagate(const graph::PropagationPlan& plan, Var first_projection, std::span<const Var> theta,
                           bool final_relu) {
  if (theta.size() != plan.layers()) {
    throw DimensionError("propagate: " + std::to_string(theta.size()) + " weight matrices for a " +
                         std::to_string(plan.layers()) + "-layer plan");
  }
  if (first_projection.rows() != plan.inputs().size()) {
    throw DimensionError("propagate: projection has " + std::to_string(first_projection.rows()) +
                         " rows, plan needs " + std::to_string(plan.inputs().size()));
  }
  const auto activate = [&](std::size_t l, Var z) { return l + 1 < plan.layers() || final_relu ? num::relu(z) : z; };
  std::vector<Var> layers;
  layers.push_back(activate(0, num::spmm(plan.blocks[0], first_projection, plan.blocks_t[0])));
  for (std::size_t l = 1; l < plan.layers(); ++l) {
    Var aggregated = num::spmm(plan.blocks[l], layers.back(), plan.blocks_t[l]);
    layers.push_back(activate(l, num::matmul(aggregated, theta[l])));
  }
  return layers;
}

std::vector<Tensor> encode_sparse(const num::SparseMatrix& features, const num::SparseMatrix& adjacency,
                                  const EncoderWeights& w) {
  if (features.cols() != w.input_dim() || adjacency.rows() != features.rows()) {
    throw DimensionError("encode_sparse: features (" + std::to_string(features.rows()) + "×" +
                         std::to_string(features.cols()) + ") for input dim " + std::to_string(w.input_dim()));
  }
  std::vector<Tensor> out;
  Tensor projected, aggregated;
  num::kernels::spmm(features, w.theta[0], projected);
  num::kernels::spmm(adjacency, projected, aggregated);
  const auto activate = [&](std::size_t l, Tensor& z) { return l + 1 < w.num_layers() || w.final_relu ? num::relu(z) : z; };
  out.push_back(activate(0, aggregated));
  for (std::size_t l = 1; l < w.num_layers(); ++l) {
    num::kernels::spmm(adjacency, out.back(), aggregated);
    num::kernels::gemm(aggregated, w.theta[l], projected);
    out.push_back(activate(l, projected));
  }
  return out;
}

std::uint64_t digest(const EncoderWeights& w) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Tensor& t : w.theta) {
    const std::uint64_t dims[2] = {t.rows(), t.cols()};
    mix(dims, sizeof dims);
    mix(t.data().data(), t.size() * sizeof(double));
  }
  return h;
}

void save_checkpoint(const EncoderWeights& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << kMagic << " v" << kVersion << "\n" << w.num_layers() << ' ' << w.input_dim() << ' ' << w.hidden_dim() << "\n";
  char buf[32];
  for (const Tensor& t : w.theta) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", t(r, c));
        if (c) out << ' ';
        out << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

EncoderWeights load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing checkpoint " + path.string());
  std::string magic_line;
  std::getline(in, magic_line);
  std::istringstream magic(magic_line);
  std::string tag, version;
  magic >> tag >> version;
  if (tag != kMagic) throw FormatError(path.string() + ": not an encoder checkpoint");
  if (version != "v" + std::to_string(kVersion)) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + version + " (reader is v1)");
  }
  std::string dims_line;
  std::size_t layers = 0, d = 0, h = 0;
  if (!std::getline(in, dims_line) || !(std::istringstream(dims_line) >> layers >> d >> h) || layers == 0 ||
      d == 0 || h == 0) {
    throw CorruptionError(path.string() + ": bad dimension header");
  }
  EncoderWeights w;
  std::string line;
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor t(l == 0 ? d : h, h);
    for (std::size_t r = 0; r < t.rows(); ++r) {
      if (!std::getline(in, line)) throw CorruptionError(path.string() + ": truncated payload");
      const char* p = line.data();
      const char* end = line.data() + line.size();
      for (std::size_t c = 0; c < t.cols(); ++c) {
        while (p < end && *p == ' ') ++p;
        auto [next, ec] = std::from_chars(p, end, t(r, c));
        if (ec != std::errc()) throw CorruptionError(path.string() + ": malformed or short weight row");
        p = next;
      }
      while (p < end && (*p == ' ' || *p == '\r')) ++p;
      if (p != end) throw CorruptionError(path.string() + ": weight row longer than header says");
    }
    w.theta.push_back(std::move(t));
  }
  while (std::getline(in, line)) {
    if (!line.empty()) throw CorruptionError(path.string() + ": trailing data after payload");
  }
  w.frozen = true;
  return w;
}

}  // namespace gcot::encoder
