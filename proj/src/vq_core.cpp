#include "artkit/vq_core.hpp"

#include "artkit/error.hpp"
#include "artkit/kdtree.hpp"
#include "artkit/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace artkit::vq {

namespace {

std::string dims_str(const GridDims& d) {
  return std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z);
}

void require_dims(const GridDims& actual, const GridDims& expected, const char* what) {
  if (!(actual == expected)) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + " is " + dims_str(actual) + ", expected " + dims_str(expected));
  }
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

VqGeometry VqGeometry::for_profile(const CodecProfile& profile, int resolution, int latent_dim) {
  VqGeometry g{{resolution, resolution, resolution}, profile.dims, latent_dim};
  (void)g.block();
  return g;
}

GridDims VqGeometry::block() const {
  if (latent.x <= 0 || latent.y <= 0 || latent.z <= 0 || grid.x % latent.x != 0 || grid.y % latent.y != 0 ||
      grid.z % latent.z != 0) {
    throw Error(ErrorCode::DimensionMismatch,
                "grid " + dims_str(grid) + " is not divisible into latent " + dims_str(latent));
  }
  return {grid.x / latent.x, grid.y / latent.y, grid.z / latent.z};
}

OccupancyGrid occupancy_downsample(const OccupancyGrid& grid, const GridDims& latent) {
  const VqGeometry geometry{grid.dims(), latent, 1};
  const GridDims block = geometry.block();
  OccupancyGrid mask(latent);
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    if (!grid.at_index(i)) continue;
    const CellCoord c = grid.coord(i);
    mask.set(c.x / block.x, c.y / block.y, c.z / block.z);
  }
  return mask;
}

Eigen::MatrixXd extract_blocks(const OccupancyGrid& grid, const VqGeometry& geometry) {
  require_dims(grid.dims(), geometry.grid, "occupancy grid");
  const GridDims block = geometry.block();
  const GridDims& latent = geometry.latent;
  Eigen::MatrixXd blocks = Eigen::MatrixXd::Zero(geometry.block_voxels(), geometry.cell_count());
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    if (!grid.at_index(i)) continue;
    const CellCoord c = grid.coord(i);
    const auto cell = latent.linear(c.x / block.x, c.y / block.y, c.z / block.z);
    const auto row = block.linear(c.x % block.x, c.y % block.y, c.z % block.z);
    blocks(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(cell)) = 1.0;
  }
  return blocks;
}

namespace {

OccupancyGrid assemble_blocks(const Eigen::MatrixXd& logits, const VqGeometry& geometry, double threshold) {
  const GridDims block = geometry.block();
  OccupancyGrid grid(geometry.grid);
  for (int cx = 0; cx < geometry.latent.x; ++cx) {
    for (int cy = 0; cy < geometry.latent.y; ++cy) {
      for (int cz = 0; cz < geometry.latent.z; ++cz) {
        const auto cell = static_cast<Eigen::Index>(geometry.latent.linear(cx, cy, cz));
        for (int bx = 0; bx < block.x; ++bx) {
          for (int by = 0; by < block.y; ++by) {
            for (int bz = 0; bz < block.z; ++bz) {
              const auto row = static_cast<Eigen::Index>(block.linear(bx, by, bz));
              const double p = 1.0 / (1.0 + std::exp(-logits(row, cell)));
              if (p > threshold) grid.set(cx * block.x + bx, cy * block.y + by, cz * block.z + bz);
            }
          }
        }
      }
    }
  }
  return grid;
}

void check_encoder(const EncoderParams& p, const VqGeometry& g) {
  if (p.weight.rows() != g.latent_dim || p.weight.cols() != g.block_voxels() || p.bias.size() != g.latent_dim) {
    throw Error(ErrorCode::DimensionMismatch, "encoder parameters do not match block/latent sizes");
  }
}

void check_decoder(const DecoderParams& p, const VqGeometry& g) {
  if (p.weight.rows() != g.block_voxels() || p.weight.cols() != g.latent_dim || p.bias.size() != g.block_voxels()) {
    throw Error(ErrorCode::DimensionMismatch, "decoder parameters do not match block/latent sizes");
  }
}

LatentGrid encode_blocks(const Eigen::MatrixXd& blocks, const EncoderParams& params, const GridDims& latent) {
  LatentGrid z{latent, params.weight * blocks};
  z.features.colwise() += params.bias;
  return z;
}

int nearest_entry(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::MatrixXd& entries, int first) {
  int best = first;
  double best_d = std::numeric_limits<double>::infinity();
  const Eigen::Index n = entries.cols();
  for (Eigen::Index j = first; j < n; ++j) {
    const double d = (entries.col(j) - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

double bce(double logit, double target) {
  const double l = std::clamp(logit, -kLogitClamp, kLogitClamp);
  return std::max(l, 0.0) - l * target + std::log1p(std::exp(-std::abs(l)));
}

OccupancyGrid effective_mask(const OccupancyGrid& input, const VqModel& model) {
  if (model.codebook.zero_token) return occupancy_downsample(input, model.geometry.latent);
  OccupancyGrid all(model.geometry.latent);
  for (std::size_t i = 0; i < all.cell_count(); ++i) all.set_index(i);
  return all;
}

}  // namespace

LatentGrid encode(const OccupancyGrid& grid, const EncoderParams& params, const VqGeometry& geometry) {
  check_encoder(params, geometry);
  return encode_blocks(extract_blocks(grid, geometry), params, geometry.latent);
}

Quantized quantize(const LatentGrid& latent, const OccupancyGrid& mask, const Codebook& codebook) {
  if (codebook.size() == 0) throw Error(ErrorCode::EmptyCodebook, "codebook has no entries");
  if (codebook.zero_token && codebook.size() < 2) {
    throw Error(ErrorCode::EmptyCodebook, "codebook needs at least one entry besides the zero token");
  }
  if (codebook.dim() != latent.features.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "codebook dimension differs from latent dimension");
  }
  require_dims(mask.dims(), latent.dims, "occupancy mask");
  if (static_cast<std::size_t>(latent.features.cols()) != latent.dims.cell_count()) {
    throw Error(ErrorCode::DimensionMismatch, "latent feature count does not match dims");
  }
  Quantized q{IndexGrid(latent.dims), LatentGrid{latent.dims, Eigen::MatrixXd(latent.features.rows(), latent.features.cols())}};
  const int first = codebook.zero_token ? 1 : 0;
  for (Eigen::Index i = 0; i < latent.features.cols(); ++i) {
    int k = 0;
    if (!codebook.zero_token || mask.at_index(static_cast<std::size_t>(i))) {
      k = nearest_entry(latent.features.col(i), codebook.entries, first);
    }
    q.indices.indices[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(k);
    q.features.features.col(i) = codebook.entries.col(k);
  }
  return q;
}

Decoded decode(const LatentGrid& quantized, const DecoderParams& params, const VqGeometry& geometry, double threshold) {
  check_decoder(params, geometry);
  require_dims(quantized.dims, geometry.latent, "latent grid");
  if (quantized.features.rows() != geometry.latent_dim) {
    throw Error(ErrorCode::DimensionMismatch, "latent feature dimension differs from decoder");
  }
  Eigen::MatrixXd logits = params.weight * quantized.features;
  logits.colwise() += params.bias;
  OccupancyGrid grid = assemble_blocks(logits, geometry, threshold);
  return {std::move(grid), std::move(logits)};
}

namespace {

LossTerms loss_from_blocks(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& logits, const LatentGrid& z,
                           const LatentGrid& z_hat, const OccupancyGrid& mask, double beta) {
  LossTerms loss;
  double sum = 0.0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) sum += bce(logits(r, c), targets(r, c));
  }
  loss.recon = sum / static_cast<double>(logits.size());
  double sq = 0.0;
  std::size_t masked = 0;
  for (Eigen::Index c = 0; c < z.features.cols(); ++c) {
    if (!mask.at_index(static_cast<std::size_t>(c))) continue;
    sq += (z.features.col(c) - z_hat.features.col(c)).squaredNorm();
    ++masked;
  }
  if (masked > 0) {
    loss.codebook = sq / static_cast<double>(masked);
    loss.commit = loss.codebook;
  }
  loss.total = loss.recon + loss.codebook + beta * loss.commit;
  return loss;
}

}  // namespace

LossTerms vq_loss(const OccupancyGrid& input, const Eigen::MatrixXd& logits, const LatentGrid& z,
                  const LatentGrid& z_hat, const OccupancyGrid& mask, double beta, const VqGeometry& geometry) {
  const Eigen::MatrixXd targets = extract_blocks(input, geometry);
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "logit shape does not match the block layout");
  }
  if (z.features.rows() != z_hat.features.rows() || z.features.cols() != z_hat.features.cols() ||
      z.features.cols() != targets.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "latent shapes disagree");
  }
  require_dims(mask.dims(), geometry.latent, "occupancy mask");
  return loss_from_blocks(targets, logits, z, z_hat, mask, beta);
}

ForwardPass forward(const OccupancyGrid& input, const VqModel& model, double beta, bool bypass) {
  const VqGeometry& g = model.geometry;
  check_encoder(model.encoder, g);
  check_decoder(model.decoder, g);
  ForwardPass pass;
  pass.bypass = bypass;
  pass.blocks = extract_blocks(input, g);
  pass.mask = effective_mask(input, model);
  pass.z = encode_blocks(pass.blocks, model.encoder, g.latent);
  pass.quantized = quantize(pass.z, pass.mask, model.codebook);
  if (bypass) {
    for (Eigen::Index c = 0; c < pass.z.features.cols(); ++c) {
      if (pass.mask.at_index(static_cast<std::size_t>(c))) pass.quantized.features.features.col(c) = pass.z.features.col(c);
    }
  }
  pass.logits = model.decoder.weight * pass.quantized.features.features;
  pass.logits.colwise() += model.decoder.bias;
  pass.loss = loss_from_blocks(pass.blocks, pass.logits, pass.z, pass.quantized.features, pass.mask, beta);
  return pass;
}

Gradients Gradients::zeros_like(const VqModel& model) {
  Gradients g;
  g.encoder.weight = Eigen::MatrixXd::Zero(model.encoder.weight.rows(), model.encoder.weight.cols());
  g.encoder.bias = Eigen::VectorXd::Zero(model.encoder.bias.size());
  g.decoder.weight = Eigen::MatrixXd::Zero(model.decoder.weight.rows(), model.decoder.weight.cols());
  g.decoder.bias = Eigen::VectorXd::Zero(model.decoder.bias.size());
  g.codebook = Eigen::MatrixXd::Zero(model.codebook.entries.rows(), model.codebook.entries.cols());
  return g;
}

Gradients& Gradients::operator+=(const Gradients& o) {
  encoder.weight += o.encoder.weight;
  encoder.bias += o.encoder.bias;
  decoder.weight += o.decoder.weight;
  decoder.bias += o.decoder.bias;
  codebook += o.codebook;
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  encoder.weight *= s;
  encoder.bias *= s;
  decoder.weight *= s;
  decoder.bias *= s;
  codebook *= s;
  return *this;
}

Gradients backward(const ForwardPass& pass, const VqModel& model, double beta) {
  Gradients grad = Gradients::zeros_like(model);
  const Eigen::MatrixXd& logits = pass.logits;
  const double inv_n = 1.0 / static_cast<double>(logits.size());

  // d recon / d logits; the clamp is flat outside +-30.
  Eigen::MatrixXd dlogits(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const double l = logits(r, c);
      dlogits(r, c) = std::abs(l) > kLogitClamp ? 0.0 : (1.0 / (1.0 + std::exp(-l)) - pass.blocks(r, c)) * inv_n;
    }
  }
  const Eigen::MatrixXd& z_hat = pass.quantized.features.features;
  grad.decoder.weight.noalias() = dlogits * z_hat.transpose();
  grad.decoder.bias = dlogits.rowwise().sum();
  const Eigen::MatrixXd dz_hat = model.decoder.weight.transpose() * dlogits;

  const Eigen::Index cells = pass.z.features.cols();
  std::size_t masked = 0;
  for (Eigen::Index c = 0; c < cells; ++c) masked += pass.mask.at_index(static_cast<std::size_t>(c)) ? 1 : 0;
  const double vq_scale = masked > 0 ? 2.0 / static_cast<double>(masked) : 0.0;

  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(pass.z.features.rows(), cells);
  for (Eigen::Index c = 0; c < cells; ++c) {
    if (!pass.mask.at_index(static_cast<std::size_t>(c))) continue;
    dz.col(c) = dz_hat.col(c);  // straight-through
    if (pass.bypass) continue;
    const auto diff = (pass.z.features.col(c) - z_hat.col(c)).eval();
    dz.col(c) += beta * vq_scale * diff;
    const auto k = static_cast<Eigen::Index>(pass.quantized.indices.indices[static_cast<std::size_t>(c)]);
    grad.codebook.col(k) -= vq_scale * diff;
  }
  if (model.codebook.zero_token) grad.codebook.col(0).setZero();
  grad.encoder.weight.noalias() = dz * pass.blocks.transpose();
  grad.encoder.bias = dz.rowwise().sum();
  return grad;
}

Codebook init_codebook(const Eigen::MatrixXd& samples, int size, std::uint64_t seed, int iterations, bool zero_token) {
  if (samples.cols() == 0) throw Error(ErrorCode::NoSamples, "no latent samples for codebook initialization");
  if (size < (zero_token ? 2 : 1)) throw Error(ErrorCode::EmptyCodebook, "codebook size too small");
  const Eigen::Index dim = samples.rows();
  const Eigen::Index n = samples.cols();
  const int first = zero_token ? 1 : 0;
  const Eigen::Index k = size - first;

  Rng rng(seed);
  Eigen::MatrixXd centers(dim, k);
  // k-means++ seeding; once every distinct sample is a center the remaining
  // seeds are drawn uniformly with replacement.
  Eigen::VectorXd best = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index pick = 0;
    const double total = c == 0 ? 0.0 : best.sum();
    if (c == 0 || !(total > 0.0)) {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    } else {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= best[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.col(c) = samples.col(pick);
    best = best.cwiseMin((samples.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
  }

  const Eigen::VectorXd sample_sq = samples.colwise().squaredNorm().transpose();
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd center_sq = centers.colwise().squaredNorm().transpose();
    const Eigen::MatrixXd cross = centers.transpose() * samples;  // k x n
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      double dmin = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = center_sq[c] - 2.0 * cross(c, i) + sample_sq[i];
        if (d < dmin) {
          dmin = d;
          arg = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = arg;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(dim, k);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(assign[static_cast<std::size_t>(i)]) += samples.col(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[c] > 0.0) centers.col(c) = sums.col(c) / counts[c];
    }
  }

  Codebook book;
  book.zero_token = zero_token;
  book.entries = Eigen::MatrixXd::Zero(dim, size);
  book.entries.rightCols(k) = centers;
  return book;
}

VqModel init_model(const VqGeometry& geometry, int codebook_size, std::uint64_t seed, bool zero_token) {
  const int p = geometry.block_voxels();
  const int d = geometry.latent_dim;
  Rng rng(seed);
  VqModel m;
  m.geometry = geometry;
  auto fill = [&](Eigen::MatrixXd& w, double stddev) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = stddev * rng.normal();
    }
  };
  m.encoder.weight.resize(d, p);
  fill(m.encoder.weight, 1.0 / std::sqrt(static_cast<double>(p)));
  m.encoder.bias = Eigen::VectorXd::Zero(d);
  m.decoder.weight.resize(p, d);
  fill(m.decoder.weight, 1.0 / std::sqrt(static_cast<double>(d)));
  m.decoder.bias = Eigen::VectorXd::Zero(p);
  m.codebook.zero_token = zero_token;
  m.codebook.entries.resize(d, codebook_size);
  fill(m.codebook.entries, 1.0 / std::sqrt(static_cast<double>(d)));
  if (zero_token) m.codebook.entries.col(0).setZero();
  return m;
}

namespace {

std::string trim_copy(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::InvalidArgument, "training config: bad value for " + key + ": '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(ErrorCode::InvalidArgument, "training config: bad boolean for " + key + ": '" + value + "'");
}

void validate(const TrainConfig& c) {
  if (!(c.beta > 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be > 0");
  if (c.steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
  if (c.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (!(c.learning_rate >= 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be >= 0");
  if (!(c.vq_learning_rate >= 0.0)) throw Error(ErrorCode::InvalidArgument, "vq_learning_rate must be >= 0");
  if (c.codebook_size < (c.zero_token ? 2 : 1)) throw Error(ErrorCode::InvalidArgument, "codebook_size too small");
  if (c.warmup_steps < 0) throw Error(ErrorCode::InvalidArgument, "warmup_steps must be >= 0");
  if (c.kmeans_iterations < 0) throw Error(ErrorCode::InvalidArgument, "kmeans_iterations must be >= 0");
  if (c.latent_dim < 1) throw Error(ErrorCode::InvalidArgument, "latent_dim must be >= 1");
  (void)CodecProfile::by_name(c.profile);
}

}  // namespace

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim_copy(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "training config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim_copy(std::string_view(body).substr(0, eq));
    const std::string value = trim_copy(std::string_view(body).substr(eq + 1));
    if (key == "beta") c.beta = parse_number<double>(key, value);
    else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
    else if (key == "vq_learning_rate") c.vq_learning_rate = parse_number<double>(key, value);
    else if (key == "steps") c.steps = parse_number<int>(key, value);
    else if (key == "batch_size") c.batch_size = parse_number<int>(key, value);
    else if (key == "codebook_size") c.codebook_size = parse_number<int>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "warmup_steps") c.warmup_steps = parse_number<int>(key, value);
    else if (key == "kmeans_iterations") c.kmeans_iterations = parse_number<int>(key, value);
    else if (key == "optimizer") {
      if (value == "adam") c.optimizer = Optimizer::Adam;
      else if (value == "sgd") c.optimizer = Optimizer::Sgd;
      else throw Error(ErrorCode::InvalidArgument, "training config: optimizer must be adam or sgd");
    } else if (key == "zero_token") c.zero_token = parse_bool(key, value);
    else if (key == "profile") c.profile = value;
    else if (key == "resolution") c.resolution = parse_number<int>(key, value);
    else if (key == "latent_dim") c.latent_dim = parse_number<int>(key, value);
    else throw Error(ErrorCode::InvalidArgument, "training config: unknown key '" + key + "'");
  }
  validate(c);
  return c;
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "beta = " << format_double(c.beta) << "\n"
      << "learning_rate = " << format_double(c.learning_rate) << "\n"
      << "vq_learning_rate = " << format_double(c.vq_learning_rate) << "\n"
      << "steps = " << c.steps << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "codebook_size = " << c.codebook_size << "\n"
      << "seed = " << c.seed << "\n"
      << "warmup_steps = " << c.warmup_steps << "\n"
      << "kmeans_iterations = " << c.kmeans_iterations << "\n"
      << "optimizer = " << (c.optimizer == Optimizer::Adam ? "adam" : "sgd") << "\n"
      << "zero_token = " << (c.zero_token ? "true" : "false") << "\n"
      << "profile = " << c.profile << "\n"
      << "resolution = " << c.resolution << "\n"
      << "latent_dim = " << c.latent_dim << "\n";
  return out.str();
}

namespace {

Eigen::MatrixXd collect_latents(const std::vector<OccupancyGrid>& dataset, const VqModel& model) {
  std::vector<Eigen::VectorXd> cols;
  for (const auto& grid : dataset) {
    const OccupancyGrid mask = effective_mask(grid, model);
    const LatentGrid z = encode(grid, model.encoder, model.geometry);
    for (Eigen::Index c = 0; c < z.features.cols(); ++c) {
      if (mask.at_index(static_cast<std::size_t>(c))) cols.emplace_back(z.features.col(c));
    }
  }
  Eigen::MatrixXd out(model.geometry.latent_dim, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = cols[i];
  return out;
}

class ParamOptimizer {
 public:
  ParamOptimizer(const VqModel& model, Optimizer kind, double lr) : kind_(kind), lr_(lr) {
    m_ = Gradients::zeros_like(model);
    v_ = Gradients::zeros_like(model);
  }

  void reset(const VqModel& model, double lr) {
    lr_ = lr;
    m_ = Gradients::zeros_like(model);
    v_ = Gradients::zeros_like(model);
    t_ = 0;
  }

  void step(VqModel& model, const Gradients& g) {
    ++t_;
    update(model.encoder.weight, g.encoder.weight, m_.encoder.weight, v_.encoder.weight);
    update(model.encoder.bias, g.encoder.bias, m_.encoder.bias, v_.encoder.bias);
    update(model.decoder.weight, g.decoder.weight, m_.decoder.weight, v_.decoder.weight);
    update(model.decoder.bias, g.decoder.bias, m_.decoder.bias, v_.decoder.bias);
    update(model.codebook.entries, g.codebook, m_.codebook, v_.codebook);
    if (model.codebook.zero_token) model.codebook.entries.col(0).setZero();
  }

 private:
  template <typename P>
  void update(P& param, const P& grad, P& m, P& v) {
    if (kind_ == Optimizer::Sgd) {
      param -= lr_ * grad;
      return;
    }
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double eps = 1e-8;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, t_);
    const double c2 = 1.0 - std::pow(b2, t_);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }

  Optimizer kind_;
  double lr_;
  Gradients m_;
  Gradients v_;
  int t_ = 0;
};

}  // namespace

TrainResult train_vqvae(const std::vector<OccupancyGrid>& dataset, const TrainConfig& config,
                        const TrainCallback& on_step) {
  validate(config);
  if (dataset.empty()) throw Error(ErrorCode::NoSamples, "training dataset is empty");
  const VqGeometry geometry =
      VqGeometry::for_profile(CodecProfile::by_name(config.profile), config.resolution, config.latent_dim);
  for (const auto& g : dataset) require_dims(g.dims(), geometry.grid, "training grid");

  TrainResult result;
  VqModel& model = result.model;
  model = init_model(geometry, config.codebook_size, config.seed, config.zero_token);
  const std::uint64_t codebook_seed = config.seed ^ 0x9E3779B97F4A7C15ULL;
  {
    const Eigen::MatrixXd samples = collect_latents(dataset, model);
    if (samples.cols() > 0) {
      model.codebook = init_codebook(samples, config.codebook_size, codebook_seed, config.kmeans_iterations,
                                     config.zero_token);
    }
  }

  ParamOptimizer optimizer(model, config.optimizer,
                            config.warmup_steps > 0 ? config.learning_rate : config.vq_learning_rate);
  Rng order_rng(config.seed + 1);
  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();

  for (int step = 0; step < config.steps; ++step) {
    if (step == config.warmup_steps && config.warmup_steps > 0) {
      const Eigen::MatrixXd samples = collect_latents(dataset, model);
      if (samples.cols() > 0) {
        model.codebook = init_codebook(samples, config.codebook_size, codebook_seed, config.kmeans_iterations,
                                       config.zero_token);
      }
      optimizer.reset(model, config.vq_learning_rate);
    }
    const bool bypass = step < config.warmup_steps;

    Gradients grad = Gradients::zeros_like(model);
    LossTerms loss;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
        cursor = 0;
      }
      const ForwardPass pass = forward(dataset[order[cursor++]], model, config.beta, bypass);
      grad += backward(pass, model, config.beta);
      loss.total += pass.loss.total;
      loss.recon += pass.loss.recon;
      loss.codebook += pass.loss.codebook;
      loss.commit += pass.loss.commit;
    }
    const double inv = 1.0 / config.batch_size;
    grad *= inv;
    loss.total *= inv;
    loss.recon *= inv;
    loss.codebook *= inv;
    loss.commit *= inv;
    if (!std::isfinite(loss.total)) {
      throw Error(ErrorCode::DivergedLoss, "non-finite loss at step " + std::to_string(step));
    }
    result.trace.steps.push_back(loss);
    if (on_step) on_step(step, loss);
    optimizer.step(model, grad);
    if (!all_finite(model.encoder.weight) || !all_finite(model.decoder.weight) || !all_finite(model.codebook.entries)) {
      throw Error(ErrorCode::DivergedLoss, "non-finite parameters after step " + std::to_string(step));
    }
  }
  return result;
}

Quantized encode_quantize(const OccupancyGrid& grid, const VqModel& model) {
  const LatentGrid z = encode(grid, model.encoder, model.geometry);
  return quantize(z, effective_mask(grid, model), model.codebook);
}

Decoded decode_indices(const IndexGrid& indices, const VqModel& model, double threshold) {
  require_dims(indices.dims, model.geometry.latent, "index grid");
  LatentGrid latent{indices.dims, Eigen::MatrixXd(model.geometry.latent_dim, static_cast<Eigen::Index>(indices.indices.size()))};
  for (std::size_t i = 0; i < indices.indices.size(); ++i) {
    const auto k = indices.indices[i];
    if (k >= static_cast<std::uint32_t>(model.codebook.size())) {
      throw Error(ErrorCode::IndexOutOfCodebook, "index " + std::to_string(k));
    }
    latent.features.col(static_cast<Eigen::Index>(i)) = model.codebook.entries.col(static_cast<Eigen::Index>(k));
  }
  return decode(latent, model.decoder, model.geometry, threshold);
}

ReconMetrics recon_metrics(const OccupancyGrid& original, const OccupancyGrid& reconstructed) {
  if (!(original.dims() == reconstructed.dims())) {
    throw Error(ErrorCode::ResolutionMismatch, "grids differ in resolution");
  }
  ReconMetrics m;
  std::size_t diff = 0;
  for (std::size_t i = 0; i < original.cell_count(); ++i) {
    diff += original.at_index(i) != reconstructed.at_index(i) ? 1 : 0;
  }
  m.mse = static_cast<double>(diff) / static_cast<double>(original.cell_count());

  auto centers = [](const OccupancyGrid& g) {
    std::vector<Vec3> pts;
    for (const auto& c : g.occupied_cells()) pts.push_back(g.cell_center(c));
    return pts;
  };
  const auto a = centers(original);
  const auto b = centers(reconstructed);
  if (a.empty() && b.empty()) {
    m.chamfer = 0.0;
  } else if (a.empty() || b.empty()) {
    m.chamfer = std::numeric_limits<double>::infinity();
  } else {
    auto directed = [](const std::vector<Vec3>& from, const KdTree& to) {
      double sum = 0.0;
      for (const auto& p : from) sum += std::sqrt(to.nearest(p).squared_distance);
      return sum / static_cast<double>(from.size());
    };
    const KdTree ta(a);
    const KdTree tb(b);
    m.chamfer = 0.5 * (directed(a, tb) + directed(b, ta));
  }
  return m;
}

namespace {

constexpr char kMagic[4] = {'A', 'V', 'Q', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>((v >> (8 * k)) & 0xFFu));
}

void put_matrix(std::vector<std::uint8_t>& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const float f = static_cast<float>(m(r, c));
      std::uint32_t bits = 0;
      std::memcpy(&bits, &f, sizeof(bits));
      put_u32(out, bits);
    }
  }
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    if (pos_ + 4 > bytes_.size()) throw Error(ErrorCode::Io, "checkpoint truncated");
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return v;
  }

  void matrix(Eigen::MatrixXd& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const std::uint32_t bits = u32();
        float f = 0.0f;
        std::memcpy(&f, &bits, sizeof(f));
        m(r, c) = f;
      }
    }
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const VqModel& model) {
  const VqGeometry& g = model.geometry;
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  for (int v : {g.grid.x, g.grid.y, g.grid.z, g.latent.x, g.latent.y, g.latent.z, g.latent_dim}) {
    put_u32(out, static_cast<std::uint32_t>(v));
  }
  put_u32(out, static_cast<std::uint32_t>(model.codebook.size()));
  put_u32(out, model.codebook.zero_token ? 1u : 0u);
  put_matrix(out, model.codebook.entries);
  put_matrix(out, model.encoder.weight);
  put_matrix(out, model.encoder.bias);
  put_matrix(out, model.decoder.weight);
  put_matrix(out, model.decoder.bias);
  return out;
}

VqModel decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::Io, "not a VQ checkpoint");
  }
  ByteReader reader(bytes);
  (void)reader.u32();
  const std::uint32_t version = reader.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::CheckpointVersion, "checkpoint version " + std::to_string(version) + ", expected " +
                                                  std::to_string(kCheckpointVersion));
  }
  VqModel m;
  auto& g = m.geometry;
  g.grid = {static_cast<int>(reader.u32()), static_cast<int>(reader.u32()), static_cast<int>(reader.u32())};
  g.latent = {static_cast<int>(reader.u32()), static_cast<int>(reader.u32()), static_cast<int>(reader.u32())};
  g.latent_dim = static_cast<int>(reader.u32());
  const auto n = static_cast<Eigen::Index>(reader.u32());
  const std::uint32_t flags = reader.u32();
  if (g.latent_dim <= 0 || g.latent_dim > 4096 || n <= 0 || n > (1 << 20) || g.grid.x <= 0 || g.grid.x > kMaxResolution ||
      g.grid.y <= 0 || g.grid.y > kMaxResolution || g.grid.z <= 0 || g.grid.z > kMaxResolution) {
    throw Error(ErrorCode::Io, "checkpoint header out of range");
  }
  const int p = g.block_voxels();
  m.codebook.zero_token = (flags & 1u) != 0;
  m.codebook.entries.resize(g.latent_dim, n);
  m.encoder.weight.resize(g.latent_dim, p);
  Eigen::MatrixXd enc_bias(g.latent_dim, 1);
  m.decoder.weight.resize(p, g.latent_dim);
  Eigen::MatrixXd dec_bias(p, 1);
  reader.matrix(m.codebook.entries);
  reader.matrix(m.encoder.weight);
  reader.matrix(enc_bias);
  reader.matrix(m.decoder.weight);
  reader.matrix(dec_bias);
  if (!reader.done()) throw Error(ErrorCode::Io, "checkpoint has trailing bytes");
  m.encoder.bias = enc_bias.col(0);
  m.decoder.bias = dec_bias.col(0);
  return m;
}

void save_checkpoint(const VqModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

VqModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace artkit::vq
