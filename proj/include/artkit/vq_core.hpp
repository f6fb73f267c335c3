#pragma once

#include "artkit/sparse_codec.hpp"
#include "artkit/voxel_grid.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace artkit::vq {

/// Occupancy grid -> latent cells. Each latent cell owns one block of voxels.
struct VqGeometry {
  GridDims grid{64, 64, 64};
  GridDims latent{8, 8, 8};
  int latent_dim = 64;

  static VqGeometry for_profile(const CodecProfile& profile, int resolution = kDefaultResolution,
                                int latent_dim = 64);

  /// Voxels per block along each axis; throws DimensionMismatch unless divisible.
  GridDims block() const;
  int block_voxels() const { return static_cast<int>(block().cell_count()); }
  int cell_count() const { return static_cast<int>(latent.cell_count()); }
  bool operator==(const VqGeometry&) const = default;
};

struct Codebook {
  Eigen::MatrixXd entries;  // latent_dim x N; column j is e_j
  bool zero_token = true;   // e_0 reserved for unoccupied cells and frozen at zero

  int size() const { return static_cast<int>(entries.cols()); }
  int dim() const { return static_cast<int>(entries.rows()); }
};

struct LatentGrid {
  GridDims dims{8, 8, 8};
  Eigen::MatrixXd features;  // latent_dim x cells, x-major columns
};

/// z = weight * block + bias
struct EncoderParams {
  Eigen::MatrixXd weight;  // latent_dim x block_voxels
  Eigen::VectorXd bias;    // latent_dim
};

/// logits = weight * z_hat + bias
struct DecoderParams {
  Eigen::MatrixXd weight;  // block_voxels x latent_dim
  Eigen::VectorXd bias;    // block_voxels
};

struct VqModel {
  VqGeometry geometry;
  EncoderParams encoder;
  DecoderParams decoder;
  Codebook codebook;
};

/// Block-OR of the occupancy grid onto the latent dims.
OccupancyGrid occupancy_downsample(const OccupancyGrid& grid, const GridDims& latent);

/// block_voxels x cells matrix of 0/1 values; rows follow x-major order inside a block.
Eigen::MatrixXd extract_blocks(const OccupancyGrid& grid, const VqGeometry& geometry);

LatentGrid encode(const OccupancyGrid& grid, const EncoderParams& params, const VqGeometry& geometry);

struct Quantized {
  IndexGrid indices;
  LatentGrid features;
};

/// Unmasked cells take e_0 and index 0; masked cells take the nearest of
/// e_1..e_{N-1} (lowest index on ties). Without a zero token every cell is
/// matched against all entries.
Quantized quantize(const LatentGrid& latent, const OccupancyGrid& mask, const Codebook& codebook);

struct Decoded {
  OccupancyGrid grid;
  Eigen::MatrixXd logits;  // block_voxels x cells
};

/// Occupied iff sigmoid(logit) > threshold.
Decoded decode(const LatentGrid& quantized, const DecoderParams& params, const VqGeometry& geometry,
               double threshold = 0.5);

inline constexpr double kLogitClamp = 30.0;

struct LossTerms {
  double total = 0.0;
  double recon = 0.0;     // mean per-voxel BCE
  double codebook = 0.0;  // mean over masked cells of |sg[z] - z_hat|^2
  double commit = 0.0;    // mean over masked cells of |z - sg[z_hat]|^2 (unweighted)
};

LossTerms vq_loss(const OccupancyGrid& input, const Eigen::MatrixXd& logits, const LatentGrid& z,
                  const LatentGrid& z_hat, const OccupancyGrid& mask, double beta, const VqGeometry& geometry);

/// Everything one training example needs for a gradient step.
struct ForwardPass {
  Eigen::MatrixXd blocks;  // block_voxels x cells
  OccupancyGrid mask;
  LatentGrid z;
  Quantized quantized;
  Eigen::MatrixXd logits;
  LossTerms loss;
  bool bypass = false;     // z_hat = z on masked cells, no VQ terms (warm-up)
};

ForwardPass forward(const OccupancyGrid& input, const VqModel& model, double beta, bool bypass = false);

struct Gradients {
  EncoderParams encoder;
  DecoderParams decoder;
  Eigen::MatrixXd codebook;  // same shape as Codebook::entries

  static Gradients zeros_like(const VqModel& model);
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

/// Reconstruction gradient reaches the encoder through the straight-through
/// path; the codebook term only moves codebook entries and the commitment term
/// only moves the encoder.
Gradients backward(const ForwardPass& pass, const VqModel& model, double beta);

/// Entries 1..N-1 from seeded k-means++ / Lloyd over the samples (columns);
/// entry 0 is the zero vector. With fewer than N-1 samples the remaining
/// seeds are drawn with replacement.
Codebook init_codebook(const Eigen::MatrixXd& samples, int size, std::uint64_t seed, int iterations = 10,
                       bool zero_token = true);

enum class Optimizer { Adam, Sgd };

struct TrainConfig {
  double beta = 0.25;
  double learning_rate = 0.01;        // warm-up phase
  double vq_learning_rate = 0.001;    // once quantization is active
  int steps = 2000;
  int batch_size = 1;
  int codebook_size = 4096;
  std::uint64_t seed = 0;
  int warmup_steps = 1000;        // steps trained with quantization bypassed
  int kmeans_iterations = 10;
  Optimizer optimizer = Optimizer::Adam;
  bool zero_token = true;         // false: "force sparse" ablation, all cells quantized
  std::string profile = "8x8x8";
  int resolution = kDefaultResolution;
  int latent_dim = 64;
};

/// `key = value` lines; '#' starts a comment. Unknown keys are an error.
TrainConfig parse_train_config(std::string_view text);
std::string format_train_config(const TrainConfig& config);

struct LossTrace {
  std::vector<LossTerms> steps;
};

struct TrainResult {
  VqModel model;
  LossTrace trace;
};

using TrainCallback = std::function<void(int step, const LossTerms& loss)>;

/// Throws NoSamples for an empty dataset and DivergedLoss on a non-finite loss.
TrainResult train_vqvae(const std::vector<OccupancyGrid>& dataset, const TrainConfig& config,
                        const TrainCallback& on_step = {});

VqModel init_model(const VqGeometry& geometry, int codebook_size, std::uint64_t seed, bool zero_token = true);

/// encode -> mask -> quantize in one call.
Quantized encode_quantize(const OccupancyGrid& grid, const VqModel& model);
Decoded decode_indices(const IndexGrid& indices, const VqModel& model, double threshold = 0.5);

struct ReconMetrics {
  double mse = 0.0;
  double chamfer = 0.0;  // normalized by resolution; +inf when exactly one grid is empty
  double mse_scaled() const { return mse * 1e5; }
  double chamfer_scaled() const { return chamfer * 1e5; }
};

ReconMetrics recon_metrics(const OccupancyGrid& original, const OccupancyGrid& reconstructed);

/// "AVQC", u32 version, u32 grid xyz, u32 latent xyz, u32 latent_dim,
/// u32 codebook size, u32 flags, then float32 LE: codebook, encoder W, b,
/// decoder W, b (all column-major).
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const VqModel& model, const std::filesystem::path& path);
VqModel load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const VqModel& model);
VqModel decode_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace artkit::vq
