#include "artkit/pipeline.hpp"

#include "artkit/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>

namespace artkit {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string strip_code(const Error& e) {
  const std::string what = e.what();
  const std::string prefix = std::string(to_string(e.code())) + ": ";
  return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}

  template <class F>
  auto run(const std::string& stage, const std::filesystem::path& input, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        record(stage, start);
      } else {
        auto out = f();
        record(stage, start);
        return out;
      }
    } catch (const Error& e) {
      throw Error(e.code(), "stage " + stage + " (" + input.string() + "): " + strip_code(e));
    }
  }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
    sink_[stage] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }

  std::map<std::string, double>& sink_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

}  // namespace

void validate_config(const PipelineConfig& c) {
  auto require_file = [](const std::filesystem::path& p, const char* what) {
    if (p.empty()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " path is required");
    if (!std::filesystem::is_regular_file(p)) {
      throw Error(ErrorCode::InvalidArgument, std::string(what) + " not found: " + p.string());
    }
  };
  require_file(c.mesh, "mesh");
  require_file(c.metadata, "metadata");
  if (!c.checkpoint.empty()) require_file(c.checkpoint, "checkpoint");
  if (c.output.empty()) throw Error(ErrorCode::InvalidArgument, "output path is required");
  CodecProfile::by_name(c.profile);
  if (c.resolution <= 0) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
  if (!(c.margin >= 0.0 && c.margin < 0.5)) throw Error(ErrorCode::InvalidArgument, "margin must lie in [0, 0.5)");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
  if (c.iterations < 0) throw Error(ErrorCode::InvalidArgument, "iterations must be non-negative");
  if (!std::isfinite(c.sigma)) throw Error(ErrorCode::InvalidArgument, "sigma must be finite");
  if (c.scale_cm && !(*c.scale_cm > 0.0)) throw Error(ErrorCode::InvalidArgument, "scale must be positive");
}

OccupancyGrid part_seed_grid(const TokenSequence& tokens, const vq::VqModel* model) {
  if (model) {
    if (!(model->geometry.latent == tokens.profile.dims)) {
      throw Error(ErrorCode::DimensionMismatch, "checkpoint latent grid does not match profile " + tokens.profile.name());
    }
    return vq::decode_indices(densify(tokens), *model).grid;
  }
  OccupancyGrid cells(tokens.profile.dims);
  for (const auto& t : tokens.tokens) cells.set_index(t.xyz);
  return cells;
}

std::vector<int> part_labels(const AssetMetadata& meta) {
  std::vector<int> labels;
  for (const auto& part : meta.parts) {
    const std::string& id = part.id;
    const bool plain = !id.empty() && id.size() <= 9 && (id == "0" || id[0] != '0') &&
                       std::all_of(id.begin(), id.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (!plain) {
      labels.clear();
      for (std::size_t i = 0; i < meta.parts.size(); ++i) labels.push_back(static_cast<int>(i));
      return labels;
    }
    labels.push_back(std::stoi(id));
  }
  return labels;
}

std::map<int, OccupancyGrid> metadata_seed_grids(const AssetMetadata& meta, const CodecProfile& profile,
                                                 const vq::VqModel* model,
                                                 std::map<std::string, CompressionStats>* stats) {
  const std::vector<int> labels = part_labels(meta);
  std::map<int, OccupancyGrid> grids;
  for (std::size_t i = 0; i < meta.parts.size(); ++i) {
    const PartRecord& part = meta.parts[i];
    TokenSequence seq;
    try {
      seq = parse_tokens(part.tokens, profile);
    } catch (const Error& e) {
      throw Error(e.code(), "$.parts_voxels." + part.id + ": " + strip_code(e));
    }
    if (seq.tokens.empty()) throw Error(ErrorCode::EmptyPart, "$.parts_voxels." + part.id + " has no tokens");
    if (stats) (*stats)[part.id] = compression_stats(seq);
    grids[labels[i]] = part_seed_grid(seq, model);
  }
  return grids;
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  validate_config(config);
  PipelineResult result;
  StageTimer timer(result.stage_ms);
  const CodecProfile profile = CodecProfile::by_name(config.profile);

  AssetMetadata meta = timer.run("metadata", config.metadata, [&] { return read_metadata(config.metadata); });
  if (config.scale_cm) meta.scale_cm = *config.scale_cm;
  const Mesh mesh = timer.run("mesh", config.mesh, [&] {
    Mesh m = read_obj(config.mesh);
    validate_mesh(m);
    return m;
  });

  const NormalizedMesh normalized =
      timer.run("normalize", config.mesh, [&] { return normalize_mesh(mesh, config.margin); });
  const OccupancyGrid occupancy = timer.run("voxelize", config.mesh, [&] {
    return voxelize_mesh(normalized.mesh, config.resolution);
  });

  std::optional<vq::VqModel> model;
  if (!config.checkpoint.empty()) {
    model = timer.run("checkpoint", config.checkpoint, [&] { return vq::load_checkpoint(config.checkpoint); });
    if (!(model->geometry.grid == occupancy.dims())) {
      throw Error(ErrorCode::ResolutionMismatch, "stage checkpoint (" + config.checkpoint.string() +
                                                     "): model grid does not match resolution " +
                                                     std::to_string(config.resolution));
    }
  }

  const std::vector<int> labels = part_labels(meta);
  std::map<std::string, CompressionStats> token_stats;
  const auto part_grids = timer.run("tokens", config.metadata, [&] {
    return metadata_seed_grids(meta, profile, model ? &*model : nullptr, &token_stats);
  });

  const SeedSet seeds =
      timer.run("seeds", config.metadata, [&] { return extract_seeds(part_grids, normalized.transform); });

  const Segmentation seg = timer.run("segment", config.mesh, [&] {
    return segment_mesh(mesh, seeds, SegmentationParams{config.sigma, config.alpha, config.iterations});
  });

  const KinematicTree tree =
      timer.run("tree", config.metadata, [&] { return build_kinematic_tree(meta, normalized.transform); });

  std::map<std::string, LinkAsset> assets;
  for (std::size_t i = 0; i < meta.parts.size(); ++i) {
    const PartRecord& part = meta.parts[i];
    const auto it = seg.parts.find(labels[i]);
    if (it == seg.parts.end()) {
      throw Error(ErrorCode::EmptyPart, "stage segment (" + config.mesh.string() + "): part " + part.id +
                                            " received no faces");
    }
    PartOutcome outcome;
    outcome.id = part.id;
    outcome.file = "parts/part_" + part.id + ".obj";
    outcome.face_count = it->second.faces.size();
    outcome.seed_count = seg.seed_counts.at(labels[i]);
    outcome.tokens = token_stats.at(part.id);
    result.parts[part.id] = outcome;
    assets[part.id] = LinkAsset{outcome.file, it->second};
  }

  result.urdf = timer.run("urdf", config.metadata, [&] { return emit_urdf(meta, tree, assets, config.urdf); });

  ordered_json manifest;
  manifest["name"] = meta.name;
  manifest["urdf"] = "asset.urdf";
  manifest["profile"] = profile.name();
  manifest["parts"] = ordered_json::object();
  for (const auto& part : meta.parts) {
    const PartOutcome& o = result.parts.at(part.id);
    manifest["parts"][part.id] = {{"file", o.file},
                                  {"link", link_name(part.id)},
                                  {"face_count", o.face_count},
                                  {"seed_count", o.seed_count}};
  }
  result.manifest = manifest.dump(2) + "\n";

  timer.run("write", config.output, [&] {
    std::filesystem::create_directories(config.output / "parts");
    for (const auto& part : meta.parts) {
      write_obj(assets.at(part.id).mesh.value(), config.output / result.parts.at(part.id).file);
    }
    write_text(config.output / "asset.urdf", result.urdf);
    write_text(config.output / "manifest.json", result.manifest);
  });

  ordered_json summary;
  summary["name"] = meta.name;
  summary["seed"] = config.seed;
  summary["profile"] = profile.name();
  summary["checkpoint"] = config.checkpoint.empty() ? ordered_json(nullptr) : ordered_json(config.checkpoint.string());
  summary["resolution"] = config.resolution;
  summary["occupied_voxels"] = occupancy.occupied_count();
  summary["mesh_faces"] = mesh.faces.size();
  summary["joints"] = tree.nodes.size() - 1;
  summary["tree_depth"] = tree.depth();
  summary["parts"] = ordered_json::object();
  std::size_t sparse = 0, dense = 0;
  for (const auto& part : meta.parts) {
    const PartOutcome& o = result.parts.at(part.id);
    sparse += o.tokens.sparse_tokens;
    dense += o.tokens.dense_tokens;
    summary["parts"][part.id] = {{"face_count", o.face_count},
                                 {"seed_count", o.seed_count},
                                 {"sparse_tokens", o.tokens.sparse_tokens},
                                 {"dense_tokens", o.tokens.dense_tokens},
                                 {"token_reduction", o.tokens.reduction}};
  }
  summary["tokens"] = {{"sparse", sparse},
                       {"dense", dense},
                       {"reduction", dense == 0 ? 0.0 : 1.0 - static_cast<double>(sparse) / dense}};
  summary["timing_ms"] = ordered_json::object();
  for (const auto& [stage, ms] : result.stage_ms) summary["timing_ms"][stage] = ms;
  result.summary = summary.dump(2) + "\n";
  write_text(config.output / "summary.json", result.summary);
  return result;
}

}  // namespace artkit
