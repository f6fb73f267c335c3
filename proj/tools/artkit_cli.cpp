#include "artkit/error.hpp"
#include "artkit/metrics.hpp"
#include "artkit/pipeline.hpp"
#include "artkit/segmentation.hpp"
#include "artkit/sparse_codec.hpp"
#include "artkit/urdf.hpp"
#include "artkit/voxel_grid.hpp"
#include "artkit/vq_core.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace artkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
}

// key = value lines fill options that were not given on the command line.
void apply_config_file(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::InvalidArgument, "config not found: " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path);
  } catch (const CLI::Error& e) {
    throw Error(ErrorCode::InvalidArgument, "config " + path + ": " + e.what());
  }
  for (const auto& item : items) {
    if (!item.parents.empty() || item.name == "config") {
      throw Error(ErrorCode::InvalidArgument, "config " + path + ": unsupported key '" + item.fullname() + "'");
    }
    std::string flag = item.name;
    std::replace(flag.begin(), flag.end(), '_', '-');
    CLI::Option* opt = sub->get_option_no_throw("--" + flag);
    if (!opt) {
      throw Error(ErrorCode::InvalidArgument,
                  "config " + path + ": unknown key '" + item.name + "' for " + sub->get_name());
    }
    if (opt->count() > 0) continue;
    try {
      opt->add_result(item.inputs);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw Error(ErrorCode::InvalidArgument, "config " + path + ": " + item.name + ": " + e.what());
    }
  }
}

Mesh load_normalized_mesh(const fs::path& path, double margin) {
  Mesh m = read_obj(path);
  validate_mesh(m);
  return normalize_mesh(m, margin).mesh;
}

OccupancyGrid load_grid_input(const std::string& path, int resolution, double margin) {
  if (fs::path(path).extension() == ".obj") return voxelize_mesh(load_normalized_mesh(path, margin), resolution);
  return read_grid(path);
}

std::string train_override_lines(const std::map<std::string, std::string>& overrides) {
  std::string out;
  for (const auto& [k, v] : overrides) out += k + " = " + v + "\n";
  return out;
}

struct EvalJob {
  std::string pred;
  std::string gt;
  std::string gt_parts;
  std::string category;
};

std::vector<EvalJob> read_batch(const fs::path& path) {
  std::vector<EvalJob> jobs;
  std::istringstream in(read_text(path));
  std::string line;
  int n = 0;
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    EvalJob job;
    if (!(fields >> job.pred)) continue;
    if (!(fields >> job.gt >> job.gt_parts)) {
      throw Error(ErrorCode::InvalidArgument,
                  path.string() + " line " + std::to_string(n) + ": expected pred_urdf gt_metadata gt_parts [category]");
    }
    fields >> job.category;
    job.pred = resolve(job.pred);
    job.gt = resolve(job.gt);
    job.gt_parts = resolve(job.gt_parts);
    jobs.push_back(job);
  }
  return jobs;
}

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::DivergedLoss:
      return false;
    default:
      return true;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"artkit: mesh + kinematic metadata to articulated URDF assets"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random draw (sampling, k-means, training)")->capture_default_str();

  std::function<void()> action;

  // voxelize
  auto* vox = app.add_subcommand("voxelize", "Normalize a mesh into the unit cube and voxelize its surface");
  struct {
    std::string mesh, out;
    int resolution = kDefaultResolution;
    int max_resolution = kMaxResolution;
    double margin = kDefaultMargin;
  } vox_args;
  vox->add_option("--mesh", vox_args.mesh, "Input OBJ")->required();
  vox->add_option("--out", vox_args.out, "Output grid (AVGX)")->required();
  vox->add_option("--resolution", vox_args.resolution, "Cells per axis")->capture_default_str();
  vox->add_option("--max-resolution", vox_args.max_resolution, "Resolution cap")->capture_default_str();
  vox->add_option("--margin", vox_args.margin, "Margin inside the unit cube")->capture_default_str();
  vox->callback([&] {
    action = [&] {
      const OccupancyGrid g =
          voxelize_mesh(load_normalized_mesh(vox_args.mesh, vox_args.margin), vox_args.resolution,
                        vox_args.max_resolution);
      write_grid(g, vox_args.out);
      std::cout << "occupied " << g.occupied_count() << " of " << g.cell_count() << "\n";
    };
  });

  // tokens
  auto* tok = app.add_subcommand("tokens", "Validate a sparse token stream and report compression");
  struct {
    std::string in, out, profile = "8x8x8";
  } tok_args;
  tok->add_option("--in", tok_args.in, "Token text")->required();
  tok->add_option("--profile", tok_args.profile, "8x8x8 or 16x8x8")->capture_default_str();
  tok->add_option("--out", tok_args.out, "Write the canonical stream here");
  tok->callback([&] {
    action = [&] {
      const TokenSequence seq = parse_tokens(read_text(tok_args.in), CodecProfile::by_name(tok_args.profile));
      if (!tok_args.out.empty()) write_text(tok_args.out, serialize_tokens(seq));
      const CompressionStats s = compression_stats(seq);
      nlohmann::ordered_json j = {{"profile", seq.profile.name()},
                                  {"sparse_tokens", s.sparse_tokens},
                                  {"dense_tokens", s.dense_tokens},
                                  {"reduction", s.reduction}};
      std::cout << j.dump(2) << "\n";
    };
  });

  // train-vq
  auto* train = app.add_subcommand("train-vq", "Train the sparse VQ autoencoder on occupancy grids or meshes");
  struct {
    std::string config, out, trace;
    std::vector<std::string> data;
    double margin = kDefaultMargin;
  } train_args;
  std::map<std::string, std::string> train_overrides;
  train->add_option("--config", train_args.config, "Training config (key = value)");
  train->add_option("--data", train_args.data, "AVGX grids or OBJ meshes")->required()->expected(1, -1);
  train->add_option("--out", train_args.out, "Checkpoint path")->required();
  train->add_option("--trace", train_args.trace, "Loss trace CSV");
  train->add_option("--margin", train_args.margin, "Margin when voxelizing meshes")->capture_default_str();
  for (const char* key : {"beta", "learning_rate", "vq_learning_rate", "steps", "batch_size", "codebook_size",
                          "warmup_steps", "kmeans_iterations", "optimizer", "zero_token", "profile", "resolution",
                          "latent_dim"}) {
    std::string flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    train->add_option_function<std::string>(
        "--" + flag, [&train_overrides, key](const std::string& v) { train_overrides[key] = v; },
        std::string("Overrides '") + key + "' from the config");
  }
  train->callback([&] {
    action = [&] {
      std::string text = train_args.config.empty() ? std::string() : read_text(train_args.config);
      if (app.get_option("--seed")->count() > 0) train_overrides["seed"] = std::to_string(seed);
      text += "\n" + train_override_lines(train_overrides);
      const vq::TrainConfig cfg = vq::parse_train_config(text);
      std::vector<OccupancyGrid> dataset;
      for (const auto& path : train_args.data) dataset.push_back(load_grid_input(path, cfg.resolution, train_args.margin));
      std::string trace = "step,total,recon,codebook,commit\n";
      const vq::TrainResult r = vq::train_vqvae(dataset, cfg, [&](int step, const vq::LossTerms& l) {
        trace += std::to_string(step) + "," + format_double(l.total) + "," + format_double(l.recon) + "," +
                 format_double(l.codebook) + "," + format_double(l.commit) + "\n";
      });
      vq::save_checkpoint(r.model, train_args.out);
      if (!train_args.trace.empty()) write_text(train_args.trace, trace);
      const auto& first = r.trace.steps.front();
      const auto& last = r.trace.steps.back();
      std::cout << "steps " << r.trace.steps.size() << " loss " << format_double(first.total) << " -> "
                << format_double(last.total) << "\n";
    };
  });

  // encode
  auto* enc = app.add_subcommand("encode", "Grid or mesh -> sparse token stream");
  struct {
    std::string model, input, out;
    double margin = kDefaultMargin;
  } enc_args;
  enc->add_option("--model", enc_args.model, "Checkpoint")->required();
  enc->add_option("--in", enc_args.input, "AVGX grid or OBJ mesh")->required();
  enc->add_option("--out", enc_args.out, "Token text (stdout when omitted)");
  enc->add_option("--margin", enc_args.margin, "Margin when voxelizing meshes")->capture_default_str();
  enc->callback([&] {
    action = [&] {
      const vq::VqModel model = vq::load_checkpoint(enc_args.model);
      const OccupancyGrid grid = load_grid_input(enc_args.input, model.geometry.grid.x, enc_args.margin);
      if (!(grid.dims() == model.geometry.grid)) {
        throw Error(ErrorCode::ResolutionMismatch, enc_args.input + " does not match the checkpoint grid");
      }
      const vq::Quantized q = vq::encode_quantize(grid, model);
      const CodecProfile profile{model.geometry.latent, static_cast<std::uint32_t>(model.codebook.size())};
      emit(enc_args.out, serialize_tokens(tokenize_grid(q.indices, profile)) + "\n");
    };
  });

  // decode
  auto* dec = app.add_subcommand("decode", "Sparse token stream -> occupancy grid");
  struct {
    std::string model, tokens, out;
    double threshold = 0.5;
  } dec_args;
  dec->add_option("--model", dec_args.model, "Checkpoint")->required();
  dec->add_option("--tokens", dec_args.tokens, "Token text")->required();
  dec->add_option("--out", dec_args.out, "Output grid (AVGX)")->required();
  dec->add_option("--threshold", dec_args.threshold, "Occupancy probability threshold")->capture_default_str();
  dec->callback([&] {
    action = [&] {
      const vq::VqModel model = vq::load_checkpoint(dec_args.model);
      const CodecProfile profile{model.geometry.latent, static_cast<std::uint32_t>(model.codebook.size())};
      const TokenSequence seq = parse_tokens(read_text(dec_args.tokens), profile);
      const OccupancyGrid g = vq::decode_indices(densify(seq), model, dec_args.threshold).grid;
      write_grid(g, dec_args.out);
      std::cout << "occupied " << g.occupied_count() << " of " << g.cell_count() << "\n";
    };
  });

  // segment
  auto* seg = app.add_subcommand("segment", "Split a mesh into parts seeded by the metadata token streams");
  struct {
    std::string config, mesh, metadata, out, checkpoint, profile = "8x8x8";
    double margin = kDefaultMargin, sigma = 0.0, alpha = 0.5;
    int iterations = 10;
  } seg_args;
  seg->add_option("--config", seg_args.config, "key = value file for any of these options");
  seg->add_option("--mesh", seg_args.mesh, "Input OBJ");
  seg->add_option("--metadata", seg_args.metadata, "Metadata JSON");
  seg->add_option("--out", seg_args.out, "Output directory");
  seg->add_option("--checkpoint", seg_args.checkpoint, "VQ checkpoint for decoding tokens");
  seg->add_option("--profile", seg_args.profile, "8x8x8 or 16x8x8")->capture_default_str();
  seg->add_option("--margin", seg_args.margin, "Normalization margin")->capture_default_str();
  seg->add_option("--sigma", seg_args.sigma, "Kernel width, <= 0 for 0.05 x bbox diagonal")->capture_default_str();
  seg->add_option("--alpha", seg_args.alpha, "Smoothing self weight")->capture_default_str();
  seg->add_option("--iterations", seg_args.iterations, "Smoothing iterations")->capture_default_str();
  seg->callback([&] {
    action = [&] {
      apply_config_file(seg, seg_args.config);
      for (const auto* req : {&seg_args.mesh, &seg_args.metadata, &seg_args.out}) {
        if (req->empty()) throw Error(ErrorCode::InvalidArgument, "segment needs --mesh, --metadata and --out");
      }
      const AssetMetadata meta = read_metadata(seg_args.metadata);
      Mesh mesh = read_obj(seg_args.mesh);
      validate_mesh(mesh);
      const NormalizedMesh normalized = normalize_mesh(mesh, seg_args.margin);
      std::optional<vq::VqModel> model;
      if (!seg_args.checkpoint.empty()) model = vq::load_checkpoint(seg_args.checkpoint);
      const auto grids = metadata_seed_grids(meta, CodecProfile::by_name(seg_args.profile), model ? &*model : nullptr);
      const Segmentation s = segment_mesh(mesh, extract_seeds(grids, normalized.transform),
                                          SegmentationParams{seg_args.sigma, seg_args.alpha, seg_args.iterations});
      write_segmentation(s, seg_args.out);
      std::cout << "parts " << s.parts.size() << " faces " << s.face_labels.size() << "\n";
    };
  });

  // urdf
  auto* urdf = app.add_subcommand("urdf", "Emit a URDF from metadata and part_<id>.obj meshes");
  struct {
    std::string metadata, parts, out;
    std::optional<double> scale;
    double margin = kDefaultMargin;
    UrdfOptions options;
  } urdf_args;
  urdf->add_option("--metadata", urdf_args.metadata, "Metadata JSON")->required();
  urdf->add_option("--parts", urdf_args.parts, "Directory with part_<id>.obj")->required();
  urdf->add_option("--out", urdf_args.out, "URDF path")->required();
  urdf->add_option("--scale", urdf_args.scale, "Object scale in cm, overrides the metadata");
  urdf->add_option("--margin", urdf_args.margin, "Normalization margin")->capture_default_str();
  urdf->add_option("--default-density", urdf_args.options.default_density, "g/cm^3")->capture_default_str();
  urdf->add_option("--default-friction", urdf_args.options.default_friction)->capture_default_str();
  urdf->add_option("--effort", urdf_args.options.effort)->capture_default_str();
  urdf->add_option("--velocity", urdf_args.options.velocity)->capture_default_str();
  urdf->callback([&] {
    action = [&] {
      AssetMetadata meta = read_metadata(urdf_args.metadata);
      if (urdf_args.scale) meta.scale_cm = *urdf_args.scale;
      const fs::path out_dir = fs::absolute(urdf_args.out).parent_path();
      std::map<std::string, LinkAsset> assets;
      Aabb box;
      for (const auto& part : meta.parts) {
        const fs::path file = fs::path(urdf_args.parts) / ("part_" + part.id + ".obj");
        if (!fs::is_regular_file(file)) throw Error(ErrorCode::MissingMesh, "missing " + file.string());
        Mesh m = read_obj(file);
        for (const auto& v : m.vertices) box.extend(v);
        assets[part.id] = {fs::relative(fs::absolute(file), out_dir).generic_string(), std::move(m)};
      }
      const KinematicTree tree = build_kinematic_tree(meta, fit_normalization(box, urdf_args.margin));
      const std::string xml = emit_urdf(meta, tree, assets, urdf_args.options);
      write_text(urdf_args.out, xml);
      std::cout << "links " << tree.nodes.size() << " joints " << tree.nodes.size() - 1 << "\n";
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Articulation metrics of predicted URDFs against ground truth");
  struct {
    std::string pred, gt, gt_parts, category, batch, out, format = "text";
    int jobs = 1;
    GeometryOptions geometry;
  } ev_args;
  ev->add_option("--pred", ev_args.pred, "Predicted URDF");
  ev->add_option("--gt", ev_args.gt, "Ground-truth metadata JSON");
  ev->add_option("--gt-parts", ev_args.gt_parts, "Ground-truth part_<id>.obj directory");
  ev->add_option("--category", ev_args.category, "Category label for a single asset");
  ev->add_option("--batch", ev_args.batch, "Lines of: pred_urdf gt_metadata gt_parts [category]");
  ev->add_option("--jobs", ev_args.jobs, "Worker threads for batch evaluation")->capture_default_str();
  ev->add_option("--out", ev_args.out, "JSON report path");
  ev->add_option("--format", ev_args.format, "Console output: text or json")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();
  ev->add_option("--resolution", ev_args.geometry.resolution, "IoU grid resolution")->capture_default_str();
  ev->add_option("--samples", ev_args.geometry.samples, "Chamfer samples per part")->capture_default_str();
  ev->callback([&] {
    action = [&] {
      std::vector<EvalJob> jobs;
      if (!ev_args.batch.empty()) {
        jobs = read_batch(ev_args.batch);
      } else if (!ev_args.pred.empty() && !ev_args.gt.empty() && !ev_args.gt_parts.empty()) {
        jobs.push_back({ev_args.pred, ev_args.gt, ev_args.gt_parts, ev_args.category});
      } else {
        throw Error(ErrorCode::InvalidArgument, "eval needs --batch or --pred, --gt and --gt-parts");
      }
      if (ev_args.jobs < 1) throw Error(ErrorCode::InvalidArgument, "--jobs must be at least 1");
      ev_args.geometry.seed = seed;
      std::vector<AssetReport> reports(jobs.size());
      std::vector<std::exception_ptr> failures(jobs.size());
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          try {
            const EvalAsset pred = load_urdf_asset(jobs[i].pred);
            EvalAsset gt = load_metadata_asset(jobs[i].gt, jobs[i].gt_parts);
            if (!jobs[i].category.empty()) gt.category = jobs[i].category;
            reports[i] = evaluate(pred, gt, ev_args.geometry);
          } catch (...) {
            failures[i] = std::current_exception();
          }
        }
      };
      const int threads = std::min<int>(ev_args.jobs, static_cast<int>(jobs.size()));
      std::vector<std::thread> pool;
      for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
      worker();
      for (auto& t : pool) t.join();
      for (const auto& f : failures)
        if (f) std::rethrow_exception(f);
      const BatchReport batch = aggregate(std::move(reports));
      const std::string json = report_json(batch);
      if (!ev_args.out.empty()) write_text(ev_args.out, json);
      std::cout << (ev_args.format == "json" ? json : report_text(batch));
    };
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Mesh + metadata -> parts/, asset.urdf, manifest.json, summary.json");
  PipelineConfig pc;
  std::string pipe_config;
  std::string pipe_mesh, pipe_metadata, pipe_out, pipe_checkpoint;
  std::optional<double> pipe_scale;
  pipe->add_option("--config", pipe_config, "key = value file for any of these options");
  pipe->add_option("--mesh", pipe_mesh, "Input OBJ");
  pipe->add_option("--metadata", pipe_metadata, "Metadata JSON");
  pipe->add_option("--out", pipe_out, "Output directory");
  pipe->add_option("--checkpoint", pipe_checkpoint, "VQ checkpoint; omitted: seeds at latent cell centers");
  pipe->add_option("--profile", pc.profile, "8x8x8 or 16x8x8")->capture_default_str();
  pipe->add_option("--resolution", pc.resolution, "Voxel grid resolution")->capture_default_str();
  pipe->add_option("--margin", pc.margin, "Normalization margin")->capture_default_str();
  pipe->add_option("--sigma", pc.sigma, "Kernel width, <= 0 for 0.05 x bbox diagonal")->capture_default_str();
  pipe->add_option("--alpha", pc.alpha, "Smoothing self weight")->capture_default_str();
  pipe->add_option("--iterations", pc.iterations, "Smoothing iterations")->capture_default_str();
  pipe->add_option("--scale", pipe_scale, "Object scale in cm, overrides the metadata");
  pipe->add_option("--default-density", pc.urdf.default_density, "g/cm^3")->capture_default_str();
  pipe->add_option("--default-friction", pc.urdf.default_friction)->capture_default_str();
  pipe->callback([&] {
    action = [&] {
      apply_config_file(pipe, pipe_config);
      pc.mesh = pipe_mesh;
      pc.metadata = pipe_metadata;
      pc.output = pipe_out;
      pc.checkpoint = pipe_checkpoint;
      pc.scale_cm = pipe_scale;
      pc.seed = seed;
      const PipelineResult r = run_pipeline(pc);
      std::cout << "parts " << r.parts.size() << " -> " << pc.output.string() << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_input_error(e.code()) ? kExitInput : kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}
