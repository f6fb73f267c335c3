#include "doctest.h"

#include "artkit/error.hpp"
#include "artkit/random.hpp"
#include "artkit/vq_core.hpp"
#include "fixtures.hpp"
#include "vq_oracle.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

using namespace artkit;
using namespace artkit::vq;
using namespace artkit::vq_oracle;

TEST_CASE("geometry") {
  const auto g = VqGeometry::for_profile(CodecProfile::compact());
  CHECK(g.block() == GridDims{8, 8, 8});
  CHECK(g.block_voxels() == 512);
  const auto e = VqGeometry::for_profile(CodecProfile::extended());
  CHECK(e.block() == GridDims{4, 8, 8});
  CHECK_THROWS_AS(VqGeometry::for_profile(CodecProfile::compact(), 60), Error);
}

TEST_CASE("occupancy_downsample is the block OR") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const OccupancyGrid g = random_grid(rng, GridDims{16, 8, 8}, 0.004);
    const OccupancyGrid m = occupancy_downsample(g, GridDims{4, 2, 2});
    for (int cx = 0; cx < 4; ++cx)
      for (int cy = 0; cy < 2; ++cy)
        for (int cz = 0; cz < 2; ++cz) {
          bool any = false;
          for (int x = 0; x < 4; ++x)
            for (int y = 0; y < 4; ++y)
              for (int z = 0; z < 4; ++z) any = any || g.at(cx * 4 + x, cy * 4 + y, cz * 4 + z);
          CHECK(m.at(cx, cy, cz) == any);
        }
  }
}

TEST_CASE("extract_blocks layout") {
  OccupancyGrid g(GridDims{4, 2, 2});
  g.set(3, 1, 0);
  const VqGeometry geo = toy_geometry();
  const Eigen::MatrixXd b = extract_blocks(g, geo);
  REQUIRE(b.rows() == 8);
  REQUIRE(b.cols() == 2);
  auto [c, r] = toy_block_slot(3, 1, 0);
  CHECK(b.sum() == 1.0);
  CHECK(b(r, c) == 1.0);
}

TEST_CASE("quantize picks the nearest entry") {
  Rng rng(8);
  for (bool zero_token : {true, false}) {
    for (int t = 0; t < 20; ++t) {
      LatentGrid z{GridDims{4, 4, 4}, random_matrix(rng, 5, 64, 1.0)};
      Codebook cb{random_matrix(rng, 5, 33, 1.0), zero_token};
      if (zero_token) cb.entries.col(0).setZero();
      const OccupancyGrid mask = random_grid(rng, z.dims, 0.5);
      const Quantized q = quantize(z, mask, cb);
      for (int c = 0; c < 64; ++c) {
        const auto k = q.indices.indices[c];
        if (zero_token && !mask.at_index(c)) {
          CHECK(k == 0);
          continue;
        }
        int best = zero_token ? 1 : 0;
        for (int j = best; j < cb.size(); ++j) {
          if ((z.features.col(c) - cb.entries.col(j)).squaredNorm() <
              (z.features.col(c) - cb.entries.col(best)).squaredNorm())
            best = j;
        }
        CHECK(k == static_cast<std::uint32_t>(best));
        CHECK(q.features.features.col(c) == cb.entries.col(k));
      }
    }
  }
  SUBCASE("ties resolve to the lowest index") {
    LatentGrid z{GridDims{1, 1, 1}, Eigen::MatrixXd::Zero(2, 1)};
    Codebook cb{Eigen::MatrixXd(2, 4), true};
    cb.entries << 0, 1, -1, 0, 0, 0, 0, 1;
    OccupancyGrid mask(GridDims{1, 1, 1});
    mask.set(0, 0, 0);
    CHECK(quantize(z, mask, cb).indices.indices[0] == 1);
  }
  SUBCASE("a zero-token codebook needs a real entry") {
    LatentGrid z{GridDims{1, 1, 1}, Eigen::MatrixXd::Zero(2, 1)};
    Codebook cb{Eigen::MatrixXd::Zero(2, 1), true};
    try {
      quantize(z, OccupancyGrid(GridDims{1, 1, 1}), cb);
      FAIL("expected EmptyCodebook");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyCodebook);
    }
  }
}

TEST_CASE("loss terms match the loop oracle") {
  Rng rng(13);
  for (int t = 0; t < 10; ++t) {
    VqModel model = toy_model(rng, 5, true);
    OccupancyGrid input = random_grid(rng, GridDims{4, 2, 2}, 0.4);
    const ForwardPass pass = forward(input, model, 0.25);
    const Frozen f = freeze(pass, false);
    CHECK(pass.loss.total == doctest::Approx(surrogate_loss(model, input, f, 0.25)).epsilon(1e-12));
    CHECK(pass.loss.codebook == doctest::Approx(pass.loss.commit));
    const LossTerms direct =
        vq_loss(input, pass.logits, pass.z, pass.quantized.features, pass.mask, 0.25, model.geometry);
    CHECK(direct.total == doctest::Approx(pass.loss.total).epsilon(1e-14));
  }
  SUBCASE("empty input has no VQ terms") {
    VqModel model = toy_model(rng, 5, true);
    const ForwardPass pass = forward(OccupancyGrid(GridDims{4, 2, 2}), model, 0.25);
    CHECK(pass.loss.codebook == 0.0);
    CHECK(pass.loss.commit == 0.0);
  }
  SUBCASE("clamped logits stay finite") {
    VqModel model = toy_model(rng, 5, true);
    model.decoder.bias.setConstant(-1e6);
    OccupancyGrid full(GridDims{4, 2, 2});
    for (std::size_t i = 0; i < full.cell_count(); ++i) full.set_index(i);
    const ForwardPass pass = forward(full, model, 0.25);
    CHECK(std::isfinite(pass.loss.total));
    CHECK(pass.loss.recon == doctest::Approx(30.0 + std::log1p(std::exp(-30.0))));
    const Gradients g = backward(pass, model, 0.25);
    CHECK(g.decoder.bias.norm() == 0.0);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    const bool zero_token = t % 4 != 3;
    const bool bypass = t % 4 == 2;
    VqModel model = toy_model(rng, 6, zero_token);
    OccupancyGrid input = random_grid(rng, GridDims{4, 2, 2}, 0.5);
    if (t % 5 == 0) {
      // only the first block occupied, so one cell is masked out
      input = OccupancyGrid(GridDims{4, 2, 2});
      input.set(0, 1, 1);
      input.set(1, 0, 0);
    }
    const GradientCheck g = check_gradients(model, input, 0.25 + 0.1 * t, bypass);
    CHECK(g.loss_gap < 1e-12);
    CHECK(g.frozen_entry_grad == 0.0);
    CHECK(g.max_rel_error < 1e-4);
  }
}

TEST_CASE("init_codebook") {
  Rng rng(23);
  SUBCASE("recovers well-separated clusters") {
    Eigen::MatrixXd samples(2, 300);
    const double centers[3][2] = {{5, 5}, {-5, 5}, {0, -6}};
    for (int i = 0; i < 300; ++i) {
      samples(0, i) = centers[i % 3][0] + 0.1 * rng.normal();
      samples(1, i) = centers[i % 3][1] + 0.1 * rng.normal();
    }
    const Codebook cb = init_codebook(samples, 4, 99, 10);
    CHECK(cb.entries.col(0).norm() == 0.0);
    for (const auto& c : centers) {
      double best = 1e9;
      for (int j = 1; j < 4; ++j) best = std::min(best, (cb.entries.col(j) - Eigen::Vector2d(c[0], c[1])).norm());
      CHECK(best < 0.1);
    }
  }
  SUBCASE("is seeded and handles fewer samples than entries") {
    const Eigen::MatrixXd samples = random_matrix(rng, 4, 5, 1.0);
    const Codebook a = init_codebook(samples, 16, 1);
    const Codebook b = init_codebook(samples, 16, 1);
    CHECK(a.entries == b.entries);
    CHECK(a.size() == 16);
    CHECK(a.entries.allFinite());
  }
  SUBCASE("no samples") {
    CHECK_THROWS_AS(init_codebook(Eigen::MatrixXd(4, 0), 8, 1), Error);
  }
}

TEST_CASE("train config parsing") {
  const TrainConfig c = parse_train_config(
      "# comment\nbeta = 0.5\nsteps=300\nseed = 12\nzero_token = false\noptimizer = sgd\nprofile = 16x8x8\n");
  CHECK(c.beta == 0.5);
  CHECK(c.steps == 300);
  CHECK(c.seed == 12);
  CHECK_FALSE(c.zero_token);
  CHECK(c.optimizer == Optimizer::Sgd);
  CHECK(c.profile == "16x8x8");
  const TrainConfig d = parse_train_config(format_train_config(c));
  CHECK(format_train_config(d) == format_train_config(c));
  CHECK_THROWS_AS(parse_train_config("bogus = 1\n"), Error);
  CHECK_THROWS_AS(parse_train_config("beta = 0\n"), Error);
  CHECK_THROWS_AS(parse_train_config("steps = 0\n"), Error);
  CHECK_THROWS_AS(parse_train_config("steps = ten\n"), Error);
}

TEST_CASE("training on a tiny dataset") {
  std::vector<OccupancyGrid> dataset;
  for (const auto& shape : fixtures::surface_shape_suite(4, 3)) dataset.push_back(fixtures::voxelize_normalized(shape.mesh, 16));
  TrainConfig config;
  config.resolution = 16;
  config.latent_dim = 8;
  config.codebook_size = 32;
  config.steps = 200;
  config.warmup_steps = 100;
  config.learning_rate = 0.01;
  config.vq_learning_rate = 0.003;
  config.profile = "8x8x8";
  int calls = 0;
  const TrainResult a = train_vqvae(dataset, config, [&](int, const LossTerms&) { ++calls; });
  CHECK(calls == 200);
  REQUIRE(a.trace.steps.size() == 200);
  auto window = [&](int from) {
    double sum = 0;
    for (int i = from; i < from + 20; ++i) sum += a.trace.steps[i].total;
    return sum;
  };
  CHECK(window(80) < window(0));     // warm-up phase
  CHECK(window(180) < window(100));  // quantized phase
  CHECK(a.model.codebook.entries.col(0).norm() == 0.0);

  const TrainResult b = train_vqvae(dataset, config);
  CHECK(a.model.encoder.weight == b.model.encoder.weight);
  CHECK(a.model.codebook.entries == b.model.codebook.entries);

  SUBCASE("checkpoint round trip") {
    const auto bytes = encode_checkpoint(a.model);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "AVQC");
    const VqModel back = decode_checkpoint(bytes);
    CHECK(back.geometry == a.model.geometry);
    CHECK(back.codebook.zero_token);
    // float32 storage
    CHECK((back.encoder.weight - a.model.encoder.weight).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(encode_checkpoint(back) == bytes);

    auto bad = bytes;
    bad[4] = 9;
    try {
      decode_checkpoint(bad);
      FAIL("expected CheckpointVersion");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CheckpointVersion);
    }
  }
  SUBCASE("decoded tokens match the quantized reconstruction") {
    const Quantized q = encode_quantize(dataset[0], a.model);
    const Decoded via_indices = decode_indices(q.indices, a.model);
    const Decoded via_features = decode(q.features, a.model.decoder, a.model.geometry);
    CHECK(via_indices.grid == via_features.grid);
    const auto seq = tokenize_grid(q.indices, CodecProfile::compact());
    CHECK(densify(parse_tokens(serialize_tokens(seq), CodecProfile::compact())) == q.indices);
  }
  SUBCASE("force-sparse ablation quantizes every cell") {
    config.zero_token = false;
    config.steps = 20;
    config.warmup_steps = 10;
    const TrainResult r = train_vqvae(dataset, config);
    CHECK_FALSE(r.model.codebook.zero_token);
    const Quantized q = encode_quantize(OccupancyGrid(16), r.model);
    // with no reserved entry even an empty grid maps to real entries
    CHECK(q.features.features.allFinite());
  }
  SUBCASE("empty dataset") {
    CHECK_THROWS_AS(train_vqvae({}, config), Error);
  }
}

TEST_CASE("recon metrics") {
  OccupancyGrid a(8), b(8);
  CHECK(recon_metrics(a, b).chamfer == 0.0);
  a.set(0, 0, 0);
  CHECK(std::isinf(recon_metrics(a, b).chamfer));
  b.set(3, 4, 0);
  const auto m = recon_metrics(a, b);
  CHECK(m.mse == doctest::Approx(2.0 / 512));
  // one point each side, distance 5 cells
  CHECK(m.chamfer == doctest::Approx(5.0 / 8));
  CHECK(recon_metrics(a, a).chamfer == 0.0);
  CHECK(recon_metrics(a, a).mse == 0.0);

  OccupancyGrid c(64), d(64);
  c.set(10, 20, 30);
  d.set(11, 20, 30);
  CHECK(recon_metrics(c, d).chamfer == doctest::Approx(1.0 / 64));
  CHECK(recon_metrics(c, d).chamfer_scaled() == doctest::Approx(1e5 / 64));
}
