#include "doctest.h"

#include "artkit/error.hpp"
#include "artkit/hull.hpp"
#include "artkit/random.hpp"
#include "artkit/urdf.hpp"
#include "fixtures.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace artkit;

namespace {

std::string storage_box_text() {
  std::ifstream in(std::string(ARTKIT_TEST_DATA) + "/storage_box.json");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

std::string with_parts(const std::string& parts) {
  return R"({"object_captions": {"name": "T", "scale": 50}, "parts_captions": )" + parts +
         R"(, "parts_voxels": {}})";
}

std::map<std::string, LinkAsset> box_assets(const AssetMetadata& meta) {
  std::map<std::string, LinkAsset> assets;
  double offset = 0.0;
  for (const auto& p : meta.parts) {
    assets[p.id] = {"parts/part_" + p.id + ".obj",
                    fixtures::box(Vec3(offset, 0, 0), Vec3(offset + 0.1, 0.2, 0.3))};
    offset += 0.2;
  }
  return assets;
}

}  // namespace

TEST_CASE("convex hull") {
  SUBCASE("cube vertices") {
    const Mesh cube = fixtures::subdivided_box(Vec3(-1, 0, 2), Vec3(1, 3, 2.5), 3);
    const ConvexHull h = convex_hull(cube.vertices);
    CHECK(h.volume() == doctest::Approx(2 * 3 * 0.5).epsilon(1e-12));
  }
  SUBCASE("tetrahedron and octahedron") {
    CHECK(convex_hull({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}).volume() ==
          doctest::Approx(1.0 / 6));
    CHECK(convex_hull({Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1),
                       Vec3(0, 0, 0)})
              .volume() == doctest::Approx(4.0 / 3));
  }
  SUBCASE("planar input has no volume") {
    CHECK(convex_hull({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0), Vec3(0.5, 0.2, 0)}).volume() == 0.0);
  }
  SUBCASE("random clouds: closed, outward, containing every point") {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
      std::vector<Vec3> pts;
      for (int i = 0; i < 300; ++i) pts.emplace_back(rng.normal(), rng.normal(), 0.3 * rng.normal());
      const ConvexHull h = convex_hull(pts);
      std::map<std::pair<int, int>, int> edges;
      for (const auto& f : h.faces) {
        for (int k = 0; k < 3; ++k) edges[{f[k], f[(k + 1) % 3]}]++;
        const Vec3 n = (pts[f[1]] - pts[f[0]]).cross(pts[f[2]] - pts[f[0]]);
        for (const auto& p : pts) REQUIRE(n.dot(p - pts[f[0]]) <= 1e-9);
      }
      for (const auto& [e, count] : edges) {
        CHECK(count == 1);
        CHECK(edges.count({e.second, e.first}) == 1);
      }
      CHECK(h.volume() > 0.0);
    }
  }
  SUBCASE("sphere samples approach the ball volume from below") {
    const Mesh s = fixtures::ellipsoid(Vec3::Zero(), Vec3(1, 2, 0.5), 64, 128);
    const double v = convex_hull(s.vertices).volume();
    const double ball = 4.0 / 3 * M_PI * 1 * 2 * 0.5;
    CHECK(v < ball);
    CHECK(v > 0.99 * ball);
  }
}

TEST_CASE("parse_metadata on the appendix example") {
  const AssetMetadata meta = parse_metadata(storage_box_text());
  CHECK(meta.name == "Storage Box with Frame");
  CHECK(meta.scale_cm == 40.0);
  REQUIRE(meta.parts.size() == 2);
  CHECK(meta.parts[0].id == "0");
  CHECK(meta.parts[0].type == JointType::Fixed);
  CHECK(meta.parts[0].material == "Plastic");
  CHECK(*meta.parts[0].density == doctest::Approx(1.2));
  CHECK(*meta.parts[0].youngs_modulus_gpa == doctest::Approx(2.5));
  CHECK_FALSE(meta.parts[0].parent);
  CHECK(meta.parts[1].type == JointType::Revolute);
  CHECK(*meta.parts[1].parent == "0");
  CHECK(*meta.parts[1].center == std::array<int, 3>{100, 138, 101});
  CHECK(*meta.parts[1].limits == std::array<int, 2>{-54, 45});
  CHECK(meta.parts[1].tokens == "<voxel> 43 1930 <voxel> 44 13 ...");
}

TEST_CASE("parse_metadata errors") {
  CHECK(code_of([] { parse_metadata(R"({"object_captions": {"name": "x", "scale": 1}, "parts_voxels": {}})"); }) ==
        ErrorCode::SchemaViolation);
  try {
    parse_metadata(R"({"object_captions": {"name": "x", "scale": 1}, "parts_voxels": {}})");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("parts_captions") != std::string::npos);
  }
  CHECK(code_of([] {
          parse_metadata(with_parts(R"({"0": {"type": "fixed"}, "1": {"type": "revolute", "parent": "0",
                                         "center": [201, 0, 0], "axis": [1, 0, 0], "limits": [0, 1]}})"));
        }) == ErrorCode::RangeViolation);
  CHECK(code_of([] {
          parse_metadata(with_parts(R"({"0": {"type": "fixed"}, "1": {"type": "revolute", "parent": "0",
                                         "center": [1, 0, 0], "axis": [101, 0, 0], "limits": [0, 1]}})"));
        }) == ErrorCode::RangeViolation);
  CHECK(code_of([] { parse_metadata(with_parts(R"({"0": {"type": "fixed"}, "1": {"type": "fixed"}})")); }) ==
        ErrorCode::MultipleRoots);
  CHECK(code_of([] { parse_metadata(with_parts(R"({"0": {"type": "fixed"}, "1": {"type": "fixed", "parent": "7"}})")); }) ==
        ErrorCode::UnknownParent);
  CHECK(code_of([] { parse_metadata(with_parts(R"({"0": {"type": "spinning"}})")); }) == ErrorCode::SchemaViolation);
  CHECK(code_of([] { parse_metadata(with_parts(R"({"0": {"type": "fixed", "density": "3 lb/ft^3"}})")); }) ==
        ErrorCode::SchemaViolation);
  CHECK(code_of([] { parse_metadata(with_parts(R"({"0": {"type": "fixed", "center": [1.5, 0, 0]}})")); }) ==
        ErrorCode::SchemaViolation);
  CHECK(code_of([] { parse_metadata("{not json"); }) == ErrorCode::SchemaViolation);

  const auto meta = parse_metadata(with_parts(R"({"0": {"type": "rigid", "extra": [1, 2], "density": 800}})"));
  CHECK(meta.parts[0].type == JointType::Fixed);
  CHECK(*meta.parts[0].density == 800.0);
  const auto kg = parse_metadata(with_parts(R"({"0": {"type": "fixed", "density": "7850 kg/m^3"}})"));
  CHECK(*kg.parts[0].density == doctest::Approx(7.85));
}

TEST_CASE("decode_kinematics") {
  const AssetMetadata meta = parse_metadata(storage_box_text());
  const Joint j = decode_kinematics(meta.parts[1], meta.scale_cm);
  CHECK(center_to_normalized(*meta.parts[1].center).isApprox(Vec3(0.500, 0.690, 0.505), 1e-15));
  CHECK((j.origin - Vec3(0.5, 0.69, 0.505)).norm() < 1e-12);
  CHECK(j.axis == Vec3(1, 0, 0));
  REQUIRE(j.limits);
  CHECK(j.limits->lower == doctest::Approx(-54 * M_PI / 100).epsilon(1e-15));
  CHECK(j.limits->upper == doctest::Approx(45 * M_PI / 100).epsilon(1e-15));
  CHECK(std::abs(j.limits->lower - -1.6964600329384882) < 1e-6);
  CHECK(std::abs(j.limits->upper - 1.4137166941154069) < 1e-6);

  SUBCASE("inverse normalization") {
    const NormalizationTransform t{Vec3(0.2, -0.1, 0.3), 2.0};
    const Joint k = decode_kinematics(meta.parts[1], meta.scale_cm, t);
    CHECK((t.apply(k.origin) - Vec3(0.5, 0.69, 0.505)).norm() < 1e-12);
  }
  SUBCASE("prismatic limits scale with the object") {
    PartRecord p;
    p.id = "2";
    p.type = JointType::Prismatic;
    p.axis = {0, 30, 40};
    p.limits = {0, 50};
    const Joint k = decode_kinematics(p, 40.0);
    CHECK((k.axis - Vec3(0, 0.6, 0.8)).norm() < 1e-15);
    CHECK(k.limits->lower == 0.0);
    CHECK(k.limits->upper == doctest::Approx(0.2));
  }
  SUBCASE("purely negative motion flips the axis") {
    PartRecord p;
    p.id = "2";
    p.type = JointType::Revolute;
    p.axis = {0, 0, 100};
    p.limits = {-50, 0};
    const Joint k = decode_kinematics(p, 40.0);
    CHECK(k.axis == Vec3(0, 0, -1));
    CHECK(k.limits->lower == 0.0);
    CHECK(k.limits->upper == doctest::Approx(M_PI / 2));
  }
  SUBCASE("hinge is revolute, free is floating") {
    PartRecord p;
    p.type = joint_type_from_name("hinge");
    p.axis = {0, 1, 0};
    p.limits = {-10, 10};
    CHECK(decode_kinematics(p, 1.0).type == JointType::Revolute);
    p.type = joint_type_from_name("free");
    const Joint f = decode_kinematics(p, 1.0);
    CHECK(f.type == JointType::Floating);
    CHECK_FALSE(f.limits);
  }
  SUBCASE("errors") {
    PartRecord p;
    p.type = JointType::Revolute;
    p.axis = {0, 0, 0};
    p.limits = {0, 1};
    CHECK(code_of([&] { decode_kinematics(p, 1.0); }) == ErrorCode::ZeroAxis);
    p.axis = {1, 0, 0};
    p.limits = {5, 1};
    CHECK(code_of([&] { decode_kinematics(p, 1.0); }) == ErrorCode::InvalidLimits);
  }
}

TEST_CASE("build_kinematic_tree") {
  const AssetMetadata meta = parse_metadata(storage_box_text());
  const KinematicTree tree = build_kinematic_tree(meta);
  CHECK(tree.root == "0");
  CHECK(tree.node("0").children == std::vector<std::string>{"1"});
  CHECK(tree.node("1").joint.type == JointType::Revolute);
  CHECK(tree.depth() == 1);

  const auto chain = parse_metadata(with_parts(R"({
    "0": {"type": "fixed"},
    "1": {"type": "revolute", "parent": "0", "center": [10, 10, 10], "axis": [0, 0, 1], "limits": [-10, 10]},
    "2": {"type": "prismatic", "parent": "1", "center": [20, 10, 10], "axis": [1, 0, 0], "limits": [0, 30]},
    "3": {"type": "hinge", "parent": "2", "center": [30, 10, 10], "axis": [0, 1, 0], "limits": [0, 90]}})"));
  const KinematicTree t4 = build_kinematic_tree(chain);
  CHECK(t4.depth() == 3);
  CHECK(t4.node("3").parent == std::optional<std::string>("2"));

  const auto cycle = parse_metadata(with_parts(R"({"1": {"type": "fixed", "parent": "2"}, "2": {"type": "fixed", "parent": "1"}})"));
  try {
    build_kinematic_tree(cycle);
    FAIL("expected CycleDetected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CycleDetected);
    CHECK(std::string(e.what()).find("1 -> 2 -> 1") != std::string::npos);
  }
}

TEST_CASE("emit_urdf") {
  const AssetMetadata meta = parse_metadata(storage_box_text());
  const KinematicTree tree = build_kinematic_tree(meta);
  const auto assets = box_assets(meta);
  const std::string xml = emit_urdf(meta, tree, assets);
  CHECK(validate_urdf(xml).empty());
  CHECK(xml == emit_urdf(meta, tree, assets));

  const UrdfModel model = parse_urdf(xml);
  CHECK(model.name == "Storage Box with Frame");
  REQUIRE(model.links.size() == 2);
  REQUIRE(model.joints.size() == 1);
  CHECK(model.joints[0].type == "revolute");
  CHECK(std::abs(model.joints[0].limits->lower - -1.6965) < 1e-4);
  CHECK(std::abs(model.joints[0].limits->upper - 1.4137) < 1e-4);
  CHECK(model.links[0].mesh_file == "parts/part_0.obj");
  // 0.1 x 0.2 x 0.3 m box at 1.2 g/cm^3
  CHECK(model.links[0].mass == doctest::Approx(1200.0 * 0.006));
  // part 1 falls back to 1 g/cm^3
  CHECK(model.links[1].mass == doctest::Approx(1000.0 * 0.006));
  CHECK(xml.find("youngs_modulus_gpa: 2.5") != std::string::npos);
  CHECK(xml.find("<mu1>0.5</mu1>") != std::string::npos);

  SUBCASE("fixed joints carry no limit") {
    const auto fixed = parse_metadata(with_parts(R"({"0": {"type": "fixed"}, "1": {"type": "fixed", "parent": "0"}})"));
    const std::string x = emit_urdf(fixed, build_kinematic_tree(fixed), box_assets(fixed));
    CHECK(x.find("type=\"fixed\"") != std::string::npos);
    CHECK(x.find("<limit") == std::string::npos);
    CHECK(validate_urdf(x).empty());
  }
  SUBCASE("missing mesh") {
    auto partial = assets;
    partial.erase("1");
    CHECK(code_of([&] { emit_urdf(meta, tree, partial); }) == ErrorCode::MissingMesh);
  }
}

TEST_CASE("validate_urdf catches structural problems") {
  const std::string base_links = R"(<link name="a"><visual><geometry><mesh filename="a.obj"/></geometry></visual></link>
<link name="b"><visual><geometry><mesh filename="b.obj"/></geometry></visual></link>)";
  auto robot = [&](const std::string& body) { return "<robot name=\"r\">" + base_links + body + "</robot>"; };
  CHECK(validate_urdf(robot(R"(<joint name="j" type="fixed"><parent link="a"/><child link="b"/></joint>)")).empty());
  CHECK_FALSE(validate_urdf(robot("")).empty());  // two roots
  CHECK_FALSE(validate_urdf(robot(R"(<joint name="j" type="revolute"><parent link="a"/><child link="b"/>
      <axis xyz="1 1 0"/><limit lower="0" upper="1"/></joint>)")).empty());
  CHECK_FALSE(validate_urdf(robot(R"(<joint name="j" type="revolute"><parent link="a"/><child link="b"/>
      <axis xyz="1 0 0"/><limit lower="1" upper="0"/></joint>)")).empty());
  CHECK_FALSE(validate_urdf(robot(R"(<joint name="j" type="fixed"><parent link="a"/><child link="c"/></joint>)")).empty());
  CHECK_FALSE(validate_urdf(robot(R"(<joint name="j" type="fixed"><parent link="a"/><child link="b"/></joint>
      <joint name="k" type="fixed"><parent link="b"/><child link="a"/></joint>)")).empty());
  CHECK_FALSE(validate_urdf("<robot name=\"r\"><link name=\"a\">").empty());
}

TEST_CASE("parse -> build -> emit -> re-parse round trip") {
  Rng rng(77);
  const char* types[] = {"fixed", "revolute", "prismatic", "free", "hinge", "rigid"};
  for (int trial = 0; trial < 50; ++trial) {
    nlohmann::ordered_json parts = nlohmann::ordered_json::object();
    const int n = 2 + static_cast<int>(rng.below(5));
    for (int i = 0; i < n; ++i) {
      nlohmann::ordered_json rec;
      rec["type"] = i == 0 ? "fixed" : types[rng.below(6)];
      if (i > 0) rec["parent"] = std::to_string(rng.below(i));
      rec["center"] = {rng.below(201), rng.below(201), rng.below(201)};
      std::array<int, 3> axis{};
      do {
        axis = {int(rng.below(101)), int(rng.below(101)), int(rng.below(101))};
      } while (axis[0] + axis[1] + axis[2] == 0);
      rec["axis"] = axis;
      const int lo = -static_cast<int>(rng.below(100));
      rec["limits"] = {lo, lo + static_cast<int>(rng.below(150))};
      parts[std::to_string(i)] = rec;
    }
    nlohmann::ordered_json doc = {{"object_captions", {{"name", "rt"}, {"scale", rng.uniform(5, 200)}}},
                                  {"parts_captions", parts},
                                  {"parts_voxels", nlohmann::ordered_json::object()}};
    const AssetMetadata meta = parse_metadata(doc.dump());
    const NormalizationTransform t{Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)), rng.uniform(0.1, 3)};
    const KinematicTree tree = build_kinematic_tree(meta, t);
    const std::string xml = emit_urdf(meta, tree, box_assets(meta));
    REQUIRE(validate_urdf(xml).empty());
    const UrdfModel model = parse_urdf(xml);
    const auto frames = model.link_frames();
    for (const auto& node : tree.nodes) {
      CHECK((frames.at(link_name(node.id)) - node.frame).norm() < 1e-6);
      if (!node.parent) continue;
      const auto it = std::find_if(model.joints.begin(), model.joints.end(),
                                   [&](const UrdfJoint& j) { return j.child == link_name(node.id); });
      REQUIRE(it != model.joints.end());
      CHECK(it->type == to_string(node.joint.type));
      if (node.joint.limits) {
        CHECK((it->axis - node.joint.axis).norm() < 1e-6);
        CHECK(std::abs(it->axis.norm() - 1.0) < 1e-6);
        CHECK(std::abs(it->limits->lower - node.joint.limits->lower) < 1e-6);
        CHECK(std::abs(it->limits->upper - node.joint.limits->upper) < 1e-6);
        CHECK(it->limits->lower <= it->limits->upper);
      }
      if (node.joint.has_origin) CHECK((frames.at(link_name(node.id)) - node.joint.origin).norm() < 1e-6);
    }
  }
}
