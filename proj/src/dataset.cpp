#include "objfield/dataset.hpp"

#include <fstream>

#include "json.hpp"

namespace objfield {

std::string view_name(int index) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%03d", index);
  return buf;
}

ImageF SceneDataset::load_image(int view) const {
  return dequantize_to_f(read_png_rgb8(root / views[view].camera.image_path));
}

ImageU16 SceneDataset::load_labels(int view) const {
  return read_png_gray16(root / "labels" / (views[view].view_id + ".png"));
}

MaskSet SceneDataset::load_masks(int view) const {
  return load_mask_set(root / "masks", views[view].view_id, height, width);
}

MaskSet SceneDataset::load_clean(int view) const {
  return load_mask_set(root / "clean", views[view].view_id, height, width);
}

bool SceneDataset::has_labels() const { return std::filesystem::exists(root / "labels"); }
bool SceneDataset::has_masks() const { return std::filesystem::exists(root / "masks"); }
bool SceneDataset::has_clean() const { return std::filesystem::exists(root / "clean"); }

SceneDataset load_dataset(const std::filesystem::path& root) {
  std::ifstream in(root / "cameras.json");
  if (!in) throw DataError("cameras.json missing under " + root.string());
  nlohmann::json doc;
  in >> doc;

  SceneDataset ds;
  ds.root = root;
  ds.width = doc.at("width").get<int>();
  ds.height = doc.at("height").get<int>();
  if (doc.contains("background")) {
    auto bg = doc["background"];
    ds.background = {bg.at(0).get<float>(), bg.at(1).get<float>(), bg.at(2).get<float>()};
  }
  for (const auto& v : doc.at("views")) {
    DatasetView view;
    view.view_id = v.at("id").get<std::string>();
    Camera& cam = view.camera;
    cam.width = ds.width;
    cam.height = ds.height;
    cam.focal_x = v.at("fx").get<float>();
    cam.focal_y = v.at("fy").get<float>();
    cam.principal_x = v.at("cx").get<float>();
    cam.principal_y = v.at("cy").get<float>();
    cam.image_path = v.at("image").get<std::string>();
    auto m = v.at("camera_to_world");
    if (m.size() != 16) throw DataError("camera_to_world must hold 16 row-major values");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.camera_to_world.rotation(r, c) = m.at(r * 4 + c).get<float>();
      cam.camera_to_world.translation[r] = m.at(r * 4 + 3).get<float>();
    }
    cam.validate();
    ds.views.push_back(std::move(view));
  }
  return ds;
}

void save_cameras(const SceneDataset& dataset) {
  nlohmann::ordered_json doc;
  doc["width"] = dataset.width;
  doc["height"] = dataset.height;
  doc["background"] = {dataset.background.x, dataset.background.y, dataset.background.z};
  doc["views"] = nlohmann::ordered_json::array();
  for (const DatasetView& v : dataset.views) {
    nlohmann::ordered_json jv;
    jv["id"] = v.view_id;
    jv["image"] = v.camera.image_path;
    jv["fx"] = v.camera.focal_x;
    jv["fy"] = v.camera.focal_y;
    jv["cx"] = v.camera.principal_x;
    jv["cy"] = v.camera.principal_y;
    std::vector<float> m(16, 0.0f);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r * 4 + c] = v.camera.camera_to_world.rotation(r, c);
      m[r * 4 + 3] = v.camera.camera_to_world.translation[r];
    }
    m[15] = 1.0f;
    jv["camera_to_world"] = m;
    doc["views"].push_back(std::move(jv));
  }
  std::ofstream out(dataset.root / "cameras.json");
  out << doc.dump(2) << "\n";
}

}  // namespace objfield
