// Regenerates the bundled base scenes and training suites under data/.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tg/factory.hpp"

namespace fs = std::filesystem;
using namespace tg;

namespace {

struct Place {
  std::string category;
  std::string room;
  double x, y, yaw = 0.0;
  std::string on;  // support name, empty for floor
};

SceneDoc build(const std::string& id, std::vector<RoomSpec> rooms, const std::vector<Place>& places,
               const std::string& robot_room) {
  SceneDoc doc;
  doc.id = id;
  doc.rooms = std::move(rooms);
  std::map<std::string, int> count;
  for (const auto& p : places) {
    const AssetSpec* a = builtin_catalog().find(p.category);
    if (!a) throw std::runtime_error("unknown category " + p.category);
    ObjectInstance o;
    o.id = static_cast<int>(doc.objects.size());
    o.name = p.category + "_" + std::to_string(count[p.category]++);
    o.category = p.category;
    o.room = p.room;
    o.half_extents = a->half;
    o.flags = a->flags;
    o.pose = {p.x, p.y, 0.0, p.yaw};
    if (!p.on.empty()) {
      auto it = std::find_if(doc.objects.begin(), doc.objects.end(), [&](const ObjectInstance& s) { return s.name == p.on; });
      o.parent = ParentLink{it->id, Relation::OnTop};
      o.pose.z = it->top_z();
    }
    doc.objects.push_back(o);
  }
  doc.robot.room = robot_room;
  for (const auto& r : doc.rooms)
    if (r.name == robot_room) doc.robot.pose = {r.rect.cx(), r.rect.cy(), 0.0, 0.0};
  WorldState ws = load_scene(doc);
  for (const auto& g : build_room_grids(ws))
    if (g.room == robot_room) {
      auto [x, y] = g.grid.cell_center(*g.spawn);
      doc.robot.pose = {x, y, 0.0, 0.0};
    }
  load_scene(doc);
  return doc;
}

std::vector<SceneDoc> base_scenes() {
  const double q = kPi / 2.0;
  std::vector<SceneDoc> out;
  out.push_back(build("kitchen_living",
                      {{"kitchen", {0, 0, 5, 4}, "kitchen"}, {"living", {5, 0, 10, 4}, "living"}},
                      {{"counter", "kitchen", 0.4, 2.0},
                       {"microwave", "kitchen", 0.4, 2.5, 0, "counter_0"},
                       {"fridge", "kitchen", 1.5, 3.55},
                       {"stove", "kitchen", 3.0, 3.6},
                       {"oven", "kitchen", 4.2, 3.6},
                       {"table", "kitchen", 2.5, 1.5},
                       {"cabinet", "kitchen", 4.4, 0.35},
                       {"dishwasher", "kitchen", 3.2, 0.4},
                       {"trash_can", "kitchen", 4.8, 2.0},
                       {"sofa", "living", 7.5, 3.5},
                       {"coffee_table", "living", 7.5, 2.3},
                       {"tv_stand", "living", 7.5, 0.3},
                       {"tv", "living", 7.5, 0.3, 0, "tv_stand_0"},
                       {"shelf", "living", 9.7, 2.0, q},
                       {"floor_lamp", "living", 9.7, 3.7},
                       {"armchair", "living", 5.5, 2.0}},
                      "kitchen"));
  out.push_back(build("apartment",
                      {{"kitchen", {0, 0, 4, 4}, "kitchen"},
                       {"living", {4, 0, 9, 4}, "living"},
                       {"bedroom", {0, 4, 4, 8}, "bedroom"},
                       {"office", {4, 4, 9, 8}, "office"}},
                      {{"counter", "kitchen", 0.4, 2.0},
                       {"microwave", "kitchen", 0.4, 2.5, 0, "counter_0"},
                       {"toaster", "kitchen", 0.4, 1.4, 0, "counter_0"},
                       {"fridge", "kitchen", 1.5, 3.55},
                       {"stove", "kitchen", 3.0, 3.6},
                       {"table", "kitchen", 2.3, 1.5},
                       {"cabinet", "kitchen", 3.4, 0.35},
                       {"sofa", "living", 6.5, 3.5},
                       {"coffee_table", "living", 6.5, 2.3},
                       {"tv_stand", "living", 6.5, 0.3},
                       {"tv", "living", 6.5, 0.3, 0, "tv_stand_0"},
                       {"shelf", "living", 8.7, 2.0, q},
                       {"floor_lamp", "living", 8.7, 3.7},
                       {"bed", "bedroom", 1.0, 6.8},
                       {"nightstand", "bedroom", 2.1, 7.6},
                       {"desk_lamp", "bedroom", 2.1, 7.6, 0, "nightstand_0"},
                       {"cabinet", "bedroom", 3.4, 7.65},
                       {"desk", "office", 6.5, 7.5},
                       {"chair", "office", 6.5, 6.8},
                       {"shelf", "office", 8.7, 6.0, q},
                       {"trash_can", "office", 4.3, 7.7},
                       {"plant", "office", 8.7, 7.7}},
                      "living"));
  out.push_back(build("studio", {{"studio", {0, 0, 5, 4}, "living"}},
                      {{"table", "studio", 1.0, 1.0},
                       {"coffee_table", "studio", 2.5, 3.4},
                       {"desk", "studio", 1.0, 3.5},
                       {"shelf", "studio", 4.7, 2.0, q},
                       {"side_table", "studio", 4.5, 0.4}},
                      "studio"));
  // Two touching side tables at one end, clutter at the other, the robot in between.
  out.push_back(build("long_hall", {{"hall", {0, 0, 8, 3}, "dining"}},
                      {{"side_table", "hall", 6.75, 1.5}, {"side_table", "hall", 7.25, 1.5}, {"table", "hall", 0.6, 1.5, q}},
                      "hall"));
  return out;
}

std::string rel(const fs::path& p, const fs::path& base) { return fs::relative(p, base).generic_string(); }

/// Instantiates each task and writes task, scene and a manifest row for it.
void write_suite(const fs::path& dir, const std::vector<TaskDef>& tasks, const SceneDoc& base) {
  fs::create_directories(dir / "tasks");
  fs::create_directories(dir / "scenes");
  std::ofstream manifest(dir / "manifest.tsv");
  for (const auto& t : tasks) {
    Instantiated inst = instantiate_scene(t, base, 1);
    if (!reference_plan(t, inst.doc, inst.binding)) throw std::runtime_error("no reference plan for " + t.id);
    fs::path tp = dir / "tasks" / (t.id + ".task"), sp = dir / "scenes" / (t.id + ".json");
    write_task_file(tp, t);
    write_scene_file(sp, inst.doc);
    manifest << rel(tp, dir) << '\t' << rel(sp, dir) << '\t' << t.family << '\n';
  }
}

TaskDef sparse_task(int i, const std::string& item, const std::vector<std::string>& distractors) {
  TaskDef t;
  t.id = "sparse_" + std::to_string(i);
  t.family = "pick_and_place";
  std::string name = item + "_1";
  t.instruction = "Move the " + item + " to the other side table.";
  t.objects.push_back({name, item, {}});
  for (const auto& d : distractors) t.objects.push_back({d + "_1", d, {}});
  t.fixtures = {"side_table_0", "side_table_1", "table_0"};
  t.init.push_back({PredKind::OnTop, name, "side_table_0"});
  for (const auto& d : distractors) t.init.push_back({PredKind::OnTop, d + "_1", "table_0"});
  t.goals.push_back({PredKind::OnTop, name, "side_table_1"});
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("data");
  fs::create_directories(root / "scenes");
  std::map<std::string, SceneDoc> scenes;
  for (auto& s : base_scenes()) {
    write_scene_file(root / "scenes" / (s.id + ".json"), s);
    scenes[s.id] = s;
  }

  TemplateGenerator plain(builtin_catalog(), 0);
  struct Only : InstructionGenerator {
    InstructionGenerator& inner;
    explicit Only(InstructionGenerator& g) : inner(g) {}
    std::optional<TaskDef> propose(const SceneDoc& b, const std::string&, std::mt19937_64& rng) override {
      return inner.propose(b, "pick_and_place", rng);
    }
  } only(plain);
  auto toy = generate_task_batch(scenes["studio"], 20, 7, only);
  for (std::size_t i = 0; i < toy.size(); ++i) toy[i].id = "toy_" + std::to_string(i);
  write_suite(root / "suites" / "toy_pickplace", toy, scenes["studio"]);

  // move, pick_up, place with eight distractors filling the policy's slots.
  const std::vector<std::string> items = {"apple", "mug", "book", "remote", "cup", "phone", "candle", "toy"};
  const std::vector<std::string> clutter = {"plate", "bowl", "pot", "banana", "orange", "egg", "pen", "notebook",
                                            "milk", "bread"};
  std::vector<TaskDef> sparse;
  for (int i = 0; i < 8; ++i) {
    std::vector<std::string> d;
    for (int k = 0; k < 8; ++k) d.push_back(clutter[(i + k) % clutter.size()]);
    sparse.push_back(sparse_task(i, items[i], d));
  }
  write_suite(root / "suites" / "sparse_3step", sparse, scenes["long_hall"]);
  std::cout << "wrote " << scenes.size() << " scenes, " << toy.size() << " toy tasks, " << sparse.size()
            << " sparse tasks\n";
}
