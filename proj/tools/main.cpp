// lvg-cli: data generation, staged training, distillation, rollout and eval.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lvg/config.hpp"
#include "lvg/distill.hpp"
#include "lvg/flow.hpp"
#include "lvg/latent.hpp"
#include "lvg/metrics.hpp"
#include "lvg/model.hpp"
#include "lvg/rollout.hpp"
#include "lvg/scenes.hpp"
#include "lvg/text.hpp"
#include "lvg/train.hpp"
#include "lvg/voxel.hpp"

namespace fs = std::filesystem;
using namespace lvg;

namespace {

struct GlobalOpts {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 1;
    std::string out;
};

RunConfig load_config(const GlobalOpts& g) {
    RunConfig cfg = g.config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(g.config_path);
    if (g.seed_set) cfg.set("seed", std::to_string(g.seed));
    return cfg;
}

std::string data_root(const RunConfig& cfg) {
    if (const char* env = std::getenv("LVG_DATA_DIR"); env && *env) return env;
    return cfg.get_str("data.dir");
}

void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write " + p.string());
    f << text;
    if (!f) throw DataError("write failed for " + p.string());
}

// Resolved config next to the outputs, one file per run.
void log_resolved(const RunConfig& cfg, const fs::path& out_dir) {
    write_file(out_dir / "resolved.cfg", cfg.resolved());
}

// Index-deterministic worker pool: results land by position, so the
// reduction order never depends on thread scheduling.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    int k = std::min<int>(jobs, int(n));
    pool.reserve(size_t(k));
    for (int t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

ModelConfig model_config_of(const RunConfig& cfg) {
    ModelConfig mc;
    mc.width = cfg.get_int("model.width");
    mc.layers = cfg.get_int("model.layers");
    mc.heads = cfg.get_int("model.heads");
    mc.head_dim = cfg.get_int("model.head_dim");
    mc.vocab = cfg.get_int("model.vocab");
    mc.t_max = cfg.get_int("model.t_max");
    mc.cond_dim = cfg.get_int("model.cond_dim");
    mc.latent_channels = cfg.get_int("codec.d");
    mc.validate();
    return mc;
}

SamplerConfig sampler_of(const RunConfig& cfg, uint64_t seed) {
    SamplerConfig s;
    s.cfg_weight = cfg.get_double("flow.cfg_weight");
    s.schedule = NoiseSchedule::uniform(cfg.get_int("flow.num_steps"));
    s.seed = seed;
    return s;
}

IcpConfig icp_of(const RunConfig& cfg) {
    IcpConfig c;
    c.max_iterations = cfg.get_int("icp.max_iterations");
    c.tolerance = cfg.get_double("icp.tolerance");
    c.yaw_candidates = cfg.get_int("icp.yaw_candidates");
    c.max_source_points = cfg.get_int("icp.max_points");
    c.validate();
    return c;
}

MetricParams metric_params(const RunConfig& cfg, int resolution, const Catalog& catalog) {
    MetricParams p;
    p.tau = cfg.get_double("metrics.tau") / double(resolution);  // voxel units -> world
    p.delta_pos = cfg.get_double("metrics.delta_pos");
    p.delta_yaw = cfg.get_double("metrics.delta_yaw_deg") * std::numbers::pi / 180.0;
    p.symmetry_by_class = catalog.symmetry_map();
    return p;
}

std::vector<SceneSpec> load_split(const std::string& root, const std::string& split) {
    std::vector<SceneSpec> out;
    for (const auto& path : list_scene_files(root, split)) out.push_back(load_scene(path));
    if (out.empty()) throw DataError("no scenes under " + root + "/scenes/" + split);
    return out;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t scene_seed(uint64_t base, const std::string& scene_id) {
    return splitmix64(base ^ fnv1a(scene_id));
}

std::vector<QueueItem> queue_items(const SceneSpec& spec) {
    std::vector<QueueItem> items;
    items.reserve(spec.objects.size());
    for (const auto& o : spec.objects) items.push_back({o.id, o.class_id});
    return items;
}

std::vector<ScoredObject> truth_objects(const SceneSpec& spec, const Catalog& catalog) {
    std::vector<ScoredObject> out;
    out.reserve(spec.objects.size());
    for (const auto& o : spec.objects)
        out.push_back({o.placement, place_box(catalog.find(o.class_id), o.placement)});
    return out;
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const GlobalOpts& g) {
    RunConfig cfg = load_config(g);
    const std::string out = g.out.empty() ? data_root(cfg) : g.out;
    const int res = cfg.get_int("grid.resolution");
    const int counts[3] = {cfg.get_int("data.train_scenes"), cfg.get_int("data.val_scenes"),
                           cfg.get_int("data.test_scenes")};
    const Catalog& catalog = gen_assets();

    DatasetSplits splits;
    const char* names[3] = {"train", "val", "test"};
    const uint64_t bases[3] = {1, 20001, 30001};
    std::vector<SceneSpec>* dst[3] = {&splits.train, &splits.val, &splits.test};
    for (int s = 0; s < 3; ++s) {
        auto& vec = *dst[s];
        vec.resize(size_t(counts[s]));
        parallel_for(size_t(counts[s]), g.jobs, [&](size_t i) {
            vec[i] = gen_scene(bases[s] + i, catalog, res);
            char buf[32];
            std::snprintf(buf, sizeof buf, "%s_%06zu", names[s], i);
            vec[i].scene_id = buf;
        });
    }

    DatasetManifest manifest = save_dataset(out, catalog, splits);
    log_resolved(cfg, out);
    std::printf("dataset %s: %d train, %d val, %d test, checksum %s\n", out.c_str(),
                manifest.train_count, manifest.val_count, manifest.test_count,
                manifest.checksum.c_str());
    return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const GlobalOpts& g, const std::string& stage_str, const std::string& init_path) {
    RunConfig cfg = load_config(g);
    TrainConfig tc;
    tc.stage = stage_from_string(stage_str);
    tc.steps = cfg.get_int("train.steps");
    tc.batch_size = cfg.get_int("train.batch_size");
    tc.lr = cfg.get_double("train.lr");
    tc.beta1 = cfg.get_double("train.beta1");
    tc.beta2 = cfg.get_double("train.beta2");
    tc.weight_decay = cfg.get_double("train.weight_decay");
    tc.p_drop = cfg.get_double("train.drop_rate");
    tc.seed = cfg.get_u64("seed");
    tc.model = model_config_of(cfg);
    tc.validate();

    std::unique_ptr<Model<float>> init;
    if (tc.stage != TrainStage::base) {
        if (init_path.empty())
            throw ConfigError(std::string(stage_str) + " stage requires --init <base checkpoint>");
        init = std::make_unique<Model<float>>(load_model(init_path));
    } else if (!init_path.empty()) {
        init = std::make_unique<Model<float>>(load_model(init_path));
    }

    const fs::path out = g.out.empty() ? fs::path("runs") / ("train-" + stage_str) : fs::path(g.out);
    fs::create_directories(out);

    auto specs = load_split(data_root(cfg), "train");
    TrainData data = prepare_training_data(specs, gen_assets(), tc.model);

    std::ofstream log(out / (stage_str + "_loss.csv"), std::ios::binary);
    if (!log) throw DataError("cannot write loss log under " + out.string());
    Model<float> model = train_stage(tc, data, init.get(), &log);

    const fs::path ckpt = out / (stage_str + ".ckpt");
    save_model(ckpt.string(), model);
    log_resolved(cfg, out);
    std::printf("checkpoint %s (%d steps, %zu scenes)\n", ckpt.string().c_str(), tc.steps,
                specs.size());
    return 0;
}

// ----------------------------------------------------------------- distill

int cmd_distill(const GlobalOpts& g, const std::string& base_path, const std::string& teacher_path,
                bool no_step, bool no_holistic) {
    RunConfig cfg = load_config(g);
    DistillConfig dc;
    dc.steps = cfg.get_int("distill.T");
    dc.lr_student = cfg.get_double("distill.lr_student");
    dc.lr_critic = cfg.get_double("distill.lr_critic");
    dc.beta1 = cfg.get_double("distill.beta1");
    dc.beta2 = cfg.get_double("distill.beta2");
    dc.weight_decay = cfg.get_double("distill.weight_decay");
    dc.ratio = cfg.get_int("distill.ratio");
    dc.cfg_weight = cfg.get_double("distill.cfg_weight");
    dc.seed = cfg.get_u64("seed");
    dc.use_step_loss = !no_step;
    dc.use_holistic_loss = !no_holistic;
    dc.validate();
    const int steps = cfg.get_int("distill.steps");

    if (base_path.empty() || teacher_path.empty())
        throw ConfigError("distill requires --base and --teacher checkpoints");
    TeacherBundle teachers{load_model(base_path), load_model(teacher_path), load_model(base_path)};
    Model<float> student = load_model(teacher_path);  // student starts as the teacher

    const fs::path out = g.out.empty() ? fs::path("runs") / "distill" : fs::path(g.out);
    fs::create_directories(out);

    auto specs = load_split(data_root(cfg), "train");
    if (int(specs.size()) > steps) specs.resize(size_t(steps));
    auto batches = distill_batches(specs, gen_assets(), model_config_of(cfg));

    std::ofstream log(out / "distill_log.csv", std::ios::binary);
    if (!log) throw DataError("cannot write distill log under " + out.string());
    DistillCounters counters;
    run_distillation(student, teachers, batches, dc, steps, &log, &counters);

    const fs::path ckpt = out / "student.ckpt";
    save_model(ckpt.string(), student);
    log_resolved(cfg, out);
    std::printf("student %s (%d steps, update ratio 1:%d)\n", ckpt.string().c_str(), steps,
                dc.ratio);
    std::printf("calls: student grad %zu, student detached %zu, stepwise %zu, holistic %zu, "
                "critic %zu\n",
                counters.student_grad_calls, counters.student_detached_calls,
                counters.stepwise_teacher_scores, counters.holistic_teacher_scores,
                counters.critic_scores);
    return 0;
}

// -------------------------------------------------------- generate family

struct SceneSelect {
    std::vector<std::string> scene_paths;
    std::string split = "test";
    int count = 0;  // 0 = all
};

std::vector<SceneSpec> select_scenes(const RunConfig& cfg, const SceneSelect& sel) {
    std::vector<SceneSpec> specs;
    if (!sel.scene_paths.empty()) {
        for (const auto& p : sel.scene_paths) specs.push_back(load_scene(p));
    } else {
        specs = load_split(data_root(cfg), sel.split);
    }
    if (sel.count > 0 && int(specs.size()) > sel.count) specs.resize(size_t(sel.count));
    return specs;
}

void write_times(const fs::path& out, const std::vector<std::pair<std::string, double>>& times) {
    std::ostringstream os;
    os << "scene_id,seconds\n";
    for (const auto& [id, sec] : times) os << id << "," << sec << "\n";
    write_file(out / "times.csv", os.str());
}

int cmd_generate(const GlobalOpts& g, const std::string& model_path, const SceneSelect& sel,
                 const std::string& order_str, bool ply) {
    RunConfig cfg = load_config(g);
    if (model_path.empty()) throw ConfigError("generate requires --model");
    Model<float> model = load_model(model_path);
    const Catalog& catalog = gen_assets();
    const ModelConfig mc = model_config_of(cfg);
    if (!(mc == model.config)) throw ConfigError("checkpoint architecture differs from config");
    OrderPolicy policy;
    if (order_str == "bottom-up") policy = OrderPolicy::bottom_up;
    else if (order_str == "instruction") policy = OrderPolicy::instruction_order;
    else throw ConfigError("unknown --order " + order_str);

    const fs::path out = g.out.empty() ? fs::path("runs") / "generate" : fs::path(g.out);
    fs::create_directories(out / "layouts");
    if (ply) fs::create_directories(out / "ply");
    const uint64_t seed = cfg.get_u64("seed");
    const IcpConfig icp = icp_of(cfg);

    auto specs = select_scenes(cfg, sel);
    std::vector<std::pair<std::string, double>> times;
    for (const auto& spec : specs) {
        auto queue = order_objects(queue_items(spec), catalog, policy, spec.instruction,
                                   spec.resolution);
        auto c = embed_instruction(spec.instruction, mc.vocab, mc.t_max, mc.cond_dim);
        SamplerConfig sampler = sampler_of(cfg, scene_seed(seed, spec.scene_id));
        RolloutState start = make_state(OccupancyGrid(spec.resolution, Frame::scene));

        auto t0 = std::chrono::steady_clock::now();
        GenerateResult result;
        try {
            result = generate(model, start, queue, c, sampler, icp);
        } catch (RolloutAbort& e) {
            throw RolloutAbort("scene " + spec.scene_id + ": " + e.what(), e.step,
                               std::move(e.result), e.numerical_cause);
        }
        double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        times.emplace_back(spec.scene_id, sec);

        write_file(out / "layouts" / (spec.scene_id + ".json"),
                   layout_to_json(spec.scene_id, spec.resolution, spec.instruction,
                                  result.placements));
        if (ply)
            save_ply((out / "ply" / (spec.scene_id + ".ply")).string(),
                     surface_points(result.state.occupancy));
    }
    write_times(out, times);
    log_resolved(cfg, out);
    std::printf("%zu layouts under %s\n", specs.size(), (out / "layouts").string().c_str());
    return 0;
}

int cmd_complete(const GlobalOpts& g, const std::string& model_path, const SceneSelect& sel,
                 int have, bool ply) {
    RunConfig cfg = load_config(g);
    if (model_path.empty()) throw ConfigError("complete requires --model");
    Model<float> model = load_model(model_path);
    const Catalog& catalog = gen_assets();
    const ModelConfig mc = model_config_of(cfg);
    if (!(mc == model.config)) throw ConfigError("checkpoint architecture differs from config");

    const fs::path out = g.out.empty() ? fs::path("runs") / "complete" : fs::path(g.out);
    fs::create_directories(out / "layouts");
    if (ply) fs::create_directories(out / "ply");
    const uint64_t seed = cfg.get_u64("seed");
    const IcpConfig icp = icp_of(cfg);

    auto specs = select_scenes(cfg, sel);
    std::vector<std::pair<std::string, double>> times;
    for (const auto& spec : specs) {
        const int k = have >= 0 ? std::min<int>(have, int(spec.objects.size()))
                                : int(spec.objects.size()) / 2;
        auto cum = cumulative_occupancies(spec, catalog);
        std::vector<QueueItem> rest;
        for (size_t i = size_t(k); i < spec.objects.size(); ++i)
            rest.push_back({spec.objects[i].id, spec.objects[i].class_id});
        auto queue = order_objects(rest, catalog, OrderPolicy::bottom_up, spec.instruction,
                                   spec.resolution);
        auto c = embed_instruction(spec.instruction, mc.vocab, mc.t_max, mc.cond_dim);
        SamplerConfig sampler = sampler_of(cfg, scene_seed(seed, spec.scene_id));

        auto t0 = std::chrono::steady_clock::now();
        GenerateResult result;
        try {
            result = complete(model, cum[size_t(k)], queue, c, sampler, icp);
        } catch (RolloutAbort& e) {
            throw RolloutAbort("scene " + spec.scene_id + ": " + e.what(), e.step,
                               std::move(e.result), e.numerical_cause);
        }
        double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        times.emplace_back(spec.scene_id, sec);

        write_file(out / "layouts" / (spec.scene_id + ".json"),
                   layout_to_json(spec.scene_id, spec.resolution, spec.instruction,
                                  result.placements));
        if (ply)
            save_ply((out / "ply" / (spec.scene_id + ".ply")).string(),
                     surface_points(result.state.occupancy));
    }
    write_times(out, times);
    log_resolved(cfg, out);
    std::printf("%zu completions under %s\n", specs.size(), (out / "layouts").string().c_str());
    return 0;
}

int cmd_edit(const GlobalOpts& g, const std::string& model_path, const std::string& scene_path,
             const std::string& object_id, bool ply) {
    RunConfig cfg = load_config(g);
    if (model_path.empty()) throw ConfigError("edit requires --model");
    if (scene_path.empty()) throw ConfigError("edit requires --scene");
    Model<float> model = load_model(model_path);
    const Catalog& catalog = gen_assets();
    const ModelConfig mc = model_config_of(cfg);
    if (!(mc == model.config)) throw ConfigError("checkpoint architecture differs from config");

    SceneSpec spec = load_scene(scene_path);
    const SceneObject* target = nullptr;
    for (const auto& o : spec.objects)
        if (o.id == object_id) target = &o;
    if (!target) throw DataError("scene " + spec.scene_id + " has no object " + object_id);

    auto cum = cumulative_occupancies(spec, catalog);
    RolloutState state = make_state(cum.back());
    const ObjectClass& cls = catalog.find(target->class_id);
    OccupancyGrid region = voxelize(place_solid(cls, target->placement), spec.resolution,
                                    Frame::scene);
    QueueEntry entry{target->id, target->class_id, canonical_grid(cls, spec.resolution),
                     encode(canonical_grid(cls, spec.resolution))};
    auto c = embed_instruction(spec.instruction, mc.vocab, mc.t_max, mc.cond_dim);
    SamplerConfig sampler = sampler_of(cfg, scene_seed(cfg.get_u64("seed"), spec.scene_id));

    LatentGrid after = edit_remove(model, state, entry, region, c, sampler);
    OccupancyGrid occ = decode(after, spec.resolution);
    occ.set_frame(Frame::scene);

    // Reference: the ground-truth scene without the removed object.
    SceneSpec rest = spec;
    rest.objects.erase(std::remove_if(rest.objects.begin(), rest.objects.end(),
                                      [&](const SceneObject& o) { return o.id == object_id; }),
                       rest.objects.end());
    OccupancyGrid want = cumulative_occupancies(rest, catalog).back();

    const fs::path out = g.out.empty() ? fs::path("runs") / "edit" : fs::path(g.out);
    fs::create_directories(out);
    save_occupancy((out / (spec.scene_id + "_edited.occ")).string(), occ);
    if (ply) save_ply((out / (spec.scene_id + "_edited.ply")).string(), surface_points(occ));

    nlohmann::json j;
    j["scene_id"] = spec.scene_id;
    j["removed"] = object_id;
    j["iou_vs_truth"] = iou(occ, want);
    write_file(out / (spec.scene_id + "_edit.json"), j.dump(2));
    log_resolved(cfg, out);
    std::printf("removed %s from %s, IoU vs truth %.4f\n", object_id.c_str(),
                spec.scene_id.c_str(), iou(occ, want));
    return 0;
}

// -------------------------------------------------------------------- eval

struct LayoutFile {
    std::string scene_id;
    std::vector<Placement> placements;
};

LayoutFile read_layout(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    LayoutFile out;
    out.scene_id = j.at("scene_id").get<std::string>();
    for (const auto& jo : j.at("objects")) {
        Placement p;
        p.object_id = jo.at("id").get<std::string>();
        p.class_id = jo.at("class").get<std::string>();
        auto pos = jo.at("position");
        p.translation = {pos.at(0).get<double>(), pos.at(1).get<double>(),
                         pos.at(2).get<double>()};
        p.yaw = jo.at("yaw").get<double>();
        p.scale = jo.at("scale").get<double>();
        p.order_index = jo.value("order_index", 0);
        out.placements.push_back(std::move(p));
    }
    return out;
}

std::map<std::string, double> read_times(const fs::path& layouts_dir) {
    std::map<std::string, double> out;
    for (const fs::path p : {layouts_dir / "times.csv", layouts_dir.parent_path() / "times.csv"}) {
        std::ifstream f(p, std::ios::binary);
        if (!f) continue;
        std::string line;
        std::getline(f, line);  // header
        while (std::getline(f, line)) {
            auto comma = line.find(',');
            if (comma == std::string::npos) continue;
            out[line.substr(0, comma)] = std::atof(line.c_str() + comma + 1);
        }
        break;
    }
    return out;
}

int cmd_eval(const GlobalOpts& g, const std::string& layouts_dir, const std::string& split) {
    RunConfig cfg = load_config(g);
    if (layouts_dir.empty()) throw ConfigError("eval requires --layouts");
    const Catalog& catalog = gen_assets();

    std::vector<fs::path> files;
    if (fs::is_directory(layouts_dir))
        for (const auto& e : fs::directory_iterator(layouts_dir))
            if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no layout JSON files under " + layouts_dir);

    std::map<std::string, SceneSpec> truth;
    for (auto& spec : load_split(data_root(cfg), split)) truth.emplace(spec.scene_id, std::move(spec));

    std::vector<LayoutFile> layouts;
    std::string missing;
    for (const auto& f : files) {
        layouts.push_back(read_layout(f));
        if (!truth.count(layouts.back().scene_id))
            missing += (missing.empty() ? "" : ", ") + layouts.back().scene_id;
    }
    if (!missing.empty()) throw DataError("layouts without ground truth: " + missing);

    const int lo = cfg.get_int("eval.min_objects"), hi = cfg.get_int("eval.max_objects");
    std::vector<const LayoutFile*> kept;
    for (const auto& l : layouts) {
        int n = int(truth.at(l.scene_id).objects.size());
        if (n >= lo && n <= hi) kept.push_back(&l);
    }
    if (kept.empty())
        throw DataError("no scenes with " + std::to_string(lo) + ".." + std::to_string(hi) +
                        " objects among " + std::to_string(layouts.size()) + " layouts");

    auto times = read_times(fs::path(layouts_dir));
    std::vector<ScoreReport> reports(kept.size());
    parallel_for(kept.size(), g.jobs, [&](size_t i) {
        const LayoutFile& l = *kept[i];
        const SceneSpec& spec = truth.at(l.scene_id);
        std::vector<ScoredObject> gen;
        gen.reserve(l.placements.size());
        for (const auto& p : l.placements)
            gen.push_back({p, place_box(catalog.find(p.class_id), p)});
        reports[i] = score_scene(gen, truth_objects(spec, catalog), spec.room,
                                 metric_params(cfg, spec.resolution, catalog));
        if (auto it = times.find(l.scene_id); it != times.end()) reports[i].seconds = it->second;
    });

    const fs::path out = g.out.empty() ? fs::path("runs") / "eval" : fs::path(g.out);
    fs::create_directories(out);
    std::ostringstream csv;
    csv << "scene_id,objects,cf,ib,pos,rot,psa,seconds\n";
    std::vector<double> cf, ib, pos, rot, psa, secs;
    for (size_t i = 0; i < kept.size(); ++i) {
        const auto& r = reports[i];
        const auto& id = kept[i]->scene_id;
        csv << id << "," << truth.at(id).objects.size() << "," << r.cf << "," << r.ib << ","
            << r.pos << "," << r.rot << "," << r.psa << "," << r.seconds << "\n";
        cf.push_back(r.cf);
        ib.push_back(r.ib);
        pos.push_back(r.pos);
        rot.push_back(r.rot);
        psa.push_back(r.psa);
        secs.push_back(r.seconds);
    }
    write_file(out / "scores.csv", csv.str());

    const int resamples = cfg.get_int("eval.bootstrap");
    const uint64_t seed = cfg.get_u64("seed");
    nlohmann::json j;
    j["scenes"] = kept.size();
    auto put = [&](const char* name, const std::vector<double>& v, uint64_t salt) {
        auto [lo_ci, hi_ci] = bootstrap_mean_ci(v, resamples, splitmix64(seed ^ salt));
        j[name] = {{"mean", mean(v)}, {"ci_lo", lo_ci}, {"ci_hi", hi_ci}};
    };
    put("cf", cf, 0x11);
    put("ib", ib, 0x22);
    put("pos", pos, 0x33);
    put("rot", rot, 0x44);
    put("psa", psa, 0x55);
    put("seconds", secs, 0x66);
    write_file(out / "summary.json", j.dump(2));
    log_resolved(cfg, out);
    std::printf("%zu scenes: CF %.1f IB %.1f Pos %.1f Rot %.1f PSA %.1f T %.2fs\n", kept.size(),
                mean(cf), mean(ib), mean(pos), mean(rot), mean(psa), mean(secs));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent voxel layout generation"};
    app.require_subcommand(1);
    // let --config/--seed/--jobs/--out appear after the subcommand too
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "run configuration file");
    auto* seed_opt = app.add_option("--seed", g.seed, "override config seed");
    app.add_option("--jobs", g.jobs, "worker pool size for data-gen and eval");
    app.add_option("--out", g.out, "output directory");

    auto* gen_data = app.add_subcommand("gen-data", "generate the procedural dataset");

    std::string stage = "base", init_path;
    auto* train = app.add_subcommand("train", "train one stage");
    train->add_option("--stage", stage, "base | teacher | edit")->required();
    train->add_option("--init", init_path, "initial checkpoint (required for teacher/edit)");

    std::string base_path, teacher_path;
    bool no_step = false, no_holistic = false;
    auto* distill = app.add_subcommand("distill", "distill a few-step student");
    distill->add_option("--base", base_path, "base checkpoint (holistic teacher)")->required();
    distill->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
    distill->add_flag("--no-step-loss", no_step, "drop the step-wise guidance term");
    distill->add_flag("--no-holistic-loss", no_holistic, "drop the holistic guidance term");

    std::string model_path, order_str = "bottom-up";
    SceneSelect sel;
    bool ply = false;
    auto* generate = app.add_subcommand("generate", "roll out full scenes");
    generate->add_option("--model", model_path, "model checkpoint")->required();
    generate->add_option("--scene", sel.scene_paths, "explicit scene JSON files");
    generate->add_option("--split", sel.split, "dataset split when --scene absent");
    generate->add_option("--count", sel.count, "limit number of scenes (0 = all)");
    generate->add_option("--order", order_str, "bottom-up | instruction");
    generate->add_flag("--ply", ply, "also export occupancy surfaces");

    int have = -1;
    auto* complete = app.add_subcommand("complete", "finish partial scenes");
    complete->add_option("--model", model_path, "model checkpoint")->required();
    complete->add_option("--scene", sel.scene_paths, "explicit scene JSON files");
    complete->add_option("--split", sel.split, "dataset split when --scene absent");
    complete->add_option("--count", sel.count, "limit number of scenes (0 = all)");
    complete->add_option("--have", have, "objects already placed (default: half)");
    complete->add_flag("--ply", ply, "also export occupancy surfaces");

    std::string scene_path, object_id;
    auto* edit = app.add_subcommand("edit", "remove one object from a scene");
    edit->add_option("--model", model_path, "edit-stage checkpoint")->required();
    edit->add_option("--scene", scene_path, "scene JSON file")->required();
    edit->add_option("--object", object_id, "object id to remove")->required();
    edit->add_flag("--ply", ply, "also export the edited surface");

    std::string layouts_dir, eval_split = "test";
    auto* eval = app.add_subcommand("eval", "score layouts against ground truth");
    eval->add_option("--layouts", layouts_dir, "directory of layout JSON files")->required();
    eval->add_option("--split", eval_split, "ground-truth split");

    try {
        app.parse(argc, argv);
        g.seed_set = seed_opt->count() > 0;
        if (gen_data->parsed()) return cmd_gen_data(g);
        if (train->parsed()) return cmd_train(g, stage, init_path);
        if (distill->parsed()) return cmd_distill(g, base_path, teacher_path, no_step, no_holistic);
        if (generate->parsed()) return cmd_generate(g, model_path, sel, order_str, ply);
        if (complete->parsed()) return cmd_complete(g, model_path, sel, have, ply);
        if (edit->parsed()) return cmd_edit(g, model_path, scene_path, object_id, ply);
        if (eval->parsed()) return cmd_eval(g, layouts_dir, eval_split);
        return 2;
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const RolloutAbort& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.numerical_cause ? 4 : 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
