// vgbench: single binary exposing the full pipeline
//   synth -> aggregate -> pca -> build-index -> search -> mine -> eval
// plus bench (index comparison table) and pipeline (cached stage runner).
//
// Exit codes: 0 ok, 1 usage, 2 data/config error, 3 internal error.
// Output files never contain wall-clock timing; the JSON run report on
// stdout does.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vgbench/aggregation.hpp"
#include "vgbench/common.hpp"
#include "vgbench/dataio.hpp"
#include "vgbench/geoeval.hpp"
#include "vgbench/index.hpp"
#include "vgbench/mining.hpp"
#include "vgbench/numerics.hpp"
#include "vgbench/querypipe.hpp"

namespace fs = std::filesystem;
using njson = nlohmann::json;          // sorted keys, used for hashing
using ojson = nlohmann::ordered_json;  // insertion order, used for reports

namespace {

/***************************************************
 * Small helpers
 ***************************************************/

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0)
        .count();
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void emit_report(const ojson& rep) { std::printf("%s\n", rep.dump(2).c_str()); }

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        vgb::throw_error(vgb::ErrorCode::io, "cannot open for write: " + path);
    return out;
}

vgb::Descriptor row_descriptor(const vgb::DescriptorSet& set, std::size_t i) {
    vgb::Descriptor d;
    const auto r = set.matrix.row_span(i);
    d.values.assign(r.begin(), r.end());
    d.normalized = set.normalized;
    return d;
}

vgb::DescriptorSet pack_descriptors(const std::vector<std::uint64_t>& ids,
                                    const std::vector<vgb::Descriptor>& descs) {
    vgb::DescriptorSet set;
    set.ids = ids;
    if (!descs.empty()) {
        const std::size_t dim = descs[0].values.size();
        set.matrix = vgb::MatrixF(descs.size(), dim);
        for (std::size_t i = 0; i < descs.size(); ++i) {
            if (descs[i].values.size() != dim)
                vgb::throw_error(vgb::ErrorCode::dimension_mismatch,
                                 "aggregated descriptors disagree in dim");
            std::copy(descs[i].values.begin(), descs[i].values.end(),
                      set.matrix.row_span(i).begin());
        }
    }
    set.normalized = true;
    set.check_consistent();
    return set;
}

/***************************************************
 * synth
 ***************************************************/

struct SynthOpts {
    vgb::SynthSpec spec;
    std::string out_manifest, out_db, out_q;
};

void run_synth(const SynthOpts& o) {
    const auto t0 = Clock::now();
    const vgb::SynthDataset ds = vgb::synth_generate(o.spec);
    vgb::write_manifest(o.out_manifest, ds.manifest);
    vgb::write_descriptor_set(o.out_db, ds.db);
    vgb::write_descriptor_set(o.out_q, ds.queries);

    ojson rep;
    rep["command"] = "synth";
    rep["n_db"] = o.spec.n_db;
    rep["n_q"] = o.spec.n_q;
    rep["dim"] = o.spec.dim;
    rep["places"] = o.spec.n_places;
    rep["seed"] = o.spec.seed;
    rep["manifest"] = o.out_manifest;
    rep["db"] = o.out_db;
    rep["queries"] = o.out_q;
    rep["t_ms"] = ms_since(t0);
    emit_report(rep);
}

/***************************************************
 * aggregate
 ***************************************************/

struct AggregateOpts {
    std::string in, method, out, weights, fc;
    double p = 3.0;
    double eps = 1e-6;
    std::size_t levels = 3;
    bool from_images = false;
};

// Splits a crop-indexed image set into (item ids, images grouped
// query-major). Requires the layout preprocess writes: every item carries
// the same crop count, crops consecutive.
std::size_t crop_count(const vgb::ImageSet& imgs) {
    if (imgs.crop_index.empty()) return 1;
    const std::size_t n_crops =
        *std::max_element(imgs.crop_index.begin(), imgs.crop_index.end()) + 1;
    if (imgs.images.size() % n_crops != 0)
        vgb::throw_error(vgb::ErrorCode::format,
                         "crop set: item count not divisible by crop count");
    for (std::size_t i = 0; i < imgs.crop_index.size(); ++i)
        if (imgs.crop_index[i] != i % n_crops)
            vgb::throw_error(vgb::ErrorCode::format,
                             "crop set: crops must be stored query-major");
    for (std::size_t g = 0; g < imgs.images.size() / n_crops; ++g)
        for (std::size_t c = 1; c < n_crops; ++c)
            if (imgs.ids[g * n_crops + c] != imgs.ids[g * n_crops])
                vgb::throw_error(vgb::ErrorCode::format,
                                 "crop set: crops of one item must share ids");
    return n_crops;
}

void run_aggregate(const AggregateOpts& o) {
    const auto t0 = Clock::now();
    const bool token_method = o.method == "seqpool" || o.method == "cls";
    if (o.from_images && token_method)
        vgb::throw_error(vgb::ErrorCode::config,
                         "--from-images only feeds feature-map methods");

    vgb::VladParams vlad;
    std::vector<float> attn;
    if (o.method == "netvlad") {
        if (o.weights.empty())
            vgb::throw_error(vgb::ErrorCode::config,
                             "netvlad needs --weights");
        vlad = vgb::read_vlad_params(o.weights);
    } else if (o.method == "seqpool") {
        if (o.weights.empty())
            vgb::throw_error(vgb::ErrorCode::config,
                             "seqpool needs --weights");
        const vgb::Container c = vgb::read_vgbd(o.weights);
        const auto span = c.require("attn_w").as_f32();
        attn.assign(span.begin(), span.end());
    }

    const auto aggregate_map = [&](const vgb::FeatureMap& f) {
        if (o.method == "spoc") return vgb::spoc(f);
        if (o.method == "mac") return vgb::mac(f);
        if (o.method == "gem") return vgb::gem(f, o.p, o.eps);
        if (o.method == "rmac") return vgb::rmac(f, o.levels);
        return vgb::netvlad(f, vlad);
    };

    std::vector<std::uint64_t> item_ids;
    std::vector<std::vector<vgb::Descriptor>> per_crop_descs;  // [crop][item]
    if (token_method) {
        const vgb::TokenSet ts = vgb::read_token_sets(o.in);
        item_ids = ts.ids;
        per_crop_descs.resize(1);
        for (const vgb::TokenMatrix& t : ts.tokens)
            per_crop_descs[0].push_back(o.method == "cls"
                                            ? vgb::cls_token(t)
                                            : vgb::seqpool(t, attn));
    } else if (o.from_images) {
        const vgb::ImageSet imgs = vgb::read_images(o.in);
        const std::size_t n_crops = crop_count(imgs);
        const std::size_t n_items = imgs.images.size() / n_crops;
        per_crop_descs.resize(n_crops);
        for (std::size_t g = 0; g < n_items; ++g) {
            item_ids.push_back(imgs.ids[g * n_crops]);
            for (std::size_t c = 0; c < n_crops; ++c)
                per_crop_descs[c].push_back(aggregate_map(
                    vgb::feature_map_from_image(imgs.images[g * n_crops + c])));
        }
    } else {
        const vgb::FeatureMapSet fm = vgb::read_feature_maps(o.in);
        item_ids = fm.ids;
        per_crop_descs.resize(1);
        for (const vgb::FeatureMap& f : fm.maps)
            per_crop_descs[0].push_back(aggregate_map(f));
    }

    if (!o.fc.empty()) {
        const vgb::Container c = vgb::read_vgbd(o.fc);
        const vgb::Section& ws = c.require("fc_w");
        vgb::MatrixF w(ws.rows, ws.cols);
        const auto wspan = ws.as_f32();
        std::copy(wspan.begin(), wspan.end(), w.data.begin());
        const auto bias = c.require("fc_b").as_f32();
        for (auto& descs : per_crop_descs)
            for (auto& d : descs) d = vgb::linear_project(d, w, bias);
    }

    std::vector<vgb::DescriptorSet> per_crop;
    for (const auto& descs : per_crop_descs)
        per_crop.push_back(pack_descriptors(item_ids, descs));
    if (per_crop.size() == 1)
        vgb::write_descriptor_set(o.out, per_crop[0]);
    else
        vgb::write_crop_descriptor_sets(o.out, per_crop);

    ojson rep;
    rep["command"] = "aggregate";
    rep["method"] = o.method;
    rep["n"] = item_ids.size();
    rep["dim"] = per_crop.empty() ? 0 : per_crop[0].dim();
    rep["crops"] = per_crop.size();
    rep["out"] = o.out;
    rep["t_ms"] = ms_since(t0);
    emit_report(rep);
}

/***************************************************
 * pca
 ***************************************************/

struct PcaOpts {
    std::string fit, model, in, out;
    std::size_t dim = 0;
    bool whiten = false;
};

void run_pca(const PcaOpts& o) {
    const auto t0 = Clock::now();
    const bool fitting = !o.fit.empty();
    const bool applying = !o.in.empty();
    if (!fitting && !applying)
        vgb::throw_error(vgb::ErrorCode::config,
                         "pca needs --fit and/or --in");
    if (o.model.empty())
        vgb::throw_error(vgb::ErrorCode::config, "pca needs --model");
    if (applying && o.out.empty())
        vgb::throw_error(vgb::ErrorCode::config, "pca apply needs --out");

    vgb::PcaModel model;
    if (fitting) {
        if (o.dim == 0)
            vgb::throw_error(vgb::ErrorCode::config, "pca fit needs --dim");
        const vgb::DescriptorSet train = vgb::read_descriptor_set(o.fit);
        model = vgb::pca_fit(train, o.dim, o.whiten);
        vgb::write_pca_model(o.model, model);
    } else {
        model = vgb::read_pca_model(o.model);
    }

    ojson rep;
    rep["command"] = "pca";
    rep["fitted"] = fitting;
    rep["in_dim"] = model.in_dim();
    rep["out_dim"] = model.out_dim();
    rep["whiten"] = model.whiten;
    rep["model"] = o.model;

    if (applying) {
        std::vector<vgb::DescriptorSet> crops =
            vgb::read_crop_descriptor_sets(o.in);
        std::vector<vgb::DescriptorSet> projected;
        for (const vgb::DescriptorSet& set : crops) {
            std::vector<vgb::Descriptor> descs;
            descs.reserve(set.size());
            for (std::size_t i = 0; i < set.size(); ++i)
                descs.push_back(vgb::pca_apply(model, set.matrix.row_span(i)));
            projected.push_back(pack_descriptors(set.ids, descs));
        }
        if (projected.size() == 1)
            vgb::write_descriptor_set(o.out, projected[0]);
        else
            vgb::write_crop_descriptor_sets(o.out, projected);
        rep["applied"] = crops[0].size();
        rep["crops"] = crops.size();
        rep["out"] = o.out;
    }
    rep["t_ms"] = ms_since(t0);
    emit_report(rep);
}

/***************************************************
 * build-index
 ***************************************************/

struct BuildOpts {
    std::string kind, in, out;
    vgb::IndexConfig cfg;
};

ojson breakdown_json(const vgb::FootprintBreakdown& b) {
    ojson j;
    j["vectors"] = b.vectors;
    j["ids"] = b.ids;
    j["codes"] = b.codes;
    j["centroids"] = b.centroids;
    j["links"] = b.links;
    j["tables"] = b.tables;
    j["total"] = b.total();
    return j;
}

void run_build_index(BuildOpts o) {
    o.cfg.kind = vgb::index_kind_from_name(o.kind);
    const vgb::DescriptorSet db = vgb::read_descriptor_set(o.in);
    const auto t0 = Clock::now();
    const std::unique_ptr<vgb::Index> index = vgb::build_index(db, o.cfg);
    const double t_build = ms_since(t0);
    vgb::save_index(o.out, *index);

    ojson rep;
    rep["command"] = "build-index";
    rep["kind"] = o.kind;
    rep["n"] = index->n;
    rep["dim"] = index->dim;
    rep["memory"] = breakdown_json(index->memory_breakdown());
    rep["out"] = o.out;
    rep["t_build_ms"] = t_build;
    emit_report(rep);
}

/***************************************************
 * search
 ***************************************************/

struct SearchOpts {
    std::string index, q, out, fusion = "none";
    std::size_t k = 10;
    std::optional<std::size_t> nprobe, ef_search;
};

void run_search(const SearchOpts& o) {
    const std::unique_ptr<vgb::Index> index = vgb::load_index(o.index);
    const std::vector<vgb::DescriptorSet> crops =
        vgb::read_crop_descriptor_sets(o.q);
    vgb::SearchParams params;
    params.nprobe = o.nprobe;
    params.ef_search = o.ef_search;

    std::vector<vgb::SearchResult> results;
    vgb::TimingReport timing;
    if (o.fusion == "none") {
        if (crops.size() > 1)
            vgb::throw_error(vgb::ErrorCode::config,
                             "multiple crop sets need --fusion");
        results = index->search_timed(crops[0], o.k, timing, params);
    } else if (o.fusion == "mean") {
        std::vector<vgb::Descriptor> fused;
        fused.reserve(crops[0].size());
        for (std::size_t i = 0; i < crops[0].size(); ++i) {
            std::vector<vgb::Descriptor> per_crop;
            per_crop.reserve(crops.size());
            for (const vgb::DescriptorSet& set : crops)
                per_crop.push_back(row_descriptor(set, i));
            fused.push_back(vgb::fuse_mean(per_crop));
        }
        const vgb::DescriptorSet fused_set =
            pack_descriptors(crops[0].ids, fused);
        results = index->search_timed(fused_set, o.k, timing, params);
    } else {
        const std::size_t k_search =
            o.fusion == "majority_vote" ? std::max<std::size_t>(o.k, 20) : o.k;
        const auto t0 = Clock::now();
        std::vector<std::vector<vgb::SearchResult>> by_crop;
        by_crop.reserve(crops.size());
        for (const vgb::DescriptorSet& set : crops)
            by_crop.push_back(index->search(set, k_search, params));
        for (std::size_t i = 0; i < crops[0].size(); ++i) {
            std::vector<vgb::SearchResult> per_crop;
            per_crop.reserve(crops.size());
            for (const auto& rc : by_crop) per_crop.push_back(rc[i]);
            results.push_back(o.fusion == "nearest_crop"
                                  ? vgb::fuse_nearest_crop(per_crop, o.k)
                                  : vgb::fuse_majority_vote(per_crop, o.k));
        }
        timing.t_m_ms = ms_since(t0);
        timing.memory_bytes = index->memory_footprint();
    }
    vgb::write_results(o.out, results);

    ojson rep;
    rep["command"] = "search";
    rep["kind"] = vgb::index_kind_name(index->cfg.kind);
    rep["n_queries"] = results.size();
    rep["k"] = o.k;
    rep["fusion"] = o.fusion;
    rep["crops"] = crops.size();
    rep["t_m_ms"] = timing.t_m_ms;
    rep["memory_bytes"] = timing.memory_bytes;
    rep["out"] = o.out;
    emit_report(rep);
}

/***************************************************
 * preprocess
 ***************************************************/

struct PreprocessOpts {
    std::string in, policy, out;
    std::size_t db_h = 0, db_w = 0;
};

void run_preprocess(const PreprocessOpts& o) {
    const auto t0 = Clock::now();
    const vgb::CropPolicy policy = vgb::crop_policy_from_name(o.policy);
    const vgb::ImageSet in = vgb::read_images(o.in);
    if (!in.crop_index.empty())
        vgb::throw_error(vgb::ErrorCode::config,
                         o.in + " is already a crop set");

    vgb::ImageSet out;
    std::size_t crops_per_image = 0;
    for (std::size_t i = 0; i < in.images.size(); ++i) {
        vgb::CropSet cs = vgb::apply_policy(in.images[i], policy, o.db_h, o.db_w);
        if (crops_per_image == 0) crops_per_image = cs.crops.size();
        for (std::size_t c = 0; c < cs.crops.size(); ++c) {
            out.ids.push_back(in.ids[i]);
            out.images.push_back(std::move(cs.crops[c]));
            if (crops_per_image > 1)
                out.crop_index.push_back(static_cast<std::uint8_t>(c));
        }
    }
    vgb::write_images(o.out, out);

    ojson rep;
    rep["command"] = "preprocess";
    rep["policy"] = o.policy;
    rep["n_in"] = in.images.size();
    rep["crops_per_image"] = crops_per_image;
    rep["out"] = o.out;
    rep["t_ms"] = ms_since(t0);
    emit_report(rep);
}

/***************************************************
 * mine
 ***************************************************/

struct MineOpts {
    std::string db, q, db_manifest, q_manifest, strategy = "full", out;
    vgb::MiningConfig cfg;
};

void run_mine(MineOpts o) {
    const auto t0 = Clock::now();
    o.cfg.strategy = vgb::mining_strategy_from_name(o.strategy);
    const vgb::DescriptorSet db = vgb::read_descriptor_set(o.db);
    const vgb::DescriptorSet queries = vgb::read_descriptor_set(o.q);
    const vgb::PoseTable db_poses = vgb::PoseTable::from_manifest(
        vgb::read_manifest(o.db_manifest), vgb::Split::database);
    const vgb::PoseTable q_poses = vgb::PoseTable::from_manifest(
        vgb::read_manifest(o.q_manifest), vgb::Split::query);

    const vgb::MiningOutcome outcome =
        vgb::mine_all(queries, q_poses, db, db_poses, o.cfg);

    std::ofstream out = open_out(o.out);
    for (const vgb::Triplet& t : outcome.triplets) {
        ojson j;
        j["query"] = t.query_id;
        j["positive"] = t.positive_id;
        j["negatives"] = t.negative_ids;
        out << j.dump() << "\n";
    }
    out.close();

    ojson rep;
    rep["command"] = "mine";
    rep["strategy"] = o.strategy;
    rep["n_queries"] = queries.size();
    rep["triplets"] = outcome.triplets.size();
    rep["skipped"] = outcome.skipped;
    rep["out"] = o.out;
    rep["t_ms"] = ms_since(t0);
    emit_report(rep);
}

/***************************************************
 * eval
 ***************************************************/

struct EvalOpts {
    std::string results, db_manifest, q_manifest;
    double threshold = 25.0;
    std::vector<std::size_t> n_list = {1, 5, 10, 20};
    std::optional<double> heading_max;
    std::string report, curve_csv, sweep_csv;
};

ojson eval_report_json(const vgb::EvalReport& report) {
    ojson j;
    j["threshold_m"] = report.config.threshold_m;
    if (report.config.heading_max_deg)
        j["heading_max_deg"] = *report.config.heading_max_deg;
    else
        j["heading_max_deg"] = nullptr;
    j["n_list"] = report.config.n_list;
    j["n_queries"] = report.n_queries;
    ojson recalls;
    for (const auto& [n, r] : report.recall_at)
        recalls[std::to_string(n)] = r;
    j["recall_at"] = recalls;
    j["upper_bound"] = report.upper_bound;
    j["heading_unconstrained_pairs"] = report.heading_unconstrained_pairs;
    return j;
}

void write_xy_csv(const std::string& path,
                  const std::vector<vgb::SweepPoint>& points) {
    std::ofstream out = open_out(path);
    out << "x,recall,upper_bound\n";
    for (const vgb::SweepPoint& p : points)
        out << fmt_g(p.x) << "," << fmt_g(p.recall) << ","
            << fmt_g(p.upper_bound) << "\n";
}

void run_eval(const EvalOpts& o) {
    const auto t0 = Clock::now();
    const std::vector<vgb::SearchResult> results = vgb::read_results(o.results);
    const vgb::PoseTable db_poses = vgb::PoseTable::from_manifest(
        vgb::read_manifest(o.db_manifest), vgb::Split::database);
    const vgb::PoseTable q_poses = vgb::PoseTable::from_manifest(
        vgb::read_manifest(o.q_manifest), vgb::Split::query);

    vgb::EvalConfig cfg;
    cfg.threshold_m = o.threshold;
    cfg.n_list = o.n_list;
    cfg.heading_max_deg = o.heading_max;

    const vgb::EvalReport report =
        vgb::recall_at_n(results, q_poses, db_poses, cfg);
    const ojson report_j = eval_report_json(report);
    if (!o.report.empty()) {
        std::ofstream out = open_out(o.report);
        out << report_j.dump(2) << "\n";
    }
    if (!o.curve_csv.empty()) {
        const vgb::RecallCurve curve =
            vgb::recall_curve(results, q_poses, db_poses, cfg, 100);
        std::vector<vgb::SweepPoint> points;
        for (std::size_t i = 0; i < curve.recall.size(); ++i)
            points.push_back({static_cast<double>(i + 1), curve.recall[i],
                              curve.upper_bound});
        write_xy_csv(o.curve_csv, points);
    }
    if (!o.sweep_csv.empty()) {
        std::vector<double> thresholds;
        for (int t = 1; t <= 100; ++t) thresholds.push_back(t);
        write_xy_csv(o.sweep_csv,
                     vgb::threshold_sweep(results, q_poses, db_poses,
                                          thresholds, o.heading_max));
    }

    ojson rep;
    rep["command"] = "eval";
    for (auto& [k, v] : report_j.items()) rep[k] = v;
    if (!o.report.empty()) rep["report"] = o.report;
    if (!o.curve_csv.empty()) rep["curve_csv"] = o.curve_csv;
    if (!o.sweep_csv.empty()) rep["sweep_csv"] = o.sweep_csv;
    rep["t_ms"] = ms_since(t0);
    emit_report(rep);
}

/***************************************************
 * bench
 ***************************************************/

struct BenchOpts {
    std::string db, q, db_manifest, q_manifest, out;
    std::vector<std::string> kinds = {"flat",   "ivf",        "pq",
                                      "ivfpq",  "multiindex", "hnsw"};
    std::size_t k = 10;
    double threshold = 25.0;
    vgb::IndexConfig cfg;
    bool omit_timing = false;
};

std::string param_summary(const vgb::IndexConfig& cfg) {
    switch (cfg.kind) {
        case vgb::IndexKind::flat:
            return "";
        case vgb::IndexKind::ivf:
            return "nlist=" + std::to_string(cfg.nlist) +
                   ";nprobe=" + std::to_string(cfg.nprobe);
        case vgb::IndexKind::pq:
            return "m_sub=" + std::to_string(cfg.m_sub) +
                   ";nbits=" + std::to_string(cfg.nbits);
        case vgb::IndexKind::ivfpq:
            return "nlist=" + std::to_string(cfg.nlist) +
                   ";nprobe=" + std::to_string(cfg.nprobe) +
                   ";m_sub=" + std::to_string(cfg.m_sub) +
                   ";nbits=" + std::to_string(cfg.nbits);
        case vgb::IndexKind::multiindex:
            return "k_half=" + std::to_string(cfg.k_half);
        case vgb::IndexKind::hnsw:
            return "m_links=" + std::to_string(cfg.m_links) +
                   ";ef_construction=" + std::to_string(cfg.ef_construction) +
                   ";ef_search=" + std::to_string(cfg.ef_search);
    }
    return "";
}

void run_bench(const BenchOpts& o) {
    const vgb::DescriptorSet db = vgb::read_descriptor_set(o.db);
    const vgb::DescriptorSet queries = vgb::read_descriptor_set(o.q);
    const vgb::PoseTable db_poses = vgb::PoseTable::from_manifest(
        vgb::read_manifest(o.db_manifest), vgb::Split::database);
    const vgb::PoseTable q_poses = vgb::PoseTable::from_manifest(
        vgb::read_manifest(o.q_manifest), vgb::Split::query);

    vgb::EvalConfig ecfg;
    ecfg.threshold_m = o.threshold;
    ecfg.n_list = {1, 5};

    std::ofstream csv = open_out(o.out);
    csv << "kind,k,param_summary,recall_vs_exact,recall_at_1,recall_at_5,"
           "memory_bytes,t_m_ms\n";

    ojson rows = ojson::array();
    for (const std::string& kind_name : o.kinds) {
        vgb::IndexConfig cfg = o.cfg;
        cfg.kind = vgb::index_kind_from_name(kind_name);
        const auto t0 = Clock::now();
        const std::unique_ptr<vgb::Index> index = vgb::build_index(db, cfg);
        const double t_build = ms_since(t0);

        vgb::TimingReport timing;
        const std::vector<vgb::SearchResult> results =
            index->search_timed(queries, o.k, timing);
        const double r_exact = vgb::recall_vs_exact(*index, db, queries, o.k);
        const vgb::EvalReport er =
            vgb::recall_at_n(results, q_poses, db_poses, ecfg);
        const std::uint64_t memory = index->memory_footprint();
        const double t_m = timing.t_m_ms;

        csv << kind_name << "," << o.k << "," << param_summary(cfg) << ","
            << fmt_g(r_exact) << "," << fmt_g(er.recall_at.at(1)) << ","
            << fmt_g(er.recall_at.at(5)) << "," << memory << ","
            << (o.omit_timing ? std::string() : fmt_g(t_m)) << "\n";

        ojson row;
        row["kind"] = kind_name;
        row["k"] = o.k;
        row["param_summary"] = param_summary(cfg);
        row["recall_vs_exact"] = r_exact;
        row["recall_at_1"] = er.recall_at.at(1);
        row["recall_at_5"] = er.recall_at.at(5);
        row["memory_bytes"] = memory;
        row["t_build_ms"] = t_build;
        row["t_m_ms"] = t_m;
        rows.push_back(row);
    }
    csv.close();

    ojson rep;
    rep["command"] = "bench";
    rep["n_db"] = db.size();
    rep["n_queries"] = queries.size();
    rep["rows"] = rows;
    rep["out"] = o.out;
    emit_report(rep);
}

/***************************************************
 * pipeline
 ***************************************************/

struct PipelineOpts {
    std::string config, workdir;
    bool force = false;
};

[[noreturn]] void cfg_error(const std::string& ptr, const std::string& what) {
    vgb::throw_error(vgb::ErrorCode::config, "config: " + what + " at " + ptr);
}

void check_keys(const njson& obj, const std::string& ptr,
                const std::set<std::string>& allowed) {
    if (!obj.is_object()) cfg_error(ptr, "expected object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            cfg_error(ptr + "/" + item.key(), "unknown key");
}

double cfg_num(const njson& obj, const std::string& ptr, const char* key,
               double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) cfg_error(ptr + "/" + key, "expected number");
    return obj[key].get<double>();
}

std::uint64_t cfg_uint(const njson& obj, const std::string& ptr,
                       const char* key, std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const njson& v = obj[key];
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        cfg_error(ptr + "/" + key, "expected unsigned integer");
    return v.get<std::uint64_t>();
}

bool cfg_bool(const njson& obj, const std::string& ptr, const char* key,
              bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) cfg_error(ptr + "/" + key, "expected bool");
    return obj[key].get<bool>();
}

std::string cfg_string(const njson& obj, const std::string& ptr,
                       const char* key) {
    if (!obj.contains(key) || !obj[key].is_string())
        cfg_error(ptr + "/" + key, "expected string");
    return obj[key].get<std::string>();
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hash16(const njson& j) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

void run_pipeline(const PipelineOpts& o) {
    njson cfg;
    {
        std::ifstream in(o.config, std::ios::binary);
        if (!in)
            vgb::throw_error(vgb::ErrorCode::io,
                             "cannot open config: " + o.config);
        try {
            in >> cfg;
        } catch (const njson::parse_error& e) {
            vgb::throw_error(vgb::ErrorCode::config,
                             std::string("config: ") + e.what());
        }
    }
    check_keys(cfg, "", {"synth", "projection", "index", "search", "eval"});
    for (const char* stage : {"synth", "index", "search", "eval"})
        if (!cfg.contains(stage))
            cfg_error(std::string("/") + stage, "missing stage");

    // synth
    const njson& js = cfg["synth"];
    check_keys(js, "/synth",
               {"n_db", "n_q", "dim", "places", "spread", "noise", "confusion",
                "seed", "lat_min", "lat_max", "lon_min", "lon_max"});
    vgb::SynthSpec spec;
    spec.n_db = cfg_uint(js, "/synth", "n_db", spec.n_db);
    spec.n_q = cfg_uint(js, "/synth", "n_q", spec.n_q);
    spec.dim = cfg_uint(js, "/synth", "dim", spec.dim);
    spec.n_places = cfg_uint(js, "/synth", "places", spec.n_places);
    spec.place_spread_m = cfg_num(js, "/synth", "spread", spec.place_spread_m);
    spec.descriptor_noise = cfg_num(js, "/synth", "noise", spec.descriptor_noise);
    spec.confusion_rate = cfg_num(js, "/synth", "confusion", spec.confusion_rate);
    spec.seed = cfg_uint(js, "/synth", "seed", spec.seed);
    spec.bbox.lat_min = cfg_num(js, "/synth", "lat_min", spec.bbox.lat_min);
    spec.bbox.lat_max = cfg_num(js, "/synth", "lat_max", spec.bbox.lat_max);
    spec.bbox.lon_min = cfg_num(js, "/synth", "lon_min", spec.bbox.lon_min);
    spec.bbox.lon_max = cfg_num(js, "/synth", "lon_max", spec.bbox.lon_max);

    // projection (optional)
    const bool has_proj = cfg.contains("projection");
    std::size_t proj_dim = 0;
    bool proj_whiten = false;
    if (has_proj) {
        check_keys(cfg["projection"], "/projection", {"dim", "whiten"});
        proj_dim = cfg_uint(cfg["projection"], "/projection", "dim", 0);
        if (proj_dim == 0) cfg_error("/projection/dim", "missing or zero");
        proj_whiten = cfg_bool(cfg["projection"], "/projection", "whiten", false);
    }

    // index
    const njson& ji = cfg["index"];
    check_keys(ji, "/index",
               {"kind", "nlist", "nprobe", "m_sub", "nbits", "k_half",
                "m_links", "ef_construction", "ef_search", "seed",
                "train_iters"});
    vgb::IndexConfig icfg;
    icfg.kind = vgb::index_kind_from_name(cfg_string(ji, "/index", "kind"));
    icfg.nlist = cfg_uint(ji, "/index", "nlist", icfg.nlist);
    icfg.nprobe = cfg_uint(ji, "/index", "nprobe", icfg.nprobe);
    icfg.m_sub = cfg_uint(ji, "/index", "m_sub", icfg.m_sub);
    icfg.nbits = cfg_uint(ji, "/index", "nbits", icfg.nbits);
    icfg.k_half = cfg_uint(ji, "/index", "k_half", icfg.k_half);
    icfg.m_links = cfg_uint(ji, "/index", "m_links", icfg.m_links);
    icfg.ef_construction =
        cfg_uint(ji, "/index", "ef_construction", icfg.ef_construction);
    icfg.ef_search = cfg_uint(ji, "/index", "ef_search", icfg.ef_search);
    icfg.seed = cfg_uint(ji, "/index", "seed", icfg.seed);
    icfg.train_iters = cfg_uint(ji, "/index", "train_iters", icfg.train_iters);

    // search
    const njson& jq = cfg["search"];
    check_keys(jq, "/search", {"k", "nprobe", "ef_search"});
    const std::size_t search_k = cfg_uint(jq, "/search", "k", 10);
    const std::size_t eff_nprobe =
        cfg_uint(jq, "/search", "nprobe", icfg.nprobe);
    const std::size_t eff_ef =
        cfg_uint(jq, "/search", "ef_search", icfg.ef_search);

    // eval
    const njson& je = cfg["eval"];
    check_keys(je, "/eval", {"threshold", "n", "heading_max"});
    vgb::EvalConfig ecfg;
    ecfg.threshold_m = cfg_num(je, "/eval", "threshold", 25.0);
    if (je.contains("n")) {
        if (!je["n"].is_array()) cfg_error("/eval/n", "expected array");
        ecfg.n_list.clear();
        for (std::size_t i = 0; i < je["n"].size(); ++i) {
            if (!je["n"][i].is_number_integer())
                cfg_error("/eval/n/" + std::to_string(i),
                          "expected unsigned integer");
            ecfg.n_list.push_back(je["n"][i].get<std::size_t>());
        }
    }
    if (je.contains("heading_max") && !je["heading_max"].is_null())
        ecfg.heading_max_deg = cfg_num(je, "/eval", "heading_max", 0.0);

    // Stage hashes chain: a stage hash covers everything influencing its
    // artifact bytes. nprobe/ef_search are search-time knobs, so they are
    // excluded from the index hash and only enter the search hash.
    const njson canon_synth = {
        {"n_db", spec.n_db},         {"n_q", spec.n_q},
        {"dim", spec.dim},           {"places", spec.n_places},
        {"spread", spec.place_spread_m}, {"noise", spec.descriptor_noise},
        {"confusion", spec.confusion_rate}, {"seed", spec.seed},
        {"lat_min", spec.bbox.lat_min},  {"lat_max", spec.bbox.lat_max},
        {"lon_min", spec.bbox.lon_min},  {"lon_max", spec.bbox.lon_max}};
    const std::string h_synth = hash16(canon_synth);
    const std::string h_proj =
        has_proj ? hash16(njson{{"prev", h_synth},
                                {"cfg", {{"dim", proj_dim},
                                         {"whiten", proj_whiten}}}})
                 : h_synth;
    const njson canon_index = {
        {"kind", vgb::index_kind_name(icfg.kind)},
        {"nlist", icfg.nlist},
        {"m_sub", icfg.m_sub},
        {"nbits", icfg.nbits},
        {"k_half", icfg.k_half},
        {"m_links", icfg.m_links},
        {"ef_construction", icfg.ef_construction},
        {"seed", icfg.seed},
        {"train_iters", icfg.train_iters}};
    const std::string h_index =
        hash16(njson{{"prev", h_proj}, {"cfg", canon_index}});
    const njson canon_search = {
        {"k", search_k}, {"nprobe", eff_nprobe}, {"ef_search", eff_ef}};
    const std::string h_search =
        hash16(njson{{"prev", h_index}, {"cfg", canon_search}});
    njson canon_eval = {{"threshold", ecfg.threshold_m},
                        {"n", ecfg.n_list},
                        {"heading_max", nullptr}};
    if (ecfg.heading_max_deg) canon_eval["heading_max"] = *ecfg.heading_max_deg;
    const std::string h_eval =
        hash16(njson{{"prev", h_search}, {"cfg", canon_eval}});

    const fs::path wd(o.workdir);
    fs::create_directories(wd);
    const std::string manifest_path = (wd / ("manifest_" + h_synth + ".csv")).string();
    const std::string db_synth = (wd / ("db_" + h_synth + ".vgbd")).string();
    const std::string q_synth = (wd / ("q_" + h_synth + ".vgbd")).string();
    const std::string db_proj = (wd / ("db_" + h_proj + ".vgbd")).string();
    const std::string q_proj = (wd / ("q_" + h_proj + ".vgbd")).string();
    const std::string model_path = (wd / ("pca_" + h_proj + ".vgbd")).string();
    const std::string index_path = (wd / ("index_" + h_index + ".vgbd")).string();
    const std::string results_path =
        (wd / ("results_" + h_search + ".jsonl")).string();
    const std::string eval_path = (wd / ("eval_" + h_eval + ".json")).string();

    const auto exists = [](const std::string& p) { return fs::exists(p); };
    ojson stages;

    // synth stage
    {
        const bool cached = !o.force && exists(manifest_path) &&
                            exists(db_synth) && exists(q_synth);
        if (!cached) {
            const vgb::SynthDataset ds = vgb::synth_generate(spec);
            vgb::write_manifest(manifest_path, ds.manifest);
            vgb::write_descriptor_set(db_synth, ds.db);
            vgb::write_descriptor_set(q_synth, ds.queries);
        }
        stages["synth"] = {{"hash", h_synth}, {"cached", cached}};
    }

    // projection stage
    if (has_proj) {
        const bool cached = !o.force && exists(model_path) &&
                            exists(db_proj) && exists(q_proj);
        if (!cached) {
            const vgb::DescriptorSet db = vgb::read_descriptor_set(db_synth);
            const vgb::DescriptorSet queries = vgb::read_descriptor_set(q_synth);
            const vgb::PcaModel model = vgb::pca_fit(db, proj_dim, proj_whiten);
            vgb::write_pca_model(model_path, model);
            const auto apply = [&](const vgb::DescriptorSet& set) {
                std::vector<vgb::Descriptor> descs;
                descs.reserve(set.size());
                for (std::size_t i = 0; i < set.size(); ++i)
                    descs.push_back(
                        vgb::pca_apply(model, set.matrix.row_span(i)));
                return pack_descriptors(set.ids, descs);
            };
            vgb::write_descriptor_set(db_proj, apply(db));
            vgb::write_descriptor_set(q_proj, apply(queries));
        }
        stages["projection"] =
            ojson{{"hash", h_proj}, {"cached", cached}, {"enabled", true}};
    } else {
        stages["projection"] = ojson{{"hash", h_proj}, {"enabled", false}};
    }

    // index stage
    {
        const bool cached = !o.force && exists(index_path);
        if (!cached) {
            const vgb::DescriptorSet db = vgb::read_descriptor_set(db_proj);
            const std::unique_ptr<vgb::Index> index = vgb::build_index(db, icfg);
            vgb::save_index(index_path, *index);
        }
        stages["index"] = {{"hash", h_index}, {"cached", cached}};
    }

    // search stage
    {
        const bool cached = !o.force && exists(results_path);
        if (!cached) {
            const std::unique_ptr<vgb::Index> index = vgb::load_index(index_path);
            const vgb::DescriptorSet queries = vgb::read_descriptor_set(q_proj);
            vgb::SearchParams params;
            params.nprobe = eff_nprobe;
            params.ef_search = eff_ef;
            vgb::write_results(results_path,
                               index->search(queries, search_k, params));
        }
        stages["search"] = {{"hash", h_search}, {"cached", cached}};
    }

    // eval stage
    ojson eval_j;
    {
        const bool cached = !o.force && exists(eval_path);
        if (!cached) {
            const std::vector<vgb::SearchResult> results =
                vgb::read_results(results_path);
            const vgb::Manifest manifest = vgb::read_manifest(manifest_path);
            const vgb::PoseTable db_poses =
                vgb::PoseTable::from_manifest(manifest, vgb::Split::database);
            const vgb::PoseTable q_poses =
                vgb::PoseTable::from_manifest(manifest, vgb::Split::query);
            const vgb::EvalReport report =
                vgb::recall_at_n(results, q_poses, db_poses, ecfg);
            std::ofstream out = open_out(eval_path);
            out << eval_report_json(report).dump(2) << "\n";
        }
        stages["eval"] = {{"hash", h_eval}, {"cached", cached}};
        std::ifstream in(eval_path, std::ios::binary);
        if (!in)
            vgb::throw_error(vgb::ErrorCode::io,
                             "cannot open eval report: " + eval_path);
        in >> eval_j;
    }

    ojson rep;
    rep["command"] = "pipeline";
    rep["workdir"] = o.workdir;
    rep["stages"] = stages;
    rep["artifacts"] = {{"manifest", manifest_path}, {"db", db_proj},
                        {"queries", q_proj},         {"index", index_path},
                        {"results", results_path},   {"eval", eval_path}};
    rep["eval"] = eval_j;
    emit_report(rep);
}

/***************************************************
 * Wiring
 ***************************************************/

void print_error(bool json_errors, const std::string& code,
                 const std::string& msg) {
    if (json_errors) {
        ojson j;
        j["error"] = {{"code", code}, {"message", msg}};
        std::fprintf(stderr, "%s\n", j.dump().c_str());
    } else {
        std::fprintf(stderr, "vgbench: %s: %s\n", code.c_str(), msg.c_str());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visual geo-localization retrieval benchmark"};
    app.set_version_flag("--version", "vgbench 1.0.0");
    app.require_subcommand(1);
    app.fallthrough();

    bool json_errors = false;
    int threads = 1;
    app.add_flag("--json-errors", json_errors,
                 "emit errors as JSON on stderr");
    app.add_option("--threads", threads,
                   "worker thread cap (results identical for any N)")
        ->check(CLI::PositiveNumber);

    SynthOpts so;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--n-db", so.spec.n_db, "database size");
    synth->add_option("--n-q", so.spec.n_q, "query count");
    synth->add_option("--dim", so.spec.dim, "descriptor dim");
    synth->add_option("--places", so.spec.n_places, "number of places");
    synth->add_option("--spread", so.spec.place_spread_m,
                      "place spread in meters");
    synth->add_option("--noise", so.spec.descriptor_noise, "descriptor noise");
    synth->add_option("--confusion", so.spec.confusion_rate,
                      "fraction of places sharing a prototype");
    synth->add_option("--seed", so.spec.seed, "rng seed");
    synth->add_option("--lat-min", so.spec.bbox.lat_min, "bbox");
    synth->add_option("--lat-max", so.spec.bbox.lat_max, "bbox");
    synth->add_option("--lon-min", so.spec.bbox.lon_min, "bbox");
    synth->add_option("--lon-max", so.spec.bbox.lon_max, "bbox");
    synth->add_option("--out-manifest", so.out_manifest, "manifest CSV")
        ->required();
    synth->add_option("--out-db", so.out_db, "database descriptors")
        ->required();
    synth->add_option("--out-q", so.out_q, "query descriptors")->required();
    synth->callback([&so] { run_synth(so); });

    AggregateOpts ao;
    auto* aggregate =
        app.add_subcommand("aggregate", "feature maps/tokens -> descriptors");
    aggregate->add_option("--in", ao.in, "feature maps, tokens or images")
        ->required();
    aggregate->add_option("--method", ao.method, "aggregation method")
        ->required()
        ->check(CLI::IsMember({"spoc", "mac", "gem", "rmac", "netvlad",
                               "seqpool", "cls"}));
    aggregate->add_option("--out", ao.out, "descriptor set")->required();
    aggregate->add_option("--p", ao.p, "gem exponent");
    aggregate->add_option("--eps", ao.eps, "gem clamp");
    aggregate->add_option("--levels", ao.levels, "rmac grid levels");
    aggregate->add_option("--weights", ao.weights,
                          "netvlad/seqpool weights container");
    aggregate->add_option("--fc", ao.fc, "fc_w/fc_b projection container");
    aggregate->add_flag("--from-images", ao.from_images,
                        "treat --in as an image container");
    aggregate->callback([&ao] { run_aggregate(ao); });

    PcaOpts po;
    auto* pca = app.add_subcommand("pca", "fit or apply a PCA projection");
    pca->add_option("--fit", po.fit, "descriptors to fit on");
    pca->add_option("--dim", po.dim, "output dim (fit)");
    pca->add_flag("--whiten", po.whiten, "whiten (fit)");
    pca->add_option("--model", po.model, "model container")->required();
    pca->add_option("--in", po.in, "descriptors to project");
    pca->add_option("--out", po.out, "projected descriptors");
    pca->callback([&po] { run_pca(po); });

    BuildOpts bo;
    auto* build = app.add_subcommand("build-index", "build an ANN index");
    build->add_option("--kind", bo.kind, "index kind")
        ->required()
        ->check(CLI::IsMember(
            {"flat", "ivf", "pq", "ivfpq", "multiindex", "hnsw"}));
    build->add_option("--in", bo.in, "database descriptors")->required();
    build->add_option("--out", bo.out, "index file")->required();
    build->add_option("--nlist", bo.cfg.nlist, "ivf lists");
    build->add_option("--nprobe", bo.cfg.nprobe, "ivf probes");
    build->add_option("--m-sub", bo.cfg.m_sub, "pq subquantizers");
    build->add_option("--nbits", bo.cfg.nbits, "pq bits per code (4 or 8)");
    build->add_option("--k-half", bo.cfg.k_half, "multi-index cells per half");
    build->add_option("--m-links", bo.cfg.m_links, "hnsw links per node");
    build->add_option("--ef-construction", bo.cfg.ef_construction,
                      "hnsw build beam");
    build->add_option("--ef-search", bo.cfg.ef_search, "hnsw search beam");
    build->add_option("--seed", bo.cfg.seed, "rng seed");
    build->add_option("--train-iters", bo.cfg.train_iters,
                      "quantizer training iterations");
    build->callback([&bo] { run_build_index(bo); });

    SearchOpts qo;
    auto* search = app.add_subcommand("search", "query an index");
    search->add_option("--index", qo.index, "index file")->required();
    search->add_option("--q", qo.q, "query descriptors (1..n crops)")
        ->required();
    search->add_option("--k", qo.k, "neighbors per query")->required();
    search->add_option("--out", qo.out, "results JSONL")->required();
    search->add_option("--nprobe", qo.nprobe, "ivf probe override");
    search->add_option("--ef-search", qo.ef_search, "hnsw beam override");
    search->add_option("--fusion", qo.fusion, "multi-crop fusion")
        ->check(CLI::IsMember(
            {"none", "mean", "nearest_crop", "majority_vote"}));
    search->callback([&qo] { run_search(qo); });

    PreprocessOpts ppo;
    auto* preprocess =
        app.add_subcommand("preprocess", "apply a query resize/crop policy");
    preprocess->add_option("--in", ppo.in, "image container")->required();
    preprocess->add_option("--policy", ppo.policy, "crop policy")
        ->required()
        ->check(CLI::IsMember(
            {"hard_resize", "single_query", "central_crop", "five_crops"}));
    preprocess->add_option("--db-h", ppo.db_h, "database image height")
        ->required();
    preprocess->add_option("--db-w", ppo.db_w, "database image width")
        ->required();
    preprocess->add_option("--out", ppo.out, "crop container")->required();
    preprocess->callback([&ppo] { run_preprocess(ppo); });

    MineOpts mo;
    auto* mine = app.add_subcommand("mine", "mine training triplets");
    mine->add_option("--db", mo.db, "database descriptors")->required();
    mine->add_option("--q", mo.q, "query descriptors")->required();
    mine->add_option("--db-manifest", mo.db_manifest, "database manifest")
        ->required();
    mine->add_option("--q-manifest", mo.q_manifest, "query manifest")
        ->required();
    mine->add_option("--strategy", mo.strategy, "mining strategy")
        ->check(CLI::IsMember({"full", "partial", "random"}));
    mine->add_option("--n-neg", mo.cfg.n_neg, "negatives per triplet");
    mine->add_option("--positive-radius", mo.cfg.positive_radius_m,
                     "positive radius in meters");
    mine->add_option("--negative-min", mo.cfg.negative_min_m,
                     "minimum negative distance in meters");
    mine->add_option("--partial-sample", mo.cfg.partial_sample,
                     "partial mining sample size");
    mine->add_option("--seed", mo.cfg.seed, "rng seed");
    mine->add_option("--out", mo.out, "triplets JSONL")->required();
    mine->callback([&mo] { run_mine(mo); });

    EvalOpts eo;
    auto* eval = app.add_subcommand("eval", "geodesic recall evaluation");
    eval->add_option("--results", eo.results, "results JSONL")->required();
    eval->add_option("--db-manifest", eo.db_manifest, "database manifest")
        ->required();
    eval->add_option("--q-manifest", eo.q_manifest, "query manifest")
        ->required();
    eval->add_option("--threshold", eo.threshold, "distance threshold m");
    eval->add_option("--n", eo.n_list, "recall@N cutoffs")->delimiter(',');
    eval->add_option("--heading-max", eo.heading_max,
                     "max heading delta in degrees");
    eval->add_option("--report", eo.report, "JSON report file");
    eval->add_option("--curve-csv", eo.curve_csv, "recall@N curve CSV");
    eval->add_option("--sweep-csv", eo.sweep_csv, "threshold sweep CSV");
    eval->callback([&eo] { run_eval(eo); });

    BenchOpts beo;
    auto* bench = app.add_subcommand("bench", "compare index kinds");
    bench->add_option("--db", beo.db, "database descriptors")->required();
    bench->add_option("--q", beo.q, "query descriptors")->required();
    bench->add_option("--db-manifest", beo.db_manifest, "database manifest")
        ->required();
    bench->add_option("--q-manifest", beo.q_manifest, "query manifest")
        ->required();
    bench->add_option("--kinds", beo.kinds, "index kinds to compare")
        ->delimiter(',');
    bench->add_option("--k", beo.k, "neighbors per query");
    bench->add_option("--threshold", beo.threshold, "recall threshold m");
    bench->add_option("--nlist", beo.cfg.nlist, "ivf lists");
    bench->add_option("--nprobe", beo.cfg.nprobe, "ivf probes");
    bench->add_option("--m-sub", beo.cfg.m_sub, "pq subquantizers");
    bench->add_option("--nbits", beo.cfg.nbits, "pq bits per code");
    bench->add_option("--k-half", beo.cfg.k_half, "multi-index cells per half");
    bench->add_option("--m-links", beo.cfg.m_links, "hnsw links per node");
    bench->add_option("--ef-construction", beo.cfg.ef_construction,
                      "hnsw build beam");
    bench->add_option("--ef-search", beo.cfg.ef_search, "hnsw search beam");
    bench->add_option("--seed", beo.cfg.seed, "rng seed");
    bench->add_option("--train-iters", beo.cfg.train_iters,
                      "quantizer training iterations");
    bench->add_option("--out", beo.out, "bench CSV")->required();
    bench->add_flag("--omit-timing", beo.omit_timing,
                    "leave the CSV timing column empty");
    bench->callback([&beo] { run_bench(beo); });

    PipelineOpts plo;
    auto* pipeline =
        app.add_subcommand("pipeline", "run synth->index->search->eval with caching");
    pipeline->add_option("--config", plo.config, "pipeline config JSON")
        ->required();
    pipeline->add_option("--workdir", plo.workdir, "artifact directory")
        ->required();
    pipeline->add_flag("--force", plo.force, "ignore cached artifacts");
    pipeline->callback([&plo] { run_pipeline(plo); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const vgb::Error& e) {
        print_error(json_errors, vgb::error_code_name(e.code()), e.what());
        return 2;
    } catch (const std::exception& e) {
        print_error(json_errors, "internal", e.what());
        return 3;
    }
    return 0;
}
