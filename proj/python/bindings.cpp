// Python bindings for the core retrieval operations: aggregation, PCA,
// index build/search, synthetic data, mining and geodesic evaluation.
#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vgbench/aggregation.hpp"
#include "vgbench/common.hpp"
#include "vgbench/dataio.hpp"
#include "vgbench/geoeval.hpp"
#include "vgbench/index.hpp"
#include "vgbench/mining.hpp"
#include "vgbench/numerics.hpp"

namespace py = pybind11;

namespace {

using FArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IdArray =
    py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>;

constexpr std::uint64_t kNoHit = std::numeric_limits<std::uint64_t>::max();

vgb::FeatureMap fmap_from(const FArray& a) {
    if (a.ndim() != 3)
        throw py::value_error("feature map must have shape (C, H, W)");
    vgb::FeatureMap f(static_cast<std::size_t>(a.shape(0)),
                      static_cast<std::size_t>(a.shape(1)),
                      static_cast<std::size_t>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), f.data.begin());
    return f;
}

py::array_t<float> descriptor_to_np(const vgb::Descriptor& d) {
    return py::array_t<float>(static_cast<py::ssize_t>(d.dim()), d.values.data());
}

vgb::MatrixF matrix_from(const FArray& a, const char* what) {
    if (a.ndim() != 2)
        throw py::value_error(std::string(what) + " must be 2-dimensional");
    vgb::MatrixF m(static_cast<std::size_t>(a.shape(0)),
                   static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data.begin());
    return m;
}

py::array_t<float> matrix_to_np(const vgb::MatrixF& m) {
    py::array_t<float> out({static_cast<py::ssize_t>(m.rows),
                            static_cast<py::ssize_t>(m.cols)});
    std::copy(m.data.begin(), m.data.end(), out.mutable_data());
    return out;
}

vgb::DescriptorSet set_from(const FArray& data,
                            const std::optional<IdArray>& ids) {
    vgb::DescriptorSet set;
    set.matrix = matrix_from(data, "descriptor data");
    if (ids) {
        if (ids->ndim() != 1 ||
            static_cast<std::size_t>(ids->shape(0)) != set.matrix.rows)
            throw py::value_error("ids must be 1-d with one entry per row");
        set.ids.assign(ids->data(), ids->data() + ids->shape(0));
    } else {
        set.ids.resize(set.matrix.rows);
        for (std::size_t i = 0; i < set.ids.size(); ++i) set.ids[i] = i;
    }
    return set;
}

// Poses come in as (n, 2) lat/lon or (n, 3) lat/lon/heading; a NaN heading
// marks it unknown.
vgb::PoseTable poses_from(const IdArray& ids, const DArray& poses) {
    if (poses.ndim() != 2 || (poses.shape(1) != 2 && poses.shape(1) != 3))
        throw py::value_error("poses must have shape (n, 2) or (n, 3)");
    if (ids.ndim() != 1 || ids.shape(0) != poses.shape(0))
        throw py::value_error("pose ids must align with pose rows");
    vgb::PoseTable table;
    const bool with_heading = poses.shape(1) == 3;
    for (py::ssize_t i = 0; i < poses.shape(0); ++i) {
        vgb::GeoPose p;
        p.lat_deg = poses.at(i, 0);
        p.lon_deg = poses.at(i, 1);
        if (with_heading && !std::isnan(poses.at(i, 2)))
            p.heading_deg = poses.at(i, 2);
        table.add(ids.at(i), p);
    }
    return table;
}

std::vector<vgb::SearchResult> results_from(const IdArray& hit_ids,
                                            const IdArray& q_ids) {
    if (hit_ids.ndim() != 2)
        throw py::value_error("hit ids must have shape (n_queries, k)");
    if (q_ids.ndim() != 1 || q_ids.shape(0) != hit_ids.shape(0))
        throw py::value_error("query ids must align with hit rows");
    std::vector<vgb::SearchResult> results;
    for (py::ssize_t i = 0; i < hit_ids.shape(0); ++i) {
        vgb::SearchResult r;
        r.query_id = q_ids.at(i);
        r.k_requested = static_cast<std::size_t>(hit_ids.shape(1));
        for (py::ssize_t j = 0; j < hit_ids.shape(1); ++j) {
            const std::uint64_t id = hit_ids.at(i, j);
            if (id == kNoHit) continue;
            r.hits.push_back({id, 0.0f});
        }
        results.push_back(std::move(r));
    }
    return results;
}

vgb::IndexConfig config_from(const std::string& kind, std::size_t nlist,
                             std::size_t nprobe, std::size_t m_sub,
                             std::size_t nbits, std::size_t k_half,
                             std::size_t m_links, std::size_t ef_construction,
                             std::size_t ef_search, std::uint64_t seed,
                             std::size_t train_iters) {
    vgb::IndexConfig cfg;
    cfg.kind = vgb::index_kind_from_name(kind);
    cfg.nlist = nlist;
    cfg.nprobe = nprobe;
    cfg.m_sub = m_sub;
    cfg.nbits = nbits;
    cfg.k_half = k_half;
    cfg.m_links = m_links;
    cfg.ef_construction = ef_construction;
    cfg.ef_search = ef_search;
    cfg.seed = seed;
    cfg.train_iters = train_iters;
    return cfg;
}

class PyIndex {
   public:
    explicit PyIndex(std::unique_ptr<vgb::Index> index)
        : index_(std::move(index)) {}

    py::tuple search(const FArray& queries, std::size_t k,
                     std::optional<std::size_t> nprobe,
                     std::optional<std::size_t> ef_search,
                     std::optional<IdArray> ids) const {
        const vgb::DescriptorSet qset = set_from(queries, ids);
        vgb::SearchParams params;
        params.nprobe = nprobe;
        params.ef_search = ef_search;
        const std::vector<vgb::SearchResult> results =
            index_->search(qset, k, params);

        const py::ssize_t nq = static_cast<py::ssize_t>(results.size());
        const py::ssize_t kk = static_cast<py::ssize_t>(k);
        py::array_t<std::uint64_t> out_ids({nq, kk});
        py::array_t<float> out_dist({nq, kk});
        auto ids_w = out_ids.mutable_unchecked<2>();
        auto dist_w = out_dist.mutable_unchecked<2>();
        for (py::ssize_t i = 0; i < nq; ++i)
            for (py::ssize_t j = 0; j < kk; ++j) {
                const auto& hits = results[static_cast<std::size_t>(i)].hits;
                if (static_cast<std::size_t>(j) < hits.size()) {
                    ids_w(i, j) = hits[static_cast<std::size_t>(j)].id;
                    dist_w(i, j) =
                        hits[static_cast<std::size_t>(j)].sq_distance;
                } else {
                    ids_w(i, j) = kNoHit;
                    dist_w(i, j) = std::numeric_limits<float>::infinity();
                }
            }
        return py::make_tuple(out_ids, out_dist);
    }

    void save(const std::string& path) const { vgb::save_index(path, *index_); }

    std::string kind() const {
        return vgb::index_kind_name(index_->cfg.kind);
    }
    std::size_t dim() const { return index_->dim; }
    std::size_t size() const { return index_->n; }
    std::uint64_t memory_footprint() const {
        return index_->memory_footprint();
    }

   private:
    std::unique_ptr<vgb::Index> index_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "visual geo-localization retrieval engine";
    m.attr("__version__") = "1.0.0";
    m.attr("NO_HIT") = kNoHit;

    m.def(
        "haversine_m",
        [](double lat1, double lon1, double lat2, double lon2) {
            return vgb::haversine_m({lat1, lon1, std::nullopt},
                                    {lat2, lon2, std::nullopt});
        },
        py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"),
        "Great-circle distance in meters on a 6371 km sphere.");

    m.def(
        "spoc", [](const FArray& f) { return descriptor_to_np(vgb::spoc(fmap_from(f))); },
        py::arg("fmap"), "Mean-pool a (C, H, W) feature map, L2-normalized.");
    m.def(
        "mac", [](const FArray& f) { return descriptor_to_np(vgb::mac(fmap_from(f))); },
        py::arg("fmap"), "Max-pool a (C, H, W) feature map, L2-normalized.");
    m.def(
        "gem",
        [](const FArray& f, double p, double eps) {
            return descriptor_to_np(vgb::gem(fmap_from(f), p, eps));
        },
        py::arg("fmap"), py::arg("p") = 3.0, py::arg("eps") = 1e-6,
        "Generalized-mean pooling of a (C, H, W) feature map.");
    m.def(
        "rmac",
        [](const FArray& f, std::size_t levels) {
            return descriptor_to_np(vgb::rmac(fmap_from(f), levels));
        },
        py::arg("fmap"), py::arg("levels") = 3,
        "Regional max pooling over a multi-scale grid.");
    m.def(
        "netvlad",
        [](const FArray& f, std::size_t clusters, std::uint64_t seed) {
            const vgb::FeatureMap fm = fmap_from(f);
            const vgb::VladParams params =
                vgb::VladParams::seeded_random(clusters, fm.channels, seed);
            return descriptor_to_np(vgb::netvlad(fm, params));
        },
        py::arg("fmap"), py::arg("clusters"), py::arg("seed") = 0,
        "Soft-assigned VLAD with seeded random parameters; dim = K*C.");

    py::class_<vgb::PcaModel>(m, "PcaModel")
        .def_property_readonly("in_dim", &vgb::PcaModel::in_dim)
        .def_property_readonly("out_dim", &vgb::PcaModel::out_dim)
        .def_readonly("whiten", &vgb::PcaModel::whiten)
        .def(
            "apply",
            [](const vgb::PcaModel& model, const FArray& data) {
                const vgb::MatrixF in = matrix_from(data, "pca input");
                vgb::MatrixF out(in.rows, model.out_dim());
                for (std::size_t i = 0; i < in.rows; ++i) {
                    const vgb::Descriptor d =
                        vgb::pca_apply(model, in.row_span(i));
                    std::copy(d.values.begin(), d.values.end(), out.row(i));
                }
                return matrix_to_np(out);
            },
            py::arg("data"),
            "Project rows through the model, L2-normalizing each output.")
        .def(
            "save",
            [](const vgb::PcaModel& model, const std::string& path) {
                vgb::write_pca_model(path, model);
            },
            py::arg("path"))
        .def_static(
            "load",
            [](const std::string& path) { return vgb::read_pca_model(path); },
            py::arg("path"));

    m.def(
        "pca_fit",
        [](const FArray& data, std::size_t out_dim, bool whiten) {
            return vgb::pca_fit(matrix_from(data, "pca input"), out_dim,
                                whiten);
        },
        py::arg("data"), py::arg("out_dim"), py::arg("whiten") = false,
        "Fit a PCA projection on rows of a float32 matrix.");

    py::class_<PyIndex>(m, "Index")
        .def("search", &PyIndex::search, py::arg("queries"), py::arg("k"),
             py::arg("nprobe") = std::nullopt,
             py::arg("ef_search") = std::nullopt,
             py::arg("ids") = std::nullopt,
             "Top-k ids and squared distances; missing hits are NO_HIT/inf.")
        .def("save", &PyIndex::save, py::arg("path"))
        .def("memory_footprint", &PyIndex::memory_footprint)
        .def_property_readonly("kind", &PyIndex::kind)
        .def_property_readonly("dim", &PyIndex::dim)
        .def("__len__", &PyIndex::size);

    m.def(
        "build_index",
        [](const FArray& data, std::optional<IdArray> ids,
           const std::string& kind, std::size_t nlist, std::size_t nprobe,
           std::size_t m_sub, std::size_t nbits, std::size_t k_half,
           std::size_t m_links, std::size_t ef_construction,
           std::size_t ef_search, std::uint64_t seed,
           std::size_t train_iters) {
            const vgb::DescriptorSet set = set_from(data, ids);
            const vgb::IndexConfig cfg = config_from(
                kind, nlist, nprobe, m_sub, nbits, k_half, m_links,
                ef_construction, ef_search, seed, train_iters);
            return PyIndex(vgb::build_index(set, cfg));
        },
        py::arg("data"), py::arg("ids") = std::nullopt,
        py::arg("kind") = "flat", py::arg("nlist") = 64,
        py::arg("nprobe") = 8, py::arg("m_sub") = 8, py::arg("nbits") = 8,
        py::arg("k_half") = 16, py::arg("m_links") = 16,
        py::arg("ef_construction") = 100, py::arg("ef_search") = 50,
        py::arg("seed") = 0, py::arg("train_iters") = 20,
        "Build an ANN index over float32 rows.");

    m.def(
        "load_index",
        [](const std::string& path) { return PyIndex(vgb::load_index(path)); },
        py::arg("path"));

    m.def(
        "synth",
        [](std::size_t n_db, std::size_t n_q, std::size_t dim,
           std::size_t places, double spread, double noise, double confusion,
           std::uint64_t seed) {
            vgb::SynthSpec spec;
            spec.n_db = n_db;
            spec.n_q = n_q;
            spec.dim = dim;
            spec.n_places = places;
            spec.place_spread_m = spread;
            spec.descriptor_noise = noise;
            spec.confusion_rate = confusion;
            spec.seed = seed;
            const vgb::SynthDataset ds = vgb::synth_generate(spec);

            const auto pose_array = [&](const vgb::DescriptorSet& set,
                                        vgb::Split split) {
                const vgb::PoseTable poses =
                    vgb::PoseTable::from_manifest(ds.manifest, split);
                DArray out({static_cast<py::ssize_t>(set.size()),
                            py::ssize_t(3)});
                auto w = out.mutable_unchecked<2>();
                for (std::size_t i = 0; i < set.size(); ++i) {
                    const vgb::GeoPose& p = poses.pose_of(set.ids[i]);
                    w(static_cast<py::ssize_t>(i), 0) = p.lat_deg;
                    w(static_cast<py::ssize_t>(i), 1) = p.lon_deg;
                    w(static_cast<py::ssize_t>(i), 2) =
                        p.heading_deg ? *p.heading_deg
                                      : std::numeric_limits<double>::quiet_NaN();
                }
                return out;
            };
            const auto id_array = [](const std::vector<std::uint64_t>& ids) {
                return py::array_t<std::uint64_t>(static_cast<py::ssize_t>(ids.size()),
                                                  ids.data());
            };

            py::dict d;
            d["db"] = matrix_to_np(ds.db.matrix);
            d["db_ids"] = id_array(ds.db.ids);
            d["db_poses"] = pose_array(ds.db, vgb::Split::database);
            d["q"] = matrix_to_np(ds.queries.matrix);
            d["q_ids"] = id_array(ds.queries.ids);
            d["q_poses"] = pose_array(ds.queries, vgb::Split::query);
            return d;
        },
        py::arg("n_db") = 1000, py::arg("n_q") = 100, py::arg("dim") = 64,
        py::arg("places") = 100, py::arg("spread") = 8.0,
        py::arg("noise") = 0.05, py::arg("confusion") = 0.0,
        py::arg("seed") = 0,
        "Generate a synthetic geo-tagged retrieval dataset.");

    m.def(
        "recall_at_n",
        [](const IdArray& hit_ids, const IdArray& q_ids, const DArray& q_poses,
           const IdArray& db_ids, const DArray& db_poses, double threshold,
           const std::vector<std::size_t>& n_list,
           std::optional<double> heading_max) {
            vgb::EvalConfig cfg;
            cfg.threshold_m = threshold;
            cfg.n_list = n_list;
            cfg.heading_max_deg = heading_max;
            const vgb::EvalReport rep = vgb::recall_at_n(
                results_from(hit_ids, q_ids), poses_from(q_ids, q_poses),
                poses_from(db_ids, db_poses), cfg);
            py::dict recall;
            for (const auto& [n, r] : rep.recall_at)
                recall[py::int_(n)] = r;
            py::dict out;
            out["recall_at"] = recall;
            out["upper_bound"] = rep.upper_bound;
            out["n_queries"] = rep.n_queries;
            out["heading_unconstrained_pairs"] = rep.heading_unconstrained_pairs;
            return out;
        },
        py::arg("hit_ids"), py::arg("q_ids"), py::arg("q_poses"),
        py::arg("db_ids"), py::arg("db_poses"), py::arg("threshold") = 25.0,
        py::arg("n_list") = std::vector<std::size_t>{1, 5, 10, 20},
        py::arg("heading_max") = std::nullopt,
        "Geodesic recall@N of ranked hit ids against ground-truth poses.");

    m.def(
        "mine",
        [](const FArray& q, const IdArray& q_ids, const DArray& q_poses,
           const FArray& db, const IdArray& db_ids, const DArray& db_poses,
           const std::string& strategy, std::size_t n_neg,
           double positive_radius, double negative_min,
           std::size_t partial_sample, std::uint64_t seed) {
            vgb::MiningConfig cfg;
            cfg.strategy = vgb::mining_strategy_from_name(strategy);
            cfg.n_neg = n_neg;
            cfg.positive_radius_m = positive_radius;
            cfg.negative_min_m = negative_min;
            cfg.partial_sample = partial_sample;
            cfg.seed = seed;
            const vgb::MiningOutcome out = vgb::mine_all(
                set_from(q, q_ids), poses_from(q_ids, q_poses),
                set_from(db, db_ids), poses_from(db_ids, db_poses), cfg);
            py::list triplets;
            for (const vgb::Triplet& t : out.triplets)
                triplets.append(py::make_tuple(t.query_id, t.positive_id,
                                               t.negative_ids));
            py::dict d;
            d["triplets"] = triplets;
            d["skipped"] = out.skipped;
            return d;
        },
        py::arg("q"), py::arg("q_ids"), py::arg("q_poses"), py::arg("db"),
        py::arg("db_ids"), py::arg("db_poses"), py::arg("strategy") = "full",
        py::arg("n_neg") = 10, py::arg("positive_radius") = 10.0,
        py::arg("negative_min") = 25.0, py::arg("partial_sample") = 1000,
        py::arg("seed") = 0,
        "Mine training triplets; returns triplets and skipped query ids.");
}
