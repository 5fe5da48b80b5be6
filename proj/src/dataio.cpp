#include "vgbench/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "vgbench/numerics.hpp"

namespace vgb {

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::f32: return 4;
        case DType::u64: return 8;
        case DType::u8: return 1;
    }
    throw_error(ErrorCode::format, "unknown dtype");
}

/***************************************************
 * Sections
 ***************************************************/

namespace {

// The on-disk tag field is 8 bytes, so longer names alias their 8-char
// prefix ("centroids" is stored and looked up as "centroid").
std::string normalize_role(const std::string& role) {
    if (role.empty())
        throw_error(ErrorCode::format, "section role must not be empty");
    for (char ch : role)
        if (static_cast<unsigned char>(ch) < 0x20 ||
            static_cast<unsigned char>(ch) > 0x7e)
            throw_error(ErrorCode::format, "section role must be ASCII");
    return role.size() > 8 ? role.substr(0, 8) : role;
}

template <typename T>
Section make_section(const std::string& role, std::uint64_t rows,
                     std::uint32_t cols, std::span<const T> data, DType dt) {
    if (data.size() != rows * cols)
        throw_error(ErrorCode::dimension_mismatch,
                    "section '" + role + "': payload size mismatch");
    Section s;
    s.role = normalize_role(role);
    s.rows = rows;
    s.cols = cols;
    s.dtype = dt;
    s.payload.resize(data.size() * sizeof(T));
    std::memcpy(s.payload.data(), data.data(), s.payload.size());
    return s;
}

}  // namespace

Section Section::from_f32(const std::string& role, std::uint64_t rows,
                          std::uint32_t cols, std::span<const float> data) {
    return make_section(role, rows, cols, data, DType::f32);
}

Section Section::from_u64(const std::string& role, std::uint64_t rows,
                          std::uint32_t cols,
                          std::span<const std::uint64_t> data) {
    return make_section(role, rows, cols, data, DType::u64);
}

Section Section::from_u8(const std::string& role, std::uint64_t rows,
                         std::uint32_t cols,
                         std::span<const std::uint8_t> data) {
    return make_section(role, rows, cols, data, DType::u8);
}

std::span<const float> Section::as_f32() const {
    if (dtype != DType::f32)
        throw_error(ErrorCode::format, "section '" + role + "' is not f32");
    return {reinterpret_cast<const float*>(payload.data()),
            payload.size() / 4};
}

std::span<const std::uint64_t> Section::as_u64() const {
    if (dtype != DType::u64)
        throw_error(ErrorCode::format, "section '" + role + "' is not u64");
    return {reinterpret_cast<const std::uint64_t*>(payload.data()),
            payload.size() / 8};
}

std::span<const std::uint8_t> Section::as_u8() const {
    if (dtype != DType::u8)
        throw_error(ErrorCode::format, "section '" + role + "' is not u8");
    return {payload.data(), payload.size()};
}

const Section* Container::find(const std::string& role) const {
    const std::string want = normalize_role(role);
    for (const auto& s : sections)
        if (s.role == want) return &s;
    return nullptr;
}

const Section& Container::require(const std::string& role) const {
    const Section* s = find(role);
    if (!s)
        throw_error(ErrorCode::format,
                    "container is missing section '" + role + "'");
    return *s;
}

std::vector<const Section*> Container::find_all(const std::string& role) const {
    const std::string want = normalize_role(role);
    std::vector<const Section*> out;
    for (const auto& s : sections)
        if (s.role == want) out.push_back(&s);
    return out;
}

/***************************************************
 * Container I/O
 ***************************************************/

namespace {

constexpr char kMagic[4] = {'V', 'G', 'B', 'D'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t n, const std::string& what) {
        if (pos + n > size)
            throw_error(ErrorCode::format,
                        path + ": truncated while reading " + what +
                            " at byte offset " + std::to_string(pos));
    }
    std::uint16_t u16(const std::string& what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(
            data[pos] | (data[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const std::string& what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
};

}  // namespace

void write_vgbd(const std::string& path, const Container& c) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kVersion);
    put_u16(buf, 0);  // flags
    put_u32(buf, static_cast<std::uint32_t>(c.sections.size()));
    for (const auto& s : c.sections) {
        std::string tag = normalize_role(s.role);
        tag.resize(8, ' ');
        buf.append(tag);
        put_u64(buf, s.rows);
        put_u32(buf, s.cols);
        buf.push_back(static_cast<char>(s.dtype));
        const std::size_t expect =
            static_cast<std::size_t>(s.rows) * s.cols * dtype_size(s.dtype);
        if (s.payload.size() != expect)
            throw_error(ErrorCode::format,
                        "section '" + s.role + "': payload size " +
                            std::to_string(s.payload.size()) +
                            " != rows*cols*dtype " + std::to_string(expect));
        buf.append(reinterpret_cast<const char*>(s.payload.data()),
                   s.payload.size());
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw_error(ErrorCode::io, "cannot open for writing: " + tmp);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw_error(ErrorCode::io, "write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw_error(ErrorCode::io, "rename failed: " + tmp + " -> " + path);
}

Container read_vgbd(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_error(ErrorCode::io, "cannot open: " + path);
    std::vector<std::uint8_t> bytes(
        (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    ByteReader r{bytes.data(), bytes.size(), 0, path};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw_error(ErrorCode::format, path + ": bad magic at byte offset 0");
    r.pos = 4;
    const std::uint16_t version = r.u16("version");
    if (version != kVersion)
        throw_error(ErrorCode::format,
                    path + ": unsupported version " + std::to_string(version) +
                        " at byte offset 4");
    r.u16("flags");
    const std::uint32_t count = r.u32("section count");

    Container c;
    c.sections.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        r.need(8, "section role");
        std::string role(reinterpret_cast<const char*>(bytes.data() + r.pos),
                         8);
        r.pos += 8;
        while (!role.empty() && role.back() == ' ') role.pop_back();

        Section s;
        s.role = role;
        s.rows = r.u64("rows of section '" + role + "'");
        s.cols = r.u32("cols of section '" + role + "'");
        r.need(1, "dtype of section '" + role + "'");
        const std::uint8_t dt = bytes[r.pos++];
        if (dt > 2)
            throw_error(ErrorCode::format,
                        path + ": bad dtype in section '" + role +
                            "' at byte offset " + std::to_string(r.pos - 1));
        s.dtype = static_cast<DType>(dt);
        const std::size_t payload =
            static_cast<std::size_t>(s.rows) * s.cols * dtype_size(s.dtype);
        r.need(payload, "payload of section '" + role + "'");
        s.payload.assign(bytes.begin() + static_cast<long>(r.pos),
                         bytes.begin() + static_cast<long>(r.pos + payload));
        r.pos += payload;
        c.sections.push_back(std::move(s));
    }
    if (r.pos != bytes.size())
        throw_error(ErrorCode::format,
                    path + ": trailing bytes at offset " +
                        std::to_string(r.pos));
    return c;
}

void append_descriptor_sections(Container& c, const DescriptorSet& set) {
    set.check_consistent();
    c.sections.push_back(Section::from_f32(
        "desc", set.size(), static_cast<std::uint32_t>(set.dim()),
        std::span<const float>(set.matrix.data)));
    c.sections.push_back(Section::from_u64(
        "ids", set.size(), 1, std::span<const std::uint64_t>(set.ids)));
    std::uint8_t flag = set.normalized ? 1 : 0;
    c.sections.push_back(
        Section::from_u8("normflag", 1, 1, std::span<const std::uint8_t>(&flag, 1)));
}

void write_descriptor_set(const std::string& path, const DescriptorSet& set) {
    Container c;
    append_descriptor_sections(c, set);
    write_vgbd(path, c);
}

DescriptorSet descriptor_set_from(const Container& c) {
    const Section& desc = c.require("desc");
    const Section& ids = c.require("ids");
    if (ids.rows != desc.rows)
        throw_error(ErrorCode::format, "ids/desc row count mismatch");
    DescriptorSet set;
    set.matrix.rows = desc.rows;
    set.matrix.cols = desc.cols;
    auto data = desc.as_f32();
    set.matrix.data.assign(data.begin(), data.end());
    auto idspan = ids.as_u64();
    set.ids.assign(idspan.begin(), idspan.end());
    if (const Section* nf = c.find("normflag"))
        set.normalized = nf->as_u8()[0] != 0;
    set.check_consistent();
    return set;
}

DescriptorSet read_descriptor_set(const std::string& path) {
    return descriptor_set_from(read_vgbd(path));
}

void write_crop_descriptor_sets(const std::string& path,
                                const std::vector<DescriptorSet>& per_crop) {
    if (per_crop.empty())
        throw_error(ErrorCode::invalid_input, "crop sets: nothing to write");
    const DescriptorSet& first = per_crop[0];
    first.check_consistent();
    Container c;
    for (const DescriptorSet& set : per_crop) {
        if (set.ids != first.ids || set.dim() != first.dim())
            throw_error(ErrorCode::invalid_input,
                        "crop sets: crops must share ids and dim");
        c.sections.push_back(Section::from_f32(
            "desc", set.size(), static_cast<std::uint32_t>(set.dim()),
            std::span<const float>(set.matrix.data)));
    }
    c.sections.push_back(Section::from_u64(
        "ids", first.size(), 1, std::span<const std::uint64_t>(first.ids)));
    std::uint8_t flag = first.normalized ? 1 : 0;
    c.sections.push_back(Section::from_u8(
        "normflag", 1, 1, std::span<const std::uint8_t>(&flag, 1)));
    write_vgbd(path, c);
}

std::vector<DescriptorSet> read_crop_descriptor_sets(const std::string& path) {
    const Container c = read_vgbd(path);
    const auto descs = c.find_all("desc");
    if (descs.empty())
        throw_error(ErrorCode::format, path + ": no desc sections");
    const Section& ids = c.require("ids");
    bool normalized = false;
    if (const Section* nf = c.find("normflag")) normalized = nf->as_u8()[0] != 0;

    std::vector<DescriptorSet> out;
    for (const Section* d : descs) {
        if (d->rows != ids.rows)
            throw_error(ErrorCode::format, path + ": ids/desc row mismatch");
        DescriptorSet set;
        set.matrix.rows = d->rows;
        set.matrix.cols = d->cols;
        const auto data = d->as_f32();
        set.matrix.data.assign(data.begin(), data.end());
        const auto idspan = ids.as_u64();
        set.ids.assign(idspan.begin(), idspan.end());
        set.normalized = normalized;
        set.check_consistent();
        out.push_back(std::move(set));
    }
    return out;
}

void write_pca_model(const std::string& path, const PcaModel& model) {
    if (model.components.rows != model.eigenvalues.size() ||
        model.components.cols != model.mean.size())
        throw_error(ErrorCode::invalid_input, "pca model: inconsistent dims");
    Container c;
    c.sections.push_back(Section::from_f32(
        "mean", 1, static_cast<std::uint32_t>(model.mean.size()),
        std::span<const float>(model.mean)));
    c.sections.push_back(Section::from_f32(
        "comps", model.components.rows,
        static_cast<std::uint32_t>(model.components.cols),
        std::span<const float>(model.components.data)));
    c.sections.push_back(Section::from_f32(
        "eigvals", 1, static_cast<std::uint32_t>(model.eigenvalues.size()),
        std::span<const float>(model.eigenvalues)));
    const std::uint64_t whiten = model.whiten ? 1 : 0;
    c.sections.push_back(Section::from_u64(
        "pcameta", 1, 1, std::span<const std::uint64_t>(&whiten, 1)));
    write_vgbd(path, c);
}

PcaModel read_pca_model(const std::string& path) {
    const Container c = read_vgbd(path);
    const Section& mean = c.require("mean");
    const Section& comps = c.require("comps");
    const Section& eig = c.require("eigvals");
    PcaModel model;
    auto data = mean.as_f32();
    model.mean.assign(data.begin(), data.end());
    model.components = MatrixF(comps.rows, comps.cols);
    data = comps.as_f32();
    std::copy(data.begin(), data.end(), model.components.data.begin());
    data = eig.as_f32();
    model.eigenvalues.assign(data.begin(), data.end());
    model.whiten = c.require("pcameta").as_u64()[0] != 0;
    if (model.components.rows != model.eigenvalues.size() ||
        model.components.cols != model.mean.size())
        throw_error(ErrorCode::format, path + ": pca sections disagree");
    return model;
}

/***************************************************
 * Manifests
 ***************************************************/

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, const std::string& what,
                    std::size_t row) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw_error(ErrorCode::format, "manifest row " + std::to_string(row) +
                                           ": bad " + what + " '" + s + "'");
    }
}

}  // namespace

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCode::io, "cannot open: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw_error(ErrorCode::format, path + ": empty manifest");
    {
        auto header = split_csv_line(line);
        const std::vector<std::string> expect = {"id", "lat", "lon", "heading",
                                                 "split"};
        if (std::vector<std::string>(header.begin(), header.end()) != expect)
            throw_error(ErrorCode::format,
                        path + ": bad header, expected id,lat,lon,heading,split");
    }

    Manifest m;
    std::unordered_set<std::uint64_t> seen;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 5)
            throw_error(ErrorCode::format,
                        "manifest row " + std::to_string(row_no) +
                            ": expected 5 fields, got " +
                            std::to_string(fields.size()));
        ManifestRow r;
        try {
            r.id = std::stoull(fields[0]);
        } catch (const std::exception&) {
            throw_error(ErrorCode::format, "manifest row " +
                                               std::to_string(row_no) +
                                               ": bad id '" + fields[0] + "'");
        }
        if (!seen.insert(r.id).second)
            throw_error(ErrorCode::collision,
                        "manifest row " + std::to_string(row_no) +
                            ": duplicate id " + std::to_string(r.id));
        r.lat_deg = parse_double(fields[1], "lat", row_no);
        r.lon_deg = parse_double(fields[2], "lon", row_no);
        if (r.lat_deg < -90.0 || r.lat_deg > 90.0)
            throw_error(ErrorCode::out_of_range,
                        "manifest row " + std::to_string(row_no) +
                            ": lat out of range: " + fields[1]);
        if (r.lon_deg < -180.0 || r.lon_deg > 180.0)
            throw_error(ErrorCode::out_of_range,
                        "manifest row " + std::to_string(row_no) +
                            ": lon out of range: " + fields[2]);
        if (!fields[3].empty()) {
            double h = parse_double(fields[3], "heading", row_no);
            if (h < 0.0 || h >= 360.0)
                throw_error(ErrorCode::out_of_range,
                            "manifest row " + std::to_string(row_no) +
                                ": heading out of range: " + fields[3]);
            r.heading_deg = h;
        }
        if (fields[4] == "database")
            r.split = Split::database;
        else if (fields[4] == "query")
            r.split = Split::query;
        else
            throw_error(ErrorCode::format,
                        "manifest row " + std::to_string(row_no) +
                            ": unknown split '" + fields[4] + "'");
        m.rows.push_back(r);
    }
    return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
    std::string buf = "id,lat,lon,heading,split\n";
    char tmp[400];
    for (const auto& r : m.rows) {
        if (r.heading_deg)
            std::snprintf(tmp, sizeof(tmp), "%llu,%.9f,%.9f,%.6f,%s\n",
                          static_cast<unsigned long long>(r.id), r.lat_deg,
                          r.lon_deg, *r.heading_deg,
                          r.split == Split::database ? "database" : "query");
        else
            std::snprintf(tmp, sizeof(tmp), "%llu,%.9f,%.9f,,%s\n",
                          static_cast<unsigned long long>(r.id), r.lat_deg,
                          r.lon_deg,
                          r.split == Split::database ? "database" : "query");
        buf += tmp;
    }
    const std::string tmppath = path + ".tmp";
    {
        std::ofstream out(tmppath, std::ios::binary | std::ios::trunc);
        if (!out) throw_error(ErrorCode::io, "cannot open: " + tmppath);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw_error(ErrorCode::io, "write failed: " + tmppath);
    }
    if (std::rename(tmppath.c_str(), path.c_str()) != 0)
        throw_error(ErrorCode::io, "rename failed: " + path);
}

/***************************************************
 * Synthetic dataset
 ***************************************************/

namespace {

// Local equirectangular approximation: meter offsets -> degree offsets.
// Accurate to well under the planted radii at city scale.
constexpr double kMetersPerDegLat = 111320.0;

double meters_per_deg_lon(double lat_deg) {
    return kMetersPerDegLat * std::cos(lat_deg * M_PI / 180.0);
}

double approx_dist_m(double lat1, double lon1, double lat2, double lon2) {
    const double mid = 0.5 * (lat1 + lat2);
    const double dy = (lat1 - lat2) * kMetersPerDegLat;
    const double dx = (lon1 - lon2) * meters_per_deg_lon(mid);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

SynthDataset synth_generate(const SynthSpec& spec) {
    if (spec.n_places == 0 || spec.n_places > spec.n_db)
        throw_error(ErrorCode::invalid_parameter,
                    "synth: need 1 <= n_places <= n_db");
    if (spec.dim == 0)
        throw_error(ErrorCode::invalid_parameter, "synth: dim must be >= 1");
    if (spec.confusion_rate < 0.0 || spec.confusion_rate > 1.0)
        throw_error(ErrorCode::invalid_parameter,
                    "synth: confusion_rate must be in [0,1]");
    if (spec.bbox.lat_min >= spec.bbox.lat_max ||
        spec.bbox.lon_min >= spec.bbox.lon_max)
        throw_error(ErrorCode::invalid_parameter, "synth: degenerate bbox");

    Rng rng(spec.seed);
    Rng place_rng = rng.fork(1);
    Rng desc_rng = rng.fork(2);
    Rng pose_rng = rng.fork(3);
    Rng heading_rng = rng.fork(4);

    const std::size_t P = spec.n_places;

    // place centers
    std::vector<double> center_lat(P), center_lon(P);
    for (std::size_t p = 0; p < P; ++p) {
        center_lat[p] = spec.bbox.lat_min +
                        place_rng.next_double() *
                            (spec.bbox.lat_max - spec.bbox.lat_min);
        center_lon[p] = spec.bbox.lon_min +
                        place_rng.next_double() *
                            (spec.bbox.lon_max - spec.bbox.lon_min);
    }

    // descriptor prototypes, unit norm
    MatrixF prototypes(P, spec.dim);
    for (std::size_t p = 0; p < P; ++p) {
        float* row = prototypes.row(p);
        for (std::size_t j = 0; j < spec.dim; ++j)
            row[j] = static_cast<float>(desc_rng.gaussian());
        l2_normalize(prototypes.row_span(p));
    }

    // confusion: pair up distant places and share the prototype
    const std::size_t n_pairs =
        static_cast<std::size_t>(spec.confusion_rate * (P / 2));
    if (n_pairs > 0) {
        std::vector<std::size_t> order(P);
        for (std::size_t i = 0; i < P; ++i) order[i] = i;
        for (std::size_t i = P; i > 1; --i)
            std::swap(order[i - 1], order[place_rng.bounded(i)]);
        const double far_m = 4.0 * std::max(spec.place_spread_m, 25.0);
        std::size_t made = 0;
        std::size_t cursor = 0;
        while (made < n_pairs && cursor + 1 < P) {
            const std::size_t a = order[cursor];
            // find a partner far enough away
            std::size_t partner = P;
            for (std::size_t j = cursor + 1; j < P; ++j) {
                const std::size_t b = order[j];
                if (approx_dist_m(center_lat[a], center_lon[a], center_lat[b],
                                  center_lon[b]) > far_m) {
                    partner = j;
                    break;
                }
            }
            if (partner == P) break;
            const std::size_t b = order[partner];
            std::memcpy(prototypes.row(b), prototypes.row(a),
                        spec.dim * sizeof(float));
            order.erase(order.begin() + static_cast<long>(partner));
            ++cursor;
            ++made;
        }
    }

    auto jitter_pose = [&](std::size_t place, double& lat, double& lon) {
        // uniform in a disk of radius place_spread_m
        const double r = spec.place_spread_m * std::sqrt(pose_rng.next_double());
        const double theta = 2.0 * M_PI * pose_rng.next_double();
        lat = center_lat[place] + r * std::sin(theta) / kMetersPerDegLat;
        lon = center_lon[place] +
              r * std::cos(theta) / meters_per_deg_lon(center_lat[place]);
    };

    auto make_item = [&](std::size_t place, std::uint64_t id, Split split,
                         DescriptorSet& set, std::size_t row,
                         Manifest& manifest) {
        float* dst = set.matrix.row(row);
        const float* proto = prototypes.row(place);
        for (std::size_t j = 0; j < spec.dim; ++j)
            dst[j] = proto[j] + static_cast<float>(desc_rng.gaussian() *
                                                   spec.descriptor_noise);
        l2_normalize(set.matrix.row_span(row));
        set.ids[row] = id;

        ManifestRow mr;
        mr.id = id;
        jitter_pose(place, mr.lat_deg, mr.lon_deg);
        mr.heading_deg = heading_rng.next_double() * 360.0;
        if (*mr.heading_deg >= 360.0) mr.heading_deg = 0.0;
        mr.split = split;
        manifest.rows.push_back(mr);
    };

    SynthDataset out;
    out.db.matrix = MatrixF(spec.n_db, spec.dim);
    out.db.ids.resize(spec.n_db);
    out.db.normalized = true;
    out.queries.matrix = MatrixF(spec.n_q, spec.dim);
    out.queries.ids.resize(spec.n_q);
    out.queries.normalized = true;

    // round-robin assignment keeps every place populated with db items
    for (std::size_t i = 0; i < spec.n_db; ++i)
        make_item(i % P, i, Split::database, out.db, i, out.manifest);
    for (std::size_t i = 0; i < spec.n_q; ++i)
        make_item(i % P, spec.n_db + i, Split::query, out.queries, i,
                  out.manifest);
    return out;
}

/***************************************************
 * Results JSONL
 ***************************************************/

void write_results(const std::string& path,
                   const std::vector<SearchResult>& results) {
    std::string buf;
    for (const auto& r : results) {
        nlohmann::json hits = nlohmann::json::array();
        for (const auto& h : r.hits)
            hits.push_back({h.id, static_cast<double>(h.sq_distance)});
        nlohmann::json line;
        line["query"] = r.query_id;
        line["hits"] = hits;
        buf += line.dump();
        buf += '\n';
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw_error(ErrorCode::io, "cannot open: " + tmp);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw_error(ErrorCode::io, "write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw_error(ErrorCode::io, "rename failed: " + path);
}

std::vector<SearchResult> read_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCode::io, "cannot open: " + path);
    std::vector<SearchResult> results;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw_error(ErrorCode::format,
                        path + " line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        if (!j.is_object() || !j.contains("query") || !j.contains("hits") ||
            !j["hits"].is_array())
            throw_error(ErrorCode::format,
                        path + " line " + std::to_string(line_no) +
                            ": expected {\"query\":..., \"hits\":[...]}");
        SearchResult r;
        r.query_id = j["query"].get<std::uint64_t>();
        for (const auto& h : j["hits"]) {
            if (!h.is_array() || h.size() != 2)
                throw_error(ErrorCode::format,
                            path + " line " + std::to_string(line_no) +
                                ": hit must be [id, sq_dist]");
            r.hits.push_back({h[0].get<std::uint64_t>(),
                              static_cast<float>(h[1].get<double>())});
        }
        r.k_requested = r.hits.size();
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace vgb
