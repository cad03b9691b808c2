#include "gazekit/recording.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include <opencv2/imgcodecs.hpp>

#include "gazekit/error.hpp"

namespace gazekit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json camera_to_json(const CameraIntrinsics& c) {
    return {{"width", c.width},
            {"height", c.height},
            {"focal_length", c.focal_length},
            {"principal_point", {c.principal_point.x(), c.principal_point.y()}}};
}

CameraIntrinsics camera_from_json(const json& j) {
    CameraIntrinsics c;
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    c.focal_length = j.at("focal_length").get<double>();
    const auto& pp = j.at("principal_point");
    c.principal_point = Vec2(pp.at(0).get<double>(), pp.at(1).get<double>());
    return c;
}

json event_to_json(const ProtocolEvent& e) {
    json j{{"target_index", e.target_index},
           {"target_pos", {e.target_pos.x(), e.target_pos.y(), e.target_pos.z()}},
           {"start", e.start},
           {"end", e.end},
           {"samples_expected", e.samples_expected}};
    if (e.kind == EventKind::Assessment) j["repeat"] = e.repeat;
    return j;
}

ProtocolEvent event_from_json(const json& j, EventKind kind) {
    ProtocolEvent e;
    e.kind = kind;
    e.target_index = j.at("target_index").get<int>();
    e.repeat = j.value("repeat", 0);
    const auto& p = j.at("target_pos");
    e.target_pos = Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    e.start = j.at("start").get<double>();
    e.end = j.at("end").get<double>();
    e.samples_expected = j.value("samples_expected", 0);
    if (!(e.end > e.start)) throw Error(ErrorKind::BadRecord, "event " + e.id() + " has an empty window");
    return e;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && *first == ' ') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) throw Error(ErrorKind::BadRecord, "cannot parse '" + s + "' in " + where);
    return v;
}

std::optional<Ellipse> parse_ellipse(const std::vector<std::string>& f, std::size_t at, const std::string& where) {
    int empty = 0;
    for (std::size_t i = at; i < at + 5; ++i) empty += f[i].empty() ? 1 : 0;
    if (empty == 5) return std::nullopt;
    if (empty != 0) throw Error(ErrorKind::BadRecord, "partially missing ellipse in " + where);
    const Ellipse e = Ellipse::make(Vec2(parse_double(f[at], where), parse_double(f[at + 1], where)),
                                    parse_double(f[at + 2], where), parse_double(f[at + 3], where),
                                    parse_double(f[at + 4], where));
    if (!e.valid()) throw Error(ErrorKind::BadRecord, "invalid ellipse in " + where);
    return e;
}

void put_ellipse(std::string& line, const std::optional<Ellipse>& e) {
    if (!e) {
        line += ",,,,,";
        return;
    }
    for (double v : {e->center.x(), e->center.y(), e->semi_major, e->semi_minor, e->angle}) {
        line += ',';
        line += format_exact(v);
    }
}

std::ofstream open_out(const fs::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + file.string());
    return out;
}

void check_increasing(const std::vector<double>& ts, const std::string& stream) {
    for (std::size_t i = 1; i < ts.size(); ++i) {
        if (!(ts[i] > ts[i - 1])) {
            throw Error(ErrorKind::BadTimestamps,
                        stream + " timestamps not strictly increasing at index " + std::to_string(i));
        }
    }
}

void check_windows(const SessionMeta& meta, const std::vector<double>& ts, const std::string& stream) {
    auto covered = [&](const ProtocolEvent& ev) {
        const auto it = std::lower_bound(ts.begin(), ts.end(), ev.start);
        return it != ts.end() && ev.contains(*it);
    };
    for (const auto* list : {&meta.calibration, &meta.assessment}) {
        for (const auto& ev : *list) {
            if (!covered(ev))
                throw Error(ErrorKind::EmptyWindow, "window " + ev.id() + " has no " + stream + " samples");
        }
    }
}

} // namespace

std::string format_exact(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string frame_file_name(std::size_t index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "frame_%06zu.%s", index, ext);
    return buf;
}

cv::Mat Recording::load_frame(std::size_t index) const {
    const fs::path p = root / "frames" / frame_file_name(index, "pgm");
    cv::Mat m = cv::imread(p.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw Error(ErrorKind::IoError, "cannot read " + p.string());
    return m;
}

SegMask Recording::load_mask(std::size_t index) const {
    const fs::path p = root / "masks" / frame_file_name(index, "png");
    cv::Mat m = cv::imread(p.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw Error(ErrorKind::IoError, "cannot read " + p.string());
    return SegMask(m);
}

void write_meta(const fs::path& file, const SessionMeta& meta) {
    json j;
    j["schema_version"] = meta.schema_version;
    j["subject_id"] = meta.subject_id;
    j["resolution"] = meta.resolution;
    j["eye_camera"] = camera_to_json(meta.eye_cam);
    j["world_camera"] = camera_to_json(meta.world_cam);
    j["calibration"] = json::array();
    for (const auto& e : meta.calibration) j["calibration"].push_back(event_to_json(e));
    j["assessment"] = json::array();
    for (const auto& e : meta.assessment) j["assessment"].push_back(event_to_json(e));
    auto out = open_out(file);
    out << j.dump(2) << '\n';
}

SessionMeta read_meta(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::MissingMeta, "no meta document at " + file.string());
    SessionMeta m;
    try {
        const json j = json::parse(in);
        m.schema_version = j.at("schema_version").get<int>();
        if (m.schema_version != kMetaSchemaVersion) {
            throw Error(ErrorKind::BadRecord, "unsupported schema_version " + std::to_string(m.schema_version));
        }
        m.subject_id = j.value("subject_id", file.parent_path().filename().string());
        m.eye_cam = camera_from_json(j.at("eye_camera"));
        m.world_cam = camera_from_json(j.at("world_camera"));
        m.resolution = j.value("resolution", std::to_string(m.eye_cam.width) + "x" + std::to_string(m.eye_cam.height));
        for (const auto& e : j.at("calibration")) m.calibration.push_back(event_from_json(e, EventKind::Calibration));
        for (const auto& e : j.at("assessment")) m.assessment.push_back(event_from_json(e, EventKind::Assessment));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::BadRecord, "malformed meta " + file.string() + ": " + e.what());
    }
    try {
        m.eye_cam.validate();
        m.world_cam.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::BadRecord, std::string("meta camera: ") + e.what());
    }
    return m;
}

void write_ellipses(const fs::path& file, const std::vector<EllipseRecord>& records) {
    auto out = open_out(file);
    out << "frame_index,timestamp_s,pupil_cx,pupil_cy,pupil_a,pupil_b,pupil_theta,"
           "iris_cx,iris_cy,iris_a,iris_b,iris_theta,confidence\n";
    std::string line;
    for (const auto& r : records) {
        line = std::to_string(r.frame_index) + ',' + format_exact(r.timestamp);
        put_ellipse(line, r.pupil);
        put_ellipse(line, r.iris);
        line += ',';
        if (r.confidence) line += format_exact(*r.confidence);
        out << line << '\n';
    }
}

std::vector<EllipseRecord> read_ellipses(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::IoError, "cannot read " + file.string());
    std::vector<EllipseRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.rfind("frame_index", 0) == 0) continue;
        if (line.empty() || line == "\r") continue;
        const std::string where = file.filename().string() + ":" + std::to_string(lineno);
        auto f = split(line);
        if (f.size() == 7) f.resize(13); // pupil only
        if (f.size() != 13) throw Error(ErrorKind::BadRecord, "expected 13 fields in " + where);
        EllipseRecord r;
        r.frame_index = static_cast<long>(parse_double(f[0], where));
        r.timestamp = parse_double(f[1], where);
        r.pupil = parse_ellipse(f, 2, where);
        r.iris = parse_ellipse(f, 7, where);
        if (!f[12].empty()) r.confidence = parse_double(f[12], where);
        out.push_back(r);
    }
    return out;
}

void write_timestamps(const fs::path& file, const std::vector<double>& ts) {
    auto out = open_out(file);
    for (double t : ts) out << format_exact(t) << '\n';
}

std::vector<double> read_timestamps(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::BadRecord, "missing " + file.string());
    std::vector<double> ts;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ts.push_back(parse_double(line, file.filename().string() + ":" + std::to_string(lineno)));
    }
    return ts;
}

Recording ingest_recording(const fs::path& dir) {
    Recording r;
    r.root = dir;
    r.meta = read_meta(dir / "meta.json");

    if (fs::exists(dir / "ellipses.csv")) {
        r.ellipses = read_ellipses(dir / "ellipses.csv");
        r.has_ellipses = true;
        std::vector<double> ts;
        ts.reserve(r.ellipses.size());
        for (const auto& e : r.ellipses) ts.push_back(e.timestamp);
        check_increasing(ts, "ellipse");
        check_windows(r.meta, ts, "ellipse");
    }
    if (fs::is_directory(dir / "frames")) {
        r.frame_timestamps = read_timestamps(dir / "frames" / "timestamps.txt");
        r.has_frames = true;
        check_increasing(r.frame_timestamps, "frame");
        check_windows(r.meta, r.frame_timestamps, "frame");
    }
    if (fs::is_directory(dir / "masks")) {
        r.mask_timestamps = read_timestamps(dir / "masks" / "timestamps.txt");
        r.has_masks = true;
        check_increasing(r.mask_timestamps, "mask");
        check_windows(r.meta, r.mask_timestamps, "mask");
    }
    if (!r.has_ellipses && !r.has_frames && !r.has_masks)
        throw Error(ErrorKind::BadRecord, "no ellipses.csv, frames/ or masks/ in " + dir.string());
    return r;
}

} // namespace gazekit
