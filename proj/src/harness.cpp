#include "gazekit/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "gazekit/metrics.hpp"
#include "gazekit/recording.hpp"

namespace gazekit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kMetrics{"dropout_rate", "err_acc", "err_prec"};
const std::vector<int> kRings{0, 10, 15, 20};

std::string recording_name(const fs::path& p) {
    fs::path n = p.lexically_normal();
    if (n.filename().empty()) n = n.parent_path();
    return n.filename().string();
}

std::string cell_key(const std::string& rec, DetectorKind d, GazerKind g) {
    return rec + "__" + to_string(d) + "__" + to_string(g);
}

std::ofstream open_out(const fs::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + file.string());
    return out;
}

std::string opt_exact(const std::optional<double>& v) { return v ? format_exact(*v) : ""; }
std::string opt_sig6(const std::optional<double>& v) { return v ? format_sig6(*v) : ""; }

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::optional<double> opt_parse(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
}

void write_cell(const fs::path& dir, const CellResult& cell) {
    fs::create_directories(dir);
    json j;
    j["recording"] = cell.recording;
    j["subject"] = cell.subject;
    j["resolution"] = cell.resolution;
    j["detector"] = to_string(cell.detector);
    j["gazer"] = to_string(cell.gazer);
    j["calibration_pairs"] = cell.calibration_pairs;
    j["calibration_residual"] = cell.calibration_residual;
    if (cell.model) {
        const auto& m = *cell.model;
        j["eye_model"] = {{"center", {m.center.x(), m.center.y(), m.center.z()}},
                          {"eyeball_radius", m.eyeball_radius},
                          {"fit_rms", m.fit_rms},
                          {"converged", m.converged},
                          {"iterations", m.iterations},
                          {"selection_flips", m.selection_flips},
                          {"observations_used", m.n_used}};
    }
    open_out(dir / "cell.json") << j.dump(2) << '\n';

    auto groups = open_out(dir / "groups.csv");
    groups << "target_index,repeat,eccentricity,truth_az,truth_el,n_samples,n_retained,dropout_rate,err_acc,err_prec\n";
    auto samples = open_out(dir / "samples.csv");
    samples << "target_index,repeat,timestamp_s,error_deg\n";
    for (const auto& g : cell.groups) {
        groups << g.target_index << ',' << g.repeat << ',' << g.eccentricity << ',' << format_exact(g.truth.azimuth)
               << ',' << format_exact(g.truth.elevation) << ',' << g.metrics.n_total << ',' << g.metrics.n_retained
               << ',' << format_exact(g.metrics.dropout_rate) << ',' << opt_exact(g.metrics.err_acc) << ','
               << opt_exact(g.metrics.err_prec) << '\n';
        for (std::size_t i = 0; i < g.errors.size(); ++i) {
            samples << g.target_index << ',' << g.repeat << ',' << format_exact(g.timestamps[i]) << ','
                    << opt_exact(g.errors[i]) << '\n';
        }
    }
}

struct StoredCell {
    std::string recording, subject, resolution, detector, gazer;
    struct Group {
        int target_index, repeat, eccentricity;
        double truth_az, truth_el;
        int n_samples, n_retained;
        double dropout_rate;
        std::optional<double> err_acc, err_prec;
    };
    std::vector<Group> groups;
    std::vector<std::optional<double>> errors;
};

std::vector<StoredCell> read_cells(const fs::path& results_dir) {
    const fs::path cells = results_dir / "cells";
    std::vector<fs::path> dirs;
    if (fs::is_directory(cells))
        for (const auto& e : fs::directory_iterator(cells))
            if (e.is_directory() && fs::exists(e.path() / "cell.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());

    std::vector<StoredCell> out;
    for (const auto& d : dirs) {
        StoredCell c;
        try {
            std::ifstream in(d / "cell.json");
            const json j = json::parse(in);
            c.recording = j.at("recording").get<std::string>();
            c.subject = j.at("subject").get<std::string>();
            c.resolution = j.at("resolution").get<std::string>();
            c.detector = j.at("detector").get<std::string>();
            c.gazer = j.at("gazer").get<std::string>();

            std::ifstream g(d / "groups.csv");
            std::string line;
            std::getline(g, line);
            while (std::getline(g, line)) {
                if (line.empty()) continue;
                const auto f = split(line);
                if (f.size() != 10) throw Error(ErrorKind::BadRecord, "bad row in " + (d / "groups.csv").string());
                c.groups.push_back({std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3]),
                                    std::stod(f[4]), std::stoi(f[5]), std::stoi(f[6]), std::stod(f[7]),
                                    opt_parse(f[8]), opt_parse(f[9])});
            }
            std::ifstream s(d / "samples.csv");
            std::getline(s, line);
            while (std::getline(s, line)) {
                if (line.empty()) continue;
                const auto f = split(line);
                if (f.size() != 4) throw Error(ErrorKind::BadRecord, "bad row in " + (d / "samples.csv").string());
                c.errors.push_back(opt_parse(f[3]));
            }
        } catch (const json::exception& e) {
            throw Error(ErrorKind::BadRecord, "malformed " + (d / "cell.json").string() + ": " + e.what());
        } catch (const std::logic_error& e) {
            throw Error(ErrorKind::BadRecord, "malformed cell in " + d.string() + ": " + e.what());
        }
        out.push_back(std::move(c));
    }
    return out;
}

// --- SVG -------------------------------------------------------------------

struct Series {
    std::string name;
    std::vector<double> x, y, lo, hi;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string svg_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series, double xmin, double xmax, const std::vector<double>& xticks) {
    constexpr double W = 640, H = 420, L = 70, R = 190, T = 40, B = 55;
    double ymin = 0.0, ymax = 0.0;
    for (const auto& s : series) {
        for (double v : s.y) ymax = std::max(ymax, v);
        for (double v : s.hi) ymax = std::max(ymax, v);
    }
    if (ymax <= 0) ymax = 1.0;
    ymax *= 1.1;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 - R / 2 + L / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
      << "</text>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (double t : xticks) {
        o << "<line x1=\"" << format_sig6(px(t)) << "\" y1=\"" << H - B << "\" x2=\"" << format_sig6(px(t))
          << "\" y2=\"" << H - B + 5 << "\" stroke=\"black\"/>";
        o << "<text x=\"" << format_sig6(px(t)) << "\" y=\"" << H - B + 19 << "\" text-anchor=\"middle\">"
          << format_sig6(t) << "</text>\n";
    }
    for (int i = 0; i <= 5; ++i) {
        const double v = ymin + (ymax - ymin) * i / 5.0;
        o << "<line x1=\"" << L - 5 << "\" y1=\"" << format_sig6(py(v)) << "\" x2=\"" << W - R << "\" y2=\""
          << format_sig6(py(v)) << "\" stroke=\"#ddd\"/>";
        o << "<text x=\"" << L - 8 << "\" y=\"" << format_sig6(py(v) + 4) << "\" text-anchor=\"end\">"
          << format_sig6(std::round(v * 1000) / 1000) << "</text>\n";
    }
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xlabel
      << "</text>\n";
    o << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel
      << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kPalette[k % std::size(kPalette)];
        if (!s.lo.empty()) {
            o << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i) o << format_sig6(px(s.x[i])) << ',' << format_sig6(py(s.hi[i])) << ' ';
            for (std::size_t i = s.x.size(); i-- > 0;) o << format_sig6(px(s.x[i])) << ',' << format_sig6(py(s.lo[i])) << ' ';
            o << "\"/>\n";
        }
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) o << format_sig6(px(s.x[i])) << ',' << format_sig6(py(s.y[i])) << ' ';
        o << "\"/>\n";
        if (s.x.size() <= 8)
            for (std::size_t i = 0; i < s.x.size(); ++i)
                o << "<circle cx=\"" << format_sig6(px(s.x[i])) << "\" cy=\"" << format_sig6(py(s.y[i]))
                  << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        const double ly = T + 10 + 18.0 * static_cast<double>(k);
        o << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
        o << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << s.name << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

struct Combo {
    std::string detector, gazer, resolution;
    auto operator<=>(const Combo&) const = default;
    std::string label() const { return detector + " / " + gazer + " / " + resolution; }
};

std::map<Combo, std::vector<SweepPoint>> sweeps(const std::vector<StoredCell>& cells, double max_deg, double step) {
    std::map<Combo, std::vector<std::optional<double>>> pooled;
    for (const auto& c : cells) {
        auto& v = pooled[{c.detector, c.gazer, c.resolution}];
        v.insert(v.end(), c.errors.begin(), c.errors.end());
    }
    std::map<Combo, std::vector<SweepPoint>> out;
    for (const auto& [combo, errs] : pooled) {
        auto curve = threshold_sweep(errs, max_deg, step);
        for (std::size_t i = 1; i < curve.size(); ++i)
            if (curve[i].retained_pct < curve[i - 1].retained_pct)
                throw Error(ErrorKind::BadRecord, "retention curve is not monotone for " + combo.label());
        out[combo] = std::move(curve);
    }
    return out;
}

void write_sweep(const fs::path& dir, const std::map<Combo, std::vector<SweepPoint>>& curves, double max_deg) {
    auto csv = open_out(dir / "threshold_sweep.csv");
    csv << "detector,gazer,resolution,threshold_deg,retained_pct\n";
    std::vector<Series> series;
    for (const auto& [combo, curve] : curves) {
        Series s;
        s.name = combo.label();
        for (const auto& p : curve) {
            csv << combo.detector << ',' << combo.gazer << ',' << combo.resolution << ',' << format_sig6(p.threshold)
                << ',' << format_sig6(p.retained_pct) << '\n';
            s.x.push_back(p.threshold);
            s.y.push_back(p.retained_pct);
        }
        series.push_back(std::move(s));
    }
    fs::create_directories(dir / "plots");
    std::vector<double> ticks;
    for (double t = 0; t <= max_deg + 1e-9; t += std::max(1.0, std::round(max_deg / 10))) ticks.push_back(t);
    open_out(dir / "plots" / "retention.svg")
        << svg_chart("Data retained by dropout threshold", "dropout threshold (deg)", "retained (%)", series, 0.0,
                     max_deg, ticks);
}

} // namespace

std::string format_sig6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
    return buf;
}

void RunConfig::validate() const {
    if (recordings.empty()) throw Error(ErrorKind::ConfigError, "no recordings given");
    if (detectors.empty()) throw Error(ErrorKind::ConfigError, "no detectors given");
    if (gazers.empty()) throw Error(ErrorKind::ConfigError, "no gazers given");
    if (output_dir.empty()) throw Error(ErrorKind::ConfigError, "no output directory given");
    if (workers < 1) throw Error(ErrorKind::ConfigError, "workers must be >= 1");
    if (!(options.dropout_threshold >= 0)) throw Error(ErrorKind::ConfigError, "dropout threshold must be >= 0");
    std::set<std::string> names;
    for (const auto& r : recordings)
        if (!names.insert(recording_name(r)).second)
            throw Error(ErrorKind::ConfigError, "two recordings share the name " + recording_name(r));
    try {
        for (const auto& [res, p] : options.detector_params) p.validate();
        options.model_filter.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, e.what());
    }
}

RunConfig load_run_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot read config " + file.string());
    RunConfig cfg;
    try {
        const json j = json::parse(in);
        const fs::path base = file.parent_path();
        for (const auto& r : j.value("recordings", json::array())) {
            const fs::path p = r.get<std::string>();
            cfg.recordings.push_back(p.is_absolute() ? p : base / p);
        }
        for (const auto& d : j.value("detectors", json::array())) cfg.detectors.push_back(parse_detector(d.get<std::string>()));
        for (const auto& g : j.value("gazers", json::array())) cfg.gazers.push_back(parse_gazer(g.get<std::string>()));
        if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
        cfg.workers = j.value("workers", 1);
        auto& o = cfg.options;
        o.dropout_threshold = j.value("dropout_threshold", 10.0);
        const std::string dist = j.value("distance", std::string("flat"));
        if (dist == "flat") o.distance = DistanceMode::Flat;
        else if (dist == "great-circle") o.distance = DistanceMode::GreatCircle;
        else throw Error(ErrorKind::ConfigError, "unknown distance '" + dist + "'");
        o.raw_calibration_samples = j.value("raw_calibration_samples", false);
        if (j.contains("detector_params")) {
            for (const auto& [res, pj] : j["detector_params"].items()) {
                DetectorParams p = res == "*" ? DetectorParams{} : [&] {
                    const auto x = res.find('x');
                    if (x == std::string::npos) throw Error(ErrorKind::ConfigError, "bad resolution key '" + res + "'");
                    return DetectorParams::for_resolution(std::stoi(res.substr(0, x)), std::stoi(res.substr(x + 1)));
                }();
                p.intensity_range = pj.value("intensity_range", p.intensity_range);
                p.pupil_size_min = pj.value("pupil_size_min", p.pupil_size_min);
                p.pupil_size_max = pj.value("pupil_size_max", p.pupil_size_max);
                p.confidence_floor = pj.value("confidence_floor", p.confidence_floor);
                p.iou_threshold = pj.value("iou_threshold", p.iou_threshold);
                o.detector_params[res] = p;
            }
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            o.eyeball_radius = m.value("eyeball_radius", o.eyeball_radius);
            o.pupil_radius_prior = m.value("pupil_radius_prior", o.pupil_radius_prior);
            o.model_filter.max_aspect_ratio = m.value("max_aspect_ratio", o.model_filter.max_aspect_ratio);
            o.model_filter.min_confidence = m.value("min_confidence", o.model_filter.min_confidence);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigError, "malformed config " + file.string() + ": " + e.what());
    } catch (const std::logic_error& e) {
        throw Error(ErrorKind::ConfigError, "malformed config " + file.string() + ": " + e.what());
    }
    return cfg;
}

RunSummary run_matrix(const RunConfig& cfg) {
    cfg.validate();
    std::vector<Recording> recs;
    for (const auto& p : cfg.recordings) recs.push_back(ingest_recording(p));

    const fs::path cells_dir = cfg.output_dir / "cells";
    fs::remove_all(cells_dir);
    fs::create_directories(cells_dir);

    // One slot per recording so the merge below is independent of scheduling.
    std::vector<std::vector<CellError>> errors(recs.size());
    std::vector<int> ok(recs.size(), 0);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < recs.size(); i = next++) {
            const auto& rec = recs[i];
            const std::string name = recording_name(cfg.recordings[i]);
            for (auto det : cfg.detectors) {
                std::vector<PupilObservation> stream;
                std::optional<CellError> detect_error;
                try {
                    stream = detect_stream(rec, det, cfg.options.params_for(rec.meta));
                } catch (const Error& e) {
                    detect_error = CellError{name, to_string(det), "", e.kind(), e.what()};
                } catch (const std::exception& e) {
                    detect_error = CellError{name, to_string(det), "", ErrorKind::BadRecord, e.what()};
                }
                for (auto gaz : cfg.gazers) {
                    if (detect_error) {
                        auto err = *detect_error;
                        err.gazer = to_string(gaz);
                        errors[i].push_back(err);
                        continue;
                    }
                    try {
                        auto cell = evaluate_stream(rec.meta, stream, gaz, cfg.options);
                        cell.recording = name;
                        cell.detector = det;
                        write_cell(cells_dir / cell_key(name, det, gaz), cell);
                        ++ok[i];
                    } catch (const Error& e) {
                        errors[i].push_back({name, to_string(det), to_string(gaz), e.kind(), e.what()});
                    } catch (const std::exception& e) {
                        errors[i].push_back({name, to_string(det), to_string(gaz), ErrorKind::BadRecord, e.what()});
                    }
                }
            }
        }
    };
    const int n_threads = std::min<int>(cfg.workers, static_cast<int>(recs.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    RunSummary summary;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        summary.cells_ok += ok[i];
        summary.errors.insert(summary.errors.end(), errors[i].begin(), errors[i].end());
    }
    auto out = open_out(cfg.output_dir / "errors.csv");
    out << "recording,detector,gazer,error_kind,message\n";
    for (const auto& e : summary.errors) {
        std::string msg = e.message;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        out << e.recording << ',' << e.detector << ',' << e.gazer << ',' << to_string(e.kind) << ',' << msg << '\n';
    }
    out.close();
    if (summary.cells_ok > 0) emit_report(cfg.output_dir);
    return summary;
}

void emit_report(const fs::path& results_dir) {
    const auto cells = read_cells(results_dir);
    if (cells.empty()) throw Error(ErrorKind::BadRecord, "no completed cells under " + results_dir.string());

    std::vector<MetricRecord> records;
    {
        auto out = open_out(results_dir / "per_group.csv");
        out << "recording,subject,resolution,detector,gazer,target_index,repeat,eccentricity,truth_az,truth_el,"
               "n_samples,n_retained,dropout_rate,err_acc,err_prec\n";
        for (const auto& c : cells) {
            for (const auto& g : c.groups) {
                out << c.recording << ',' << c.subject << ',' << c.resolution << ',' << c.detector << ',' << c.gazer
                    << ',' << g.target_index << ',' << g.repeat << ',' << g.eccentricity << ','
                    << format_sig6(g.truth_az) << ',' << format_sig6(g.truth_el) << ',' << g.n_samples << ','
                    << g.n_retained << ',' << format_sig6(g.dropout_rate) << ',' << opt_sig6(g.err_acc) << ','
                    << opt_sig6(g.err_prec) << '\n';
                const MetricRecord base{c.detector, c.gazer, c.resolution, g.eccentricity, c.subject, "", {}};
                auto r = base;
                r.metric = "dropout_rate";
                r.value = g.dropout_rate;
                records.push_back(r);
                r.metric = "err_acc";
                r.value = g.err_acc;
                records.push_back(r);
                r.metric = "err_prec";
                r.value = g.err_prec;
                records.push_back(r);
            }
        }
    }

    {
        auto out = open_out(results_dir / "summary.csv");
        out << "detector,gazer,resolution,metric,mean,std_error,n_subjects\n";
        for (const auto& r : aggregate(records, false))
            out << r.detector << ',' << r.gazer << ',' << r.resolution << ',' << r.metric << ','
                << format_sig6(r.mean) << ',' << format_sig6(r.std_error) << ',' << r.n_subjects << '\n';
    }

    const auto by_ecc = aggregate(records, true);
    {
        auto out = open_out(results_dir / "summary_by_eccentricity.csv");
        out << "detector,gazer,resolution,eccentricity,metric,mean,std_error,ci95,n_subjects\n";
        for (const auto& r : by_ecc)
            out << r.detector << ',' << r.gazer << ',' << r.resolution << ',' << *r.eccentricity << ',' << r.metric
                << ',' << format_sig6(r.mean) << ',' << format_sig6(r.std_error) << ',' << format_sig6(r.ci95) << ','
                << r.n_subjects << '\n';
    }

    fs::create_directories(results_dir / "plots");
    const std::map<std::string, std::pair<std::string, std::string>> titles{
        {"dropout_rate", {"Dropout rate by eccentricity", "dropout rate"}},
        {"err_acc", {"Accuracy error by eccentricity", "accuracy error (deg)"}},
        {"err_prec", {"Precision error by eccentricity", "precision error (deg)"}},
    };
    for (const auto& metric : kMetrics) {
        std::map<Combo, Series> series;
        for (const auto& r : by_ecc) {
            if (r.metric != metric) continue;
            auto& s = series[{r.detector, r.gazer, r.resolution}];
            s.name = Combo{r.detector, r.gazer, r.resolution}.label();
            s.x.push_back(*r.eccentricity);
            s.y.push_back(r.mean);
            s.lo.push_back(r.mean - r.ci95);
            s.hi.push_back(r.mean + r.ci95);
        }
        std::vector<Series> list;
        for (auto& [k, s] : series) list.push_back(std::move(s));
        const auto& [title, ylabel] = titles.at(metric);
        open_out(results_dir / "plots" / (metric + ".svg"))
            << svg_chart(title, "eccentricity (deg)", ylabel, list, -1.0, 21.0,
                         std::vector<double>(kRings.begin(), kRings.end()));
    }

    write_sweep(results_dir, sweeps(cells, 50.0, 1.0), 50.0);
}

void emit_sweep(const fs::path& results_dir, double max_deg, double step_deg) {
    const auto cells = read_cells(results_dir);
    if (cells.empty()) throw Error(ErrorKind::BadRecord, "no completed cells under " + results_dir.string());
    write_sweep(results_dir, sweeps(cells, max_deg, step_deg), max_deg);
}

} // namespace gazekit
