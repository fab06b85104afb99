#include "moodval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "moodval/error.hpp"

namespace moodval {

nlohmann::json to_json(const MetricReport& r) {
  return {{"ccc", r.ccc},
          {"pcc", r.pcc},
          {"mean_video_ccc", r.mean_video_ccc},
          {"n_frames", r.n_frames},
          {"per_video", r.per_video}};
}

void write_predictions(const std::vector<Prediction>& predictions, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : predictions) {
    out << nlohmann::json{{"video_id", p.video_id}, {"frame", p.frame}, {"y", p.y}, {"y_hat", p.y_hat}}
               .dump()
        << "\n";
  }
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      for (const auto& [key, value] : j.items()) {
        if (key != "video_id" && key != "frame" && key != "y" && key != "y_hat") {
          throw ParseError(path.string(), lineno, "unknown key '" + key + "'");
        }
      }
      Prediction p{j.at("video_id").get<std::string>(), j.at("frame").get<std::size_t>(),
                   j.at("y").get<double>(), j.at("y_hat").get<double>()};
      if (!std::isfinite(p.y) || !std::isfinite(p.y_hat)) {
        throw ParseError(path.string(), lineno, "non-finite value");
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

std::string valence_trace_svg(const std::string& video_id, std::span<const Prediction> series) {
  constexpr double kW = 640, kH = 240, kPad = 30;
  std::size_t f0 = series.empty() ? 0 : series.front().frame;
  std::size_t f1 = series.empty() ? 1 : series.back().frame;
  for (const auto& p : series) {
    f0 = std::min(f0, p.frame);
    f1 = std::max(f1, p.frame);
  }
  const double span = f1 > f0 ? static_cast<double>(f1 - f0) : 1.0;
  auto x = [&](std::size_t f) { return kPad + (kW - 2 * kPad) * static_cast<double>(f - f0) / span; };
  auto y = [&](double v) { return kPad + (kH - 2 * kPad) * (1.0 - (std::clamp(v, -1.0, 1.0) + 1.0) / 2.0); };
  auto line = [&](bool prediction) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    for (const auto& p : series) s << x(p.frame) << "," << y(prediction ? p.y_hat : p.y) << " ";
    return s.str();
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kPad << "\" y=\"18\">" << video_id << ": valence, ground truth (black) vs prediction (red)</text>\n"
      << "<line x1=\"" << kPad << "\" y1=\"" << y(0) << "\" x2=\"" << kW - kPad << "\" y2=\"" << y(0)
      << "\" stroke=\"#bbb\" stroke-dasharray=\"4\"/>\n"
      << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kW - 2 * kPad << "\" height=\""
      << kH - 2 * kPad << "\" fill=\"none\" stroke=\"#888\"/>\n"
      << "<text x=\"4\" y=\"" << y(1) + 4 << "\">+1</text><text x=\"4\" y=\"" << y(-1) + 4 << "\">-1</text>\n"
      << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.2\" points=\"" << line(false) << "\"/>\n"
      << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.2\" points=\"" << line(true) << "\"/>\n"
      << "</svg>\n";
  return svg.str();
}

void write_eval_artifacts(const EvalResult& result, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "plots");
  {
    std::ofstream out(dir / "report.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "report.json").string());
    out << to_json(result.report).dump(2) << "\n";
  }
  write_predictions(result.predictions, dir / "predictions.jsonl");
  std::map<std::string, std::vector<Prediction>> by_video;
  for (const auto& p : result.predictions) by_video[p.video_id].push_back(p);
  for (auto& [id, series] : by_video) {
    std::sort(series.begin(), series.end(),
              [](const Prediction& a, const Prediction& b) { return a.frame < b.frame; });
    std::ofstream out(dir / "plots" / (id + ".svg"), std::ios::trunc);
    if (!out) throw IoError("cannot write plot for " + id);
    out << valence_trace_svg(id, series);
  }
}

std::vector<ReportRow> build_report(const std::vector<TrainHistory>& histories, bool group_seeds) {
  using Key = std::tuple<std::string, std::string, std::string, std::size_t>;
  std::map<Key, std::vector<std::pair<const TrainHistory*, const EpochRecord*>>> groups;
  std::size_t serial = 0;
  for (const auto& h : histories) {
    if (h.epochs.empty()) throw ValidationError("history for " + h.header.model + " has no epochs");
    const auto best = std::max_element(h.epochs.begin(), h.epochs.end(),
                                       [](const EpochRecord& a, const EpochRecord& b) {
                                         return a.val_ccc < b.val_ccc;
                                       });
    Key key{h.header.model, h.header.attention, h.header.placement, h.header.frames_per_clip};
    if (!group_seeds) std::get<0>(key) += "#" + std::to_string(serial++);
    groups[key].emplace_back(&h, &*best);
  }
  std::vector<ReportRow> rows;
  for (const auto& [key, members] : groups) {
    ReportRow row;
    row.model = members.front().first->header.model;
    row.attention = std::get<1>(key);
    row.placement = std::get<2>(key);
    row.frames_per_clip = std::get<3>(key);
    row.runs = members.size();
    for (const auto& [h, rec] : members) {
      row.seeds.push_back(h->header.seed);
      row.ccc += rec->val_ccc;
      row.pcc += rec->val_pcc;
    }
    const double n = static_cast<double>(members.size());
    row.ccc /= n;
    row.pcc /= n;
    double var = 0.0;
    for (const auto& [h, rec] : members) var += (rec->val_ccc - row.ccc) * (rec->val_ccc - row.ccc);
    row.ccc_std = std::sqrt(var / n);
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ReportRow& a, const ReportRow& b) { return a.ccc > b.ccc; });
  return rows;
}

namespace {
std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}
}  // namespace

std::string render_table(const std::vector<ReportRow>& rows, TableFormat format) {
  std::ostringstream out;
  if (format == TableFormat::csv) {
    out << "model,attention,placement,frames_per_clip,runs,ccc,ccc_std,pcc\n";
    for (const auto& r : rows) {
      out << r.model << "," << r.attention << "," << r.placement << "," << r.frames_per_clip
          << "," << r.runs << "," << fixed(r.ccc) << "," << fixed(r.ccc_std) << "," << fixed(r.pcc)
          << "\n";
    }
    return out.str();
  }
  out << "| Model | Attention | Placement | n | Runs | CCC | CCC std | PCC |\n"
      << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.model << " | " << r.attention << " | " << r.placement << " | "
        << r.frames_per_clip << " | " << r.runs << " | " << fixed(r.ccc) << " | "
        << fixed(r.ccc_std) << " | " << fixed(r.pcc) << " |\n";
  }
  return out.str();
}

}  // namespace moodval
