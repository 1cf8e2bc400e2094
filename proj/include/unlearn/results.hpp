#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "unlearn/eval.hpp"

namespace unlearn {

inline nlohmann::json record_to_json(const RunRecord& r) {
    return {{"run_id", r.run_id},
            {"method", r.method},
            {"mixture", r.mixture},
            {"backbone", r.backbone},
            {"augmentation", r.augmentation},
            {"train_acc", r.train_acc},
            {"test_acc", r.test_acc},
            {"final_test_acc", r.final_test_acc},
            {"seed", r.seed},
            {"wall_seconds", r.wall_seconds},
            {"diverged", r.diverged}};
}

inline RunRecord record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.run_id = j.value("run_id", "");
    r.method = j.value("method", "");
    r.mixture = j.value("mixture", "");
    r.backbone = j.value("backbone", "");
    r.augmentation = j.value("augmentation", "");
    r.train_acc = j.value("train_acc", std::vector<real>{});
    r.test_acc = j.value("test_acc", std::vector<real>{});
    r.final_test_acc = j.value("final_test_acc", 0.0);
    r.seed = j.value("seed", std::uint64_t{0});
    r.wall_seconds = j.value("wall_seconds", 0.0);
    r.diverged = j.value("diverged", false);
    return r;
}

/// Appends one record per line; the results file is an append-only log.
inline void append_records(const std::string& path, const std::vector<RunRecord>& records) {
    std::ofstream f(path, std::ios::app);
    if (!f) throw std::runtime_error("append_records: cannot open " + path);
    for (const auto& r : records) f << record_to_json(r).dump() << "\n";
}

inline std::vector<RunRecord> read_records(const std::string& path) {
    std::vector<RunRecord> out;
    std::ifstream f(path);
    if (!f) return out; // a missing/empty log is an empty report
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("results: bad JSON at " + path + ":" +
                                     std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

/// Markdown table of final test accuracies, one row per (method, mixture,
/// backbone, augmentation) group, mean over seeds.
inline std::string render_markdown(const std::vector<RunRecord>& records) {
    std::ostringstream os;
    os << "| method | mixture | backbone | augmentation | runs | final test acc |\n";
    os << "|---|---|---|---|---|---|\n";
    std::map<std::string, std::pair<int, real>> groups;
    for (const auto& r : records) {
        const std::string key =
            r.method + "|" + r.mixture + "|" + r.backbone + "|" + r.augmentation;
        auto& g = groups[key];
        g.first += 1;
        g.second += r.final_test_acc;
    }
    for (const auto& [key, g] : groups) {
        std::istringstream ss(key);
        std::string method, mixture, backbone, aug;
        std::getline(ss, method, '|');
        std::getline(ss, mixture, '|');
        std::getline(ss, backbone, '|');
        std::getline(ss, aug, '|');
        os << "| " << method << " | " << mixture << " | " << backbone << " | " << aug << " | "
           << g.first << " | " << std::fixed << std::setprecision(4) << g.second / g.first
           << " |\n";
    }
    return os.str();
}

inline std::string render_csv(const std::vector<RunRecord>& records) {
    std::ostringstream os;
    os << "run_id,method,mixture,backbone,augmentation,seed,final_test_acc,epochs,max_test_acc\n";
    auto quote = [](const std::string& s) {
        std::string q = "\"";
        for (char ch : s) {
            if (ch == '"') q += "\"\"";
            else q += ch;
        }
        return q + "\"";
    };
    for (const auto& r : records) {
        os << quote(r.run_id) << ',' << quote(r.method) << ',' << quote(r.mixture) << ','
           << quote(r.backbone) << ',' << quote(r.augmentation) << ',' << r.seed << ','
           << r.final_test_acc << ',' << r.test_acc.size() << ',' << r.max_test_acc() << "\n";
    }
    return os.str();
}

/// Accuracy-curve plot: one polyline per record, test accuracy vs epoch.
inline void plot_curves_png(const std::vector<RunRecord>& records, const std::string& path,
                            int width = 800, int height = 500) {
    cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
    const int margin = 50;
    const int ploth = height - 2 * margin, plotw = width - 2 * margin;
    cv::rectangle(img, {margin, margin}, {margin + plotw, margin + ploth}, {0, 0, 0}, 1);
    for (int tick = 0; tick <= 10; tick += 2) {
        const int y = margin + ploth - tick * ploth / 10;
        cv::putText(img, cv::format("%.1f", tick / 10.0), {6, y + 4}, cv::FONT_HERSHEY_SIMPLEX,
                    0.4, {0, 0, 0});
        cv::line(img, {margin - 3, y}, {margin, y}, {0, 0, 0});
    }
    std::size_t max_epochs = 1;
    for (const auto& r : records) max_epochs = std::max(max_epochs, r.test_acc.size());
    const std::vector<cv::Scalar> palette = {{180, 60, 40},  {40, 120, 200}, {60, 160, 60},
                                             {30, 30, 200},  {160, 40, 160}, {20, 140, 160},
                                             {100, 100, 20}, {0, 0, 0}};
    int idx = 0;
    for (const auto& r : records) {
        if (r.test_acc.empty()) continue;
        const cv::Scalar color = palette[static_cast<std::size_t>(idx) % palette.size()];
        cv::Point prev;
        for (std::size_t e = 0; e < r.test_acc.size(); ++e) {
            const int x = margin + static_cast<int>(
                                       plotw * (max_epochs == 1
                                                    ? 0.0
                                                    : static_cast<double>(e) / (max_epochs - 1)));
            const int y = margin + ploth - static_cast<int>(ploth * r.test_acc[e]);
            const cv::Point pt{x, y};
            if (e) cv::line(img, prev, pt, color, 2, cv::LINE_AA);
            prev = pt;
        }
        const std::string label = r.method + "/" + r.backbone + "/" + r.augmentation;
        cv::putText(img, label, {margin + 8, margin + 16 + 16 * idx}, cv::FONT_HERSHEY_SIMPLEX,
                    0.42, color, 1, cv::LINE_AA);
        ++idx;
    }
    cv::putText(img, "epoch", {width / 2 - 20, height - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                {0, 0, 0});
    if (!cv::imwrite(path, img)) throw std::runtime_error("plot_curves_png: cannot write " + path);
}

} // namespace unlearn
