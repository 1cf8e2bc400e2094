#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "unlearn/data.hpp"

// Image decode/encode goes through OpenCV; everything downstream works on
// {c,h,w} tensors in [0,1], RGB channel order.

namespace unlearn {

namespace detail {

inline Tensor mat_to_tensor(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    Tensor t({3, rgb.rows, rgb.cols});
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* row = rgb.ptr<unsigned char>(y);
        for (int x = 0; x < rgb.cols; ++x) {
            for (int c = 0; c < 3; ++c) {
                t.at3(c, y, x) = static_cast<real>(row[x * 3 + c]) / 255.0;
            }
        }
    }
    return t;
}

inline cv::Mat tensor_to_mat(const Tensor& t) {
    if (t.ndim() != 3) throw std::invalid_argument("tensor_to_mat: expected {c,h,w}");
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    cv::Mat rgb(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        auto* row = rgb.ptr<unsigned char>(y);
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                const real v = t.at3(c == 1 ? 0 : ch, y, x);
                row[x * 3 + ch] = static_cast<unsigned char>(
                    std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
            }
        }
    }
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    return bgr;
}

inline bool has_image_extension(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

} // namespace detail

/// Decodes one image file, resizes to (height, width), returns {3,h,w} in [0,1].
inline Tensor load_image(const std::string& path, int height, int width) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw std::runtime_error("load_image: cannot decode " + path);
    if (img.rows != height || img.cols != width) {
        cv::Mat resized;
        cv::resize(img, resized, cv::Size(width, height), 0, 0, cv::INTER_AREA);
        img = resized;
    }
    return detail::mat_to_tensor(img);
}

inline void save_image_png(const std::string& path, const Tensor& image) {
    if (!cv::imwrite(path, detail::tensor_to_mat(image))) {
        throw std::runtime_error("save_image_png: cannot write " + path);
    }
}

/// Loads a directory tree `root/<class_name>/<images>`. Class index is the
/// rank of class_name under lexicographic sort; item order is lexicographic
/// by full path, so two loads of the same tree are identical.
inline Dataset load_dataset(const std::string& root, int height, int width) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) {
        throw std::invalid_argument("load_dataset: " + root + " is not a directory");
    }
    std::vector<std::string> class_names;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
    }
    std::sort(class_names.begin(), class_names.end());
    if (class_names.empty()) {
        throw std::invalid_argument("load_dataset: no class subdirectories under " + root);
    }

    Dataset ds;
    ds.class_count = static_cast<int>(class_names.size());
    ds.name = fs::path(root).filename().string();
    ds.provenance = Provenance::natural;

    for (int k = 0; k < ds.class_count; ++k) {
        const fs::path cls_dir = fs::path(root) / class_names[static_cast<std::size_t>(k)];
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(cls_dir)) {
            if (entry.is_regular_file() && detail::has_image_extension(entry.path())) {
                files.push_back(entry.path().string());
            }
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) {
            throw std::invalid_argument("load_dataset: class directory '" +
                                        class_names[static_cast<std::size_t>(k)] + "' is empty");
        }
        for (const auto& f : files) {
            LabeledImage item;
            item.label = k;
            try {
                item.pixels = load_image(f, height, width);
            } catch (const std::exception& e) {
                throw std::runtime_error(std::string("load_dataset: ") + e.what());
            }
            ds.items.push_back(std::move(item));
        }
    }
    return ds;
}

/// Writes a dataset back out in the same tree format (`root/<class>/NNNNNN.png`).
/// Pixels are quantized to 8 bits; class directories are named by index.
inline void export_dataset(const Dataset& ds, const std::string& root) {
    namespace fs = std::filesystem;
    fs::create_directories(root);
    std::vector<int> counters(static_cast<std::size_t>(ds.class_count), 0);
    for (const auto& item : ds.items) {
        const fs::path dir = fs::path(root) / ("class_" + std::to_string(item.label));
        fs::create_directories(dir);
        char name[32];
        std::snprintf(name, sizeof(name), "%06d.png", counters[static_cast<std::size_t>(item.label)]++);
        save_image_png((dir / name).string(), item.pixels);
    }
}

/// Round-trips every pixel through the 8-bit grid (round(v*255)/255). This is
/// what an exported-then-reloaded dataset would contain; the evaluation
/// harness can run on either representation.
inline Dataset quantize_dataset(const Dataset& ds) {
    Dataset out = ds;
    for (auto& item : out.items) {
        for (std::size_t i = 0; i < item.pixels.size(); ++i) {
            item.pixels[i] = std::lround(item.pixels[i] * 255.0) / 255.0;
        }
    }
    return out;
}

} // namespace unlearn
