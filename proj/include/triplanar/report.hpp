#pragma once
// Report emission: every evaluation artifact is written twice, as
// machine-readable key=value text and as a human-readable table. The
// embedding command also renders an SVG scatter with per-class colors.

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "triplanar/metrics.hpp"

namespace triplanar {

inline const char* class_token(int k) {
    if (k < kNumClasses) return to_string(static_cast<NoduleLabel>(k));
    return "not_a_nodule";
}

inline void write_kv(std::ostream& os, const std::string& key, double value) {
    os << key << '=' << std::setprecision(12) << value << '\n';
}

inline std::string machine_report(const ConfusionMatrix& cm, const ClassificationReport& r,
                                  std::size_t error_count = 0) {
    std::ostringstream os;
    write_kv(os, "accuracy", r.accuracy);
    write_kv(os, "mean_f", r.mean_f);
    for (int c = 0; c < cm.k; ++c) {
        const std::string name = class_token(c);
        write_kv(os, "precision_" + name, r.per_class[static_cast<std::size_t>(c)].precision);
        write_kv(os, "recall_" + name, r.per_class[static_cast<std::size_t>(c)].recall);
        write_kv(os, "f_" + name, r.per_class[static_cast<std::size_t>(c)].f_measure);
    }
    for (int a = 0; a < cm.k; ++a)
        for (int b = 0; b < cm.k; ++b)
            os << "confusion_" << class_token(a) << '_' << class_token(b) << '=' << cm.at(a, b)
               << '\n';
    os << "evaluation_errors=" << error_count << '\n';
    return os.str();
}

inline std::string human_report(const ConfusionMatrix& cm, const ClassificationReport& r,
                                std::size_t error_count = 0) {
    std::ostringstream os;
    os << "Confusion matrix (rows = reference, columns = predicted)\n";
    os << std::setw(14) << ' ';
    for (int b = 0; b < cm.k; ++b) os << std::setw(13) << class_token(b);
    os << '\n';
    for (int a = 0; a < cm.k; ++a) {
        os << std::setw(14) << class_token(a);
        for (int b = 0; b < cm.k; ++b) os << std::setw(13) << cm.at(a, b);
        os << '\n';
    }
    os << '\n';
    os << std::fixed << std::setprecision(1);
    os << "Accuracy: " << 100.0 * r.accuracy << "%    mean F: " << 100.0 * r.mean_f << "%\n\n";
    os << std::setw(14) << "class" << std::setw(12) << "precision" << std::setw(12) << "recall"
       << std::setw(12) << "F-measure" << '\n';
    for (int c = 0; c < cm.k; ++c)
        os << std::setw(14) << class_token(c) << std::setw(11)
           << 100.0 * r.per_class[static_cast<std::size_t>(c)].precision << '%' << std::setw(11)
           << 100.0 * r.per_class[static_cast<std::size_t>(c)].recall << '%' << std::setw(11)
           << 100.0 * r.per_class[static_cast<std::size_t>(c)].f_measure << '%' << '\n';
    if (error_count > 0) os << "\nrecords skipped due to errors: " << error_count << '\n';
    return os.str();
}

inline std::string machine_kappa_report(const KappaResult& k, std::int64_t total, int classes) {
    std::ostringstream os;
    write_kv(os, "kappa", k.kappa);
    write_kv(os, "ci_low", k.ci_low);
    write_kv(os, "ci_high", k.ci_high);
    write_kv(os, "p_observed", k.p_observed);
    write_kv(os, "p_expected", k.p_expected);
    os << "items=" << total << '\n';
    os << "classes=" << classes << '\n';
    return os.str();
}

inline std::string human_kappa_report(const KappaResult& k, std::int64_t total, int classes) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "Cohen kappa: " << k.kappa << " (95% CI " << k.ci_low << " -- " << k.ci_high << ")\n";
    os << std::setprecision(4);
    os << "observed agreement:  " << k.p_observed << '\n';
    os << "expected agreement:  " << k.p_expected << '\n';
    os << "items: " << total << ", classes: " << classes
       << (classes == kNumClasses + 1 ? " (includes not-a-nodule)" : "") << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Embedding outputs
// ---------------------------------------------------------------------------

struct EmbeddingPoint {
    std::string id;
    double x = 0.0;
    double y = 0.0;
    int label = 0;
};

inline void save_embedding_csv(const std::vector<EmbeddingPoint>& points,
                               const std::string& path) {
    std::ofstream os(path);
    if (!os) throw MetricsError("cannot open for writing: " + path);
    os << "# id,x,y,label\n";
    os.precision(10);
    for (const auto& p : points)
        os << p.id << ',' << p.x << ',' << p.y << ',' << class_token(p.label) << '\n';
}

inline void save_embedding_svg(const std::vector<EmbeddingPoint>& points,
                               const std::string& path) {
    static const std::array<const char*, 7> colors = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                                                      "#ff7f0e", "#8c564b", "#7f7f7f"};
    double min_x = 0, max_x = 1, min_y = 0, max_y = 1;
    if (!points.empty()) {
        min_x = max_x = points[0].x;
        min_y = max_y = points[0].y;
        for (const auto& p : points) {
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
    }
    const double w = 720, h = 640, margin = 40, legend_h = 24;
    const double span_x = std::max(max_x - min_x, 1e-9), span_y = std::max(max_y - min_y, 1e-9);

    std::ofstream os(path);
    if (!os) throw MetricsError("cannot open for writing: " + path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
       << h + legend_h << "\" viewBox=\"0 0 " << w << ' ' << h + legend_h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os.precision(6);
    for (const auto& p : points) {
        const double px = margin + (p.x - min_x) / span_x * (w - 2 * margin);
        const double py = margin + (p.y - min_y) / span_y * (h - 2 * margin);
        os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"4\" fill=\""
           << colors[static_cast<std::size_t>(p.label % 7)] << "\" fill-opacity=\"0.75\">"
           << "<title>" << p.id << " (" << class_token(p.label) << ")</title></circle>\n";
    }
    double lx = margin;
    for (int c = 0; c < 7; ++c) {
        bool used = false;
        for (const auto& p : points)
            if (p.label == c) used = true;
        if (!used) continue;
        os << "<circle cx=\"" << lx << "\" cy=\"" << h + 10 << "\" r=\"5\" fill=\""
           << colors[static_cast<std::size_t>(c)] << "\"/>\n";
        os << "<text x=\"" << lx + 10 << "\" y=\"" << h + 14
           << "\" font-family=\"sans-serif\" font-size=\"13\">" << class_token(c) << "</text>\n";
        lx += 110;
    }
    os << "</svg>\n";
}

} // namespace triplanar
