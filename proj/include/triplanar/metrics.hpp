#pragma once
// Agreement and classification metrics between two label sources.
// Rows of a confusion matrix index source A (the reference when evaluating
// a classifier), columns index source B.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "triplanar/volume.hpp"

namespace triplanar {

struct MetricsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfusionMatrix {
    int k = 0;
    std::vector<std::int64_t> counts; // k*k row-major

    explicit ConfusionMatrix(int classes = kNumClasses)
        : k(classes), counts(static_cast<std::size_t>(classes) * classes, 0) {
        if (classes < 1) throw MetricsError("confusion matrix needs at least one class");
    }

    std::int64_t& at(int a, int b) { return counts[static_cast<std::size_t>(a) * k + b]; }
    std::int64_t at(int a, int b) const { return counts[static_cast<std::size_t>(a) * k + b]; }

    std::int64_t total() const {
        std::int64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
    std::int64_t trace() const {
        std::int64_t t = 0;
        for (int i = 0; i < k; ++i) t += at(i, i);
        return t;
    }
    std::int64_t row_sum(int a) const {
        std::int64_t t = 0;
        for (int b = 0; b < k; ++b) t += at(a, b);
        return t;
    }
    std::int64_t col_sum(int b) const {
        std::int64_t t = 0;
        for (int a = 0; a < k; ++a) t += at(a, b);
        return t;
    }
    ConfusionMatrix transposed() const {
        ConfusionMatrix t(k);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) t.at(b, a) = at(a, b);
        return t;
    }
};

inline ConfusionMatrix confusion_from_labels(const std::vector<int>& a, const std::vector<int>& b,
                                             int k) {
    if (a.size() != b.size())
        throw MetricsError("label sequences differ in length: " + std::to_string(a.size()) +
                           " vs " + std::to_string(b.size()));
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 0 || a[i] >= k || b[i] < 0 || b[i] >= k)
            throw MetricsError("unknown label index at position " + std::to_string(i));
        ++cm.at(a[i], b[i]);
    }
    return cm;
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
};

struct ClassificationReport {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    double mean_f = 0.0; // unweighted mean over classes
};

// Empty denominators yield 0 (small runs can lack predictions for a class).
inline ClassificationReport classification_metrics(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    if (total == 0) throw MetricsError("empty confusion matrix");
    ClassificationReport r;
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    r.per_class.resize(static_cast<std::size_t>(cm.k));
    double f_sum = 0.0;
    for (int c = 0; c < cm.k; ++c) {
        const std::int64_t col = cm.col_sum(c), row = cm.row_sum(c), diag = cm.at(c, c);
        ClassMetrics& m = r.per_class[static_cast<std::size_t>(c)];
        m.precision = col > 0 ? static_cast<double>(diag) / static_cast<double>(col) : 0.0;
        m.recall = row > 0 ? static_cast<double>(diag) / static_cast<double>(row) : 0.0;
        m.f_measure = (m.precision + m.recall) > 0.0
                          ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                          : 0.0;
        f_sum += m.f_measure;
    }
    r.mean_f = f_sum / cm.k;
    return r;
}

inline double f_measure(double precision, double recall) {
    return (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

struct KappaResult {
    double kappa = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_observed = 0.0;
    double p_expected = 0.0;
};

// Cohen's kappa with the large-sample 95% confidence interval
// SE = sqrt(p_o (1 - p_o) / (n (1 - p_e)^2)), CI clamped to [-1, 1].
inline KappaResult cohen_kappa_ci(const ConfusionMatrix& cm) {
    const double total = static_cast<double>(cm.total());
    if (total == 0.0) throw MetricsError("empty confusion matrix");
    KappaResult r;
    r.p_observed = static_cast<double>(cm.trace()) / total;
    r.p_expected = 0.0;
    for (int c = 0; c < cm.k; ++c)
        r.p_expected += static_cast<double>(cm.row_sum(c)) * static_cast<double>(cm.col_sum(c)) /
                        (total * total);
    if (r.p_expected >= 1.0 - 1e-15)
        throw MetricsError("kappa undefined: expected agreement is 1 (degenerate marginals)");
    r.kappa = (r.p_observed - r.p_expected) / (1.0 - r.p_expected);
    const double se =
        std::sqrt(r.p_observed * (1.0 - r.p_observed) /
                  (total * (1.0 - r.p_expected) * (1.0 - r.p_expected)));
    r.ci_low = std::max(-1.0, r.kappa - 1.96 * se);
    r.ci_high = std::min(1.0, r.kappa + 1.96 * se);
    return r;
}

// ---------------------------------------------------------------------------
// Observer label files: "nodule_id,label" per line, '#' comments. The label
// vocabulary is the six nodule types plus "not_a_nodule" (index 6).
// ---------------------------------------------------------------------------

inline constexpr int kNotANodule = kNumClasses; // index 6

struct ObserverLabels {
    std::vector<std::string> ids;
    std::vector<int> labels;          // 0..5 nodule types, 6 = not a nodule
    bool has_not_a_nodule = false;

    int num_classes() const { return has_not_a_nodule ? kNumClasses + 1 : kNumClasses; }
};

inline int parse_observer_label(const std::string& token) {
    NoduleLabel l;
    if (parse_label(token, l)) return static_cast<int>(l);
    if (token == "not_a_nodule" || token == "not-a-nodule") return kNotANodule;
    return -1;
}

inline ObserverLabels read_observer_labels(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw MetricsError("observer label file not found: " + path);
    ObserverLabels out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw MetricsError("observer label line " + std::to_string(line_no) +
                               ": expected 'id,label'");
        std::string id = line.substr(0, comma);
        std::string token = line.substr(comma + 1);
        auto trim = [](std::string& s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
        };
        trim(id);
        trim(token);
        const int label = parse_observer_label(token);
        if (label < 0)
            throw MetricsError("observer label line " + std::to_string(line_no) +
                               ": unknown label token '" + token + "'");
        out.ids.push_back(id);
        out.labels.push_back(label);
        if (label == kNotANodule) out.has_not_a_nodule = true;
    }
    return out;
}

// Align a label file to a given id order (manifest order). Every id must be
// present exactly once.
inline std::vector<int> ingest_observer_labels(const std::string& path,
                                               const std::vector<std::string>& expected_ids,
                                               bool* has_not_a_nodule = nullptr) {
    ObserverLabels raw = read_observer_labels(path);
    std::map<std::string, int> by_id;
    for (std::size_t i = 0; i < raw.ids.size(); ++i) {
        if (by_id.count(raw.ids[i]))
            throw MetricsError("observer label file has duplicate id '" + raw.ids[i] + "'");
        by_id[raw.ids[i]] = raw.labels[i];
    }
    std::vector<int> aligned;
    aligned.reserve(expected_ids.size());
    for (const auto& id : expected_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw MetricsError("observer label file is missing id '" + id + "'");
        aligned.push_back(it->second);
    }
    if (has_not_a_nodule) *has_not_a_nodule = raw.has_not_a_nodule;
    return aligned;
}

} // namespace triplanar
