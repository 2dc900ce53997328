#pragma once

#include <algorithm>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fairaudit/csv.hpp"
#include "fairaudit/embedding_store.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/projection.hpp"
#include "fairaudit/types.hpp"

namespace fairaudit {

enum class ColorAttribute { race, gender, age_bin };

inline std::string to_string(ColorAttribute a) {
    switch (a) {
        case ColorAttribute::race: return "race";
        case ColorAttribute::gender: return "gender";
        default: return "age_bin";
    }
}

namespace detail {

// Fixed palette; legend order follows the enum orders so figures are
// comparable across runs.
inline const std::vector<std::string>& palette() {
    static const std::vector<std::string> colors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                    "#9467bd", "#8c564b"};
    return colors;
}

inline std::vector<std::string> attribute_labels(ColorAttribute attr) {
    std::vector<std::string> labels;
    if (attr == ColorAttribute::race)
        for (const char* r : kRaceNames) labels.emplace_back(r);
    else if (attr == ColorAttribute::gender)
        for (const char* g : kGenderNames) labels.emplace_back(g);
    else
        for (const char* a : kAgeBinLabels) labels.emplace_back(a);
    return labels;
}

inline std::size_t attribute_index(const SampleAnnotation& a, ColorAttribute attr) {
    switch (attr) {
        case ColorAttribute::race: return static_cast<std::size_t>(a.race);
        case ColorAttribute::gender: return static_cast<std::size_t>(a.gender);
        default: return static_cast<std::size_t>(a.age_bin);
    }
}

} // namespace detail

// Self-contained 800x800 SVG scatter of a 2-D projection, one marker per
// point colored by the chosen annotation attribute, legend included.
inline std::string projection_svg(const Projection2D& proj, const AnnotatedCohort& cohort,
                                  ColorAttribute attr) {
    const std::size_t n = proj.ids.size();
    require_input(n > 0, "cannot plot an empty projection");

    double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
    double min_y = min_x, max_y = -min_x;
    for (std::size_t i = 0; i < n; ++i) {
        min_x = std::min(min_x, proj.x(i));
        max_x = std::max(max_x, proj.x(i));
        min_y = std::min(min_y, proj.y(i));
        max_y = std::max(max_y, proj.y(i));
    }
    const double span_x = max_x - min_x > 0 ? max_x - min_x : 1.0;
    const double span_y = max_y - min_y > 0 ? max_y - min_y : 1.0;
    constexpr double size = 800.0, margin = 60.0;
    const double scale = (size - 2 * margin) / std::max(span_x, span_y);

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" "
           "viewBox=\"0 0 800 800\">\n";
    out << "<rect width=\"800\" height=\"800\" fill=\"white\"/>\n";
    out << "<text x=\"20\" y=\"30\" font-family=\"sans-serif\" font-size=\"18\">" << to_string(proj.method)
        << " projection, colored by " << to_string(attr) << "</text>\n";

    const auto& colors = detail::palette();
    for (std::size_t i = 0; i < n; ++i) {
        const SampleAnnotation& a = cohort.annotation_of(proj.ids[i]);
        const std::size_t ci = detail::attribute_index(a, attr);
        const double px = margin + (proj.x(i) - min_x) * scale;
        const double py = size - margin - (proj.y(i) - min_y) * scale;
        out << "<circle cx=\"" << csv::format_fixed(px, 2) << "\" cy=\"" << csv::format_fixed(py, 2)
            << "\" r=\"3\" fill=\"" << colors[ci % colors.size()] << "\" fill-opacity=\"0.8\"/>\n";
    }

    const auto labels = detail::attribute_labels(attr);
    for (std::size_t k = 0; k < labels.size(); ++k) {
        const double ly = 50.0 + 22.0 * static_cast<double>(k);
        out << "<rect x=\"660\" y=\"" << csv::format_fixed(ly, 1) << "\" width=\"14\" height=\"14\" fill=\""
            << colors[k % colors.size()] << "\"/>\n";
        out << "<text x=\"680\" y=\"" << csv::format_fixed(ly + 12.0, 1)
            << "\" font-family=\"sans-serif\" font-size=\"14\">" << labels[k] << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

// Coordinates CSV: `sample_id,x,y,<attribute>`.
inline std::string projection_csv(const Projection2D& proj, const AnnotatedCohort& cohort,
                                  ColorAttribute attr) {
    std::ostringstream out;
    out << "sample_id,x,y," << to_string(attr) << '\n';
    for (std::size_t i = 0; i < proj.ids.size(); ++i) {
        const SampleAnnotation& a = cohort.annotation_of(proj.ids[i]);
        std::string value;
        if (attr == ColorAttribute::race)
            value = to_string(a.race);
        else if (attr == ColorAttribute::gender)
            value = to_string(a.gender);
        else
            value = std::to_string(a.age_bin);
        out << proj.ids[i] << ',' << csv::format_full(proj.x(i)) << ',' << csv::format_full(proj.y(i)) << ','
            << value << '\n';
    }
    return out.str();
}

} // namespace fairaudit
