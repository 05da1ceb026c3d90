#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "haarkit/cascade.hpp"
#include "haarkit/errors.hpp"
#include "haarkit/fmt.hpp"

namespace haarkit {
namespace {

constexpr int kFormatVersion = 1;

void json_escape(std::ostream& out, const std::string& s) {
    out << '"';
    for (char c : s) {
        switch (c) {
            case '"': out << "\\\""; break;
            case '\\': out << "\\\\"; break;
            case '\n': out << "\\n"; break;
            case '\t': out << "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out << buf;
                } else {
                    out << c;
                }
        }
    }
    out << '"';
}

// Hand-rolled emitter: keys in sorted order, two-space indent, %.17g floats.
// nlohmann's writer uses shortest-round-trip float formatting, which is
// correct but not the pinned canonical form.
void write_stump(std::ostream& out, const WeakClassifier& stump, const std::string& ind) {
    out << ind << "{\n";
    out << ind << "  \"alpha\": " << format_g17(stump.alpha) << ",\n";
    out << ind << "  \"feature\": {\n";
    out << ind << "    \"kind\": \"" << feature_kind_name(stump.feature.kind) << "\",\n";
    out << ind << "    \"rects\": [";
    for (std::uint8_t i = 0; i < stump.feature.rect_count; ++i) {
        const WeightedRect& wr = stump.feature.rects[i];
        if (i) out << ", ";
        out << '[' << wr.rect.x << ", " << wr.rect.y << ", " << wr.rect.w << ", " << wr.rect.h << ", "
            << format_g17(wr.weight) << ']';
    }
    out << "]\n";
    out << ind << "  },\n";
    out << ind << "  \"polarity\": " << stump.polarity << ",\n";
    out << ind << "  \"threshold\": " << format_g17(stump.threshold) << "\n";
    out << ind << "}";
}

void check_feature_fits(const HaarFeature& f, int side, const char* what) {
    const int want = feature_kind_rects(f.kind);
    if (f.rect_count != want) {
        throw CascadeIoError(CascadeIoErrorKind::MalformedField,
                             std::string(what) + ": kind " + feature_kind_name(f.kind) + " expects " +
                                 std::to_string(want) + " rects, got " + std::to_string(f.rect_count));
    }
    double wsum = 0.0;
    for (const WeightedRect& wr : f.rect_span()) {
        const Rect& r = wr.rect;
        if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 || r.x + r.w > side || r.y + r.h > side) {
            throw CascadeIoError(CascadeIoErrorKind::InvariantViolation,
                                 std::string(what) + ": rect outside the base window");
        }
        wsum += wr.weight;
    }
    if (wsum != 0.0) {
        throw CascadeIoError(CascadeIoErrorKind::InvariantViolation,
                             std::string(what) + ": feature weights sum to " + format_g17(wsum) + ", want 0");
    }
}

void check_invariants(const Cascade& c, const char* what) {
    if (c.base_window.side < 4) {
        throw CascadeIoError(CascadeIoErrorKind::InvariantViolation, std::string(what) + ": base window too small");
    }
    if (c.stages.empty()) {
        throw CascadeIoError(CascadeIoErrorKind::InvariantViolation, std::string(what) + ": cascade has no stages");
    }
    for (const StrongClassifier& stage : c.stages) {
        if (stage.stumps.empty()) {
            throw CascadeIoError(CascadeIoErrorKind::InvariantViolation, std::string(what) + ": stage has no stumps");
        }
        double alpha_sum = 0.0;
        for (const WeakClassifier& stump : stage.stumps) {
            if (!(stump.alpha >= 0.0) || !std::isfinite(stump.alpha)) {
                throw CascadeIoError(CascadeIoErrorKind::InvariantViolation,
                                     std::string(what) + ": stump alpha must be finite and >= 0");
            }
            if (stump.polarity != 1 && stump.polarity != -1) {
                throw CascadeIoError(CascadeIoErrorKind::MalformedField,
                                     std::string(what) + ": polarity must be +1 or -1");
            }
            if (!std::isfinite(stump.threshold)) {
                throw CascadeIoError(CascadeIoErrorKind::MalformedField,
                                     std::string(what) + ": threshold must be finite");
            }
            check_feature_fits(stump.feature, c.base_window.side, what);
            alpha_sum += stump.alpha;
        }
        if (stage.stage_threshold > alpha_sum) {
            throw CascadeIoError(CascadeIoErrorKind::InvariantViolation,
                                 std::string(what) + ": stage threshold exceeds the alpha sum");
        }
    }
}

using nlohmann::json;

const json& field(const json& obj, const char* key, const char* ctx) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        throw CascadeIoError(CascadeIoErrorKind::MalformedField,
                             std::string("cascade file: missing field '") + key + "' in " + ctx);
    }
    return *it;
}

template <class T>
T as(const json& v, const char* key, const char* ctx) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw CascadeIoError(CascadeIoErrorKind::MalformedField,
                             std::string("cascade file: field '") + key + "' in " + ctx + " has the wrong type");
    }
}

}  // namespace

std::string cascade_to_string(const Cascade& c) {
    check_invariants(c, "save_cascade");
    std::ostringstream out;
    out << "{\n";
    out << "  \"base_window\": " << c.base_window.side << ",\n";
    out << "  \"format_version\": " << kFormatVersion << ",\n";
    out << "  \"metadata\": {";
    bool first = true;
    for (const auto& [k, v] : c.metadata) {  // std::map iterates key-sorted
        out << (first ? "\n" : ",\n") << "    ";
        json_escape(out, k);
        out << ": ";
        json_escape(out, v);
        first = false;
    }
    out << (first ? "" : "\n  ") << "},\n";
    out << "  \"stages\": [\n";
    for (std::size_t s = 0; s < c.stages.size(); ++s) {
        const StrongClassifier& stage = c.stages[s];
        out << "    {\n";
        out << "      \"stage_threshold\": " << format_g17(stage.stage_threshold) << ",\n";
        out << "      \"stumps\": [\n";
        for (std::size_t t = 0; t < stage.stumps.size(); ++t) {
            write_stump(out, stage.stumps[t], "        ");
            out << (t + 1 < stage.stumps.size() ? ",\n" : "\n");
        }
        out << "      ]\n";
        out << "    }" << (s + 1 < c.stages.size() ? ",\n" : "\n");
    }
    out << "  ]\n";
    out << "}\n";
    return out.str();
}

Cascade cascade_from_string(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw CascadeIoError(CascadeIoErrorKind::MalformedField, std::string("cascade file: unparsable JSON: ") + e.what());
    }
    if (!root.is_object()) {
        throw CascadeIoError(CascadeIoErrorKind::MalformedField, "cascade file: top level must be an object");
    }
    const int version = as<int>(field(root, "format_version", "top level"), "format_version", "top level");
    if (version != kFormatVersion) {
        throw CascadeIoError(CascadeIoErrorKind::VersionMismatch,
                             "cascade file: format_version " + std::to_string(version) + ", this build reads " +
                                 std::to_string(kFormatVersion));
    }

    Cascade c;
    c.base_window.side = as<int>(field(root, "base_window", "top level"), "base_window", "top level");

    const json& meta = field(root, "metadata", "top level");
    if (!meta.is_object()) {
        throw CascadeIoError(CascadeIoErrorKind::MalformedField, "cascade file: metadata must be an object");
    }
    for (const auto& [k, v] : meta.items()) {
        c.metadata[k] = as<std::string>(v, k.c_str(), "metadata");
    }

    const json& stages = field(root, "stages", "top level");
    if (!stages.is_array()) {
        throw CascadeIoError(CascadeIoErrorKind::MalformedField, "cascade file: stages must be an array");
    }
    for (const json& jstage : stages) {
        StrongClassifier stage;
        stage.stage_threshold =
            as<double>(field(jstage, "stage_threshold", "stage"), "stage_threshold", "stage");
        const json& jstumps = field(jstage, "stumps", "stage");
        if (!jstumps.is_array()) {
            throw CascadeIoError(CascadeIoErrorKind::MalformedField, "cascade file: stumps must be an array");
        }
        for (const json& jstump : jstumps) {
            WeakClassifier stump;
            stump.alpha = as<double>(field(jstump, "alpha", "stump"), "alpha", "stump");
            stump.polarity = as<int>(field(jstump, "polarity", "stump"), "polarity", "stump");
            stump.threshold = as<double>(field(jstump, "threshold", "stump"), "threshold", "stump");
            const json& jfeat = field(jstump, "feature", "stump");
            const std::string kind_name = as<std::string>(field(jfeat, "kind", "feature"), "kind", "feature");
            try {
                stump.feature.kind = feature_kind_from_name(kind_name);
            } catch (const DataError&) {
                throw CascadeIoError(CascadeIoErrorKind::MalformedField,
                                     "cascade file: unknown feature kind '" + kind_name + "'");
            }
            const json& jrects = field(jfeat, "rects", "feature");
            if (!jrects.is_array() || jrects.size() < 2 || jrects.size() > 4) {
                throw CascadeIoError(CascadeIoErrorKind::MalformedField,
                                     "cascade file: rects must be an array of 2..4 entries");
            }
            for (const json& jr : jrects) {
                if (!jr.is_array() || jr.size() != 5) {
                    throw CascadeIoError(CascadeIoErrorKind::MalformedField,
                                         "cascade file: each rect must be [x, y, w, h, weight]");
                }
                WeightedRect wr;
                wr.rect.x = as<int>(jr[0], "rect.x", "rect");
                wr.rect.y = as<int>(jr[1], "rect.y", "rect");
                wr.rect.w = as<int>(jr[2], "rect.w", "rect");
                wr.rect.h = as<int>(jr[3], "rect.h", "rect");
                wr.weight = as<double>(jr[4], "rect.weight", "rect");
                stump.feature.rects[stump.feature.rect_count++] = wr;
            }
            stage.stumps.push_back(stump);
        }
        c.stages.push_back(std::move(stage));
    }

    check_invariants(c, "load_cascade");
    return c;
}

void save_cascade(const Cascade& c, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CascadeIoError(CascadeIoErrorKind::Io, "cannot write cascade file '" + path.string() + "'");
    out << cascade_to_string(c);
    if (!out) throw CascadeIoError(CascadeIoErrorKind::Io, "write failed for cascade file '" + path.string() + "'");
}

Cascade load_cascade(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CascadeIoError(CascadeIoErrorKind::Io, "cannot open cascade file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return cascade_from_string(buf.str());
}

}  // namespace haarkit
