#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fairaudit/csv.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/types.hpp"

namespace fairaudit {

// Id-indexed fixed-dimension embedding matrix. Disk payload is f32; values
// are widened to double for all metric arithmetic.
class EmbeddingSet {
public:
    EmbeddingSet() = default;

    EmbeddingSet(std::size_t dim, std::vector<std::string> ids, std::vector<double> values,
                 bool normalized = false)
        : dim_(dim), ids_(std::move(ids)), values_(std::move(values)), normalized_(normalized) {
        require_input(dim_ > 0, "embedding dimension must be positive");
        require_input(values_.size() == ids_.size() * dim_, "embedding value count does not match count*dim");
        rebuild_index();
        validate();
    }

    std::size_t dim() const { return dim_; }
    std::size_t count() const { return ids_.size(); }
    bool normalized() const { return normalized_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::string& id(std::size_t row) const { return ids_[row]; }

    const double* row(std::size_t i) const { return values_.data() + i * dim_; }
    const std::vector<double>& values() const { return values_; }

    std::size_t row_of(const std::string& id) const {
        const auto it = index_.find(id);
        require_input(it != index_.end(), "unknown sample id: '" + id + "'");
        return it->second;
    }

    bool contains(const std::string& id) const { return index_.count(id) > 0; }

    double norm(std::size_t i) const {
        const double* r = row(i);
        double s = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) s += r[k] * r[k];
        return std::sqrt(s);
    }

    // Row subset in the given order; used by lenient joins and slicing.
    EmbeddingSet subset(const std::vector<std::size_t>& rows) const {
        std::vector<std::string> ids;
        std::vector<double> vals;
        ids.reserve(rows.size());
        vals.reserve(rows.size() * dim_);
        for (const std::size_t r : rows) {
            ids.push_back(ids_[r]);
            vals.insert(vals.end(), row(r), row(r) + dim_);
        }
        return EmbeddingSet(dim_, std::move(ids), std::move(vals), normalized_);
    }

private:
    void rebuild_index() {
        index_.clear();
        index_.reserve(ids_.size());
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            const auto [it, inserted] = index_.emplace(ids_[i], i);
            (void)it;
            require_input(inserted, "duplicate sample id at row " + std::to_string(i + 1) + ": '" + ids_[i] + "'");
        }
    }

    void validate() const {
        for (std::size_t i = 0; i < count(); ++i) {
            const double* r = row(i);
            for (std::size_t k = 0; k < dim_; ++k)
                require_input(std::isfinite(r[k]),
                              "non-finite value at row " + std::to_string(i + 1) + ", column " + std::to_string(k));
            if (normalized_)
                require_invariant(std::abs(norm(i) - 1.0) <= 1e-6,
                                  "row " + std::to_string(i + 1) + " marked normalized but norm deviates from 1");
        }
    }

    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<double> values_;
    bool normalized_ = false;
    std::unordered_map<std::string, std::size_t> index_;
};

// Unit-normalizes every row. Rejects zero-norm rows by id.
inline EmbeddingSet normalize(const EmbeddingSet& e) {
    std::vector<double> vals;
    vals.reserve(e.count() * e.dim());
    for (std::size_t i = 0; i < e.count(); ++i) {
        const double n = e.norm(i);
        require_input(n > 0.0, "zero-norm embedding: '" + e.id(i) + "'");
        const double* r = e.row(i);
        for (std::size_t k = 0; k < e.dim(); ++k) vals.push_back(r[k] / n);
    }
    return EmbeddingSet(e.dim(), e.ids(), std::move(vals), true);
}

enum class EmbeddingFormat { binary, csv };

namespace detail {

inline constexpr char kMagic[4] = {'F', 'A', 'E', 'M'};
inline constexpr std::uint32_t kBinaryVersion = 1;

inline std::uint32_t read_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    require_input(in.good(), std::string("malformed header: truncated ") + what);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u16(std::ostream& out, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

} // namespace detail

// Binary layout: "FAEM", u32 version=1, u32 count, u32 dim, then per record
// [u16 id length, id bytes, dim f32 little-endian].
inline EmbeddingSet load_embeddings_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require_input(in.good(), "cannot open file: " + path);

    char magic[4];
    in.read(magic, 4);
    require_input(in.good() && std::memcmp(magic, detail::kMagic, 4) == 0,
                  path + ": malformed header: bad magic bytes");
    const std::uint32_t version = detail::read_u32(in, "version");
    require_input(version == detail::kBinaryVersion,
                  path + ": malformed header: unsupported version " + std::to_string(version));
    const std::uint32_t count = detail::read_u32(in, "count");
    const std::uint32_t dim = detail::read_u32(in, "dim");
    require_input(dim > 0, path + ": malformed header: dim is 0");

    std::vector<std::string> ids;
    std::vector<double> values;
    ids.reserve(count);
    values.reserve(static_cast<std::size_t>(count) * dim);
    std::vector<float> buf(dim);
    for (std::uint32_t r = 0; r < count; ++r) {
        const std::string where = path + ": row " + std::to_string(r + 1);
        unsigned char lb[2];
        in.read(reinterpret_cast<char*>(lb), 2);
        require_input(in.good(), where + ": truncated record");
        const std::uint16_t idlen = static_cast<std::uint16_t>(lb[0] | lb[1] << 8);
        require_input(idlen > 0, where + ": empty id");
        std::string id(idlen, '\0');
        in.read(id.data(), idlen);
        require_input(in.good(), where + ": truncated id");
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim) * 4);
        require_input(in.good(), where + ": truncated vector");
        ids.push_back(std::move(id));
        for (std::uint32_t k = 0; k < dim; ++k) {
            require_input(std::isfinite(buf[k]), where + ": non-finite value at column " + std::to_string(k));
            values.push_back(static_cast<double>(buf[k]));
        }
    }
    in.peek();
    require_input(in.eof(), path + ": trailing bytes after last record");
    return EmbeddingSet(dim, std::move(ids), std::move(values));
}

// CSV layout: header `sample_id,v0,...,v{dim-1}`, one row per sample.
inline EmbeddingSet load_embeddings_csv(const std::string& path) {
    const auto lines = csv::read_lines(path);
    require_input(!lines.empty(), path + ": malformed header: empty file");
    const auto header = csv::split(lines[0]);
    require_input(header.size() >= 2 && header[0] == "sample_id",
                  path + ": malformed header: expected 'sample_id,v0,...'");
    const std::size_t dim = header.size() - 1;
    for (std::size_t k = 0; k < dim; ++k)
        require_input(header[k + 1] == "v" + std::to_string(k),
                      path + ": malformed header: column " + std::to_string(k + 1) + " should be v" + std::to_string(k));

    std::vector<std::string> ids;
    std::vector<double> values;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const std::string where = path + ": row " + std::to_string(r);
        const auto fields = csv::split(lines[r]);
        require_input(fields.size() == dim + 1, "dimension mismatch at " + where + ": expected " +
                                                    std::to_string(dim) + " values, got " +
                                                    std::to_string(fields.size() - 1));
        require_input(!fields[0].empty(), where + ": empty id");
        ids.push_back(fields[0]);
        for (std::size_t k = 0; k < dim; ++k) {
            const double v = csv::parse_double(fields[k + 1], where);
            require_input(std::isfinite(v), where + ": non-finite value at column " + std::to_string(k));
            values.push_back(v);
        }
    }
    return EmbeddingSet(dim, std::move(ids), std::move(values));
}

inline EmbeddingSet load_embeddings(const std::string& path, EmbeddingFormat format) {
    return format == EmbeddingFormat::binary ? load_embeddings_binary(path) : load_embeddings_csv(path);
}

inline void write_embeddings_binary(const EmbeddingSet& e, const std::string& path) {
    std::ostringstream out;
    out.write(detail::kMagic, 4);
    detail::write_u32(out, detail::kBinaryVersion);
    detail::write_u32(out, static_cast<std::uint32_t>(e.count()));
    detail::write_u32(out, static_cast<std::uint32_t>(e.dim()));
    for (std::size_t i = 0; i < e.count(); ++i) {
        const std::string& id = e.id(i);
        require_input(id.size() <= UINT16_MAX, "id too long for binary format: '" + id + "'");
        detail::write_u16(out, static_cast<std::uint16_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
        for (std::size_t k = 0; k < e.dim(); ++k) {
            const float f = static_cast<float>(e.row(i)[k]);
            static_assert(sizeof(float) == 4);
            char b[4];
            std::memcpy(b, &f, 4);
            out.write(b, 4);
        }
    }
    csv::write_file_atomic(path, out.str());
}

inline void write_embeddings_csv(const EmbeddingSet& e, const std::string& path) {
    std::ostringstream out;
    out << "sample_id";
    for (std::size_t k = 0; k < e.dim(); ++k) out << ",v" << k;
    out << '\n';
    for (std::size_t i = 0; i < e.count(); ++i) {
        csv::check_field(e.id(i));
        out << e.id(i);
        for (std::size_t k = 0; k < e.dim(); ++k) out << ',' << csv::format_full(e.row(i)[k]);
        out << '\n';
    }
    csv::write_file_atomic(path, out.str());
}

inline void write_embeddings(const EmbeddingSet& e, const std::string& path, EmbeddingFormat format) {
    if (format == EmbeddingFormat::binary)
        write_embeddings_binary(e, path);
    else
        write_embeddings_csv(e, path);
}

// Annotation CSV: `sample_id,identity_id,race,gender,age_bin`.
inline std::vector<SampleAnnotation> load_annotations(const std::string& path) {
    const auto lines = csv::read_lines(path);
    require_input(!lines.empty(), path + ": malformed header: empty file");
    require_input(csv::split(lines[0]) ==
                      std::vector<std::string>({"sample_id", "identity_id", "race", "gender", "age_bin"}),
                  path + ": malformed header: expected 'sample_id,identity_id,race,gender,age_bin'");
    std::vector<SampleAnnotation> out;
    std::unordered_set<std::string> seen;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const std::string where = path + ": row " + std::to_string(r);
        const auto fields = csv::split(lines[r]);
        require_input(fields.size() == 5, where + ": expected 5 fields, got " + std::to_string(fields.size()));
        SampleAnnotation a;
        a.sample_id = fields[0];
        a.identity_id = fields[1];
        require_input(!a.sample_id.empty() && !a.identity_id.empty(), where + ": empty id");
        require_input(seen.insert(a.sample_id).second, where + ": duplicate sample id '" + a.sample_id + "'");
        try {
            a.race = parse_race(fields[2]);
            a.gender = parse_gender(fields[3]);
            a.age_bin = parse_age_bin(csv::parse_long(fields[4], where));
        } catch (const input_error& err) {
            throw input_error(where + ": " + err.what());
        }
        out.push_back(std::move(a));
    }
    return out;
}

inline void write_annotations(const std::vector<SampleAnnotation>& annotations, const std::string& path) {
    std::ostringstream out;
    out << "sample_id,identity_id,race,gender,age_bin\n";
    for (const auto& a : annotations) {
        csv::check_field(a.sample_id);
        csv::check_field(a.identity_id);
        out << a.sample_id << ',' << a.identity_id << ',' << to_string(a.race) << ',' << to_string(a.gender)
            << ',' << a.age_bin << '\n';
    }
    csv::write_file_atomic(path, out.str());
}

enum class JoinMode { strict, lenient };

// Embeddings joined with their annotations; immutable after construction.
class AnnotatedCohort {
public:
    AnnotatedCohort(EmbeddingSet embeddings, std::vector<SampleAnnotation> annotations)
        : embeddings_(std::move(embeddings)), annotations_(std::move(annotations)) {
        require_invariant(embeddings_.count() == annotations_.size(),
                          "cohort embeddings and annotations must align");
        for (std::size_t i = 0; i < annotations_.size(); ++i)
            require_invariant(annotations_[i].sample_id == embeddings_.id(i),
                              "cohort annotation order must match embedding order");
    }

    const EmbeddingSet& embeddings() const { return embeddings_; }
    std::size_t size() const { return embeddings_.count(); }

    const SampleAnnotation& annotation(std::size_t row) const { return annotations_[row]; }
    const SampleAnnotation& annotation_of(const std::string& sample_id) const {
        return annotations_[embeddings_.row_of(sample_id)];
    }
    std::size_t row_of(const std::string& sample_id) const { return embeddings_.row_of(sample_id); }

    std::size_t dropped_embeddings = 0;  // lenient-join bookkeeping
    std::size_t dropped_annotations = 0;

private:
    EmbeddingSet embeddings_;
    std::vector<SampleAnnotation> annotations_;
};

// strict: id sets must match exactly. lenient: intersection, drops counted.
inline AnnotatedCohort join_cohort(const EmbeddingSet& e, const std::vector<SampleAnnotation>& annotations,
                                   JoinMode mode) {
    std::unordered_map<std::string, const SampleAnnotation*> by_id;
    for (const auto& a : annotations) {
        const auto [it, inserted] = by_id.emplace(a.sample_id, &a);
        (void)it;
        require_input(inserted, "duplicate annotation for sample id '" + a.sample_id + "'");
    }

    std::vector<std::size_t> kept_rows;
    std::vector<std::string> missing_annotation;
    for (std::size_t i = 0; i < e.count(); ++i) {
        if (by_id.count(e.id(i)))
            kept_rows.push_back(i);
        else
            missing_annotation.push_back(e.id(i));
    }
    std::vector<std::string> missing_embedding;
    for (const auto& a : annotations)
        if (!e.contains(a.sample_id)) missing_embedding.push_back(a.sample_id);

    if (mode == JoinMode::strict && (!missing_annotation.empty() || !missing_embedding.empty())) {
        std::string msg = "strict join mismatch:";
        auto list = [&msg](const char* what, const std::vector<std::string>& ids) {
            if (ids.empty()) return;
            msg += std::string(" ") + what + " [";
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (i) msg += ", ";
                if (i == 10) {
                    msg += "...";
                    break;
                }
                msg += ids[i];
            }
            msg += "]";
        };
        list("embeddings without annotation:", missing_annotation);
        list("annotations without embedding:", missing_embedding);
        throw input_error(msg);
    }

    EmbeddingSet kept = kept_rows.size() == e.count() ? e : e.subset(kept_rows);
    std::vector<SampleAnnotation> ordered;
    ordered.reserve(kept.count());
    for (std::size_t i = 0; i < kept.count(); ++i) ordered.push_back(*by_id.at(kept.id(i)));

    AnnotatedCohort cohort(std::move(kept), std::move(ordered));
    cohort.dropped_embeddings = missing_annotation.size();
    cohort.dropped_annotations = missing_embedding.size();
    return cohort;
}

} // namespace fairaudit
