#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fairaudit/embedding_store.hpp"
#include "fairaudit/rng.hpp"

using namespace fairaudit;

namespace {

std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "fairaudit_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    out << content;
}

} // namespace

TEST_CASE("binary load: minimal well-formed file") {
    EmbeddingSet e(3, {"a", "b"}, {1, 0, 0, 0, 1, 0});
    const std::string path = temp_path("minimal.faem");
    write_embeddings_binary(e, path);
    const EmbeddingSet r = load_embeddings(path, EmbeddingFormat::binary);
    CHECK(r.count() == 2);
    CHECK(r.dim() == 3);
    CHECK(r.id(0) == "a");
    CHECK(r.row(1)[1] == 1.0);
}

TEST_CASE("binary round-trip is bit-exact for f32 payloads") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t count = 1 + rng.index(8);
        const std::size_t dim = 1 + rng.index(12);
        std::vector<std::string> ids;
        std::vector<double> values;
        for (std::size_t i = 0; i < count; ++i) {
            ids.push_back("s" + std::to_string(trial) + "_" + std::to_string(i));
            for (std::size_t k = 0; k < dim; ++k)
                values.push_back(static_cast<double>(static_cast<float>(rng.normal() * 3.0)));
        }
        const EmbeddingSet e(dim, ids, values);
        const std::string path = temp_path("roundtrip.faem");
        write_embeddings_binary(e, path);
        const EmbeddingSet r = load_embeddings(path, EmbeddingFormat::binary);
        REQUIRE(r.count() == count);
        REQUIRE(r.dim() == dim);
        for (std::size_t i = 0; i < count; ++i) {
            CHECK(r.id(i) == ids[i]);
            for (std::size_t k = 0; k < dim; ++k) CHECK(r.row(i)[k] == e.row(i)[k]);
        }
    }
}

TEST_CASE("binary load rejects corruption") {
    const std::string path = temp_path("corrupt.faem");

    SUBCASE("bad magic") {
        write_text(path, "NOPE");
        CHECK_THROWS_WITH_AS(load_embeddings(path, EmbeddingFormat::binary),
                             doctest::Contains("bad magic"), input_error);
    }
    SUBCASE("truncated record") {
        EmbeddingSet e(4, {"a", "b"}, std::vector<double>(8, 0.5));
        write_embeddings_binary(e, path);
        auto bytes = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, bytes - 3);
        CHECK_THROWS_WITH_AS(load_embeddings(path, EmbeddingFormat::binary),
                             doctest::Contains("row 2"), input_error);
    }
    SUBCASE("duplicate id") {
        EmbeddingSet e(2, {"a", "b"}, {1, 2, 3, 4});
        write_embeddings_binary(e, path);
        // Patch the second id ("b") to "a": header 16 bytes, then record one
        // (2 + 1 + 8 bytes), then the length prefix of record two.
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(16 + 2 + 1 + 8 + 2);
        f.put('a');
        f.close();
        CHECK_THROWS_WITH_AS(load_embeddings(path, EmbeddingFormat::binary),
                             doctest::Contains("duplicate sample id"), input_error);
    }
}

TEST_CASE("csv load: dimension mismatch names the row") {
    const std::string path = temp_path("dim_mismatch.csv");
    write_text(path, "sample_id,v0,v1,v2\ns1,1,0,0\ns2,0,1\n");
    CHECK_THROWS_WITH_AS(load_embeddings(path, EmbeddingFormat::csv),
                         doctest::Contains(("dimension mismatch at " + path + ": row 2").c_str()), input_error);
}

TEST_CASE("csv load rejects non-finite values and bad headers") {
    const std::string path = temp_path("bad.csv");
    write_text(path, "sample_id,v0,v1\ns1,1,nan\n");
    CHECK_THROWS_AS(load_embeddings(path, EmbeddingFormat::csv), input_error);
    write_text(path, "id,v0\ns1,1\n");
    CHECK_THROWS_WITH_AS(load_embeddings(path, EmbeddingFormat::csv), doctest::Contains("malformed header"),
                         input_error);
}

TEST_CASE("csv round-trip preserves doubles") {
    Rng rng(7);
    std::vector<double> values;
    for (int i = 0; i < 12; ++i) values.push_back(rng.normal());
    const EmbeddingSet e(4, {"x", "y", "z"}, values);
    const std::string path = temp_path("roundtrip.csv");
    write_embeddings_csv(e, path);
    const EmbeddingSet r = load_embeddings(path, EmbeddingFormat::csv);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k) CHECK(r.row(i)[k] == e.row(i)[k]);
}

TEST_CASE("normalize: 3-4-5 triangle") {
    const EmbeddingSet e(2, {"a"}, {3, 4});
    const EmbeddingSet n = normalize(e);
    CHECK(n.row(0)[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(n.row(0)[1] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(n.normalized());
}

TEST_CASE("normalize is idempotent within 1e-12 and unit-norm within 1e-6") {
    Rng rng(3);
    std::vector<double> values;
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) {
        ids.push_back("s" + std::to_string(i));
        for (int k = 0; k < 6; ++k) values.push_back(rng.normal() * 5.0);
    }
    const EmbeddingSet once = normalize(EmbeddingSet(6, ids, values));
    for (std::size_t i = 0; i < once.count(); ++i) CHECK(std::abs(once.norm(i) - 1.0) < 1e-6);
    const EmbeddingSet twice = normalize(once);
    for (std::size_t i = 0; i < once.count(); ++i)
        for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(twice.row(i)[k] - once.row(i)[k]) < 1e-12);
}

TEST_CASE("normalize rejects the zero row by id") {
    const EmbeddingSet e(2, {"ok", "zero"}, {1, 1, 0, 0});
    CHECK_THROWS_WITH_AS(normalize(e), doctest::Contains("zero"), input_error);
}

TEST_CASE("join_cohort strict and lenient") {
    const EmbeddingSet e(2, {"a", "b", "c"}, {1, 0, 0, 1, 1, 1});
    std::vector<SampleAnnotation> ann = {
        {"a", "id1", Race::Caucasian, Gender::Male, 0},
        {"b", "id1", Race::Caucasian, Gender::Male, 1},
        {"c", "id2", Race::African, Gender::Female, 2},
    };

    SUBCASE("strict succeeds iff id sets are equal") {
        const AnnotatedCohort cohort = join_cohort(e, ann, JoinMode::strict);
        CHECK(cohort.size() == 3);
        CHECK(cohort.annotation_of("c").race == Race::African);
    }
    SUBCASE("strict mismatch lists the offender") {
        ann.pop_back();
        CHECK_THROWS_WITH_AS(join_cohort(e, ann, JoinMode::strict), doctest::Contains("c"), input_error);
    }
    SUBCASE("lenient drops and counts") {
        ann.pop_back();
        const AnnotatedCohort cohort = join_cohort(e, ann, JoinMode::lenient);
        CHECK(cohort.size() == 2);
        CHECK(cohort.dropped_embeddings == 1);
        CHECK(cohort.dropped_annotations == 0);
    }
    SUBCASE("lenient counts annotations without embeddings too") {
        ann.push_back({"ghost", "id3", Race::Asian, Gender::Male, 3});
        const AnnotatedCohort cohort = join_cohort(e, ann, JoinMode::lenient);
        CHECK(cohort.size() == 3);
        CHECK(cohort.dropped_annotations == 1);
    }
}

TEST_CASE("annotation csv round trip and validation") {
    const std::string path = temp_path("ann.csv");
    std::vector<SampleAnnotation> ann = {
        {"s1", "p1", Race::Indian, Gender::Female, 5},
        {"s2", "p1", Race::Indian, Gender::Female, 3},
    };
    write_annotations(ann, path);
    const auto r = load_annotations(path);
    REQUIRE(r.size() == 2);
    CHECK(r[0].race == Race::Indian);
    CHECK(r[0].age_bin == 5);
    CHECK(r[1].sample_id == "s2");

    write_text(path, "sample_id,identity_id,race,gender,age_bin\ns1,p1,Martian,Male,0\n");
    CHECK_THROWS_WITH_AS(load_annotations(path), doctest::Contains("unknown race"), input_error);
    write_text(path, "sample_id,identity_id,race,gender,age_bin\ns1,p1,Asian,Male,6\n");
    CHECK_THROWS_WITH_AS(load_annotations(path), doctest::Contains("age_bin out of range"), input_error);
    write_text(path, "sample_id,identity_id,race,gender,age_bin\ns1,p1,Asian,Male,0\ns1,p2,Asian,Male,1\n");
    CHECK_THROWS_WITH_AS(load_annotations(path), doctest::Contains("duplicate"), input_error);
}
