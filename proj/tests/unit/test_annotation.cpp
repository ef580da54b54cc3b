#include <gtest/gtest.h>

#include "kgx/annotation.hpp"
#include "test_support.hpp"

using namespace kgx;

namespace {
AnnotationRecord valid() {
    AnnotationRecord a;
    a.item_id = "item";
    a.annotator_id = "ann";
    a.correctness = 5;
    a.clarity = 4;
    a.logicalness = 3;
    return a;
}
} // namespace

TEST(Annotation, Scales) {
    EXPECT_NO_THROW(validate_annotation(valid()));
    auto a = valid();
    a.correctness = 7;
    EXPECT_THROW(validate_annotation(a), ValidationError);
    a = valid();
    a.clarity = 0;
    EXPECT_THROW(validate_annotation(a), ValidationError);
    a = valid();
    a.logicalness = 4;
    EXPECT_THROW(validate_annotation(a), ValidationError);
    a = valid();
    a.missed_relations = -1;
    EXPECT_THROW(validate_annotation(a), ValidationError);
}

TEST(Annotation, LowCorrectnessNeedsEdit) {
    auto a = valid();
    a.correctness = 3;
    EXPECT_THROW(validate_annotation(a), ValidationError);
    a.edited_explanation = "   ";
    EXPECT_THROW(validate_annotation(a), ValidationError);
    a.edited_explanation = "Fixed text.";
    EXPECT_NO_THROW(validate_annotation(a));
}

TEST(Annotation, JsonRoundTrip) {
    auto a = valid();
    a.edited_explanation = "x";
    a.hallucinated_entities = 2;
    a.created_at = "2024-05-01T10:00:00Z";
    EXPECT_EQ(annotation_from_json(nlohmann::json::parse(to_json(a).dump())), a);
    EXPECT_TRUE(to_json(valid())["edited_explanation"].is_null());
}

TEST(Annotation, WrongTypesRejected) {
    auto j = nlohmann::json::parse(to_json(valid()).dump());
    j["correctness"] = "five";
    EXPECT_THROW(annotation_from_json(j), ValidationError);
    j = nlohmann::json::parse(to_json(valid()).dump());
    j.erase("missed_entities");
    EXPECT_EQ(annotation_from_json(j).missed_entities, 0);
}

TEST(Annotation, ReadFile) {
    testkit::TempDir dir;
    testkit::write_file(dir.path() / "a.jsonl",
                        to_json(valid()).dump() + "\n\n" + to_json(valid()).dump() + "\n");
    EXPECT_EQ(read_annotations_file(dir.file("a.jsonl")).size(), 2u);
}
