#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "kgx/error.hpp"

namespace kgx {

// One human assessment of an explanation. Scales: correctness and clarity
// 1..5, logicalness 1..3.
struct AnnotationRecord {
    std::string item_id;
    std::string annotator_id;
    int correctness = 0;
    int clarity = 0;
    int logicalness = 0;
    int missed_entities = 0;
    int missed_relations = 0;
    int hallucinated_entities = 0;
    int hallucinated_relations = 0;
    std::optional<std::string> edited_explanation;
    std::string created_at;

    bool operator==(const AnnotationRecord &) const = default;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

// Throws ValidationError naming the first offending field. A correctness
// below 5 requires a non-empty edited explanation.
void validate_annotation(const AnnotationRecord &a);

nlohmann::ordered_json to_json(const AnnotationRecord &a);
// Missing counts default to 0; wrongly typed fields throw ValidationError.
AnnotationRecord annotation_from_json(const nlohmann::json &j);
std::vector<AnnotationRecord> read_annotations_file(const std::string &path);

} // namespace kgx
