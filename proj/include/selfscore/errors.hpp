#pragma once

#include <stdexcept>
#include <string>

namespace selfscore {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- dataset ----
struct EmptyRatings : Error {
    EmptyRatings() : Error("empty ratings vector") {}
    explicit EmptyRatings(const std::string& image_id)
        : Error("empty ratings vector for image '" + image_id + "'") {}
};
struct ParseError : Error {
    ParseError(std::size_t line, const std::string& what_arg)
        : Error("parse error at line " + std::to_string(line) + ": " + what_arg), line(line) {}
    std::size_t line;
};
struct DuplicateId : Error {
    explicit DuplicateId(const std::string& image_id)
        : Error("duplicate image_id '" + image_id + "'") {}
};
struct MissingField : Error {
    explicit MissingField(const std::string& field)
        : Error("missing required field '" + field + "'") {}
};

// ---- score codec ----
struct TooFewSamples : Error {
    TooFewSamples(std::size_t got, std::size_t need)
        : Error("need at least " + std::to_string(need) + " samples, got " + std::to_string(got)) {}
};
struct DegenerateDesign : Error {
    using Error::Error;
};
struct BinOutOfRange : Error {
    explicit BinOutOfRange(int bin)
        : Error("bin " + std::to_string(bin) + " outside [0, 9]") {}
};

// ---- prompting ----
struct FormatError : Error {
    using Error::Error;
};

// ---- model backend ----
struct BackendFailure : Error {
    using Error::Error;
};
struct ContextOverflow : Error {
    using Error::Error;
};
struct TokenizationError : Error {
    using Error::Error;
};
struct ShapeMismatch : Error {
    using Error::Error;
};
struct NoAdapterAttached : Error {
    NoAdapterAttached() : Error("no adapter attached") {}
};

// ---- preference data ----
struct EmptyAllowedSet : Error {
    using Error::Error;
};
struct GenerationFormatError : Error {
    using Error::Error;
};
struct DatasetSchemaError : Error {
    using Error::Error;
};

// ---- training / merging ----
struct NonFiniteLoss : Error {
    using Error::Error;
};
struct SchemaMismatch : Error {
    using Error::Error;
};

// ---- evaluation ----
struct DegenerateVariance : Error {
    using Error::Error;
};
struct JudgeFormatError : Error {
    using Error::Error;
};
struct ProviderError : Error {
    using Error::Error;
};
struct AllFailed : Error {
    using Error::Error;
};

// ---- pipeline / cli ----
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace selfscore
