#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace veye {

// Caller-side mistakes: bad arguments, malformed inputs, unresolvable paths.
// The CLI maps these to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A file on disk failed a magic/version/structure check.
struct CorruptDataError : UsageError {
    using UsageError::UsageError;
};

// Talking to an external service (chat endpoint) failed. CLI exit code 4.
struct ExternalServiceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Model response did not match the mandated ELEV/AZIM grammar.
struct ResponseParseError : std::runtime_error {
    explicit ResponseParseError(std::string offending)
        : std::runtime_error("response does not match `ELEV=<number>; AZIM=<number>`: " + offending),
          offending_text(std::move(offending)) {}
    std::string offending_text;
};

// View selection ran out of retries; carries the full conversation so far.
struct SelectionFailed : ExternalServiceError {
    SelectionFailed(std::string msg, std::vector<std::string> transcript_)
        : ExternalServiceError(std::move(msg)), transcript(std::move(transcript_)) {}
    std::vector<std::string> transcript;
};

// Expert action projects outside the virtual image: the selected view
// does not contain the action.
struct EncodeOutOfView : std::runtime_error {
    EncodeOutOfView(double u_, double v_)
        : std::runtime_error("expert action projects outside the image at (" +
                             std::to_string(u_) + ", " + std::to_string(v_) + ")"),
          u(u_), v(v_) {}
    double u;
    double v;
};

} // namespace veye
