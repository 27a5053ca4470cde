#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dcoe {

enum class Errc {
    Domain,
    NotPositiveDefinite,
    InvalidSpec,
    NonpositiveS,
    InvalidBeta,
    InvalidAlpha,
    MissingTruth,
    SizeMismatch,
    InvalidNullMatrix,
    InvalidConfig,
    Io,
    Parse,
    ReplicationFailed,
};

inline constexpr std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::Domain: return "Domain";
        case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
        case Errc::InvalidSpec: return "InvalidSpec";
        case Errc::NonpositiveS: return "NonpositiveS";
        case Errc::InvalidBeta: return "InvalidBeta";
        case Errc::InvalidAlpha: return "InvalidAlpha";
        case Errc::MissingTruth: return "MissingTruth";
        case Errc::SizeMismatch: return "SizeMismatch";
        case Errc::InvalidNullMatrix: return "InvalidNullMatrix";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::Io: return "Io";
        case Errc::Parse: return "Parse";
        case Errc::ReplicationFailed: return "ReplicationFailed";
    }
    return "Unknown";
}

// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace dcoe
