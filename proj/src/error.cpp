#include "bnhp/error.hpp"

namespace bnhp {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::NonIncreasing: return "NonIncreasing";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::InvalidParam: return "InvalidParam";
    case ErrorKind::NonStationary: return "NonStationary";
    case ErrorKind::UnsupportedPrimitive: return "UnsupportedPrimitive";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NoBracket: return "NoBracket";
    case ErrorKind::MaxIter: return "MaxIter";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::DegenerateDesign: return "DegenerateDesign";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::MissingLevel: return "MissingLevel";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Usage: return "Usage";
  }
  return "Unknown";
}

}  // namespace bnhp
