#include "tsvat/error.hpp"

namespace tsvat {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidSeries: return "InvalidSeries";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::WindowTooLong: return "WindowTooLong";
    case ErrorCode::NoDominantPeriod: return "NoDominantPeriod";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::AnomalyOutOfRange: return "AnomalyOutOfRange";
    case ErrorCode::OverlappingAnomalies: return "OverlappingAnomalies";
    case ErrorCode::WindowShorterThanPatch: return "WindowShorterThanPatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NoMaskedPatches: return "NoMaskedPatches";
    case ErrorCode::NotEnoughWindows: return "NotEnoughWindows";
    case ErrorCode::RegionTooShort: return "RegionTooShort";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::PerplexityInfeasible: return "PerplexityInfeasible";
    case ErrorCode::InsufficientRows: return "InsufficientRows";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace tsvat
