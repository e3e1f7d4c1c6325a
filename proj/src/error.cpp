#include "eyewear/error.hpp"

namespace eyewear {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::UnknownStyle: return "UnknownStyle";
    case ErrorCode::AxisOutOfRange: return "AxisOutOfRange";
    case ErrorCode::UninitializedB: return "UninitializedB";
    case ErrorCode::NoTemplates: return "NoTemplates";
    case ErrorCode::MalformedTemplate: return "MalformedTemplate";
    case ErrorCode::DegenerateLandmarks: return "DegenerateLandmarks";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::FitDiverged: return "FitDiverged";
    case ErrorCode::NoGlassesFound: return "NoGlassesFound";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumFailure: return "ChecksumFailure";
    case ErrorCode::DimInconsistency: return "DimInconsistency";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace eyewear
