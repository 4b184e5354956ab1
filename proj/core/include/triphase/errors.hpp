#pragma once

#include <stdexcept>
#include <string>

namespace triphase {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Data ingestion and file handling.
class IoError : public Error { public: using Error::Error; };
class SchemaError : public Error { public: using Error::Error; };
class MissingColumn : public Error { public: using Error::Error; };
class PhaseInconsistency : public Error { public: using Error::Error; };
class NonPositiveOffset : public Error { public: using Error::Error; };
class MonthGap : public Error { public: using Error::Error; };

// Model fitting.
class RankDeficient : public Error { public: using Error::Error; };
class NonConvergence : public Error { public: using Error::Error; };
class Separation : public Error { public: using Error::Error; };
class NotConverged : public Error { public: using Error::Error; };
class SingularBread : public Error { public: using Error::Error; };
class SparseCategory : public Error { public: using Error::Error; };

// Sampling design and weight calibration.
class ZeroSamplingProbability : public Error { public: using Error::Error; };
class CollinearAuxiliaries : public Error { public: using Error::Error; };
class NoFeasibleWeights : public Error { public: using Error::Error; };

// Orchestration.
class ConfigError : public Error { public: using Error::Error; };
class ImputationSetMismatch : public Error { public: using Error::Error; };

} // namespace triphase
