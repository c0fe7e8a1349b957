#pragma once

#include <stdexcept>
#include <string>

namespace coips {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class GeometryError : public Error { public: using Error::Error; };
class NumericError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class InternalError : public Error { public: using Error::Error; };
class RangeError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class SpecError : public Error { public: using Error::Error; };
class UndefinedMetricError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };

/// Raised when an image stream cannot be decoded; carries the offending id.
class DecodeError : public Error {
public:
    DecodeError(std::string source_id, const std::string& what)
        : Error("decode error [" + source_id + "]: " + what), source_id_(std::move(source_id)) {}
    const std::string& source_id() const noexcept { return source_id_; }

private:
    std::string source_id_;
};

}  // namespace coips
