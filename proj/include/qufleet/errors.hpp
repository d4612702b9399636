#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qufleet {

// Base for all library errors so callers can catch a single type at the boundary.
class Error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class CapacityError : public Error { public: using Error::Error; };   // qubit budget exceeded
class IndexError    : public Error { public: using Error::Error; };   // target/parameter index out of range
class ShapeError    : public Error { public: using Error::Error; };   // mismatched dimensions
class RangeError    : public Error { public: using Error::Error; };   // value outside its documented interval
class ArgumentError : public Error { public: using Error::Error; };   // invalid argument or combination
class LayoutError   : public Error { public: using Error::Error; };   // register overlap / bad qubit layout
class ConfigError   : public Error { public: using Error::Error; };
class TransportError: public Error { public: using Error::Error; };
class JobError      : public Error { public: using Error::Error; };
class FrameError    : public Error { public: using Error::Error; };   // framing-level protocol violation

// Decode failures carry the byte offset where parsing stopped.
class DecodeError : public Error {
public:
    DecodeError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

} // namespace qufleet
