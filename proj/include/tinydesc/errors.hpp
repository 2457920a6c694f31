#pragma once

#include <stdexcept>
#include <string>

namespace tinydesc {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor/layer geometry violations (channel mismatch, window larger than input, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

// Missing, unreadable or unwritable files.
class IoError : public Error {
public:
    using Error::Error;
};

// Structurally malformed content (bad magic, unparsable index line, bad PGM header).
class FormatError : public Error {
public:
    using Error::Error;
};

// Checksum failure or truncation: the file existed but its bytes are damaged.
class CorruptFileError : public FormatError {
public:
    using FormatError::FormatError;
};

// File format version this build does not understand.
class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

// Invalid run configuration or arguments (empty corpus, too few classes, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace tinydesc
