#pragma once

#include <stdexcept>
#include <string>

namespace wsi {

// Base for every error raised by the library. Callers that only care about
// "something failed" catch this; the subclasses carry the category.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class ChannelMismatchError : public Error {
public:
    using Error::Error;
};

class DecodeError : public Error {
public:
    using Error::Error;
};

class OutOfBoundsError : public Error {
public:
    using Error::Error;
};

class DegenerateInputError : public Error {
public:
    using Error::Error;
};

// Autofocus could not find a trustworthy MI peak (featureless tile).
class LowConfidenceError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

class FitRejectedError : public Error {
public:
    using Error::Error;
};

class DetectionError : public Error {
public:
    using Error::Error;
};

// Transport or protocol failure talking to the scanner hardware.
class DeviceError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public DeviceError {
public:
    using DeviceError::DeviceError;
};

class CanvasTooLargeError : public Error {
public:
    using Error::Error;
};

} // namespace wsi
