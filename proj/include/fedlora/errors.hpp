// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fedlora {

// Base of every error raised by the library. Each subclass names a failure
// domain so the CLI can map it onto an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class ProtocolError : public Error { using Error::Error; };
class ClientError : public Error { using Error::Error; };
class RoundError : public Error { using Error::Error; };

}  // namespace fedlora
