#pragma once

#include <stdexcept>
#include <string>

namespace sonicgauss {

// Runtime failure carrying a machine-readable code and, when relevant, the
// offending field. The HTTP layer maps these one-to-one onto error bodies.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message, std::string field = {})
        : std::runtime_error(message), code_(std::move(code)), field_(std::move(field)) {}

    [[nodiscard]] const std::string& code() const noexcept { return code_; }
    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string code_;
    std::string field_;
};

}  // namespace sonicgauss
