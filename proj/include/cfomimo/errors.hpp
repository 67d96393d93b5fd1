#pragma once

#include <stdexcept>
#include <string>

namespace cfomimo {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error line; `context()` accumulates
/// where the error happened (e.g. the experiment grid point).
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }
    const std::string& context() const noexcept { return context_; }

    void add_context(const std::string& where) {
        context_ = context_.empty() ? where : where + "; " + context_;
    }

private:
    std::string kind_;
    std::string context_;
};

#define CFOMIMO_DEFINE_ERROR(Name)                                           \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(#Name, what) {}       \
    }

CFOMIMO_DEFINE_ERROR(ConfigError);
CFOMIMO_DEFINE_ERROR(OverlapError);
CFOMIMO_DEFINE_ERROR(FrameError);
CFOMIMO_DEFINE_ERROR(PilotLengthError);
CFOMIMO_DEFINE_ERROR(InsufficientTrials);
CFOMIMO_DEFINE_ERROR(DegenerateFit);
CFOMIMO_DEFINE_ERROR(NotFound);
CFOMIMO_DEFINE_ERROR(BracketError);
CFOMIMO_DEFINE_ERROR(IoError);

#undef CFOMIMO_DEFINE_ERROR

}  // namespace cfomimo
