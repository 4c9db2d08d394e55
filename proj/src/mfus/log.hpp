#pragma once

#include <functional>
#include <string>

namespace mfus {

using WarningSink = std::function<void(const std::string&)>;

// Installs a new sink and returns the previous one. The default sink writes
// "warning: <msg>" to stderr.
WarningSink set_warning_sink(WarningSink sink);

void warn(const std::string& message);

}  // namespace mfus
