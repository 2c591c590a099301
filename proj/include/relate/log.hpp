// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>

namespace relate {

using WarningHandler = std::function<void(const std::string&)>;

// Non-fatal diagnostics (e.g. un-whitened ISA input). Default handler prints
// to stderr. Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace relate
