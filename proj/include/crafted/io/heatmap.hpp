// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "crafted/evaluation.hpp"

namespace crafted::io {

/// True when the library was built with PNG output.
bool heatmap_supported();

/// Renders a matrix as a colour-mapped grid, one square block per cell,
/// scaled to the matrix's own [min, max]. Returns false (with a reason in
/// *why) when PNG output is unavailable or the matrix is empty.
bool write_heatmap_png(const std::filesystem::path& path, const MetricMatrix& matrix,
                       std::string* why = nullptr);

}  // namespace crafted::io
