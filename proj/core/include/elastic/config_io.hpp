#pragma once

#include <string>

#include "elastic/arch.hpp"

namespace elastic {

// Human-readable architecture config, documented in docs/config-format.md.
// serialize -> parse is lossless: parse_arch(serialize_arch(s)) == s, and
// serialization of the result is byte-identical.
std::string serialize_arch(const ArchSpec& spec);

// FormatError with a line number on syntax problems; ConfigError when the
// parsed spec fails validation.
ArchSpec parse_arch(const std::string& text);

ArchSpec load_arch_file(const std::string& path);  // IoError on fs failures
void save_arch_file(const ArchSpec& spec, const std::string& path);

// Preset name or config file path; files are recognized by existing on disk.
ArchSpec resolve_arch(const std::string& name_or_path);

}  // namespace elastic
