#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ssam::cli {

/// Seed used when --seed is not given.
inline constexpr unsigned long long kDefaultSeed = 20210701ULL;
/// Seed for the noise draws of noise-sweep when --noise-seed is not given.
inline constexpr unsigned long long kDefaultNoiseSeed = 6060ULL;

/// Runs one command line (args excludes the program name). Results go to
/// `out`, progress and the one-line error report to `err`. Returns the
/// process exit status: 0 on success, 2 for usage errors, 1 otherwise.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string file_fingerprint(const std::string& path);

}  // namespace ssam::cli
