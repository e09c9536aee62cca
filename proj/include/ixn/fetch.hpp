#pragma once

#include <array>
#include <string>

namespace ixn {

struct DatasetFile {
    const char* name;
    const char* sha256;
};

/// The four archive files with their published checksums.
const std::array<DatasetFile, 4>& fashion_mnist_files();

inline constexpr const char* kDefaultMirror =
    "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com";

/// Hex-encoded SHA-256 of a file's bytes; IoError when unreadable.
std::string sha256_file(const std::string& path);

/// Downloads `url` to `dest_path` (atomically via a temp file). Throws
/// IoError on transport or filesystem failure.
void download_file(const std::string& url, const std::string& dest_path);

/// Fetches every dataset file from the mirror into dest_dir, verifying each
/// checksum. Files already present with a good checksum are kept as-is.
/// Throws FormatError naming the file on a checksum mismatch.
void fetch_dataset(const std::string& mirror_url, const std::string& dest_dir);

}  // namespace ixn
