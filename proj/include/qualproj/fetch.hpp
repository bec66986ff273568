#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <httplib.h>

#include "qualproj/archive.hpp"
#include "qualproj/error.hpp"
#include "qualproj/experiment.hpp"

// Dataset fetch helper: downloads the archives named by fetch_urls in the
// experiment config, decompresses them, and drops the dataset files where
// the config expects them. Only length sanity is enforced here; real
// validation happens in the parsers.

namespace qualproj {

inline std::vector<std::uint8_t> http_get(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("fetch: bad URL " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    auto res = client.Get(path);
    if (!res) {
        throw IoError("fetch: request failed for " + url + " (" +
                      httplib::to_string(res.error()) + ")");
    }
    if (res->status != 200) {
        throw IoError("fetch: HTTP " + std::to_string(res->status) + " for " + url);
    }
    if (res->body.empty()) throw IoError("fetch: empty body for " + url);
    return {res->body.begin(), res->body.end()};
}

inline bool url_is_gz(const std::string& url) {
    return url.size() >= 3 && url.compare(url.size() - 3, 3, ".gz") == 0;
}

/// Fetches one dataset file: downloads, gunzips when the URL ends in .gz,
/// writes to dest. Returns the byte count written.
inline std::size_t fetch_dataset_file(const std::string& url,
                                      const std::filesystem::path& dest) {
    auto bytes = http_get(url);
    if (url_is_gz(url)) bytes = gunzip_bytes(bytes, url);
    if (bytes.size() < 16) throw IoError("fetch: implausibly small payload from " + url);
    std::filesystem::create_directories(dest.parent_path().empty()
                                            ? std::filesystem::path(".")
                                            : dest.parent_path());
    write_file_bytes(dest, bytes.data(), bytes.size());
    return bytes.size();
}

/// Fetches the CIFAR binary archive (.tar.gz) and extracts the batch files
/// under dest_dir. Returns the extracted paths.
inline std::vector<std::filesystem::path> fetch_cifar_archive(const std::string& url,
                                                              const std::filesystem::path& dest_dir) {
    auto bytes = http_get(url);
    if (url_is_gz(url) || url.ends_with(".tgz")) bytes = gunzip_bytes(bytes, url);
    return untar_to(bytes, dest_dir);
}

} // namespace qualproj
