#include "ixn/fetch.hpp"

#include <curl/curl.h>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "ixn/tensor.hpp"

namespace ixn {

const std::array<DatasetFile, 4>& fashion_mnist_files() {
    static const std::array<DatasetFile, 4> files = {{
        {"train-images-idx3-ubyte.gz",
         "3aede38d61863908ad78613f6a32ed271626dd12800ba2636569512369268a84"},
        {"train-labels-idx1-ubyte.gz",
         "a04f17134ac03560a47e3764e11b92fc97de4d1bfaf8ba1a3aa29af54cc90845"},
        {"t10k-images-idx3-ubyte.gz",
         "346e55b948d973a97e58d2351dde16a484bd415d4595297633bb08f03db6a073"},
        {"t10k-labels-idx1-ubyte.gz",
         "67da17c76eaffca5446c3361aaab5c3cd6d1c2608764d35dfb1850b086bf8dd5"},
    }};
    return files;
}

std::string sha256_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read '" + path + "' for checksum");

    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("sha256 initialization failed");
    }
    std::vector<char> buf(1 << 16);
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (f.gcount() > 0)
            EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(f.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

namespace {

std::size_t write_cb(char* data, std::size_t size, std::size_t nmemb, void* userp) {
    auto* f = static_cast<std::FILE*>(userp);
    return std::fwrite(data, size, nmemb, f);
}

}  // namespace

void download_file(const std::string& url, const std::string& dest_path) {
    const std::string tmp = dest_path + ".part";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw IoError("cannot write '" + tmp + "'");

    CURL* curl = curl_easy_init();
    if (!curl) {
        std::fclose(f);
        std::remove(tmp.c_str());
        throw IoError("curl initialization failed");
    }
    char errbuf[CURL_ERROR_SIZE] = {0};
    curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
    curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, write_cb);
    curl_easy_setopt(curl, CURLOPT_WRITEDATA, f);
    curl_easy_setopt(curl, CURLOPT_ERRORBUFFER, errbuf);
    curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 30L);
    const CURLcode rc = curl_easy_perform(curl);
    curl_easy_cleanup(curl);
    std::fclose(f);

    if (rc != CURLE_OK) {
        std::remove(tmp.c_str());
        throw IoError("download failed for '" + url + "': " +
                      (errbuf[0] ? errbuf : curl_easy_strerror(rc)));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, dest_path, ec);
    if (ec) throw IoError("cannot move '" + tmp + "' to '" + dest_path + "'");
}

void fetch_dataset(const std::string& mirror_url, const std::string& dest_dir) {
    std::error_code ec;
    std::filesystem::create_directories(dest_dir, ec);
    std::string base = mirror_url;
    if (!base.empty() && base.back() == '/') base.pop_back();

    for (const auto& file : fashion_mnist_files()) {
        const std::string dest = dest_dir + "/" + file.name;
        if (std::filesystem::exists(dest) && sha256_file(dest) == file.sha256) continue;
        download_file(base + "/" + file.name, dest);
        const std::string got = sha256_file(dest);
        if (got != file.sha256)
            throw FormatError(std::string("checksum mismatch for ") + file.name +
                              ": expected " + file.sha256 + ", got " + got);
    }
}

}  // namespace ixn
