#include "ixn/serialize.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>

namespace ixn {

namespace {
using nlohmann::json;

// The on-disk floats are little-endian; all supported targets are too.
static_assert(std::endian::native == std::endian::little,
              "parameter archive assumes a little-endian host");
}  // namespace

void save_tensors(const std::string& prefix, const std::vector<NamedTensor>& tensors) {
    json manifest = json::object();
    std::int64_t offset = 0;
    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot write '" + prefix + ".bin'");
    for (const auto& nt : tensors) {
        const auto& t = *nt.tensor;
        if (manifest.contains(nt.name))
            throw ContractError("duplicate parameter name '" + nt.name + "'");
        manifest[nt.name] = {{"shape", {t.shape().n, t.shape().c, t.shape().h, t.shape().w}},
                             {"offset", offset},
                             {"count", t.numel()}};
        bin.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
        offset += t.numel();
    }
    if (!bin) throw IoError("short write on '" + prefix + ".bin'");
    bin.close();

    std::ofstream mf(prefix + ".json");
    if (!mf) throw IoError("cannot write '" + prefix + ".json'");
    mf << json{{"format", "ixn-params-v1"}, {"dtype", "f32le"}, {"tensors", manifest}}.dump(2)
       << "\n";
}

void load_tensors(const std::string& prefix, const std::vector<NamedTensor>& tensors) {
    std::ifstream mf(prefix + ".json");
    if (!mf) throw IoError("cannot open '" + prefix + ".json'");
    json doc;
    try {
        mf >> doc;
    } catch (const json::exception& e) {
        throw FormatError("'" + prefix + ".json': " + e.what());
    }
    if (doc.value("format", "") != "ixn-params-v1")
        throw FormatError("'" + prefix + ".json': unknown archive format");
    const json& archive = doc.at("tensors");

    std::ifstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot open '" + prefix + ".bin'");

    for (const auto& nt : tensors) {
        if (!archive.contains(nt.name))
            throw FormatError("archive is missing parameter '" + nt.name + "'");
        const json& e = archive.at(nt.name);
        const auto sh = e.at("shape");
        const Shape want = nt.tensor->shape();
        const Shape got{sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>(),
                        sh.at(3).get<int>()};
        if (got != want)
            throw DimensionError("parameter '" + nt.name + "': archive shape " + got.str() +
                                 " does not match model shape " + want.str());
        bin.seekg(static_cast<std::streamoff>(e.at("offset").get<std::int64_t>() *
                                              static_cast<std::int64_t>(sizeof(float))));
        bin.read(reinterpret_cast<char*>(nt.tensor->data()),
                 static_cast<std::streamsize>(nt.tensor->numel() * sizeof(float)));
        if (!bin)
            throw FormatError("'" + prefix + ".bin': truncated while reading '" + nt.name + "'");
    }
}

std::vector<NamedTensor> as_named(const std::vector<Parameter<float>*>& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (auto* p : params) out.push_back({p->name, &p->tensor()});
    return out;
}

void save_parameters(const std::string& prefix,
                     const std::vector<Parameter<float>*>& params) {
    save_tensors(prefix, as_named(params));
}

void load_parameters(const std::string& prefix,
                     const std::vector<Parameter<float>*>& params) {
    load_tensors(prefix, as_named(params));
}

}  // namespace ixn
